"""Cache and main-memory timing models."""

from .cache import CacheConfig, CacheState
from .dcache import (HpdCache, LegacyCache, MemRequest, MemResponse, MshrFull, MshrTable,
                     make_dcache)
from .icache import ICache
from .mainmem import MainMemoryModel
from .prefetch import PrefetcherState, StridePrefetcher, prefetch_step

__all__ = [
    "CacheConfig", "CacheState", "HpdCache", "ICache", "LegacyCache", "MainMemoryModel",
    "MemRequest", "MemResponse", "MshrFull", "MshrTable", "PrefetcherState", "StridePrefetcher",
    "make_dcache", "prefetch_step",
]
