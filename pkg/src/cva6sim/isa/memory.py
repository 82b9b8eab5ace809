from __future__ import annotations

PAGE_BITS = 12
PAGE_SIZE = 1 << PAGE_BITS
PAGE_MASK = PAGE_SIZE - 1


class SparseMemory:
    """Byte-addressable 32-bit address space backed by 4 KiB pages.

    Pages are allocated on first write; reads of untouched memory return zero.
    """

    def __init__(self):
        self.pages: dict[int, bytearray] = {}

    def copy(self):
        m = SparseMemory()
        m.pages = {k: bytearray(v) for k, v in self.pages.items()}
        return m

    def is_mapped(self, addr):
        return (addr & 0xFFFF_FFFF) >> PAGE_BITS in self.pages

    def _page(self, pn):
        p = self.pages.get(pn)
        if p is None:
            p = self.pages[pn] = bytearray(PAGE_SIZE)
        return p

    def read_bytes(self, addr, n):
        addr &= 0xFFFF_FFFF
        off = addr & PAGE_MASK
        if off + n <= PAGE_SIZE:
            p = self.pages.get(addr >> PAGE_BITS)
            return bytes(n) if p is None else bytes(p[off:off + n])
        out = bytearray()
        while n:
            chunk = min(n, PAGE_SIZE - (addr & PAGE_MASK))
            out += self.read_bytes(addr, chunk)
            addr = (addr + chunk) & 0xFFFF_FFFF
            n -= chunk
        return bytes(out)

    def write_bytes(self, addr, data):
        addr &= 0xFFFF_FFFF
        i = 0
        n = len(data)
        while i < n:
            off = addr & PAGE_MASK
            chunk = min(n - i, PAGE_SIZE - off)
            self._page(addr >> PAGE_BITS)[off:off + chunk] = data[i:i + chunk]
            addr = (addr + chunk) & 0xFFFF_FFFF
            i += chunk

    def read(self, addr, size):
        return int.from_bytes(self.read_bytes(addr, size), "little")

    def write(self, addr, size, value):
        self.write_bytes(addr, (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little"))

    def load_image(self, segments):
        for addr, data in segments:
            self.write_bytes(addr, data)

    def nonzero_pages(self):
        """Pages holding any nonzero byte, keyed by page number (for image diffs)."""
        return {k: bytes(v) for k, v in self.pages.items() if any(v)}

    def same_contents(self, other):
        return self.nonzero_pages() == other.nonzero_pages()

    def first_difference(self, other):
        a, b = self.nonzero_pages(), other.nonzero_pages()
        for pn in sorted(set(a) | set(b)):
            pa, pb = a.get(pn, bytes(PAGE_SIZE)), b.get(pn, bytes(PAGE_SIZE))
            if pa != pb:
                for i in range(PAGE_SIZE):
                    if pa[i] != pb[i]:
                        return (pn << PAGE_BITS) | i, pa[i], pb[i]
        return None
