"""Loading bare-metal RV32 executables."""

from __future__ import annotations

from pathlib import Path

from elftools.common.exceptions import ELFError
from elftools.elf.elffile import ELFFile
from elftools.elf.relocation import RelocationSection

from ..program import ProgramImage, Segment


class BadElf(ValueError):
    pass


class UnsupportedReloc(ValueError):
    pass


def load_elf(path) -> ProgramImage:
    """Map every PT_LOAD segment (zero-filling ``.bss``) and resolve ``tohost``."""
    with open(path, "rb") as fh:
        try:
            elf = ELFFile(fh)
        except ELFError as e:
            raise BadElf(f"{path}: {e}") from None
        if elf.elfclass != 32:
            raise BadElf(f"{path}: ELF class {elf.elfclass}, expected 32")
        if not elf.little_endian:
            raise BadElf(f"{path}: big-endian ELF")
        if elf["e_machine"] != "EM_RISCV":
            raise BadElf(f"{path}: machine {elf['e_machine']}, expected EM_RISCV")
        if elf["e_type"] not in ("ET_EXEC", "ET_DYN"):
            raise UnsupportedReloc(f"{path}: {elf['e_type']} is not linked")
        for sec in elf.iter_sections():
            if isinstance(sec, RelocationSection) and sec.num_relocations() and sec["sh_flags"] & 2:
                raise UnsupportedReloc(f"{path}: dynamic relocations in {sec.name}")

        segments = []
        for seg in elf.iter_segments():
            if seg["p_type"] != "PT_LOAD" or seg["p_memsz"] == 0:
                continue
            data = seg.data() + bytes(seg["p_memsz"] - seg["p_filesz"])
            segments.append(Segment(seg["p_vaddr"], data))

        tohost = None
        symtab = elf.get_section_by_name(".symtab")
        if symtab is not None:
            syms = symtab.get_symbol_by_name("tohost")
            if syms:
                tohost = syms[0]["st_value"]
        entry = elf["e_entry"]
    try:
        return ProgramImage(segments, entry, tohost, str(path))
    except ValueError as e:
        raise BadElf(f"{path}: {e}") from None


def load_binary(path, base=0x8000_0000) -> ProgramImage:
    """A raw image copied to ``base`` and entered at its first byte."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data:
        raise BadElf(f"{path}: empty binary")
    if base % 2 or not 0 <= base < 1 << 32 or base + len(data) > 1 << 32:
        raise BadElf(f"{path}: bad load address {base:#x}")
    return ProgramImage([Segment(base, data)], base, None, Path(path).stem)
