"""Flat ``key = value`` configuration files.

Lines are ``key = value``; ``#`` starts a comment. An optional ``preset`` key
selects the starting point (default ``cva6s+``); every other key overrides one
field of it.
"""

from __future__ import annotations

from dataclasses import replace

from ..engine import PRESETS, SimConfig, preset


class ConfigError(ValueError):
    pass


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "on", "yes"):
        return True
    if t in ("0", "false", "off", "no"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ConfigError(f"{text!r} is not one of {', '.join(options)}")
        return text
    return parse


def _issue(name):
    return lambda cfg, v: replace(cfg, issue=replace(cfg.issue, **{name: v}))


def _lat(name):
    return lambda cfg, v: replace(cfg, issue=replace(cfg.issue, latencies={**cfg.issue.latencies, name: v}))


def _top(name):
    return lambda cfg, v: replace(cfg, **{name: v})


def _dc(name):
    return lambda cfg, v: replace(cfg, dcache=replace(cfg.dcache, **{name: v}))


def _ic(name):
    return lambda cfg, v: replace(cfg, icache=replace(cfg.icache, **{name: v}))


# key -> (parser, setter, getter)
KEYS = {
    "issue.width": (int, _issue("width"), lambda c: c.issue.width),
    "issue.renaming": (_bool, _issue("renaming_enabled"), lambda c: c.issue.renaming_enabled),
    "issue.alu_forwarding": (_bool, _issue("alu_alu_forwarding"), lambda c: c.issue.alu_alu_forwarding),
    "issue.fpu": (_bool, _issue("fpu_present"), lambda c: c.issue.fpu_present),
    "lsu.output_register": (_bool, _issue("lsu_output_register"), lambda c: c.issue.lsu_output_register),
    "lat.mul": (int, _lat("mul"), lambda c: c.issue.latencies["mul"]),
    "lat.div": (int, _lat("div"), lambda c: c.issue.latencies["div"]),
    "lat.fpu_add": (int, _lat("fpu_add"), lambda c: c.issue.latencies["fpu_add"]),
    "lat.fpu_div": (int, _lat("fpu_div"), lambda c: c.issue.latencies["fpu_div"]),
    "max_unresolved_branches": (int, _issue("max_unresolved_branches"),
                                lambda c: c.issue.max_unresolved_branches),
    "bp.kind": (_choice("bimodal", "two-level"), _top("bp_kind"), lambda c: c.bp_kind),
    "bp.entries": (int, _top("bp_entries"), lambda c: c.bp_entries),
    "bp.history_bits": (int, _top("bp_history_bits"), lambda c: c.bp_history_bits),
    "btb.entries": (int, _top("btb_entries"), lambda c: c.btb_entries),
    "dcache.kind": (_choice("legacy", "hpd"), _dc("kind"), lambda c: c.dcache.kind),
    "dcache.size": (int, _dc("size_bytes"), lambda c: c.dcache.size_bytes),
    "dcache.ways": (int, _dc("ways"), lambda c: c.dcache.ways),
    "dcache.policy": (_choice("write-back", "write-through"), _dc("policy"), lambda c: c.dcache.policy),
    "dcache.mshr": (int, _dc("mshr_depth"), lambda c: c.dcache.mshr_depth),
    "dcache.prefetch": (_bool, _dc("prefetch"), lambda c: c.dcache.prefetch),
    "icache.size": (int, _ic("size_bytes"), lambda c: c.icache.size_bytes),
    "icache.ways": (int, _ic("ways"), lambda c: c.icache.ways),
    "mem.latency": (int, _top("mem_latency"), lambda c: c.mem_latency),
    "mem.bytes_per_cycle": (int, _top("mem_bytes_per_cycle"), lambda c: c.mem_bytes_per_cycle),
    "max_cycles": (int, _top("max_cycles"), lambda c: c.max_cycles),
}


def parse_pairs(text):
    """``(key, value)`` pairs in file order; rejects malformed lines."""
    pairs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k != "preset" and k not in KEYS:
            raise ConfigError(f"line {n}: unknown key {k!r}")
        pairs.append((k, v))
    return pairs


def apply(cfg: SimConfig, overrides) -> SimConfig:
    """Apply ``{key: text}`` overrides to ``cfg``."""
    for k, v in overrides.items():
        parse, setter, _ = KEYS[k]
        try:
            cfg = setter(cfg, parse(v) if isinstance(v, str) else v)
        except ConfigError as e:
            raise ConfigError(f"{k}: {e}") from None
        except ValueError as e:
            raise ConfigError(f"{k}: {e}") from None
    return cfg


def load_config(text, base: str = "cva6s+", force_preset: str | None = None) -> SimConfig:
    """Config from file text; ``force_preset`` (a CLI flag) beats the file's ``preset`` key."""
    pairs = parse_pairs(text)
    name = base
    for k, v in pairs:
        if k == "preset":
            if v not in PRESETS:
                raise ConfigError(f"unknown preset {v!r}")
            name = v
    return apply(preset(force_preset or name), {k: v for k, v in pairs if k != "preset"})


def config_echo(cfg: SimConfig) -> dict:
    """Every config key with its effective value."""
    out = {"preset": cfg.preset}
    out.update({k: get(cfg) for k, (_, _, get) in KEYS.items()})
    return out


def dump_config(cfg: SimConfig) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n" for k, v in config_echo(cfg).items())
