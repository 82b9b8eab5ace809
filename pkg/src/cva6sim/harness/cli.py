"""``sim`` command line: single runs and A/B comparisons.

Exit codes: 0 clean end, 1 the program reported a nonzero exit value,
2 usage or load error, 3 trap, 4 cosim divergence, 5 deadlock or step limit.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..engine import PRESETS, Deadlock, Divergence, Simulator, preset
from ..isa.reference import StepLimitExceeded, Trap
from .config import ConfigError, apply, config_echo, load_config
from .elf import BadElf, UnsupportedReloc, load_binary, load_elf
from .kernels import InvalidParams, KernelParams, generate_kernel
from .report import REPORT_VERSION, format_table, run_compare, to_json

EXIT_OK, EXIT_PROGRAM, EXIT_USAGE, EXIT_TRAP, EXIT_DIVERGENCE, EXIT_HANG = 0, 1, 2, 3, 4, 5


def _overrides(args):
    o = {}
    if args.dcache:
        o["dcache.kind"] = args.dcache
    if args.bp:
        o["bp.kind"] = args.bp
    if getattr(args, "max_cycles", None):
        o["max_cycles"] = str(args.max_cycles)
    return o


def _kernel_params(args):
    return KernelParams(working_set_bytes=args.ws, iterations=args.iters, seed=args.seed)


def _build_config(args):
    if args.config:
        cfg = load_config(Path(args.config).read_text(), force_preset=args.preset)
    else:
        cfg = preset(args.preset or "cva6s+")
    return apply(cfg, _overrides(args))


def cmd_run(args):
    try:
        cfg = _build_config(args)
        if args.elf:
            image = load_elf(args.elf)
        elif args.bin:
            image = load_binary(args.bin, args.load_addr)
        else:
            image = generate_kernel(args.kernel, _kernel_params(args))
    except (ConfigError, BadElf, UnsupportedReloc, InvalidParams, OSError) as e:
        print(f"sim: {e}", file=sys.stderr)
        return EXIT_USAGE
    cfg = replace(cfg, cosim_enabled=args.cosim, trace_enabled=bool(args.trace))
    sim = Simulator(cfg, image)
    code, status, error = EXIT_OK, "ok", None
    try:
        res = sim.run()
        if res.exit_code:
            code = EXIT_PROGRAM
    except Trap as e:
        code, status, error = EXIT_TRAP, "trap", str(e)
    except Divergence as e:
        code, status, error = EXIT_DIVERGENCE, "divergence", str(e)
    except (Deadlock, StepLimitExceeded) as e:
        code, status, error = EXIT_HANG, "deadlock" if isinstance(e, Deadlock) else "step_limit", str(e)
    st = sim.stats
    if status != "ok":
        st.cycles = sim.cycle
    if args.trace:
        Path(args.trace).write_text("".join(line + "\n" for line in sim.trace))
    doc = {"report_version": REPORT_VERSION, "program": image.name, "status": status,
           "exit_code": sim.exit_code, "error": error, "config": config_echo(cfg), "stats": st.to_dict()}
    if args.stats:
        Path(args.stats).write_text(json.dumps(doc, indent=2, sort_keys=True))
    print(f"{image.name}: {status}, exit {sim.exit_code}, {st.cycles} cycles, {st.retired} retired, "
          f"ipc {st.roi_ipc:.3f}, bandwidth {st.bandwidth_bytes_per_cycle:.3f} B/cycle")
    if error:
        print(f"sim: {error}", file=sys.stderr)
    return code


def parse_config_label(label, base_overrides):
    """``preset[/dcache[+pf]]``, e.g. ``cva6s+/hpd+pf``."""
    name, _, cache = label.partition("/")
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    cfg = apply(preset(name), base_overrides)
    if cache:
        kind, _, extra = cache.partition("+")
        if extra not in ("", "pf"):
            raise ConfigError(f"bad cache suffix in {label!r}")
        cfg = apply(cfg, {"dcache.kind": kind, "dcache.prefetch": "true" if extra else "false"})
    return cfg


def cmd_compare(args):
    try:
        o = _overrides(args)
        configs = {lab: parse_config_label(lab, o) for lab in args.presets.split(",") if lab}
        images = {k: generate_kernel(k, _kernel_params(args)) for k in args.kernels.split(",") if k}
    except (ConfigError, InvalidParams) as e:
        print(f"sim: {e}", file=sys.stderr)
        return EXIT_USAGE
    if not configs or not images:
        print("sim: need at least one preset and one kernel", file=sys.stderr)
        return EXIT_USAGE
    report, code = run_compare(images, configs, cosim=args.cosim)
    print(format_table(report))
    if args.stats:
        Path(args.stats).write_text(to_json(report))
    return EXIT_DIVERGENCE if code else EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="sim", description="Cycle-level RV32 core timing model.")
    sub = ap.add_subparsers(dest="command", required=True)

    def kernel_args(p):
        p.add_argument("--ws", type=int, default=65536, help="working set in bytes")
        p.add_argument("--iters", type=int, default=1000)
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--dcache", choices=("legacy", "hpd"))
        p.add_argument("--bp", choices=("bimodal", "two-level"))
        p.add_argument("--cosim", action="store_true", help="lock-step check against the reference")

    r = sub.add_parser("run", help="simulate one program")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--elf")
    src.add_argument("--bin", help="flat binary, entered at --load-addr")
    src.add_argument("--kernel")
    r.add_argument("--load-addr", type=lambda t: int(t, 0), default=0x8000_0000)
    r.add_argument("--config", help="flat key = value file; flags override it")
    r.add_argument("--preset", choices=PRESETS)
    kernel_args(r)
    r.add_argument("--max-cycles", type=int)
    r.add_argument("--trace")
    r.add_argument("--stats")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="sweep presets x kernels")
    c.add_argument("--presets", required=True, help="comma list of preset[/legacy|/hpd[+pf]]")
    c.add_argument("--kernels", required=True)
    kernel_args(c)
    c.add_argument("--stats")
    c.set_defaults(func=cmd_compare)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
