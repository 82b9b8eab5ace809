"""Sweeps over configs × programs and the versioned report they produce.

Report layout (``report_version`` 1)::

    {
      "report_version": 1,
      "baseline": "<first config label>",
      "configs": {label: {config key: value}},
      "cells": [{"config", "kernel", "status", "exit_code", "error", "stats"}],
      "comparisons": {label: {"per_kernel": {kernel: {"ipc_gain_pct", "bandwidth_gain_pct"}},
                              "geomean": {"ipc_gain_pct", "bandwidth_gain_pct"}}}
    }

Cells are sorted by (config, kernel). IPC and bandwidth are taken over the
ROI when the program marks one. A gain is ``(new - base) / base * 100``; the
geometric mean is over the per-kernel ratios ``new / base`` and is reported
as a percentage in the same way. Gains with a zero baseline are null.
"""

from __future__ import annotations

import json
import math
from dataclasses import replace

from ..engine import Deadlock, Divergence, Simulator
from ..isa.reference import StepLimitExceeded, Trap
from .config import config_echo

REPORT_VERSION = 1
FAILING = ("divergence", "deadlock", "step_limit")


def run_cell(cfg, image, cosim=False):
    """One simulation; returns a cell dict (without config/kernel labels)."""
    if cosim:
        cfg = replace(cfg, cosim_enabled=True)
    sim = Simulator(cfg, image)
    status, error, exit_code = "ok", None, None
    try:
        exit_code = sim.run().exit_code
    except Divergence as e:
        status, error = "divergence", str(e)
    except Deadlock as e:
        status, error = "deadlock", str(e)
    except StepLimitExceeded as e:
        status, error = "step_limit", str(e)
    except Trap as e:
        status, error = "trap", str(e)
    if status != "ok":
        sim.stats.cycles = sim.cycle
    return {"status": status, "exit_code": exit_code, "error": error, "stats": sim.stats.to_dict()}


def gain_pct(new, base):
    if not base:
        return None
    return (new - base) / base * 100.0


def geomean_gain_pct(pairs):
    ratios = [n / b for n, b in pairs if b and n > 0]
    if not ratios:
        return None
    return (math.exp(sum(math.log(r) for r in ratios) / len(ratios)) - 1.0) * 100.0


def _metrics(cell):
    s = cell["stats"]
    return s["roi_ipc"], s["bandwidth_bytes_per_cycle"]


def comparisons(cells, baseline):
    """Gain tables of every non-baseline config against ``baseline``."""
    by = {(c["config"], c["kernel"]): c for c in cells if c["status"] == "ok"}
    labels = sorted({c["config"] for c in cells} - {baseline})
    kernels = sorted({c["kernel"] for c in cells})
    out = {}
    for label in labels:
        per, ipcs, bws = {}, [], []
        for k in kernels:
            b, n = by.get((baseline, k)), by.get((label, k))
            if b is None or n is None:
                continue
            (bi, bb), (ni, nb) = _metrics(b), _metrics(n)
            per[k] = {"ipc_gain_pct": gain_pct(ni, bi), "bandwidth_gain_pct": gain_pct(nb, bb)}
            ipcs.append((ni, bi))
            bws.append((nb, bb))
        out[label] = {"per_kernel": per,
                      "geomean": {"ipc_gain_pct": geomean_gain_pct(ipcs),
                                  "bandwidth_gain_pct": geomean_gain_pct(bws)}}
    return out


def run_compare(images, configs, cosim=False):
    """Cartesian sweep. ``images`` and ``configs`` map labels to objects.

    The first config is the baseline. Returns ``(report, exit_code)``; the
    exit code is 1 when any cell diverged, deadlocked or hit the step limit.
    """
    if not images or not configs:
        raise ValueError("need at least one image and one config")
    cells = []
    for clabel, cfg in configs.items():
        for klabel, image in images.items():
            cell = run_cell(cfg, image, cosim)
            cells.append({"config": clabel, "kernel": klabel, **cell})
    return build_report(configs, cells)


def build_report(configs, cells):
    baseline = next(iter(configs))
    cells = sorted(cells, key=lambda c: (c["config"], c["kernel"]))
    report = {
        "report_version": REPORT_VERSION,
        "baseline": baseline,
        "configs": {label: config_echo(cfg) for label, cfg in sorted(configs.items())},
        "cells": cells,
        "comparisons": comparisons(cells, baseline) if len(configs) > 1 else {},
    }
    code = 1 if any(c["status"] in FAILING for c in cells) else 0
    return report, code


def to_json(report):
    return json.dumps(report, indent=2, sort_keys=True)


def _fmt(v, pattern):
    return "-" if v is None else format(v, pattern)


def format_table(report):
    """Human-readable summary of a report."""
    lines = [f"{'config':<16} {'kernel':<22} {'status':<10} {'cycles':>10} {'retired':>9} "
             f"{'ipc':>6} {'B/cyc':>7}"]
    for c in report["cells"]:
        s = c["stats"]
        lines.append(f"{c['config']:<16} {c['kernel']:<22} {c['status']:<10} {s['cycles']:>10} "
                     f"{s['retired']:>9} {s['roi_ipc']:>6.3f} {s['bandwidth_bytes_per_cycle']:>7.3f}")
    for label, cmp in report["comparisons"].items():
        lines.append("")
        lines.append(f"{label} vs {report['baseline']}")
        lines.append(f"  {'kernel':<22} {'ipc gain %':>11} {'bw gain %':>11}")
        for k, g in cmp["per_kernel"].items():
            lines.append(f"  {k:<22} {_fmt(g['ipc_gain_pct'], '11.1f')} {_fmt(g['bandwidth_gain_pct'], '11.1f')}")
        gm = cmp["geomean"]
        lines.append(f"  {'geomean':<22} {_fmt(gm['ipc_gain_pct'], '11.1f')} {_fmt(gm['bandwidth_gain_pct'], '11.1f')}")
    for c in report["cells"]:
        if c["error"]:
            lines.append(f"{c['config']}/{c['kernel']}: {c['error']}")
    return "\n".join(lines)
