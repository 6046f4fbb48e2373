"""Command-line entry point: ``g2flow suite <name>``, ``g2flow flow``, ``g2flow spectrum``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .fields import StructureField, d, l2_norm
from .g2 import OMEGA0, NotPositive
from .scenarios import flat_background, make_rng, trig_field
from .suites import SUITES, run_suite

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def build_init(cfg: RunConfig) -> StructureField:
    """Seeded initial structure for ``init.kind``; raises NotPositive for a non-positive draw."""
    grid = cfg.grid()
    bg = flat_background(grid)
    if cfg.init_kind == "flat":
        return bg
    if cfg.init_kind == "scaled":
        return flat_background(grid, cfg.init_scale)
    rng = make_rng(cfg.init_seed)
    if cfg.init_kind == "flat_plus_random":
        direction = trig_field(grid, 3, rng)
    else:
        direction = d(trig_field(grid, 2, rng))
    return StructureField(bg.omega + direction * cfg.init_eps)


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_flow(cfg: RunConfig, out_dir: str) -> tuple[int, dict]:
    from .deturck import fourier_lambda1
    from .fields import codiff_adjoint
    from .flow import FlowTrace, decay_fit, run
    from .g2diff import part

    os.makedirs(out_dir, exist_ok=True)
    fcfg = cfg.flow_config()
    csv_path = os.path.join(out_dir, "flow_trace.csv")
    json_path = os.path.join(out_dir, "flow_summary.json")
    timing_path = os.path.join(out_dir, "flow_timing.json")
    extra = {"run_config": cfg.as_dict()}
    try:
        init = build_init(cfg)
    except NotPositive as exc:
        trace = FlowTrace(fcfg, status="positivity_loss")
        extra["error"] = str(exc)
        trace.write(csv_path, json_path, timing_path, extra)
        return EXIT_FAIL, trace.summary() | extra
    trace = run(init, fcfg)
    bg = flat_background(cfg.grid())
    final = trace.final
    gauge = part(codiff_adjoint(final.omega, bg), bg, 7)
    extra["final_gauge_norm"] = float(l2_norm(gauge, bg))
    if fcfg.kind == "deturck" and bg.grid.active_axes:
        extra["lambda1"] = fourier_lambda1(bg)
    if len(trace.records) >= 15:
        col = "Qt_norm" if fcfg.kind == "deturck" else "Q_norm"
        rate, r2 = decay_fit(trace, column=col)
        extra["decay_rate"] = rate
        extra["decay_r2"] = r2
    trace.write(csv_path, json_path, timing_path, extra)
    code = EXIT_FAIL if trace.status in ("positivity_loss", "step_floor") else EXIT_OK
    return code, trace.summary() | extra


def run_spectrum(cfg: RunConfig, out_dir: str, rtol: float | None = None) -> tuple[int, dict]:
    from .deturck import KERNEL_RTOL, CapacityError, assemble_L, fourier_spectrum, spectrum

    os.makedirs(out_dir, exist_ok=True)
    rtol = KERNEL_RTOL if rtol is None else rtol
    bg = StructureField.constant(cfg.grid(), OMEGA0)
    if cfg.spectrum_method == "dense":
        try:
            rep = spectrum(assemble_L(bg), rtol)
        except CapacityError as exc:
            return EXIT_USAGE, {"error": f"{exc}; set spectrum.method = fourier for large grids"}
        ev = np.sort(-rep.eigenvalues)
        sym = rep.symmetry_residual
    else:
        ev = np.sort(-fourier_spectrum(bg))
        sym = 0.0
    cut = rtol * max(np.abs(ev).max(), 1e-300)
    above = ev[ev > cut]
    data = {
        "method": cfg.spectrum_method,
        "dimension": int(ev.size),
        "kernel_count": int(np.sum(np.abs(ev) < cut)),
        "lambda1": float(above[0]) if above.size else None,
        "lambda_max": float(ev[-1]),
        "symmetry_residual": sym,
        "run_config": cfg.as_dict(),
    }
    _write_json(os.path.join(out_dir, "spectrum.json"), data)
    with open(os.path.join(out_dir, "spectrum.csv"), "w") as fh:
        fh.write("index,eigenvalue\n")
        for i, v in enumerate(ev):
            fh.write(f"{i},{float(v)!r}\n")
    return EXIT_OK, data


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="overrides init.seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory (overrides out.path)")
    common.add_argument("--tol", type=float, help="suite residual tolerance, flow stop tolerance or kernel cut")
    p = argparse.ArgumentParser(prog="g2flow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("suite", parents=[common], help="run an invariant battery")
    s.add_argument("name", choices=SUITES)
    s.add_argument("--samples", type=int, help="number of seeded samples")
    sub.add_parser("flow", parents=[common], help="run a flow and write its trace")
    sub.add_parser("spectrum", parents=[common], help="spectrum of the linearized operator")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except (OSError, ConfigError) as exc:
        print(f"g2flow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            print("g2flow: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_USAGE
        cfg = replace(cfg, init_seed=args.seed)
    if args.out:
        cfg = replace(cfg, out_path=args.out)
    if args.tol is not None and not args.tol > 0:
        print("g2flow: --tol must be positive", file=sys.stderr)
        return EXIT_USAGE
    out = cfg.out_path

    if args.command == "suite":
        rep = run_suite(args.name, cfg, tol=args.tol, samples=args.samples)
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"suite_{args.name}.json"), "w") as fh:
            fh.write(rep.to_json())
        text = rep.table()
        with open(os.path.join(out, f"suite_{args.name}.txt"), "w") as fh:
            fh.write(text)
        print(text, end="")
        return EXIT_OK if rep.passed else EXIT_FAIL
    if args.command == "flow":
        if args.tol is not None:
            cfg = replace(cfg, flow_stop_grad_tol=args.tol)
        code, summary = run_flow(cfg, out)
    else:
        code, summary = run_spectrum(cfg, out, args.tol)
    print(json.dumps({k: v for k, v in summary.items() if k not in ("run_config", "config")}, indent=2, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
