"""Command-line interface.

Subcommands:

* ``allocate``: run one algorithm on one model, print the allocation and
  its bounds (CSV with ``--out``).
* ``simulate``: Monte Carlo MSE of an allocation (from an algorithm or
  given explicitly with ``--rates``/``--powers``).
* ``sweep``: run the configured sweep, write CSV, optionally render
  figures alongside it.
* ``selftest``: run the built-in consistency battery.

Exit codes: 0 success, 1 validation error, 2 internal failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .allocators import ALGORITHMS, run_allocator
from .bounds import Allocation, evaluate_bounds
from .chansim import CHANNEL_MODES, SimConfig, simulate
from .experiments import (ConfigError, bundled_config_path, db_to_linear,
                          load_config, rows_to_csv, run_sweep)
from .model import derive_stats


def _resolve_config(value: str) -> Path:
    path = Path(value)
    if path.exists():
        return path
    if "/" not in value and "\\" not in value:
        return bundled_config_path(value.removesuffix(".cfg"))
    raise ConfigError(f"config file not found: {value}")


def _apply_overrides(model, args):
    if getattr(args, "ptot_db", None) is not None:
        model = replace(model, p_tot=db_to_linear(args.ptot_db))
    if getattr(args, "btot", None) is not None:
        model = replace(model, b_tot=args.btot)
    return model


def _parse_csv_floats(text: str) -> np.ndarray:
    return np.asarray([float(tok) for tok in text.split(",")])


def _print_allocation(model, run):
    rep = run.report
    alloc = run.allocation
    print(f"algorithm:        {run.algorithm}")
    print(f"power budget:     {model.p_tot:.6g} W "
          f"({10 * np.log10(model.p_tot):.3g} dB), bit budget: {model.b_tot}")
    with np.errstate(divide="ignore"):
        p_db = 10.0 * np.log10(alloc.powers)
    for k in range(model.K):
        print(f"  sensor {k + 1}: rate {alloc.rates[k]:.0f} bits, "
              f"power {alloc.powers[k]:.6g} W ({p_db[k]:.3g} dB)")
    if run.b_opt is not None:
        print(f"effective budget: {run.b_opt} of {model.b_tot} bits")
    print(f"bounds: d1={rep.d1:.9g} d2_upb={rep.d2_upb:.9g} "
          f"d1_upb={rep.d1_upb:.9g} d2_uupb={rep.d2_uupb:.9g}")
    print(f"        d_a={rep.d_a:.9g} d_b={rep.d_b:.9g} "
          f"2*d_a={2 * rep.d_a:.9g} d0={rep.d0:.9g}")


def _allocation_csv(model, run) -> str:
    cols = ["algorithm"]
    cols += [f"L_{k + 1}" for k in range(model.K)]
    cols += [f"P_{k + 1}" for k in range(model.K)]
    cols += ["d1", "d2_upb", "d1_upb", "d2_uupb", "d_a", "d_b", "two_d_a", "d0",
             "b_opt"]
    rep = run.report
    vals = [run.algorithm]
    vals += [f"{v:.9g}" for v in run.allocation.rates]
    vals += [f"{v:.9g}" for v in run.allocation.powers]
    vals += [f"{v:.9g}" for v in (rep.d1, rep.d2_upb, rep.d1_upb, rep.d2_uupb,
                                  rep.d_a, rep.d_b, 2 * rep.d_a, rep.d0)]
    vals.append("" if run.b_opt is None else str(run.b_opt))
    return ",".join(cols) + "\n" + ",".join(vals) + "\n"


def cmd_allocate(args) -> int:
    loaded = load_config(_resolve_config(args.config))
    model = _apply_overrides(loaded.model, args)
    cfg = loaded.allocator
    if args.algorithm:
        cfg = replace(cfg, algorithm=args.algorithm)
    run = run_allocator(model, cfg)
    _print_allocation(model, run)
    if args.out:
        Path(args.out).write_text(_allocation_csv(model, run))
        print(f"wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    loaded = load_config(_resolve_config(args.config))
    model = _apply_overrides(loaded.model, args)
    sim_cfg = loaded.sim
    if args.trials is not None:
        sim_cfg = replace(sim_cfg, trials=args.trials)
    if args.seed is not None:
        sim_cfg = replace(sim_cfg, seed=args.seed)
    if args.channel_mode is not None:
        sim_cfg = replace(sim_cfg, channel_mode=args.channel_mode)
    if args.workers is not None:
        sim_cfg = replace(sim_cfg, workers=args.workers)

    if (args.rates is None) != (args.powers is None):
        raise ConfigError("--rates and --powers must be given together")
    if args.rates is not None:
        alloc = Allocation(_parse_csv_floats(args.rates),
                           _parse_csv_floats(args.powers))
        alloc.validate_budgets(model.b_tot, model.p_tot)
        rep = evaluate_bounds(derive_stats(model), alloc)
        d_a = rep.d_a
    else:
        cfg = loaded.allocator
        if args.algorithm:
            cfg = replace(cfg, algorithm=args.algorithm)
        run = run_allocator(model, cfg)
        alloc = run.allocation
        d_a = run.report.d_a
        _print_allocation(model, run)

    report = simulate(model, alloc, sim_cfg)
    print(f"trials:           {report.trials} (seed {report.seed}, "
          f"{sim_cfg.channel_mode})")
    print(f"simulated MSE:    {report.mse:.9g} +- {report.half_width:.3g} (95%)")
    print(f"bound check:      mse <= 2*d_a? "
          f"{report.mse:.6g} <= {2 * d_a:.6g} -> "
          f"{'yes' if report.mse <= 2 * d_a + 3 * report.half_width else 'NO'}")
    for k in range(model.K):
        print(f"  sensor {k + 1}: level-error second moment "
              f"{report.level_err_moments[k]:.6g}")
    if args.out:
        lines = ["metric,value",
                 f"mse,{report.mse:.9g}",
                 f"mse_half_width,{report.half_width:.9g}",
                 f"trials,{report.trials}",
                 f"seed,{report.seed}"]
        for k in range(model.K):
            lines.append(f"level_err_moment_{k + 1},"
                         f"{report.level_err_moments[k]:.9g}")
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    loaded = load_config(_resolve_config(args.config))
    model = _apply_overrides(loaded.model, args)
    spec = loaded.sweep
    if spec is None:
        raise ConfigError("sweep: config has no [sweep] section")
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.channel_mode is not None:
        spec = replace(spec, channel_mode=args.channel_mode)
    if args.algorithm:
        spec = replace(spec, algorithms=(args.algorithm,))

    rows = run_sweep(model, loaded.allocator, spec,
                     workers=args.workers, timings=args.timings)
    csv_text = rows_to_csv(rows, model.K, timings=args.timings)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text)
    print(f"wrote {out} ({len(rows)} rows)")

    failed = [r for r in rows if r["status"] != "ok"]
    if failed:
        print(f"warning: {len(failed)} row(s) failed")
    if args.plot:
        from .plotting import render_sweep_figures

        figures = render_sweep_figures(rows, model.K, spec.axis,
                                       args.figdir or out.parent,
                                       stem=out.stem)
        for path in figures:
            print(f"wrote {path}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(verbose=True) else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsnalloc",
        description="Power and quantization-rate allocation for distributed "
                    "estimation over constrained wireless links.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True,
                       help="config file path or bundled config name "
                            "(e.g. paper_k3)")
        p.add_argument("--algorithm", choices=ALGORITHMS, default=None)
        p.add_argument("--ptot-db", type=float, default=None,
                       help="override the total power budget (dB)")
        p.add_argument("--btot", type=int, default=None,
                       help="override the total bit budget")
        p.add_argument("--out", default=None, help="write CSV here")

    p_alloc = sub.add_parser("allocate", help="run one allocation algorithm")
    add_common(p_alloc)
    p_alloc.set_defaults(fn=cmd_allocate)

    p_sim = sub.add_parser("simulate", help="Monte Carlo MSE of an allocation")
    add_common(p_sim)
    p_sim.add_argument("--rates", default=None,
                       help="comma-separated integer rates (with --powers)")
    p_sim.add_argument("--powers", default=None,
                       help="comma-separated powers in watts (with --rates)")
    p_sim.add_argument("--trials", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--channel-mode", choices=CHANNEL_MODES, default=None)
    p_sim.add_argument("--workers", type=int, default=None)
    p_sim.set_defaults(fn=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run the configured sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--algorithm", choices=ALGORITHMS, default=None,
                         help="restrict the sweep to one algorithm")
    p_sweep.add_argument("--ptot-db", type=float, default=None,
                         help="override the fixed power budget (dB)")
    p_sweep.add_argument("--btot", type=int, default=None,
                         help="override the fixed bit budget")
    p_sweep.add_argument("--trials", type=int, default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--channel-mode", choices=CHANNEL_MODES, default=None)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--out", required=True, help="CSV output path")
    p_sweep.add_argument("--plot", action="store_true",
                         help="render figures next to the CSV")
    p_sweep.add_argument("--figdir", default=None,
                         help="directory for figures (default: CSV directory)")
    p_sweep.add_argument("--timings", action="store_true",
                         help="append a wall-time column (breaks byte-for-byte "
                              "reproducibility across runs)")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_self = sub.add_parser("selftest", help="run built-in consistency checks")
    p_self.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
