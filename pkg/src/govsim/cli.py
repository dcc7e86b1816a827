"""Command-line entry point.

    govsim run CONFIG.json [--seed S] [--trials T] [--steps N] [--out DIR]
    govsim fit SWEEP.csv [--gamma NAME] [--out DIR]
    govsim replicate {fig1,fig3,bar-dynamics,population-size} [...]

Exit status: 0 on success, 1 on a runtime failure (one diagnostic line on
stderr), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from govsim import harness
from govsim.el_farol import BarSim
from govsim.errors import GovsimError
from govsim.harness import ExperimentConfig, OUTPUT_ENV, fmt
from govsim.norm_learning import AdaptationMode, NormLearningSim
from govsim.topology import build_grid, partition_grid

FIGURES = ("fig1", "fig3", "bar-dynamics", "population-size")


def _overrides(args) -> dict:
    return {"seed": args.seed, "trials": args.trials, "steps": args.steps}


def _out_dir(args, default: str) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV) or default)


def _report(result: harness.SweepResult, out: Path) -> None:
    print(f"wrote {out}")
    if result.pog is not None:
        f, p = result.fit, result.pog
        print(f"fit a={fmt(f.a)} b={fmt(f.b)} c={fmt(f.c)} R2={fmt(f.r_squared)}")
        print(f"optimal_n={p.optimal_n} optimal_x={fmt(p.optimal_x)} optimal_pog={fmt(p.optimal_pog)}")


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config).with_overrides(**_overrides(args))
    out = _out_dir(args, cfg.output_dir)
    result = harness.run_experiment(cfg, output_dir=out)
    _report(result, out)
    return 0


def cmd_fit(args) -> int:
    out = Path(args.out) if args.out else Path(args.sweep).parent
    fit, res = harness.fit_sweep(args.sweep, args.gamma, out)
    print(f"a={fmt(fit.a)} b={fmt(fit.b)} c={fmt(fit.c)} residual={fmt(fit.residual)}")
    print(f"optimal_n={res.optimal_n} optimal_x={fmt(res.optimal_x)} optimal_pog={fmt(res.optimal_pog)}")
    return 0


# --- figure presets -----------------------------------------------------------


def replicate_fig1(args) -> int:
    """10x10 grid, 4x4 clusters: coordination under all six learning modes."""
    steps = args.steps or 1000
    trials = args.trials or 200
    seed = args.seed or 0
    out = _out_dir(args, "results/fig1")
    part = partition_grid(build_grid(10), 4)
    rows = ["mode,final_coordination,final_alpha,final_epsilon"]
    files = {}
    for mode in AdaptationMode:
        cfg = ExperimentConfig(grid_side=10, subgroup_sizes=[4], mode=mode.value, steps=steps,
                               trials=trials, seed=seed)
        seeds = harness.trial_seeds(seed, cfg.case, 4, trials)
        s = NormLearningSim(part, cfg.norm_params(), seeds).run(steps)
        rows.append(",".join([mode.value, fmt(s.coordination[:, -100:].mean()),
                              fmt(s.mean_alpha[:, -1].mean()), fmt(s.mean_epsilon[:, -1].mean())]))
        lines = [harness.SERIES_HEADER]
        for t in range(steps):
            for name, arr in (("coordination", s.coordination), ("alpha", s.mean_alpha),
                              ("epsilon", s.mean_epsilon)):
                lines.append(f"{t + 1},{name},{fmt(arr[:, t].mean())},{fmt(arr[:, t].std())}")
        files[f"series_{mode.value}.csv"] = "\n".join(lines) + "\n"
        print(rows[-1])
    files["fig1.csv"] = "\n".join(rows) + "\n"
    harness._write_all(out, files)
    print(f"wrote {out}")
    return 0


def replicate_fig3(args) -> int:
    cfg = ExperimentConfig(case="norm-learning", grid_side=30, trials=200).with_overrides(
        **_overrides(args))
    out = _out_dir(args, "results/fig3")
    result = harness.run_experiment(cfg, output_dir=out)
    _report(result, out)
    return 0


def replicate_bar_dynamics(args) -> int:
    """Attendance of the benchmark population versus n = 10 and n = 30."""
    cfg = ExperimentConfig(case="el-farol", grid_side=30, trials=100).with_overrides(
        **_overrides(args))
    out = _out_dir(args, "results/bar-dynamics")
    bar = cfg.bar_config()
    topo = build_grid(30)
    rows = ["setting,overcrowded_last100,mean_reward_last100,mean_attendance_last100"]
    files = {}
    for label, n in (("benchmark", 0), ("n10", 10), ("n30", 30)):
        part = None if n == 0 else partition_grid(topo, n)
        seeds = harness.trial_seeds(cfg.seed, cfg.case, n, cfg.trials)
        s = BarSim(part, bar, seeds).run(cfg.steps)
        rows.append(",".join([label, fmt(s.overcrowded(bar.threshold).mean()),
                              fmt(s.final_reward().mean()),
                              fmt(s.attendance[:, -100:].mean())]))
        lines = ["step,attendance_mean,attendance_stddev"]
        for t in range(cfg.steps):
            lines.append(f"{t + 1},{fmt(s.attendance[:, t].mean())},{fmt(s.attendance[:, t].std())}")
        files[f"attendance_{label}.csv"] = "\n".join(lines) + "\n"
        print(rows[-1])
    files["bar_dynamics.csv"] = "\n".join(rows) + "\n"
    harness._write_all(out, files)
    print(f"wrote {out}")
    return 0


def replicate_population_size(args) -> int:
    out = _out_dir(args, "results/population-size")
    rows = ["R,optimal_pog,optimal_n,optimal_x,a,b,c,r_squared"]
    for side in (10, 20, 30):
        cfg = ExperimentConfig(case="el-farol", grid_side=side, trials=100,
                               include_benchmark=False).with_overrides(**_overrides(args))
        result = harness.run_experiment(cfg, output_dir=out / f"R{side}")
        if result.pog is None:
            raise GovsimError(f"R={side}: no optimal PoG ({'; '.join(result.notes)})")
        f, p = result.fit, result.pog
        rows.append(",".join([str(side), fmt(p.optimal_pog), str(p.optimal_n), fmt(p.optimal_x),
                              fmt(f.a), fmt(f.b), fmt(f.c), fmt(f.r_squared)]))
        print(rows[-1])
    harness._write_all(out, {"population_size.csv": "\n".join(rows) + "\n"})
    print(f"wrote {out}")
    return 0


REPLICATORS = {
    "fig1": replicate_fig1,
    "fig3": replicate_fig3,
    "bar-dynamics": replicate_bar_dynamics,
    "population-size": replicate_population_size,
}


def cmd_replicate(args) -> int:
    return REPLICATORS[args.figure](args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="govsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log sweep progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--trials", type=int, help="independent runs per subgroup size")
        p.add_argument("--steps", type=int, help="steps (nights) per run")
        p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or config)")

    p = sub.add_parser("run", help="run a full sweep from a JSON config")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="fit a sweep.csv and compute the optimal PoG")
    p.add_argument("sweep")
    p.add_argument("--gamma", default="euclidean")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("replicate", help="run a preconfigured figure reproduction")
    p.add_argument("figure", choices=FIGURES)
    common(p)
    p.set_defaults(func=cmd_replicate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return args.func(args)
    except (GovsimError, ValueError, OSError) as exc:
        print(f"govsim: error: {exc}".splitlines()[0], file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
