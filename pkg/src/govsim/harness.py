"""Experiment configuration, subgroup-size sweeps and result files.

Trial seeds come from :class:`numpy.random.SeedSequence` with the master
seed as entropy and ``(case code, n, trial index)`` as spawn key, so a
trial's stream depends only on those four values.  Adding trials or
changing the batch size never perturbs existing trials.  The benchmark
population of the bar case uses ``n = 0``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from govsim import el_farol, governance, topology
from govsim.el_farol import BarConfig, BarSeries, BarSim
from govsim.errors import GovsimError, InsufficientDataError, InvalidParameterError
from govsim.governance import FittedRelationship, GovernanceSample, PoGResult
from govsim.norm_learning import (
    AdaptationMode,
    CoordinationGamePayoff,
    NormLearningSim,
    NormParams,
    NormSeries,
    RateVariant,
)

log = logging.getLogger(__name__)

CASES = ("norm-learning", "el-farol")
CASE_CODES = {"norm-learning": 1, "el-farol": 2}
OUTPUT_ENV = "GOVSIM_OUTPUT_DIR"
BATCH = 200

# PoM is non-decreasing in n on these sets (the single remainder subgroup
# makes it non-monotone on arbitrary sets; see topology.partition_grid).
DEFAULT_SWEEPS = {
    10: [1, 2, 3, 4, 6, 7, 8, 9, 10],
    20: [1, 2, 4, 5, 6, 7, 11, 13, 15, 17, 20],
    30: [1, 2, 3, 5, 6, 7, 9, 15, 20, 25, 30],
}


def monotone_sweep(side: int) -> list[int]:
    """Longest run of subgroup sizes 1..R along which PoM never decreases."""
    topo = topology.build_grid(side)
    if side == 1:
        return [1]
    full = topology.partition_grid(topo, side)
    cost = [topology.pom(topology.partition_grid(topo, n), full) for n in range(1, side + 1)]
    length, prev = [1] * side, [-1] * side
    for i in range(side):
        for j in range(i):
            if cost[j] <= cost[i] and length[j] + 1 > length[i]:
                length[i], prev[i] = length[j] + 1, j
    i, out = side - 1, []
    while i >= 0:
        out.append(i + 1)
        i = prev[i]
    return out[::-1]


def default_sweep(side: int) -> list[int]:
    return list(DEFAULT_SWEEPS.get(side) or monotone_sweep(side))


@dataclass
class ExperimentConfig:
    case: str = "norm-learning"
    grid_side: int = 30
    subgroup_sizes: list[int] | None = None
    steps: int = 1000
    trials: int = 1000
    seed: int = 0
    window: int = 100
    gamma: str = "euclidean"
    output_dir: str = "results"
    # norm learning
    num_actions: int = 4
    mode: str = "hl-alpha"
    variant: str = "as-printed"
    alpha0: float = 0.1
    epsilon0: float = 0.01
    beta: float = 0.1
    lam: float = 0.1
    match_reward: float = 1.0
    mismatch_penalty: float = -1.0
    # el farol
    threshold: int | None = None
    mu: float = 0.1
    governor_actions: int = 50
    epsilon_g: float = 0.01
    alpha_g: float = 0.1
    include_benchmark: bool = True

    def __post_init__(self):
        if self.subgroup_sizes is None:
            self.subgroup_sizes = default_sweep(self.grid_side)
        self.validate()

    @property
    def sizes(self) -> list[int]:
        return sorted(set(self.subgroup_sizes))

    @property
    def bar_threshold(self) -> int:
        if self.threshold is not None:
            return self.threshold
        return int(round(0.6 * self.grid_side ** 2))

    def validate(self) -> None:
        if self.case not in CASES:
            raise InvalidParameterError(f"case must be one of {CASES}, got {self.case!r}")
        if self.grid_side < 1:
            raise InvalidParameterError("grid_side must be positive")
        if self.trials < 1 or self.steps < 1:
            raise InvalidParameterError("trials and steps must be positive")
        if not 1 <= self.window:
            raise InvalidParameterError("window must be positive")
        if not self.subgroup_sizes:
            raise InvalidParameterError("empty subgroup sweep")
        bad = [n for n in self.subgroup_sizes if not 1 <= n <= self.grid_side]
        if bad:
            raise InvalidParameterError(f"subgroup sizes {bad} outside [1, {self.grid_side}]")
        for name in ("alpha0", "epsilon0", "lam", "mu", "epsilon_g", "alpha_g"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1]")
        if self.beta <= 0:
            raise InvalidParameterError("beta must be positive")
        AdaptationMode(self.mode)
        RateVariant(self.variant)
        governance.get_gamma(self.gamma)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> ExperimentConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise GovsimError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise GovsimError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def norm_params(self) -> NormParams:
        return NormParams(
            num_actions=self.num_actions,
            mode=AdaptationMode(self.mode),
            variant=RateVariant(self.variant),
            alpha0=self.alpha0,
            epsilon0=self.epsilon0,
            beta=self.beta,
            lam=self.lam,
            payoff=CoordinationGamePayoff(self.match_reward, self.mismatch_penalty),
        )

    def bar_config(self) -> BarConfig:
        return BarConfig(
            population=self.grid_side ** 2,
            threshold=self.bar_threshold,
            mu=self.mu,
            num_actions=self.governor_actions,
            epsilon_g=self.epsilon_g,
            alpha_g=self.alpha_g,
            beta=self.beta,
            horizon=self.steps,
        )


def trial_seeds(master: int, case: str, n: int, trials: int | range) -> list[np.random.SeedSequence]:
    idx = range(trials) if isinstance(trials, int) else trials
    code = CASE_CODES[case]
    return [np.random.SeedSequence(master, spawn_key=(code, n, i)) for i in idx]


@dataclass
class RunRecord:
    """One trial's trajectories and its final-window PoA contribution."""

    seed: np.random.SeedSequence
    series: dict[str, np.ndarray]
    final_metric: float


@dataclass
class SweepCell:
    n: int
    trials: int
    final_metric: np.ndarray          # per trial: coordination ratio or mean reward
    series_mean: dict[str, np.ndarray]
    series_std: dict[str, np.ndarray]
    raw_cost: float
    overcrowded: np.ndarray | None = None
    runs: list[RunRecord] | None = None

    @property
    def performance(self) -> float:
        return float(self.final_metric.mean())


@dataclass
class SweepResult:
    config: ExperimentConfig
    cells: list[SweepCell]
    samples: list[GovernanceSample]
    benchmark: SweepCell | None = None
    fit: FittedRelationship | None = None
    pog: PoGResult | None = None
    notes: list[str] = field(default_factory=list)


def _series_stats(series: dict[str, np.ndarray]):
    mean = {k: v.mean(axis=0) for k, v in series.items()}
    std = {k: v.std(axis=0) for k, v in series.items()}
    return mean, std


def _run_norm_cell(cfg: ExperimentConfig, part, n: int, keep_runs: bool) -> SweepCell:
    params = cfg.norm_params()
    seeds = trial_seeds(cfg.seed, cfg.case, n, cfg.trials)
    chunks = []
    for start in range(0, cfg.trials, BATCH):
        sim = NormLearningSim(part, params, seeds[start:start + BATCH])
        chunks.append(sim.run(cfg.steps))
    s = NormSeries(*(np.concatenate([getattr(c, f.name) for c in chunks])
                     for f in fields(NormSeries)))
    series = {"coordination": s.coordination, "alpha": s.mean_alpha, "epsilon": s.mean_epsilon}
    final = s.coordination[:, -cfg.window:].mean(axis=1)
    mean, std = _series_stats(series)
    runs = None
    if keep_runs:
        runs = [RunRecord(seeds[i], {k: v[i] for k, v in series.items()}, float(1.0 - final[i]))
                for i in range(cfg.trials)]
    return SweepCell(n, cfg.trials, final, mean, std, topology.communication_cost(part), runs=runs)


def _run_bar_cell(cfg: ExperimentConfig, part, n: int, keep_runs: bool) -> SweepCell:
    bar = cfg.bar_config()
    seeds = trial_seeds(cfg.seed, cfg.case, n, cfg.trials)
    chunks = []
    batch = BATCH if part is None or part.num_groups < 200 else 50
    for start in range(0, cfg.trials, batch):
        sim = BarSim(part, bar, seeds[start:start + batch], population=bar.population)
        chunks.append(sim.run(cfg.steps))
    s = BarSeries(*(np.concatenate([getattr(c, f.name) for c in chunks])
                    for f in fields(BarSeries)))
    series = {"attendance": s.attendance.astype(float), "reward": s.mean_reward, "p": s.mean_p}
    final = s.final_reward(cfg.window)
    mean, std = _series_stats(series)
    runs = None
    if keep_runs:
        runs = [RunRecord(seeds[i], {k: v[i] for k, v in series.items()}, float(final[i]))
                for i in range(cfg.trials)]
    cost = 0.0 if part is None else topology.communication_cost(part)
    return SweepCell(n, cfg.trials, final, mean, std, cost,
                     overcrowded=s.overcrowded(bar.threshold, cfg.window), runs=runs)


def _fit_and_optimize(result: SweepResult) -> None:
    samples = result.samples
    if len({s.n for s in samples}) < 4 or len(samples) < 4:
        result.notes.append("fewer than 4 subgroup sizes; relationship not fitted")
        return
    try:
        result.fit = governance.fit_relationship(samples)
    except InsufficientDataError as exc:
        result.notes.append(str(exc))
        return
    result.pog = governance.optimal_pog(result.fit, result.config.gamma, samples)


def run_experiment(cfg: ExperimentConfig, write: bool = True, keep_runs: bool = False,
                   output_dir: str | os.PathLike | None = None) -> SweepResult:
    """Sweep the configured subgroup sizes, then fit and optimise PoG."""
    cfg.validate()
    topo = topology.build_grid(cfg.grid_side)
    full = topology.partition_grid(topo, cfg.grid_side)
    runner = _run_norm_cell if cfg.case == "norm-learning" else _run_bar_cell

    cells = []
    for n in cfg.sizes:
        log.info("case=%s R=%d n=%d trials=%d", cfg.case, cfg.grid_side, n, cfg.trials)
        cells.append(runner(cfg, topology.partition_grid(topo, n), n, keep_runs))

    benchmark = None
    if cfg.case == "el-farol" and cfg.include_benchmark:
        benchmark = _run_bar_cell(cfg, None, 0, keep_runs)

    if cfg.case == "norm-learning":
        full_cost = topology.communication_cost(full)
        samples = [
            GovernanceSample(
                c.n,
                governance.poa_general(1.0, c.performance),
                c.raw_cost / full_cost if full_cost > 0 else 0.0,
                c.performance,
                c.raw_cost,
            )
            for c in cells
        ]
    else:
        rewards = {c.n: c.performance for c in cells}
        costs = {c.n: c.raw_cost for c in cells}
        if len(cells) >= 2:
            poa = el_farol.mars_poa(rewards)
            pom = el_farol.mars_pom(costs)
        else:
            poa = {c.n: 0.0 for c in cells}
            pom = {c.n: 0.0 for c in cells}
        samples = [GovernanceSample(c.n, poa[c.n], pom[c.n], c.performance, c.raw_cost)
                   for c in cells]

    result = SweepResult(cfg, cells, samples, benchmark)
    _fit_and_optimize(result)
    if write:
        emit_csv(result, output_dir or os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    return result


# --- output files -----------------------------------------------------------

SWEEP_HEADER = "case,n,poa,pom,raw_performance,raw_cost,trials"
SERIES_HEADER = "step,metric,mean,stddev"


def fmt(x: float) -> str:
    return f"{x:.9g}"


def _sweep_text(result: SweepResult) -> str:
    lines = [SWEEP_HEADER]
    trials = {c.n: c.trials for c in result.cells}
    for s in result.samples:
        lines.append(",".join([
            result.config.case, str(s.n), fmt(s.poa), fmt(s.pom),
            fmt(s.raw_performance), fmt(s.raw_cost), str(trials.get(s.n, result.config.trials)),
        ]))
    return "\n".join(lines) + "\n"


def _series_text(cell: SweepCell) -> str:
    lines = [SERIES_HEADER]
    steps = len(next(iter(cell.series_mean.values())))
    for t in range(steps):
        for metric in cell.series_mean:
            lines.append(f"{t + 1},{metric},{fmt(cell.series_mean[metric][t])},"
                         f"{fmt(cell.series_std[metric][t])}")
    return "\n".join(lines) + "\n"


def pog_payload(fit: FittedRelationship, res: PoGResult) -> dict:
    return {
        "a": float(fmt(fit.a)),
        "b": float(fmt(fit.b)),
        "c": float(fmt(fit.c)),
        "residual": float(fmt(fit.residual)),
        "r_squared": float(fmt(fit.r_squared)),
        "gamma": res.gamma_name,
        "optimal_x": float(fmt(res.optimal_x)),
        "optimal_pog": float(fmt(res.optimal_pog)),
        "optimal_n": res.optimal_n,
    }


def _write_all(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file to a temporary name first, then rename them in."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
            with os.fdopen(fd, "w", newline="\n") as fh:
                fh.write(text)
            staged.append((tmp, out_dir / name))
    except OSError as exc:
        for tmp, _ in staged:
            Path(tmp).unlink(missing_ok=True)
        raise GovsimError(f"cannot write results to {out_dir}: {exc}") from exc
    for tmp, final in staged:
        os.replace(tmp, final)


def emit_csv(result: SweepResult, out_dir: str | os.PathLike) -> list[Path]:
    if not result.samples or not result.cells:
        raise GovsimError("nothing to write: empty sweep")
    out_dir = Path(out_dir)
    files = {"sweep.csv": _sweep_text(result)}
    for cell in result.cells:
        files[f"series_{cell.n}.csv"] = _series_text(cell)
    if result.benchmark is not None:
        files["series_benchmark.csv"] = _series_text(result.benchmark)
    if result.fit is not None and result.pog is not None:
        files["pog.json"] = json.dumps(pog_payload(result.fit, result.pog), indent=2) + "\n"
    try:
        _write_all(out_dir, files)
    except OSError as exc:
        raise GovsimError(f"cannot write results to {out_dir}: {exc}") from exc
    return [out_dir / name for name in files]


def read_sweep(path: str | os.PathLike) -> list[GovernanceSample]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != SWEEP_HEADER.split(","):
                raise GovsimError(f"{path}: unexpected header {reader.fieldnames}")
            return [
                GovernanceSample(int(row["n"]), float(row["poa"]), float(row["pom"]),
                                 float(row["raw_performance"]), float(row["raw_cost"]))
                for row in reader
            ]
    except FileNotFoundError:
        raise GovsimError(f"sweep file not found: {path}") from None


def fit_sweep(path: str | os.PathLike, gamma: str = "euclidean",
              out_dir: str | os.PathLike | None = None) -> tuple[FittedRelationship, PoGResult]:
    samples = read_sweep(path)
    fit = governance.fit_relationship(samples)
    res = governance.optimal_pog(fit, gamma, samples)
    target = Path(out_dir) if out_dir is not None else Path(path).parent
    _write_all(target, {"pog.json": json.dumps(pog_payload(fit, res), indent=2) + "\n"})
    return fit, res


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)

