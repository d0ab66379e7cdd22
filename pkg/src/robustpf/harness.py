"""Repeated-run experiments on the benchmark series.

Seeds are derived as ``make_rng(master_seed, run, stream)`` where stream 0
generates the trajectory and streams 1, 2, 3 drive the generic PF, the
single t(3) PF and the robust PF. A stream depends only on its key, so
results do not change with the algorithm selection, the execution order
or the number of worker threads. Every algorithm in a run sees the same
trajectory.
"""
from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dist import NoiseModel, make_rng
from .model import CASES, BenchmarkConfig, Trajectory, make_benchmark_ssm, simulate_trajectory
from .pf import ParticleFilter, ResamplingScheme
from .rpf import RobustParticleFilter

ALGORITHMS = ("GenericPF", "SingleT3PF", "RPF")
_STREAM = {"trajectory": 0, "GenericPF": 1, "SingleT3PF": 2, "RPF": 3}


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    n_particles: int = 200
    n_runs: int = 30
    resampling: str = "residual"
    alpha: float = 0.9
    alpha_grid: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    algorithms: tuple = ALGORITHMS
    dofs: tuple = (50.0, 3.0)
    master_seed: int = 0
    redraw_trajectory_per_run: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "dofs", tuple(float(v) for v in self.dofs))
        object.__setattr__(self, "resampling", ResamplingScheme(self.resampling).value)
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.alpha_grid or any(not 0.0 < a < 1.0 for a in self.alpha_grid):
            raise ValueError("alpha_grid must be a non-empty list of values in (0, 1)")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ValueError(f"algorithms must be a non-empty subset of {ALGORITHMS}, got {self.algorithms}")
        if any(v <= 0 for v in self.dofs):
            raise ValueError("dofs must be positive")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")

    def model_bank(self) -> list:
        var = self.benchmark.meas_variance
        return [NoiseModel.gaussian(var, label="gaussian")] + [
            NoiseModel.student_t(var, v, label=f"t{v:g}") for v in self.dofs
        ]


@dataclass
class RunRecord:
    algorithm: str
    case: str
    run: int
    truth: np.ndarray
    observations: np.ndarray
    estimates: np.ndarray
    degenerate: np.ndarray
    mse: float
    seconds: float
    trajectory_hash: str
    model_probs: Optional[np.ndarray] = None


@dataclass
class AlgorithmStats:
    mse_mean: float
    mse_var: float
    seconds: float


@dataclass
class ExperimentSummary:
    case: str
    config: ExperimentConfig
    records: list
    stats: dict
    model_labels: list
    mean_model_probs: Optional[np.ndarray] = None


def trajectory_hash(traj: Trajectory) -> str:
    h = hashlib.sha256()
    for a in (traj.states, traj.observations, traj.outlier_mask.astype(np.uint8)):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def mse(estimates, truth) -> float:
    estimates = np.asarray(estimates, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if estimates.shape != truth.shape:
        raise ValueError(f"length mismatch: {estimates.shape[0]} estimates vs {truth.shape[0]} states")
    return float(np.mean((estimates - truth) ** 2))


def make_filter(algorithm: str, cfg: ExperimentConfig, rng, alpha=None):
    ssm = make_benchmark_ssm(cfg.benchmark)
    var = cfg.benchmark.meas_variance
    common = dict(n_particles=cfg.n_particles, resampling=cfg.resampling, random_state=rng)
    if algorithm == "GenericPF":
        return ParticleFilter(ssm, NoiseModel.gaussian(var), **common)
    if algorithm == "SingleT3PF":
        return ParticleFilter(ssm, NoiseModel.student_t(var, 3.0, label="t3"), **common)
    if algorithm == "RPF":
        return RobustParticleFilter(ssm, cfg.model_bank(), alpha=cfg.alpha if alpha is None else alpha, **common)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def run_filter(algorithm: str, traj: Trajectory, cfg: ExperimentConfig, rng, *, case="I", run=0,
               alpha=None) -> RunRecord:
    if len(traj) != cfg.benchmark.horizon:
        raise ValueError(f"trajectory has {len(traj)} steps, config horizon is {cfg.benchmark.horizon}")
    est = make_filter(algorithm, cfg, rng, alpha)
    t0 = time.perf_counter()
    est.fit(traj.observations)
    seconds = time.perf_counter() - t0
    estimates = est.estimates_[:, 0]
    return RunRecord(
        algorithm=algorithm,
        case=case,
        run=run,
        truth=traj.states.copy(),
        observations=traj.observations.copy(),
        estimates=estimates,
        degenerate=np.asarray(est.degenerate_).reshape(len(traj), -1).any(axis=1),
        mse=mse(estimates, traj.states),
        seconds=seconds,
        trajectory_hash=trajectory_hash(traj),
        model_probs=getattr(est, "model_probs_", None),
    )


def run_trajectory(cfg: ExperimentConfig, case: str, run: int) -> Trajectory:
    r = run if cfg.redraw_trajectory_per_run else 0
    return simulate_trajectory(cfg.benchmark, case, make_rng(cfg.master_seed, r, _STREAM["trajectory"]))


def _one_run(cfg, case, run, algorithms, alpha):
    traj = run_trajectory(cfg, case, run)
    return [
        run_filter(a, traj, cfg, make_rng(cfg.master_seed, run, _STREAM[a]), case=case, run=run, alpha=alpha)
        for a in algorithms
    ]


def run_experiment(cfg: ExperimentConfig, case: str, *, algorithms=None, alpha=None) -> ExperimentSummary:
    """Run every selected algorithm ``cfg.n_runs`` times and aggregate MSE statistics."""
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}, got {case!r}")
    algorithms = tuple(algorithms or cfg.algorithms)
    runs = range(cfg.n_runs)
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            batches = list(pool.map(lambda r: _one_run(cfg, case, r, algorithms, alpha), runs))
    else:
        batches = [_one_run(cfg, case, r, algorithms, alpha) for r in runs]
    records = [rec for batch in batches for rec in batch]

    stats = {}
    for a in algorithms:
        vals = np.array([r.mse for r in records if r.algorithm == a])
        stats[a] = AlgorithmStats(
            mse_mean=float(vals.mean()),
            mse_var=float(vals.var(ddof=1)) if len(vals) > 1 else 0.0,
            seconds=float(sum(r.seconds for r in records if r.algorithm == a)),
        )
    labels = [m.label for m in cfg.model_bank()]
    traces = [r.model_probs for r in records if r.algorithm == "RPF"]
    mean_probs = np.mean(traces, axis=0).T if traces else None
    return ExperimentSummary(case, cfg, records, stats, labels, mean_probs)


def alpha_sweep(cfg: ExperimentConfig, cases=CASES) -> dict:
    """RPF summaries keyed by ``(alpha, case)`` over ``cfg.alpha_grid``."""
    return {
        (a, c): run_experiment(cfg, c, algorithms=("RPF",), alpha=a)
        for a in cfg.alpha_grid
        for c in cases
    }


def model_prob_trace(cfg: ExperimentConfig, case: str, alpha: float) -> np.ndarray:
    """``(n_models, horizon)`` run-averaged posterior model probabilities of the RPF."""
    return run_experiment(cfg, case, algorithms=("RPF",), alpha=alpha).mean_model_probs
