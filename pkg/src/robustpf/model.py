"""State-space models and the nonstationary growth benchmark.

A :class:`StateSpaceModel` only needs to *sample* its transition; bootstrap
filters never evaluate the transition density. Both callables are
vectorized over particles: states are ``(n, state_dim)`` arrays and
measurement means are ``(n, meas_dim)`` arrays. Time indices are 1-based.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dist import NoiseModel, sample_gamma, sample_uniform

CASES = ("I", "II")
DEFAULT_OUTLIER_STEPS = (7, 8, 9, 20, 37, 38, 39, 50)


@dataclass(frozen=True)
class StateSpaceModel:
    transition_sample: Callable[[int, np.ndarray, np.random.Generator], np.ndarray]
    measurement_mean: Callable[[int, np.ndarray], np.ndarray]
    initial_sample: Callable[[int, np.random.Generator], np.ndarray]
    state_dim: int = 1
    meas_dim: int = 1
    measurement_noise_gen: Optional[NoiseModel] = None

    def __post_init__(self):
        if self.state_dim < 1 or self.meas_dim < 1:
            raise ValueError("state_dim and meas_dim must be positive")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Settings of the scalar benchmark series and its outlier injection.

    ``process_noise=False`` switches the Gamma term off and ``init_std=0``
    starts every particle at ``x0``; both exist for deterministic checks.
    """

    horizon: int = 60
    x0: float = 1.0
    process_shape: float = 3.0
    process_scale: float = 2.0
    meas_variance: float = 1e-5
    switch_step: int = 30
    outlier_steps: tuple = DEFAULT_OUTLIER_STEPS
    outlier_lo: float = 40.0
    outlier_hi: float = 50.0
    init_std: float = 1.0
    process_noise: bool = True

    def __post_init__(self):
        object.__setattr__(self, "outlier_steps", tuple(sorted(set(int(k) for k in self.outlier_steps))))
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if any(k < 1 or k > self.horizon for k in self.outlier_steps):
            raise ValueError(f"outlier_steps must lie in 1..{self.horizon}")
        if not self.outlier_lo < self.outlier_hi:
            raise ValueError("outlier_lo must be below outlier_hi")
        if not self.meas_variance > 0:
            raise ValueError("meas_variance must be positive")
        if not (self.process_shape > 0 and self.process_scale > 0):
            raise ValueError("process_shape and process_scale must be positive")
        if self.init_std < 0:
            raise ValueError("init_std must be non-negative")


@dataclass
class Trajectory:
    states: np.ndarray
    observations: np.ndarray
    outlier_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.observations = np.asarray(self.observations, dtype=float)
        if self.outlier_mask is None:
            self.outlier_mask = np.zeros(len(self.states), dtype=bool)
        self.outlier_mask = np.asarray(self.outlier_mask, dtype=bool)
        if not len(self.states) == len(self.observations) == len(self.outlier_mask):
            raise ValueError("states, observations and outlier_mask must have equal length")

    def __len__(self):
        return len(self.states)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "x_true", "y", "outlier"])
        for k, (x, y, o) in enumerate(zip(self.states, self.observations, self.outlier_mask), start=1):
            w.writerow([k, f"{x:.17g}", f"{y:.17g}", int(o)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Trajectory:
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            states=[float(r["x_true"]) for r in rows],
            observations=[float(r["y"]) for r in rows],
            outlier_mask=[r["outlier"] == "1" for r in rows],
        )


def benchmark_transition(k, x_prev, rng=None, shape=3.0, scale=2.0):
    """One step of ``x_k = 1 + sin(0.04 pi k) + 0.5 x_{k-1} + u``, ``u ~ Gamma(shape, scale)``.

    Passing ``rng=None`` suppresses the noise term.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    det = 1.0 + np.sin(0.04 * np.pi * k) + 0.5 * x_prev
    if rng is None:
        return det
    return det + sample_gamma(rng, shape, scale, size=x_prev.shape or None)


def benchmark_measure(k, x, switch_step=30):
    x = np.asarray(x, dtype=float)
    if k <= switch_step:
        return 0.2 * x**2
    return 0.2 * x - 2.0


def simulate_trajectory(cfg: BenchmarkConfig, case: str, rng: np.random.Generator) -> Trajectory:
    """Generate one benchmark series.

    States are drawn first, then one noise draw per step, so Case I and
    Case II series from the same seed share states and every non-outlier
    observation.
    """
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}, got {case!r}")
    T = cfg.horizon
    states = np.empty(T)
    x = cfg.x0
    for k in range(1, T + 1):
        x = float(benchmark_transition(k, x, rng if cfg.process_noise else None,
                                       cfg.process_shape, cfg.process_scale))
        states[k - 1] = x
    sigma = np.sqrt(cfg.meas_variance)
    gauss = rng.standard_normal(T) * sigma
    outl = sample_uniform(rng, cfg.outlier_lo, cfg.outlier_hi, size=T)
    mask = np.zeros(T, dtype=bool)
    if case == "II":
        mask[[k - 1 for k in cfg.outlier_steps]] = True
    noise = np.where(mask, outl, gauss)
    obs = np.array([benchmark_measure(k, states[k - 1], cfg.switch_step) for k in range(1, T + 1)]) + noise
    return Trajectory(states, obs, mask)


def make_benchmark_ssm(cfg: BenchmarkConfig) -> StateSpaceModel:
    def transition(k, x, rng):
        return benchmark_transition(k, x, rng if cfg.process_noise else None,
                                    cfg.process_shape, cfg.process_scale)

    def measure(k, x):
        return benchmark_measure(k, x, cfg.switch_step)

    def initial(n, rng):
        return cfg.x0 + cfg.init_std * rng.standard_normal((n, 1))

    return StateSpaceModel(
        transition_sample=transition,
        measurement_mean=measure,
        initial_sample=initial,
        state_dim=1,
        meas_dim=1,
        measurement_noise_gen=NoiseModel.gaussian(cfg.meas_variance),
    )
