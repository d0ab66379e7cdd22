"""Densities and samplers for the measurement-noise models.

Everything is evaluated in the log domain. Outliers sitting tens of
thousands of standard deviations away make linear-domain Gaussian
likelihoods underflow to exactly zero, so ``exp`` is only ever applied by
callers that know their values are bounded.

Random draws go through :class:`numpy.random.Generator` instances. Use
:func:`make_rng` to derive independent, reproducible streams from a seed
and a tuple of integer keys.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

LOG_2PI = float(np.log(2.0 * np.pi))


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return a generator whose stream is a pure function of ``(seed, *keys)``.

    Streams with different keys are statistically independent, and the
    mapping does not depend on the order in which streams are requested.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def _as_matrix(a, d: int | None = None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if d is not None and a.shape[0] != d:
        raise ValueError(f"matrix dimension {a.shape[0]} does not match mean dimension {d}")
    return a


def _cholesky(a: np.ndarray) -> np.ndarray:
    if not np.allclose(a, a.T, rtol=1e-12, atol=0.0):
        raise ValueError("covariance/scale matrix must be symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("matrix is not positive definite") from exc


@dataclass(frozen=True)
class GaussianParams:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        cov = _as_matrix(self.cov, mean.shape[0])
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", _cholesky(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class StudentTParams:
    mean: np.ndarray
    scale: np.ndarray
    dof: float
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if not (np.isfinite(self.dof) and self.dof > 0):
            raise ValueError(f"dof must be a positive finite number, got {self.dof!r}")
        scale = _as_matrix(self.scale, mean.shape[0])
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "dof", float(self.dof))
        object.__setattr__(self, "chol", _cholesky(scale))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _log_det(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _maha_from_chol(x, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = mean.shape[0]
    if x.shape[-1:] != (d,):
        if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        else:
            raise ValueError(f"x has trailing dimension {x.shape[-1:]}, expected {d}")
    diff = x - mean
    flat = diff.reshape(-1, d).T
    # solve L z = diff, then ||z||^2 = diff' S^-1 diff
    z = solve_triangular(chol, flat, lower=True) if d > 1 else flat / chol[0, 0]
    with np.errstate(over="ignore"):
        return np.sum(z * z, axis=0).reshape(diff.shape[:-1])


def mahalanobis_sq(x, mean, scale):
    """Squared Mahalanobis distance ``(x - mean)' scale^-1 (x - mean)``.

    ``x`` may carry leading batch dimensions; the result has the batch
    shape (a scalar for a single vector).
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    chol = _cholesky(_as_matrix(scale, mean.shape[0]))
    return _maha_from_chol(x, mean, chol)


def gaussian_logpdf(x, p: GaussianParams):
    maha = _maha_from_chol(x, p.mean, p.chol)
    return -0.5 * (p.dim * LOG_2PI + _log_det(p.chol) + maha)


def student_t_logpdf(x, p: StudentTParams):
    """Log-density of the multivariate Student's t with location, scale matrix and dof.

    Gamma-function factors go through ``gammaln`` so large ``dof`` never
    overflows.
    """
    v, d = p.dof, p.dim
    maha = _maha_from_chol(x, p.mean, p.chol)
    log_norm = (
        gammaln(0.5 * (v + d))
        - gammaln(0.5 * v)
        - 0.5 * d * np.log(np.pi * v)
        - 0.5 * _log_det(p.chol)
    )
    return log_norm - 0.5 * (v + d) * np.log1p(maha / v)


Params = Union[GaussianParams, StudentTParams]


@dataclass(frozen=True)
class NoiseModel:
    """A labelled measurement-noise density (Gaussian or Student's t)."""

    params: Params
    label: str

    def __post_init__(self):
        if not isinstance(self.params, (GaussianParams, StudentTParams)):
            raise TypeError(f"unsupported noise parameters: {type(self.params).__name__}")

    @classmethod
    def gaussian(cls, variance, dim: int = 1, label: str | None = None) -> NoiseModel:
        cov = np.eye(dim) * variance if np.ndim(variance) == 0 else variance
        return cls(GaussianParams(np.zeros(dim), cov), label or "gaussian")

    @classmethod
    def student_t(cls, scale, dof: float, dim: int = 1, label: str | None = None) -> NoiseModel:
        sc = np.eye(dim) * scale if np.ndim(scale) == 0 else scale
        return cls(StudentTParams(np.zeros(dim), sc, dof), label or f"t{dof:g}")

    @property
    def dim(self) -> int:
        return self.params.dim

    def logpdf(self, x):
        if isinstance(self.params, GaussianParams):
            return gaussian_logpdf(x, self.params)
        return student_t_logpdf(x, self.params)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if isinstance(self.params, GaussianParams):
            return sample_gaussian(rng, self.params)
        return sample_student_t(rng, self.params)


def sample_gaussian(rng: np.random.Generator, p: GaussianParams) -> np.ndarray:
    return p.mean + p.chol @ rng.standard_normal(p.dim)


def sample_student_t(rng: np.random.Generator, p: StudentTParams) -> np.ndarray:
    z = p.chol @ rng.standard_normal(p.dim)
    w = rng.chisquare(p.dof) / p.dof
    return p.mean + z / np.sqrt(w)


def sample_gamma(rng: np.random.Generator, shape: float, scale: float, size=None):
    """Gamma draw(s) with mean ``shape * scale``."""
    if not (shape > 0 and scale > 0):
        raise ValueError(f"gamma shape and scale must be positive, got ({shape}, {scale})")
    return rng.gamma(shape, scale, size=size)


def sample_uniform(rng: np.random.Generator, lo: float, hi: float, size=None):
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi})")
    return rng.uniform(lo, hi, size=size)
