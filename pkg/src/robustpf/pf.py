"""Bootstrap particle filter.

Particles are propagated through the transition prior, so the importance
weight update reduces to the measurement likelihood. Weights are stored as
normalized log-weights; linear weights are materialized only to resample
and to form point estimates.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dist import NoiseModel
from .model import StateSpaceModel

# below this the largest weight would underflow in linear arithmetic
LOG_UNDERFLOW = float(np.log(np.finfo(float).tiny))
_RESIDUAL_EPS = 1e-9


class ResamplingScheme(str, enum.Enum):
    MULTINOMIAL = "multinomial"
    RESIDUAL = "residual"
    SYSTEMATIC = "systematic"


@dataclass
class ParticleSet:
    particles: np.ndarray
    log_weights: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        self.particles = p
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.log_weights.shape != (p.shape[0],):
            raise ValueError("need exactly one log-weight per particle")
        if p.shape[0] < 1:
            raise ValueError("a particle set needs at least one particle")

    @classmethod
    def uniform(cls, particles) -> ParticleSet:
        p = np.asarray(particles, dtype=float)
        n = p.shape[0]
        return cls(p, np.full(n, -np.log(n)))

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


def normalize_log_weights(log_w):
    """Return ``(log_w - logsumexp(log_w), ok)``; ``ok`` is False when every entry is -inf."""
    log_w = np.asarray(log_w, dtype=float)
    top = np.max(log_w)
    if not np.isfinite(top):
        return log_w, False
    return log_w - logsumexp(log_w), True


def propagate(ps: ParticleSet, ssm: StateSpaceModel, k: int, rng: np.random.Generator) -> ParticleSet:
    x = np.asarray(ssm.transition_sample(k, ps.particles, rng), dtype=float).reshape(ps.n, ssm.state_dim)
    return ParticleSet(x, ps.log_weights.copy())


def reweight(ps: ParticleSet, loglik) -> ParticleSet:
    """Multiply weights by ``exp(loglik(particles))`` and renormalize.

    ``loglik`` maps the ``(n, state_dim)`` particle array to ``n`` log-likelihoods.
    If every updated weight is -inf the prior weights are kept. Either that or
    a maximum log-weight below the linear underflow floor marks the result
    ``degenerate``.
    """
    raw = ps.log_weights + np.asarray(loglik(ps.particles), dtype=float)
    raw = np.where(np.isnan(raw), -np.inf, raw)
    lw, ok = normalize_log_weights(raw)
    if not ok:
        return ParticleSet(ps.particles, ps.log_weights.copy(), degenerate=True)
    return ParticleSet(ps.particles, lw, degenerate=bool(np.max(raw) < LOG_UNDERFLOW))


def ess(ps: ParticleSet) -> float:
    """Effective sample size ``1 / sum(w^2)`` from the log-weights."""
    lw = ps.log_weights
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def _searchsorted(weights, u):
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(weights) - 1)


def resample_indices(weights, n: int, scheme, rng: np.random.Generator) -> np.ndarray:
    """Ancestor indices for ``n`` offspring drawn from normalized ``weights``."""
    scheme = ResamplingScheme(scheme)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    if scheme is ResamplingScheme.MULTINOMIAL:
        return _searchsorted(w, np.sort(rng.random(n)))
    if scheme is ResamplingScheme.SYSTEMATIC:
        return _searchsorted(w, (rng.random() + np.arange(n)) / n)
    scaled = n * w
    counts = np.floor(scaled + _RESIDUAL_EPS).astype(int)
    rest = n - counts.sum()
    idx = np.repeat(np.arange(len(w)), counts)
    if rest > 0:
        frac = np.clip(scaled - counts, 0.0, None)
        extra = _searchsorted(frac / frac.sum(), np.sort(rng.random(rest)))
        idx = np.sort(np.concatenate([idx, extra]))
    return idx


def resample(ps: ParticleSet, scheme=ResamplingScheme.RESIDUAL, rng: np.random.Generator = None) -> ParticleSet:
    idx = resample_indices(ps.weights, ps.n, scheme, rng)
    return ParticleSet.uniform(ps.particles[idx])


def posterior_mean(ps: ParticleSet) -> np.ndarray:
    return ps.weights @ ps.particles


def pf_step(ps, ssm, k, y_k, noise: NoiseModel, scheme=ResamplingScheme.RESIDUAL, rng=None,
            ess_threshold=None):
    """One sampling / weighting / resampling iteration.

    Returns ``(particle_set, estimate, degenerate)``. The estimate is the
    weighted mean after weighting and before resampling. With an
    ``ess_threshold`` (fraction of ``n``) resampling only happens when the
    effective sample size drops below it.
    """
    y_k = np.atleast_1d(np.asarray(y_k, dtype=float))
    ps = propagate(ps, ssm, k, rng)
    ps = reweight(ps, lambda x: noise.logpdf(y_k - ssm.measurement_mean(k, x)))
    estimate = posterior_mean(ps)
    degenerate = ps.degenerate
    if ess_threshold is None or ess(ps) < ess_threshold * ps.n:
        ps = resample(ps, scheme, rng)
    return ps, estimate, degenerate


def _check_observations(X, meas_dim):
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != meas_dim:
        raise ValueError(f"observations have {X.shape[1]} columns, model expects {meas_dim}")
    return X


class ParticleFilter(TransformerMixin, BaseEstimator):
    """Bootstrap particle filter with a single measurement-noise model.

    ``fit(X)`` filters the observation sequence ``X`` (rows are time steps,
    the first row is ``k=1``) and stores the per-step results;
    ``transform(X)`` returns the filtered state means.

    Parameters
    ----------
    ssm : StateSpaceModel
    noise : NoiseModel
        Likelihood used for weighting.
    n_particles : int, default=200
    resampling : {"residual", "multinomial", "systematic"}, default="residual"
    ess_threshold : float or None, default=None
        Resample only when ESS < ``ess_threshold * n_particles``. ``None``
        resamples at every step.
    random_state : int, numpy Generator or None

    Attributes
    ----------
    estimates_ : ndarray of shape (n_steps, state_dim)
    ess_ : ndarray of shape (n_steps,)
        Effective sample size after weighting.
    degenerate_ : ndarray of bool, shape (n_steps,)
    """

    def __init__(self, ssm=None, noise=None, n_particles=200, resampling="residual",
                 ess_threshold=None, random_state=None):
        self.ssm = ssm
        self.noise = noise
        self.n_particles = n_particles
        self.resampling = resampling
        self.ess_threshold = ess_threshold
        self.random_state = random_state

    def _validate(self):
        if self.ssm is None or self.noise is None:
            raise ValueError("ssm and noise must be set")
        if int(self.n_particles) < 1:
            raise ValueError("n_particles must be >= 1")
        ResamplingScheme(self.resampling)

    def _run(self, X):
        self._validate()
        X = _check_observations(X, self.ssm.meas_dim)
        rng = np.random.default_rng(self.random_state)
        scheme = ResamplingScheme(self.resampling)
        ps = ParticleSet.uniform(self.ssm.initial_sample(int(self.n_particles), rng))
        T = X.shape[0]
        est = np.empty((T, self.ssm.state_dim))
        ess_trace = np.empty(T)
        flags = np.zeros(T, dtype=bool)
        for k in range(1, T + 1):
            y = X[k - 1]
            ps = propagate(ps, self.ssm, k, rng)
            ps = reweight(ps, lambda x: self.noise.logpdf(y - self.ssm.measurement_mean(k, x)))
            est[k - 1] = posterior_mean(ps)
            ess_trace[k - 1] = ess(ps)
            flags[k - 1] = ps.degenerate
            if self.ess_threshold is None or ess_trace[k - 1] < self.ess_threshold * ps.n:
                ps = resample(ps, scheme, rng)
        return est, ess_trace, flags, ps

    def fit(self, X, y=None):
        self.estimates_, self.ess_, self.degenerate_, self.particles_ = self._run(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "estimates_")
        return self._run(X)[0]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).estimates_
