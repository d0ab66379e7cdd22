"""Robust particle filter: a bootstrap filter over a bank of noise models.

Each step weights the propagated particles once per candidate noise model,
updates the posterior probability of every model from its particle
estimate of the marginal likelihood, and resamples from the
probability-weighted mixture of the per-model weights. Before each update
the model probabilities are flattened by a forgetting exponent ``alpha``
so a model that lost all mass can come back.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dist import NoiseModel
from .pf import (
    ParticleSet,
    ResamplingScheme,
    _check_observations,
    normalize_log_weights,
    posterior_mean,
    propagate,
    resample,
)

LOG_PROB_FLOOR = float(np.log(1e-300))


def default_bank(variance, dim: int = 1) -> list:
    """Gaussian, t(50) and t(3), all zero-mean and sharing ``variance`` as covariance/scale."""
    return [
        NoiseModel.gaussian(variance, dim, label="gaussian"),
        NoiseModel.student_t(variance, 50.0, dim, label="t50"),
        NoiseModel.student_t(variance, 3.0, dim, label="t3"),
    ]


@dataclass
class ModelBank:
    models: list

    def __post_init__(self):
        self.models = list(self.models)
        if len(self.models) < 1:
            raise ValueError("a model bank needs at least one model")
        labels = [m.label for m in self.models]
        if len(set(labels)) != len(labels):
            raise ValueError(f"model labels must be unique, got {labels}")
        if len({m.dim for m in self.models}) != 1:
            raise ValueError("all models must share the measurement dimension")

    def __len__(self):
        return len(self.models)

    @property
    def labels(self) -> list:
        return [m.label for m in self.models]

    def loglik(self, y_k, k, particles, ssm) -> np.ndarray:
        """``(M, n)`` array of ``log p_m(y_k | x^i)``."""
        resid = np.atleast_1d(y_k) - ssm.measurement_mean(k, particles)
        return np.stack([m.logpdf(resid) for m in self.models])


@dataclass
class ModelPosterior:
    log_probs: np.ndarray
    alpha: float = 0.9

    def __post_init__(self):
        self.log_probs = np.asarray(self.log_probs, dtype=float)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if abs(logsumexp(self.log_probs)) > 1e-9:
            raise ValueError("model log-probabilities are not normalized")

    @classmethod
    def uniform(cls, m: int, alpha: float = 0.9) -> ModelPosterior:
        return cls(np.full(m, -np.log(m)), alpha)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


@dataclass
class RpfState:
    particle_set: ParticleSet
    model_posterior: ModelPosterior
    per_model_log_weights: np.ndarray = field(default=None)


@dataclass
class StepDiagnostics:
    predicted_log_probs: np.ndarray
    log_probs: np.ndarray
    marginal_logliks: np.ndarray
    mixed_log_weights: np.ndarray
    row_degenerate: np.ndarray
    no_evidence: bool


def forget_predict(mp: ModelPosterior) -> np.ndarray:
    """Predicted log-probabilities ``normalize(alpha * log pi)``.

    Entries are floored at ``log(1e-300)`` first so no model is ever
    zeroed out for good.
    """
    scaled = mp.alpha * np.maximum(mp.log_probs, LOG_PROB_FLOOR)
    return scaled - logsumexp(scaled)


def _joint(ps: ParticleSet, bank: ModelBank, k, y_k, ssm) -> np.ndarray:
    joint = ps.log_weights[None, :] + bank.loglik(y_k, k, ps.particles, ssm)
    return np.where(np.isnan(joint), -np.inf, joint)


def per_model_reweight(ps: ParticleSet, bank: ModelBank, k, y_k, ssm):
    """Row ``m`` holds the normalized ``log w_{k-1} + log p_m(y_k | x)``.

    Returns ``(rows, degenerate)``; a row whose entries are all -inf falls
    back to the prior weights and is flagged.
    """
    return _rows_from_joint(_joint(ps, bank, k, y_k, ssm), ps.log_weights)


def _rows_from_joint(joint, prior_log_w):
    rows = np.empty_like(joint)
    bad = np.zeros(joint.shape[0], dtype=bool)
    for m, r in enumerate(joint):
        rows[m], ok = normalize_log_weights(r)
        if not ok:
            rows[m], bad[m] = prior_log_w, True
    return rows, bad


def marginal_loglik(ps: ParticleSet, bank: ModelBank, k, y_k, ssm) -> np.ndarray:
    """Particle estimate of ``log p_m(y_k | y_{1:k-1})`` for each model."""
    return logsumexp(_joint(ps, bank, k, y_k, ssm), axis=1)


def model_update(predicted_log_probs, marginal_logliks):
    """Bayes update of model log-probabilities; returns ``(log_probs, no_evidence)``.

    When every marginal likelihood is zero the prediction is returned
    unchanged and ``no_evidence`` is True.
    """
    post, ok = normalize_log_weights(np.asarray(predicted_log_probs) + np.asarray(marginal_logliks))
    if not ok:
        return np.asarray(predicted_log_probs, dtype=float).copy(), True
    return post, False


def average_weights(per_model_log_weights, posterior_log_probs) -> np.ndarray:
    """Log of ``sum_m pi_m w_m^j`` for each particle ``j``."""
    out = logsumexp(np.asarray(posterior_log_probs)[:, None] + per_model_log_weights, axis=0)
    total = logsumexp(out)
    if abs(total) > 1e-9:
        raise AssertionError(f"averaged weights sum to exp({total}), expected 1")
    return out


def rpf_step(st: RpfState, bank: ModelBank, ssm, k, y_k, scheme=ResamplingScheme.RESIDUAL, rng=None):
    """One robust filter iteration; returns ``(state, estimate, diagnostics)``."""
    ps = propagate(st.particle_set, ssm, k, rng)
    joint = _joint(ps, bank, k, y_k, ssm)
    rows, bad = _rows_from_joint(joint, ps.log_weights)
    marg = logsumexp(joint, axis=1)
    predicted = forget_predict(st.model_posterior)
    log_probs, no_evidence = model_update(predicted, marg)
    mixed = ParticleSet(ps.particles, average_weights(rows, log_probs))
    estimate = posterior_mean(mixed)
    new_ps = resample(mixed, scheme, rng)
    new_st = RpfState(new_ps, ModelPosterior(log_probs, st.model_posterior.alpha), rows)
    return new_st, estimate, StepDiagnostics(predicted, log_probs, marg, mixed.log_weights, bad, no_evidence)


class RobustParticleFilter(TransformerMixin, BaseEstimator):
    """Particle filter whose likelihood is a dynamically averaged bank of noise models.

    Same ``fit``/``transform`` contract as :class:`~robustpf.pf.ParticleFilter`.
    With ``models=None`` the bank is Gaussian, t(50) and t(3) sharing
    ``ssm.measurement_noise_gen``'s covariance.

    Attributes
    ----------
    estimates_ : ndarray of shape (n_steps, state_dim)
    model_probs_ : ndarray of shape (n_steps, n_models)
        Posterior model probabilities after each update.
    degenerate_ : ndarray of bool, shape (n_steps, n_models)
        Per-model rows that fell back to prior weights.
    labels_ : list of str
    """

    def __init__(self, ssm=None, models=None, alpha=0.9, n_particles=200, resampling="residual",
                 prior=None, random_state=None):
        self.ssm = ssm
        self.models = models
        self.alpha = alpha
        self.n_particles = n_particles
        self.resampling = resampling
        self.prior = prior
        self.random_state = random_state

    def _bank(self) -> ModelBank:
        if self.models is not None:
            return ModelBank(self.models)
        gen = self.ssm.measurement_noise_gen
        if gen is None or not hasattr(gen.params, "cov"):
            raise ValueError("models=None needs a Gaussian ssm.measurement_noise_gen")
        return ModelBank(default_bank(gen.params.cov, gen.dim))

    def _run(self, X):
        if self.ssm is None:
            raise ValueError("ssm must be set")
        if int(self.n_particles) < 1:
            raise ValueError("n_particles must be >= 1")
        bank = self._bank()
        X = _check_observations(X, self.ssm.meas_dim)
        scheme = ResamplingScheme(self.resampling)
        if self.prior is None:
            mp = ModelPosterior.uniform(len(bank), self.alpha)
        else:
            mp = ModelPosterior(np.log(np.asarray(self.prior, dtype=float)), self.alpha)
        rng = np.random.default_rng(self.random_state)
        st = RpfState(ParticleSet.uniform(self.ssm.initial_sample(int(self.n_particles), rng)), mp)
        T = X.shape[0]
        est = np.empty((T, self.ssm.state_dim))
        probs = np.empty((T, len(bank)))
        flags = np.zeros((T, len(bank)), dtype=bool)
        for k in range(1, T + 1):
            st, est[k - 1], diag = rpf_step(st, bank, self.ssm, k, X[k - 1], scheme, rng)
            probs[k - 1] = np.exp(diag.log_probs)
            flags[k - 1] = diag.row_degenerate
        return est, probs, flags, bank.labels

    def fit(self, X, y=None):
        self.estimates_, self.model_probs_, self.degenerate_, self.labels_ = self._run(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "estimates_")
        return self._run(X)[0]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).estimates_
