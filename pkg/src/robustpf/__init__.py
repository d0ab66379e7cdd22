"""Particle filters robust to measurement outliers via dynamic averaging of noise models."""

from .dist import NoiseModel, make_rng
from .model import BenchmarkConfig, StateSpaceModel, Trajectory, make_benchmark_ssm, simulate_trajectory
from .pf import ParticleFilter, ParticleSet, ResamplingScheme
from .rpf import ModelBank, ModelPosterior, RobustParticleFilter, default_bank

__all__ = [
    "BenchmarkConfig",
    "ModelBank",
    "ModelPosterior",
    "NoiseModel",
    "ParticleFilter",
    "ParticleSet",
    "ResamplingScheme",
    "RobustParticleFilter",
    "StateSpaceModel",
    "Trajectory",
    "default_bank",
    "make_benchmark_ssm",
    "make_rng",
    "simulate_trajectory",
]

__version__ = "0.1.0"
