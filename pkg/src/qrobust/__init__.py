"""Differentiable state-vector simulation and adversarial-robustness benchmarks for quantum classifiers."""

from .kernels import BACKEND
from .qvc import QvcModel
from .classical import ClassicalModel
from .attacks import AttackConfig, AttackSet
from .noise import NoiseModel

__version__ = "0.1.0"
__all__ = ["BACKEND", "QvcModel", "ClassicalModel", "AttackConfig", "AttackSet", "NoiseModel"]
