"""Residual prediction (RP) goodness-of-fit tests for linear models."""

__version__ = "0.1.0"

from .estimators import (
    GroupTest,
    HeteroscedasticityTest,
    NonlinearityTest,
    QuadraticEffectsTest,
    SingleVariableTest,
)

__all__ = [
    "GroupTest",
    "HeteroscedasticityTest",
    "NonlinearityTest",
    "QuadraticEffectsTest",
    "SingleVariableTest",
]
