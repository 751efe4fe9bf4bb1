"""Random perturbation models for simultaneous-perturbation updates.

The shipped model is the symmetric Bernoulli perturbation: each component is
independently +amplitude or -amplitude with probability one half.  It is
zero-mean, bounded, and exposes the two moment constants the rate theory
needs: alpha2 = E[Phi^2] = amplitude^2 and alpha3 = sup|Phi| = amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PerturbationModel", "sample_vector", "sample_array", "moments"]

_KINDS = ("symmetric-bernoulli", "scaled-symmetric-bernoulli")


@dataclass(frozen=True)
class PerturbationModel:
    kind: str = "symmetric-bernoulli"
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown perturbation kind: {self.kind!r}")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")


def sample_array(model: PerturbationModel, shape, rng: np.random.Generator):
    """Sample an array of i.i.d. signed perturbations of the given shape.

    Each entry consumes exactly one uniform draw, so the first rows of a
    larger batch coincide with a smaller batch drawn from the same stream
    (prefix stability; the replication-parallel runner relies on this).
    """
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return model.amplitude * signs


def sample_vector(model: PerturbationModel, n: int, rng: np.random.Generator):
    """Sample one length-n perturbation vector."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return sample_array(model, (n,), rng)


def moments(model: PerturbationModel):
    """Return (alpha2, alpha3) = (E[Phi^2], sup|Phi|)."""
    return model.amplitude**2, model.amplitude
