"""Generalized-Gaussian kernels and the entropy-style cost they induce.

The robust measurement update weighs regression residuals through a mixture
of two generalized Gaussian densities.  This module owns the densities, the
double-sum information potential used as the update's objective, and the
pairwise kernel-weight matrices the fixed-point solver consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import gamma_fn

# Exponent arguments below -UNDERFLOW_EXP flush the density to exactly zero.
UNDERFLOW_EXP = 700.0
# Default clamp for |e_j - e_i| in the alpha < 2 weight exponent.
DEFAULT_SINGULARITY_EPS = 1e-8


class EmptyInput(ValueError):
    """Raised when an error sample vector is empty."""


@dataclass(frozen=True)
class GgdKernel:
    """Generalized Gaussian density with shape ``alpha`` and bandwidth ``beta``.

    density(e) = alpha / (2 beta Gamma(1/alpha)) * exp(-|e/beta|^alpha)

    ``alpha = 2`` recovers a Gaussian of standard deviation ``beta/sqrt(2)``.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0.0):
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if not (np.isfinite(self.beta) and self.beta > 0.0):
            raise ValueError(f"beta must be positive, got {self.beta!r}")

    @property
    def log_norm(self) -> float:
        """log of the density's normalizing constant alpha/(2 beta Gamma(1/alpha))."""
        return (
            math.log(self.alpha)
            - math.log(2.0 * self.beta)
            - math.lgamma(1.0 / self.alpha)
        )

    @property
    def peak(self) -> float:
        """Density value at zero error."""
        return self.alpha / (2.0 * self.beta * gamma_fn(1.0 / self.alpha))


@dataclass(frozen=True)
class MixtureKernel:
    """Convex combination ``eta * k1 + (1 - eta) * k2`` of two GGD kernels."""

    eta: float
    k1: GgdKernel
    k2: GgdKernel

    def __post_init__(self):
        if not (0.0 <= self.eta <= 1.0):
            raise ValueError(f"eta must lie in [0, 1], got {self.eta!r}")


@dataclass(frozen=True)
class KernelWeightMatrices:
    """Pairwise kernel weights ``lam`` and their diagonal row-sum matrix.

    ``lam_bar - lam`` has graph-Laplacian structure: symmetric, PSD, and it
    annihilates the all-ones vector.
    """

    lam: np.ndarray
    lam_bar: np.ndarray


def ggd_density(kernel: GgdKernel, e) -> np.ndarray | float:
    """Evaluate the GGD density at error(s) ``e``.

    Computed in log space; exponents below ``-UNDERFLOW_EXP`` flush to zero
    so that tiny bandwidths never overflow the exponent.
    """
    e = np.asarray(e, dtype=float)
    with np.errstate(over="ignore"):
        log_val = kernel.log_norm - np.abs(e / kernel.beta) ** kernel.alpha
    out = np.where(log_val < -UNDERFLOW_EXP, 0.0, np.exp(np.maximum(log_val, -UNDERFLOW_EXP)))
    if out.ndim == 0:
        return float(out)
    return out


def mixture_density(mk: MixtureKernel, e) -> np.ndarray | float:
    """eta-weighted sum of the two component densities at ``e``."""
    return mk.eta * ggd_density(mk.k1, e) + (1.0 - mk.eta) * ggd_density(mk.k2, e)


def information_potential(errors, mk: MixtureKernel) -> float:
    """Second-order information potential of an error sample.

    (1/L^2) * sum_i sum_j mixture_density(e_i - e_j), including the i == j
    terms.  Larger values mean the errors are more tightly clustered;
    maximizing this is equivalent to minimizing the quadratic Renyi entropy
    of the sample.
    """
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise EmptyInput("information potential needs at least one error sample")
    diffs = e[None, :] - e[:, None]
    return float(np.sum(mixture_density(mk, diffs))) / e.size**2


def cost(errors, mk: MixtureKernel) -> float:
    """Objective maximized by the robust measurement update.

    Identical to :func:`information_potential`; kept as the named entry point
    the filter iterates against (its argument is the length n+m whitened
    residual of the measurement-update regression).
    """
    return information_potential(errors, mk)


def kernel_weight_matrices(
    errors, kernel: GgdKernel, epsilon: float = DEFAULT_SINGULARITY_EPS
) -> KernelWeightMatrices:
    """Pairwise weights lam[i, j] = G(e_j - e_i) * max(|e_j - e_i|, eps)^(alpha-2).

    These are the per-pair coefficients of the cost gradient.  ``epsilon``
    guards the exponent's singularity at coincident errors when alpha < 2
    (and pins the otherwise-zero coincident weight when alpha > 2).  The
    result is exactly symmetric by construction from the upper triangle.
    """
    if not (np.isfinite(epsilon) and epsilon > 0.0):
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise EmptyInput("kernel weights need at least one error sample")
    diffs = np.abs(e[None, :] - e[:, None])
    lam = ggd_density(kernel, diffs) * np.maximum(diffs, epsilon) ** (kernel.alpha - 2.0)
    lam = np.triu(lam) + np.triu(lam, 1).T
    # Row sums via the same contraction a matrix-vector product uses, so
    # (lam_bar - lam) @ ones is exactly zero.
    lam_bar = np.diag(lam @ np.ones(e.size))
    return KernelWeightMatrices(lam=lam, lam_bar=lam_bar)
