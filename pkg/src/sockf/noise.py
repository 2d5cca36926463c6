"""Measurement-noise laboratory: base distributions and gated mixtures.

The benchmark's non-Gaussian measurement noise is a Bernoulli-gated pair:
with probability ``c`` draw from the contaminant, otherwise from the base
Gaussian.  Streams are reproducible per seed, and Monte Carlo trials get
independent substreams through ``numpy``'s splittable SeedSequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    var: float

    def __post_init__(self):
        if self.var <= 0.0:
            raise ValueError("variance must be positive")


@dataclass(frozen=True)
class LaplaceSpec:
    mean: float
    var: float

    def __post_init__(self):
        if self.var <= 0.0:
            raise ValueError("variance must be positive")

    @property
    def scale(self) -> float:
        return math.sqrt(self.var / 2.0)


@dataclass(frozen=True)
class UniformSpec:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("uniform bounds must satisfy lo < hi")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def var(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0


Contaminant = Union[LaplaceSpec, UniformSpec, GaussianSpec]


@dataclass(frozen=True)
class MixedNoiseSpec:
    """Bernoulli-gated mixture: contaminant with probability ``c``, else base."""

    c: float
    base: GaussianSpec
    contaminant: Contaminant

    def __post_init__(self):
        if not (0.0 <= self.c <= 1.0):
            raise ValueError("contamination probability must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return (1.0 - self.c) * self.base.mean + self.c * self.contaminant.mean

    @property
    def var(self) -> float:
        second = (1.0 - self.c) * (self.base.var + self.base.mean**2) + self.c * (
            self.contaminant.var + self.contaminant.mean**2
        )
        return second - self.mean**2


def sample_gaussian(mean: float, variance: float, rng: np.random.Generator, size=None):
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    return mean + math.sqrt(variance) * rng.standard_normal(size)


def sample_uniform(lo: float, hi: float, rng: np.random.Generator, size=None):
    if not lo < hi:
        raise ValueError("bounds must satisfy lo < hi")
    return lo + (hi - lo) * rng.random(size)


def sample_laplace(mean: float, variance: float, rng: np.random.Generator, size=None):
    """Laplace draw with scale b = sqrt(variance/2), by inverse CDF."""
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    b = math.sqrt(variance / 2.0)
    u = rng.random(size) - 0.5
    return mean - b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _sample_component(spec: Contaminant, rng: np.random.Generator, size):
    if isinstance(spec, GaussianSpec):
        return sample_gaussian(spec.mean, spec.var, rng, size)
    if isinstance(spec, LaplaceSpec):
        return sample_laplace(spec.mean, spec.var, rng, size)
    if isinstance(spec, UniformSpec):
        return sample_uniform(spec.lo, spec.hi, rng, size)
    raise TypeError(f"unsupported distribution spec {type(spec).__name__}")


def sample_mixed(spec: MixedNoiseSpec, rng: np.random.Generator, size=None):
    """Draw from the gated mixture.

    The gate, base, and contaminant streams are drawn in a fixed order so a
    given seed always yields the same samples regardless of ``c``'s value.
    """
    gate = rng.random(size) < spec.c
    base = _sample_component(spec.base, rng, size)
    cont = _sample_component(spec.contaminant, rng, size)
    out = np.where(gate, cont, base)
    if out.ndim == 0:
        return float(out)
    return out


def sampler(spec) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Adapt a spec into the ``(rng, n) -> samples`` shape simulators take."""
    if isinstance(spec, MixedNoiseSpec):
        return lambda rng, n: sample_mixed(spec, rng, n)
    if isinstance(spec, (GaussianSpec, LaplaceSpec, UniformSpec)):
        return lambda rng, n: _sample_component(spec, rng, n)
    raise TypeError(f"unsupported noise spec {type(spec).__name__}")


def spec_from_dict(d: dict):
    """Parse the config-file representation of a noise spec.

    Mixture form: ``{"c": 0.95, "base": {...}, "contaminant": {...}}``;
    component form: ``{"dist": "gaussian"|"laplace"|"uniform", ...}``.
    """
    if "c" in d:
        return MixedNoiseSpec(
            c=float(d["c"]),
            base=spec_from_dict(d["base"]),
            contaminant=spec_from_dict(d["contaminant"]),
        )
    dist = d["dist"].lower()
    if dist == "gaussian":
        return GaussianSpec(mean=float(d["mean"]), var=float(d["var"]))
    if dist == "laplace":
        return LaplaceSpec(mean=float(d["mean"]), var=float(d["var"]))
    if dist == "uniform":
        return UniformSpec(lo=float(d["lo"]), hi=float(d["hi"]))
    raise ValueError(f"unknown distribution {dist!r}")


def spawn_seeds(master_seed: int, n: int) -> list:
    """Derive ``n`` independent child seeds from a master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master_seed).spawn(n)]


def spawn_generators(master_seed: int, n: int) -> list:
    """Independent generators for ``n`` Monte Carlo trials."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(master_seed).spawn(n)]
