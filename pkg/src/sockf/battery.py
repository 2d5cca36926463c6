"""Second-order RC equivalent-circuit battery model.

State is (soc, u1, u2): state of charge as a fraction of nominal capacity
plus the two polarization voltages.  Discharge current is positive.  The
continuous dynamics are exactly discretized (zero-order hold on current), so
stepping is cheap and the exponential semigroup property holds.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .dataset import Dataset

OCV_ORDER = 6
VANDERMONDE_COND_LIMIT = 1e12
SOC_SPAN_MIN = 0.3
MONOTONE_SCAN_STEP = 1e-3


class IllConditioned(ValueError):
    """Polynomial fit rejected: degenerate SOC spacing."""


class NonFiniteState(FloatingPointError):
    """A state transition produced NaN or infinity."""


@dataclass(frozen=True)
class EcmParams:
    """Electrical parameters of the 2-RC equivalent circuit.

    ``q_max`` is stored in coulombs; use :meth:`from_ah` when starting from
    amp-hours.  ``coulomb_eff`` is the coulomb efficiency (1.0 = ideal).
    """

    r0: float
    r1: float
    c1: float
    r2: float
    c2: float
    q_max: float
    coulomb_eff: float = 1.0

    def __post_init__(self):
        for name in ("r0", "r1", "c1", "r2", "c2", "q_max"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not (0.0 < self.coulomb_eff <= 1.0):
            raise ValueError("coulomb_eff must lie in (0, 1]")

    @classmethod
    def from_ah(cls, r0, r1, c1, r2, c2, q_ah, coulomb_eff=1.0) -> "EcmParams":
        return cls(r0, r1, c1, r2, c2, q_ah * 3600.0, coulomb_eff)

    @property
    def tau1(self) -> float:
        return self.r1 * self.c1

    @property
    def tau2(self) -> float:
        return self.r2 * self.c2


@dataclass(frozen=True)
class OcvCurve:
    """6th-order open-circuit-voltage polynomial, ascending coefficients."""

    coeffs: tuple
    soc_min: float = 0.0
    soc_max: float = 1.0

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if len(coeffs) != OCV_ORDER + 1:
            raise ValueError(f"expected {OCV_ORDER + 1} coefficients, got {len(coeffs)}")
        object.__setattr__(self, "coeffs", coeffs)
        if not (0.0 <= self.soc_min < self.soc_max <= 1.0):
            raise ValueError("validity range must satisfy 0 <= soc_min < soc_max <= 1")
        grid = np.arange(self.soc_min, self.soc_max + MONOTONE_SCAN_STEP, MONOTONE_SCAN_STEP)
        v = ocv_eval(self, grid)
        if np.any(np.diff(v) < 0.0):
            warnings.warn(
                "OCV polynomial is not monotone non-decreasing over its validity range",
                stacklevel=2,
            )


@dataclass(frozen=True)
class BatteryState:
    """Battery state sample; ``clamped`` flags an SOC clip to [0, 1]."""

    soc: float
    u1: float = 0.0
    u2: float = 0.0
    clamped: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.soc) and math.isfinite(self.u1) and math.isfinite(self.u2)):
            raise NonFiniteState(f"non-finite battery state ({self.soc}, {self.u1}, {self.u2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.soc, self.u1, self.u2])


def state_transition(s: BatteryState, current: float, dt: float, p: EcmParams) -> BatteryState:
    """Advance the state one exact-discretization step of length ``dt``.

    Process noise is the caller's business; this is the deterministic part.
    SOC leaving [0, 1] is clamped and flagged.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    a1 = math.exp(-dt / p.tau1)
    a2 = math.exp(-dt / p.tau2)
    soc = s.soc - p.coulomb_eff * dt * current / p.q_max
    u1 = a1 * s.u1 + p.r1 * (1.0 - a1) * current
    u2 = a2 * s.u2 + p.r2 * (1.0 - a2) * current
    if not (math.isfinite(soc) and math.isfinite(u1) and math.isfinite(u2)):
        raise NonFiniteState("state transition overflowed")
    clamped = soc < 0.0 or soc > 1.0
    if clamped:
        soc = min(max(soc, 0.0), 1.0)
    return BatteryState(soc=soc, u1=u1, u2=u2, clamped=clamped)


def ocv_eval(curve: OcvCurve, soc) -> np.ndarray | float:
    """Horner evaluation of the OCV polynomial at ``soc``."""
    soc = np.asarray(soc, dtype=float)
    out = np.full_like(soc, curve.coeffs[-1])
    for c in reversed(curve.coeffs[:-1]):
        out = out * soc + c
    if out.ndim == 0:
        return float(out)
    return out


def measure_voltage(s: BatteryState, current: float, p: EcmParams, ocv: OcvCurve) -> float:
    """Terminal voltage: OCV(soc) - I*R0 - u1 - u2 (noise injected by caller)."""
    if not (ocv.soc_min <= s.soc <= ocv.soc_max):
        warnings.warn(
            f"soc={s.soc:.4f} outside OCV validity range "
            f"[{ocv.soc_min}, {ocv.soc_max}]; extrapolating",
            stacklevel=2,
        )
    return float(ocv_eval(ocv, s.soc)) - current * p.r0 - s.u1 - s.u2


def fit_ocv(points, order: int = OCV_ORDER):
    """Least-squares polynomial fit of (soc, voltage) pairs.

    Returns ``(OcvCurve, rmse)``.  Needs at least ``order + 1`` points with
    distinct SOC values spanning at least 0.3 of the SOC range; a Vandermonde
    condition estimate above 1e12 raises :class:`IllConditioned`.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an iterable of (soc, voltage) pairs")
    soc, volt = pts[:, 0], pts[:, 1]
    if len(np.unique(soc)) < order + 1:
        raise ValueError(f"need at least {order + 1} distinct SOC values")
    span = soc.max() - soc.min()
    if span < SOC_SPAN_MIN:
        raise ValueError(f"SOC span {span:.3f} is below the minimum {SOC_SPAN_MIN}")
    vand = np.vander(soc, order + 1, increasing=True)
    cond = np.linalg.cond(vand)
    if cond > VANDERMONDE_COND_LIMIT:
        raise IllConditioned(f"Vandermonde condition {cond:.3e} exceeds {VANDERMONDE_COND_LIMIT:g}")
    coeffs, *_ = np.linalg.lstsq(vand, volt, rcond=None)
    residual = volt - vand @ coeffs
    rmse = float(np.sqrt(np.mean(residual**2)))
    if order < OCV_ORDER:
        coeffs = np.concatenate([coeffs, np.zeros(OCV_ORDER - order)])
    curve = OcvCurve(
        coeffs=tuple(coeffs),
        soc_min=float(max(soc.min(), 0.0)),
        soc_max=float(min(soc.max(), 1.0)),
    )
    return curve, rmse


def coulomb_count(soc0: float, currents, dt: float, p: EcmParams) -> np.ndarray:
    """Amp-hour integration of a current trace (left-Riemann).

    Returns a trace of length ``len(currents) + 1`` whose element ``k`` is the
    SOC after integrating the first ``k`` samples; element 0 is ``soc0``.
    Values leaving [0, 1] are kept as-is (flagging is the caller's concern).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    currents = np.asarray(currents, dtype=float)
    scale = p.coulomb_eff * dt / p.q_max
    soc = soc0 - scale * np.cumsum(currents)
    return np.concatenate([[soc0], soc])


def filter_dynamics(p: EcmParams) -> Callable[[np.ndarray, float, float], np.ndarray]:
    """Unclamped array-valued transition callable for filters.

    Estimators run on all of R^3; clipping estimates would hide divergence,
    so only the simulation path clamps.
    """

    def f(x: np.ndarray, current: float, dt: float) -> np.ndarray:
        a1 = math.exp(-dt / p.tau1)
        a2 = math.exp(-dt / p.tau2)
        return np.array(
            [
                x[0] - p.coulomb_eff * dt * current / p.q_max,
                a1 * x[1] + p.r1 * (1.0 - a1) * current,
                a2 * x[2] + p.r2 * (1.0 - a2) * current,
            ]
        )

    return f


def filter_observation(p: EcmParams, ocv: OcvCurve) -> Callable[[np.ndarray, float], np.ndarray]:
    """Array-valued terminal-voltage callable for filters."""

    def h(x: np.ndarray, current: float) -> np.ndarray:
        v = ocv.coeffs[-1]
        for c in reversed(ocv.coeffs[:-1]):
            v = v * x[0] + c
        return np.array([v - current * p.r0 - x[1] - x[2]])

    return h


def simulate_trace(
    p: EcmParams,
    ocv: OcvCurve,
    currents,
    dt: float,
    soc0: float,
    process_noise_cov=None,
    meas_noise_source: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None,
    rng_seed: int = 0,
    source: str = "synthetic",
    temp_c: Optional[float] = None,
) -> Dataset:
    """Roll the model forward and emit a ground-truth dataset.

    Additive Gaussian process noise is drawn from ``process_noise_cov`` (3x3,
    or None for none); measurement noise comes from ``meas_noise_source``, a
    callable ``(rng, n) -> samples`` (None for noiseless).  Bit-reproducible
    for a fixed ``rng_seed``.
    """
    currents = np.asarray(currents, dtype=float)
    n = currents.size
    if n == 0:
        raise ValueError("currents must be non-empty")
    rng = np.random.default_rng(rng_seed)
    q = None
    if process_noise_cov is not None:
        q = np.asarray(process_noise_cov, dtype=float)
        if q.shape != (3, 3):
            raise ValueError("process_noise_cov must be 3x3")
        if not np.any(q):
            q = None
    w = rng.multivariate_normal(np.zeros(3), q, size=n, method="cholesky") if q is not None else None
    r = meas_noise_source(rng, n) if meas_noise_source is not None else np.zeros(n)
    r = np.asarray(r, dtype=float)
    if r.shape != (n,):
        raise ValueError("measurement noise sampler returned the wrong shape")

    states = np.zeros((n, 3))
    voltage = np.zeros(n)
    clamp_count = 0
    s = BatteryState(soc=soc0)
    for k in range(n):
        states[k] = (s.soc, s.u1, s.u2)
        voltage[k] = measure_voltage(s, currents[k], p, ocv) + r[k]
        s = state_transition(s, currents[k], dt, p)
        if w is not None:
            soc = s.soc + w[k, 0]
            clipped = soc < 0.0 or soc > 1.0
            s = BatteryState(
                soc=min(max(soc, 0.0), 1.0),
                u1=s.u1 + w[k, 1],
                u2=s.u2 + w[k, 2],
                clamped=s.clamped or clipped,
            )
        clamp_count += s.clamped

    t = np.arange(n) * dt
    meta = {
        "source": source,
        "dt": dt,
        "seed": rng_seed,
        "soc_clamp_events": int(clamp_count),
    }
    if temp_c is not None:
        meta["temp_c"] = float(temp_c)
    return Dataset(
        t=t,
        current=currents.copy(),
        voltage=voltage,
        soc_true=states[:, 0],
        meta=meta,
        true_states=states,
    )


def _load_json_resource(name: str) -> dict:
    with resources.files("sockf.data").joinpath(name).open("r") as fh:
        return json.load(fh)


def load_ecm_params(name: str = "reference_cell") -> EcmParams:
    """Shipped parameter sets: ``reference_cell`` (fresh) or ``aged_cell``."""
    d = _load_json_resource(f"{name}.json")
    return EcmParams.from_ah(
        r0=d["r0"], r1=d["r1"], c1=d["c1"], r2=d["r2"], c2=d["c2"],
        q_ah=d["q_ah"], coulomb_eff=d.get("coulomb_eff", 1.0),
    )


def ecm_params_from_dict(d: dict) -> EcmParams:
    """Config-file form: q_ah in amp-hours at the boundary."""
    return EcmParams.from_ah(
        r0=float(d["r0"]), r1=float(d["r1"]), c1=float(d["c1"]),
        r2=float(d["r2"]), c2=float(d["c2"]),
        q_ah=float(d["q_ah"]), coulomb_eff=float(d.get("coulomb_eff", 1.0)),
    )


def load_ocv_curve(name: str = "ocv_reference") -> OcvCurve:
    d = _load_json_resource(f"{name}.json")
    return OcvCurve(coeffs=tuple(d["coeffs"]), soc_min=d["soc_min"], soc_max=d["soc_max"])


def ocv_curve_from_dict(d: dict) -> OcvCurve:
    return OcvCurve(
        coeffs=tuple(float(c) for c in d["coeffs"]),
        soc_min=float(d.get("soc_min", 0.0)),
        soc_max=float(d.get("soc_max", 1.0)),
    )


def generate_current_profile(
    kind: str, duration: float, dt: float, amplitude: float, rng_seed: int = 0
) -> np.ndarray:
    """Synthetic discharge-current traces (amps, discharge positive).

    ``constant``      flat at ``amplitude``.
    ``pulse``         100 s period, 50% duty discharge/rest alternation.
    ``urban_like``    low-frequency meander with frequent near-zero dwell,
                      magnitude capped at ``amplitude``.
    ``highway_like``  sustained high draw with rapid transients and brief
                      charge (negative) spikes, capped at ``amplitude``.
    """
    if duration < dt:
        raise ValueError("duration must be at least dt")
    n = int(round(duration / dt))
    t = np.arange(n) * dt
    rng = np.random.default_rng(rng_seed)

    if kind == "constant":
        return np.full(n, amplitude)
    if kind == "pulse":
        period = 100.0
        return np.where((t % period) < 0.5 * period, amplitude, 0.0)
    if kind == "urban_like":
        # OU-smoothed meander; dwell gate forces idle stretches.
        tau = 30.0
        rho = math.exp(-dt / tau)
        drive = rng.standard_normal(n)
        x = np.zeros(n)
        for k in range(1, n):
            x[k] = rho * x[k - 1] + math.sqrt(1.0 - rho * rho) * drive[k]
        gate_period = max(int(round(40.0 / dt)), 1)
        gates = rng.random(max(n // gate_period + 1, 1)) < 0.35
        dwell = np.repeat(gates, gate_period)[:n]
        profile = 0.55 * amplitude * np.abs(x) + 0.1 * amplitude
        profile[dwell] *= 0.02
        return np.clip(profile, -amplitude, amplitude)
    if kind == "highway_like":
        base = 0.7 * amplitude * np.ones(n)
        burst_period = max(int(round(15.0 / dt)), 1)
        n_bursts = max(n // burst_period, 1)
        bursts = np.repeat(rng.uniform(-0.4, 0.5, size=n_bursts + 1), burst_period)[:n]
        jitter = 0.1 * amplitude * rng.standard_normal(n)
        return np.clip(base + amplitude * bursts + jitter, -amplitude, amplitude)
    raise ValueError(f"unknown profile kind {kind!r}")
