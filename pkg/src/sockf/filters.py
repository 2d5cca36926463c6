"""Cubature/unscented filter family with a robust entropy-weighted update.

All variants share the same stepping interface.  The square-root cubature
filters propagate a Cholesky factor of the covariance; the robust variants
replace the least-squares measurement update with a fixed-point iteration
that reweights the whitened regression residuals through generalized
Gaussian kernels, so heavy-tailed measurement outliers are discounted
instead of ingested.

Residual convention: the update works on e = D - W x in coordinates
whitened by the block factor diag(B_p, B_r), so state and measurement
channels share a common scale and kernel bandwidths are comparable across
both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .criterion import (
    DEFAULT_SINGULARITY_EPS,
    GgdKernel,
    MixtureKernel,
    cost,
    kernel_weight_matrices,
)
from .numerics import (
    NotPositiveDefinite,
    RankDeficient,
    SquareRootFactor,
    cholesky_lower,
    psd_repair,
    tria,
)

# Fixed-point iterate norm beyond which the step is declared divergent.
DIVERGENCE_NORM = 1e6
# Weight matrices whose largest entry is below this are treated as fully
# underflowed (all residual pairs rejected at once).
WEIGHT_FLOOR = 0.0


class NumericBreakdown(RuntimeError):
    """The robust update's normal matrix was singular beyond recovery."""


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete model: ``transition(x, u, dt)`` and ``observation(x, u)``.

    ``q_cov`` and ``r_cov`` are the process and measurement covariances the
    filters assume; both must be symmetric positive definite.
    """

    n: int
    m: int
    transition: Callable[[np.ndarray, float, float], np.ndarray]
    observation: Callable[[np.ndarray, float], np.ndarray]
    q_cov: np.ndarray
    r_cov: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q_cov, dtype=float))
        r = np.atleast_2d(np.asarray(self.r_cov, dtype=float))
        for name, mat, dim in (("q_cov", q, self.n), ("r_cov", r, self.m)):
            if mat.shape != (dim, dim):
                raise ValueError(f"{name} must be {dim}x{dim}, got {mat.shape}")
            if not np.allclose(mat, mat.T, rtol=1e-12, atol=0.0):
                raise ValueError(f"{name} must be symmetric")
            if np.any(np.linalg.eigvalsh(mat) <= 0.0):
                raise ValueError(f"{name} must be positive definite")
        object.__setattr__(self, "q_cov", q)
        object.__setattr__(self, "r_cov", r)


@dataclass
class FilterDiagnostics:
    """Per-step bookkeeping: innovation, iteration count, and repair flags."""

    innovation: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fp_iterations: int = 0
    fp_cap_reached: bool = False
    fallback: bool = False
    cov_repaired: bool = False
    cost_trace: Optional[list] = None


@dataclass(frozen=True)
class FilterState:
    """Posterior mean plus the square-root covariance factor."""

    x_hat: np.ndarray
    sqrt_cov: SquareRootFactor
    diagnostics: FilterDiagnostics = field(default_factory=FilterDiagnostics)

    def __post_init__(self):
        x = np.asarray(self.x_hat, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("filter state mean must be finite")
        object.__setattr__(self, "x_hat", x)

    @property
    def covariance(self) -> np.ndarray:
        return self.sqrt_cov.reconstruct()


def init_filter_state(x0, p0) -> FilterState:
    return FilterState(x_hat=np.asarray(x0, dtype=float), sqrt_cov=cholesky_lower(p0))


# ---------------------------------------------------------------------------
# Variant configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GmmeeConfig:
    """Controls for the mixture-entropy fixed-point update.

    ``weighting`` selects how the pairwise kernel weights enter the normal
    equations: ``"diagonal"`` (default) uses each residual component's total
    kernel affinity to the others, which reduces exactly to the Kalman update
    under uniform weights; ``"laplacian"`` keeps the full pairwise matrix,
    which is shift-blind (it annihilates the all-ones direction) and is
    retained for comparison only.
    """

    mixture: MixtureKernel
    fp_tol: float = 1e-6
    fp_max_iter: int = 20
    singularity_eps: float = DEFAULT_SINGULARITY_EPS
    weighting: str = "diagonal"
    track_cost: bool = False

    def __post_init__(self):
        if self.fp_tol <= 0.0:
            raise ValueError("fp_tol must be positive")
        if self.fp_max_iter < 1:
            raise ValueError("fp_max_iter must be at least 1")
        if self.weighting not in ("diagonal", "laplacian"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


@dataclass(frozen=True)
class MccConfig:
    """Correntropy update: diagonal Gaussian self-weights on the residual."""

    bandwidth: float = 2.0
    fp_tol: float = 1e-6
    fp_max_iter: int = 20

    def __post_init__(self):
        if self.bandwidth <= 0.0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class UkfConfig:
    kappa: float = 0.0
    alpha: float = 1e-3
    beta: float = 2.0


@dataclass(frozen=True)
class CkfConfig:
    pass


@dataclass(frozen=True)
class SrckfConfig:
    pass


# ---------------------------------------------------------------------------
# Square-root cubature machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CubaturePointSet:
    """The 2n symmetric, equally weighted cubature generators.

    Column ``i + n`` is the negation of column ``i``; every point carries
    weight ``1 / (2n)``.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        n = pts.shape[0]
        if pts.shape != (n, 2 * n):
            raise ValueError(f"expected an n x 2n point matrix, got {pts.shape}")
        if not np.allclose(pts[:, n:], -pts[:, :n], rtol=0, atol=0):
            raise ValueError("cubature points must come in +/- pairs")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def weight(self) -> float:
        return 1.0 / (2 * self.n)


def cubature_point_set(n: int) -> CubaturePointSet:
    """Unit-axis generators scaled by sqrt(n), stacked with their negatives."""
    eye = math.sqrt(n) * np.eye(n)
    return CubaturePointSet(points=np.hstack([eye, -eye]))


def cubature_directions(n: int) -> np.ndarray:
    """Columns are the 2n cubature generators (see :func:`cubature_point_set`)."""
    return cubature_point_set(n).points


def srckf_predict(prev: FilterState, u_prev: float, dt: float, model: StateSpaceModel):
    """Time update.

    Returns ``(x_pred, sqrt_p_pred, chi_star)`` where ``chi_star`` is the
    weighted centered matrix of the propagated cubature points (n x 2n).
    """
    n = model.n
    xi = cubature_directions(n)
    bp = prev.sqrt_cov.entries
    pts = bp @ xi + prev.x_hat[:, None]
    prop = np.empty_like(pts)
    for i in range(2 * n):
        prop[:, i] = model.transition(pts[:, i], u_prev, dt)
    x_pred = prop.mean(axis=1)
    chi_star = (prop - x_pred[:, None]) / math.sqrt(2 * n)
    b_q = cholesky_lower(model.q_cov).entries
    sqrt_p_pred = tria(np.hstack([chi_star, b_q]))
    return x_pred, sqrt_p_pred, chi_star


@dataclass(frozen=True)
class MeasurementSetup:
    """Statistical linearization of the observation around the prediction."""

    y_pred: np.ndarray
    h_bar: np.ndarray
    b_tau: SquareRootFactor
    chi: np.ndarray
    zeta: np.ndarray
    p_xy: np.ndarray


def srckf_measurement_setup(
    x_pred: np.ndarray,
    sqrt_p_pred: SquareRootFactor,
    chi_star: np.ndarray,
    u: float,
    model: StateSpaceModel,
) -> MeasurementSetup:
    """Measurement-side quantities shared by every cubature update.

    Cubature points are regenerated from ``(x_pred, sqrt_p_pred)`` and the
    cross covariance pairs their centered spread with the measurement spread,
    which makes the pseudo-measurement matrix exact for affine observations.
    ``chi_star`` from the prediction stage is accepted for pipeline symmetry
    but the regenerated spread supersedes it here.
    """
    n, m = model.n, model.m
    bp = sqrt_p_pred.entries
    xi = cubature_directions(n)
    pts = bp @ xi + x_pred[:, None]
    ys = np.empty((m, 2 * n))
    for i in range(2 * n):
        ys[:, i] = model.observation(pts[:, i], u)
    y_pred = ys.mean(axis=1)
    chi = (pts - x_pred[:, None]) / math.sqrt(2 * n)
    zeta = (ys - y_pred[:, None]) / math.sqrt(2 * n)
    p_xy = chi @ zeta.T
    # h_bar = p_xy^T P_pred^{-1} via two triangular solves against the factor
    tmp = solve_triangular(bp, p_xy, lower=True)
    h_bar = solve_triangular(bp, tmp, lower=True, trans="T").T
    if np.any(np.abs(np.diag(bp)) < 1e-300):
        raise RankDeficient("predicted covariance factor is numerically singular")
    b_r = cholesky_lower(model.r_cov).entries
    b_tau = SquareRootFactor(
        np.block([[bp, np.zeros((n, m))], [np.zeros((m, n)), b_r]])
    )
    return MeasurementSetup(y_pred=y_pred, h_bar=h_bar, b_tau=b_tau, chi=chi, zeta=zeta, p_xy=p_xy)


def _factor_posterior(p: np.ndarray):
    """Cholesky with a PSD-projection fallback; returns (factor, repaired)."""
    try:
        return cholesky_lower(p), False
    except NotPositiveDefinite:
        return cholesky_lower(psd_repair(p)), True


def _joseph_posterior(k, h_bar, p_pred, r):
    n = p_pred.shape[0]
    ikh = np.eye(n) - k @ h_bar
    return ikh @ p_pred @ ikh.T + k @ r @ k.T


def _lsolve(b, mat):
    return solve_triangular(b, mat, lower=True)


def _ltsolve(b, mat):
    return solve_triangular(b, mat, lower=True, trans="T")


def _rsolve(mat, b):
    # mat @ b^{-1} for lower-triangular b
    return solve_triangular(b, mat.T, lower=True, trans="T").T


def _tilde_blocks(omega, bp, br, n):
    """Whiten the four blocks of an (n+m) weight matrix against bp/br."""
    oxx, ozx = omega[:n, :n], omega[:n, n:]
    oxz, ozz = omega[n:, :n], omega[n:, n:]
    p_xx = _ltsolve(bp, _rsolve(oxx, bp))
    p_zx = _ltsolve(bp, _rsolve(ozx, br))
    p_xz = _ltsolve(br, _rsolve(oxz, bp))
    p_zz = _ltsolve(br, _rsolve(ozz, br))
    return p_xx, p_zx, p_xz, p_zz


def _weighted_gain(omega, bp, br, h_bar, n):
    """Gain of the reweighted regression normal equations.

    Returns None when the normal matrix is not positive definite (all
    weights underflown), signaling the caller to fall back.
    """
    p_xx, p_zx, p_xz, p_zz = _tilde_blocks(omega, bp, br, n)
    mmat = p_xx + p_zx @ h_bar + h_bar.T @ p_xz + h_bar.T @ p_zz @ h_bar
    rhs = p_zx + h_bar.T @ p_zz
    try:
        lfac = np.linalg.cholesky(0.5 * (mmat + mmat.T))
    except np.linalg.LinAlgError:
        return None
    k = solve_triangular(
        lfac, solve_triangular(lfac, rhs, lower=True), lower=True, trans="T"
    )
    return k


def _kernel_scale(kernel: GgdKernel) -> float:
    """Leading gradient constant alpha / beta^alpha of one kernel.

    beta^alpha can underflow to zero for extreme bandwidths; the resulting
    infinite scale poisons the weight matrix and triggers the least-squares
    fallback downstream instead of raising here.
    """
    denom = kernel.beta**kernel.alpha
    if denom == 0.0 or not math.isfinite(denom):
        return math.inf
    return kernel.alpha / denom


def _omega_for_kernel(e, kernel, eps, weighting):
    kw = kernel_weight_matrices(e, kernel, eps)
    om = kw.lam_bar - kw.lam
    if weighting == "diagonal":
        om = np.diag(np.diag(om))
    return om


def gmmee_fixed_point_update(
    x_pred: np.ndarray,
    sqrt_p_pred: SquareRootFactor,
    y,
    y_pred: np.ndarray,
    h_bar: np.ndarray,
    b_tau: SquareRootFactor,
    cfg: GmmeeConfig,
) -> FilterState:
    """Robust measurement update by fixed-point reweighting.

    Starting from the prediction, residuals are whitened, kernel weights
    formed for both mixture components, and the weighted normal equations
    solved for a new gain until the posterior stops moving (relative change
    below ``fp_tol``) or the iteration cap is hit (flagged, not an error).
    A singular normal matrix or a diverging iterate downgrades the step to
    the plain least-squares gain and sets the fallback flag.
    """
    n = x_pred.size
    y = np.atleast_1d(np.asarray(y, dtype=float))
    m = y.size
    bp = sqrt_p_pred.entries
    br = b_tau.entries[n:, n:]
    r = br @ br.T
    p_pred = sqrt_p_pred.reconstruct()
    innovation = y - y_pred
    y_tilde = innovation + h_bar @ x_pred

    mk = cfg.mixture
    l1 = mk.eta * _kernel_scale(mk.k1)
    l2 = (1.0 - mk.eta) * _kernel_scale(mk.k2)

    diag = FilterDiagnostics(innovation=innovation, cost_trace=[] if cfg.track_cost else None)
    x = x_pred.copy()
    k = None
    fallback = False
    iterations = 0
    for iterations in range(1, cfg.fp_max_iter + 1):
        e_x = _lsolve(bp, x_pred - x)
        e_z = _lsolve(br, y_tilde - h_bar @ x)
        e = np.concatenate([e_x, e_z])
        if cfg.track_cost:
            diag.cost_trace.append(cost(e, mk))
        omega = np.zeros((n + m, n + m))
        # an infinite kernel scale times underflown weights yields nan,
        # which the finiteness check below routes into the fallback
        with np.errstate(invalid="ignore"):
            if l1 > 0.0:
                omega += l1 * _omega_for_kernel(e, mk.k1, cfg.singularity_eps, cfg.weighting)
            if l2 > 0.0:
                omega += l2 * _omega_for_kernel(e, mk.k2, cfg.singularity_eps, cfg.weighting)
        scale = np.max(np.abs(omega))
        if not np.isfinite(scale) or scale <= WEIGHT_FLOOR:
            fallback = True
            break
        k = _weighted_gain(omega / scale, bp, br, h_bar, n)
        if k is None:
            fallback = True
            break
        x_new = x_pred + k @ innovation
        if not np.all(np.isfinite(x_new)) or np.linalg.norm(x_new) > DIVERGENCE_NORM:
            fallback = True
            break
        step = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1e-12)
        x = x_new
        if step < cfg.fp_tol:
            break
    else:
        diag.fp_cap_reached = True

    if fallback or k is None:
        k = _weighted_gain(np.eye(n + m), bp, br, h_bar, n)
        if k is None:
            raise NumericBreakdown("least-squares fallback gain is singular")
        x = x_pred + k @ innovation
        diag.fallback = True

    diag.fp_iterations = iterations
    posterior = _joseph_posterior(k, h_bar, p_pred, r)
    factor, repaired = _factor_posterior(posterior)
    diag.cov_repaired = repaired
    return FilterState(x_hat=x, sqrt_cov=factor, diagnostics=diag)


def mcc_fixed_point_update(
    x_pred, sqrt_p_pred, y, y_pred, h_bar, b_tau, cfg: MccConfig
) -> FilterState:
    """Correntropy update: per-component Gaussian self-weights, same solver."""
    n = x_pred.size
    y = np.atleast_1d(np.asarray(y, dtype=float))
    m = y.size
    bp = sqrt_p_pred.entries
    br = b_tau.entries[n:, n:]
    r = br @ br.T
    p_pred = sqrt_p_pred.reconstruct()
    innovation = y - y_pred
    y_tilde = innovation + h_bar @ x_pred

    diag = FilterDiagnostics(innovation=innovation)
    x = x_pred.copy()
    k = None
    fallback = False
    iterations = 0
    two_sigma_sq = 2.0 * cfg.bandwidth**2
    for iterations in range(1, cfg.fp_max_iter + 1):
        e_x = _lsolve(bp, x_pred - x)
        e_z = _lsolve(br, y_tilde - h_bar @ x)
        e = np.concatenate([e_x, e_z])
        t = e**2 / two_sigma_sq
        w = np.where(t > 700.0, 0.0, np.exp(np.minimum(t, 700.0) * -1.0))
        scale = w.max()
        if scale <= 0.0 or not np.isfinite(scale):
            fallback = True
            break
        k = _weighted_gain(np.diag(w / scale), bp, br, h_bar, n)
        if k is None:
            fallback = True
            break
        x_new = x_pred + k @ innovation
        if not np.all(np.isfinite(x_new)) or np.linalg.norm(x_new) > DIVERGENCE_NORM:
            fallback = True
            break
        step = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1e-12)
        x = x_new
        if step < cfg.fp_tol:
            break
    else:
        diag.fp_cap_reached = True

    if fallback or k is None:
        k = _weighted_gain(np.eye(n + m), bp, br, h_bar, n)
        if k is None:
            raise NumericBreakdown("least-squares fallback gain is singular")
        x = x_pred + k @ innovation
        diag.fallback = True

    diag.fp_iterations = iterations
    posterior = _joseph_posterior(k, h_bar, p_pred, r)
    factor, repaired = _factor_posterior(posterior)
    diag.cov_repaired = repaired
    return FilterState(x_hat=x, sqrt_cov=factor, diagnostics=diag)


def _srckf_update(x_pred, sqrt_p_pred, setup: MeasurementSetup, y, model) -> FilterState:
    """Textbook square-root measurement update."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    b_r = cholesky_lower(model.r_cov).entries
    s_yy = tria(np.hstack([setup.zeta, b_r])).entries
    k = solve_triangular(
        s_yy, solve_triangular(s_yy, setup.p_xy.T, lower=True), lower=True, trans="T"
    ).T
    innovation = y - setup.y_pred
    x = x_pred + k @ innovation
    factor = tria(np.hstack([setup.chi - k @ setup.zeta, k @ b_r]))
    return FilterState(
        x_hat=x,
        sqrt_cov=factor,
        diagnostics=FilterDiagnostics(innovation=innovation, fp_iterations=0),
    )


# ---------------------------------------------------------------------------
# Full steps
# ---------------------------------------------------------------------------


def srckf_step(state, u_prev, u, y, dt, model, cfg: SrckfConfig = SrckfConfig()) -> FilterState:
    x_pred, sqrt_p_pred, chi_star = srckf_predict(state, u_prev, dt, model)
    setup = srckf_measurement_setup(x_pred, sqrt_p_pred, chi_star, u, model)
    return _srckf_update(x_pred, sqrt_p_pred, setup, y, model)


def gmmee_srckf_step(state, u_prev, u, y, dt, model, cfg: GmmeeConfig) -> FilterState:
    x_pred, sqrt_p_pred, chi_star = srckf_predict(state, u_prev, dt, model)
    setup = srckf_measurement_setup(x_pred, sqrt_p_pred, chi_star, u, model)
    return gmmee_fixed_point_update(
        x_pred, sqrt_p_pred, y, setup.y_pred, setup.h_bar, setup.b_tau, cfg
    )


def mcc_ckf_step(state, u_prev, u, y, dt, model, cfg: MccConfig) -> FilterState:
    x_pred, sqrt_p_pred, chi_star = srckf_predict(state, u_prev, dt, model)
    setup = srckf_measurement_setup(x_pred, sqrt_p_pred, chi_star, u, model)
    return mcc_fixed_point_update(
        x_pred, sqrt_p_pred, y, setup.y_pred, setup.h_bar, setup.b_tau, cfg
    )


def ckf_step(state, u_prev, u, y, dt, model, cfg: CkfConfig = CkfConfig()) -> FilterState:
    """Cubature filter propagating the full covariance (with PSD repair)."""
    n, m = model.n, model.m
    p = state.sqrt_cov.reconstruct()
    xi = cubature_directions(n)
    bp = cholesky_lower(p).entries
    pts = bp @ xi + state.x_hat[:, None]
    prop = np.empty_like(pts)
    for i in range(2 * n):
        prop[:, i] = model.transition(pts[:, i], u_prev, dt)
    x_pred = prop.mean(axis=1)
    dev = prop - x_pred[:, None]
    p_pred = dev @ dev.T / (2 * n) + model.q_cov

    bp_pred = cholesky_lower(p_pred).entries
    pts = bp_pred @ xi + x_pred[:, None]
    ys = np.empty((m, 2 * n))
    for i in range(2 * n):
        ys[:, i] = model.observation(pts[:, i], u)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y_pred = ys.mean(axis=1)
    dev_x = pts - x_pred[:, None]
    dev_y = ys - y_pred[:, None]
    p_yy = dev_y @ dev_y.T / (2 * n) + model.r_cov
    p_xy = dev_x @ dev_y.T / (2 * n)
    k = np.linalg.solve(p_yy.T, p_xy.T).T
    innovation = y - y_pred
    x = x_pred + k @ innovation
    p_post = psd_repair(p_pred - k @ p_yy @ k.T)
    return FilterState(
        x_hat=x,
        sqrt_cov=cholesky_lower(p_post),
        diagnostics=FilterDiagnostics(innovation=innovation),
    )


def ukf_step(state, u_prev, u, y, dt, model, cfg: UkfConfig = UkfConfig()) -> FilterState:
    """Scaled sigma-point filter (2n+1 points)."""
    n, m = model.n, model.m
    lam = cfg.alpha**2 * (n + cfg.kappa) - n
    gamma = math.sqrt(n + lam)
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = lam / (n + lam) + (1.0 - cfg.alpha**2 + cfg.beta)

    def sigma_points(x, p):
        s = cholesky_lower(p).entries
        pts = np.empty((n, 2 * n + 1))
        pts[:, 0] = x
        pts[:, 1 : n + 1] = x[:, None] + gamma * s
        pts[:, n + 1 :] = x[:, None] - gamma * s
        return pts

    p = state.sqrt_cov.reconstruct()
    pts = sigma_points(state.x_hat, p)
    prop = np.empty_like(pts)
    for i in range(2 * n + 1):
        prop[:, i] = model.transition(pts[:, i], u_prev, dt)
    x_pred = prop @ wm
    dev = prop - x_pred[:, None]
    p_pred = (dev * wc) @ dev.T + model.q_cov

    pts = sigma_points(x_pred, p_pred)
    ys = np.empty((m, 2 * n + 1))
    for i in range(2 * n + 1):
        ys[:, i] = model.observation(pts[:, i], u)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y_pred = ys @ wm
    dev_x = pts - x_pred[:, None]
    dev_y = ys - y_pred[:, None]
    p_yy = (dev_y * wc) @ dev_y.T + model.r_cov
    p_xy = (dev_x * wc) @ dev_y.T
    k = np.linalg.solve(p_yy.T, p_xy.T).T
    innovation = y - y_pred
    x = x_pred + k @ innovation
    p_post = p_pred - k @ p_yy @ k.T
    factor, repaired = _factor_posterior(p_post)
    return FilterState(
        x_hat=x,
        sqrt_cov=factor,
        diagnostics=FilterDiagnostics(innovation=innovation, cov_repaired=repaired),
    )


_STEP_DISPATCH = {
    GmmeeConfig: gmmee_srckf_step,
    MccConfig: mcc_ckf_step,
    UkfConfig: ukf_step,
    CkfConfig: ckf_step,
    SrckfConfig: srckf_step,
}


def filter_step(state, u_prev, u, y, dt, model, config) -> FilterState:
    """Advance one measurement cycle with the variant chosen by ``config``.

    ``u_prev`` drives the time update (the input held over the last sample
    interval); ``u`` enters the observation at the new sample.
    """
    step = _STEP_DISPATCH.get(type(config))
    if step is None:
        raise TypeError(f"unsupported filter config {type(config).__name__}")
    return step(state, u_prev, u, y, dt, model, config)
