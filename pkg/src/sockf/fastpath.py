"""JIT-compiled whole-trace filter kernels for the battery model.

The per-step filter math dominates benchmark runtime (Monte Carlo sweeps and
kernel tuning run hundreds of full traces), so the battery-specialized inner
loops here carry ``numba.njit``.  Setting the environment variable
``SOCKF_PURE_NUMPY=1`` (or running without numba installed) keeps the exact
same code but skips compilation, giving a slow pure-numpy/python fallback;
``benchmarks/bench_kernels.py`` compares the two lanes.

State layout is fixed at n=3 (soc, u1, u2) with a scalar measurement.
Parameters are packed into flat float64 arrays so every kernel is cacheable:

- ``par``  = [r0, r1, c1, r2, c2, q_max_coulomb, coulomb_eff]
- ``coef`` = 7 ascending OCV polynomial coefficients
"""

from __future__ import annotations

import math
import os

import numpy as np

NUMBA_ENV_FLAG = "SOCKF_PURE_NUMPY"

if os.environ.get(NUMBA_ENV_FLAG, "") == "1":
    JIT_ENABLED = False
else:
    try:
        import numba  # noqa: F401

        JIT_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        JIT_ENABLED = False

if JIT_ENABLED:
    from numba import njit
else:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


N_STATE = 3
SQRT_N = math.sqrt(3.0)
INV_2N = 1.0 / 6.0
SQRT_2N = math.sqrt(6.0)
# Fixed-point iterate norm beyond which the robust update falls back.
DIVERGENCE_NORM = 1e6

# Variant codes used by run_trace.
VARIANT_SRCKF = 0
VARIANT_CKF = 1
VARIANT_UKF = 2
VARIANT_MCC = 3
VARIANT_GMMEE = 4


@njit(cache=True)
def _f(x, u, dt, par):
    """Exact-discretization battery transition (unclamped)."""
    out = np.empty(3)
    a1 = math.exp(-dt / (par[1] * par[2]))
    a2 = math.exp(-dt / (par[3] * par[4]))
    out[0] = x[0] - par[6] * dt * u / par[5]
    out[1] = a1 * x[1] + par[1] * (1.0 - a1) * u
    out[2] = a2 * x[2] + par[3] * (1.0 - a2) * u
    return out


@njit(cache=True)
def _h(x, u, par, coef):
    """Terminal voltage: OCV(soc) - I*R0 - u1 - u2."""
    v = coef[6]
    for i in range(5, -1, -1):
        v = v * x[0] + coef[i]
    return v - u * par[0] - x[1] - x[2]


@njit(cache=True)
def _chol(p):
    """Lower Cholesky with success flag (no exceptions in compiled code)."""
    n = p.shape[0]
    l = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = p[i, j]
            for k in range(j):
                s -= l[i, k] * l[j, k]
            if i == j:
                if s <= 0.0 or not math.isfinite(s):
                    return l, False
                l[i, i] = math.sqrt(s)
            else:
                l[i, j] = s / l[j, j]
    return l, True


@njit(cache=True)
def _chol_jitter(p):
    """Cholesky with symmetrization and one jitter retry."""
    n = p.shape[0]
    sym = 0.5 * (p + p.T)
    l, ok = _chol(sym)
    if ok:
        return l, True
    tr = 0.0
    for i in range(n):
        tr += sym[i, i]
    jitter = 1e-10 * max(tr / n, 1.0)
    for i in range(n):
        sym[i, i] += jitter
    return _chol(sym)


@njit(cache=True)
def _psd_repair(p):
    """Symmetrize and clamp eigenvalues to 1e-12."""
    sym = 0.5 * (p + p.T)
    w, v = np.linalg.eigh(sym)
    for i in range(w.size):
        if w[i] < 1e-12:
            w[i] = 1e-12
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


@njit(cache=True)
def _factor(p):
    """Cholesky factor with PSD-repair fallback; returns (L, repaired)."""
    l, ok = _chol_jitter(p)
    if ok:
        return l, False
    l, ok = _chol(_psd_repair(p))
    return l, True


@njit(cache=True)
def _tria(a):
    """Lower-triangular S with S S^T = A A^T, non-negative diagonal."""
    r = np.linalg.qr(np.ascontiguousarray(a.T))[1]
    s = r.T.copy()
    n = s.shape[0]
    for j in range(n):
        if s[j, j] < 0.0:
            for i in range(n):
                s[i, j] = -s[i, j]
    return s


@njit(cache=True)
def _lsolve_vec(l, b):
    """Solve L x = b for lower-triangular L."""
    n = b.size
    x = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= l[i, k] * x[k]
        x[i] = s / l[i, i]
    return x


@njit(cache=True)
def _ltsolve_vec(l, b):
    """Solve L^T x = b for lower-triangular L."""
    n = b.size
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= l[k, i] * x[k]
        x[i] = s / l[i, i]
    return x


@njit(cache=True)
def _whiten_sandwich(l, omega):
    """L^{-T} Omega L^{-1} for lower-triangular L (small n)."""
    n = omega.shape[0]
    a1 = np.empty((n, n))
    for c in range(n):
        a1[:, c] = _ltsolve_vec(l, omega[:, c])
    out = np.empty((n, n))
    for c in range(n):
        out[:, c] = _ltsolve_vec(l, a1[c, :])
    return out.T.copy()


@njit(cache=True)
def _predict(x, bp, u_prev, dt, par, bq):
    """Square-root time update; returns (x_pred, bp_pred, chi_star)."""
    prop = np.empty((3, 6))
    for i in range(3):
        xp = np.empty(3)
        xm = np.empty(3)
        for r in range(3):
            xp[r] = x[r] + SQRT_N * bp[r, i]
            xm[r] = x[r] - SQRT_N * bp[r, i]
        prop[:, i] = _f(xp, u_prev, dt, par)
        prop[:, i + 3] = _f(xm, u_prev, dt, par)
    x_pred = np.zeros(3)
    for i in range(6):
        for r in range(3):
            x_pred[r] += prop[r, i]
    for r in range(3):
        x_pred[r] *= INV_2N
    chi_star = np.empty((3, 6))
    for i in range(6):
        for r in range(3):
            chi_star[r, i] = (prop[r, i] - x_pred[r]) / SQRT_2N
    a = np.empty((3, 9))
    a[:, :6] = chi_star
    a[:, 6:] = bq
    bp_pred = _tria(a)
    return x_pred, bp_pred, chi_star


@njit(cache=True)
def _measure_setup(x_pred, bp_pred, u, par, coef):
    """Returns (y_pred, hbar, chi, zeta) from regenerated cubature points."""
    chi = np.empty((3, 6))
    ys = np.empty(6)
    for i in range(3):
        xp = np.empty(3)
        xm = np.empty(3)
        for r in range(3):
            xp[r] = x_pred[r] + SQRT_N * bp_pred[r, i]
            xm[r] = x_pred[r] - SQRT_N * bp_pred[r, i]
        ys[i] = _h(xp, u, par, coef)
        ys[i + 3] = _h(xm, u, par, coef)
        for r in range(3):
            chi[r, i] = (xp[r] - x_pred[r]) / SQRT_2N
            chi[r, i + 3] = (xm[r] - x_pred[r]) / SQRT_2N
    y_pred = 0.0
    for i in range(6):
        y_pred += ys[i]
    y_pred *= INV_2N
    zeta = np.empty(6)
    for i in range(6):
        zeta[i] = (ys[i] - y_pred) / SQRT_2N
    p_xy = np.zeros(3)
    for r in range(3):
        for i in range(6):
            p_xy[r] += chi[r, i] * zeta[i]
    hbar = _ltsolve_vec(bp_pred, _lsolve_vec(bp_pred, p_xy))
    return y_pred, hbar, chi, zeta


@njit(cache=True)
def _srckf_update(x_pred, bp_pred, chi, zeta, p_xy, y, y_pred, r_std):
    """Textbook square-root measurement update (scalar measurement)."""
    s_row = np.empty((1, 7))
    s_row[0, :6] = zeta
    s_row[0, 6] = r_std
    s_yy = _tria(s_row)[0, 0]
    k = p_xy / (s_yy * s_yy)
    innov = y - y_pred
    x = np.empty(3)
    for r in range(3):
        x[r] = x_pred[r] + k[r] * innov
    a = np.empty((3, 7))
    for r in range(3):
        for i in range(6):
            a[r, i] = chi[r, i] - k[r] * zeta[i]
        a[r, 6] = k[r] * r_std
    return x, _tria(a)


@njit(cache=True)
def _ggd_lam(d, alpha, log_norm, inv_beta, eps):
    """One pairwise weight: G(d) * max(d, eps)^(alpha-2) for d = |e_j - e_i|."""
    log_val = log_norm - (d * inv_beta) ** alpha
    if log_val < -700.0:
        return 0.0
    g = math.exp(log_val)
    base = d if d > eps else eps
    return g * base ** (alpha - 2.0)


@njit(cache=True)
def _omega_accum(omega, e, weight, alpha, beta, eps, laplacian):
    """Accumulate weight * (row-sum-diagonal minus pairwise) for one kernel."""
    L = e.size
    log_norm = math.log(alpha) - math.log(2.0 * beta) - math.lgamma(1.0 / alpha)
    inv_beta = 1.0 / beta
    for i in range(L):
        row = 0.0
        for j in range(L):
            if j == i:
                continue
            lam = _ggd_lam(abs(e[j] - e[i]), alpha, log_norm, inv_beta, eps)
            row += lam
            if laplacian:
                omega[i, j] -= weight * lam
        omega[i, i] += weight * row


@njit(cache=True)
def _regression_gain(omega, bp_pred, hbar, r_std):
    """Gain of the weighted whitened regression; ok=False when singular."""
    oxx = omega[:3, :3].copy()
    ozx = omega[:3, 3].copy()
    ozz = omega[3, 3]
    p_xx = _whiten_sandwich(bp_pred, oxx)
    p_zx = _ltsolve_vec(bp_pred, ozx) / r_std
    p_zz = ozz / (r_std * r_std)
    m = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            m[i, j] = (
                p_xx[i, j]
                + p_zx[i] * hbar[j]
                + hbar[i] * p_zx[j]
                + p_zz * hbar[i] * hbar[j]
            )
    lfac, ok = _chol(0.5 * (m + m.T))
    if not ok:
        return np.zeros(3), False
    rhs = np.empty(3)
    for i in range(3):
        rhs[i] = p_zx[i] + p_zz * hbar[i]
    k = _ltsolve_vec(lfac, _lsolve_vec(lfac, rhs))
    return k, True


@njit(cache=True)
def _joseph(k, hbar, p_pred, r_var):
    ikh = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            ikh[i, j] = (1.0 if i == j else 0.0) - k[i] * hbar[j]
    p = ikh @ p_pred @ ikh.T
    for i in range(3):
        for j in range(3):
            p[i, j] += r_var * k[i] * k[j]
    return p


@njit(cache=True)
def _gmmee_update(
    x_pred, bp_pred, y, y_pred, hbar, r_std,
    eta, a1, b1, a2, b2, fp_tol, fp_max_iter, eps, laplacian,
):
    """Fixed-point entropy-weighted update.

    Returns (x, p_post, iterations, fallback, cap_reached).
    """
    r_var = r_std * r_std
    innov = y - y_pred
    ytil = innov
    for r in range(3):
        ytil += hbar[r] * x_pred[r]
    # beta**alpha underflow poisons the weights -> least-squares fallback
    d1 = b1**a1
    d2 = b2**a2
    l1 = eta * a1 / d1 if d1 > 0.0 else (0.0 if eta == 0.0 else np.inf)
    l2 = (1.0 - eta) * a2 / d2 if d2 > 0.0 else (0.0 if eta == 1.0 else np.inf)
    x = x_pred.copy()
    k = np.zeros(3)
    have_gain = False
    fallback = False
    cap = False
    iters = 0
    e = np.empty(4)
    for it in range(1, fp_max_iter + 1):
        iters = it
        dx = np.empty(3)
        for r in range(3):
            dx[r] = x_pred[r] - x[r]
        ex = _lsolve_vec(bp_pred, dx)
        hz = 0.0
        for r in range(3):
            hz += hbar[r] * x[r]
        for r in range(3):
            e[r] = ex[r]
        e[3] = (ytil - hz) / r_std
        omega = np.zeros((4, 4))
        if l1 > 0.0:
            _omega_accum(omega, e, l1, a1, b1, eps, laplacian)
        if l2 > 0.0:
            _omega_accum(omega, e, l2, a2, b2, eps, laplacian)
        scale = 0.0
        for i in range(4):
            for j in range(4):
                if abs(omega[i, j]) > scale:
                    scale = abs(omega[i, j])
        if scale <= 0.0 or not math.isfinite(scale):
            fallback = True
            break
        for i in range(4):
            for j in range(4):
                omega[i, j] /= scale
        k, ok = _regression_gain(omega, bp_pred, hbar, r_std)
        if not ok:
            fallback = True
            break
        have_gain = True
        x_new = np.empty(3)
        norm_new = 0.0
        delta = 0.0
        norm_old = 0.0
        for r in range(3):
            x_new[r] = x_pred[r] + k[r] * innov
            norm_new += x_new[r] * x_new[r]
            delta += (x_new[r] - x[r]) ** 2
            norm_old += x[r] * x[r]
        if not math.isfinite(norm_new) or norm_new > DIVERGENCE_NORM**2:
            fallback = True
            break
        x = x_new
        if math.sqrt(delta) / max(math.sqrt(norm_old), 1e-12) < fp_tol:
            break
        if it == fp_max_iter:
            cap = True

    if fallback or not have_gain:
        eye = np.eye(4)
        k, ok = _regression_gain(eye, bp_pred, hbar, r_std)
        for r in range(3):
            x[r] = x_pred[r] + k[r] * innov
        fallback = True
    p_pred = bp_pred @ bp_pred.T
    p_post = _joseph(k, hbar, p_pred, r_var)
    return x, p_post, iters, fallback, cap


@njit(cache=True)
def _mcc_update(x_pred, bp_pred, y, y_pred, hbar, r_std, bandwidth, fp_tol, fp_max_iter):
    """Correntropy update: diagonal Gaussian self-weights on the residual."""
    r_var = r_std * r_std
    innov = y - y_pred
    ytil = innov
    for r in range(3):
        ytil += hbar[r] * x_pred[r]
    x = x_pred.copy()
    k = np.zeros(3)
    have_gain = False
    fallback = False
    cap = False
    iters = 0
    two_sq = 2.0 * bandwidth * bandwidth
    for it in range(1, fp_max_iter + 1):
        iters = it
        dx = np.empty(3)
        for r in range(3):
            dx[r] = x_pred[r] - x[r]
        ex = _lsolve_vec(bp_pred, dx)
        hz = 0.0
        for r in range(3):
            hz += hbar[r] * x[r]
        omega = np.zeros((4, 4))
        wmax = 0.0
        for i in range(4):
            ei = ex[i] if i < 3 else (ytil - hz) / r_std
            t = ei * ei / two_sq
            w = math.exp(-t) if t < 700.0 else 0.0
            omega[i, i] = w
            if w > wmax:
                wmax = w
        if wmax <= 0.0:
            fallback = True
            break
        for i in range(4):
            omega[i, i] /= wmax
        k, ok = _regression_gain(omega, bp_pred, hbar, r_std)
        if not ok:
            fallback = True
            break
        have_gain = True
        x_new = np.empty(3)
        delta = 0.0
        norm_old = 0.0
        norm_new = 0.0
        for r in range(3):
            x_new[r] = x_pred[r] + k[r] * innov
            delta += (x_new[r] - x[r]) ** 2
            norm_old += x[r] * x[r]
            norm_new += x_new[r] * x_new[r]
        if not math.isfinite(norm_new) or norm_new > DIVERGENCE_NORM**2:
            fallback = True
            break
        x = x_new
        if math.sqrt(delta) / max(math.sqrt(norm_old), 1e-12) < fp_tol:
            break
        if it == fp_max_iter:
            cap = True
    if fallback or not have_gain:
        eye = np.eye(4)
        k, _ = _regression_gain(eye, bp_pred, hbar, r_std)
        for r in range(3):
            x[r] = x_pred[r] + k[r] * innov
        fallback = True
    p_pred = bp_pred @ bp_pred.T
    p_post = _joseph(k, hbar, p_pred, r_var)
    return x, p_post, iters, fallback, cap


@njit(cache=True)
def _ckf_step(x, p, u_prev, u, y, dt, par, coef, q, r_var):
    """Full-covariance cubature step with PSD repair."""
    bp, ok = _chol_jitter(p)
    if not ok:
        bp, _ = _chol(_psd_repair(p))
    prop = np.empty((3, 6))
    for i in range(3):
        xp = np.empty(3)
        xm = np.empty(3)
        for r in range(3):
            xp[r] = x[r] + SQRT_N * bp[r, i]
            xm[r] = x[r] - SQRT_N * bp[r, i]
        prop[:, i] = _f(xp, u_prev, dt, par)
        prop[:, i + 3] = _f(xm, u_prev, dt, par)
    x_pred = np.zeros(3)
    for i in range(6):
        for r in range(3):
            x_pred[r] += prop[r, i]
    for r in range(3):
        x_pred[r] *= INV_2N
    p_pred = q.copy()
    for i in range(6):
        for a in range(3):
            for b in range(3):
                p_pred[a, b] += (prop[a, i] - x_pred[a]) * (prop[b, i] - x_pred[b]) * INV_2N

    bpp, ok = _chol_jitter(p_pred)
    if not ok:
        bpp, _ = _chol(_psd_repair(p_pred))
    ys = np.empty(6)
    pts = np.empty((3, 6))
    for i in range(3):
        for r in range(3):
            pts[r, i] = x_pred[r] + SQRT_N * bpp[r, i]
            pts[r, i + 3] = x_pred[r] - SQRT_N * bpp[r, i]
    for i in range(6):
        ys[i] = _h(pts[:, i], u, par, coef)
    y_pred = 0.0
    for i in range(6):
        y_pred += ys[i]
    y_pred *= INV_2N
    p_yy = r_var
    p_xy = np.zeros(3)
    for i in range(6):
        dy = ys[i] - y_pred
        p_yy += dy * dy * INV_2N
        for r in range(3):
            p_xy[r] += (pts[r, i] - x_pred[r]) * dy * INV_2N
    k = p_xy / p_yy
    innov = y - y_pred
    x_new = np.empty(3)
    for r in range(3):
        x_new[r] = x_pred[r] + k[r] * innov
    p_post = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            p_post[a, b] = p_pred[a, b] - k[a] * p_yy * k[b]
    return x_new, _psd_repair(p_post)


@njit(cache=True)
def _ukf_step(x, p, u_prev, u, y, dt, par, coef, q, r_var, kappa, alpha, beta):
    """Scaled sigma-point step (2n+1 points)."""
    n = 3
    lam = alpha * alpha * (n + kappa) - n
    gamma = math.sqrt(n + lam)
    wm0 = lam / (n + lam)
    wc0 = wm0 + 1.0 - alpha * alpha + beta
    wi = 1.0 / (2.0 * (n + lam))

    s, ok = _chol_jitter(p)
    if not ok:
        s, _ = _chol(_psd_repair(p))
    prop = np.empty((3, 7))
    pt = np.empty(3)
    for r in range(3):
        pt[r] = x[r]
    prop[:, 0] = _f(pt, u_prev, dt, par)
    for i in range(3):
        for r in range(3):
            pt[r] = x[r] + gamma * s[r, i]
        prop[:, 1 + i] = _f(pt, u_prev, dt, par)
        for r in range(3):
            pt[r] = x[r] - gamma * s[r, i]
        prop[:, 4 + i] = _f(pt, u_prev, dt, par)
    x_pred = np.zeros(3)
    for r in range(3):
        x_pred[r] = wm0 * prop[r, 0]
        for i in range(1, 7):
            x_pred[r] += wi * prop[r, i]
    p_pred = q.copy()
    for i in range(7):
        w = wc0 if i == 0 else wi
        for a in range(3):
            for b in range(3):
                p_pred[a, b] += w * (prop[a, i] - x_pred[a]) * (prop[b, i] - x_pred[b])

    s, ok = _chol_jitter(p_pred)
    if not ok:
        s, _ = _chol(_psd_repair(p_pred))
    pts = np.empty((3, 7))
    for r in range(3):
        pts[r, 0] = x_pred[r]
    for i in range(3):
        for r in range(3):
            pts[r, 1 + i] = x_pred[r] + gamma * s[r, i]
            pts[r, 4 + i] = x_pred[r] - gamma * s[r, i]
    ys = np.empty(7)
    for i in range(7):
        ys[i] = _h(pts[:, i], u, par, coef)
    y_pred = wm0 * ys[0]
    for i in range(1, 7):
        y_pred += wi * ys[i]
    p_yy = r_var
    p_xy = np.zeros(3)
    for i in range(7):
        w = wc0 if i == 0 else wi
        dy = ys[i] - y_pred
        p_yy += w * dy * dy
        for r in range(3):
            p_xy[r] += w * (pts[r, i] - x_pred[r]) * dy
    k = p_xy / p_yy
    innov = y - y_pred
    x_new = np.empty(3)
    for r in range(3):
        x_new[r] = x_pred[r] + k[r] * innov
    p_post = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            p_post[a, b] = p_pred[a, b] - k[a] * p_yy * k[b]
    return x_new, p_post


@njit(cache=True)
def run_trace(
    variant,
    currents,
    voltages,
    dt,
    x0,
    p0,
    par,
    coef,
    q,
    r_var,
    eta,
    a1,
    b1,
    a2,
    b2,
    fp_tol,
    fp_max_iter,
    eps,
    laplacian,
    mcc_bandwidth,
    ukf_kappa,
    ukf_alpha,
    ukf_beta,
):
    """Run one filter over a full trace; estimates[0] is the initial state.

    Returns (estimates (N,3), fallback_count, cap_count, iter_total).
    """
    n_steps = currents.size
    est = np.empty((n_steps, 3))
    est[0] = x0
    r_std = math.sqrt(r_var)
    bq, _ = _chol_jitter(q)
    fallback_count = 0
    cap_count = 0
    iter_total = 0

    if variant == VARIANT_CKF or variant == VARIANT_UKF:
        x = x0.copy()
        p = p0.copy()
        for k in range(1, n_steps):
            if variant == VARIANT_CKF:
                x, p = _ckf_step(
                    x, p, currents[k - 1], currents[k], voltages[k], dt, par, coef, q, r_var
                )
            else:
                x, p = _ukf_step(
                    x, p, currents[k - 1], currents[k], voltages[k], dt, par, coef,
                    q, r_var, ukf_kappa, ukf_alpha, ukf_beta,
                )
            est[k] = x
        return est, fallback_count, cap_count, iter_total

    x = x0.copy()
    bp, ok = _chol_jitter(p0)
    if not ok:
        bp, _ = _chol(_psd_repair(p0))
    for k in range(1, n_steps):
        x_pred, bp_pred, chi_star = _predict(x, bp, currents[k - 1], dt, par, bq)
        y_pred, hbar, chi, zeta = _measure_setup(x_pred, bp_pred, currents[k], par, coef)
        if variant == VARIANT_SRCKF:
            p_xy = np.zeros(3)
            for r in range(3):
                for i in range(6):
                    p_xy[r] += chi[r, i] * zeta[i]
            x, bp = _srckf_update(x_pred, bp_pred, chi, zeta, p_xy, voltages[k], y_pred, r_std)
        else:
            if variant == VARIANT_GMMEE:
                x, p_post, iters, fb, cap = _gmmee_update(
                    x_pred, bp_pred, voltages[k], y_pred, hbar, r_std,
                    eta, a1, b1, a2, b2, fp_tol, fp_max_iter, eps, laplacian,
                )
            else:
                x, p_post, iters, fb, cap = _mcc_update(
                    x_pred, bp_pred, voltages[k], y_pred, hbar, r_std,
                    mcc_bandwidth, fp_tol, fp_max_iter,
                )
            iter_total += iters
            if fb:
                fallback_count += 1
            if cap:
                cap_count += 1
            bp, repaired = _factor(p_post)
        est[k] = x
    return est, fallback_count, cap_count, iter_total


def step_once(
    variant,
    x,
    cov,
    u_prev,
    u,
    y,
    dt,
    par,
    coef,
    q,
    bq,
    r_var,
    kwargs,
):
    """Python-level single step over the compiled kernels.

    ``cov`` is the square-root factor for the SR variants and the full
    covariance for CKF/UKF.  Used by the harness when per-step wall-clock
    timing is wanted; returns (x, cov, fallback, cap_reached).
    """
    r_std = math.sqrt(r_var)
    if variant == VARIANT_CKF:
        x, p = _ckf_step(x, cov, u_prev, u, y, dt, par, coef, q, r_var)
        return x, p, False, False
    if variant == VARIANT_UKF:
        x, p = _ukf_step(
            x, cov, u_prev, u, y, dt, par, coef, q, r_var,
            kwargs["ukf_kappa"], kwargs["ukf_alpha"], kwargs["ukf_beta"],
        )
        return x, p, False, False
    x_pred, bp_pred, _chi_star = _predict(x, cov, u_prev, dt, par, bq)
    y_pred, hbar, chi, zeta = _measure_setup(x_pred, bp_pred, u, par, coef)
    if variant == VARIANT_SRCKF:
        p_xy = chi @ zeta
        x, bp = _srckf_update(x_pred, bp_pred, chi, zeta, p_xy, y, y_pred, r_std)
        return x, bp, False, False
    if variant == VARIANT_GMMEE:
        x, p_post, _iters, fb, cap = _gmmee_update(
            x_pred, bp_pred, y, y_pred, hbar, r_std,
            kwargs["eta"], kwargs["a1"], kwargs["b1"], kwargs["a2"], kwargs["b2"],
            kwargs["fp_tol"], kwargs["fp_max_iter"], kwargs["eps"], kwargs["laplacian"],
        )
    else:
        x, p_post, _iters, fb, cap = _mcc_update(
            x_pred, bp_pred, y, y_pred, hbar, r_std,
            kwargs["mcc_bandwidth"], kwargs["fp_tol"], kwargs["fp_max_iter"],
        )
    bp, _repaired = _factor(p_post)
    return x, bp, fb, cap


def warmup() -> None:
    """Trigger compilation of the full kernel set (no-op without numba)."""
    currents = np.array([1.0, 1.0, 1.0])
    voltages = np.array([3.9, 3.9, 3.9])
    par = np.array([0.02, 0.01, 1000.0, 0.02, 5000.0, 10800.0, 1.0])
    coef = np.array([3.0, 0.6, 0.0, 0.0, 0.0, 0.0, 0.25])
    q = 1e-6 * np.eye(3)
    p0 = 1e-4 * np.eye(3)
    x0 = np.array([0.9, 0.0, 0.0])
    for variant in (VARIANT_SRCKF, VARIANT_CKF, VARIANT_UKF, VARIANT_MCC, VARIANT_GMMEE):
        run_trace(
            variant, currents, voltages, 0.1, x0, p0, par, coef, q, 0.01,
            0.5, 2.0, 1.0, 2.0, 1.0, 1e-6, 5, 1e-8, False, 2.0, 0.0, 1e-3, 2.0,
        )
