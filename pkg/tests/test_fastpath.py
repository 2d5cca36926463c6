import os
import subprocess
import sys

import numpy as np
import pytest

from sockf import battery, fastpath, filters, noise, numerics
from sockf.criterion import GgdKernel, MixtureKernel


@pytest.fixture(scope="module")
def trace():
    p = battery.load_ecm_params()
    ocv = battery.load_ocv_curve()
    dt = 0.1
    currents = battery.generate_current_profile("urban_like", 30.0, dt, 3.0, rng_seed=21)
    spec = noise.MixedNoiseSpec(
        c=0.95, base=noise.GaussianSpec(0.1, 10.0), contaminant=noise.UniformSpec(-4.0, 2.0)
    )
    ds = battery.simulate_trace(
        p, ocv, currents, dt, 0.9,
        process_noise_cov=1e-12 * np.eye(3),
        meas_noise_source=noise.sampler(spec),
        rng_seed=22,
    )
    return p, ocv, ds


def fast_args(p, ocv):
    par = np.array([p.r0, p.r1, p.c1, p.r2, p.c2, p.q_max, p.coulomb_eff])
    coef = np.asarray(ocv.coeffs, dtype=float)
    return par, coef


def generic_run(ds, model, cfg, x0, p0):
    state = filters.init_filter_state(x0, p0)
    est = [state.x_hat]
    flags = 0
    for k in range(1, len(ds)):
        state = filters.filter_step(
            state, ds.current[k - 1], ds.current[k], ds.voltage[k], ds.dt, model, cfg
        )
        est.append(state.x_hat)
        flags += state.diagnostics.fallback
    return np.array(est), flags


VARIANTS = [
    ("srckf", fastpath.VARIANT_SRCKF, filters.SrckfConfig(), {}),
    ("ckf", fastpath.VARIANT_CKF, filters.CkfConfig(), {}),
    ("ukf", fastpath.VARIANT_UKF, filters.UkfConfig(), {}),
    (
        "mcc",
        fastpath.VARIANT_MCC,
        filters.MccConfig(bandwidth=1.2),
        {"mcc_bandwidth": 1.2},
    ),
    (
        "gmmee",
        fastpath.VARIANT_GMMEE,
        filters.GmmeeConfig(
            mixture=MixtureKernel(0.5, GgdKernel(3.3662, 7.788e-4), GgdKernel(4.3453, 9.83e-5))
        ),
        {"eta": 0.5, "a1": 3.3662, "b1": 7.788e-4, "a2": 4.3453, "b2": 9.83e-5},
    ),
    (
        "mmee",
        fastpath.VARIANT_GMMEE,
        filters.GmmeeConfig(
            mixture=MixtureKernel(0.5, GgdKernel(2.0, 0.30), GgdKernel(2.0, 0.08))
        ),
        {"eta": 0.5, "a1": 2.0, "b1": 0.30, "a2": 2.0, "b2": 0.08},
    ),
]


def default_kwargs(**over):
    kw = dict(
        eta=0.5, a1=2.0, b1=1.0, a2=2.0, b2=1.0,
        fp_tol=1e-6, fp_max_iter=20, eps=1e-8, laplacian=False,
        mcc_bandwidth=2.0, ukf_kappa=0.0, ukf_alpha=1e-3, ukf_beta=2.0,
    )
    kw.update(over)
    return kw


class TestLaneEquivalence:
    @pytest.mark.parametrize("name,code,cfg,over", VARIANTS, ids=[v[0] for v in VARIANTS])
    def test_run_trace_matches_generic(self, trace, name, code, cfg, over):
        p, ocv, ds = trace
        par, coef = fast_args(p, ocv)
        q = 1e-6 * np.eye(3)
        r_var = 10.0
        p0 = np.diag([0.01, 0.01, 0.06])
        x0 = ds.true_states[0]
        model = filters.StateSpaceModel(
            n=3, m=1,
            transition=battery.filter_dynamics(p),
            observation=battery.filter_observation(p, ocv),
            q_cov=q, r_cov=np.array([[r_var]]),
        )
        kw = default_kwargs(**over)
        est, *_ = fastpath.run_trace(
            code, ds.current, ds.voltage, ds.dt, x0, p0, par, coef, q, r_var, *kw.values()
        )
        gen, _ = generic_run(ds, model, cfg, x0, p0)
        # the scaled UKF's +-1e6 weights amplify summation-order roundoff
        tol = 1e-7 if code == fastpath.VARIANT_UKF else 1e-9
        assert np.max(np.abs(est - gen)) < tol

    @pytest.mark.parametrize("name,code,cfg,over", VARIANTS, ids=[v[0] for v in VARIANTS])
    def test_step_once_matches_run_trace(self, trace, name, code, cfg, over):
        p, ocv, ds = trace
        par, coef = fast_args(p, ocv)
        q = 1e-6 * np.eye(3)
        r_var = 10.0
        p0 = np.diag([0.01, 0.01, 0.06])
        x0 = ds.true_states[0]
        kw = default_kwargs(**over)
        est, *_ = fastpath.run_trace(
            code, ds.current, ds.voltage, ds.dt, x0, p0, par, coef, q, r_var, *kw.values()
        )
        bq = numerics.cholesky_lower(q).entries
        x = x0.copy()
        cov = p0.copy() if code in (fastpath.VARIANT_CKF, fastpath.VARIANT_UKF) else (
            numerics.cholesky_lower(p0).entries
        )
        stepped = [x0.copy()]
        for k in range(1, len(ds)):
            x, cov, _fb, _cap = fastpath.step_once(
                code, x, cov, ds.current[k - 1], ds.current[k], ds.voltage[k], ds.dt,
                par, coef, q, bq, r_var, kw,
            )
            stepped.append(np.asarray(x).copy())
        assert np.max(np.abs(np.array(stepped) - est)) < 1e-12


class TestKernelHelpers:
    def test_tria_matches_numerics(self, rng):
        for _ in range(25):
            a = rng.standard_normal((3, 7))
            assert np.allclose(
                fastpath._tria(a), numerics.tria(a).entries, rtol=1e-12, atol=1e-14
            )

    def test_chol_matches_numpy(self, rng, spd_factory):
        for _ in range(25):
            p = spd_factory(rng, 4)
            l, ok = fastpath._chol(p)
            assert ok
            assert np.allclose(l, np.linalg.cholesky(p), rtol=1e-12, atol=1e-14)

    def test_chol_flags_indefinite(self):
        l, ok = fastpath._chol(np.diag([1.0, -1.0]))
        assert not ok

    def test_psd_repair_matches_numerics(self, rng):
        m = rng.standard_normal((3, 3))
        assert np.allclose(
            fastpath._psd_repair(m), numerics.psd_repair(m), rtol=1e-12, atol=1e-14
        )

    def test_solves(self, rng):
        l = np.tril(rng.standard_normal((4, 4)))
        np.fill_diagonal(l, np.abs(np.diag(l)) + 1.0)
        b = rng.standard_normal(4)
        assert np.allclose(fastpath._lsolve_vec(l, b), np.linalg.solve(l, b), rtol=1e-12)
        assert np.allclose(fastpath._ltsolve_vec(l, b), np.linalg.solve(l.T, b), rtol=1e-12)

    def test_battery_f_h_match_module(self, trace):
        p, ocv, ds = trace
        par, coef = fast_args(p, ocv)
        x = np.array([0.7, 0.01, -0.005])
        fx = fastpath._f(x, 2.0, 0.1, par)
        expect = battery.filter_dynamics(p)(x, 2.0, 0.1)
        assert np.allclose(fx, expect, rtol=1e-15)
        hx = fastpath._h(x, 2.0, par, coef)
        assert hx == pytest.approx(battery.filter_observation(p, ocv)(x, 2.0)[0], rel=1e-15)


class TestEnvFlag:
    def test_env_flag_disables_jit(self):
        code = (
            "import os; os.environ['SOCKF_PURE_NUMPY']='1'; "
            "from sockf import fastpath; print(fastpath.JIT_ENABLED)"
        )
        out = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, check=True
        )
        assert out.stdout.strip() == "False"

    def test_pure_python_lane_still_correct(self):
        # interpreted kernels produce the same numbers on a short trace
        code = """
import os
os.environ['SOCKF_PURE_NUMPY'] = '1'
import numpy as np
from sockf import battery, fastpath, noise
assert not fastpath.JIT_ENABLED
p = battery.load_ecm_params(); ocv = battery.load_ocv_curve()
currents = battery.generate_current_profile('urban_like', 5.0, 0.1, 3.0, rng_seed=21)
ds = battery.simulate_trace(p, ocv, currents, 0.1, 0.9,
                            meas_noise_source=noise.sampler(noise.GaussianSpec(0.0, 0.01)),
                            rng_seed=22)
par = np.array([p.r0, p.r1, p.c1, p.r2, p.c2, p.q_max, p.coulomb_eff])
coef = np.asarray(ocv.coeffs)
est, *_ = fastpath.run_trace(fastpath.VARIANT_GMMEE, ds.current, ds.voltage, 0.1,
                             ds.true_states[0], np.diag([0.01,0.01,0.06]), par, coef,
                             1e-6*np.eye(3), 0.01, 0.5, 2.0, 1.0, 2.0, 1.0,
                             1e-6, 20, 1e-8, False, 2.0, 0.0, 1e-3, 2.0)
print(repr(float(est[-1, 0])))
"""
        out = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, check=True
        )
        interpreted = float(out.stdout.strip())

        p = battery.load_ecm_params()
        ocv = battery.load_ocv_curve()
        currents = battery.generate_current_profile("urban_like", 5.0, 0.1, 3.0, rng_seed=21)
        ds = battery.simulate_trace(
            p, ocv, currents, 0.1, 0.9,
            meas_noise_source=noise.sampler(noise.GaussianSpec(0.0, 0.01)),
            rng_seed=22,
        )
        par, coef = fast_args(p, ocv)
        est, *_ = fastpath.run_trace(
            fastpath.VARIANT_GMMEE, ds.current, ds.voltage, 0.1,
            ds.true_states[0], np.diag([0.01, 0.01, 0.06]), par, coef,
            1e-6 * np.eye(3), 0.01, 0.5, 2.0, 1.0, 2.0, 1.0,
            1e-6, 20, 1e-8, False, 2.0, 0.0, 1e-3, 2.0,
        )
        assert float(est[-1, 0]) == pytest.approx(interpreted, rel=1e-12)


class TestFlags:
    def test_fallback_counted(self, trace):
        p, ocv, ds = trace
        par, coef = fast_args(p, ocv)
        q = 1e-6 * np.eye(3)
        kw = default_kwargs(a1=4.0, b1=1e-100, a2=4.0, b2=1e-100)
        est, fallbacks, caps, iters = fastpath.run_trace(
            fastpath.VARIANT_GMMEE, ds.current, ds.voltage, ds.dt,
            ds.true_states[0], np.diag([0.01, 0.01, 0.06]), par, coef, q, 10.0,
            *kw.values(),
        )
        assert fallbacks == len(ds) - 1
        assert np.all(np.isfinite(est))
