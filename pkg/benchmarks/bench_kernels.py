#!/usr/bin/env python3
"""Benchmark the compiled filter kernels against the pure-numpy lane.

Runs every variant over the same synthetic trace three ways:

- ``fast``     whole-trace numba kernel (skipped when SOCKF_PURE_NUMPY=1)
- ``stepped``  per-step python loop over the numba kernels (what the
               timing profile measures)
- ``generic``  the callable-model numpy implementation

Usage: python benchmarks/bench_kernels.py [--steps 3600] [--repeat 3]
"""

import argparse
import time

import numpy as np

from sockf import battery, fastpath, filters, harness, noise


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=3600)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    p = battery.load_ecm_params()
    ocv = battery.load_ocv_curve()
    dt = 0.1
    spec = noise.MixedNoiseSpec(
        c=0.95,
        base=noise.GaussianSpec(0.1, 10.0),
        contaminant=noise.UniformSpec(-4.0, 2.0),
    )
    currents = battery.generate_current_profile(
        "urban_like", args.steps * dt, dt, 3.0, rng_seed=7
    )
    ds = battery.simulate_trace(
        p, ocv, currents, dt, 0.9,
        process_noise_cov=1e-12 * np.eye(3),
        meas_noise_source=noise.sampler(spec),
        rng_seed=11,
    )

    if fastpath.JIT_ENABLED:
        print("compiling kernels...")
        fastpath.warmup()
    else:
        print(f"{fastpath.NUMBA_ENV_FLAG}=1 or numba missing: interpreted kernels")

    base_cfg = harness.ExperimentConfig(
        params=p, ocv=ocv,
        trace=harness.TraceSpec(duration=args.steps * dt, dt=dt),
        noise_spec=spec, seed=3,
    )
    par, coef = harness._pack_model_arrays(base_cfg)
    q = base_cfg.resolved_q()
    p0 = base_cfg.resolved_p0()
    r_var = base_cfg.resolved_r()
    x0 = ds.true_states[0]

    header = f"{'variant':<12} {'fast us/step':>13} {'stepped us/step':>16} {'generic us/step':>16} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name in harness.COMPARISON_ORDER:
        variant = harness.resolve_variant(name, {})

        fast_t = float("nan")
        if fastpath.JIT_ENABLED:
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                fastpath.run_trace(
                    variant.fast_code, ds.current, ds.voltage, dt, x0, p0,
                    par, coef, q, r_var, *variant.fast_kwargs.values(),
                )
                best = min(best, time.perf_counter() - t0)
            fast_t = best / (len(ds) - 1) * 1e6

        cfg = harness.ExperimentConfig(
            params=p, ocv=ocv, trace=base_cfg.trace, noise_spec=spec,
            filter_name=name, seed=3, engine="fast" if fastpath.JIT_ENABLED else "generic",
        )
        rep = harness.run_experiment(cfg)
        stepped_t = rep.timing_mean_ms * 1e3

        gen_cfg = harness.ExperimentConfig(
            params=p, ocv=ocv, trace=base_cfg.trace, noise_spec=spec,
            filter_name=name, seed=3, engine="generic",
        )
        rep_g = harness.run_experiment(gen_cfg)
        gen_t = rep_g.timing_mean_ms * 1e3

        speedup = gen_t / fast_t if fast_t == fast_t else float("nan")
        print(f"{name:<12} {fast_t:>13.2f} {stepped_t:>16.2f} {gen_t:>16.2f} {speedup:>8.0f}x")


if __name__ == "__main__":
    main()
