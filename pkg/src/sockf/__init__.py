"""Robust square-root cubature Kalman filtering for battery SOC estimation.

Subpackages by concern:

- :mod:`sockf.numerics`   small dense-matrix primitives
- :mod:`sockf.criterion`  generalized-Gaussian kernels and the entropy cost
- :mod:`sockf.battery`    2-RC equivalent-circuit model and trace synthesis
- :mod:`sockf.noise`      gated non-Gaussian measurement-noise mixtures
- :mod:`sockf.filters`    UKF/CKF/SRCKF baselines and the robust update
- :mod:`sockf.fastpath`   numba-compiled whole-trace kernels (env-switchable)
- :mod:`sockf.tsga`       tree-seed/genetic hybrid kernel tuner
- :mod:`sockf.harness`    experiments, metrics, Monte Carlo, reports
"""

__version__ = "0.1.0"
