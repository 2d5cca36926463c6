#!/usr/bin/env python3
"""Regenerate the reference cell parameters and OCV polynomial fixture.

The OCV coefficients shipped in ``src/sockf/data/`` are the 6th-order
least-squares fit of a smooth monotone template spanning 3.0-4.2 V.  Run this
script after changing the template; the test suite re-derives the curve and
compares against the shipped JSON.
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from sockf.battery import fit_ocv  # noqa: E402

DATA_DIR = pathlib.Path(__file__).resolve().parents[1] / "src" / "sockf" / "data"

# Fresh-cell parameter set: time constants 10 s and 100 s, 3 Ah capacity.
REFERENCE_CELL = {
    "r0": 0.02,
    "r1": 0.01,
    "c1": 1000.0,
    "r2": 0.02,
    "c2": 5000.0,
    "q_ah": 3.0,
    "coulomb_eff": 1.0,
}

# Aged-cell analog: higher resistance, reduced capacity.
AGED_CELL = {
    "r0": 0.035,
    "r1": 0.018,
    "c1": 800.0,
    "r2": 0.03,
    "c2": 4200.0,
    "q_ah": 0.65,
    "coulomb_eff": 1.0,
}

N_FIT_POINTS = 41


def ocv_template(s: np.ndarray) -> np.ndarray:
    """Smooth monotone open-circuit-voltage shape, 3.0 V at empty to ~4.2 V full."""
    return 3.0 + 0.6 * s + 0.25 * s**6 + 0.35 * (1.0 - np.exp(-5.0 * s))


def main() -> None:
    soc = np.linspace(0.0, 1.0, N_FIT_POINTS)
    volts = ocv_template(soc)
    curve, rmse = fit_ocv(np.column_stack([soc, volts]))
    grid = np.linspace(0, 1, 1001)
    fitted = np.polyval(list(reversed(curve.coeffs)), grid)
    max_err = np.max(np.abs(fitted - ocv_template(grid)))
    assert np.all(np.diff(fitted) > 0), "fitted OCV polynomial must be monotone"
    assert max_err < 5e-3, f"fit error {max_err:.2e} V exceeds 5 mV"

    DATA_DIR.mkdir(parents=True, exist_ok=True)
    with open(DATA_DIR / "reference_cell.json", "w") as fh:
        json.dump(REFERENCE_CELL, fh, indent=2)
        fh.write("\n")
    with open(DATA_DIR / "aged_cell.json", "w") as fh:
        json.dump(AGED_CELL, fh, indent=2)
        fh.write("\n")
    with open(DATA_DIR / "ocv_reference.json", "w") as fh:
        json.dump(
            {"coeffs": list(curve.coeffs), "soc_min": 0.0, "soc_max": 1.0},
            fh,
            indent=2,
        )
        fh.write("\n")
    print(f"fit rmse = {rmse:.3e} V, max abs error = {max_err:.3e} V")
    print(f"coeffs = {curve.coeffs}")


if __name__ == "__main__":
    main()
