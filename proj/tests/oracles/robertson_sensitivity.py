"""Frozen oracle for the Robertson sensitivity matrix.

Richardson-extrapolated central finite differences of scipy's Radau
integrator (rtol 1e-13) over the initial state, written to tests/data/robertson_sensitivity.json. Rerun only
when the reference state or times change.
"""
import json
import pathlib

import numpy as np
from scipy.integrate import solve_ivp

K1, K2, K3 = 0.04, 3e7, 1e4
Y0 = np.array([0.95, 5e-6, 0.05])
TIMES = [1e-4, 1e-3]
STEPS = np.array([1e-3, 1e-7, 1e-3])


def rhs(_, y):
    a, b, c = y
    return [-K1 * a + K3 * b * c, K1 * a - K3 * b * c - K2 * b * b, K2 * b * b]


def jac(_, y):
    a, b, c = y
    return [[-K1, K3 * c, K3 * b], [K1, -K3 * c - 2 * K2 * b, -K3 * b], [0.0, 2 * K2 * b, 0.0]]


def flow(y0, t):
    sol = solve_ivp(rhs, (0.0, t), y0, method="Radau", jac=jac, rtol=1e-13, atol=1e-20)
    assert sol.success
    return sol.y[:, -1]


def central(t, steps):
    D = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = steps[j]
        D[:, j] = (flow(Y0 + e, t) - flow(Y0 - e, t)) / (2 * steps[j])
    return D


def main():
    out = {"y0": Y0.tolist(), "steps": STEPS.tolist(), "cases": []}
    for t in TIMES:
        A = (4.0 * central(t, STEPS / 2) - central(t, STEPS)) / 3.0
        out["cases"].append({"t": t, "state": flow(Y0, t).tolist(), "A": A.tolist()})
    path = pathlib.Path(__file__).resolve().parents[1] / "data" / "robertson_sensitivity.json"
    path.write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
