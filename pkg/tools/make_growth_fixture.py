"""Generate the bundled growth-model coefficient fixture.

Solves the deterministic planner problem by shooting on the saddle path,
fits a second-order Taylor expansion of the consumption and capital
policies at the steady state with fourth-order central differences, and
stacks the result into the quadratic law-of-motion arrays consumed by
adpf.models.growth. Run from the repo root:

    python3 tools/make_growth_fixture.py

The output is deterministic; rerunning overwrites the fixture in place.
"""

import json
import pathlib

import numpy as np

ALPHA, BETA, DELTA, RHO = 1.0 / 3.0, 0.99, 0.05, 0.8
HK, HA = 0.01, 0.01           # finite-difference steps in log deviations
HORIZON = 1200                # shooting horizon
BISECT_TOL = 1e-17

KSS = (ALPHA / (1.0 / BETA - 1.0 + DELTA)) ** (1.0 / (1.0 - ALPHA))
CSS = KSS ** ALPHA - DELTA * KSS

OUT = pathlib.Path(__file__).resolve().parents[1] / "src/adpf/fixtures/growth_coeffs.json"


def shoot(khat_prev: float, a0: float) -> tuple[float, float]:
    """Saddle-path consumption and end-of-period capital in log deviations.

    Bisects over initial consumption: paths that exhaust capital consumed
    too much, paths that overaccumulate consumed too little.
    """
    k_prev = KSS * np.exp(khat_prev)
    lo = 1e-8
    hi = np.exp(a0) * k_prev ** ALPHA + (1.0 - DELTA) * k_prev - 1e-12
    for _ in range(200):
        c0 = 0.5 * (lo + hi)
        c, k, a = c0, k_prev, a0
        diverged = 0
        for _ in range(HORIZON):
            k = np.exp(a) * k ** ALPHA + (1.0 - DELTA) * k - c
            if k <= 0.2 * KSS:
                diverged = +1
                break
            if k >= 5.0 * KSS:
                diverged = -1
                break
            a = RHO * a
            c = c * BETA * (ALPHA * np.exp(a) * k ** (ALPHA - 1.0) + 1.0 - DELTA)
        else:
            diverged = +1 if k < KSS else -1
        if diverged > 0:
            hi = c0
        else:
            lo = c0
        if (hi - lo) <= BISECT_TOL * max(1.0, hi):
            break
    c0 = 0.5 * (lo + hi)
    k0 = np.exp(a0) * k_prev ** ALPHA + (1.0 - DELTA) * k_prev - c0
    return float(np.log(c0 / CSS)), float(np.log(k0 / KSS))


def main() -> None:
    # policy values on a 5x5 stencil around the steady state
    P = {}
    for i in range(-2, 3):
        for j in range(-2, 3):
            P[(i, j)] = np.array(shoot(i * HK, j * HA))

    f0 = P[(0, 0)]
    assert np.max(np.abs(f0)) < 1e-9, f"steady state is not a policy fixed point: {f0}"

    d_k = (P[(-2, 0)] - 8 * P[(-1, 0)] + 8 * P[(1, 0)] - P[(2, 0)]) / (12 * HK)
    d_a = (P[(0, -2)] - 8 * P[(0, -1)] + 8 * P[(0, 1)] - P[(0, 2)]) / (12 * HA)
    d_kk = (-P[(-2, 0)] + 16 * P[(-1, 0)] - 30 * P[(0, 0)] + 16 * P[(1, 0)]
            - P[(2, 0)]) / (12 * HK ** 2)
    d_aa = (-P[(0, -2)] + 16 * P[(0, -1)] - 30 * P[(0, 0)] + 16 * P[(0, 1)]
            - P[(0, 2)]) / (12 * HA ** 2)
    d_ka = (P[(1, 1)] - P[(1, -1)] - P[(-1, 1)] + P[(-1, -1)]) / (4 * HK * HA)

    Ck, Kk = d_k
    Ca, Ka = d_a
    Ckk, Kkk = d_kk
    Caa, Kaa = d_aa
    Cka, Kka = d_ka

    # state order (c, k, a); policies take (k_{t-1}, a_t) with a_t = rho a_{t-1} + eps_t,
    # so every appearance of the policies' a-argument contributes rho per lagged-a
    # and 1 per eps
    E = np.array([
        [0.0, Ck, Ca * RHO],
        [0.0, Kk, Ka * RHO],
        [0.0, 0.0, RHO],
    ])
    F = np.array([Ca, Ka, 1.0])
    G = np.zeros((3, 3, 3))
    H = np.zeros((3, 3))
    J = np.zeros(3)
    for row, (pkk, pka, paa) in enumerate([(Ckk, Cka, Caa), (Kkk, Kka, Kaa)]):
        G[row, 1, 1] = 0.5 * pkk
        G[row, 1, 2] = G[row, 2, 1] = 0.5 * pka * RHO
        G[row, 2, 2] = 0.5 * paa * RHO ** 2
        H[row] = [0.0, pka, paa * RHO]
        J[row] = 0.5 * paa

    # stability of the linear part
    eigs = np.abs(np.linalg.eigvals(E))
    assert eigs.max() < 1.0, f"linear part unstable: {eigs}"

    fixture = {
        "format": "growth-coefficients-v1",
        "layout": "row-major-output-blocks",
        "dims": {"state": 3, "disturbance": 1},
        "state_order": ["c", "k", "a"],
        "d": [0.0, 0.0, 0.0],
        "E": E.ravel().tolist(),
        "F": F.tolist(),
        "G": G.ravel().tolist(),
        "H": H.ravel().tolist(),
        "J": J.tolist(),
        "steady_state": {"k_level": KSS, "c_level": CSS},
        "generator": {
            "method": "deterministic saddle-path shooting with fourth-order "
                      "central-difference Taylor fit",
            "calibration": {"alpha": ALPHA, "beta": BETA, "delta": DELTA,
                            "rho": RHO},
            "fd_steps": {"k": HK, "a": HA},
            "shooting_horizon": HORIZON,
            "bisection_tol": BISECT_TOL,
            "script": "tools/make_growth_fixture.py",
        },
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixture, indent=2) + "\n")
    print(f"wrote {OUT}")
    print(f"k* = {KSS:.6f}  c* = {CSS:.6f}")
    print(f"C_k={Ck:.8f} C_a={Ca:.8f} K_k={Kk:.8f} K_a={Ka:.8f}")


if __name__ == "__main__":
    main()
