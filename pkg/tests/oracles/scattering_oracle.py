"""Independent reference values for the zero-energy scattering length.

Solves u'' = (kappa/2) v(r) u, u(0) = 0, u'(0) = 1 for the gaussian profile
v(r) = exp(-r^2) with scipy's adaptive RK (DOP853, rtol/atol 1e-13) -- a
different integrator and step strategy than the package's fixed-step RK4 --
and extracts a from a linear fit on r in [0.9 r_max, r_max].

Run:  python tests/oracles/scattering_oracle.py
The printed numbers are frozen into tests/test_model.py.
"""

import numpy as np
from scipy.integrate import solve_ivp


def a_of_kappa(kappa, r_max=12.0):
    def rhs(r, y):
        return [y[1], 0.5 * kappa * np.exp(-(r ** 2)) * y[0]]

    r_fit = np.linspace(0.9 * r_max, r_max, 200)
    sol = solve_ivp(
        rhs, (0.0, r_max), [0.0, 1.0], t_eval=r_fit, rtol=1e-13, atol=1e-13,
        method="DOP853",
    )
    m, b = np.polyfit(sol.t, sol.y[0], 1)
    return -b / m


if __name__ == "__main__":
    for kappa in (1e-3, 1e-1, 1.0):
        a = a_of_kappa(kappa)
        born = kappa * np.pi ** 1.5 / (8.0 * np.pi)  # kappa*sqrt(pi)/8
        print(f"kappa={kappa:10.4g}  a={a:.12e}  born={born:.12e}  a/born={a/born:.9f}")
