"""Tour of the three operating regimes as the noise power varies.

The cost of holding a steady activation level s4 is a convex function of
s4 whenever the noise sits below the convexity certificate. Depending on
where the noise falls relative to two closed-form constants, the cheapest
operating point is never transmitting, always transmitting, or an interior
duty cycle. This script sweeps the noise power across all three regimes
and prints the resulting operating points.

Run:  python demos/regime_tour.py
"""

import numpy as np

from powerctl import equilibrium
from powerctl.model import ModelParams


def params_with_noise(n0):
    return ModelParams.good_bad(
        theta=0.2, beta1=0.4, rho=0.1, lam=1.5, n0=n0, p_max=1000.0
    )


def main():
    base = params_with_noise(1.0)
    n0_0, n0_1 = equilibrium.n0_thresholds(base)
    f0, _ = equilibrium.convexity_bound(base)
    print(f"regime constants: n0_1 = {n0_1:.6f}, n0_0 = {n0_0:.6f}")
    print(f"convexity certificate holds up to n0 = {f0:.2f}\n")

    print(f"{'n0':>8}  {'regime':<9} {'s4*':>10} {'m4*':>10} {'E*':>10}")
    for n0 in [0.2, 0.5, n0_1, 2.0, 5.0, 12.0, n0_0, 40.0, 100.0]:
        rep = equilibrium.optimal_equilibrium(params_with_noise(n0))
        print(
            f"{n0:8.3f}  {rep.regime:<9} {rep.s4_star:10.6f} "
            f"{rep.m_star[3]:10.6f} {rep.E_star:10.6f}"
        )

    print("\ninterior stationarity cross-check (noise recovered from m4*):")
    for n0 in (2.0, 5.0, 12.0):
        rep = equilibrium.optimal_equilibrium(params_with_noise(n0))
        back = equilibrium.n0_from_m4(rep.m_star[3], params_with_noise(n0))
        print(f"  n0 = {n0:5.2f} -> m4* = {rep.m_star[3]:.6f} -> n0 = {back:.12f}")

    print("\ncost curve at n0 = 5 (interior):")
    p = params_with_noise(5.0)
    for s4 in np.linspace(0.0, 1.0, 11):
        bar = "#" * int(40 * (equilibrium.equilibrium_cost(s4, p) - 0.5))
        print(f"  s4 = {s4:.1f}  E = {equilibrium.equilibrium_cost(s4, p):.6f}  {bar}")


if __name__ == "__main__":
    main()
