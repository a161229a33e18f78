"""The dynamical rate of a driven trajectory is half its driving energy.

A trajectory produced by the linear response to a forcing psi costs
exactly half the space-time energy of psi. We build such trajectories,
evaluate the rate through its variational definition, and watch the
discretisation gap shrink as the time grid is refined.
"""
import numpy as np

from slowbond.basis import CoefficientVector
from slowbond.fields import FieldTrajectory
from slowbond.hydro import linear_response
from slowbond.rate import TestFunction, path_inner, rate_dyn, rate_ini

rho, T = 0.5, 1.0
psi = TestFunction.separable(CoefficientVector.from_modes({1: 1.0, -2: 0.3}), lambda t: 1 + t, [0.0, T])
phi = CoefficientVector.unit(-1)
target = 0.5 * path_inner(psi, psi, rho)
print(f"half energy of psi: {target:.6f}")
for points in (50, 100, 200, 400):
    mu = linear_response(phi, psi, np.linspace(0, T, points), rho)
    value = rate_dyn(mu, rho).value
    print(f"grid {points:4d}: rate {value:.6f}  relative gap {abs(value - target) / target:.2e}")
print(f"initial cost of starting from cos(2 pi u): {rate_ini(mu.at(0).values, rho):.6f}")

# Changing the total mass is never allowed.
bad = mu.values.copy()
bad[-1, mu.K] += 1e-3
print("mass-changing path:", rate_dyn(FieldTrajectory(mu.times, bad), rho).value)
