"""The exponential martingale and its small-parameter expansion.

For a fixed test function we follow log M_t along simulated paths. Its
average exponential stays at one, and after rescaling it is close to the
sum of the linear functional and the quadratic correction terms.

The variance of log M_T grows like sqrt(N) here, so M_T becomes heavy tailed
and its sample mean grows noisy with N even though its expectation is one.
"""
import numpy as np

from slowbond.basis import CoefficientVector
from slowbond.martingales import boundary_cancellation_bound, feynman_kac_log
from slowbond.process import LatticeParams, replica_seeds, sample_bernoulli_product
from slowbond.rate import TestFunction

T = 0.5
G = TestFunction.constant(CoefficientVector.unit(1, value=0.5), T)
for N in (32, 64, 128):
    p = LatticeParams(N, 0.5, T=T)
    final, resid, boundary = [], [], []
    for r in range(200):
        init, dyn = replica_seeds(3, r)
        path = feynman_kac_log(sample_bernoulli_product(p, init), p, G, [0.0, T], dyn)
        final.append(path.log_m[-1])
        resid.append(path.residual()[-1])
        boundary.append(path.terms["r1"][-1] + path.terms["r3"][-1])
    M = np.exp(final)
    print(f"N={N:4d}: mean M_T {M.mean():.3f} +- {M.std(ddof=1) / np.sqrt(M.size):.3f}, "
          f"median |residual| {np.median(np.abs(resid)):.4f}, "
          f"max |r1+r3| {np.max(np.abs(boundary)):.3f} (bound {boundary_cancellation_bound(G, p):.3f})")
