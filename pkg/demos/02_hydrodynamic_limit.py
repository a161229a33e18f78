"""Block densities of the exclusion process follow the heat equation.

We start 200 rings of N=128 sites from a cosine density profile, let them
run until t=0.05, and compare block averages of the occupation with the
eigen-expansion solution. The L2 gap is about a hundredth and is mostly
sampling noise; it shrinks with more replicas.
"""
import numpy as np

from slowbond.experiments import hydro_block_reference, l2_block_distance
from slowbond.fields import SnapshotRecorder, block_density_profile
from slowbond.process import Configuration, LatticeParams, replica_seeds, sample_density_profile, simulate

N, block, t, amp, reps = 128, 8, 0.05, 0.2, 200
p = LatticeParams(N, 0.5, T=t)
gamma = lambda u: 0.5 + amp * np.cos(2 * np.pi * u)

profiles = []
for r in range(reps):
    init, dyn = replica_seeds(7, r)
    snap = SnapshotRecorder([t])
    simulate(sample_density_profile(p, gamma, init), p, [snap], dyn)
    profiles.append(block_density_profile(Configuration(snap.result()[0]), block))

mc = np.mean(profiles, axis=0)
ref = hydro_block_reference(N, block, t, amp)
print("block   simulated   heat equation")
for b in range(0, mc.size, 2):
    print(f"{b:5d}   {mc[b]:.4f}      {ref[b]:.4f}")
print(f"\nL2 distance: {l2_block_distance(mc, ref, N, block):.4f}")
