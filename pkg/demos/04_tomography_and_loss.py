"""
Entanglement after undisplacement
=================================

Bob's mode is displaced back, both modes are measured by homodyne
tomography at 16 phase pairs, and a small residual displacement is
filtered out before maximum-likelihood reconstruction. We then look at
how concurrence degrades with loss between the displacements.
"""
import numpy as np

from micromacro import ImperfectionParams, stream
from micromacro.fock import fidelity
from micromacro.tomography import (concurrence, concurrence_vs_loss, default_phase_pairs,
                                   inject_residual_offset, mle_reconstruct, residual_filter,
                                   sample_quadratures, verification_state)

params = ImperfectionParams()
truth = verification_state(params, 1e3, 1.0)
rng = stream(11, "demo-tomo")

batch = sample_quadratures(truth, default_phase_pairs(), 10_000, rng)
batch = residual_filter(inject_residual_offset(batch, 10.0))
res = mle_reconstruct(batch)
print(f"MLE: {res.iterations} iterations, converged={res.converged}")
print(f"fidelity {fidelity(res.rho, truth):.4f}, concurrence {res.concurrence():.4f} "
      f"(true {concurrence(truth):.4f}), leakage {res.leakage:.4f}")
print("reconstructed rho (|00>,|01>,|10>,|11> block):")
idx = [0, 1, 3, 4]
print(np.round(res.rho[np.ix_(idx, idx)].real, 3))

# %%
t = np.linspace(0, 1, 11)
for eps in (0.0, 0.015):
    c = concurrence_vs_loss(ImperfectionParams(epsilon2=eps), 1e3, t)
    print(f"epsilon2={eps}:", np.round(c, 4))
print("eta sqrt(t):    ", np.round(0.54 * np.sqrt(t), 4))
