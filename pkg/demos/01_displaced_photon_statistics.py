"""
Photon statistics of displaced micro states
===========================================

A displaced single photon has three times the photon-number variance of a
displaced vacuum, whatever the displacement. We check this with exact
moments, then compare the exact and asymptotic photon-number engines.
"""
import numpy as np

from micromacro import DisplacedState, photon_moments, photon_pmf_exact, stream
from micromacro.frame import photon_sample_asymptotic

vac = np.diag([1.0, 0.0]).astype(complex)
one = np.diag([0.0, 1.0]).astype(complex)

for alpha in (1.0, 10.0, 1e3, 1.265e4):
    m0, v0 = photon_moments(DisplacedState(vac, alpha))
    m1, v1 = photon_moments(DisplacedState(one, alpha))
    print(f"alpha={alpha:>9g}  <N>_0={m0:.6g}  Var_1/Var_0={v1 / v0:.12f}")

# %%
# Exact distribution at moderate alpha vs the asymptotic sampler
state = DisplacedState(one, 6.0)
pmf = photon_pmf_exact(state)
rng = stream(1, "demo")
for method in ("charlier", "linear"):
    samples = photon_sample_asymptotic(state, rng, 200_000, method=method, min_abs_alpha=0)
    print(f"{method:>9s} sampler: TV distance to exact = {pmf.tv_distance(samples):.4f}")
