"""
Conditional energy differences
==============================

Alice measures a quadrature of her half of a delocalised photon; Bob's
displaced mode is read out through its energy difference with a coherent
reference. Binning by Alice's outcome reveals the micro state Bob was
projected on: variance is largest near x_A = 0 (Bob left in |1>) and
smallest at large |x_A| (close to |0>).
"""
import math

import numpy as np

from micromacro import ImperfectionParams, stream
from micromacro.conditional import make_state
from micromacro.detection import default_bins, expected_bin_moments, run_conditional

alpha = 1e3
params = ImperfectionParams()            # eta = 0.54, epsilon2 = 0.015
rng = stream(2024, "demo-sweep")

sweep, hist = run_conditional(params, alpha, 0.0, 400_000, rng)
prob, mean_model, var_model = expected_bin_moments(make_state(params, alpha), 0.0, default_bins())

print(" x_A     count   <dN>/a   Var/a^2   model Var/a^2")
for x, n, m, v, vm in zip(sweep.centers, sweep.counts, sweep.mean / alpha,
                          sweep.variance / alpha**2, var_model / alpha**2):
    print(f"{x:+.2f} {int(n):>8d}  {m:+.4f}  {v:8.4f}  {vm:8.4f}")

ratio, se = sweep.variance_ratio()
print(f"\nvariance contrast (well-populated bins): {ratio:.3f} +- {se:.3f}")

# %%
# The orthogonal quadrature carries no which-mode information: the mean is flat
ortho, _ = run_conditional(params, alpha, math.pi / 2, 400_000, rng)
print("orthogonal max |mean|/alpha = %.4f +- %.4f" % ortho.max_abs_mean_over_alpha())

# %%
# Windows around x_A = -1/sqrt(2), 0, +1/sqrt(2)
print("window means / alpha:", np.round(hist.means_over_alpha(), 3))
e_i, e_iii, avg = hist.discrimination()[:3]
print(f"discrimination of windows I and III: error {avg:.3f}, certainty {1 - avg:.3f}")
