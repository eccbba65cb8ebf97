"""
How well can Bob tell the two cat components apart?
===================================================

Conditioning exactly on x_A = +-1/sqrt(2) prepares Bob in displaced
(|0> +- |1>)/sqrt(2). A sign threshold on the energy difference
discriminates them; ideally the error is 1/2 - 1/sqrt(2 pi).
"""
import math

from micromacro import IDEAL, ImperfectionParams, stream
from micromacro.detection import point_discrimination

x = 1 / math.sqrt(2)
rng = stream(7, "demo-disc")
print(f"closed form (ideal): {0.5 - 1 / math.sqrt(2 * math.pi):.4f}")
for label, params, ref in (("ideal, no reference", IDEAL, False),
                           ("experimental, coherent reference", ImperfectionParams(), True)):
    e_p, e_m, avg, se = point_discrimination(params, 1e3, x, 500_000, rng, reference=ref)
    print(f"{label:>33s}: error {avg:.4f} +- {se:.4f}  (certainty {1 - avg:.3f})")
