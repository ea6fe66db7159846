"""Perturbing a direction with the von Mises-Fisher mechanism.

A unit vector x is released as a draw y ~ VMF(x, kappa). Larger kappa keeps
y closer to x; the log density ratio between any two inputs is bounded by
kappa times their Euclidean distance.
"""

import numpy as np

from dirdp import vmf
from dirdp.sphere import euclidean_distance, uniform_direction

rng = np.random.default_rng(0)
K = 20
x = uniform_direction(K, rng)

print("kappa    mean cos(x, y)   Bessel-ratio expectation")
for kappa in (0.0, 1.0, 10.0, 100.0, 1e4):
    y = vmf.sample_vmf(x, kappa, rng, size=5000)
    expected = vmf.mean_resultant_length(K, kappa) if kappa > 0 else 0.0
    print(f"{kappa:8g} {np.mean(y @ x):14.4f} {expected:16.4f}")

# privacy ratio for two neighbouring inputs and a random output
x2 = uniform_direction(K, rng)
y = uniform_direction(K, rng)
eps = 2.0
print(f"\nlog ratio {vmf.log_privacy_ratio(x, x2, y, eps):.4f} "
      f"<= bound {eps * euclidean_distance(x, x2):.4f}")
print(f"pure-DP epsilon at kappa={eps}: {vmf.dp_epsilon_for_concentration(eps):g}")
