"""From a target (epsilon, delta) to a Gaussian noise multiplier.

The Renyi-DP accountant tracks the subsampled Gaussian mechanism over
T = epochs * ceil(N / L) steps at sampling rate q = L / N, and a root
finder inverts it for sigma.
"""

from dirdp.accountant import PrivacyBudget, compute_epsilon, sigma_for_target_epsilon

shapes = {"CoLA-sized, 30 epochs": (5056, 30), "SST2-sized, 3 epochs": (53710, 3)}
for name, (n, epochs) in shapes.items():
    print(name)
    for eps in (1.0, 10.0, 100.0, 1e3):
        b = PrivacyBudget.for_training(eps, n, 128, epochs)
        sigma = sigma_for_target_epsilon(b)
        back = compute_epsilon(sigma, b.sample_rate, b.steps, b.delta)
        print(f"  epsilon {eps:7g} -> sigma {sigma:.3f} (accounted back: {back:.3f})")
