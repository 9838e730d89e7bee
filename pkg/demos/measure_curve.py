"""Fraction of random frequency vectors that fail the Diophantine test, against gamma."""

from nlskam.cli import linear_fit
from nlskam.smalldivisors import sample_measure_sweep

gammas = [0.01, 0.02, 0.05, 0.1, 0.2]
fractions = sample_measure_sweep(gammas, L=4, j_max=4, n_samples=20_000, seed=3, workers=4)
for g, f in zip(gammas, fractions):
    print(f"gamma={g:<5} failing={f:.4f}")
print(linear_fit(gammas, fractions, 20_000))
