"""Tune the torus radius, run the counterterm iteration for the quintic NLS and print the potential."""

import numpy as np

from nlskam.hamiltonian import FrequencyVector, WeightParams
from nlskam.indexing import ModeSet
from nlskam.nls import NonlinearitySpec, run_nls_kam, tune_radius
from nlskam.smalldivisors import draw_diophantine


def main():
    modes = ModeSet(3)
    params = WeightParams(p=2.0, s=1.0, a=0.0, theta=0.5)
    f = NonlinearitySpec.power(2)
    omega = FrequencyVector.from_omega(modes, draw_diophantine(modes.modes, 0.1, 4, np.random.default_rng(0)))
    r = tune_radius(f, modes, omega.omega, params, 0.1, 8, 1e-3, support=2)
    run = run_nls_kam(f, modes, omega, r, params, 0.1, 8, support=2)
    print(f"r = {r:.6f}")
    for n, eps in enumerate(run.result.eps_history):
        print(f"step {n}: eps = {eps:.3e}")
    print("truncation residual", f"{run.result.truncation_residual:.3e}")
    for j, v in zip(modes.modes, run.V):
        print(f"V_{j:+d} = {v:+.6f}")


if __name__ == "__main__":
    main()
