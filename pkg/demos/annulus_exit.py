"""Exit times from shrinking annuli around a torus, with and without a degree-two remainder."""

from nlskam.dynamics import coupled_resonant_normal_form, drift_experiment
from nlskam.hamiltonian import Hamiltonian, WeightParams
from nlskam.indexing import ModeSet
from nlskam.projections import TorusData

OMEGA = [4.3, 1.2, 0.1, 1.7, 1.7]


def main(T_max=100.0):
    modes = ModeSet(2)
    torus = TorusData.profile(modes, 1.0, WeightParams(), 0.5)
    N = coupled_resonant_normal_form(torus, OMEGA, (1, 2), (0, -1), 600.0)
    for name, H in (("normal form", N), ("linear flow", Hamiltonian.diagonal(modes, OMEGA))):
        rep = drift_experiment(H, torus, 0.2, 2, T_max, dt=0.01, n_samples=8, seed=1, levels=3)
        print(name)
        for row in rep.rows:
            print(f"  delta={row['delta']:.3f}  median exit={row['exit_median']:.2f}  drift={row['drift_sup']:.2e}")
        print(f"  exit exponent {rep.exit_exponent:.2f}")


if __name__ == "__main__":
    main()
