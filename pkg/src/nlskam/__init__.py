"""Counter-term KAM iteration for truncated NLS Hamiltonians on the circle."""

__version__ = "0.1.0"

from .hamiltonian import FrequencyVector, Hamiltonian, WeightParams, norm
from .indexing import ModeSet, MultiIndex
from .kam import KamConfig, run_counterterm_theorem, run_lowdim
from .nls import NonlinearitySpec, build_nls_perturbation, run_nls_kam
from .poisson import lie_transform, poisson_bracket
from .projections import CounterTerm, TorusData, project_degree

__all__ = [
    "CounterTerm",
    "FrequencyVector",
    "Hamiltonian",
    "KamConfig",
    "ModeSet",
    "MultiIndex",
    "NonlinearitySpec",
    "TorusData",
    "WeightParams",
    "build_nls_perturbation",
    "lie_transform",
    "norm",
    "poisson_bracket",
    "project_degree",
    "run_counterterm_theorem",
    "run_lowdim",
    "run_nls_kam",
]
