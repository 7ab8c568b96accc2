"""Adapted optimal transport on finite scenario trees."""

from .barycenter import (BarycenterResult, CandidateSupport, bicausal_barycenter_search, causal_barycenter,
                         load_candidates, verify_barycenter_dual)
from .bicausal_dp import (BicausalSolution, ValueProcess, adapted_wasserstein, dual_from_value,
                          lipschitz_diagnostic, solve_bicausal, value_process, verify_value_martingale)
from .causal_solver import extract_dual, polar_certificate, polar_max, solve_adapted_lp
from .costs import CostFunction, cost_tensor, load_cost
from .coupling import Coupling, check_coupling, disintegrate_coupling, load_coupling, product
from .errors import AdotError, NumericalFailure
from .hedging import check_na, extract_strategy, load_payoff, superhedge_price, verify_superhedge
from .lp import BACKEND, LinearProgram, solve_lp, solve_transport
from .potentials import DualPotential
from .process import (FilteredProcess, Node, canonicalize, disintegrate, from_paths, is_martingale,
                      load_process, read_process)

__version__ = "0.1.0"

__all__ = [
    "AdotError", "BACKEND", "BarycenterResult", "BicausalSolution", "CandidateSupport", "CostFunction",
    "Coupling", "DualPotential", "FilteredProcess", "LinearProgram", "Node", "NumericalFailure",
    "ValueProcess", "adapted_wasserstein", "bicausal_barycenter_search", "canonicalize", "causal_barycenter",
    "check_coupling", "check_na", "cost_tensor", "disintegrate", "disintegrate_coupling", "dual_from_value",
    "extract_dual", "extract_strategy", "from_paths", "is_martingale", "lipschitz_diagnostic",
    "load_candidates", "load_cost", "load_coupling", "load_payoff", "load_process", "polar_certificate",
    "polar_max", "product", "read_process", "solve_adapted_lp", "solve_bicausal", "solve_lp",
    "solve_transport", "superhedge_price", "value_process", "verify_barycenter_dual", "verify_superhedge",
    "verify_value_martingale",
]
