"""Causal compatibility of observed distributions via inflation SDP relaxations.

The package builds moment-matrix semidefinite relaxations for causal
scenarios with latent (classical or quantum) sources, solves them with an
embedded interior-point method, and extracts infeasibility certificates as
polynomial inequalities in observable probabilities.
"""

from .scenario import CausalScenario, NetworkScenario, ScenarioError, interrupt, parse_scenario
from .alphabet import (
    InflationSpec,
    Operator,
    OperatorAlphabet,
    ProbabilityLabel,
    SymmetryGroup,
    build_alphabet,
    knowable,
    symmetry_group,
)
from .algebra import Factorization, Monomial, canon, factorize, is_physical, is_sandwich_positive, orbit_representative
from .relaxation import GeneratingSet, Relaxation, RelaxationError, build_columns, generate_relaxation
from .sdp import SdpProblem, SdpSolution, compile_relaxation, extract_certificate, solve
from .formats import export_csv, export_sdpa, read_sdpa
from .analysis import ParamFamily, ProbabilityCertificate, certificate_as_probs, max_within_feasible
from . import oracles

__version__ = "0.1.0"


def about() -> str:
    """Return a human-readable summary of the installed package and core deps."""
    import platform
    import sys

    import matplotlib
    import numpy
    import scipy

    lines = [
        "causalsdp: inflation-based causal compatibility via semidefinite relaxations",
        "=" * 76,
        f"causalsdp version:   {__version__}",
        "",
        "Core dependencies",
        "-----------------",
        f"NumPy version:       {numpy.__version__}",
        f"SciPy version:       {scipy.__version__}",
        f"Matplotlib version:  {matplotlib.__version__}",
        "",
        f"Python version:      {sys.version.split()[0]}",
        f"Platform info:       {platform.system()} ({platform.machine()})",
    ]
    return "\n".join(lines)


__all__ = [
    "CausalScenario",
    "NetworkScenario",
    "ScenarioError",
    "parse_scenario",
    "interrupt",
    "InflationSpec",
    "Operator",
    "OperatorAlphabet",
    "ProbabilityLabel",
    "SymmetryGroup",
    "build_alphabet",
    "symmetry_group",
    "knowable",
    "Monomial",
    "Factorization",
    "canon",
    "orbit_representative",
    "factorize",
    "is_physical",
    "is_sandwich_positive",
    "GeneratingSet",
    "Relaxation",
    "RelaxationError",
    "build_columns",
    "generate_relaxation",
    "SdpProblem",
    "SdpSolution",
    "compile_relaxation",
    "solve",
    "extract_certificate",
    "export_csv",
    "export_sdpa",
    "read_sdpa",
    "ProbabilityCertificate",
    "ParamFamily",
    "certificate_as_probs",
    "max_within_feasible",
    "oracles",
    "about",
]
