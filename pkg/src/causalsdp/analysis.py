"""High-level workflows: probability certificates and critical parameters.

Certificates from infeasible solves become polynomials in original-scenario
probabilities.  ``max_within_feasible`` walks a one-parameter distribution
family to the feasibility boundary, either by bisection or by jumping to the
largest root of the current certificate (the dual method).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .alphabet import ProbabilityLabel
from .expressions import marginal_value, validate_distribution
from .relaxation import Relaxation
from .sdp import (
    DEFAULT_MAX_ITER,
    DEFAULT_SOLVER_CAP,
    MomentCertificate,
    SdpSolution,
    compile_relaxation,
    solve,
)

FAMILY_MAX_DEGREE = 4
_RESIDUAL_CAP = 1e-5


class AnalysisError(ValueError):
    """Raised for invalid analysis inputs."""


@dataclass
class ProbabilityCertificate:
    """Polynomial inequality in probability labels, >= 0 on the feasible set.

    ``terms`` maps a product of labels (a sorted tuple) to its coefficient.
    ``lpi_flag`` marks certificates that only apply to the tested
    distribution because linearized polynomial substitutions were active.
    """

    terms: dict[tuple[ProbabilityLabel, ...], float]
    constant: float
    lpi_flag: bool
    party_names: tuple[str, ...]

    def evaluate(self, p: np.ndarray, scn) -> float:
        total = self.constant
        for labels, coeff in self.terms.items():
            prod = 1.0
            for label in labels:
                prod *= marginal_value(p, scn, label)
            total += coeff * prod
        return total

    def pretty(self, digits: int = 3) -> str:
        entries = sorted(
            self.terms.items(),
            key=lambda kv: (len(kv[0]), tuple(l.display(self.party_names) for l in kv[0])),
        )
        parts = []
        for labels, coeff in entries:
            factor = "*".join(l.display(self.party_names) for l in labels)
            parts.append(f"{coeff:+.{digits}f} {factor}")
        parts.append(f"{self.constant:+.{digits}f}")
        return " ".join(parts) if parts else "0"

    def as_dict(self) -> dict:
        return {
            "terms": {
                "*".join(l.display(self.party_names) for l in labels): coeff
                for labels, coeff in self.terms.items()
            },
            "constant": self.constant,
            "distribution_specific": self.lpi_flag,
        }


def certificate_as_probs(
    sol: SdpSolution, r: Relaxation, clean: bool = True, clean_tol: float = 1e-10
) -> ProbabilityCertificate:
    """Render the infeasibility certificate as a probability polynomial.

    Every certificate term must be a product of probability labels; raw
    numeric assignments that are not marginals cannot be expressed and raise.
    """
    cert = sol.certificate
    if cert is None:
        raise AnalysisError("solution carries no certificate (is it infeasible?)")
    if cert.free_residual > _RESIDUAL_CAP:
        raise AnalysisError(
            f"certificate is unreliable: dual mass {cert.free_residual:.2e} "
            "remains on free variables"
        )
    terms: dict[tuple[ProbabilityLabel, ...], float] = {}
    constant = cert.constant
    for display, labels, coeff in cert.terms:
        if clean and abs(coeff) < clean_tol:
            continue
        if labels is None:
            raise AnalysisError(
                f"certificate touches the non-probability moment {display}"
            )
        if len(labels) == 0:
            constant += coeff  # identity moment
            continue
        key = tuple(sorted(labels, key=lambda l: (len(l.parties), l.parties, l.settings, l.outcomes)))
        terms[key] = terms.get(key, 0.0) + coeff
    return ProbabilityCertificate(
        terms=terms,
        constant=constant,
        lpi_flag=cert.lpi_specific,
        party_names=r.network.parties,
    )


@dataclass
class ParamFamily:
    """One-parameter distribution family p(t) = sum_k t^k * coeff[k].

    Coefficient arrays share the distribution shape; the family must be a
    valid distribution at both bounds and the midpoint, and its per-cell
    degree is capped so certificate roots stay polynomial.
    """

    coeffs: list[np.ndarray]
    bounds: tuple[float, float]
    name: str = "t"

    def __post_init__(self):
        if len(self.coeffs) - 1 > FAMILY_MAX_DEGREE:
            raise AnalysisError(
                f"family degree {len(self.coeffs) - 1} exceeds {FAMILY_MAX_DEGREE}"
            )
        self.coeffs = [np.asarray(c, dtype=float) for c in self.coeffs]
        lo, hi = self.bounds
        if not lo < hi:
            raise AnalysisError("family bounds must satisfy lo < hi")

    @classmethod
    def mixture_with_uniform(cls, p: np.ndarray, scn, bounds=(0.0, 1.0), name="v") -> "ParamFamily":
        """t * p + (1 - t) * uniform over outcomes."""
        p = np.asarray(p, dtype=float)
        n_outcomes = int(np.prod(scn.outcomes_per_party))
        uniform = np.ones_like(p) / n_outcomes
        return cls(coeffs=[uniform, p - uniform], bounds=tuple(bounds), name=name)

    def distribution_at(self, t: float) -> np.ndarray:
        out = np.zeros_like(self.coeffs[0])
        for k, c in enumerate(self.coeffs):
            out += (t ** k) * c
        return out

    def validate(self, scn) -> None:
        lo, hi = self.bounds
        for t in (lo, hi, (lo + hi) / 2.0):
            validate_distribution(self.distribution_at(t), scn)

    def label_poly(self, label: ProbabilityLabel, scn) -> np.ndarray:
        """Ascending polynomial coefficients of the label's marginal in t."""
        return np.array([marginal_value(c, scn, label) for c in self.coeffs])


@dataclass
class CriticalResult:
    """Outcome of a critical-parameter search."""

    value: float
    solve_count: int
    method: str
    flag: str = "ok"  # ok | all_feasible | none_feasible
    trace: list = field(default_factory=list)


def _certificate_poly(cert: MomentCertificate, family: ParamFamily, scn) -> np.ndarray:
    """The certificate evaluated along the family, as ascending coefficients."""
    poly = np.array([cert.constant])
    for display, labels, coeff in cert.terms:
        if labels is None:
            raise AnalysisError(
                f"certificate touches the non-probability moment {display}"
            )
        factor = np.array([coeff])
        for label in labels:
            factor = np.convolve(factor, family.label_poly(label, scn))
        size = max(len(poly), len(factor))
        poly = np.pad(poly, (0, size - len(poly)))
        poly = poly + np.pad(factor, (0, size - len(factor)))
    return poly


def _largest_root_inside(poly: np.ndarray, lo: float, hi: float) -> float | None:
    """Largest real root of an ascending-coefficient polynomial in (lo, hi)."""
    coeffs = np.asarray(poly, dtype=float)
    scale = np.max(np.abs(coeffs))
    if scale == 0.0:
        return None
    coeffs = coeffs / scale
    while len(coeffs) > 1 and abs(coeffs[-1]) < 1e-13:
        coeffs = coeffs[:-1]
    if len(coeffs) < 2:
        return None
    roots = np.roots(coeffs[::-1])  # companion-matrix eigenvalues
    real = roots[np.abs(roots.imag) < 1e-9].real
    inside = real[(real > lo) & (real < hi)]
    if len(inside) == 0:
        return None
    return float(np.max(inside))


def max_within_feasible(
    r: Relaxation,
    family: ParamFamily,
    method: str = "bisection",
    tolerance: float = 1e-3,
    use_lpi: bool = False,
    value_products: bool = True,
    solver_cap: int = DEFAULT_SOLVER_CAP,
    max_iter: int = DEFAULT_MAX_ITER,
    verbose: bool = False,
) -> CriticalResult:
    """Largest family parameter whose distribution stays feasible.

    Assumes feasibility is monotone along the family.  ``bisection`` takes
    exactly ceil(log2(width / tolerance)) solves; ``dual`` reuses each
    infeasibility certificate to pick the next candidate at its largest root,
    falling back to a bisection step when no root lies inside the bracket.
    """
    if method not in ("bisection", "dual"):
        raise AnalysisError(f"unknown method {method!r}")
    scn = r.network.original
    family.validate(scn)
    lo, hi = family.bounds
    trace: list[tuple[float, float | None, str]] = []
    solves = 0

    def probe(t: float) -> SdpSolution:
        nonlocal solves
        r.set_distribution(family.distribution_at(t), use_lpi=use_lpi,
                           value_products=value_products)
        sol = solve(compile_relaxation(r), feas_as_optim=True,
                    solver_cap=solver_cap, max_iter=max_iter)
        solves += 1
        trace.append((t, sol.objective_value, sol.status))
        if verbose:
            print(f"  {family.name} = {t:.6f}: {sol.status} "
                  f"(min-eigenvalue optimum {sol.objective_value})")
        return sol

    def is_feasible(sol: SdpSolution) -> bool:
        # Solver failures cannot certify infeasibility.
        return sol.status in ("feasible", "unknown")

    if method == "bisection":
        width = hi - lo
        n_steps = max(0, math.ceil(math.log2(width / tolerance)))
        saw_feasible = False
        saw_infeasible = False
        for _ in range(n_steps):
            mid = (lo + hi) / 2.0
            if is_feasible(probe(mid)):
                saw_feasible = True
                lo = mid
            else:
                saw_infeasible = True
                hi = mid
        if not saw_infeasible:
            return CriticalResult(family.bounds[1], solves, method, "all_feasible", trace)
        if not saw_feasible:
            return CriticalResult(family.bounds[0], solves, method, "none_feasible", trace)
        return CriticalResult(lo, solves, method, "ok", trace)

    # Dual method: start at the upper bound, ride the certificates down.
    sol = probe(hi)
    if is_feasible(sol):
        return CriticalResult(hi, solves, method, "all_feasible", trace)
    cur_lo, cur_hi = lo, hi
    feasible_seen = False
    certificate = sol.certificate
    while cur_hi - cur_lo > tolerance:
        margin = max(tolerance / 4.0, (cur_hi - cur_lo) * 1e-3)
        candidate = None
        if certificate is not None:
            poly = _certificate_poly(certificate, family, scn)
            candidate = _largest_root_inside(poly, cur_lo + margin, cur_hi - margin)
        if candidate is None:
            candidate = (cur_lo + cur_hi) / 2.0
        sol = probe(candidate)
        if is_feasible(sol):
            feasible_seen = True
            cur_lo = candidate
        else:
            cur_hi = candidate
            certificate = sol.certificate
    if not feasible_seen:
        sol = probe(cur_lo)
        if is_feasible(sol):
            return CriticalResult(cur_lo, solves, method, "ok", trace)
        return CriticalResult(family.bounds[0], solves, method, "none_feasible", trace)
    return CriticalResult(cur_lo, solves, method, "ok", trace)
