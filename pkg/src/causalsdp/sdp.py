"""Compilation of relaxations into standard-form SDPs, solving, certificates.

``compile_relaxation`` folds known values into the constant part, eliminates
substituted variables by merging their (scaled) cell indicators into the
surviving variable's basis, and turns lower bounds and support constraints
into rows of an auxiliary diagonal block.  ``solve`` runs the embedded
interior-point method; feasibility problems are always reformulated as
maximizing the smallest eigenvalue of the moment matrix, whose sign decides
feasibility and whose dual matrix yields the infeasibility certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .alphabet import ProbabilityLabel
from .ipm import BlockProblem, solve_block_sdp
from .relaxation import AffineExpr, IDENTITY_VID, Relaxation, ZERO_CELL

FEAS_TOL = 1e-7          # feas-as-optim optimum below -FEAS_TOL means infeasible
DEFAULT_SOLVER_CAP = 400
DEFAULT_GAP_TOL = 1e-8
DEFAULT_MAX_ITER = 200


class SdpError(ValueError):
    """Raised for invalid solver usage."""


@dataclass
class LpRow:
    """shift + sum(coeff * x) >= 0."""

    shift: float
    terms: dict[int, float]  # position -> coefficient
    kind: str = "bound"      # bound | support | internal


@dataclass
class ValueTerm:
    """A constant-folded moment variable, for certificate reconstruction."""

    vid: int
    display: str
    labels: tuple[ProbabilityLabel, ...] | None  # () = plain constant
    value: float
    cells: list[int]  # flat positions i*n + j


@dataclass
class SdpProblem:
    """Numeric standard-form data compiled from a relaxation."""

    n: int
    free_vids: list[int]
    free_display: list[str]
    constant_part: np.ndarray
    cell_rows: np.ndarray
    cell_cols: np.ndarray
    cell_vals: np.ndarray
    cell_vpos: np.ndarray
    lp_rows: list[LpRow]
    lower_bounds: dict[int, float]
    equalities: list[tuple[str, str]]
    objective: np.ndarray | None
    objective_const: float
    direction: str
    value_terms: list[ValueTerm]
    lpi_specific: bool
    presolve_infeasible: str | None
    relaxation: Relaxation = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.free_vids)


@dataclass
class MomentCertificate:
    """Affine infeasibility witness over the valued moments.

    ``constant + sum(coeff * value(term))`` is non-negative for every
    assignment completable to a PSD moment matrix and strictly negative on
    the tested one.  When linearized polynomial substitutions were active the
    witness only applies to the tested distribution.
    """

    terms: list[tuple[str, tuple[ProbabilityLabel, ...] | None, float]]
    constant: float
    lpi_specific: bool
    free_residual: float

    def evaluate(self, values: dict[str, float]) -> float:
        total = self.constant
        for display, _, coeff in self.terms:
            total += coeff * values[display]
        return total


@dataclass
class SdpSolution:
    """Solver outcome: status, optimum, primal/dual data, certificate."""

    status: str  # optimal | feasible | infeasible | unknown
    objective_value: float | None
    primal: dict[str, float]
    dual_matrix: np.ndarray | None
    certificate: MomentCertificate | None
    iterations: int = 0
    diagnostics: str = ""


def compile_relaxation(r: Relaxation) -> SdpProblem:
    """Fold values and substitutions into standard-form SDP data."""
    resolve_cache: dict[int, AffineExpr] = {}

    def resolve(vid: int) -> AffineExpr:
        hit = resolve_cache.get(vid)
        if hit is not None:
            return hit
        if vid in r.known_values:
            out = AffineExpr(const=r.known_values[vid])
        elif vid in r.substitutions:
            sub = r.substitutions[vid]
            out = AffineExpr(const=sub.const)
            for v, c in sub.terms.items():
                inner = resolve(v)
                out.const += c * inner.const
                for v2, c2 in inner.terms.items():
                    out.add(v2, c * c2)
            out.prune()
        else:
            out = AffineExpr(terms={vid: 1.0})
        resolve_cache[vid] = out
        return out

    n = r.n
    C0 = np.zeros((n, n))
    free_pos: dict[int, int] = {}
    free_vids: list[int] = []

    def pos_of(vid: int) -> int:
        p = free_pos.get(vid)
        if p is None:
            p = len(free_vids)
            free_pos[vid] = p
            free_vids.append(vid)
        return p

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    vpos: list[int] = []
    known_cells: dict[int, list[int]] = {}

    mat = r.matrix
    for i in range(n):
        for j in range(n):
            vid = int(mat[i, j])
            if vid == ZERO_CELL:
                continue
            if vid in r.known_values:
                C0[i, j] += r.known_values[vid]
                known_cells.setdefault(vid, []).append(i * n + j)
                continue
            expr = resolve(vid)
            if expr.const:
                C0[i, j] += expr.const
            for v, c in expr.terms.items():
                rows.append(i)
                cols.append(j)
                vals.append(c)
                vpos.append(pos_of(v))

    # Lower bounds from non-negativity flags on surviving free variables.
    lp_rows: list[LpRow] = []
    lower_bounds: dict[int, float] = {}
    for vid in free_vids:
        if r.variables[vid].nonneg:
            lower_bounds[pos_of(vid)] = 0.0

    presolve = r.presolve_infeasible
    seen_rows: set = set()
    for expr in r.support_rows:
        resolved = AffineExpr(expr.const)
        for v, c in expr.terms.items():
            inner = resolve(v)
            resolved.const += c * inner.const
            for v2, c2 in inner.terms.items():
                resolved.add(v2, c * c2)
        resolved.prune()
        if not resolved.terms:
            if resolved.const < -1e-9 and presolve is None:
                presolve = "support constraint reduces to a violated constant"
            continue
        terms = {pos_of(v): c for v, c in resolved.terms.items()}
        sig = (round(resolved.const, 12), tuple(sorted((p, round(c, 12)) for p, c in terms.items())))
        if sig in seen_rows:
            continue
        seen_rows.add(sig)
        lp_rows.append(LpRow(shift=resolved.const, terms=terms, kind="support"))
        if len(terms) == 1:
            (p, c), = terms.items()
            if c > 0:
                lower_bounds[p] = max(lower_bounds.get(p, -math.inf), -resolved.const / c)

    for p, bound in lower_bounds.items():
        row = LpRow(shift=-bound, terms={p: 1.0}, kind="bound")
        sig = (round(row.shift, 12), ((p, 1.0),))
        if sig not in seen_rows:
            seen_rows.add(sig)
            lp_rows.append(row)

    objective = None
    obj_const = r.objective_const
    if r.objective is not None:
        objective = np.zeros(len(free_vids))
        pending = list(r.objective.items())
        for vid, coeff in pending:
            expr = resolve(vid)
            obj_const += coeff * expr.const
            for v, c in expr.terms.items():
                objective = _grow(objective, pos_of(v) + 1)
                objective[pos_of(v)] += coeff * c
        objective = _grow(objective, len(free_vids))

    value_terms = []
    for vid, cells in known_cells.items():
        value_terms.append(
            ValueTerm(
                vid=vid,
                display=r.var_display(vid),
                labels=r.known_provenance.get(vid),
                value=r.known_values[vid],
                cells=cells,
            )
        )
    value_terms.sort(key=lambda t: t.vid)

    equalities = []
    for vid, sub in sorted(r.substitutions.items()):
        parts = [f"{sub.const:.12g}"] if sub.const else []
        parts += [f"{c:.12g}*{r.var_display(v)}" for v, c in sorted(sub.terms.items())]
        equalities.append((r.var_display(vid), " + ".join(parts) if parts else "0"))

    return SdpProblem(
        n=n,
        free_vids=free_vids,
        free_display=[r.var_display(v) for v in free_vids],
        constant_part=C0,
        cell_rows=np.asarray(rows, dtype=np.int64),
        cell_cols=np.asarray(cols, dtype=np.int64),
        cell_vals=np.asarray(vals, dtype=float),
        cell_vpos=np.asarray(vpos, dtype=np.int64),
        lp_rows=lp_rows,
        lower_bounds=lower_bounds,
        equalities=equalities,
        objective=objective,
        objective_const=obj_const,
        direction=r.direction,
        value_terms=value_terms,
        lpi_specific=r.use_lpi,
        presolve_infeasible=presolve,
        relaxation=r,
    )


def _grow(arr: np.ndarray, size: int) -> np.ndarray:
    if len(arr) >= size:
        return arr
    out = np.zeros(size)
    out[: len(arr)] = arr
    return out


def _block_problem(p: SdpProblem, feasibility: bool) -> tuple[BlockProblem, int | None]:
    """Assemble solver data; appends the min-eigenvalue variable when asked."""
    m = p.m
    rows = list(p.cell_rows)
    cols = list(p.cell_cols)
    vals = list(p.cell_vals)
    vpos = list(p.cell_vpos)
    lp = [(r.shift, dict(r.terms)) for r in p.lp_rows]

    t_pos = None
    if feasibility:
        t_pos = m
        m += 1
        for i in range(p.n):
            rows.append(i)
            cols.append(i)
            vals.append(-1.0)
            vpos.append(t_pos)
        lp.append((1.0, {t_pos: -1.0}))  # cap t <= 1: keeps the problem bounded
        c = np.zeros(m)
        c[t_pos] = -1.0  # min -t
    else:
        c = np.array(p.objective, dtype=float)
        if p.direction == "max":
            c = -c

    d = len(lp)
    lp_shift = np.array([s for s, _ in lp]) if d else np.zeros(0)
    lr, lv, lc = [], [], []
    for k, (_, terms) in enumerate(lp):
        for v, coeff in terms.items():
            lr.append(k)
            lv.append(v)
            lc.append(coeff)

    block = BlockProblem(
        n=p.n,
        m=m,
        c=c,
        C0=p.constant_part.copy(),
        cell_rows=np.asarray(rows, dtype=np.int64),
        cell_cols=np.asarray(cols, dtype=np.int64),
        cell_vals=np.asarray(vals, dtype=float),
        cell_vpos=np.asarray(vpos, dtype=np.int64),
        lp_shift=lp_shift,
        lp_row=np.asarray(lr, dtype=np.int64),
        lp_var=np.asarray(lv, dtype=np.int64),
        lp_coef=np.asarray(lc, dtype=float),
    )
    return block, t_pos


def solve(
    p: SdpProblem,
    feas_as_optim: bool = False,
    solver_cap: int = DEFAULT_SOLVER_CAP,
    tol: float = DEFAULT_GAP_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    verbose: bool = False,
) -> SdpSolution:
    """Solve a compiled problem with the embedded interior-point method.

    Problems with an objective are optimized directly.  Problems without one
    are feasibility tests, always run in the max-min-eigenvalue form; the
    certificate is extracted for infeasible outcomes.  ``feas_as_optim`` only
    records the eigenvalue optimum explicitly; the decision rule is the same.
    """
    if p.presolve_infeasible:
        return SdpSolution(
            status="infeasible",
            objective_value=None,
            primal={},
            dual_matrix=None,
            certificate=None,
            diagnostics=f"presolve: {p.presolve_infeasible}",
        )
    if p.n > solver_cap:
        return SdpSolution(
            status="unknown",
            objective_value=None,
            primal={},
            dual_matrix=None,
            certificate=None,
            diagnostics=(
                f"matrix size {p.n} exceeds the embedded solver cap {solver_cap}; "
                "export the problem instead"
            ),
        )

    feasibility = p.objective is None
    block, t_pos = _block_problem(p, feasibility)
    result = solve_block_sdp(block, tol=tol, max_iter=max_iter, verbose=verbose)

    primal = {name: float(result.x[k]) for k, name in enumerate(p.free_display)}
    diag = f"ipm {result.status} in {result.iterations} iterations"
    if result.status != "converged":
        return SdpSolution(
            status="unknown",
            objective_value=None,
            primal=primal,
            dual_matrix=result.X,
            certificate=None,
            iterations=result.iterations,
            diagnostics=diag,
        )

    if feasibility:
        t_star = float(result.x[t_pos])
        if t_star >= -FEAS_TOL:
            return SdpSolution(
                status="feasible",
                objective_value=t_star,
                primal=primal,
                dual_matrix=result.X,
                certificate=None,
                iterations=result.iterations,
                diagnostics=diag,
            )
        sol = SdpSolution(
            status="infeasible",
            objective_value=t_star,
            primal=primal,
            dual_matrix=result.X,
            certificate=None,
            iterations=result.iterations,
            diagnostics=diag,
        )
        sol.certificate = extract_certificate(sol, p, block_result=result)
        return sol

    internal = result.pobj
    user_value = (-internal if p.direction == "max" else internal) + p.objective_const
    return SdpSolution(
        status="optimal",
        objective_value=user_value,
        primal=primal,
        dual_matrix=result.X,
        certificate=None,
        iterations=result.iterations,
        diagnostics=diag,
    )


def extract_certificate(sol: SdpSolution, p: SdpProblem, block_result=None) -> MomentCertificate:
    """Build the affine witness from the dual matrix of an infeasible solve.

    Coefficients are the dual mass on each valued moment's cells; the
    constant collects the remaining constant structure (identity cells and
    diagonal-block shifts).  Normalized so the largest coefficient is 1.
    """
    if sol.dual_matrix is None:
        raise SdpError("certificate extraction needs a dual matrix")
    if sol.status not in ("infeasible",):
        raise SdpError("certificates exist only for infeasible problems")
    Z = sol.dual_matrix
    n = p.n
    flatZ = Z.reshape(-1)

    terms = []
    folded = 0.0
    for vt in p.value_terms:
        coeff = float(np.sum(flatZ[vt.cells]))
        folded += coeff * vt.value
        terms.append((vt.display, vt.labels, coeff))

    constant = float(np.tensordot(p.constant_part, Z)) - folded
    if block_result is not None and len(block_result.lp_w):
        shifts = np.array([r.shift for r in p.lp_rows] + [1.0])  # trailing t-cap row
        constant += float(shifts @ block_result.lp_w)

    # Dual mass left on free moment variables; should vanish at optimality.
    residual = 0.0
    if block_result is not None:
        dense = np.bincount(
            np.asarray(p.cell_vpos, dtype=np.int64),
            weights=np.asarray(p.cell_vals) * Z[p.cell_rows, p.cell_cols],
            minlength=p.m,
        )
        lp_adj = np.zeros(p.m)
        for k, row in enumerate(p.lp_rows):
            for v, c in row.terms.items():
                lp_adj[v] += c * block_result.lp_w[k]
        residual = float(np.max(np.abs(dense + lp_adj))) if p.m else 0.0

    scale = max((abs(c) for _, _, c in terms), default=0.0)
    if scale <= 0.0:
        scale = max(abs(constant), 1.0)
    terms = [(d, lbl, c / scale) for d, lbl, c in terms]
    return MomentCertificate(
        terms=terms,
        constant=constant / scale,
        lpi_specific=p.lpi_specific,
        free_residual=residual / scale,
    )
