"""Moment-matrix relaxations: generating sets, symbolic matrices, constraints.

The moment matrix of a generating set ``cols`` has cell (i, j) holding the
moment of ``adjoint(cols[i]) * cols[j]``.  Cells that are equal under the
projector algebra, copy-permutation symmetry, or Hermitian conjugation share
one variable.  Knowable variables are marginals of the original scenario;
physical and sandwich-positive variables carry non-negativity bounds;
distribution values, factorization (linearized polynomial) substitutions, and
support constraints further restrict the feasible set.
"""

from __future__ import annotations

import itertools
import math
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from .alphabet import OperatorAlphabet, ProbabilityLabel, knowable
from .algebra import Monomial, WordAlgebra, adjoint, factorize, is_physical, is_sandwich_positive
from .expressions import (
    ExpressionError,
    diagonal_word,
    label_to_terms,
    marginal_value,
    parse_label,
    parse_objective,
    validate_distribution,
)

Word = tuple[int, ...]

ZERO_CELL = -1
IDENTITY_VID = 0

VALUE_CONFLICT_TOL = 1e-12
SUPPORT_TOL = 1e-12


class RelaxationError(ValueError):
    """Raised for invalid relaxation construction or constraint setting."""


@dataclass(frozen=True)
class GeneratingSet:
    """Deduplicated canonical column monomials, identity first."""

    columns: tuple[Word, ...]
    spec_string: str = "explicit"
    duplicates_merged: int = 0

    def __len__(self) -> int:
        return len(self.columns)


_KIND_RE = re.compile(r"^(npa|local|physical)\s*(\d+)$")


def _party_words_upto(algebra: WordAlgebra, party: int, length: int) -> list[Word]:
    """All canonical words of one party's operators, lengths 0..length."""
    alphabet = algebra.alphabet
    ops = [i for i in range(len(alphabet)) if alphabet.party[i] == party]
    levels: list[set[Word]] = [{()}]
    for t in range(1, length + 1):
        frontier: set[Word] = set()
        for w in levels[t - 1]:
            for op in ops:
                r = algebra.reduce_word(w + (op,))
                if r is not None and len(r) == t:
                    frontier.add(r)
        levels.append(frontier)
    out: list[Word] = []
    for level in levels:
        out.extend(sorted(level))
    return out


def _commuting_subsets(algebra: WordAlgebra, party: int, size: int) -> list[Word]:
    """Per-party products of <= size pairwise-commuting operators."""
    alphabet = algebra.alphabet
    ops = [i for i in range(len(alphabet)) if alphabet.party[i] == party]
    out: list[Word] = [()]
    for k in range(1, size + 1):
        for combo in itertools.combinations(ops, k):
            if all(
                algebra.commutes(a, b) for a, b in itertools.combinations(combo, 2)
            ):
                reduced = algebra.reduce_word(combo)
                if reduced is not None and len(reduced) == k:
                    out.append(reduced)
    return out


def build_columns(
    algebra: WordAlgebra,
    kind,
    max_monomial_length: int | None = None,
) -> GeneratingSet:
    """Build a generating set from a specification string or explicit list.

    Recognized strings: ``npa K`` (all words of length <= K), ``local K``
    (words with <= K operators per party), ``physical K`` (local-K words
    whose same-party operators pairwise commute).  ``max_monomial_length``
    truncates the total word length.  Explicit iterables of monomials or
    words are canonicalized and deduplicated, counting merged duplicates.
    """
    alphabet = algebra.alphabet
    duplicates = 0

    if isinstance(kind, str):
        m = _KIND_RE.match(kind.strip().lower())
        if not m:
            raise RelaxationError(f"unknown generating-set specification {kind!r}")
        family, k = m.group(1), int(m.group(2))
        if k < 1:
            raise RelaxationError("generating-set level must be >= 1")
        label = f"{family}{k}"

        if family == "npa":
            levels: list[set[Word]] = [{()}]
            for t in range(1, k + 1):
                frontier: set[Word] = set()
                for w in levels[t - 1]:
                    for op in range(len(alphabet)):
                        r = algebra.reduce_word(w + (op,))
                        if r is not None and len(r) == t:
                            frontier.add(r)
                levels.append(frontier)
            words: set[Word] = set()
            for level in levels:
                words.update(level)
        else:
            if family == "local":
                per_party = [
                    _party_words_upto(algebra, p, k)
                    for p in range(alphabet.network.n_parties)
                ]
            else:  # physical
                per_party = [
                    _commuting_subsets(algebra, p, k)
                    for p in range(alphabet.network.n_parties)
                ]
            words = set()
            for blocks in itertools.product(*per_party):
                word = tuple(itertools.chain.from_iterable(blocks))
                words.add(word)
    else:
        label = "explicit"
        words = set()
        raw = 0
        for item in kind:
            if isinstance(item, Monomial):
                if item.is_zero:
                    continue
                word = item.indices
            else:
                word = tuple(item)
            reduced = algebra.reduce_word(word)
            if reduced is None:
                continue
            raw += 1
            if reduced in words:
                duplicates += 1
            words.add(reduced)

    if max_monomial_length is not None:
        words = {w for w in words if len(w) <= max_monomial_length}
    words.add(())

    ordered = sorted(words, key=lambda w: (len(w), w))
    return GeneratingSet(columns=tuple(ordered), spec_string=label, duplicates_merged=duplicates)


@dataclass
class VariableInfo:
    """One canonical moment variable of the relaxation."""

    vid: int
    word: Word
    label: ProbabilityLabel | None
    physical: bool
    nonneg: bool


@dataclass
class AffineExpr:
    """const + sum(coeff * var)."""

    const: float = 0.0
    terms: dict[int, float] = field(default_factory=dict)

    def add(self, vid: int, coeff: float) -> None:
        self.terms[vid] = self.terms.get(vid, 0.0) + coeff

    def scaled(self, factor: float) -> "AffineExpr":
        return AffineExpr(self.const * factor, {v: c * factor for v, c in self.terms.items()})

    def prune(self, tol: float = 1e-14) -> "AffineExpr":
        self.terms = {v: c for v, c in self.terms.items() if abs(c) > tol}
        return self


class Relaxation:
    """A symbolic moment matrix plus value, bound, and objective state.

    Single writer during ``set_*`` calls; immutable once handed to the
    solver.  ``matrix`` holds variable ids, with -1 marking cells whose
    monomial is zero.
    """

    def __init__(self, algebra: WordAlgebra, gens: GeneratingSet, supports_problem: bool = False,
                 progress: bool = False):
        self.algebra = algebra
        self.alphabet: OperatorAlphabet = algebra.alphabet
        self.network = algebra.alphabet.network
        self.columns = gens
        self.mode = "commuting" if algebra.commuting else "quantum"
        self.supports_problem = supports_problem

        self.variables: list[VariableInfo] = []
        self._vid_of_word: dict[Word, int] = {}

        self.known_values: dict[int, float] = {}
        self.known_provenance: dict[int, tuple[ProbabilityLabel, ...] | None] = {}
        self.substitutions: dict[int, AffineExpr] = {}
        self.support_rows: list[AffineExpr] = []  # each must be >= 0 after resolution
        self.use_lpi = False
        self.objective: dict[int, float] | None = None
        self.objective_const = 0.0
        self.direction = "max"
        self.presolve_infeasible: str | None = None

        self._ensure_variable(())  # identity is always variable 0
        if not supports_problem:
            self.known_values[IDENTITY_VID] = 1.0
            self.known_provenance[IDENTITY_VID] = ()

        n = len(gens.columns)
        self.n = n
        self.matrix = np.empty((n, n), dtype=np.int64)
        cell_cache: dict[Word, int] = {}
        adjoints = [adjoint(w) for w in gens.columns]
        for i in range(n):
            if progress and i % 64 == 0:
                print(f"  moment matrix: row {i}/{n}", file=sys.stderr)
            row_prefix = adjoints[i]
            for j in range(i, n):
                raw = row_prefix + gens.columns[j]
                vid = cell_cache.get(raw)
                if vid is None:
                    key = self._moment_key(raw)
                    vid = ZERO_CELL if key is None else self._ensure_variable(key)
                    cell_cache[raw] = vid
                self.matrix[i, j] = vid
                self.matrix[j, i] = vid

    # -- variables -----------------------------------------------------------

    def _moment_key(self, word: Word) -> Word | None:
        """Orbit- and conjugation-minimal representative of a raw word."""
        algebra = self.algebra
        reduced = algebra.reduce_word(word)
        if reduced is None:
            return None
        a = algebra.orbit_min(reduced)
        rev = algebra.reduce_word(adjoint(reduced))
        b = algebra.orbit_min(rev)
        return a if a <= b else b

    def _ensure_variable(self, word: Word) -> int:
        vid = self._vid_of_word.get(word)
        if vid is not None:
            return vid
        vid = len(self.variables)
        algebra = self.algebra
        mono = Monomial(indices=word)
        rev = algebra.reduce_word(adjoint(word))
        nonneg = is_sandwich_positive(algebra, mono) or (
            rev != word and is_sandwich_positive(algebra, Monomial(indices=rev))
        )
        info = VariableInfo(
            vid=vid,
            word=word,
            label=knowable(self.alphabet, word) if word else None,
            physical=is_physical(algebra, mono),
            nonneg=nonneg,
        )
        self.variables.append(info)
        self._vid_of_word[word] = vid
        return vid

    def var_display(self, vid: int) -> str:
        info = self.variables[vid]
        if info.label is not None:
            return info.label.display(self.network.parties)
        if not info.word:
            return "1"
        return "<" + self.algebra.display(Monomial(indices=info.word)) + ">"

    def resolve_key(self, key) -> int:
        """Map a label string, monomial, or word to its registry variable id."""
        if isinstance(key, str):
            key = key.strip()
            if key in ("1", ""):
                return IDENTITY_VID
            if key.startswith("p"):
                label = parse_label(key, self.network.parties)
                word = diagonal_word(self.alphabet, label)
            else:
                word = self._parse_word_string(key)
        elif isinstance(key, Monomial):
            word = key.indices
        elif isinstance(key, ProbabilityLabel):
            word = diagonal_word(self.alphabet, key)
        else:
            word = tuple(key)
        mk = self._moment_key(word)
        if mk is None:
            raise RelaxationError("key canonicalizes to the zero monomial")
        vid = self._vid_of_word.get(mk)
        if vid is None:
            raise RelaxationError(
                f"monomial {key!r} is not a variable of this relaxation"
            )
        return vid

    def _parse_word_string(self, text: str) -> Word:
        ops = []
        for token in text.replace("*", " ").split():
            idx = self.alphabet.op_from_name.get(token)
            if idx is None:
                raise RelaxationError(f"unknown operator {token!r}")
            ops.append(idx)
        return tuple(ops)

    # -- reports ---------------------------------------------------------------

    def counts(self) -> dict[str, int]:
        knowable_n = sum(1 for v in self.variables if v.label is not None)
        return {
            "columns": self.n,
            "variables": len(self.variables),
            "knowable": knowable_n,
            "nonnegative": sum(1 for v in self.variables if v.nonneg),
            "known_values": len(self.known_values),
            "substitutions": len(self.substitutions),
            "duplicate_columns_merged": self.columns.duplicates_merged,
        }

    # -- value state -------------------------------------------------------------

    def _reset_values(self) -> None:
        self.known_values = {}
        self.known_provenance = {}
        self.substitutions = {}
        self.support_rows = []
        self.presolve_infeasible = None
        if not self.supports_problem:
            self.known_values[IDENTITY_VID] = 1.0
            self.known_provenance[IDENTITY_VID] = ()

    def set_distribution(
        self,
        p: np.ndarray,
        use_lpi: bool = False,
        value_products: bool = True,
    ) -> "Relaxation":
        """Install the marginal values of a full distribution.

        Every knowable variable receives its marginal.  With
        ``value_products`` (default), variables all of whose independent
        factors are knowable become the product of the factor marginals.
        With ``use_lpi``, variables with a mix of knowable and unknowable
        factors are substituted by (product of known factors) times the
        variable of the remaining factors; the resulting problem then only
        certifies the tested distribution.
        """
        scn = self.network.original
        p = validate_distribution(np.asarray(p, dtype=float), scn)
        if self.supports_problem:
            support = {
                event for event in _all_events(scn) if p[_event_index(event, scn)] > SUPPORT_TOL
            }
            return self.set_supports_mode(support)

        self._reset_values()
        self.use_lpi = use_lpi
        algebra = self.algebra
        for info in self.variables[1:]:
            if info.label is not None:
                self.known_values[info.vid] = marginal_value(p, scn, info.label)
                self.known_provenance[info.vid] = (info.label,)
                continue
            components = factorize(algebra, Monomial(indices=info.word)).components
            if len(components) < 2:
                continue
            labels: list[ProbabilityLabel] = []
            values: list[float] = []
            remaining: list[Word] = []
            for comp in components:
                lbl = knowable(self.alphabet, comp.indices)
                if lbl is None:
                    remaining.append(comp.indices)
                else:
                    labels.append(lbl)
                    values.append(marginal_value(p, scn, lbl))
            if not labels:
                continue
            if not remaining:
                if value_products:
                    self.known_values[info.vid] = math.prod(values)
                    self.known_provenance[info.vid] = tuple(labels)
            elif use_lpi:
                target = self._moment_key(tuple(itertools.chain.from_iterable(remaining)))
                assert target is not None
                tgt = self._ensure_variable(target)
                expr = AffineExpr(terms={tgt: math.prod(values)})
                self.substitutions[info.vid] = expr
        return self

    def set_values(self, assignments: dict, use_lpi: bool = False) -> "Relaxation":
        """Assign numeric values to individual moments.

        Keys may be probability-label strings, operator-word strings,
        monomials, or operator index tuples; they must resolve to registry
        variables.  LPI propagation uses only the supplied values.
        """
        resolved: dict[int, float] = {}
        for key, value in assignments.items():
            vid = self.resolve_key(key)
            value = float(value)
            if vid == IDENTITY_VID and not self.supports_problem and abs(value - 1.0) > VALUE_CONFLICT_TOL:
                raise RelaxationError("the identity moment is fixed to 1")
            if vid in resolved and abs(resolved[vid] - value) > VALUE_CONFLICT_TOL:
                raise RelaxationError(
                    f"conflicting values for {self.var_display(vid)}: "
                    f"{resolved[vid]} vs {value}"
                )
            resolved[vid] = value
        for vid, value in resolved.items():
            old = self.known_values.get(vid)
            if old is not None and abs(old - value) > VALUE_CONFLICT_TOL:
                raise RelaxationError(
                    f"conflicting reassignment of {self.var_display(vid)}: {old} vs {value}"
                )
            self.known_values[vid] = value
            info = self.variables[vid]
            self.known_provenance[vid] = (info.label,) if info.label is not None else None

        if use_lpi:
            self.use_lpi = True
            by_word = {self.variables[v].word: x for v, x in self.known_values.items()}
            algebra = self.algebra
            for info in self.variables[1:]:
                if info.vid in self.known_values or info.vid in self.substitutions:
                    continue
                components = factorize(algebra, Monomial(indices=info.word)).components
                if len(components) < 2:
                    continue
                coeff = 1.0
                matched = 0
                remaining: list[Word] = []
                for comp in components:
                    key = self._moment_key(comp.indices)
                    if key in by_word:
                        coeff *= by_word[key]
                        matched += 1
                    else:
                        remaining.append(comp.indices)
                if matched == 0:
                    continue
                if not remaining:
                    self.known_values[info.vid] = coeff
                    self.known_provenance[info.vid] = None
                else:
                    target = self._moment_key(tuple(itertools.chain.from_iterable(remaining)))
                    tgt = self._ensure_variable(target)
                    self.substitutions[info.vid] = AffineExpr(terms={tgt: coeff})
        return self

    def set_objective(self, expr, direction: str = "max") -> "Relaxation":
        """Install a linear objective over moments.

        ``expr`` is an objective string (labels, correlators, constants) or a
        mapping from monomials/labels/words to coefficients.  Terms that
        canonicalize to zero drop out; terms outside the matrix span are
        errors.
        """
        if self.supports_problem:
            raise RelaxationError("objectives are not available for supports problems")
        if direction not in ("max", "min"):
            raise RelaxationError(f"direction must be 'max' or 'min', got {direction!r}")

        constant = 0.0
        raw_terms: dict[Word, float] = {}
        if isinstance(expr, str):
            constant, raw_terms = parse_objective(expr, self.alphabet)
        else:
            for key, coeff in expr.items():
                coeff = float(coeff)
                if isinstance(key, str) and key.strip().startswith("p"):
                    label = parse_label(key, self.network.parties)
                    for c, word in label_to_terms(self.alphabet, label):
                        if word:
                            raw_terms[word] = raw_terms.get(word, 0.0) + c * coeff
                        else:
                            constant += c * coeff
                elif isinstance(key, str) and key.strip() in ("1", ""):
                    constant += coeff
                else:
                    word = key.indices if isinstance(key, Monomial) else tuple(key)
                    raw_terms[word] = raw_terms.get(word, 0.0) + coeff

        objective: dict[int, float] = {}
        for word, coeff in raw_terms.items():
            key = self._moment_key(word)
            if key is None:
                continue  # zero monomial: the term drops
            vid = self._vid_of_word.get(key)
            if vid is None:
                raise RelaxationError(
                    "objective not representable in this relaxation "
                    f"(monomial {self.algebra.display(Monomial(indices=key))})"
                )
            if vid == IDENTITY_VID:
                constant += coeff
                continue
            objective[vid] = objective.get(vid, 0.0) + coeff

        self.objective = {v: c for v, c in objective.items() if abs(c) > 1e-15}
        self.objective_const = constant
        self.direction = direction
        return self

    # -- supports mode ---------------------------------------------------------

    def set_supports_mode(self, support) -> "Relaxation":
        """Constrain the rescaled relaxation by a distribution support.

        Events inside the support are bounded below by 1, events outside are
        fixed to 0, and the identity moment becomes a free variable bounded
        below by 1.  Events carrying eliminated last outcomes act through
        their normalization expansion.
        """
        if not self.supports_problem:
            raise RelaxationError("relaxation was not created with supports_problem=True")
        if self.objective:
            raise RelaxationError("supports mode cannot be combined with an objective")
        scn = self.network.original
        support = {tuple(int(x) for x in event) for event in support}
        for event in support:
            if len(event) != 2 * scn.n_parties:
                raise RelaxationError(f"support event {event} has wrong arity")
        self._reset_values()

        # Variable-level semantics for knowable (CG-range) moments.
        for info in self.variables[1:]:
            if info.label is None:
                continue
            if _label_intersects_support(info.label, support, scn):
                self.support_rows.append(AffineExpr(const=-1.0, terms={info.vid: 1.0}))
            else:
                self.known_values[info.vid] = 0.0
                self.known_provenance[info.vid] = (info.label,)

        # Event-level constraints, including eliminated-outcome events.
        zero_exprs: list[AffineExpr] = []
        for event in _all_events(scn):
            expr = self._event_expression(event)
            if event in support:
                row = AffineExpr(expr.const - 1.0, dict(expr.terms))
                self.support_rows.append(row)
            else:
                zero_exprs.append(expr)
        self._eliminate_zero_constraints(zero_exprs)

        # Identity moment: free, bounded below by 1 (rescaled normalization).
        self.support_rows.append(AffineExpr(const=-1.0, terms={IDENTITY_VID: 1.0}))
        return self

    def _event_expression(self, event: tuple[int, ...]) -> AffineExpr:
        """Full-scenario event probability as an affine form over moments."""
        scn = self.network.original
        n = scn.n_parties
        label = ProbabilityLabel(
            parties=tuple(range(n)), outcomes=event[:n], settings=event[n:]
        )
        expr = AffineExpr()
        for coeff, word in label_to_terms(self.alphabet, label):
            key = self._moment_key(word)
            if key is None:
                continue
            vid = self._vid_of_word.get(key)
            if vid is None:
                raise RelaxationError(
                    "support constraint not representable with these columns "
                    f"(needs {self.algebra.display(Monomial(indices=key))})"
                )
            expr.add(vid, coeff)
        return expr.prune()

    def _substitute_known(self, expr: AffineExpr) -> AffineExpr:
        out = AffineExpr(expr.const)
        stack = list(expr.terms.items())
        while stack:
            vid, coeff = stack.pop()
            if vid in self.known_values:
                out.const += coeff * self.known_values[vid]
            elif vid in self.substitutions:
                sub = self.substitutions[vid]
                out.const += coeff * sub.const
                stack.extend((v, coeff * c) for v, c in sub.terms.items())
            else:
                out.add(vid, coeff)
        return out.prune()

    def _eliminate_zero_constraints(self, exprs: list[AffineExpr]) -> None:
        """Gaussian elimination of affine == 0 constraints into substitutions."""
        for expr in exprs:
            resolved = self._substitute_known(expr)
            if not resolved.terms:
                if abs(resolved.const) > 1e-9:
                    self.presolve_infeasible = (
                        "zero-probability constraint reduces to a nonzero constant"
                    )
                continue
            pivot = max(resolved.terms, key=lambda v: (abs(resolved.terms[v]), v))
            coeff = resolved.terms.pop(pivot)
            sub = AffineExpr(
                -resolved.const / coeff,
                {v: -c / coeff for v, c in resolved.terms.items()},
            ).prune()
            if not sub.terms and abs(sub.const) <= 1e-15:
                self.known_values[pivot] = 0.0
                self.known_provenance[pivot] = (
                    (self.variables[pivot].label,)
                    if self.variables[pivot].label is not None
                    else None
                )
            else:
                self.substitutions[pivot] = sub


def _all_events(scn) -> list[tuple[int, ...]]:
    ranges = [range(d) for d in scn.outcomes_per_party]
    ranges += [range(s) for s in scn.settings_per_party]
    return [tuple(event) for event in itertools.product(*ranges)]


def _event_index(event: tuple[int, ...], scn) -> tuple[int, ...]:
    return event


def _label_intersects_support(label: ProbabilityLabel, support, scn) -> bool:
    n = scn.n_parties
    spec = dict(zip(label.parties, zip(label.outcomes, label.settings)))
    for event in support:
        ok = True
        for p, (o, s) in spec.items():
            if event[p] != o or event[n + p] != s:
                ok = False
                break
        if ok:
            return True
    return False


def generate_relaxation(
    algebra: WordAlgebra,
    gens: GeneratingSet,
    supports_problem: bool = False,
    progress: bool = False,
) -> Relaxation:
    """Build the symbolic moment matrix for a generating set."""
    for word in gens.columns:
        for op in word:
            if not 0 <= op < len(algebra.alphabet):
                raise RelaxationError("generating set does not match the alphabet")
    return Relaxation(algebra, gens, supports_problem=supports_problem, progress=progress)
