"""Independent brute-force references used by the test suite.

Three oracles: exhaustive rewriting search for canonical forms, explicit
tensor-network realizations producing numeric moment matrices (the universal
generator of feasible points), and exact classical-model checks via
deterministic-strategy enumeration.  These deliberately avoid the package's
fast paths so that agreement is meaningful.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .algebra import Monomial, WordAlgebra, ZERO, adjoint
from .alphabet import OperatorAlphabet
from .relaxation import GeneratingSet
from .scenario import NetworkScenario

Word = tuple[int, ...]


class OracleCapError(RuntimeError):
    """Raised when an exhaustive oracle would exceed its size cap."""


# -- rewriting oracle ---------------------------------------------------------

def oracle_canon(algebra: WordAlgebra, word, max_states: int = 200_000) -> Monomial:
    """Minimum over every legal rewriting sequence and every orbit image.

    Breadth-first search over single-step rewrites (commuting adjacent swaps,
    idempotent merges, orthogonal annihilation), seeded with all group images
    of the word.  The minimum is taken by (length, lexicographic) order.
    """
    alphabet = algebra.alphabet
    merge_key = alphabet.merge_key
    group = algebra.group
    if not group.materialized:
        raise OracleCapError("oracle_canon needs a materialized symmetry group")

    start = tuple(algebra._intern(word))
    seeds = {tuple(g[i] for i in start) for g in group.elements}
    seen: set[Word] = set(seeds)
    queue = deque(seeds)
    best: Word | None = None
    zero = False
    while queue:
        w = queue.popleft()
        if best is None or (len(w), w) < (len(best), best):
            best = w
        for k in range(len(w) - 1):
            a, b = w[k], w[k + 1]
            if merge_key[a] == merge_key[b]:
                if a == b:
                    step = w[:k] + w[k + 1:]
                else:
                    zero = True
                    continue
            elif algebra.commutes(a, b):
                step = w[:k] + (b, a) + w[k + 2:]
            else:
                continue
            if step not in seen:
                if len(seen) >= max_states:
                    raise OracleCapError(f"rewrite search exceeded {max_states} states")
                seen.add(step)
                queue.append(step)
    if zero:
        return ZERO
    assert best is not None
    return Monomial(indices=best)


# -- explicit quantum realizations --------------------------------------------

@dataclass
class ExplicitRealization:
    """Concrete states and projective measurements over a network.

    ``source_states``: one density matrix per source on (C^dim)^(number of
    connected parties); every inflation copy of a source reuses its state, so
    copy permutations leave all expectations invariant.  ``measurements``:
    projectors per party, effective setting, and outcome, acting on the
    party's shares of its sources.
    """

    network: NetworkScenario
    source_states: list[np.ndarray]
    measurements: list[list[list[np.ndarray]]]
    local_dim: int = 2

    def __post_init__(self):
        net = self.network
        d = self.local_dim
        for s, rho in enumerate(self.source_states):
            k = sum(1 for feeds in net.party_sources if s in feeds)
            dim = d ** k
            rho = np.asarray(self.source_states[s], dtype=complex)
            if rho.shape != (dim, dim):
                raise ValueError(f"source {s} state must be {dim}x{dim}")
            if np.abs(np.trace(rho) - 1.0) > 1e-9 or np.linalg.norm(rho - rho.conj().T) > 1e-9:
                raise ValueError(f"source {s} state is not a unit-trace Hermitian matrix")
            self.source_states[s] = rho
        for p in range(net.n_parties):
            dim = d ** len(net.party_sources[p])
            for x, projs in enumerate(self.measurements[p]):
                total = np.zeros((dim, dim), dtype=complex)
                for proj in projs:
                    proj = np.asarray(proj, dtype=complex)
                    if np.linalg.norm(proj @ proj - proj) > 1e-8:
                        raise ValueError(f"party {p} setting {x}: non-projective operator")
                    total += proj
                if np.linalg.norm(total - np.eye(dim)) > 1e-8:
                    raise ValueError(f"party {p} setting {x}: projectors do not sum to identity")


def _slot_layout(real: ExplicitRealization, copies_per_source: tuple[int, ...]):
    """Assign one tensor slot per (source, copy, connected-party share)."""
    net = real.network
    slots: dict[tuple[int, int, int], int] = {}
    for s in range(net.n_sources):
        parties = [p for p in range(net.n_parties) if s in net.party_sources[p]]
        for c in range(copies_per_source[s]):
            for p in parties:
                slots[(s, c, p)] = len(slots)
    return slots


def _pure_components(real: ExplicitRealization, copies_per_source, max_components=4096):
    """Decompose the inflated state into weighted pure tensor products."""
    net = real.network
    per_source = []
    for s, rho in enumerate(real.source_states):
        vals, vecs = np.linalg.eigh(rho)
        keep = [(float(v), vecs[:, k]) for k, v in enumerate(vals) if v > 1e-12]
        per_source.append(keep)
    factors = []  # (source, copy) -> list of (weight, vector)
    keys = []
    for s in range(net.n_sources):
        for c in range(copies_per_source[s]):
            factors.append(per_source[s])
            keys.append((s, c))
    total = 1
    for f in factors:
        total *= len(f)
        if total > max_components:
            raise OracleCapError(f"state decomposition exceeds {max_components} components")
    for combo in itertools.product(*factors):
        weight = 1.0
        vectors = {}
        for (s, c), (w, vec) in zip(keys, combo):
            weight *= w
            vectors[(s, c)] = vec
        yield weight, vectors


def _component_state(real, copies_per_source, slots, vectors):
    """Assemble one pure component as a tensor of local factors."""
    net = real.network
    d = real.local_dim
    n_slots = len(slots)
    state = np.ones(1, dtype=complex)
    order: list[int] = []
    for s in range(net.n_sources):
        parties = [p for p in range(net.n_parties) if s in net.party_sources[p]]
        for c in range(copies_per_source[s]):
            state = np.kron(state, vectors[(s, c)].reshape(-1))
            order.extend(slots[(s, c, p)] for p in parties)
    if not n_slots:
        return state.reshape(())
    state = state.reshape((d,) * n_slots)  # axes follow 'order'
    return np.moveaxis(state, list(range(n_slots)), order)


def _apply_operator(real, alphabet, slots, state, op_idx):
    net = real.network
    d = real.local_dim
    op = alphabet.operators[op_idx]
    feeds = net.party_sources[op.party]
    proj = real.measurements[op.party][op.setting][op.outcome]
    k = len(feeds)
    axes = [slots[(s, c, op.party)] for s, c in zip(feeds, op.copies)]
    if k == 0:
        scalar = proj.reshape(())  # measurement on the trivial space
        return state * scalar
    mat = proj.reshape((d,) * (2 * k))
    moved = np.tensordot(mat, state, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(moved, list(range(k)), axes)


def oracle_moment_matrix(
    real: ExplicitRealization,
    alphabet: OperatorAlphabet,
    gens: GeneratingSet,
    max_dim: int = 2 ** 10,
) -> np.ndarray:
    """Numeric moment matrix Re<psi| adjoint(u) v |psi> for explicit states.

    A Gram matrix by construction, hence PSD, and satisfying every symmetry
    identification, non-negativity, and factorization relation the builder
    imposes: the universal generator of feasible points.
    """
    copies = alphabet.copies_per_source
    slots = _slot_layout(real, copies)
    if real.local_dim ** len(slots) > max_dim:
        raise OracleCapError(
            f"Hilbert dimension {real.local_dim ** len(slots)} exceeds {max_dim}"
        )
    n = len(gens.columns)
    M = np.zeros((n, n))
    for weight, vectors in _pure_components(real, copies):
        psi = _component_state(real, copies, slots, vectors)
        applied = []
        for word in gens.columns:
            vec = psi
            for op in reversed(word):
                vec = _apply_operator(real, alphabet, slots, vec, op)
            applied.append(vec.reshape(-1))
        V = np.array(applied)
        M += weight * np.real(V.conj() @ V.T)
    return M


def oracle_expectation(real, alphabet, word, max_dim: int = 2 ** 10) -> float:
    """Re<psi| word |psi> for a single operator word."""
    gens = GeneratingSet(columns=((), tuple(word)))
    M = oracle_moment_matrix(real, alphabet, gens, max_dim=max_dim)
    return float(M[0, 1])


def realized_distribution(real: ExplicitRealization, alphabet: OperatorAlphabet) -> np.ndarray:
    """Observable distribution of the original scenario, via diagonal settings."""
    net = real.network
    scn = net.original
    shape = tuple(scn.outcomes_per_party) + tuple(scn.settings_per_party)
    p = np.zeros(shape)
    n = scn.n_parties
    for event in itertools.product(*(range(k) for k in shape)):
        outs, sets = event[:n], event[n:]
        word = []
        for party in range(n):
            comp = net.setting_composition[party]
            parent_outs = tuple(outs[q] for q, _ in comp.parents)
            eff = comp.compose(sets[party], parent_outs)
            word.append((party, eff, outs[party]))
        p[event] = _event_probability(real, alphabet, word)
    return p


def _event_probability(real, alphabet, specs) -> float:
    """Probability of a joint event, expanding eliminated outcomes."""
    net = real.network
    terms: list[tuple[float, list[int]]] = [(1.0, [])]
    for party, eff, outcome in specs:
        kept = alphabet.outcomes_kept[party]
        if outcome < kept:
            add = [(1.0, alphabet.find(party, eff, outcome))]
        else:
            add = [(1.0, None)] + [(-1.0, alphabet.find(party, eff, a)) for a in range(kept)]
        terms = [
            (c * s, w if op is None else w + [op])
            for c, w in terms
            for s, op in add
        ]
    total = 0.0
    for coeff, word in terms:
        total += coeff * (oracle_expectation(real, alphabet, tuple(word)) if word else 1.0)
    return total


def random_realization(
    net: NetworkScenario, rng: np.random.Generator, local_dim: int = 2
) -> ExplicitRealization:
    """Random pure source states and random projective measurements."""
    d = local_dim
    states = []
    for s in range(net.n_sources):
        k = sum(1 for feeds in net.party_sources if s in feeds)
        vec = rng.normal(size=d ** k) + 1j * rng.normal(size=d ** k)
        vec /= np.linalg.norm(vec)
        states.append(np.outer(vec, vec.conj()))
    measurements = []
    for p in range(net.n_parties):
        dim = d ** len(net.party_sources[p])
        nout = net.effective_outcomes[p]
        if dim < nout:
            raise ValueError(f"party {p}: local dimension {dim} below outcome count {nout}")
        per_setting = []
        for _ in range(net.effective_settings[p]):
            z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            q, _ = np.linalg.qr(z)
            sizes = [dim // nout + (1 if i < dim % nout else 0) for i in range(nout)]
            projs = []
            start = 0
            for size in sizes:
                cols = q[:, start:start + size]
                projs.append(cols @ cols.conj().T)
                start += size
            per_setting.append(projs)
        measurements.append(per_setting)
    return ExplicitRealization(
        network=net, source_states=states, measurements=measurements, local_dim=d
    )


# -- classical models ----------------------------------------------------------

def _deterministic_strategies(net: NetworkScenario):
    """Per-party response functions over effective settings, as tuples."""
    per_party = []
    for p in range(net.n_parties):
        d = net.effective_outcomes[p]
        k = net.effective_settings[p]
        per_party.append(list(itertools.product(range(d), repeat=k)))
    return per_party


def _strategy_event(net: NetworkScenario, strategy, settings) -> tuple[int, ...]:
    """Outcomes of one deterministic strategy, resolving interruption chains."""
    outcomes: dict[int, int] = {}

    def outcome_of(p: int) -> int:
        if p not in outcomes:
            comp = net.setting_composition[p]
            parents = tuple(outcome_of(q) for q, _ in comp.parents)
            eff = comp.compose(settings[p], parents)
            outcomes[p] = strategy[p][eff]
        return outcomes[p]

    return tuple(outcome_of(p) for p in range(net.n_parties))


def _strategy_count(net: NetworkScenario) -> int:
    total = 1
    for p in range(net.n_parties):
        total *= net.effective_outcomes[p] ** net.effective_settings[p]
    return total


def oracle_classical_feasible(
    net: NetworkScenario, p: np.ndarray, max_strategies: int = 200_000
) -> bool:
    """Exact classical-compatibility check on small scenarios.

    Single-source networks decide membership in the local polytope by exact
    rational linear programming over all deterministic strategies.  For
    multi-source networks only the accepting direction is implemented
    (product distributions and deterministic points); a ``False`` there means
    "not shown feasible".
    """
    scn = net.original
    p = np.asarray(p, dtype=float)

    if net.n_sources == 1:
        if _strategy_count(net) > max_strategies:
            raise OracleCapError("too many deterministic strategies to enumerate")
        return _in_local_polytope(net, p)

    # Multi-source: product of single-party marginals is always realizable
    # (each party reads private randomness off one of its sources), provided
    # each marginal depends only on the party's own setting.
    n = scn.n_parties
    own_margs = []
    for party in range(n):
        out_axes = tuple(q for q in range(n) if q != party)
        marg = p.sum(axis=out_axes)  # shape (d_party, s_1, ..., s_n)
        own = marg[(slice(None),) + tuple(slice(None) if q == party else 0 for q in range(n))]
        for settings in itertools.product(*(range(s) for s in scn.settings_per_party)):
            if not np.allclose(marg[(slice(None),) + settings], own[:, settings[party]],
                               atol=1e-10):
                return False  # signaling marginal: not certified feasible
        if not net.party_sources[party] and np.any((own > 1e-12) & (own < 1.0 - 1e-12)):
            return False  # sourceless parties cannot randomize
        own_margs.append(own)
    product = np.ones_like(p)
    for party in range(n):
        shape = [1] * (2 * n)
        shape[party] = scn.outcomes_per_party[party]
        shape[n + party] = scn.settings_per_party[party]
        product = product * own_margs[party].reshape(shape)
    return bool(np.allclose(product, p, atol=1e-10))


def _in_local_polytope(net: NetworkScenario, p: np.ndarray) -> bool:
    scn = net.original
    n = scn.n_parties
    setting_ranges = [range(s) for s in scn.settings_per_party]
    events = list(itertools.product(*setting_ranges))

    columns = []
    for strategy in itertools.product(*_deterministic_strategies(net)):
        col = []
        for settings in events:
            outs = _strategy_event(net, strategy, settings)
            for outcomes in itertools.product(*(range(d) for d in scn.outcomes_per_party)):
                col.append(Fraction(1) if outs == tuple(outcomes) else Fraction(0))
        columns.append(col)

    target = []
    for settings in events:
        for outcomes in itertools.product(*(range(d) for d in scn.outcomes_per_party)):
            target.append(Fraction(float(p[tuple(outcomes) + tuple(settings)])))
    return _exact_lp_feasible(columns, target)


def _exact_lp_feasible(columns: list[list[Fraction]], target: list[Fraction]) -> bool:
    """Phase-I simplex over rationals: does conv(columns) contain target?"""
    rows = len(target) + 1
    cols = [col + [Fraction(1)] for col in columns]  # mixture weights sum to 1
    rhs = list(target) + [Fraction(1)]
    for r in range(rows):
        if rhs[r] < 0:
            for col in cols:
                col[r] = -col[r]
            rhs[r] = -rhs[r]

    ncols = len(cols)
    # tableau with artificial basis
    tableau = [[cols[c][r] for c in range(ncols)] + [rhs[r]] for r in range(rows)]
    basis = list(range(ncols, ncols + rows))
    # objective: minimize sum of artificials -> reduced cost row
    obj = [Fraction(0)] * (ncols + 1)
    for r in range(rows):
        for c in range(ncols):
            obj[c] += tableau[r][c]
        obj[ncols] += tableau[r][ncols]

    while True:
        enter = next((c for c in range(ncols) if obj[c] > 0), None)  # Bland's rule
        if enter is None:
            break
        ratios = [
            (tableau[r][ncols] / tableau[r][enter], r)
            for r in range(rows)
            if tableau[r][enter] > 0
        ]
        if not ratios:
            break  # unbounded; cannot happen for Phase-I
        _, leave = min(ratios, key=lambda t: (t[0], basis[t[1]]))
        pivot = tableau[leave][enter]
        tableau[leave] = [v / pivot for v in tableau[leave]]
        for r in range(rows):
            if r != leave and tableau[r][enter] != 0:
                f = tableau[r][enter]
                tableau[r] = [a - f * b for a, b in zip(tableau[r], tableau[leave])]
        f = obj[enter]
        obj = [a - f * b for a, b in zip(obj, tableau[leave])]
        basis[leave] = enter
    return obj[ncols] == 0


def oracle_classical_support_feasible(net: NetworkScenario, support) -> bool:
    """Can a classical model have exactly this support?

    Collects deterministic strategies whose support lies inside the given
    one; the support is achievable iff their union covers it.  Exact and
    exhaustive.
    """
    scn = net.original
    n = scn.n_parties
    support = {tuple(int(x) for x in ev) for ev in support}
    setting_ranges = [range(s) for s in scn.settings_per_party]

    covered: set = set()
    for strategy in itertools.product(*_deterministic_strategies(net)):
        strat_support = set()
        for settings in itertools.product(*setting_ranges):
            outs = _strategy_event(net, strategy, settings)
            strat_support.add(outs + tuple(settings))
        if strat_support <= support:
            covered |= strat_support
    return covered == support
