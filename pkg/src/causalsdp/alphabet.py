"""Inflated operator alphabets, copy-permutation symmetry, knowability.

An inflation replaces each source of a network by a number of identical
copies.  Every party then carries one projective operator per combination of
(copy choice per connected source, effective setting, outcome), with the last
outcome of each measurement eliminated by normalization (Collins-Gisin
convention) unless all outcomes are explicitly kept.

Operators are interned as integer indices into the alphabet; the index order
is the total order (party, copies lexicographic, setting, outcome) used
everywhere for canonical forms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .scenario import NetworkScenario

GROUP_MATERIALIZATION_CAP = 40320  # 8!


@dataclass(frozen=True)
class InflationSpec:
    """A network plus the number of copies of each source."""

    network: NetworkScenario
    copies_per_source: tuple[int, ...]
    keep_all_outcomes: bool = False

    def __post_init__(self):
        if len(self.copies_per_source) != self.network.n_sources:
            raise ValueError(
                f"{len(self.copies_per_source)} inflation levels for "
                f"{self.network.n_sources} sources"
            )
        if any(k < 1 for k in self.copies_per_source):
            raise ValueError("inflation levels must be >= 1")
        object.__setattr__(self, "copies_per_source", tuple(int(k) for k in self.copies_per_source))


@dataclass(frozen=True, order=True)
class Operator:
    """One projective measurement operator of the inflated scenario.

    ``copies`` holds one 0-based copy index per source connected to the
    party, in source order.  Copy indices are displayed 1-based.
    """

    party: int
    copies: tuple[int, ...]
    setting: int
    outcome: int


@dataclass(frozen=True)
class ProbabilityLabel:
    """A marginal of the original scenario: parties, outcomes, native settings."""

    parties: tuple[int, ...]
    outcomes: tuple[int, ...]
    settings: tuple[int, ...]

    def display(self, party_names: tuple[str, ...]) -> str:
        names = [party_names[p] for p in self.parties]
        compact = all(len(n) == 1 for n in names) and all(
            x < 10 for x in self.outcomes + self.settings
        )
        if compact:
            return "p{}({}|{})".format(
                "".join(names),
                "".join(str(o) for o in self.outcomes),
                "".join(str(s) for s in self.settings),
            )
        return "p[{}]({}|{})".format(
            ",".join(names),
            ",".join(str(o) for o in self.outcomes),
            ",".join(str(s) for s in self.settings),
        )


class OperatorAlphabet:
    """The ordered operator alphabet of an inflation, with lookup tables."""

    def __init__(self, spec: InflationSpec):
        self.spec = spec
        self.network = spec.network
        self.copies_per_source = spec.copies_per_source
        net = self.network

        self.outcomes_kept = tuple(
            d if spec.keep_all_outcomes else max(d - 1, 1)
            for d in net.effective_outcomes
        )

        ops: list[Operator] = []
        for party in range(net.n_parties):
            feeds = net.party_sources[party]
            copy_ranges = [range(self.copies_per_source[s]) for s in feeds]
            for copies in itertools.product(*copy_ranges):
                for setting in range(net.effective_settings[party]):
                    for outcome in range(self.outcomes_kept[party]):
                        ops.append(Operator(party, copies, setting, outcome))
        self.operators: tuple[Operator, ...] = tuple(ops)
        self.index: dict[Operator, int] = {op: i for i, op in enumerate(ops)}

        n = len(ops)
        self.party = [op.party for op in ops]
        # merge_key identifies operators of one measurement: equal keys with
        # equal outcomes are the same projector, with different outcomes they
        # are orthogonal.
        self.merge_key = [(op.party, op.copies, op.setting) for op in ops]
        self.outcome = [op.outcome for op in ops]

        # source_copies[i]: frozenset of (source, copy) pairs the operator acts on
        self.source_copies = []
        for op in ops:
            feeds = net.party_sources[op.party]
            self.source_copies.append(frozenset(zip(feeds, op.copies)))

        # Quantum commutation as bitmasks: different parties always commute;
        # same party commutes iff the copy vectors differ in every coordinate.
        self.commute_mask = [0] * n
        for i in range(n):
            mask = 0
            for j in range(n):
                if i == j:
                    continue
                if self.party[i] != self.party[j]:
                    mask |= 1 << j
                elif all(a != b for a, b in zip(ops[i].copies, ops[j].copies)):
                    mask |= 1 << j
            self.commute_mask[i] = mask

        self._names = tuple(self.op_name(i) for i in range(n))
        self.op_from_name = {name: i for i, name in enumerate(self._names)}

    def __len__(self) -> int:
        return len(self.operators)

    def __getitem__(self, i: int) -> Operator:
        return self.operators[i]

    def __iter__(self):
        return iter(self.operators)

    def op_name(self, i: int) -> str:
        """Display form ``P^{c1,c2,...}_{x|a}`` with 1-based copy indices."""
        op = self.operators[i]
        name = self.network.parties[op.party]
        copies = ",".join(str(c + 1) for c in op.copies)
        return f"{name}^{{{copies}}}_{{{op.setting}|{op.outcome}}}"

    def find(
        self, party: int, setting: int, outcome: int, copies: tuple[int, ...] | None = None
    ) -> int:
        """Index of the operator with the given coordinates (copies default to all-first)."""
        if copies is None:
            copies = tuple(0 for _ in self.network.party_sources[party])
        op = Operator(party, tuple(copies), setting, outcome)
        try:
            return self.index[op]
        except KeyError:
            raise KeyError(f"no such operator: party={party} copies={copies} "
                           f"setting={setting} outcome={outcome}") from None

    def quantum_commutes(self, a: int, b: int) -> bool:
        return a == b or bool((self.commute_mask[a] >> b) & 1)


@dataclass
class SymmetryGroup:
    """Copy permutations of an inflation, acting on the operator alphabet.

    ``elements`` is the full direct product of per-source symmetric groups
    when its order does not exceed the materialization cap; otherwise only
    the adjacent-transposition generators are available and callers fall
    back to generator descent.
    """

    generators: list[tuple[int, ...]]
    elements: list[tuple[int, ...]] | None
    order: int
    materialized: bool = field(default=True)

    def __len__(self) -> int:
        return self.order


def build_alphabet(spec: InflationSpec) -> OperatorAlphabet:
    """Construct the ordered operator alphabet for the given inflation."""
    return OperatorAlphabet(spec)


def _alphabet_of(spec_or_alphabet) -> OperatorAlphabet:
    if isinstance(spec_or_alphabet, OperatorAlphabet):
        return spec_or_alphabet
    return OperatorAlphabet(spec_or_alphabet)


def _copy_relabel_perm(alphabet: OperatorAlphabet, source: int, relabel: dict[int, int]) -> tuple[int, ...]:
    """Alphabet permutation induced by relabeling the copies of one source."""
    net = alphabet.network
    perm = []
    for op in alphabet.operators:
        feeds = net.party_sources[op.party]
        if source in feeds:
            pos = feeds.index(source)
            new_copies = list(op.copies)
            new_copies[pos] = relabel[op.copies[pos]]
            image = Operator(op.party, tuple(new_copies), op.setting, op.outcome)
            perm.append(alphabet.index[image])
        else:
            perm.append(alphabet.index[op])
    return tuple(perm)


def _compose(p: tuple[int, ...], q: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(p[x] for x in q)


def symmetry_group(
    spec_or_alphabet, cap: int = GROUP_MATERIALIZATION_CAP
) -> SymmetryGroup:
    """Copy-permutation symmetry group of an inflation.

    Generators are the adjacent-copy transpositions of every source; the
    full element list is materialized when the group order is at most
    ``cap``.
    """
    alphabet = _alphabet_of(spec_or_alphabet)
    copies = alphabet.copies_per_source
    n_sources = alphabet.network.n_sources

    generators = []
    for s in range(n_sources):
        for c in range(copies[s] - 1):
            relabel = {k: k for k in range(copies[s])}
            relabel[c], relabel[c + 1] = c + 1, c
            perm = _copy_relabel_perm(alphabet, s, relabel)
            if perm != tuple(range(len(alphabet))):
                generators.append(perm)

    order = 1
    for k in copies:
        order *= _factorial(k)

    if order > cap:
        return SymmetryGroup(generators=generators, elements=None, order=order, materialized=False)

    identity = tuple(range(len(alphabet)))
    elements = [identity]
    for s in range(n_sources):
        if copies[s] == 1:
            continue
        source_perms = []
        for sigma in itertools.permutations(range(copies[s])):
            relabel = dict(enumerate(sigma))
            source_perms.append(_copy_relabel_perm(alphabet, s, relabel))
        elements = [_compose(p, q) for p in source_perms for q in elements]
    # Dedup defensively (parties not fed by a source leave its perms trivial).
    elements = sorted(set(elements))
    return SymmetryGroup(generators=generators, elements=elements, order=len(elements))


def _factorial(k: int) -> int:
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


def knowable(alphabet: OperatorAlphabet, word: tuple[int, ...]) -> ProbabilityLabel | None:
    """Map a canonical word to an original-scenario marginal, if it is one.

    A word is knowable when every party occurs at most once, every source is
    measured with a single copy index throughout, and, in interrupted
    scenarios, each parent-outcome component of a child's effective setting
    matches the outcome of that parent inside the word.  Otherwise ``None``.
    """
    net = alphabet.network
    per_party: dict[int, Operator] = {}
    source_copy: dict[int, int] = {}
    for idx in word:
        op = alphabet.operators[idx]
        if op.party in per_party:
            return None
        per_party[op.party] = op
        for source, copy in zip(net.party_sources[op.party], op.copies):
            if source_copy.setdefault(source, copy) != copy:
                return None

    parties = tuple(sorted(per_party))
    outcomes = []
    natives = []
    for p in parties:
        op = per_party[p]
        comp = net.setting_composition[p]
        native, parent_outs = comp.decompose(op.setting)
        for (q, _), out in zip(comp.parents, parent_outs):
            if q not in per_party or per_party[q].outcome != out:
                return None
        outcomes.append(op.outcome)
        natives.append(native)
    return ProbabilityLabel(parties=parties, outcomes=tuple(outcomes), settings=tuple(natives))
