"""Canonical forms of inflation operator words.

Words of projective operators are rewritten under three rules: idempotency
(equal adjacent operators merge), orthogonality (same measurement, different
outcome annihilates the word), and commutation (operators of different
parties always commute; same-party operators commute iff their copy vectors
are disjoint in every coordinate, i.e. they act on disjoint tensor factors).
Orthogonality and idempotency act through any separator that commutes with
the pair, which is exact because commutation depends only on (party, copies)
and merge candidates share both.

The canonical word is the lexicographically least representative of the
rewrite class, computed per party block by the greedy normal form: repeatedly
emit the smallest operator with no earlier non-commuting operator.  Public
``canon`` additionally minimizes over the copy-permutation symmetry orbit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .alphabet import OperatorAlphabet, Operator, SymmetryGroup, symmetry_group

Word = tuple[int, ...]

IDENTITY: Word = ()


class AlgebraError(ValueError):
    """Raised for operator words that violate algebra preconditions."""


@dataclass(frozen=True)
class Monomial:
    """A canonical operator word (indices into the alphabet) or the zero monomial."""

    indices: Word
    is_zero: bool = False

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def is_identity(self) -> bool:
        return not self.is_zero and not self.indices


ZERO = Monomial(indices=(), is_zero=True)
ONE = Monomial(indices=())


@dataclass(frozen=True)
class Factorization:
    """Monomial components acting on pairwise disjoint source-copy sets."""

    components: tuple[Monomial, ...]


class WordAlgebra:
    """Rewriting context: an alphabet, a commutation mode, and memo tables.

    In commuting (classical) mode every pair of operators commutes while
    orthogonality and idempotency are unchanged.  Instances are safe for
    concurrent reads; the memo tables only ever gain entries.
    """

    def __init__(self, alphabet: OperatorAlphabet, commuting: bool = False,
                 group: SymmetryGroup | None = None):
        self.alphabet = alphabet
        self.commuting = commuting
        self.group = group if group is not None else symmetry_group(alphabet)
        self._reduce_cache: dict[Word, Word | None] = {}
        self._orbit_cache: dict[Word, Word] = {}

    # -- commutation ------------------------------------------------------

    def commutes(self, a: int, b: int) -> bool:
        if self.commuting:
            return True
        return self.alphabet.quantum_commutes(a, b)

    # -- reduction and normal form ----------------------------------------

    def _reduce_party_block(self, ops: list[int]) -> list[int] | None:
        """Close one party's subword under merging/annihilation; None = zero."""
        merge_key = self.alphabet.merge_key
        changed = True
        while changed:
            changed = False
            i = 0
            while i < len(ops):
                a = ops[i]
                j = i + 1
                while j < len(ops):
                    b = ops[j]
                    if merge_key[a] == merge_key[b]:
                        if a == b:
                            del ops[j]
                            changed = True
                            continue
                        return None
                    if self.commutes(a, b):
                        j += 1
                        continue
                    break
                i += 1
        return ops

    def _lex_normal_form(self, ops: list[int]) -> list[int]:
        """Greedy least available operator; exact for trace monoids."""
        out: list[int] = []
        remaining = list(ops)
        while remaining:
            best = None
            for i, x in enumerate(remaining):
                if best is not None and remaining[best] <= x:
                    continue
                if all(self.commutes(remaining[k], x) for k in range(i)):
                    best = i
            out.append(remaining.pop(best))
        return out

    def reduce_word(self, word) -> Word | None:
        """Canonical form without orbit minimization; ``None`` when zero."""
        key = self._intern(word)
        cached = self._reduce_cache.get(key, _MISSING)
        if cached is not _MISSING:
            return cached

        parties: dict[int, list[int]] = {}
        party_of = self.alphabet.party
        for idx in key:
            parties.setdefault(party_of[idx], []).append(idx)

        result: list[int] = []
        zero = False
        for party in sorted(parties):
            block = self._reduce_party_block(parties[party])
            if block is None:
                zero = True
                break
            result.extend(self._lex_normal_form(block))

        out = None if zero else tuple(result)
        self._reduce_cache[key] = out
        return out

    def _intern(self, word) -> Word:
        ops = []
        n = len(self.alphabet)
        for item in word:
            if isinstance(item, Operator):
                item = self.alphabet.index[item]
            item = int(item)
            if not 0 <= item < n:
                raise AlgebraError(f"operator index {item} outside alphabet of size {n}")
            ops.append(item)
        return tuple(ops)

    # -- orbit minimization -------------------------------------------------

    def orbit_min(self, reduced: Word) -> Word:
        """Least canonical word over the copy-permutation orbit of ``reduced``."""
        cached = self._orbit_cache.get(reduced)
        if cached is not None:
            return cached
        group = self.group
        if group.materialized:
            best = reduced
            for g in group.elements:
                image = self.reduce_word(tuple(g[i] for i in reduced))
                if image < best:  # equal lengths: reduction commutes with relabeling
                    best = image
        else:
            # Generator descent to a fixed point (local minimum).
            best = reduced
            improved = True
            while improved:
                improved = False
                for g in group.generators:
                    image = self.reduce_word(tuple(g[i] for i in best))
                    if image < best:
                        best = image
                        improved = True
        self._orbit_cache[reduced] = best
        return best

    # -- display ------------------------------------------------------------

    def display(self, m: Monomial) -> str:
        if m.is_zero:
            return "0"
        if not m.indices:
            return "1"
        return " ".join(self.alphabet.op_name(i) for i in m.indices)

    def operators_of(self, m: Monomial) -> tuple[Operator, ...]:
        return tuple(self.alphabet.operators[i] for i in m.indices)


_MISSING = object()


def canon(algebra: WordAlgebra, word) -> Monomial:
    """Full canonical form: rewrite reduction, then orbit minimization."""
    reduced = algebra.reduce_word(word)
    if reduced is None:
        return ZERO
    return Monomial(indices=algebra.orbit_min(reduced))


def orbit_representative(algebra: WordAlgebra, m: Monomial) -> Monomial:
    """Lexicographically least canonical word over the symmetry orbit."""
    if m.is_zero:
        return ZERO
    return Monomial(indices=algebra.orbit_min(algebra.reduce_word(m.indices)))


def adjoint(word: Word) -> Word:
    """Hermitian conjugate of a word of self-adjoint operators: its reversal."""
    return tuple(reversed(word))


def factorize(algebra: WordAlgebra, m: Monomial) -> Factorization:
    """Split a monomial into components with disjoint source-copy supports.

    Components are the connected parts of the graph joining operators that
    share any (source, copy) pair, each reduced independently (no joint orbit
    minimization, so concatenating the components recovers the input's orbit).
    """
    if m.is_zero:
        raise AlgebraError("cannot factorize the zero monomial")
    word = m.indices
    if not word:
        return Factorization(components=())

    supports = [algebra.alphabet.source_copies[i] for i in word]
    parent = list(range(len(word)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(len(word)):
        for j in range(i + 1, len(word)):
            if supports[i] & supports[j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri

    groups: dict[int, list[int]] = {}
    for pos in range(len(word)):
        groups.setdefault(find(pos), []).append(pos)

    components = []
    for positions in groups.values():
        sub = tuple(word[p] for p in positions)
        reduced = algebra.reduce_word(sub)
        assert reduced is not None  # subwords of a nonzero canonical word cannot vanish
        components.append(Monomial(indices=reduced))
    components.sort(key=lambda c: c.indices)
    return Factorization(components=tuple(components))


def is_physical(algebra: WordAlgebra, m: Monomial) -> bool:
    """True when all same-party operators pairwise commute.

    Such monomials are products of commuting positive operators and have a
    non-negative expectation value under every state.
    """
    if m.is_zero:
        return False
    word = m.indices
    party = algebra.alphabet.party
    for i in range(len(word)):
        for j in range(i + 1, len(word)):
            if party[word[i]] == party[word[j]] and not algebra.commutes(word[i], word[j]):
                return False
    return True


def is_sandwich_positive(algebra: WordAlgebra, m: Monomial) -> bool:
    """True when the monomial has the form u-adjoint * v * u with physical v.

    ``v`` may be empty and physical monomials count as sandwiches with an
    empty ``u``, so this is the complete non-negativity predicate used by the
    relaxation builder.
    """
    if m.is_zero:
        return False
    if is_physical(algebra, m):
        return True
    word = m.indices
    n = len(word)
    for k in range(1, n // 2 + 1):
        if all(word[i] == word[n - 1 - i] for i in range(k)):
            middle = Monomial(indices=word[k:n - k])
            if is_physical(algebra, middle):
                return True
    return False
