"""Probability labels, marginal evaluation, and objective expressions.

Labels name marginals of the original scenario, e.g. ``pAB(01|10)`` for
parties A and B with outcomes (0, 1) and native settings (1, 0).  Multi-char
party names or cardinalities above 10 use the bracketed form
``p[Alice,Bob](0,1|1,0)``.  Objective strings are sums of coefficient-scaled
labels, correlator shorthands like ``<A1 B0 C0>`` (binary outcomes only), and
constants.

Labels expand to inflation operator words on copy 1 of every source; an
eliminated last outcome expands as identity minus the kept projectors, so a
label may map to several signed words.
"""

from __future__ import annotations

import re

import numpy as np

from .alphabet import OperatorAlphabet, ProbabilityLabel
from .scenario import CausalScenario, NetworkScenario, ScenarioError

Word = tuple[int, ...]


class ExpressionError(ValueError):
    """Raised for unparseable or unrepresentable expressions."""


# -- distributions ----------------------------------------------------------

def validate_distribution(p: np.ndarray, scn: CausalScenario, tol: float = 1e-9) -> np.ndarray:
    """Check shape [out_1..out_n, in_1..in_n], non-negativity, normalization."""
    p = np.asarray(p, dtype=float)
    expected = tuple(scn.outcomes_per_party) + tuple(scn.settings_per_party)
    if p.shape != expected:
        raise ExpressionError(
            f"distribution shape {p.shape} does not match scenario shape {expected}"
        )
    if np.any(p < -tol):
        raise ExpressionError("distribution has negative entries")
    n = scn.n_parties
    sums = p.sum(axis=tuple(range(n)))
    if np.any(np.abs(sums - 1.0) > tol):
        raise ExpressionError(
            f"distribution does not sum to 1 over outcomes (max deviation "
            f"{np.max(np.abs(sums - 1.0)):.3e})"
        )
    return p


def marginal_value(p: np.ndarray, scn: CausalScenario, label: ProbabilityLabel) -> float:
    """Marginal probability of a label, summing out absent parties.

    Absent parties are evaluated at setting 0.
    """
    n = scn.n_parties
    index: list = [slice(None)] * n + [0] * n
    for party, outcome, setting in zip(label.parties, label.outcomes, label.settings):
        index[party] = outcome
        index[n + party] = setting
    block = p[tuple(index)]
    return float(np.sum(block))


# -- label <-> operator words ------------------------------------------------

def label_to_terms(
    alphabet: OperatorAlphabet, label: ProbabilityLabel
) -> list[tuple[float, Word]]:
    """Expand a label into signed operator words (identity = empty word).

    Every labeled party must bring along its interrupted parents, since the
    child's effective setting embeds the parent outcomes.  Eliminated last
    outcomes expand through normalization.
    """
    net = alphabet.network
    present = set(label.parties)
    eff_settings = {}
    for party, setting in zip(label.parties, label.settings):
        comp = net.setting_composition[party]
        if not 0 <= setting < comp.native_settings:
            raise ExpressionError(
                f"setting {setting} out of range for party {net.parties[party]}"
            )
        parent_outs = []
        for q, _ in comp.parents:
            if q not in present:
                raise ExpressionError(
                    f"label involves {net.parties[party]} but not its parent "
                    f"{net.parties[q]}; marginals over interrupted parents are "
                    "not single moments"
                )
            parent_outs.append(label.outcomes[label.parties.index(q)])
        eff_settings[party] = comp.compose(setting, tuple(parent_outs))

    terms: list[tuple[float, list[int]]] = [(1.0, [])]
    for party, outcome in zip(label.parties, label.outcomes):
        d = net.effective_outcomes[party]
        kept = alphabet.outcomes_kept[party]
        if not 0 <= outcome < d:
            raise ExpressionError(
                f"outcome {outcome} out of range for party {net.parties[party]}"
            )
        setting = eff_settings[party]
        if outcome < kept:
            factors = [(1.0, alphabet.find(party, setting, outcome))]
        else:
            # Last outcome: identity minus the kept projectors.
            factors = [(1.0, None)]
            factors += [(-1.0, alphabet.find(party, setting, a)) for a in range(kept)]
        new_terms = []
        for coeff, word in terms:
            for sign, op in factors:
                nw = word if op is None else word + [op]
                new_terms.append((coeff * sign, nw))
        terms = new_terms
    return [(c, tuple(w)) for c, w in terms]


def correlator_to_terms(
    alphabet: OperatorAlphabet, parties: list[int], settings: list[int]
) -> list[tuple[float, Word]]:
    """Expand ``<A_x B_y ...>`` into projector words via O = 1 - 2 P(0|x)."""
    net = alphabet.network
    terms: list[tuple[float, list[int]]] = [(1.0, [])]
    for party, setting in zip(parties, settings):
        if net.effective_outcomes[party] != 2:
            raise ExpressionError(
                f"correlator shorthand needs binary outcomes; party "
                f"{net.parties[party]} has {net.effective_outcomes[party]}"
            )
        if not 0 <= setting < net.effective_settings[party]:
            raise ExpressionError(
                f"setting {setting} out of range for party {net.parties[party]}"
            )
        op = alphabet.find(party, setting, 0)
        new_terms = []
        for coeff, word in terms:
            new_terms.append((coeff, word))
            new_terms.append((-2.0 * coeff, word + [op]))
        terms = new_terms
    return [(c, tuple(w)) for c, w in terms]


# -- parsing -----------------------------------------------------------------

_LABEL_COMPACT = re.compile(r"^p(\w+)\(([0-9]+)\|([0-9]+)\)$")
_LABEL_BRACKET = re.compile(r"^p\[([^\]]+)\]\(([0-9,]+)\|([0-9,]+)\)$")


def _match_party_names(text: str, names: tuple[str, ...]) -> list[int]:
    """Tokenize concatenated party names, longest match first."""
    by_length = sorted(range(len(names)), key=lambda i: -len(names[i]))
    out = []
    pos = 0
    while pos < len(text):
        for i in by_length:
            if text.startswith(names[i], pos):
                out.append(i)
                pos += len(names[i])
                break
        else:
            raise ExpressionError(f"cannot match party names in {text!r}")
    return out


def parse_label(text: str, parties: tuple[str, ...]) -> ProbabilityLabel:
    """Parse ``pAB(00|00)`` or ``p[A,B](0,0|0,0)`` into a label."""
    text = text.strip()
    m = _LABEL_BRACKET.match(text)
    if m:
        names = [s.strip() for s in m.group(1).split(",")]
        idx = []
        for name in names:
            if name not in parties:
                raise ExpressionError(f"unknown party {name!r} in label {text!r}")
            idx.append(parties.index(name))
        outs = [int(s) for s in m.group(2).split(",")]
        sets = [int(s) for s in m.group(3).split(",")]
    else:
        m = _LABEL_COMPACT.match(text)
        if not m:
            raise ExpressionError(f"not a probability label: {text!r}")
        idx = _match_party_names(m.group(1), parties)
        outs = [int(ch) for ch in m.group(2)]
        sets = [int(ch) for ch in m.group(3)]
    if not (len(idx) == len(outs) == len(sets)):
        raise ExpressionError(f"label {text!r} has mismatched party/outcome/setting counts")
    if len(set(idx)) != len(idx):
        raise ExpressionError(f"label {text!r} repeats a party")
    order = sorted(range(len(idx)), key=lambda k: idx[k])
    return ProbabilityLabel(
        parties=tuple(idx[k] for k in order),
        outcomes=tuple(outs[k] for k in order),
        settings=tuple(sets[k] for k in order),
    )


def _parse_correlator(text: str, parties: tuple[str, ...]) -> tuple[list[int], list[int]]:
    inner = text.strip()[1:-1].strip()
    party_idx = []
    settings = []
    for token in inner.split():
        m = re.match(r"^(.*?)(\d+)$", token)
        if not m:
            raise ExpressionError(f"bad correlator factor {token!r}")
        name, setting = m.group(1), int(m.group(2))
        if name not in parties:
            raise ExpressionError(f"unknown party {name!r} in correlator {text!r}")
        party_idx.append(parties.index(name))
        settings.append(setting)
    if not party_idx:
        raise ExpressionError(f"empty correlator {text!r}")
    return party_idx, settings


def _split_terms(expr: str) -> list[tuple[float, str]]:
    """Split on top-level + and -, returning (sign, body) pairs."""
    terms = []
    depth = 0
    sign = 1.0
    buf = []
    for ch in expr:
        if ch in "([<":
            depth += 1
        elif ch in ")]>":
            depth -= 1
        if depth == 0 and ch in "+-":
            if "".join(buf).strip():
                terms.append((sign, "".join(buf).strip()))
            elif terms and not "".join(buf).strip():
                pass  # consecutive sign: handled by sign flip below
            buf = []
            sign = 1.0 if ch == "+" else -1.0
            continue
        buf.append(ch)
    if "".join(buf).strip():
        terms.append((sign, "".join(buf).strip()))
    if depth != 0:
        raise ExpressionError(f"unbalanced brackets in {expr!r}")
    return terms


def parse_objective(
    expr: str, alphabet: OperatorAlphabet
) -> tuple[float, dict[Word, float]]:
    """Parse an objective string into (constant, {word: coefficient}).

    Words are raw (uncanonicalized) operator products; the relaxation builder
    canonicalizes and validates them against its variable registry.
    """
    scn: NetworkScenario = alphabet.network
    parties = scn.parties
    constant = 0.0
    words: dict[Word, float] = {}

    for sign, body in _split_terms(expr):
        coeff = sign
        # optional leading numeric coefficient, optionally joined with '*'
        m = re.match(r"^([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*\*?\s*(.*)$", body)
        if m:
            coeff *= float(m.group(1))
            body = m.group(2).strip()
        if not body:
            constant += coeff
            continue
        if body.startswith("<"):
            party_idx, settings = _parse_correlator(body, parties)
            terms = correlator_to_terms(alphabet, party_idx, settings)
        elif body.startswith("p"):
            label = parse_label(body, parties)
            terms = label_to_terms(alphabet, label)
        else:
            raise ExpressionError(f"cannot parse objective term {body!r}")
        for c, word in terms:
            if word:
                words[word] = words.get(word, 0.0) + coeff * c
            else:
                constant += coeff * c
    return constant, words


def diagonal_word(alphabet: OperatorAlphabet, label: ProbabilityLabel) -> Word:
    """The single operator word of a label whose outcomes are all kept.

    Raises when the label needs last-outcome expansion (then it is a
    combination of words, not one moment).
    """
    terms = label_to_terms(alphabet, label)
    if len(terms) != 1 or terms[0][0] != 1.0:
        raise ExpressionError(
            f"label with eliminated outcomes maps to {len(terms)} words, not one moment"
        )
    return terms[0][1]
