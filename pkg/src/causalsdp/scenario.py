"""Causal scenarios: DAG validation, classification, and interruption.

A causal scenario is a DAG whose latent nodes are sources of (classical or
quantum) systems and whose visible nodes are measured parties.  Network
scenarios are the bipartite case (only latent-to-visible edges); scenarios
with visible-to-visible edges are transformed into equivalent networks by
interruption: each child of a visible parent gains a setting factor ranging
over the parent's outcomes, and the original statistics sit on the diagonal
where that factor equals the parent's actual outcome.
"""

from __future__ import annotations

import json
import sys
import warnings
from dataclasses import dataclass, field


class ScenarioError(ValueError):
    """Raised for malformed or unsupported causal scenarios."""


DEFAULT_SOURCE_NAME = "rho_global"


@dataclass(frozen=True)
class CausalScenario:
    """A validated causal DAG together with party cardinalities.

    ``visible_nodes`` fixes the party order used to index every per-party
    array in the package.  ``latent_nodes`` keep the insertion order of the
    ``dag`` mapping.
    """

    dag: dict[str, tuple[str, ...]]
    visible_nodes: tuple[str, ...]
    latent_nodes: tuple[str, ...]
    outcomes_per_party: tuple[int, ...]
    settings_per_party: tuple[int, ...]
    vis_to_vis_edges: tuple[tuple[str, str], ...]

    @property
    def n_parties(self) -> int:
        return len(self.visible_nodes)

    def party_index(self, name: str) -> int:
        try:
            return self.visible_nodes.index(name)
        except ValueError:
            raise ScenarioError(f"unknown party {name!r}") from None

    def is_network(self) -> bool:
        return not self.vis_to_vis_edges


@dataclass(frozen=True)
class SettingComposition:
    """How one party's effective setting decomposes after interruption.

    The native setting is the slowest-varying factor; outcome copies of
    interrupted visible parents follow, in party order.  ``parents`` holds
    (parent party index, parent outcome cardinality) pairs.
    """

    native_settings: int
    parents: tuple[tuple[int, int], ...] = ()

    @property
    def effective_settings(self) -> int:
        n = self.native_settings
        for _, card in self.parents:
            n *= card
        return n

    def compose(self, native: int, parent_outcomes: tuple[int, ...]) -> int:
        """Build the effective setting index from its components."""
        if not 0 <= native < self.native_settings:
            raise ValueError(f"native setting {native} out of range")
        if len(parent_outcomes) != len(self.parents):
            raise ValueError("wrong number of parent outcomes")
        idx = native
        for out, (_, card) in zip(parent_outcomes, self.parents):
            if not 0 <= out < card:
                raise ValueError(f"parent outcome {out} out of range")
            idx = idx * card + out
        return idx

    def decompose(self, effective: int) -> tuple[int, tuple[int, ...]]:
        """Split an effective setting index into (native, parent outcomes)."""
        if not 0 <= effective < self.effective_settings:
            raise ValueError(f"effective setting {effective} out of range")
        outs = []
        for _, card in reversed(self.parents):
            effective, out = divmod(effective, card)
            outs.append(out)
        return effective, tuple(reversed(outs))


@dataclass(frozen=True)
class NetworkScenario:
    """A bipartite source/party scenario, possibly obtained by interruption."""

    sources: tuple[str, ...]
    parties: tuple[str, ...]
    party_sources: tuple[tuple[int, ...], ...]
    effective_outcomes: tuple[int, ...]
    effective_settings: tuple[int, ...]
    setting_composition: tuple[SettingComposition, ...]
    original: CausalScenario = field(repr=False)

    @property
    def n_parties(self) -> int:
        return len(self.parties)

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def interrupted_parents(self, party: int) -> tuple[tuple[int, int], ...]:
        return self.setting_composition[party].parents

    def is_interrupted(self) -> bool:
        return any(c.parents for c in self.setting_composition)


def _toposort_check(edges: dict[str, set[str]]) -> None:
    """Raise on any directed cycle among the given adjacency sets."""
    seen: dict[str, int] = {}  # 0 = in progress, 1 = done

    def visit(node: str, stack: list[str]) -> None:
        state = seen.get(node)
        if state == 1:
            return
        if state == 0:
            cycle = " -> ".join(stack[stack.index(node):] + [node])
            raise ScenarioError(f"cycle detected: {cycle}")
        seen[node] = 0
        stack.append(node)
        for child in edges.get(node, ()):
            visit(child, stack)
        stack.pop()
        seen[node] = 1

    for start in list(edges):
        visit(start, [])


def make_scenario(
    dag: dict[str, list[str]] | None,
    outcomes_per_party: list[int],
    settings_per_party: list[int],
    order: list[str] | None = None,
) -> CausalScenario:
    """Validate and build a :class:`CausalScenario`.

    When ``dag`` is empty or missing, a single global source feeding every
    party is synthesized and a warning is emitted.  Party order defaults to
    the lexicographic order of the visible node names.
    """
    outcomes = [int(x) for x in outcomes_per_party]
    settings = [int(x) for x in settings_per_party]
    if len(outcomes) != len(settings):
        raise ScenarioError(
            f"outcome list has length {len(outcomes)} but setting list has length {len(settings)}"
        )
    if not outcomes:
        raise ScenarioError("scenario needs at least one party")
    if any(d < 1 for d in outcomes) or any(s < 1 for s in settings):
        raise ScenarioError("outcome and setting cardinalities must be >= 1")

    if not dag:
        if order is not None:
            names = [str(p) for p in order]
        else:
            names = [f"P{i + 1}" for i in range(len(outcomes))]
        if len(names) != len(outcomes):
            raise ScenarioError("party order length does not match cardinalities")
        warnings.warn(
            "No DAG provided; defaulting to one global source feeding every party.",
            stacklevel=2,
        )
        print(
            "warning: no DAG provided, defaulting to one global source",
            file=sys.stderr,
        )
        dag = {DEFAULT_SOURCE_NAME: list(names)}

    dag_clean: dict[str, tuple[str, ...]] = {}
    children_of: dict[str, set[str]] = {}
    all_children: set[str] = set()
    for parent, children in dag.items():
        parent = str(parent)
        kids = tuple(str(c) for c in children)
        if parent in dag_clean:
            raise ScenarioError(f"duplicate parent node {parent!r}")
        if len(set(kids)) != len(kids):
            raise ScenarioError(f"duplicate child under node {parent!r}")
        dag_clean[parent] = kids
        children_of[parent] = set(kids)
        all_children.update(kids)

    # Latent nodes are exactly the parents that never appear as children.
    latent = tuple(p for p in dag_clean if p not in all_children)
    node_names = set(dag_clean) | all_children
    visible_set = node_names - set(latent)

    if order is not None:
        visible = tuple(str(p) for p in order)
        if set(visible) != visible_set or len(visible) != len(visible_set):
            missing = visible_set - set(visible)
            extra = set(visible) - visible_set
            detail = []
            if missing:
                detail.append(f"missing {sorted(missing)}")
            if extra:
                detail.append(f"unknown {sorted(extra)}")
            raise ScenarioError("party order does not match DAG nodes: " + ", ".join(detail))
    else:
        visible = tuple(sorted(visible_set))

    if len(visible) != len(outcomes):
        raise ScenarioError(
            f"DAG has {len(visible)} visible nodes but cardinality lists have length {len(outcomes)}"
        )

    for lat in latent:
        if not dag_clean[lat]:
            raise ScenarioError(f"latent node {lat!r} has no children")
        for child in dag_clean[lat]:
            if child in latent:
                raise ScenarioError(f"latent node {child!r} has a parent (latent-to-latent edge)")
    for parent in visible:
        for child in dag_clean.get(parent, ()):
            if child not in visible_set:
                raise ScenarioError(
                    f"visible node {parent!r} points at latent node {child!r} (unsupported)"
                )

    _toposort_check(children_of)

    # Every party must hang off something.
    parented = set()
    for parent, kids in dag_clean.items():
        parented.update(kids)
    for party in visible:
        if party not in parented:
            raise ScenarioError(f"party {party!r} has no latent or visible parent")

    vis_edges = tuple(
        (parent, child)
        for parent in dag_clean
        if parent in visible_set
        for child in dag_clean[parent]
    )

    return CausalScenario(
        dag=dag_clean,
        visible_nodes=visible,
        latent_nodes=latent,
        outcomes_per_party=tuple(outcomes),
        settings_per_party=tuple(settings),
        vis_to_vis_edges=vis_edges,
    )


def parse_scenario(text: str) -> tuple[CausalScenario, list[int]]:
    """Parse a scenario JSON document.

    Recognized keys: ``dag`` (object, optional), ``outcomes`` (list of int),
    ``settings`` (list of int), ``inflation`` (list of int, optional,
    defaults to one copy per source), ``order`` (list of str, optional).
    Returns the scenario and the per-source inflation levels.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    unknown = set(doc) - {"dag", "outcomes", "settings", "inflation", "order"}
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    for key in ("outcomes", "settings"):
        if key not in doc:
            raise ScenarioError(f"scenario document lacks required key {key!r}")

    scn = make_scenario(
        doc.get("dag"),
        doc["outcomes"],
        doc["settings"],
        order=doc.get("order"),
    )
    inflation = doc.get("inflation")
    if inflation is None:
        inflation = [1] * len(scn.latent_nodes)
    inflation = [int(x) for x in inflation]
    if len(inflation) != len(scn.latent_nodes):
        raise ScenarioError(
            f"inflation list has length {len(inflation)} but the scenario has "
            f"{len(scn.latent_nodes)} sources"
        )
    if any(k < 1 for k in inflation):
        raise ScenarioError("inflation levels must be >= 1")
    return scn, inflation


def interrupt(scn: CausalScenario) -> NetworkScenario:
    """Transform a scenario into an equivalent network.

    Children of visible parents gain one setting factor per parent, sized by
    the parent's outcome cardinality.  On scenarios that already are networks
    this is the identity transformation.
    """
    parties = scn.visible_nodes
    sources = scn.latent_nodes
    party_idx = {name: i for i, name in enumerate(parties)}

    party_sources = []
    for name in parties:
        feeds = tuple(
            s for s, lat in enumerate(sources) if name in scn.dag[lat]
        )
        party_sources.append(feeds)

    compositions = []
    for i, name in enumerate(parties):
        vis_parents = sorted(
            (party_idx[parent] for parent, child in scn.vis_to_vis_edges if child == name)
        )
        parents = tuple((p, scn.outcomes_per_party[p]) for p in vis_parents)
        compositions.append(
            SettingComposition(native_settings=scn.settings_per_party[i], parents=parents)
        )

    return NetworkScenario(
        sources=sources,
        parties=parties,
        party_sources=tuple(party_sources),
        effective_outcomes=scn.outcomes_per_party,
        effective_settings=tuple(c.effective_settings for c in compositions),
        setting_composition=tuple(compositions),
        original=scn,
    )
