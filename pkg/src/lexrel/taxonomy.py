"""Hypernym-graph loading, path distances, and relation-pair sampling.

The taxonomy export format is a two-section TSV::

    [edges]
    <child_synset><TAB><parent_synset>
    [lemmas]
    <synset><TAB><lemma>

``#`` comment lines and blank lines are ignored. The edge relation must
form a DAG with exactly one parentless synset (the root), which every
other synset therefore reaches through its parent chains.

``path_distance`` follows the hypernym edges: the reported distance is
dist(s1, lca) + dist(s2, lca) where the LCA is the deepest common
ancestor (depth = shortest path to the root, ties broken by the smaller
synset id). An undirected shortest-path variant is available behind the
``undirected`` flag for sensitivity checks.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .data import WordPair
from .errors import FormatError

log = logging.getLogger(__name__)

HYPERNYM = "hypernym"
SYNONYM = "synonym"
COHYPONYM = "cohyponym"
RANDOM = "random"
SAMPLED_RELATIONS = (HYPERNYM, SYNONYM, COHYPONYM, RANDOM)


class TaxonomyGraph:
    """Immutable DAG of synsets with hypernym (child -> parent) edges."""

    def __init__(self, parents: dict[str, list[str]], lemmas: dict[str, list[str]]) -> None:
        synsets: set[str] = set(parents) | set(lemmas)
        for ps in parents.values():
            synsets.update(ps)
        self.synsets = sorted(synsets)
        self._parents = {s: sorted(set(parents.get(s, []))) for s in self.synsets}
        self._children: dict[str, list[str]] = {s: [] for s in self.synsets}
        for child, ps in self._parents.items():
            for p in ps:
                self._children[p].append(child)
        for s in self.synsets:
            self._children[s].sort()
        self.lemmas = {s: sorted(set(lemmas.get(s, []))) for s in self.synsets}

        self._check_acyclic()
        roots = [s for s in self.synsets if not self._parents[s]]
        if len(roots) != 1:
            raise FormatError(
                f"taxonomy must have exactly one root, found {len(roots)}: {roots[:5]}"
            )
        self.root = roots[0]
        self._depth = self._depths_from_root()
        # lemma -> synsets containing it, for synonymy checks
        self.synsets_of_lemma: dict[str, set[str]] = {}
        for s, ls in self.lemmas.items():
            for lemma in ls:
                self.synsets_of_lemma.setdefault(lemma, set()).add(s)

    def _check_acyclic(self) -> None:
        # Kahn's algorithm over child -> parent edges; leftovers lie on a cycle.
        out_degree = {s: len(self._parents[s]) for s in self.synsets}
        queue = deque(s for s, d in out_degree.items() if d == 0)
        seen = 0
        while queue:
            node = queue.popleft()
            seen += 1
            for child in self._children[node]:
                out_degree[child] -= 1
                if out_degree[child] == 0:
                    queue.append(child)
        if seen != len(self.synsets):
            member = sorted(s for s, d in out_degree.items() if d > 0)[0]
            raise FormatError(f"taxonomy contains a cycle through {member!r}")

    def _depths_from_root(self) -> dict[str, int]:
        depth = {self.root: 0}
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            for child in self._children[node]:
                if child not in depth:
                    depth[child] = depth[node] + 1
                    queue.append(child)
        return depth

    def parents_of(self, synset: str) -> list[str]:
        self._require(synset)
        return self._parents[synset]

    def children_of(self, synset: str) -> list[str]:
        self._require(synset)
        return self._children[synset]

    def depth(self, synset: str) -> int:
        """Shortest hypernym-path length from the synset up to the root."""
        self._require(synset)
        return self._depth[synset]

    def ancestor_distances(self, synset: str) -> dict[str, int]:
        """Minimum upward edge counts to every ancestor, including self at 0."""
        self._require(synset)
        dist = {synset: 0}
        queue = deque([synset])
        while queue:
            node = queue.popleft()
            for p in self._parents[node]:
                if p not in dist:
                    dist[p] = dist[node] + 1
                    queue.append(p)
        return dist

    def strict_ancestors(self, synset: str) -> list[str]:
        return sorted(a for a in self.ancestor_distances(synset) if a != synset)

    def is_strict_ancestor(self, ancestor: str, descendant: str) -> bool:
        return ancestor != descendant and ancestor in self.ancestor_distances(descendant)

    def _require(self, synset: str) -> None:
        if synset not in self._depth and synset not in self._parents:
            raise ValueError(f"unknown synset {synset!r}")


def load_taxonomy(source) -> TaxonomyGraph:
    """Parse the two-section export format into a validated graph."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            return load_taxonomy(fh)

    parents: dict[str, list[str]] = {}
    lemmas: dict[str, list[str]] = {}
    section = None
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        if line == "[edges]":
            section = "edges"
            continue
        if line == "[lemmas]":
            section = "lemmas"
            continue
        if section is None:
            raise FormatError("expected an [edges] or [lemmas] section header first", lineno)
        columns = line.split("\t")
        if len(columns) != 2:
            raise FormatError(f"expected 2 tab-separated columns, found {len(columns)}", lineno)
        left, right = columns
        if not left or not right:
            raise FormatError("empty field", lineno)
        if section == "edges":
            if left == right:
                raise FormatError(f"self-edge on synset {left!r}", lineno)
            parents.setdefault(left, []).append(right)
        else:
            lemmas.setdefault(left, []).append(right)
    if not parents and not lemmas:
        raise FormatError("taxonomy stream is empty")
    return TaxonomyGraph(parents, lemmas)


def path_distance(graph: TaxonomyGraph, s1: str, s2: str,
                  undirected: bool = False) -> tuple[int, str]:
    """(distance, lca) between two synsets through the hypernym DAG.

    The default route goes up from each synset to their deepest common
    ancestor; ``undirected`` instead measures the plain shortest path in
    the undirected version of the graph (the LCA reported is still the
    deepest common ancestor).
    """
    d1 = graph.ancestor_distances(s1)
    d2 = graph.ancestor_distances(s2)
    common = set(d1) & set(d2)
    # every synset reaches the root, so `common` is never empty
    lca = min(common, key=lambda s: (-graph.depth(s), s))
    if not undirected:
        return d1[lca] + d2[lca], lca
    return _undirected_distance(graph, s1, s2), lca


def _undirected_distance(graph: TaxonomyGraph, s1: str, s2: str) -> int:
    if s1 == s2:
        return 0
    dist = {s1: 0}
    queue = deque([s1])
    while queue:
        node = queue.popleft()
        for nxt in [*graph.parents_of(node), *graph.children_of(node)]:
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                if nxt == s2:
                    return dist[nxt]
                queue.append(nxt)
    raise ValueError(f"no undirected path between {s1!r} and {s2!r}")


@dataclass
class SampleSpec:
    """Counts per relation plus the random-pair distance constraint."""

    counts: dict[str, int]
    min_random_distance: int = 7
    seed: int = 0

    def __post_init__(self) -> None:
        for rel, n in self.counts.items():
            if rel not in SAMPLED_RELATIONS:
                raise ValueError(f"unknown relation {rel!r}; expected one of {SAMPLED_RELATIONS}")
            if n < 0:
                raise ValueError(f"count for {rel} must be >= 0, got {n}")
        if self.min_random_distance < 1:
            raise ValueError(f"min_random_distance must be >= 1, got {self.min_random_distance}")


@dataclass
class SampledPairs:
    """Generated pairs plus provenance and any per-relation shortfall."""

    pairs: list[WordPair] = field(default_factory=list)
    provenance: list[tuple[str, str]] = field(default_factory=list)  # sampled synsets per pair
    shortfall: dict[str, int] = field(default_factory=dict)


def _pick(rng: np.random.Generator, items: list):
    return items[int(rng.integers(0, len(items)))]


def sample_pairs(graph: TaxonomyGraph, spec: SampleSpec) -> SampledPairs:
    """Sample labeled lemma pairs from the taxonomy, deterministically.

    * hypernym: (lemma of a descendant synset, lemma of a strict ancestor)
      at any depth >= 1;
    * synonym: two distinct lemmas of one synset;
    * cohyponym: lemmas of two distinct synsets sharing a direct parent
      (and not sharing any synset themselves);
    * random: lemmas of two non-root synsets whose LCA is the root at
      total distance >= ``min_random_distance``.

    No unordered lemma pair is emitted twice, across all relations. When
    a relation's quota cannot be met the result carries the shortfall and
    a warning is logged instead of raising.
    """
    rng = np.random.default_rng(spec.seed)
    result = SampledPairs()
    used: set[frozenset[str]] = set()

    with_lemmas = [s for s in graph.synsets if graph.lemmas[s]]
    non_root = [s for s in with_lemmas if s != graph.root]
    multi_lemma = [s for s in with_lemmas if len(graph.lemmas[s]) >= 2]
    multi_child_parents = [s for s in graph.synsets if len(graph.children_of(s)) >= 2]

    def emit(x: str, y: str, label: str, sx: str, sy: str) -> bool:
        key = frozenset((x, y))
        if x == y or key in used:
            return False
        used.add(key)
        result.pairs.append(WordPair(x, y, label))
        result.provenance.append((sx, sy))
        return True

    def try_hypernym() -> bool:
        if not non_root:
            return False
        s = _pick(rng, non_root)
        ancestors = [a for a in graph.strict_ancestors(s) if graph.lemmas[a]]
        if not ancestors:
            return False
        a = _pick(rng, ancestors)
        return emit(_pick(rng, graph.lemmas[s]), _pick(rng, graph.lemmas[a]), HYPERNYM, s, a)

    def try_synonym() -> bool:
        if not multi_lemma:
            return False
        s = _pick(rng, multi_lemma)
        ls = graph.lemmas[s]
        i, j = rng.choice(len(ls), size=2, replace=False)
        return emit(ls[int(i)], ls[int(j)], SYNONYM, s, s)

    def try_cohyponym() -> bool:
        if not multi_child_parents:
            return False
        parent = _pick(rng, multi_child_parents)
        kids = [k for k in graph.children_of(parent) if graph.lemmas[k]]
        if len(kids) < 2:
            return False
        i, j = rng.choice(len(kids), size=2, replace=False)
        sa, sb = kids[int(i)], kids[int(j)]
        la, lb = _pick(rng, graph.lemmas[sa]), _pick(rng, graph.lemmas[sb])
        if graph.synsets_of_lemma.get(la, set()) & graph.synsets_of_lemma.get(lb, set()):
            return False
        return emit(la, lb, COHYPONYM, sa, sb)

    def try_random() -> bool:
        if len(non_root) < 2:
            return False
        s1, s2 = _pick(rng, non_root), _pick(rng, non_root)
        if s1 == s2:
            return False
        dist, lca = path_distance(graph, s1, s2)
        if lca != graph.root or dist < spec.min_random_distance:
            return False
        return emit(_pick(rng, graph.lemmas[s1]), _pick(rng, graph.lemmas[s2]), RANDOM, s1, s2)

    samplers = {HYPERNYM: try_hypernym, SYNONYM: try_synonym,
                COHYPONYM: try_cohyponym, RANDOM: try_random}
    for relation in SAMPLED_RELATIONS:
        wanted = spec.counts.get(relation, 0)
        if wanted == 0:
            continue
        got = 0
        attempts_left = 200 * wanted + 1000
        while got < wanted and attempts_left > 0:
            attempts_left -= 1
            if samplers[relation]():
                got += 1
        if got < wanted:
            result.shortfall[relation] = wanted - got
            log.warning("sample_pairs: %s short by %d of %d requested",
                        relation, wanted - got, wanted)
    return result
