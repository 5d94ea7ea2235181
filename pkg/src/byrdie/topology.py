"""Directed communication graphs and certification of the reduced-graph condition.

Node ids are 1-based integers ``1..M``. An edge ``(j, i)`` means node ``i``
receives from node ``j``; the in-neighborhood of ``i`` is every ``j`` with
``(j, i)`` in the edge set.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, EnumerationBudgetExceeded, ParseError

DEFAULT_ENUMERATION_BUDGET = 10**6


@dataclass(frozen=True)
class DirectedGraph:
    """Static directed graph on nodes ``1..M`` without self-loops."""

    node_count: int
    edges: frozenset
    _in: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        M = self.node_count
        if not isinstance(M, (int, np.integer)) or M < 1:
            raise ConfigError(f"node count must be a positive integer, got {M!r}")
        edges = frozenset((int(j), int(i)) for j, i in self.edges)
        in_lists = [[] for _ in range(M + 1)]
        for j, i in edges:
            if j == i:
                raise ConfigError(f"self-loop on node {j}")
            if not (1 <= j <= M and 1 <= i <= M):
                raise ConfigError(f"edge ({j}, {i}) references a node outside 1..{M}")
            in_lists[i].append(j)
        object.__setattr__(self, "node_count", int(M))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_in", tuple(tuple(sorted(n)) for n in in_lists))

    @property
    def nodes(self) -> range:
        return range(1, self.node_count + 1)

    def in_neighbors(self, i: int) -> tuple:
        return self._in[i]

    def in_degree(self, i: int) -> int:
        return len(self._in[i])

    def in_degrees(self) -> dict:
        return {i: len(self._in[i]) for i in self.nodes}

    @classmethod
    def complete(cls, M: int) -> "DirectedGraph":
        return cls(M, frozenset((j, i) for j in range(1, M + 1) for i in range(1, M + 1) if i != j))

    @classmethod
    def ring(cls, M: int) -> "DirectedGraph":
        """Directed cycle 1 -> 2 -> ... -> M -> 1."""
        return cls(M, frozenset((j, j % M + 1) for j in range(1, M + 1)))

    def __str__(self):
        return f"DirectedGraph(M={self.node_count}, |E|={len(self.edges)})"


@dataclass(frozen=True)
class ByzantineAssignment:
    """Which nodes are Byzantine, plus the trim parameter ``b`` used by the protocol."""

    byzantine_set: frozenset
    b_bound: int

    def __post_init__(self):
        object.__setattr__(self, "byzantine_set", frozenset(int(n) for n in self.byzantine_set))
        if self.b_bound < 0:
            raise ConfigError("b must be non-negative")
        if len(self.byzantine_set) > self.b_bound:
            raise ConfigError(
                f"{len(self.byzantine_set)} Byzantine nodes exceed the bound b={self.b_bound}"
            )

    def honest(self, g: DirectedGraph) -> list:
        honest = [n for n in g.nodes if n not in self.byzantine_set]
        if not honest:
            raise ConfigError("honest node set is empty")
        unknown = self.byzantine_set - set(g.nodes)
        if unknown:
            raise ConfigError(f"Byzantine ids not in graph: {sorted(unknown)}")
        return honest


@dataclass(frozen=True)
class Subgraph:
    """Node-induced subgraph with an explicit node set (isolated nodes allowed)."""

    nodes: frozenset
    edges: frozenset
    removed: tuple = ()

    def in_neighbors(self, i):
        return tuple(sorted(j for j, k in self.edges if k == i))


# ---------------------------------------------------------------- generation


def generate_erdos_renyi(M: int, p: float, rng: np.random.Generator, symmetric: bool = False) -> DirectedGraph:
    """Erdos-Renyi digraph: each ordered pair (j, i), j != i, kept with probability p.

    With ``symmetric=True`` one coin is flipped per unordered pair and both
    directions share it.
    """
    if not isinstance(M, (int, np.integer)) or M < 2:
        raise ConfigError(f"M must be an integer >= 2, got {M!r}")
    if not (0 < p <= 1):
        raise ConfigError(f"p must lie in (0, 1], got {p!r}")
    draws = rng.random((M, M)) < p
    if symmetric:
        draws = np.triu(draws, 1)
        draws = draws | draws.T
    np.fill_diagonal(draws, False)
    src, dst = np.nonzero(draws)
    return DirectedGraph(M, frozenset(zip((src + 1).tolist(), (dst + 1).tolist())))


def generate_valid_erdos_renyi(
    M: int,
    p: float,
    b: int,
    rng: np.random.Generator,
    symmetric: bool = False,
    max_attempts: int = 1000,
) -> DirectedGraph:
    """Redraw Erdos-Renyi graphs until every in-degree is at least 2b+1."""
    for _ in range(max_attempts):
        g = generate_erdos_renyi(M, p, rng, symmetric=symmetric)
        if validate_degrees(g, b).ok:
            return g
    raise ConfigError(
        f"no Erdos-Renyi draw with M={M}, p={p} met in-degree >= {2 * b + 1} "
        f"in {max_attempts} attempts"
    )


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class DegreeReport:
    b: int
    required: int
    violations: dict  # node -> in-degree, for offending nodes only

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return f"ok: every in-degree >= {self.required} (b={self.b})"
        listed = ", ".join(f"node {n} has {d}" for n, d in sorted(self.violations.items()))
        return f"degree violation: need in-degree >= {self.required} for b={self.b}; {listed}"


def validate_degrees(g: DirectedGraph, b: int) -> DegreeReport:
    required = 2 * b + 1
    bad = {i: g.in_degree(i) for i in g.nodes if g.in_degree(i) < required}
    return DegreeReport(b, required, bad)


# ---------------------------------------------------------------- reduced graphs


def count_reduced_graphs(g: DirectedGraph, byz: ByzantineAssignment, b: int | None = None) -> int:
    """Number of reduced graphs for one fixed Byzantine placement.

    ``b`` caps the per-node edge removals and defaults to ``byz.b_bound``.
    """
    b = byz.b_bound if b is None else b
    honest = byz.honest(g)
    keep = set(honest)
    total = 1
    for i in honest:
        d = sum(1 for j in g.in_neighbors(i) if j in keep)
        total *= sum(math.comb(d, c) for c in range(min(b, d) + 1))
    return total


def enumerate_reduced_graphs(
    g: DirectedGraph,
    byz: ByzantineAssignment,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    b: int | None = None,
) -> Iterator[Subgraph]:
    """Yield every reduced graph for the given Byzantine placement, without duplicates.

    Byzantine nodes and all their edges are dropped first; then each honest
    node loses any subset of at most ``b`` of its remaining incoming edges
    (``b`` defaults to ``byz.b_bound``).
    """
    b = byz.b_bound if b is None else b
    count = count_reduced_graphs(g, byz, b)
    if count > budget:
        raise EnumerationBudgetExceeded(count, budget)
    honest = byz.honest(g)
    keep = set(honest)
    node_set = frozenset(honest)
    per_node = []
    for i in honest:
        incoming = [(j, i) for j in g.in_neighbors(i) if j in keep]
        options = []
        for c in range(min(b, len(incoming)) + 1):
            options.extend(itertools.combinations(incoming, c))
        per_node.append((incoming, options))
    base = frozenset(e for e in g.edges if e[0] in keep and e[1] in keep)
    for choice in itertools.product(*(opts for _, opts in per_node)):
        removed = tuple(e for combo in choice for e in combo)
        yield Subgraph(node_set, base.difference(removed), removed)


# ---------------------------------------------------------------- source components


def _strongly_connected_components(nodes, succ) -> list:
    """Iterative Tarjan. ``succ`` maps node -> iterable of successors."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    components = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                components.append(frozenset(comp))
    return components


def source_component(sub) -> frozenset:
    """Nodes that reach every node of ``sub``; empty when there is none.

    ``sub`` is anything with ``nodes`` and ``edges`` attributes. The answer is
    the unique source SCC of the condensation, or empty if there are several.
    """
    nodes = sorted(sub.nodes)
    if not nodes:
        return frozenset()
    succ = {v: [] for v in nodes}
    for j, i in sub.edges:
        succ[j].append(i)
    comps = _strongly_connected_components(nodes, succ)
    comp_of = {v: c for c in comps for v in c}
    has_incoming = set()
    for j, i in sub.edges:
        if comp_of[j] is not comp_of[i]:
            has_incoming.add(comp_of[i])
    sources = [c for c in comps if c not in has_incoming]
    return sources[0] if len(sources) == 1 else frozenset()


def has_source_component(sub, min_size: int) -> bool:
    comp = source_component(sub)
    return bool(comp) and len(comp) >= min_size


# ---------------------------------------------------------------- certification


@dataclass(frozen=True)
class Certification:
    """Outcome of checking the reduced-graph condition.

    ``status`` is ``"certified"``, ``"refuted"`` or ``"inconclusive"``. On
    refutation ``witness`` holds the Byzantine placement and removed edges.
    """

    status: str
    b: int
    mode: str
    checked: int
    witness: dict | None = None

    def __str__(self):
        head = f"{self.status} (b={self.b}, mode={self.mode}, reduced graphs checked={self.checked})"
        if self.witness is None:
            return head
        byz = sorted(self.witness["byzantine"])
        removed = " ".join(f"{j}->{i}" for j, i in self.witness["removed_edges"])
        return f"{head}\n  witness: byzantine={byz} removed=[{removed}]"


def _ancestor_intersection(in_masks, honest_bits, full):
    """Bitmask of nodes that reach every honest node, by fixed-point closure."""
    anc = {i: (1 << i) | m for i, m in in_masks.items()}
    changed = True
    while changed:
        changed = False
        for i, m in in_masks.items():
            acc = anc[i]
            rest = m
            while rest:
                low = rest & -rest
                acc |= anc[low.bit_length() - 1]
                rest ^= low
            if acc != anc[i]:
                anc[i] = acc
                changed = True
    common = full
    for i in honest_bits:
        common &= anc[i]
    return common


def _placements(g: DirectedGraph, b: int):
    nodes = list(g.nodes)
    for size in range(b + 1):
        for placement in itertools.combinations(nodes, size):
            if len(placement) < len(nodes):
                yield frozenset(placement)


def _maximal_removals(g, placement, b):
    """Per honest node: list of (remaining in-mask, removed edges) removing exactly min(b, d) edges."""
    honest = [n for n in g.nodes if n not in placement]
    keep = set(honest)
    options = {}
    for i in honest:
        incoming = [j for j in g.in_neighbors(i) if j in keep]
        full = 0
        for j in incoming:
            full |= 1 << (j - 1)
        opts = []
        for combo in itertools.combinations(incoming, min(b, len(incoming))):
            mask = full
            for j in combo:
                mask &= ~(1 << (j - 1))
            opts.append((mask, tuple((j, i) for j in combo)))
        options[i - 1] = opts
    return honest, options


def certify_assumption3(
    g: DirectedGraph,
    b: int,
    mode: str = "exact",
    trials: int = 1000,
    rng: np.random.Generator | None = None,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> Certification:
    """Check that every reduced graph has a source component of at least b+1 nodes.

    Exact mode ranges over every Byzantine placement of size at most ``b``. Since
    adding edges can only grow the set of nodes that reach everything, it is
    enough to test the reduced graphs that drop exactly ``min(b, d)`` incoming
    edges per node; the others are supergraphs of those. Sampled mode can only
    refute, so it reports ``inconclusive`` when no counterexample turns up.
    """
    if b < 0:
        raise ConfigError("b must be non-negative")
    if mode == "exact":
        total = 0
        for placement in _placements(g, b):
            total += count_reduced_graphs(g, ByzantineAssignment(placement, b))
            if total > budget:
                raise EnumerationBudgetExceeded(total, budget)
        checked = 0
        for placement in _placements(g, b):
            honest, options = _maximal_removals(g, placement, b)
            bits = [i - 1 for i in honest]
            full = sum(1 << i for i in bits)
            keys = list(options)
            for choice in itertools.product(*(options[k] for k in keys)):
                checked += 1
                masks = {k: c[0] for k, c in zip(keys, choice)}
                common = _ancestor_intersection(masks, bits, full)
                if bin(common).count("1") < b + 1:
                    removed = tuple(e for c in choice for e in c[1])
                    witness = {"byzantine": placement, "removed_edges": removed}
                    return Certification("refuted", b, mode, checked, witness)
        return Certification("certified", b, mode, checked)
    if mode == "sampled":
        if trials < 1:
            raise ConfigError("sampled certification needs trials >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        nodes = np.arange(1, g.node_count + 1)
        for trial in range(1, trials + 1):
            size = int(rng.integers(0, min(b, g.node_count - 1) + 1))
            placement = frozenset(rng.choice(nodes, size=size, replace=False).tolist())
            honest = [n for n in g.nodes if n not in placement]
            keep = set(honest)
            bits = [i - 1 for i in honest]
            full = sum(1 << i for i in bits)
            masks = {}
            removed = []
            for i in honest:
                incoming = [j for j in g.in_neighbors(i) if j in keep]
                drop = set()
                if incoming:
                    drop = set(rng.choice(len(incoming), size=min(b, len(incoming)), replace=False).tolist())
                mask = 0
                for idx, j in enumerate(incoming):
                    if idx in drop:
                        removed.append((j, i))
                    else:
                        mask |= 1 << (j - 1)
                masks[i - 1] = mask
            common = _ancestor_intersection(masks, bits, full)
            if bin(common).count("1") < b + 1:
                witness = {"byzantine": placement, "removed_edges": tuple(removed)}
                return Certification("refuted", b, mode, trial, witness)
        return Certification("inconclusive", b, mode, trials)
    raise ConfigError(f"unknown certification mode {mode!r}")


# ---------------------------------------------------------------- edge-list I/O


def read_edge_list(path) -> DirectedGraph:
    """Parse ``M`` on the first line then one ``j i`` pair per line (1-based)."""
    lines = Path(path).read_text().splitlines()
    M = None
    edges = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        try:
            values = [int(p) for p in parts]
        except ValueError:
            raise ParseError(f"expected integers, got {raw!r}", lineno) from None
        if M is None:
            if len(values) != 1:
                raise ParseError("first line must hold the node count M", lineno)
            M = values[0]
            continue
        if len(values) != 2:
            raise ParseError(f"expected 'j i', got {raw!r}", lineno)
        edges.append(tuple(values))
    if M is None:
        raise ParseError("empty edge list")
    try:
        return DirectedGraph(M, frozenset(edges))
    except ConfigError as exc:
        raise ParseError(str(exc)) from None


def write_edge_list(g: DirectedGraph, path) -> None:
    rows = [str(g.node_count)] + [f"{j} {i}" for j, i in sorted(g.edges)]
    Path(path).write_text("\n".join(rows) + "\n")


def edges_from_pairs(pairs: Iterable) -> frozenset:
    return frozenset((int(j), int(i)) for j, i in pairs)
