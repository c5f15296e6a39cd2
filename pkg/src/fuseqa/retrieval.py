"""Entity grounding and hop-bounded subgraph retrieval.

All functions are pure over an immutable KnowledgeGraph, so per-question
retrieval can fan out across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .kg import KnowledgeGraph, Triplet, normalize_surface


@dataclass
class SeedSet:
    question_seeds: set[int] = field(default_factory=set)
    answer_seeds: set[int] = field(default_factory=set)


@dataclass
class Subgraph:
    """Triplets lying on short undirected seed-to-seed paths.

    ``min_hop[tid]`` is the length of the shortest qualifying path that
    contains the triplet. Triplets are kept sorted by id.
    """

    triplets: list[Triplet] = field(default_factory=list)
    min_hop: dict[int, int] = field(default_factory=dict)
    max_hop: int = 0

    @property
    def triplet_ids(self) -> list[int]:
        return [t.id for t in self.triplets]

    @property
    def nodes(self) -> list[int]:
        seen: set[int] = set()
        for t in self.triplets:
            seen.add(t.head)
            seen.add(t.tail)
        return sorted(seen)

    def serialize(self, kg: KnowledgeGraph) -> str:
        lines = [f"# hop={self.max_hop}"]
        for t in self.triplets:
            lines.append(
                f"{kg.entity_surface(t.head)}\t"
                f"{kg.relation_surface(t.relation)}\t"
                f"{kg.entity_surface(t.tail)}"
            )
        return "\n".join(lines) + "\n"


def ground_entities(text: str, kg: KnowledgeGraph) -> set[int]:
    """Find KG entities occurring in the text as maximal token spans.

    Scans left to right; at each position the longest entity match wins and
    shorter matches inside the chosen span are suppressed.
    """
    if not text:
        raise ValueError("text must be non-empty")
    tokens = normalize_surface(text).split()
    max_len = 0
    surface_set = set()
    for surface in kg.entity_surfaces:
        max_len = max(max_len, len(surface.split()))
        surface_set.add(surface)
    found: set[int] = set()
    i = 0
    while i < len(tokens):
        matched = 0
        for span in range(min(max_len, len(tokens) - i), 0, -1):
            candidate = " ".join(tokens[i : i + span])
            if candidate in surface_set:
                found.add(kg.lookup_entity(candidate))
                matched = span
                break
        i += matched if matched else 1
    return found


def _undirected_neighbors(kg: KnowledgeGraph) -> dict[int, list[tuple[int, int]]]:
    """entity -> list of (neighbor entity, triplet id), both edge directions."""
    nbrs: dict[int, list[tuple[int, int]]] = {e: [] for e in range(kg.n_entities)}
    for t in kg.triplets:
        nbrs[t.head].append((t.tail, t.id))
        if t.tail != t.head:
            nbrs[t.tail].append((t.head, t.id))
    return nbrs


def _bfs_distances(nbrs, sources: set[int], n_entities: int) -> list[float]:
    dist = [float("inf")] * n_entities
    frontier = list(sources)
    for s in sources:
        dist[s] = 0
    d = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v, _tid in nbrs[u]:
                if dist[v] > d + 1:
                    dist[v] = d + 1
                    nxt.append(v)
        frontier = nxt
        d += 1
    return dist


def retrieve_subgraph(kg: KnowledgeGraph, seeds: SeedSet, max_hop: int) -> Subgraph:
    """Collect triplets on simple undirected paths of length <= max_hop
    between question seeds and answer seeds.

    With no answer seeds, falls back to the max_hop-hop neighborhood of the
    question seeds. Output is deterministic (sorted by triplet id).
    """
    if max_hop < 1:
        raise ValueError("max_hop must be >= 1")
    if not seeds.question_seeds:
        return Subgraph(max_hop=max_hop)
    min_hop: dict[int, int] = {}
    nbrs = _undirected_neighbors(kg)

    if not seeds.answer_seeds:
        dist = _bfs_distances(nbrs, seeds.question_seeds, kg.n_entities)
        for t in kg.triplets:
            d = min(dist[t.head], dist[t.tail]) + 1
            if d <= max_hop:
                min_hop[t.id] = int(d)
    else:
        # DFS over simple paths from each question seed; record every edge of
        # a path that ends in an answer seed.
        targets = seeds.answer_seeds
        path_edges: list[int] = []
        on_path = [False] * kg.n_entities

        def mark() -> None:
            length = len(path_edges)
            for tid in path_edges:
                prev = min_hop.get(tid)
                if prev is None or length < prev:
                    min_hop[tid] = length

        def dfs(u: int) -> None:
            if u in targets and path_edges:
                mark()
            if len(path_edges) >= max_hop:
                return
            for v, tid in nbrs[u]:
                if on_path[v]:
                    continue
                on_path[v] = True
                path_edges.append(tid)
                dfs(v)
                path_edges.pop()
                on_path[v] = False

        for q in sorted(seeds.question_seeds):
            on_path = [False] * kg.n_entities
            on_path[q] = True
            path_edges = []
            dfs(q)

    triplets = [kg.triplets[tid] for tid in sorted(min_hop)]
    return Subgraph(triplets=triplets, min_hop=min_hop, max_hop=max_hop)


def cap_subgraph(sub: Subgraph, max_triplets: int) -> Subgraph:
    """Keep the max_triplets triplets with smallest (min hop, triplet id)."""
    if max_triplets < 1:
        raise ValueError("max_triplets must be >= 1")
    if len(sub.triplets) <= max_triplets:
        return sub
    keep = sorted(sub.triplets, key=lambda t: (sub.min_hop[t.id], t.id))[:max_triplets]
    keep.sort(key=lambda t: t.id)
    return Subgraph(
        triplets=keep,
        min_hop={t.id: sub.min_hop[t.id] for t in keep},
        max_hop=sub.max_hop,
    )
