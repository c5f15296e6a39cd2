"""Knowledge-graph storage: triple files, lookup indexes, relation statistics.

The graph is immutable after loading and safe to share across workers.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

DEFAULT_TEMPLATE = "{head} {relation} {tail}"


class KGError(Exception):
    """Raised for malformed knowledge-graph input files."""


def normalize_surface(text: str) -> str:
    """NFC-normalize, case-fold and collapse internal whitespace."""
    text = unicodedata.normalize("NFC", text)
    return " ".join(text.casefold().split())


@dataclass(frozen=True)
class Triplet:
    head: int
    relation: int
    tail: int
    id: int


@dataclass
class RelationStats:
    """Per-relation counts and relative frequencies over the whole graph."""

    counts: list[int]
    total: int

    def freq(self, relation: int, mode: str = "frequency") -> float:
        if mode == "frequency":
            return self.counts[relation] / self.total
        if mode == "inverse_frequency":
            inv = [1.0 / c if c else 0.0 for c in self.counts]
            z = sum(inv)
            return (1.0 / self.counts[relation]) / z if self.counts[relation] else 0.0
        raise ValueError(f"unknown relf_mode: {mode!r}")

    def freqs(self, mode: str = "frequency") -> list[float]:
        return [self.freq(r, mode) for r in range(len(self.counts))]


@dataclass
class KnowledgeGraph:
    entity_surfaces: list[str] = field(default_factory=list)
    relation_surfaces: list[str] = field(default_factory=list)
    triplets: list[Triplet] = field(default_factory=list)
    out_adjacency: dict[int, list[int]] = field(default_factory=dict)
    in_adjacency: dict[int, list[int]] = field(default_factory=dict)
    _entity_index: dict[str, int] = field(default_factory=dict)
    _relation_index: dict[str, int] = field(default_factory=dict)

    @property
    def n_entities(self) -> int:
        return len(self.entity_surfaces)

    @property
    def n_relations(self) -> int:
        return len(self.relation_surfaces)

    def entity_surface(self, eid: int) -> str:
        return self.entity_surfaces[eid]

    def relation_surface(self, rid: int) -> str:
        return self.relation_surfaces[rid]

    def lookup_entity(self, surface: str) -> int | None:
        return self._entity_index.get(normalize_surface(surface))

    def lookup_relation(self, surface: str) -> int | None:
        return self._relation_index.get(normalize_surface(surface))

    def _intern_entity(self, surface: str) -> int:
        key = normalize_surface(surface)
        eid = self._entity_index.get(key)
        if eid is None:
            eid = len(self.entity_surfaces)
            self.entity_surfaces.append(key)
            self._entity_index[key] = eid
            self.out_adjacency[eid] = []
            self.in_adjacency[eid] = []
        return eid

    def _intern_relation(self, surface: str) -> int:
        key = normalize_surface(surface)
        rid = self._relation_index.get(key)
        if rid is None:
            rid = len(self.relation_surfaces)
            self.relation_surfaces.append(key)
            self._relation_index[key] = rid
        return rid

    def add_triplet_line(self, head: str, relation: str, tail: str) -> Triplet:
        h = self._intern_entity(head)
        r = self._intern_relation(relation)
        t = self._intern_entity(tail)
        trip = Triplet(h, r, t, len(self.triplets))
        self.triplets.append(trip)
        self.out_adjacency[h].append(trip.id)
        self.in_adjacency[t].append(trip.id)
        return trip

    def to_triple_lines(self) -> str:
        lines = []
        for t in self.triplets:
            lines.append(
                f"{self.entity_surfaces[t.head]}\t"
                f"{self.relation_surfaces[t.relation]}\t"
                f"{self.entity_surfaces[t.tail]}"
            )
        return "\n".join(lines) + "\n" if lines else ""


def _iter_data_lines(text: str):
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, line


def parse_triples(text: str) -> KnowledgeGraph:
    """Build a KnowledgeGraph from `head<TAB>relation<TAB>tail` lines."""
    kg = KnowledgeGraph()
    for lineno, line in _iter_data_lines(text):
        fields = line.split("\t")
        if len(fields) != 3:
            raise KGError(f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
        if any(not f.strip() for f in fields):
            raise KGError(f"line {lineno}: empty field in triple")
        kg.add_triplet_line(*fields)
    if not kg.triplets:
        raise KGError("empty knowledge graph")
    return kg


def load_triples(path: str) -> KnowledgeGraph:
    with open(path, encoding="utf-8") as f:
        return parse_triples(f.read())


def relation_stats(kg: KnowledgeGraph) -> RelationStats:
    counts = [0] * kg.n_relations
    for t in kg.triplets:
        counts[t.relation] += 1
    return RelationStats(counts=counts, total=len(kg.triplets))


def lookup_entity(kg: KnowledgeGraph, surface: str) -> int | None:
    return kg.lookup_entity(surface)


@dataclass
class TemplateTable:
    """Relation-id keyed linearization templates with `{head}`/`{tail}` slots."""

    templates: dict[int, str] = field(default_factory=dict)

    def template_for(self, relation: int, kg: KnowledgeGraph) -> str:
        tpl = self.templates.get(relation)
        if tpl is None:
            tpl = DEFAULT_TEMPLATE.replace("{relation}", kg.relation_surface(relation))
        return tpl


_ALLOWED_PLACEHOLDERS = ("{head}", "{tail}")


def validate_template(template: str) -> None:
    for ph in _ALLOWED_PLACEHOLDERS:
        if template.count(ph) != 1:
            raise KGError(
                f"template {template!r} must contain {ph} exactly once"
            )
    leftover = template.replace("{head}", "").replace("{tail}", "")
    if "{" in leftover or "}" in leftover:
        raise KGError(f"template {template!r} contains an unknown placeholder")


def parse_templates(text: str, kg: KnowledgeGraph) -> TemplateTable:
    """Parse `relation<TAB>template` lines; unknown relations are ignored."""
    table = TemplateTable()
    for lineno, line in _iter_data_lines(text):
        fields = line.split("\t")
        if len(fields) != 2:
            raise KGError(f"line {lineno}: expected 2 tab-separated fields, got {len(fields)}")
        rel_surface, template = fields
        validate_template(template)
        rid = kg.lookup_relation(rel_surface)
        if rid is not None:
            table.templates[rid] = template
    return table


def load_templates(path: str, kg: KnowledgeGraph) -> TemplateTable:
    with open(path, encoding="utf-8") as f:
        return parse_templates(f.read(), kg)


BUNDLE_HEADER = "# fuseqa-kg-bundle v1"


def write_bundle(kg: KnowledgeGraph, templates: TemplateTable, path: str) -> None:
    """Validated single-file bundle; rebuilding identical inputs is
    byte-identical."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(BUNDLE_HEADER + "\n")
        f.write("[triples]\n")
        f.write(kg.to_triple_lines())
        f.write("[templates]\n")
        f.write(templates_to_lines(templates, kg))


def load_bundle(path: str) -> tuple[KnowledgeGraph, TemplateTable]:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    lines = text.split("\n")
    if not lines or lines[0] != BUNDLE_HEADER:
        raise KGError(f"{path}: not a knowledge-graph bundle")
    try:
        t_start = lines.index("[triples]") + 1
        p_start = lines.index("[templates]")
    except ValueError as exc:
        raise KGError(f"{path}: missing bundle section") from exc
    kg = parse_triples("\n".join(lines[t_start:p_start]))
    templates = parse_templates("\n".join(lines[p_start + 1 :]), kg)
    return kg, templates


def templates_to_lines(table: TemplateTable, kg: KnowledgeGraph) -> str:
    lines = [
        f"{kg.relation_surface(rid)}\t{tpl}"
        for rid, tpl in sorted(table.templates.items())
    ]
    return "\n".join(lines) + "\n" if lines else ""
