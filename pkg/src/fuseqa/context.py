"""Triplet linearization, embedding, scoring and top-k context selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .kg import (
    KGError,
    KnowledgeGraph,
    RelationStats,
    TemplateTable,
    Triplet,
    normalize_surface,
    validate_template,
)
from .prng import splitmix64_stream
from .retrieval import SeedSet, cap_subgraph, ground_entities, retrieve_subgraph


def linearize_triplet(t: Triplet, templates: TemplateTable, kg: KnowledgeGraph) -> str:
    template = templates.template_for(t.relation, kg)
    validate_template(template)
    sentence = template.replace("{head}", kg.entity_surface(t.head)).replace(
        "{tail}", kg.entity_surface(t.tail)
    )
    return " ".join(sentence.split())


def raw_triplet_text(t: Triplet, kg: KnowledgeGraph) -> str:
    """Plain field concatenation, the alternative to templated linearization."""
    return (
        f"{kg.entity_surface(t.head)} "
        f"{kg.relation_surface(t.relation)} "
        f"{kg.entity_surface(t.tail)}"
    )


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"cosine length mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine of zero vector defined as 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


def _token_hash(token: str) -> int:
    # FNV-1a 64-bit, mixed once through splitmix64 for spread
    h = 0xCBF29CE484222325
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return int(splitmix64_stream(h, 1)[0])


class PseudoEncoder:
    """Deterministic bag-of-tokens encoder.

    Hashes whitespace tokens of the normalized text into d buckets, adds a
    unit contribution per token, and L2-normalizes. No pretrained weights,
    fully reproducible.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in normalize_surface(text).split():
            vec[_token_hash(token) % self.dim] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


@dataclass
class EmbeddingTable:
    """Sentence-keyed vectors loaded from a text file (`dim <d>` header)."""

    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "EmbeddingTable":
        lines = text.split("\n")
        header = lines[0].split()
        if len(header) != 2 or header[0] != "dim":
            raise ValueError("embedding table must start with 'dim <d>'")
        dim = int(header[1])
        table = cls(dim=dim)
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, _, rest = line.partition("\t")
            values = np.array([float(v) for v in rest.split()], dtype=np.float64)
            if values.shape != (dim,):
                raise ValueError(f"line {lineno}: expected {dim} values, got {values.size}")
            table.vectors[key] = values
        return table

    @classmethod
    def load(cls, path: str) -> "EmbeddingTable":
        with open(path, encoding="utf-8") as f:
            return cls.parse(f.read())


class TableEncoder:
    """Encoder backed by an EmbeddingTable keyed by exact sentence text.

    fallback='pseudo' backs misses with the pseudo-encoder; 'strict' raises.
    """

    def __init__(self, table: EmbeddingTable, fallback: str = "pseudo"):
        if fallback not in ("pseudo", "strict"):
            raise ValueError(f"unknown fallback mode: {fallback!r}")
        self.table = table
        self.fallback = fallback
        self._pseudo = PseudoEncoder(dim=table.dim)
        self.dim = table.dim

    def encode(self, text: str) -> np.ndarray:
        vec = self.table.vectors.get(text)
        if vec is not None:
            return vec
        if self.fallback == "strict":
            raise KeyError(f"no embedding for text: {text!r}")
        return self._pseudo.encode(text)


@dataclass
class ScoredTriplet:
    triplet_id: int
    sentence: str
    cosine: float
    relf: float
    score: float


@dataclass
class RetrievedContext:
    question: str
    scored: list[ScoredTriplet]
    lam: float
    k: int

    def serialize(self) -> str:
        lines = [
            f"{s.score!r}\t{s.cosine!r}\t{s.relf!r}\t{s.triplet_id}\t{s.sentence}"
            for s in self.scored
        ]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class ContextConfig:
    max_hop: int = 3
    cap: int = 64
    lam: float = 0.5
    k: int = 16
    relf_mode: str = "frequency"
    score_text: str = "templated"  # or "raw"


def score_triplet(
    t: Triplet,
    question: str,
    encoder,
    stats: RelationStats,
    lam: float,
    kg: KnowledgeGraph,
    templates: TemplateTable,
    relf_mode: str = "frequency",
    score_text: str = "templated",
) -> ScoredTriplet:
    """lam-weighted blend of sentence/question cosine and relation frequency."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    sentence = linearize_triplet(t, templates, kg)
    if score_text == "templated":
        scored_text = sentence
    elif score_text == "raw":
        scored_text = raw_triplet_text(t, kg)
    else:
        raise KGError(f"unknown score_text mode: {score_text!r}")
    cos = cosine(encoder.encode(scored_text), encoder.encode(question))
    relf = stats.freq(t.relation, relf_mode)
    return ScoredTriplet(
        triplet_id=t.id,
        sentence=sentence,
        cosine=cos,
        relf=relf,
        score=lam * cos + (1.0 - lam) * relf,
    )


def select_top_k(scored: list[ScoredTriplet], k: int, question: str = "", lam: float = 0.5) -> RetrievedContext:
    """Descending score, ties broken by ascending triplet id."""
    if k < 1:
        raise ValueError("k must be positive")
    ordered = sorted(scored, key=lambda s: (-s.score, s.triplet_id))
    return RetrievedContext(question=question, scored=ordered[:k], lam=lam, k=k)


def build_context(
    question: str,
    choice: str,
    kg: KnowledgeGraph,
    templates: TemplateTable,
    encoder,
    stats: RelationStats,
    config: ContextConfig,
) -> RetrievedContext:
    """Full knowledge-seeking pipeline: ground, retrieve, cap, score, top-k."""
    seeds = SeedSet(
        question_seeds=ground_entities(question, kg),
        answer_seeds=ground_entities(choice, kg) if choice.strip() else set(),
    )
    if not seeds.question_seeds:
        return RetrievedContext(question=question, scored=[], lam=config.lam, k=config.k)
    sub = retrieve_subgraph(kg, seeds, config.max_hop)
    sub = cap_subgraph(sub, config.cap)
    scored = [
        score_triplet(
            t, question, encoder, stats, config.lam, kg, templates,
            relf_mode=config.relf_mode, score_text=config.score_text,
        )
        for t in sub.triplets
    ]
    return select_top_k(scored, config.k, question=question, lam=config.lam)
