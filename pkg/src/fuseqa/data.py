"""Multiple-choice QA datasets: JSONL loading and a synthetic planted task."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .kg import KnowledgeGraph, TemplateTable
from .prng import uniform01

SPLIT_NAMES = ("train", "ihdev", "ihtest")


class DatasetError(Exception):
    pass


@dataclass
class Example:
    id: str
    question: str
    choices: list[str]
    answer: int
    question_entities: list[str] = field(default_factory=list)
    choice_entities: list[list[str]] = field(default_factory=list)

    def validate(self) -> None:
        if len(self.choices) < 2:
            raise DatasetError(f"example {self.id}: needs at least 2 choices")
        if not 0 <= self.answer < len(self.choices):
            raise DatasetError(
                f"example {self.id}: answer {self.answer} out of range "
                f"for {len(self.choices)} choices"
            )


def parse_dataset(text: str) -> list[Example]:
    examples = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: invalid record: {exc}") from exc
        missing = {"id", "question", "choices", "answer"} - set(rec)
        if missing:
            raise DatasetError(f"line {lineno}: missing fields {sorted(missing)}")
        ex = Example(
            id=str(rec["id"]),
            question=rec["question"],
            choices=list(rec["choices"]),
            answer=int(rec["answer"]),
            question_entities=list(rec.get("question_entities", [])),
            choice_entities=[list(c) for c in rec.get("choice_entities", [])],
        )
        try:
            ex.validate()
        except DatasetError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from exc
        examples.append(ex)
    return examples


def serialize_dataset(examples: list[Example]) -> str:
    lines = []
    for ex in examples:
        rec = {"id": ex.id, "question": ex.question, "choices": ex.choices, "answer": ex.answer}
        if ex.question_entities:
            rec["question_entities"] = ex.question_entities
        if ex.choice_entities:
            rec["choice_entities"] = ex.choice_entities
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def load_dataset(path: str) -> list[Example]:
    with open(path, encoding="utf-8") as f:
        return parse_dataset(f.read())


def load_splits(directory: str) -> dict[str, list[Example]]:
    """Load the named splits present in a directory (train/ihdev/ihtest)."""
    splits = {}
    for name in SPLIT_NAMES:
        path = os.path.join(directory, f"{name}.jsonl")
        if os.path.exists(path):
            splits[name] = load_dataset(path)
    return splits


class _Rng:
    """Tiny deterministic RNG over the splitmix64 stream."""

    def __init__(self, seed: int):
        self._seed = seed
        self._i = 0
        self._buf = uniform01(seed, 4096)

    def next01(self) -> float:
        if self._i >= self._buf.size:
            self._seed = (self._seed + 0x9E3779B9) & 0xFFFFFFFFFFFFFFFF
            self._buf = uniform01(self._seed ^ 0xA5A5A5A5, 4096)
            self._i = 0
        v = float(self._buf[self._i])
        self._i += 1
        return v

    def randint(self, n: int) -> int:
        return min(int(self.next01() * n), n - 1)

    def sample(self, n: int, k: int) -> list[int]:
        pool = list(range(n))
        out = []
        for _ in range(k):
            out.append(pool.pop(self.randint(len(pool))))
        return out


ANSWER_RELATION = "gives"
NOISE_RELATION = "near"
N_CHOICES = 5


def make_synthetic_task(
    n_examples: int, kg_size: int, seed: int, n_noise_edges: int = 1
) -> tuple[KnowledgeGraph, TemplateTable, list[Example]]:
    """Planted-knowledge task: the correct choice is the one entity linked to
    the question's topic entity by the answer relation.

    Topic entities are unique per example and choice entities come from a
    shared pool, so the question/choice text alone never identifies the
    answer; only the graph does. Noise edges with a second relation connect
    topics to some distractors so mere subgraph non-emptiness is not enough.
    """
    if kg_size < N_CHOICES:
        raise ValueError(f"kg_size must be >= {N_CHOICES}")
    rng = _Rng(seed)
    kg = KnowledgeGraph()
    for j in range(kg_size):
        kg._intern_entity(f"item {j}")
    examples = []
    for i in range(n_examples):
        topic = f"topic {i}"
        picks = rng.sample(kg_size, N_CHOICES)
        answer = rng.randint(N_CHOICES)
        kg.add_triplet_line(topic, ANSWER_RELATION, f"item {picks[answer]}")
        distractors = [p for j, p in enumerate(picks) if j != answer]
        for j in range(min(n_noise_edges, len(distractors))):
            kg.add_triplet_line(topic, NOISE_RELATION, f"item {distractors[j]}")
        examples.append(
            Example(
                id=f"syn{i}",
                question=f"what does topic {i} give",
                choices=[f"item {p}" for p in picks],
                answer=answer,
            )
        )
    templates = TemplateTable()
    for rel, tpl in ((ANSWER_RELATION, "{head} gives {tail}"), (NOISE_RELATION, "{head} is near {tail}")):
        rid = kg.lookup_relation(rel)
        if rid is not None:
            templates.templates[rid] = tpl
    return kg, templates, examples
