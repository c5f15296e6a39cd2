"""Training loop, evaluation, and the fusion/hop ablation grid."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tape, concat_cols, cross_entropy
from .context import ContextConfig, PseudoEncoder, RetrievedContext, build_context
from .data import Example
from .kg import KnowledgeGraph, RelationStats, TemplateTable, relation_stats
from .model import FusionModel, ModelConfig, tokenize
from .retrieval import Subgraph, ground_entities


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    steps: int = 2000
    batch_size: int = 1
    seed: int = 0
    momentum: float = 0.9
    grad_clip: float = 1.0
    loss_log_every: int = 1

    def validate(self) -> None:
        if self.learning_rate < 0 or self.steps < 0 or self.batch_size < 1:
            raise TrainingError("learning rate/steps/batch size must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise TrainingError("momentum must lie in [0, 1)")


@dataclass
class Metrics:
    accuracy: float
    predictions: list[tuple[str, int, int]]  # (example id, predicted, gold)
    loss_curve: list[float] = field(default_factory=list)

    def serialize(self) -> str:
        lines = [json.dumps({"accuracy": repr(self.accuracy)})]
        for ex_id, pred, gold in self.predictions:
            lines.append(json.dumps({"id": ex_id, "prediction": pred, "answer": gold}))
        return "\n".join(lines) + "\n"


@dataclass
class PreparedExample:
    example: Example
    token_ids: list[list[int]]            # per choice
    subgraphs: list[Subgraph]             # per choice
    node_inits: list[np.ndarray | None]   # per choice, rows follow sorted node ids


def context_to_subgraph(ctx: RetrievedContext, kg: KnowledgeGraph, max_hop: int) -> Subgraph:
    triplets = sorted((kg.triplets[s.triplet_id] for s in ctx.scored), key=lambda t: t.id)
    return Subgraph(triplets=triplets, min_hop={t.id: 1 for t in triplets}, max_hop=max_hop)


def prepare_examples(
    examples: list[Example],
    kg: KnowledgeGraph,
    templates: TemplateTable,
    encoder,
    stats: RelationStats,
    ctx_config: ContextConfig,
    model_config: ModelConfig,
    node_encoder=None,
) -> list[PreparedExample]:
    """Build per-choice contexts, token ids and node features once up front."""
    node_encoder = node_encoder or PseudoEncoder(dim=model_config.d_gnn)
    prepared = []
    for ex in examples:
        token_ids, subs, inits = [], [], []
        q_seeds = ground_entities(ex.question, kg)
        for choice in ex.choices:
            ids = tokenize(
                f"{ex.question} {choice}", model_config.vocab_size, model_config.max_seq_len
            )
            ctx = build_context(ex.question, choice, kg, templates, encoder, stats, ctx_config)
            sub = context_to_subgraph(ctx, kg, ctx_config.max_hop)
            if sub.triplets:
                a_seeds = ground_entities(choice, kg) if choice.strip() else set()
                init = np.stack([node_encoder.encode(kg.entity_surface(n)) for n in sub.nodes])
                # seed-type flags mark which nodes were grounded from the
                # question and which from the candidate answer
                for row, node in enumerate(sub.nodes):
                    if node in q_seeds:
                        init[row, 0] += 1.0
                    if node in a_seeds:
                        init[row, 1] += 1.0
            else:
                init = None
            token_ids.append(ids)
            subs.append(sub)
            inits.append(init)
        prepared.append(PreparedExample(ex, token_ids, subs, inits))
    return prepared


def candidate_logits(model: FusionModel, prep: PreparedExample, tape: Tape | None = None,
                     leaves=None, attn_log=None) -> np.ndarray:
    values = []
    for ids, sub, init in zip(prep.token_ids, prep.subgraphs, prep.node_inits):
        t = tape or Tape()
        logit = model.forward(t, ids, sub, init, leaves=leaves if tape else None,
                              attn_log=attn_log)
        values.append(float(logit.data.reshape(-1)[0]))
    return np.array(values)


def score_candidates(model: FusionModel, prep: PreparedExample) -> tuple[np.ndarray, int]:
    logits = candidate_logits(model, prep)
    return logits, int(np.argmax(logits))


def _global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def train(
    model: FusionModel,
    prepared: list[PreparedExample],
    config: TrainConfig,
) -> tuple[FusionModel, Metrics]:
    """Deterministic SGD(+momentum) over question batches with grad clipping."""
    config.validate()
    if not prepared:
        raise TrainingError("empty training set")
    velocity = {name: np.zeros_like(arr) for name, arr in model.params.items()}
    loss_curve: list[float] = []
    n = len(prepared)
    step = 0
    while step < config.steps:
        batch_losses = []
        grads = {name: np.zeros_like(arr) for name, arr in model.params.items()}
        for b in range(config.batch_size):
            prep = prepared[(step * config.batch_size + b) % n]
            tape = Tape()
            leaves = model.wrap_params(tape)
            logit_tensors = [
                model.forward(tape, ids, sub, init, leaves=leaves)
                for ids, sub, init in zip(prep.token_ids, prep.subgraphs, prep.node_inits)
            ]
            logits = concat_cols(logit_tensors)
            loss = cross_entropy(logits, prep.example.answer)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at step {step}")
            batch_losses.append(value)
            tape.backward(loss)
            for name, leaf in leaves.items():
                if leaf.grad is not None:
                    grads[name] += leaf.grad
        for g in grads.values():
            g /= config.batch_size
        norm = _global_norm(grads)
        scale = config.grad_clip / norm if config.grad_clip and norm > config.grad_clip else 1.0
        for name in model.params:
            velocity[name] = config.momentum * velocity[name] + grads[name] * scale
            model.params[name] -= config.learning_rate * velocity[name]
        if step % config.loss_log_every == 0:
            loss_curve.append(sum(batch_losses) / len(batch_losses))
        step += 1
    metrics = evaluate(model, prepared)
    metrics.loss_curve = loss_curve
    return model, metrics


def evaluate(model: FusionModel, prepared: list[PreparedExample]) -> Metrics:
    if not prepared:
        raise TrainingError("empty evaluation set")
    predictions = []
    correct = 0
    for prep in prepared:
        _, pred = score_candidates(model, prep)
        predictions.append((prep.example.id, pred, prep.example.answer))
        if pred == prep.example.answer:
            correct += 1
    return Metrics(accuracy=correct / len(prepared), predictions=predictions)


@dataclass
class AblationCell:
    fusion_mode: str
    n_heads: int
    max_hop: int
    accuracy: float | None = None
    train_accuracy: float | None = None
    error: str | None = None

    @property
    def label(self) -> str:
        name = {
            "none": "No Fusion",
            "naive": "Naive Fusion",
            "interaction": "Interaction Token",
            "cross_attention": f"Cross Attention ({self.n_heads} head)",
        }[self.fusion_mode]
        return f"{name} / hop {self.max_hop}"


def default_grid() -> list[tuple[str, int]]:
    return [("none", 1), ("naive", 1), ("interaction", 1), ("cross_attention", 1), ("cross_attention", 4)]


def run_ablation(
    train_examples: list[Example],
    test_examples: list[Example],
    kg: KnowledgeGraph,
    templates: TemplateTable,
    model_config: ModelConfig,
    train_config: TrainConfig,
    ctx_config: ContextConfig,
    modes: list[tuple[str, int]] | None = None,
    hops: tuple[int, ...] = (1, 3),
) -> list[AblationCell]:
    """Train/evaluate every (fusion mode, heads, hop) cell with shared data
    and seed; failed cells are marked and the grid continues."""
    modes = modes if modes is not None else default_grid()
    encoder = PseudoEncoder(dim=64)
    stats = relation_stats(kg)
    cells = []
    for hop in hops:
        cc = replace(ctx_config, max_hop=hop)
        # contexts and node features are fusion-mode independent: share per hop
        prep_train = prepare_examples(train_examples, kg, templates, encoder, stats, cc, model_config)
        prep_test = prepare_examples(test_examples, kg, templates, encoder, stats, cc, model_config)
        for fusion_mode, n_heads in modes:
            cell = AblationCell(fusion_mode=fusion_mode, n_heads=n_heads, max_hop=hop)
            try:
                mc = replace(model_config, fusion_mode=fusion_mode, n_heads=n_heads)
                model = FusionModel(mc)
                model, train_metrics = train(model, prep_train, config=replace(train_config))
                cell.train_accuracy = train_metrics.accuracy
                cell.accuracy = evaluate(model, prep_test).accuracy
            except Exception as exc:  # keep remaining cells running
                cell.error = f"{type(exc).__name__}: {exc}"
            cells.append(cell)
    return cells


def format_ablation_table(cells: list[AblationCell]) -> str:
    width = max(len(c.label) for c in cells) + 2
    lines = [f"{'Model':<{width}}{'Test-Acc':>10}{'Train-Acc':>11}"]
    for c in cells:
        if c.error:
            lines.append(f"{c.label:<{width}}{'FAILED':>10}  {c.error}")
        else:
            lines.append(f"{c.label:<{width}}{c.accuracy:>10.4f}{c.train_accuracy:>11.4f}")
    return "\n".join(lines) + "\n"
