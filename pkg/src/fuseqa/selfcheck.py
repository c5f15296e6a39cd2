"""Gradient and oracle self-checks, runnable from the CLI.

Each check returns the max relative error between tape gradients and
central differences, with the tolerance it must meet.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .gradcheck import finite_diff_check
from .kg import KnowledgeGraph
from .model import (
    FusionModel,
    ModelConfig,
    cross_attention_forward,
    gnn_layer_forward,
    interaction_exchange,
    lm_layer_forward,
)
from .prng import uniform01
from .retrieval import Subgraph


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_error < self.tolerance


def _rand(shape, seed):
    return (uniform01(seed, int(np.prod(shape))) * 2 - 1).reshape(shape)


def check_op_gradients(tolerance: float = 1e-6) -> list[CheckResult]:
    results = []

    def fd(name, f, params, tol=tolerance):
        err = finite_diff_check(f, params)
        results.append(CheckResult(name, err, tol))

    a0 = _rand((4, 5), 1)
    b0 = _rand((5, 3), 2)
    w0 = _rand((3, 1), 3)
    fd(
        "matmul",
        lambda P: ad.cross_entropy(
            ad.matmul(ad.matmul(P["a"], P["b"]), ad.Tensor(w0)), 1
        ),
        {"a": a0, "b": b0},
    )

    x0 = _rand((3, 7), 4)
    w1 = _rand((7, 4), 5)
    fd(
        "softmax_rows",
        lambda P: ad.cross_entropy(
            ad.matmul(ad.softmax_rows(P["x"]), ad.Tensor(w1)), 2
        ),
        {"x": x0},
    )

    g0 = _rand((6,), 6) + 1.0
    be0 = _rand((6,), 7)
    xn = _rand((4, 6), 8)
    wn = _rand((6, 3), 9)
    fd(
        "layer_norm",
        lambda P: ad.cross_entropy(
            ad.matmul(ad.layer_norm(P["x"], P["g"], P["b"]), ad.Tensor(wn)), 0
        ),
        {"x": xn, "g": g0, "b": be0},
    )

    xg = _rand((3, 4), 10)
    wg = _rand((4, 2), 11)
    fd(
        "gelu",
        lambda P: ad.cross_entropy(ad.matmul(ad.gelu(P["x"]), ad.Tensor(wg)), 1),
        {"x": xg},
        tol=1e-5,
    )
    fd(
        "relu",
        lambda P: ad.cross_entropy(ad.matmul(ad.relu(P["x"]), ad.Tensor(wg)), 1),
        {"x": xg + 0.05},  # keep entries away from the kink
        tol=1e-5,
    )

    lg = _rand((1, 5), 12)
    fd("cross_entropy", lambda P: ad.cross_entropy(P["x"], 3), {"x": lg})

    return results


def _toy_subgraph(n_nodes: int, n_relations: int, seed: int) -> Subgraph:
    """Small random subgraph over entity ids 0..n_nodes-1."""
    kg = KnowledgeGraph()
    for i in range(n_nodes):
        kg._intern_entity(f"n{i}")
    for r in range(n_relations):
        kg._intern_relation(f"r{r}")
    u = uniform01(seed, 3 * n_nodes * 3)
    k = 0
    for i in range(n_nodes):
        for _ in range(2):
            j = int(u[k] * n_nodes) % n_nodes
            r = int(u[k + 1] * n_relations) % n_relations
            k += 2
            kg.add_triplet_line(f"n{i}", f"r{r}", f"n{j}")
    sub = Subgraph(
        triplets=list(kg.triplets),
        min_hop={t.id: 1 for t in kg.triplets},
        max_hop=1,
    )
    return sub


def check_model_gradients(
    n_heads: int = 1, tolerance: float = 1e-4, fusion_mode: str = "cross_attention"
) -> CheckResult:
    """Full-model finite-difference check on a 4-token / 5-node toy instance."""
    cfg = ModelConfig(
        n_layers=2,
        d_lm=8,
        d_gnn=8,
        n_heads=n_heads,
        fusion_mode=fusion_mode,
        vocab_size=12,
        max_seq_len=6,
        n_relations=2,
        seed=3,
    )
    model = FusionModel(cfg)
    token_ids = [1, 5, 7, 2]
    sub = _toy_subgraph(5, 2, seed=9)
    node_init = _rand((5, cfg.d_gnn), 17)

    def objective(leaves):
        tape = next(iter(leaves.values())).tape
        logit = model.forward(tape, token_ids, sub, node_init, leaves=leaves)
        return ad.cross_entropy(ad.concat_cols([logit, ad.mul_scalar(logit, -0.5)]), 0)

    err = finite_diff_check(objective, model.params)
    return CheckResult(f"full_model[{fusion_mode},{n_heads}h]", err, tolerance)


def check_layer_gradients(tolerance: float = 1e-5) -> list[CheckResult]:
    results = []
    cfg = ModelConfig(
        n_layers=1, d_lm=8, d_gnn=8, n_heads=2, fusion_mode="cross_attention",
        vocab_size=12, max_seq_len=6, n_relations=2, seed=11,
    )
    model = FusionModel(cfg)
    h0 = _rand((4, 8), 21)
    e0 = _rand((3, 8), 22)
    sub = _toy_subgraph(3, 2, seed=23)
    edges_nodes = 3
    from .model import subgraph_edges

    node_index = {ent: i for i, ent in enumerate(sub.nodes)}
    edges = subgraph_edges(sub, node_index, cfg.n_relations, edges_nodes)
    w_read = _rand((8, 3), 24)

    def reduce2(x: ad.Tensor, col: int = 0) -> ad.Tensor:
        pooled = ad.mean_rows(x)
        return ad.cross_entropy(ad.matmul(pooled, ad.Tensor(w_read)), col)

    lm_params = {k: v for k, v in model.params.items() if k.startswith("lm.0")}
    def lm_obj(leaves):
        full = dict(leaves)
        h = ad.Tensor(h0, tape=next(iter(leaves.values())).tape)
        return reduce2(lm_layer_forward(h, full, "lm.0"))
    results.append(CheckResult("lm_layer", finite_diff_check(lm_obj, lm_params), tolerance))

    gnn_params = {k: v for k, v in model.params.items() if k.startswith("gnn.0")}
    def gnn_obj(leaves):
        e = ad.Tensor(e0, tape=next(iter(leaves.values())).tape)
        return reduce2(gnn_layer_forward(e, edges, dict(leaves), "gnn.0"))
    results.append(CheckResult("gnn_layer", finite_diff_check(gnn_obj, gnn_params), tolerance))

    ca_params = {k: v for k, v in model.params.items() if k.startswith("cross.0")}
    def ca_obj(leaves):
        tape = next(iter(leaves.values())).tape
        h = ad.Tensor(h0, tape=tape)
        e = ad.Tensor(e0, tape=tape)
        hn, en = cross_attention_forward(h, e, dict(leaves), "cross.0", cfg.n_heads)
        return ad.cross_entropy(
            ad.concat_cols([ad.matmul(ad.mean_rows(hn), ad.Tensor(w_read)),
                            ad.matmul(ad.mean_rows(en), ad.Tensor(w_read))]), 2
        )
    results.append(CheckResult("cross_attention", finite_diff_check(ca_obj, ca_params), tolerance))

    icfg = replace(cfg, fusion_mode="interaction")
    imodel = FusionModel(icfg)
    int_params = {k: v for k, v in imodel.params.items() if k.startswith("int.")}
    def int_obj(leaves):
        tape = next(iter(leaves.values())).tape
        h = ad.Tensor(h0, tape=tape)
        e = ad.Tensor(e0, tape=tape)
        hn, en = interaction_exchange(h, e, dict(leaves))
        return ad.cross_entropy(
            ad.concat_cols([ad.matmul(ad.mean_rows(hn), ad.Tensor(w_read)),
                            ad.matmul(ad.mean_rows(en), ad.Tensor(w_read))]), 1
        )
    results.append(CheckResult("interaction_exchange", finite_diff_check(int_obj, int_params), tolerance))

    return results


def run_all() -> list[CheckResult]:
    results = check_op_gradients()
    results.extend(check_layer_gradients())
    results.append(check_model_gradients(n_heads=1))
    results.append(check_model_gradients(n_heads=4))
    return results
