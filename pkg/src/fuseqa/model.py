"""Layered text/graph encoders with four fusion mechanisms.

fusion_mode:
  none            - text only; the graph never enters the computation
  naive           - graph encoded in parallel, joined only at the answer head
  interaction     - single interaction token/node exchanged through an MLP
  cross_attention - per-layer bidirectional attention between all tokens/nodes
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .kg import normalize_surface
from .prng import derive_seed, seeded_init
from .retrieval import Subgraph

FUSION_MODES = ("none", "naive", "interaction", "cross_attention")


@dataclass
class ModelConfig:
    n_layers: int = 2
    d_lm: int = 16
    d_gnn: int = 16
    n_heads: int = 1
    fusion_mode: str = "cross_attention"
    vocab_size: int = 128
    max_seq_len: int = 32
    n_relations: int = 4
    seed: int = 0
    keep_interaction_node: bool = False

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion_mode: {self.fusion_mode!r}")
        if self.fusion_mode == "cross_attention":
            if self.d_lm % self.n_heads or self.d_gnn % self.n_heads:
                raise ValueError(
                    f"d_lm={self.d_lm} and d_gnn={self.d_gnn} must be divisible "
                    f"by n_heads={self.n_heads}"
                )

    @property
    def n_relation_slots(self) -> int:
        # forward + inverse per relation, unknown fwd/inv, self-loop
        return 2 * self.n_relations + 3

    @property
    def uses_interaction(self) -> bool:
        return self.fusion_mode == "interaction" or (
            self.fusion_mode == "cross_attention" and self.keep_interaction_node
        )

    @property
    def uses_graph(self) -> bool:
        return self.fusion_mode != "none"


def tokenize(text: str, vocab_size: int, max_seq_len: int) -> list[int]:
    """Hash whitespace tokens of the normalized text into the vocabulary."""
    from .context import _token_hash

    ids = [_token_hash(tok) % vocab_size for tok in normalize_surface(text).split()]
    return ids[:max_seq_len]


def subgraph_edges(
    sub: Subgraph, node_index: dict[int, int], n_relations: int, n_nodes: int
) -> list[tuple[int, int, int]]:
    """Message edges (src, rel_slot, dst): forward, inverse, and self-loops."""
    unk_fwd = 2 * n_relations
    unk_inv = 2 * n_relations + 1
    self_slot = 2 * n_relations + 2
    edges = []
    for t in sub.triplets:
        h, v = node_index[t.head], node_index[t.tail]
        if t.relation < n_relations:
            fwd, inv = t.relation, n_relations + t.relation
        else:
            fwd, inv = unk_fwd, unk_inv
        edges.append((h, fwd, v))
        edges.append((v, inv, h))
    for i in range(n_nodes):
        edges.append((i, self_slot, i))
    return edges


def _param_specs(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], str]]:
    """name -> (shape, init scheme). Scheme 'ones' is for layer-norm gains."""
    d, dg = cfg.d_lm, cfg.d_gnn
    specs: dict[str, tuple[tuple[int, ...], str]] = {
        "tok_emb": ((cfg.vocab_size, d), "uniform_scaled"),
        "pos_emb": ((cfg.max_seq_len, d), "uniform_scaled"),
    }
    for l in range(cfg.n_layers):
        p = f"lm.{l}"
        for w in ("Wq", "Wk", "Wv", "Wo"):
            specs[f"{p}.{w}"] = ((d, d), "uniform_scaled")
        specs[f"{p}.ln1.g"] = ((d,), "ones")
        specs[f"{p}.ln1.b"] = ((d,), "zeros")
        specs[f"{p}.ln2.g"] = ((d,), "ones")
        specs[f"{p}.ln2.b"] = ((d,), "zeros")
        specs[f"{p}.ffn.W1"] = ((d, 2 * d), "uniform_scaled")
        specs[f"{p}.ffn.b1"] = ((2 * d,), "zeros")
        specs[f"{p}.ffn.W2"] = ((2 * d, d), "uniform_scaled")
        specs[f"{p}.ffn.b2"] = ((d,), "zeros")
    if cfg.uses_graph:
        for l in range(cfg.n_layers):
            p = f"gnn.{l}"
            specs[f"{p}.W"] = ((cfg.n_relation_slots, dg, dg), "uniform_scaled")
            specs[f"{p}.ln.g"] = ((dg,), "ones")
            specs[f"{p}.ln.b"] = ((dg,), "zeros")
    if cfg.uses_interaction:
        dz = d + dg
        specs["int.h0"] = ((1, d), "uniform_scaled")
        specs["int.e0"] = ((1, dg), "uniform_scaled")
        specs["int.W1"] = ((dz, dz), "uniform_scaled")
        specs["int.b1"] = ((dz,), "zeros")
        specs["int.W2"] = ((dz, dz), "uniform_scaled")
        specs["int.b2"] = ((dz,), "zeros")
    if cfg.fusion_mode == "cross_attention":
        dh_t, dh_g = d // cfg.n_heads, dg // cfg.n_heads
        for l in range(cfg.n_layers):
            for h in range(cfg.n_heads):
                p = f"cross.{l}.t2g.h{h}"
                specs[f"{p}.Wq"] = ((dh_t, d), "uniform_scaled")
                specs[f"{p}.Wk"] = ((dh_t, dg), "uniform_scaled")
                specs[f"{p}.Wv"] = ((dh_t, dg), "uniform_scaled")
                p = f"cross.{l}.g2t.h{h}"
                specs[f"{p}.Wq"] = ((dh_g, dg), "uniform_scaled")
                specs[f"{p}.Wk"] = ((dh_g, d), "uniform_scaled")
                specs[f"{p}.Wv"] = ((dh_g, d), "uniform_scaled")
            for side, ds in (("t2g", d), ("g2t", dg)):
                p = f"cross.{l}.{side}"
                specs[f"{p}.Wo"] = ((ds, ds), "uniform_scaled")
                specs[f"{p}.ln.g"] = ((ds,), "ones")
                specs[f"{p}.ln.b"] = ((ds,), "zeros")
                specs[f"{p}.mlp.W1"] = ((ds, 2 * ds), "uniform_scaled")
                specs[f"{p}.mlp.b1"] = ((2 * ds,), "zeros")
                specs[f"{p}.mlp.W2"] = ((2 * ds, ds), "uniform_scaled")
                specs[f"{p}.mlp.b2"] = ((ds,), "zeros")
    head_in = d + (dg if cfg.uses_graph else 0)
    specs["head.W"] = ((head_in, 1), "uniform_scaled")
    specs["head.b"] = ((1,), "zeros")
    return specs


def init_params(cfg: ModelConfig) -> dict[str, np.ndarray]:
    params = {}
    for name, (shape, scheme) in _param_specs(cfg).items():
        if scheme == "ones":
            params[name] = np.ones(shape, dtype=np.float64)
        else:
            params[name] = seeded_init(shape, derive_seed(cfg.seed, name), scheme)
    return params


def lm_layer_forward(h: Tensor, P: dict[str, Tensor], prefix: str, attn_log=None) -> Tensor:
    """Pre-norm transformer block: h + SelfAttn(LN(h)), then + FFN(LN(.))."""
    d = h.shape[1]
    x = ad.layer_norm(h, P[f"{prefix}.ln1.g"], P[f"{prefix}.ln1.b"])
    q = ad.matmul(x, P[f"{prefix}.Wq"])
    k = ad.matmul(x, P[f"{prefix}.Wk"])
    v = ad.matmul(x, P[f"{prefix}.Wv"])
    scores = ad.mul_scalar(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d))
    attn = ad.softmax_rows(scores)
    if attn_log is not None:
        attn_log.append(attn.data)
    h = ad.add(h, ad.matmul(ad.matmul(attn, v), P[f"{prefix}.Wo"]))
    x = ad.layer_norm(h, P[f"{prefix}.ln2.g"], P[f"{prefix}.ln2.b"])
    ff = ad.matmul(ad.gelu(ad.add_bias(ad.matmul(x, P[f"{prefix}.ffn.W1"]), P[f"{prefix}.ffn.b1"])), P[f"{prefix}.ffn.W2"])
    ff = ad.add_bias(ff, P[f"{prefix}.ffn.b2"])
    return ad.add(h, ff)


def gnn_layer_forward(
    e: Tensor, edges: list[tuple[int, int, int]], P: dict[str, Tensor], prefix: str
) -> Tensor:
    """Relation-typed mean message passing with residual + layer norm."""
    agg = ad.relational_mean_agg(e, P[f"{prefix}.W"], edges, e.shape[0])
    return ad.layer_norm(ad.add(e, agg), P[f"{prefix}.ln.g"], P[f"{prefix}.ln.b"])


def _mlp(x: Tensor, P: dict[str, Tensor], prefix: str) -> Tensor:
    hidden = ad.gelu(ad.add_bias(ad.matmul(x, P[f"{prefix}.W1"]), P[f"{prefix}.b1"]))
    return ad.add_bias(ad.matmul(hidden, P[f"{prefix}.W2"]), P[f"{prefix}.b2"])


def cross_attention_weighted_sum(
    h: Tensor,
    e: Tensor,
    P: dict[str, Tensor],
    prefix: str,
    n_heads: int,
    attn_log=None,
) -> tuple[Tensor, Tensor]:
    """Bidirectional attention up to (and including) the residual weighted
    sum, before the MLP/LayerNorm stage. Both directions read the pre-fusion
    inputs, so they commute."""

    def one_direction(queries: Tensor, keys: Tensor, side: str) -> Tensor:
        ctxs = []
        for hd in range(n_heads):
            hp = f"{prefix}.{side}.h{hd}"
            q = ad.matmul(queries, ad.transpose(P[f"{hp}.Wq"]))
            k = ad.matmul(keys, ad.transpose(P[f"{hp}.Wk"]))
            attn = ad.softmax_rows(ad.matmul(q, ad.transpose(k)))
            if attn_log is not None:
                attn_log.append(attn.data)
            vals = ad.matmul(keys, ad.transpose(P[f"{hp}.Wv"]))
            ctxs.append(ad.matmul(attn, vals))
        fused = ad.matmul(ad.concat_cols(ctxs), P[f"{prefix}.{side}.Wo"])
        return ad.add(queries, fused)

    h_bar = one_direction(h, e, "t2g")
    e_bar = one_direction(e, h, "g2t")
    return h_bar, e_bar


def cross_attention_forward(
    h: Tensor,
    e: Tensor,
    P: dict[str, Tensor],
    prefix: str,
    n_heads: int,
    attn_log=None,
) -> tuple[Tensor, Tensor]:
    h_bar, e_bar = cross_attention_weighted_sum(h, e, P, prefix, n_heads, attn_log)

    def post(x: Tensor, side: str) -> Tensor:
        normed = ad.layer_norm(x, P[f"{prefix}.{side}.ln.g"], P[f"{prefix}.{side}.ln.b"])
        return ad.add(x, _mlp(normed, P, f"{prefix}.{side}.mlp"))

    return post(h_bar, "t2g"), post(e_bar, "g2t")


def interaction_exchange(h: Tensor, e: Tensor, P: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Single-bottleneck exchange: mix position 0 of both modalities through
    an MLP with residual; all other positions pass through unchanged."""
    d_lm = h.shape[1]
    d_gnn = e.shape[1]
    h0 = ad.slice_rows(h, 0, 1)
    e0 = ad.slice_rows(e, 0, 1)
    z = ad.concat_cols([h0, e0])
    out = _mlp(z, P, "int")
    h0_new = ad.add(h0, ad.slice_cols(out, 0, d_lm))
    e0_new = ad.add(e0, ad.slice_cols(out, d_lm, d_lm + d_gnn))
    h_rest = ad.slice_rows(h, 1, h.shape[0])
    e_rest = ad.slice_rows(e, 1, e.shape[0])
    return ad.concat_rows([h0_new, h_rest]), ad.concat_rows([e0_new, e_rest])


class FusionModel:
    """Config plus a named-parameter store; forward passes run on a Tape."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config)

    def wrap_params(self, tape: Tape) -> dict[str, Tensor]:
        return {name: Tensor(arr, tape=tape) for name, arr in self.params.items()}

    def forward(
        self,
        tape: Tape,
        token_ids: list[int],
        sub: Subgraph | None,
        node_init: np.ndarray | None,
        leaves: dict[str, Tensor] | None = None,
        attn_log=None,
    ) -> Tensor:
        """One (question, choice) pass producing a single logit Tensor."""
        cfg = self.config
        if not token_ids:
            raise ValueError("token sequence is empty")
        if any(t < 0 or t >= cfg.vocab_size for t in token_ids):
            raise ValueError("token id out of vocabulary range")
        token_ids = token_ids[: cfg.max_seq_len]
        P = leaves if leaves is not None else self.wrap_params(tape)

        tok = ad.gather_rows(P["tok_emb"], token_ids)
        pos = ad.gather_rows(P["pos_emb"], list(range(len(token_ids))))
        h = ad.add(tok, pos)
        if cfg.uses_interaction:
            h = ad.concat_rows([P["int.h0"], h])

        m_graph = 0
        e = None
        edges: list[tuple[int, int, int]] = []
        if cfg.uses_graph and sub is not None and sub.triplets:
            nodes = sub.nodes
            offset = 1 if cfg.uses_interaction else 0
            node_index = {ent: i + offset for i, ent in enumerate(nodes)}
            m_graph = len(nodes)
            if node_init is None or node_init.shape != (m_graph, cfg.d_gnn):
                raise ValueError(
                    f"node_init must be [{m_graph} x {cfg.d_gnn}], got "
                    f"{None if node_init is None else node_init.shape}"
                )
            n_total = m_graph + offset
            edges = subgraph_edges(sub, node_index, cfg.n_relations, n_total)
            base = Tensor(node_init)
            e = ad.concat_rows([P["int.e0"], base]) if cfg.uses_interaction else base
        elif cfg.uses_interaction:
            # no retrieved triplets: the graph side is just the interaction node
            e = P["int.e0"]
            edges = [(0, cfg.n_relation_slots - 1, 0)]

        for l in range(cfg.n_layers):
            h = lm_layer_forward(h, P, f"lm.{l}", attn_log=attn_log)
            if e is not None:
                e = gnn_layer_forward(e, edges, P, f"gnn.{l}")
            if cfg.fusion_mode == "interaction" and e is not None:
                h, e = interaction_exchange(h, e, P)
            elif cfg.fusion_mode == "cross_attention" and m_graph > 0:
                h, e = cross_attention_forward(h, e, P, f"cross.{l}", cfg.n_heads, attn_log)
                if cfg.uses_interaction:
                    h, e = interaction_exchange(h, e, P)

        text_pool = ad.slice_rows(h, 0, 1)
        feats = [text_pool]
        if cfg.uses_graph:
            if e is not None and e.shape[0] > 0:
                feats.append(ad.mean_rows(e))
            else:
                feats.append(Tensor(np.zeros((1, cfg.d_gnn))))
        logit = ad.add_bias(ad.matmul(ad.concat_cols(feats), P["head.W"]), P["head.b"])
        return logit

    # -- checkpoint io ------------------------------------------------------

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("fuseqa-checkpoint v1\n")
            f.write(json.dumps(asdict(self.config), sort_keys=True) + "\n")
            for name in sorted(self.params):
                f.write(f"param {name}\n")
                f.write(ad.serialize_tensor(self.params[name]))

    @classmethod
    def load(cls, path: str) -> "FusionModel":
        with open(path, encoding="utf-8") as f:
            text = f.read()
        lines = text.split("\n")
        if lines[0] != "fuseqa-checkpoint v1":
            raise ValueError("not a fuseqa checkpoint")
        config = ModelConfig(**json.loads(lines[1]))
        params: dict[str, np.ndarray] = {}
        i = 2
        while i < len(lines):
            if not lines[i].strip():
                i += 1
                continue
            if not lines[i].startswith("param "):
                raise ValueError(f"unexpected checkpoint line: {lines[i]!r}")
            name = lines[i][len("param "):]
            params[name] = ad.deserialize_tensor(lines[i + 1] + "\n" + lines[i + 2])
            i += 3
        return cls(config, params)
