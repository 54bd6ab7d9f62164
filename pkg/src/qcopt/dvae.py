"""Variational autoencoder over circuit DAGs.

The encoder visits nodes in topological order and runs a GRU whose incoming
state is a gated sum of the predecessors' hidden states, so the embedding
depends only on DAG structure and node types (isomorphic DAGs encode
identically).  The graph embedding is a gated sum over the output-node
hiddens, mapped to a latent mean and log-variance.

The decoder mirrors the scheme in reverse: node by node it predicts a type
distribution (6 node types plus an END symbol) from the previous node's
hidden state, predicts an edge probability to every earlier node from the
new node's provisional hidden, then recomputes the node's hidden from a
gated sum of its (true or sampled) predecessors.  Sourceless nodes take the
running context instead -- initially the latent-derived state, so z reaches
every chain, and repeated source nodes stay distinguishable by sequence
position.

Training minimises  alpha * R + gamma * E (+ beta * KL)  where R is the
cross-entropy reconstruction term over node types and edge indicators and E
is the expected edge edit distance sum |p - t| (differentiable a.e.).
Quantising the latent mean per dimension turns encodings into discrete RL
state keys.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dag import CircuitDag, N_NODE_TYPES, NodeType, topo_order
from .nn import (
    AdamState,
    GruCell,
    Tensor,
    absolute,
    adam_step,
    add,
    backward,
    bce_with_logits,
    exp,
    gated_sum,
    gru_step,
    matmat,
    matvec,
    mul,
    scale,
    sigmoid,
    softmax_cross_entropy,
    stack,
    sub,
    tanh,
    total,
    transpose,
    zero_grads,
    _sigmoid_np,
)

END_TYPE = N_NODE_TYPES  # index 6: the decoder's stop symbol

_EYE = np.eye(N_NODE_TYPES)


class Latent(NamedTuple):
    mu: np.ndarray
    logvar: np.ndarray


@dataclass
class DvaeConfig:
    d_h: int = 64
    d_z: int = 8
    alpha: float = 1.0          # reconstruction scale
    gamma_loss: float = 1.0     # edit-distance scale
    beta: float = 0.005         # KL scale; 0 recovers the bare alpha*R + gamma*E loss
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 16
    bin_width: float = 0.5      # latent quantisation step
    max_decode_nodes: int = 80
    seed: int = 0

    def __post_init__(self):
        if min(self.d_h, self.d_z, self.epochs, self.batch_size) < 1:
            raise ValueError("dimensions, epochs and batch size must be positive")
        if self.bin_width <= 0 or self.lr <= 0:
            raise ValueError("bin_width and lr must be positive")
        if self.beta < 0 or self.alpha <= 0 or self.gamma_loss < 0:
            raise ValueError("bad loss scales")


@dataclass
class DvaeModel:
    """Parameter bundle: encoder, latent heads, decoder, type/edge heads."""

    d_h: int
    d_z: int
    enc: GruCell
    enc_gate_a: Tensor
    enc_gate_b: Tensor
    readout_a: Tensor
    readout_b: Tensor
    w_mu: Tensor
    b_mu: Tensor
    w_logvar: Tensor
    b_logvar: Tensor
    dec: GruCell
    dec_gate_a: Tensor
    dec_gate_b: Tensor
    w_init: Tensor
    b_init: Tensor
    w_type: Tensor
    b_type: Tensor
    # two-layer edge head over the concatenated pair (h_earlier, h_new);
    # the first layer is stored as the two halves of its weight matrix
    w_edge_prev: Tensor
    b_edge: Tensor
    w_edge_new: Tensor
    w_edge_out: Tensor
    b_edge_out: Tensor

    @staticmethod
    def create(cfg: DvaeConfig) -> "DvaeModel":
        rng = np.random.default_rng(cfg.seed)
        d_h, d_z = cfg.d_h, cfg.d_z
        bound = 1.0 / math.sqrt(d_h)

        def t(*shape):
            return Tensor(rng.uniform(-bound, bound, size=shape))

        return DvaeModel(
            d_h=d_h,
            d_z=d_z,
            enc=GruCell.create(N_NODE_TYPES, d_h, rng),
            enc_gate_a=t(d_h, d_h),
            enc_gate_b=t(d_h, d_h),
            readout_a=t(d_h, d_h),
            readout_b=t(d_h, d_h),
            w_mu=t(d_z, d_h),
            b_mu=t(d_z),
            w_logvar=t(d_z, d_h),
            b_logvar=t(d_z),
            dec=GruCell.create(N_NODE_TYPES, d_h, rng),
            dec_gate_a=t(d_h, d_h),
            dec_gate_b=t(d_h, d_h),
            w_init=t(d_h, d_z),
            b_init=t(d_h),
            w_type=t(N_NODE_TYPES + 1, d_h),
            b_type=t(N_NODE_TYPES + 1),
            w_edge_prev=t(d_h, d_h),
            b_edge=t(d_h),
            w_edge_new=t(d_h, d_h),
            w_edge_out=t(d_h),
            b_edge_out=t(1),
        )

    def params(self) -> dict[str, Tensor]:
        out = {f"enc.{k}": v for k, v in self.enc.params().items()}
        out.update(
            enc_gate_a=self.enc_gate_a,
            enc_gate_b=self.enc_gate_b,
            readout_a=self.readout_a,
            readout_b=self.readout_b,
            w_mu=self.w_mu,
            b_mu=self.b_mu,
            w_logvar=self.w_logvar,
            b_logvar=self.b_logvar,
        )
        out.update({f"dec.{k}": v for k, v in self.dec.params().items()})
        out.update(
            dec_gate_a=self.dec_gate_a,
            dec_gate_b=self.dec_gate_b,
            w_init=self.w_init,
            b_init=self.b_init,
            w_type=self.w_type,
            b_type=self.b_type,
            w_edge_prev=self.w_edge_prev,
            b_edge=self.b_edge,
            w_edge_new=self.w_edge_new,
            w_edge_out=self.w_edge_out,
            b_edge_out=self.b_edge_out,
        )
        return out


# --- encoding ---------------------------------------------------------------


def _encode_tensors(m: DvaeModel, d: CircuitDag, order=None):
    """Tape-building encoder pass; returns (mu, logvar) tensors."""
    if order is None:
        order = topo_order(d)
    preds = d.predecessors()
    hidden: dict[int, Tensor] = {}
    for v in order:
        incoming = gated_sum(
            m.enc_gate_a, m.enc_gate_b, [hidden[u] for u in preds[v]]
        )
        hidden[v] = gru_step(m.enc, _EYE[d.types[v].value], incoming)
    sinks = [hidden[v] for v in order if d.types[v] is NodeType.OUTPUT]
    hg = gated_sum(m.readout_a, m.readout_b, sinks)
    mu = add(matvec(m.w_mu, hg), m.b_mu)
    logvar = add(matvec(m.w_logvar, hg), m.b_logvar)
    return mu, logvar


def encode(m: DvaeModel, d: CircuitDag, order=None) -> Latent:
    """Latent distribution of one DAG (mean and log-variance vectors)."""
    mu, logvar = _encode_tensors(m, d, order)
    return Latent(mu.value.copy(), logvar.value.copy())


def _gru_np(cell: GruCell, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    z = _sigmoid_np(cell.w_z.value @ x + cell.u_z.value @ h + cell.b_z.value)
    r = _sigmoid_np(cell.w_r.value @ x + cell.u_r.value @ h + cell.b_r.value)
    t = np.tanh(cell.w_h.value @ x + cell.u_h.value @ (r * h) + cell.b_h.value)
    return (1.0 - z) * h + z * t


def _gated_sum_np(a: np.ndarray, b: np.ndarray, hs: list[np.ndarray]) -> np.ndarray:
    if not hs:
        return np.zeros(a.shape[0])
    hmat = np.stack(hs)
    return (_sigmoid_np(hmat @ a.T) * np.tanh(hmat @ b.T)).sum(axis=0)


def encode_np(m: DvaeModel, d: CircuitDag) -> Latent:
    """Tape-free encoder forward; bit-identical to encode() and faster.

    Used by the RL loop, where no gradients are needed.
    """
    order = topo_order(d)
    preds = d.predecessors()
    hidden: dict[int, np.ndarray] = {}
    ga, gb = m.enc_gate_a.value, m.enc_gate_b.value
    for v in order:
        incoming = _gated_sum_np(ga, gb, [hidden[u] for u in preds[v]])
        hidden[v] = _gru_np(m.enc, _EYE[d.types[v].value], incoming)
    sinks = [hidden[v] for v in order if d.types[v] is NodeType.OUTPUT]
    hg = _gated_sum_np(m.readout_a.value, m.readout_b.value, sinks)
    return Latent(
        m.w_mu.value @ hg + m.b_mu.value,
        m.w_logvar.value @ hg + m.b_logvar.value,
    )


def reparameterize(l: Latent, rng: np.random.Generator) -> np.ndarray:
    """z = mu + exp(logvar / 2) * n with n ~ N(0, I) from the given rng."""
    return l.mu + np.exp(0.5 * l.logvar) * rng.standard_normal(l.mu.shape[0])


# --- decoding ---------------------------------------------------------------


def _decode_tf_tensors(m: DvaeModel, z: Tensor, target: CircuitDag, order=None):
    """Teacher-forced decoder pass over the tape.

    Returns (type_logits, edge_logits, edge_targets):
      type_logits   one (7,) tensor per node plus a final END step
      edge_logits   for each step k >= 1 a (k,) tensor over earlier nodes
      edge_targets  matching 0/1 arrays
    """
    if order is None:
        order = topo_order(target)
    pos_of = {v: k for k, v in enumerate(order)}
    preds = target.predecessors()

    h_init = add(matvec(m.w_init, z), m.b_init)
    ctx = h_init
    hiddens: list[Tensor] = []
    type_logits: list[Tensor] = []
    edge_logits: list[Tensor] = []
    edge_targets: list[np.ndarray] = []

    for k, v in enumerate(order):
        type_logits.append(add(matvec(m.w_type, ctx), m.b_type))
        x = _EYE[target.types[v].value]
        if k > 0:
            provisional = gru_step(m.dec, x, ctx)
            hmat = stack(hiddens)  # (k, d_h)
            pre = add(
                matmat(hmat, transpose(m.w_edge_prev)),
                add(matvec(m.w_edge_new, provisional), m.b_edge),
            )
            logits = add(matvec(tanh(pre), m.w_edge_out), m.b_edge_out)
            edge_logits.append(logits)
            tgt = np.zeros(k)
            for u in preds[v]:
                tgt[pos_of[u]] = 1.0
            edge_targets.append(tgt)
        true_pred_hiddens = [hiddens[pos_of[u]] for u in preds[v]]
        if true_pred_hiddens:
            incoming = gated_sum(m.dec_gate_a, m.dec_gate_b, true_pred_hiddens)
        else:
            # sourceless nodes take the running context; this injects z into
            # every chain and keeps repeated source nodes distinguishable
            incoming = ctx
        hk = gru_step(m.dec, x, incoming)
        hiddens.append(hk)
        ctx = hk

    type_logits.append(add(matvec(m.w_type, ctx), m.b_type))  # END step
    return type_logits, edge_logits, edge_targets


def decode_teacher_forced(
    m: DvaeModel, z: np.ndarray, target: CircuitDag, max_nodes: int = 80
):
    """Type logits per step (incl. the END step) and edge probabilities per
    (earlier node, new node) pair, teacher-forced on the target's canonical
    topological order."""
    if target.n_nodes > max_nodes:
        raise ValueError(
            f"target has {target.n_nodes} nodes, over the decode cap {max_nodes}"
        )
    tl, el, _ = _decode_tf_tensors(m, Tensor(z), target)
    return (
        [t.value.copy() for t in tl],
        [_sigmoid_np(e.value) for e in el],
    )


class LossParts(NamedTuple):
    total: float
    recon_types: float
    recon_edges: float
    edit: float
    kl: float
    n_types: int
    n_type_correct: int
    n_edges: int
    n_edge_correct: int


def loss(m: DvaeModel, d: CircuitDag, noise: np.ndarray, cfg: DvaeConfig):
    """Build the loss tape for one DAG with fixed reparameterisation noise.

    Returns (loss tensor, LossParts); call nn.backward on the tensor for
    gradients.  R sums categorical cross-entropy over node types (with the
    END step) and binary cross-entropy over edge indicators; E is the
    expected edge edit distance sum |p - t|; the KL term regularises the
    latent towards a standard normal.
    """
    order = topo_order(d)
    mu, logvar = _encode_tensors(m, d, order)
    z = add(mu, mul(exp(scale(logvar, 0.5)), noise))
    type_logits, edge_logits, edge_targets = _decode_tf_tensors(m, z, d, order)

    true_types = [d.types[v].value for v in order] + [END_TYPE]
    r_types = None
    n_type_correct = 0
    for logits, t in zip(type_logits, true_types):
        ce = softmax_cross_entropy(logits, t)
        r_types = ce if r_types is None else add(r_types, ce)
        if int(np.argmax(logits.value)) == t:
            n_type_correct += 1

    r_edges = Tensor(np.zeros(()))
    e_term = Tensor(np.zeros(()))
    n_edges = 0
    n_edge_correct = 0
    for logits, tgt in zip(edge_logits, edge_targets):
        r_edges = add(r_edges, bce_with_logits(logits, tgt))
        probs = sigmoid(logits)
        e_term = add(e_term, total(absolute(sub(probs, tgt))))
        n_edges += len(tgt)
        n_edge_correct += int(((probs.value > 0.5) == (tgt > 0.5)).sum())

    kl = scale(
        total(
            sub(
                add(mul(mu, mu), exp(logvar)),
                add(Tensor(np.ones(m.d_z)), logvar),
            )
        ),
        0.5,
    )

    out = add(
        scale(add(r_types, r_edges), cfg.alpha),
        add(scale(e_term, cfg.gamma_loss), scale(kl, cfg.beta)),
    )
    parts = LossParts(
        total=float(out.value),
        recon_types=float(r_types.value),
        recon_edges=float(r_edges.value),
        edit=float(e_term.value),
        kl=float(kl.value),
        n_types=len(true_types),
        n_type_correct=n_type_correct,
        n_edges=n_edges,
        n_edge_correct=n_edge_correct,
    )
    return out, parts


def decode_sample(
    m: DvaeModel,
    z: np.ndarray,
    rng: np.random.Generator,
    max_nodes: int = 80,
    greedy: bool = False,
) -> CircuitDag:
    """Free-running generation: sample types until END (or the node cap),
    sample each edge to earlier nodes as an independent Bernoulli.

    The result is a structure-only DAG, possibly not a valid circuit; with
    greedy=True types are argmax and edges are thresholded at 0.5.
    """
    h_init = m.w_init.value @ z + m.b_init.value
    ctx = h_init
    hiddens: list[np.ndarray] = []
    types: list[NodeType] = []
    edges: list[tuple[int, int]] = []

    for k in range(max_nodes):
        logits = m.w_type.value @ ctx + m.b_type.value
        if greedy:
            t = int(np.argmax(logits))
        else:
            p = np.exp(logits - logits.max())
            p /= p.sum()
            t = int(rng.choice(N_NODE_TYPES + 1, p=p))
        if t == END_TYPE:
            break
        x = _EYE[t]
        pred_ids: list[int] = []
        if k > 0:
            provisional = _gru_np(m.dec, x, ctx)
            hmat = np.stack(hiddens)
            pre = np.tanh(
                hmat @ m.w_edge_prev.value.T
                + m.w_edge_new.value @ provisional
                + m.b_edge.value
            )
            probs = _sigmoid_np(pre @ m.w_edge_out.value + m.b_edge_out.value[0])
            if greedy:
                picks = probs > 0.5
            else:
                picks = rng.random(k) < probs
            pred_ids = [u for u in range(k) if picks[u]]
        types.append(NodeType(t))
        edges.extend((u, k) for u in pred_ids)
        if pred_ids:
            incoming = _gated_sum_np(
                m.dec_gate_a.value, m.dec_gate_b.value, [hiddens[u] for u in pred_ids]
            )
        else:
            incoming = ctx
        hk = _gru_np(m.dec, x, incoming)
        hiddens.append(hk)
        ctx = hk

    return CircuitDag(tuple(types), tuple(edges), {}, None)


# --- latent quantisation ------------------------------------------------------


def latent_key(l: Latent, bin_width: float) -> str:
    """Comma-joined per-dimension bin indices of the latent mean."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if not np.all(np.isfinite(l.mu)):
        raise ValueError("latent mean is not finite")
    bins = np.floor(l.mu / bin_width).astype(int)
    return ",".join(str(b) for b in bins)


# --- training -----------------------------------------------------------------


class EpochStats(NamedTuple):
    epoch: int
    mean_loss: float
    accuracy: float       # pooled over node types and edge indicators
    discrete_edit: float  # summed hamming distance of thresholded edges


def train(dataset: list[CircuitDag], cfg: DvaeConfig):
    """Adam over mini-batches for cfg.epochs; deterministic under cfg.seed.

    Returns (model, per-epoch EpochStats list).
    """
    if not dataset:
        raise ValueError("training needs a non-empty dataset")
    biggest = max(d.n_nodes for d in dataset)
    if biggest > cfg.max_decode_nodes:
        raise ValueError(
            f"a DAG has {biggest} nodes, over the decode cap {cfg.max_decode_nodes}"
        )
    model = DvaeModel.create(cfg)
    params = list(model.params().values())
    adam = AdamState.create(params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed + 1)
    stats: list[EpochStats] = []

    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(dataset))
        losses = []
        hits = 0
        preds = 0
        edit = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            zero_grads(params)
            for idx in batch:
                noise = rng.standard_normal(cfg.d_z)
                out, parts = loss(model, dataset[idx], noise, cfg)
                backward(out)
                losses.append(parts.total)
                hits += parts.n_type_correct + parts.n_edge_correct
                preds += parts.n_types + parts.n_edges
                edit += parts.n_edges - parts.n_edge_correct
            grads = [
                (p.grad if p.grad is not None else np.zeros_like(p.value))
                / len(batch)
                for p in params
            ]
            adam_step(params, grads, adam)
        stats.append(
            EpochStats(epoch, float(np.mean(losses)), hits / preds, edit)
        )
        if not math.isfinite(stats[-1].mean_loss):
            raise FloatingPointError(f"loss diverged at epoch {epoch}")
    return model, stats


def reconstruction_accuracy(m: DvaeModel, dataset: list[CircuitDag], cfg: DvaeConfig) -> float:
    """Teacher-forced accuracy of a frozen model over a dataset (noise-free,
    z = mu)."""
    hits = 0
    preds = 0
    for d in dataset:
        out, parts = loss(m, d, np.zeros(cfg.d_z), cfg)
        hits += parts.n_type_correct + parts.n_edge_correct
        preds += parts.n_types + parts.n_edges
    return hits / preds


# --- checkpointing --------------------------------------------------------------

_CKPT_HEADER = "qcopt-dvae v1"


def save_checkpoint(m: DvaeModel, path: str):
    """Versioned text tensor dump; round-trips bit-exactly via float hex."""
    lines = [_CKPT_HEADER, f"dim d_h {m.d_h}", f"dim d_z {m.d_z}"]
    for name, tensor in m.params().items():
        v = tensor.value
        shape = " ".join(str(s) for s in v.shape)
        lines.append(f"tensor {name} {shape}")
        lines.append(" ".join(x.hex() for x in v.reshape(-1)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path: str) -> DvaeModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _CKPT_HEADER:
        raise ValueError(f"not a {_CKPT_HEADER} checkpoint: {path}")
    dims = {}
    i = 1
    while i < len(lines) and lines[i].startswith("dim "):
        _, name, value = lines[i].split()
        dims[name] = int(value)
        i += 1
    cfg = DvaeConfig(d_h=dims["d_h"], d_z=dims["d_z"])
    model = DvaeModel.create(cfg)
    params = model.params()
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        if head[0] != "tensor":
            raise ValueError(f"bad checkpoint line: {lines[i]!r}")
        name = head[1]
        shape = tuple(int(x) for x in head[2:])
        values = np.array([float.fromhex(tok) for tok in lines[i + 1].split()])
        if name not in params:
            raise ValueError(f"unknown tensor {name!r} in checkpoint")
        if values.size != int(np.prod(shape)) or params[name].value.shape != shape:
            raise ValueError(f"shape mismatch for tensor {name!r}")
        params[name].value = values.reshape(shape)
        i += 2
    return model


def save_metadata(path: str, cfg: DvaeConfig, corpus_hash: str, final_stats: EpochStats):
    meta = {
        "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "corpus_hash": corpus_hash,
        "final_loss": final_stats.mean_loss,
        "final_accuracy": final_stats.accuracy,
        "final_discrete_edit": final_stats.discrete_edit,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
