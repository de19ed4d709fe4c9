"""Few-shot relation meta-learning over entity embeddings.

For a task (one relation with a support and a query set) an MLP maps every
support pair ``h (+) t`` to a relation vector; the mean over the support is
the task relation ``R``. ``R`` is adapted with one gradient step on the
support hinge loss, ``R' = R - beta * dL_S/dR``, and the query hinge loss at
``R'`` trains the MLP and the embeddings. Gradients are written out by hand,
including the second-order term that flows through the adaptation step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from gbdtkg.errors import DataError, NumericError, ShapeError
from gbdtkg.kgmodel import AdamState, adam_step
from gbdtkg.triples import Relation, Triple, corrupt_tail


@dataclass(frozen=True)
class EmbeddingTable:
    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=float)
        if vec.ndim != 2 or vec.shape[0] != len(self.ids):
            raise ShapeError(f"expected ({len(self.ids)}, d) embeddings, got {vec.shape}")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate entity id in embedding table")
        if not np.all(np.isfinite(vec)):
            raise NumericError("non-finite embedding")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(self.ids)})

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def index(self, ids: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self._index[e] for e in ids], dtype=int)
        except KeyError as exc:
            raise KeyError(f"entity {exc.args[0]!r} has no embedding") from None

    def __getitem__(self, eid: str) -> np.ndarray:
        return self.vectors[self._index[eid]]


@dataclass(frozen=True)
class RelationMetaNet:
    weights: tuple[np.ndarray, ...]  # layer l maps dims[l] -> dims[l+1], shape (out, in)
    biases: tuple[np.ndarray, ...]
    slope: float = 0.01

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=float) for w in self.weights)
        bs = tuple(np.array(b, dtype=float) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for l, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {l}: weight {w.shape} and bias {b.shape} disagree")
            if l and w.shape[1] != ws[l - 1].shape[0]:
                raise ShapeError(f"layer {l} input {w.shape[1]} != previous output {ws[l - 1].shape[0]}")
        if ws[0].shape[1] != 2 * ws[-1].shape[0]:
            raise ShapeError("network must map 2d inputs to d outputs")
        for a in ws + bs:
            a.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> tuple[np.ndarray, ...]:
        return self.weights + self.biases

    def with_arrays(self, arrays) -> "RelationMetaNet":
        L = self.n_layers
        return RelationMetaNet(tuple(arrays[:L]), tuple(arrays[L:]), self.slope)


def init_net(d: int, hidden: Sequence[int], slope: float, seed) -> RelationMetaNet:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dims = [2 * d, *hidden, d]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return RelationMetaNet(tuple(weights), tuple(biases), slope)


def init_embeddings(ids: Sequence[str], d: int, seed) -> EmbeddingTable:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return EmbeddingTable(tuple(ids), rng.normal(0.0, 1.0 / np.sqrt(d), size=(len(ids), d)))


def _leaky(z, slope):
    return np.where(z > 0, z, slope * z)


def _mlp_forward(net: RelationMetaNet, x0: np.ndarray):
    xs = [x0]
    zs = []
    x = x0
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = x @ w.T + b
        zs.append(z)
        x = z if l == net.n_layers - 1 else _leaky(z, net.slope)
        xs.append(x)
    return x, (xs, zs)


def _mlp_backward(net: RelationMetaNet, cache, grad_out: np.ndarray):
    """Gradients w.r.t. (weights, biases, input rows) for an upstream ``grad_out``."""
    xs, zs = cache
    gw = [None] * net.n_layers
    gb = [None] * net.n_layers
    g = grad_out
    for l in reversed(range(net.n_layers)):
        if l < net.n_layers - 1:
            g = g * np.where(zs[l] > 0, 1.0, net.slope)
        gw[l] = g.T @ xs[l]
        gb[l] = g.sum(axis=0)
        g = g @ net.weights[l]
    return gw, gb, g


def relation_meta(net: RelationMetaNet, h_emb, t_emb) -> np.ndarray:
    """Relation vector of one entity pair (or a batch of pairs as rows)."""
    h = np.asarray(h_emb, dtype=float)
    t = np.asarray(t_emb, dtype=float)
    if h.shape != t.shape or h.shape[-1] != net.dim:
        raise ShapeError(f"embeddings {h.shape}, {t.shape} do not match network dim {net.dim}")
    out, _ = _mlp_forward(net, np.concatenate([h, t], axis=-1))
    return out


def aggregate_meta(metas) -> np.ndarray:
    metas = [np.asarray(m, dtype=float) for m in metas]
    if not metas:
        raise ValueError("no relation vectors to aggregate")
    if len({m.shape for m in metas}) != 1:
        raise ShapeError("relation vectors differ in dimension")
    return np.mean(metas, axis=0)


def _unit(x: np.ndarray):
    nrm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    return np.divide(x, nrm, out=np.zeros_like(x), where=nrm > 0), nrm[..., 0]


def _hinge(h, t, t_neg, R, gamma):
    h, t, t_neg = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (h, t, t_neg))
    if not (h.shape == t.shape == t_neg.shape):
        raise ValueError("every positive needs exactly one negative")
    if len(h) == 0:
        raise ValueError("empty triple set")
    a = h + R - t
    b = h + R - t_neg
    ua, sa = _unit(a)
    ub, sb = _unit(b)
    terms = gamma + sa - sb
    return terms, terms > 0, (ua, sa), (ub, sb)


def support_loss(h, t, t_neg, R, gamma: float) -> float:
    """Sum of ``[gamma + |h + R - t| - |h + R - t'|]_+`` over the rows."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    terms, active, _, _ = _hinge(h, t, t_neg, np.asarray(R, dtype=float), gamma)
    return float(np.where(active, terms, 0.0).sum())


query_loss = support_loss


def gradient_meta(h, t, t_neg, R, gamma: float) -> np.ndarray:
    """Subgradient of ``support_loss`` w.r.t. ``R``; zero when no hinge is active."""
    _, active, (ua, _), (ub, _) = _hinge(h, t, t_neg, np.asarray(R, dtype=float), gamma)
    return np.where(active[:, None], ua - ub, 0.0).sum(axis=0)


def update_meta(R, G, beta: float) -> np.ndarray:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return np.asarray(R, dtype=float) - beta * np.asarray(G, dtype=float)


def _jvp_unit(u, s, g):
    """Jacobian of x / |x| (rows) applied to vector ``g``; zero where |x| = 0."""
    proj = u * (u @ g)[:, None]
    return np.divide(g[None, :] - proj, s[:, None], out=np.zeros_like(u), where=s[:, None] > 0)


@dataclass(frozen=True)
class Task:
    relation: Relation
    support: tuple[Triple, ...]
    query: tuple[Triple, ...]
    support_negatives: tuple[str, ...]
    query_negatives: tuple[str, ...]

    def __post_init__(self):
        if len(self.support_negatives) != len(self.support) or len(self.query_negatives) != len(self.query):
            raise ValueError("each triple needs exactly one negative tail")
        for t in self.support + self.query:
            if t.relation is not self.relation:
                raise ValueError(f"triple {t.key} does not belong to relation {self.relation.value}")

    def to_json(self) -> str:
        def rows(triples, negs):
            return [{"head": t.head, "tail": t.tail, "negative": n} for t, n in zip(triples, negs)]

        return json.dumps(
            {
                "relation": self.relation.value,
                "support": rows(self.support, self.support_negatives),
                "query": rows(self.query, self.query_negatives),
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "Task":
        doc = json.loads(text)
        rel = Relation(doc["relation"])
        sup = doc["support"]
        qry = doc["query"]
        return cls(
            rel,
            tuple(Triple(r["head"], rel, r["tail"]) for r in sup),
            tuple(Triple(r["head"], rel, r["tail"]) for r in qry),
            tuple(r["negative"] for r in sup),
            tuple(r["negative"] for r in qry),
        )


def _task_rows(emb: EmbeddingTable, triples, negatives):
    hi = emb.index([t.head for t in triples])
    ti = emb.index([t.tail for t in triples])
    ni = emb.index(list(negatives))
    return hi, ti, ni


def task_relation(emb: EmbeddingTable, net: RelationMetaNet, task: Task) -> np.ndarray:
    """Support-set relation ``R`` before adaptation."""
    hi, ti, _ = _task_rows(emb, task.support, task.support_negatives)
    return aggregate_meta(relation_meta(net, emb.vectors[hi], emb.vectors[ti]))


def adapted_relation(emb: EmbeddingTable, net: RelationMetaNet, task: Task, beta: float, gamma: float) -> np.ndarray:
    hi, ti, ni = _task_rows(emb, task.support, task.support_negatives)
    V = emb.vectors
    R = aggregate_meta(relation_meta(net, V[hi], V[ti]))
    return update_meta(R, gradient_meta(V[hi], V[ti], V[ni], R, gamma), beta)


def task_query_loss(emb: EmbeddingTable, net: RelationMetaNet, task: Task, beta: float, gamma: float) -> float:
    Rp = adapted_relation(emb, net, task, beta, gamma)
    hq, tq, nq = _task_rows(emb, task.query, task.query_negatives)
    V = emb.vectors
    return query_loss(V[hq], V[tq], V[nq], Rp, gamma)


def task_gradients(emb: EmbeddingTable, net: RelationMetaNet, task: Task, beta: float, gamma: float):
    """Query loss at ``R'`` and its gradients.

    Returns ``(loss, net_grads, emb_grad)`` where ``net_grads`` follows
    ``net.arrays()`` order and ``emb_grad`` is dense over the table.
    """
    V = emb.vectors
    hs, ts, ns = _task_rows(emb, task.support, task.support_negatives)
    hq, tq, nq = _task_rows(emb, task.query, task.query_negatives)
    K = len(hs)

    x0 = np.concatenate([V[hs], V[ts]], axis=1)
    out, cache = _mlp_forward(net, x0)
    R = out.mean(axis=0)
    _, s_act, (ua_s, sa_s), (ub_s, sb_s) = _hinge(V[hs], V[ts], V[ns], R, gamma)
    G = np.where(s_act[:, None], ua_s - ub_s, 0.0).sum(axis=0)
    Rp = R - beta * G

    terms, q_act, (ua_q, _), (ub_q, _) = _hinge(V[hq], V[tq], V[nq], Rp, gamma)
    loss = float(np.where(q_act, terms, 0.0).sum())

    emb_grad = np.zeros_like(V)
    dq = np.where(q_act[:, None], ua_q - ub_q, 0.0)
    g_Rp = dq.sum(axis=0)
    np.add.at(emb_grad, hq, dq)
    np.add.at(emb_grad, tq, -np.where(q_act[:, None], ua_q, 0.0))
    np.add.at(emb_grad, nq, np.where(q_act[:, None], ub_q, 0.0))

    # second-order path through G(R, support embeddings)
    Ja = np.where(s_act[:, None], _jvp_unit(ua_s, sa_s, g_Rp), 0.0)
    Jb = np.where(s_act[:, None], _jvp_unit(ub_s, sb_s, g_Rp), 0.0)
    g_R = g_Rp - beta * (Ja - Jb).sum(axis=0)
    np.add.at(emb_grad, hs, -beta * (Ja - Jb))
    np.add.at(emb_grad, ts, beta * Ja)
    np.add.at(emb_grad, ns, -beta * Jb)

    gw, gb, gx = _mlp_backward(net, cache, np.tile(g_R / K, (K, 1)))
    d = emb.dim
    np.add.at(emb_grad, hs, gx[:, :d])
    np.add.at(emb_grad, ts, gx[:, d:])
    return loss, tuple(gw) + tuple(gb), emb_grad


def sample_tasks(triples: Sequence[Triple], K: int, seed, entities: Sequence[str] | None = None) -> list[Task]:
    """One task per relation: ``K`` random support triples, the rest as query.

    Negatives corrupt the tail so the result is not a known triple of any
    relation group; candidates default to every entity seen in ``triples``.
    """
    if K < 1:
        raise ValueError("support size K must be >= 1")
    rng = np.random.default_rng(seed)
    if entities is None:
        entities = sorted({t.head for t in triples} | {t.tail for t in triples})
    known = set(triples)
    tasks = []
    for rel in Relation:
        group = [t for t in triples if t.relation is rel]
        if not group:
            continue
        if len(group) <= K:
            raise DataError(f"relation {rel.value!r} has {len(group)} triples, need more than K={K}")
        perm = rng.permutation(len(group))
        support = tuple(group[i] for i in perm[:K])
        query = tuple(group[i] for i in perm[K:])
        s_neg = tuple(corrupt_tail(t, entities, known, rng).tail for t in support)
        q_neg = tuple(corrupt_tail(t, entities, known, rng).tail for t in query)
        tasks.append(Task(rel, support, query, s_neg, q_neg))
    return tasks


@dataclass(frozen=True)
class MetaHyper:
    dim: int = 32
    hidden: tuple[int, ...] | None = None  # default: two layers of width 2*dim
    slope: float = 0.01
    beta: float = 1.0
    gamma: float = 1.0
    learning_rate: float = 0.001
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.epochs < 1 or not self.learning_rate > 0:
            raise ValueError("dim, epochs and learning_rate must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be >= 0")

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return (2 * self.dim, 2 * self.dim) if self.hidden is None else tuple(self.hidden)


@dataclass(frozen=True)
class MetaTraining:
    embeddings: EmbeddingTable
    net: RelationMetaNet
    loss_trace: tuple[float, ...] = field(default=())  # summed query loss, index 0 before training


def _total_query_loss(emb, net, tasks, hyper):
    return sum(task_query_loss(emb, net, t, hyper.beta, hyper.gamma) for t in tasks)


def train_meta(tasks: Sequence[Task], hyper: MetaHyper = MetaHyper(), entities: Sequence[str] | None = None) -> MetaTraining:
    """Adam on the query loss, one step per task, tasks visited in a seeded order."""
    if not tasks:
        raise ValueError("no tasks to train on")
    if entities is None:
        seen = set()
        for task in tasks:
            for t in task.support + task.query:
                seen.update((t.head, t.tail))
            seen.update(task.support_negatives + task.query_negatives)
        entities = sorted(seen)
    rng = np.random.default_rng(hyper.seed)
    emb = init_embeddings(entities, hyper.dim, rng)
    net = init_net(hyper.dim, hyper.hidden_dims, hyper.slope, rng)
    n_net = len(net.arrays())
    state = AdamState.zeros_like(net.arrays() + (emb.vectors,), hyper.learning_rate)
    trace = [_total_query_loss(emb, net, tasks, hyper)]
    for epoch in range(1, hyper.epochs + 1):
        for ti in rng.permutation(len(tasks)):
            loss, g_net, g_emb = task_gradients(emb, net, tasks[ti], hyper.beta, hyper.gamma)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite query loss at epoch {epoch}, task {tasks[ti].relation.value}")
            arrays, state = adam_step(state, net.arrays() + (emb.vectors,), g_net + (g_emb,))
            net = net.with_arrays(arrays[:n_net])
            emb = EmbeddingTable(emb.ids, arrays[n_net])
        trace.append(_total_query_loss(emb, net, tasks, hyper))
    return MetaTraining(emb, net, tuple(trace))


@dataclass(frozen=True)
class LinkPrediction:
    ranks: tuple[int, ...]

    @property
    def hits1(self) -> float:
        return float(np.mean([r <= 1 for r in self.ranks]))

    @property
    def hits5(self) -> float:
        return float(np.mean([r <= 5 for r in self.ranks]))

    @property
    def mrr(self) -> float:
        return float(np.mean([1.0 / r for r in self.ranks]))

    def metrics(self) -> dict[str, float]:
        return {"hits1": self.hits1, "hits5": self.hits5, "mrr": self.mrr}


def rank_of(scores: Mapping[str, float], true_id: str) -> int:
    """1-based rank by ascending score; equal scores are ordered by candidate id."""
    s_true = scores[true_id]
    return 1 + sum(1 for c, s in scores.items() if s < s_true or (s == s_true and c < true_id))


def link_predict(
    emb: EmbeddingTable,
    net: RelationMetaNet,
    task: Task,
    candidates: Sequence[str],
    beta: float = 1.0,
    gamma: float = 1.0,
) -> LinkPrediction:
    """Rank every candidate tail for each query triple of ``task``."""
    cands = list(dict.fromkeys(candidates))
    for t in task.query:
        if t.tail not in cands:
            raise ValueError(f"true tail {t.tail!r} is not among the candidates")
    Rp = adapted_relation(emb, net, task, beta, gamma)
    C = emb.vectors[emb.index(cands)]
    ranks = []
    for t in task.query:
        dist = np.sqrt((((emb[t.head] + Rp)[None, :] - C) ** 2).sum(axis=1))
        ranks.append(rank_of(dict(zip(cands, dist.tolist())), t.tail))
    return LinkPrediction(tuple(ranks))
