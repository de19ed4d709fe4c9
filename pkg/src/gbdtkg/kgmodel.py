"""Translation-based relation predictor over weighted entity vectors.

An entity with cross vector ``S`` is embedded as ``W * S`` (elementwise), and
a pair (h, t) is scored against each relation vector ``r`` by ``|h + r - t|``.
Training minimises the mean of ``max(margin + e_true - e_false, 0)`` with
Adam; the default margin of zero gives the plain ``max(e_true - e_false, 0)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from gbdtkg.errors import DataError, NumericError, ShapeError
from gbdtkg.triples import Relation, Triple

NORMS = (1, 2)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KgParams:
    W: np.ndarray
    r_similar: np.ndarray
    r_nonsimilar: np.ndarray
    norm: int = 2

    def __post_init__(self):
        for name in ("W", "r_similar", "r_nonsimilar"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (self.W.ndim == 1 and self.W.shape == self.r_similar.shape == self.r_nonsimilar.shape):
            raise ShapeError(
                f"parameter shapes disagree: {self.W.shape}, {self.r_similar.shape}, {self.r_nonsimilar.shape}"
            )
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def relation_vector(self, relation: Relation) -> np.ndarray:
        return self.r_similar if relation is Relation.SIMILAR else self.r_nonsimilar

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.W, self.r_similar, self.r_nonsimilar

    def with_arrays(self, arrays) -> "KgParams":
        W, rs, rn = arrays
        return replace(self, W=W, r_similar=rs, r_nonsimilar=rn)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "norm": self.norm,
                "W": self.W.tolist(),
                "r_similar": self.r_similar.tolist(),
                "r_nonsimilar": self.r_nonsimilar.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "KgParams":
        doc = json.loads(text)
        params = cls(doc["W"], doc["r_similar"], doc["r_nonsimilar"], int(doc.get("norm", 2)))
        if params.n != doc["n"]:
            raise ShapeError(f"declared n={doc['n']} but vectors have length {params.n}")
        return params


def entity_vector(W, S) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    S = np.asarray(S, dtype=float)
    if W.shape != S.shape:
        raise ShapeError(f"weight length {W.shape} does not match cross length {S.shape}")
    return W * S


def _norm(x: np.ndarray, p: int) -> np.ndarray:
    if p == 1:
        return np.abs(x).sum(axis=-1)
    return np.sqrt((x * x).sum(axis=-1))


def _norm_grad(x: np.ndarray, p: int) -> np.ndarray:
    """Subgradient of the norm, zero at the origin."""
    if p == 1:
        return np.sign(x)
    nrm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    return np.divide(x, nrm, out=np.zeros_like(x), where=nrm > 0)


def score_pair(h, r, t, norm: int = 2) -> float:
    h, r, t = (np.asarray(v, dtype=float) for v in (h, r, t))
    if not h.shape == r.shape == t.shape:
        raise ShapeError(f"shapes differ: {h.shape}, {r.shape}, {t.shape}")
    return float(_norm(h + r - t, norm))


def relation_scores(params: KgParams, head_cross, tail_cross) -> tuple[np.ndarray, np.ndarray]:
    """Scores against both relation vectors; accepts single vectors or row batches."""
    head_cross = np.asarray(head_cross, dtype=float)
    tail_cross = np.asarray(tail_cross, dtype=float)
    if head_cross.shape != tail_cross.shape or head_cross.shape[-1] != params.n:
        raise ShapeError(
            f"cross shapes {head_cross.shape}, {tail_cross.shape} do not match n={params.n}"
        )
    d = params.W * (head_cross - tail_cross)
    return _norm(d + params.r_similar, params.norm), _norm(d + params.r_nonsimilar, params.norm)


def triple_loss(
    params: KgParams, head_cross, tail_cross, true_relation: Relation, margin: float = 0.0
) -> float:
    e_sim, e_non = relation_scores(params, head_cross, tail_cross)
    e1, e2 = (e_sim, e_non) if true_relation is Relation.SIMILAR else (e_non, e_sim)
    return float(max(margin + e1 - e2, 0.0))


def batch_loss(params: KgParams, heads, tails, similar, margin: float = 0.0) -> float:
    """Mean hinge loss over rows; ``similar`` is a boolean mask of true relations."""
    e_sim, e_non = relation_scores(params, heads, tails)
    similar = np.asarray(similar, dtype=bool)
    gap = np.where(similar, e_sim - e_non, e_non - e_sim)
    return float(np.maximum(margin + gap, 0.0).mean())


def kg_gradients(params: KgParams, heads, tails, similar, margin: float = 0.0):
    """Mean-loss subgradients ``(dW, dr_similar, dr_nonsimilar)`` and the mean loss."""
    heads = np.atleast_2d(np.asarray(heads, dtype=float))
    tails = np.atleast_2d(np.asarray(tails, dtype=float))
    similar = np.atleast_1d(np.asarray(similar, dtype=bool))
    if len(similar) == 0:
        raise ValueError("empty batch")
    if heads.shape != tails.shape or heads.shape[1] != params.n or len(similar) != len(heads):
        raise ShapeError("batch shapes do not match the parameters")
    p = params.norm
    D = heads - tails
    base = params.W * D
    r_true = np.where(similar[:, None], params.r_similar, params.r_nonsimilar)
    r_false = np.where(similar[:, None], params.r_nonsimilar, params.r_similar)
    a = base + r_true
    b = base + r_false
    gap = margin + _norm(a, p) - _norm(b, p)
    active = (gap > 0)[:, None]
    ga = np.where(active, _norm_grad(a, p), 0.0)
    gb = np.where(active, _norm_grad(b, p), 0.0)
    m = len(similar)
    dW = (D * (ga - gb)).sum(axis=0) / m
    # a uses r_true, b uses r_false
    g_sim = np.where(similar[:, None], ga, -gb).sum(axis=0) / m
    g_non = np.where(similar[:, None], -gb, ga).sum(axis=0) / m
    loss = float(np.maximum(gap, 0.0).mean())
    return (dW, g_sim, g_non), loss


@dataclass(frozen=True)
class AdamState:
    t: int
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        zeros = tuple(np.zeros_like(np.asarray(a, dtype=float)) for a in arrays)
        return cls(0, zeros, zeros, lr, beta1, beta2, eps)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update on a sequence of arrays.

    ``params`` may be a ``KgParams`` or a tuple of arrays; the same kind is
    returned together with the new state.
    """
    arrays = params.arrays() if isinstance(params, KgParams) else tuple(params)
    grads = tuple(np.asarray(g, dtype=float) for g in grads)
    if len(grads) != len(arrays) or any(g.shape != np.shape(a) for g, a in zip(grads, arrays)):
        raise ShapeError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise NumericError("non-finite gradient")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m.append(m)
        new_v.append(v)
        new_p.append(p - step)
    new_state = replace(state, t=t, m=tuple(new_m), v=tuple(new_v))
    if isinstance(params, KgParams):
        return params.with_arrays(new_p), new_state
    return tuple(new_p), new_state


@dataclass(frozen=True)
class KgHyper:
    learning_rate: float = 0.001
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0
    norm: int = 1
    margin: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")


@dataclass(frozen=True)
class KgTraining:
    params: KgParams
    loss_trace: tuple[float, ...] = field(default=())  # index 0 is the loss before training

    def trace_csv(self) -> str:
        lines = ["epoch,mean_loss"]
        lines += [f"{i},{loss!r}" for i, loss in enumerate(self.loss_trace)]
        return "\n".join(lines) + "\n"


def init_params(n: int, seed, norm: int = 2) -> KgParams:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    W = rng.uniform(0.5, 1.5, size=n)
    scale = 1.0 / np.sqrt(n)
    rs = rng.uniform(-0.5, 0.5, size=n) * scale
    rn = rng.uniform(-0.5, 0.5, size=n) * scale
    return KgParams(W, rs, rn, norm)


def stack_triples(triples: Sequence[Triple], crosses: Mapping[str, np.ndarray]):
    """Head rows, tail rows and a Similar mask for a list of triples."""
    for t in triples:
        for eid in (t.head, t.tail):
            if eid not in crosses:
                raise KeyError(f"no cross vector for entity {eid!r}")
    if not triples:
        raise ValueError("no triples")
    heads = np.array([crosses[t.head] for t in triples], dtype=float)
    tails = np.array([crosses[t.tail] for t in triples], dtype=float)
    similar = np.array([t.relation is Relation.SIMILAR for t in triples])
    return heads, tails, similar


def train_kg(
    triples: Sequence[Triple], crosses: Mapping[str, np.ndarray], hyper: KgHyper = KgHyper()
) -> KgTraining:
    """Shuffled mini-batch Adam on the mean hinge loss."""
    heads, tails, similar = stack_triples(triples, crosses)
    n = heads.shape[1]
    if n < 1:
        raise ShapeError("cross dimension must be >= 1")
    rng = np.random.default_rng(hyper.seed)
    params = init_params(n, rng, hyper.norm)
    state = AdamState.zeros_like(params.arrays(), hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.eps)
    trace = [batch_loss(params, heads, tails, similar, hyper.margin)]
    N = len(similar)
    for _ in range(hyper.epochs):
        order = rng.permutation(N)
        for start in range(0, N, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            grads, _ = kg_gradients(params, heads[idx], tails[idx], similar[idx], hyper.margin)
            params, state = adam_step(state, params, grads)
        loss = batch_loss(params, heads, tails, similar, hyper.margin)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {len(trace)}")
        trace.append(loss)
    return KgTraining(params, tuple(trace))


def predict_relation(params: KgParams, head_cross, tail_cross):
    """``(relation, e_similar, e_nonsimilar)``; exact ties go to Similar."""
    e_sim, e_non = relation_scores(params, head_cross, tail_cross)
    rel = Relation.SIMILAR if e_sim <= e_non else Relation.NON_SIMILAR
    return rel, float(e_sim), float(e_non)


def predict_similar(params: KgParams, heads, tails) -> np.ndarray:
    """Vectorised predictions: True where Similar is predicted."""
    e_sim, e_non = relation_scores(params, heads, tails)
    return e_sim <= e_non


def evaluate_accuracy(params: KgParams, triples: Sequence[Triple], crosses: Mapping[str, np.ndarray]) -> float:
    if not triples:
        raise ValueError("empty test set")
    heads, tails, similar = stack_triples(triples, crosses)
    return float(np.mean(predict_similar(params, heads, tails) == similar))
