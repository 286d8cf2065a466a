"""Pairwise sampling, BPR/multitask losses, analytic gradients and Adam training.

The per-triple loss is ``-ln sigmoid(y_ui - y_uj) + lambda1 * ||Theta_t||^2``
where ``Theta_t`` are the parameter entries the triple touches (its user's
rows, both items' rows, the global scalars, the projection matrix and the
category offsets used). A batch loss is the mean of its triple losses.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np

from .core import ModelKind, ParamSet, TrainConfig, init_params
from .data import Dataset, FeatureStore, SplitDataset
from .exceptions import ConfigError, FormatError, TrainingError
from .models import fuse, fuse_match, sigmoid

logger = logging.getLogger(__name__)

GradSet = Dict[str, np.ndarray]


class TrainTriple(NamedTuple):
    u: int
    i: int
    j: int


class TripleBatch(NamedTuple):
    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    def __len__(self):
        return len(self.users)

    def triples(self) -> Iterator[TrainTriple]:
        for u, i, j in zip(self.users, self.pos, self.neg):
            yield TrainTriple(int(u), int(i), int(j))


@dataclass
class TrainHistory:
    losses: List[float] = field(default_factory=list)
    epoch_seconds: List[float] = field(default_factory=list)
    validation_mrr: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.losses)

    def to_csv(self, with_timing: bool = False) -> str:
        """Per-epoch losses as CSV; wall time is opt-in so files stay reproducible."""
        lines = ["epoch,mean_loss" + (",seconds" if with_timing else "")]
        for k, (loss, sec) in enumerate(zip(self.losses, self.epoch_seconds), start=1):
            lines.append(f"{k},{loss!r}" + (f",{sec:.6f}" if with_timing else ""))
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# sampling

class TripleSampler:
    """Uniform-user BPR sampler with rejection of observed negatives."""

    def __init__(self, dataset: Dataset):
        self.n_items = dataset.n_items
        lengths = np.array([len(p) for p in dataset.positives], dtype=np.int64)
        full = lengths >= self.n_items
        if full.any():
            logger.warning("skipping %d user(s) whose positives cover every item", int(full.sum()))
        self.users = np.flatnonzero((lengths > 0) & ~full)
        if len(self.users) == 0:
            raise TrainingError("no user has both a positive and a possible negative item")
        self.offsets = np.concatenate([[0], np.cumsum(lengths)])
        self.lengths = lengths
        self.flat = (np.concatenate(dataset.positives).astype(np.int64)
                     if dataset.positives else np.empty(0, np.int64))
        users, items = dataset.pairs()
        self.codes = np.unique(users * self.n_items + items)

    def is_positive(self, users, items) -> np.ndarray:
        codes = users * self.n_items + items
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, len(self.codes) - 1)
        return self.codes[pos] == codes

    def sample(self, batch_size: int, rng: np.random.Generator) -> TripleBatch:
        users = self.users[rng.integers(len(self.users), size=batch_size)]
        pick = (rng.random(batch_size) * self.lengths[users]).astype(np.int64)
        pos = self.flat[self.offsets[users] + pick]
        neg = rng.integers(self.n_items, size=batch_size)
        bad = self.is_positive(users, neg)
        while bad.any():
            neg[bad] = rng.integers(self.n_items, size=int(bad.sum()))
            bad = self.is_positive(users, neg)
        return TripleBatch(users, pos, neg)


def sample_triples(dataset, batch_size: int, rng) -> TripleBatch:
    if isinstance(dataset, SplitDataset):
        dataset = dataset.train
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return TripleSampler(dataset).sample(batch_size, rng)


# --------------------------------------------------------------------------
# losses

def softplus(x):
    return np.logaddexp(0.0, x)


def bpr_loss(score_pos, score_neg, l2: float = 0.0, lambda1: float = 0.0) -> float:
    """-ln sigmoid(score_pos - score_neg) + lambda1 * l2."""
    return float(softplus(-(np.float64(score_pos) - np.float64(score_neg)))) + lambda1 * l2


def multitask_loss(factors_pos, factors_neg, l2: float = 0.0, lambda1: float = 0.0,
                   multitask: bool = True, fusion: str = "product",
                   l2_per_term: bool = False) -> float:
    """BPR on the fused score plus, with ``multitask``, on the notice and match branches."""
    p, n = _as_factors(factors_pos), _as_factors(factors_neg)
    total = bpr_loss(fuse(*p, fusion), fuse(*n, fusion))
    n_terms = 1
    if multitask:
        total += bpr_loss(p[2], n[2])
        total += bpr_loss(fuse_match(p[0], p[1], fusion), fuse_match(n[0], n[1], fusion))
        n_terms = 3
    return total + (n_terms if l2_per_term else 1) * lambda1 * l2


def _as_factors(f):
    return f.as_tuple() if hasattr(f, "as_tuple") else tuple(f)


# --------------------------------------------------------------------------
# analytic gradients (batched)

def _zeros_like(params: ParamSet) -> GradSet:
    return {name: np.zeros_like(arr) for name, arr in params.theta().items()}


def _reg(params: ParamSet, batch: TripleBatch, categories, grads: Optional[GradSet],
         weight: float) -> float:
    """weight * sum_t ||Theta_t||^2 and its gradient, accumulated into grads."""
    u, i, j = batch
    B = len(u)
    total = 0.0
    if params.alpha is not None:
        total += B * float(params.alpha) ** 2
        if grads is not None:
            grads["alpha"] += 2 * weight * B * params.alpha
    for name, rows in (("beta_u", u), ("gamma_u", u), ("theta_u", u)):
        arr = getattr(params, name)
        if arr is None:
            continue
        total += float(np.sum(arr[rows] ** 2))
        if grads is not None:
            np.add.at(grads[name], rows, 2 * weight * arr[rows])
    for name in ("beta_i", "gamma_i"):
        arr = getattr(params, name)
        if arr is None:
            continue
        total += float(np.sum(arr[i] ** 2) + np.sum(arr[j] ** 2))
        if grads is not None:
            np.add.at(grads[name], i, 2 * weight * arr[i])
            np.add.at(grads[name], j, 2 * weight * arr[j])
    if params.E is not None:
        total += B * float(np.sum(params.E ** 2))
        if grads is not None:
            grads["E"] += 2 * weight * B * params.E
    if params.c is not None:
        ci, cj = _cats(categories, i), _cats(categories, j)
        other = cj != ci
        total += float(np.sum(params.c[ci] ** 2) + np.sum(params.c[cj[other]] ** 2))
        if grads is not None:
            np.add.at(grads["c"], ci, 2 * weight * params.c[ci])
            np.add.at(grads["c"], cj[other], 2 * weight * params.c[cj[other]])
    return weight * total


def _cats(categories, items):
    if categories is None:
        return np.zeros(len(items), dtype=np.int64)
    return categories[items]


def _linear_side(kind, params, u, items, feats, cats):
    """Score of a non-CausalRec model for (u, items) with raw feature rows feats."""
    y = np.zeros(len(u))
    if params.alpha is not None:
        y += float(params.alpha)
    if params.beta_u is not None:
        y += params.beta_u[u]
    if params.beta_i is not None:
        y += params.beta_i[items]
    v = feats @ params.E.T if (kind.has_visual and params.E is not None) else None
    if kind in (ModelKind.MF, ModelKind.VBPR):
        y += np.einsum("bk,bk->b", params.gamma_u[u], params.gamma_i[items])
        if kind is ModelKind.VBPR:
            y += np.einsum("bk,bk->b", params.theta_u[u], v)
    elif kind is ModelKind.DVBPR:
        y += np.einsum("bk,bk->b", params.theta_u[u], v)
    else:
        side = v + params.gamma_i[items]
        if kind is ModelKind.DEEPSTYLE and params.c is not None:
            side = side - params.c[cats]
        y += np.einsum("bk,bk->b", params.gamma_u[u], side)
    return y, v


def _linear_back(kind, params, grads, w, u, items, feats, cats, v):
    """Accumulate w * d(score)/d(params) for one side of the batch."""
    if params.alpha is not None:
        grads["alpha"] += w.sum()
    if params.beta_u is not None:
        np.add.at(grads["beta_u"], u, w)
    if params.beta_i is not None:
        np.add.at(grads["beta_i"], items, w)
    wc = w[:, None]
    dv = None
    if kind in (ModelKind.MF, ModelKind.VBPR):
        np.add.at(grads["gamma_u"], u, wc * params.gamma_i[items])
        np.add.at(grads["gamma_i"], items, wc * params.gamma_u[u])
        if kind is ModelKind.VBPR:
            np.add.at(grads["theta_u"], u, wc * v)
            dv = wc * params.theta_u[u]
    elif kind is ModelKind.DVBPR:
        np.add.at(grads["theta_u"], u, wc * v)
        dv = wc * params.theta_u[u]
    else:
        gu = params.gamma_u[u]
        side = v + params.gamma_i[items]
        if kind is ModelKind.DEEPSTYLE and params.c is not None:
            side = side - params.c[cats]
            np.add.at(grads["c"], cats, -wc * gu)
        np.add.at(grads["gamma_u"], u, wc * side)
        np.add.at(grads["gamma_i"], items, wc * gu)
        dv = wc * gu
    if dv is not None:
        grads["E"] += dv.T @ feats
    return dv


def _causal_forward(params, u, items, feats):
    gu, gi = params.gamma_u[u], params.gamma_i[items]
    v = feats @ params.E.T
    m1 = sigmoid(np.einsum("bk,bk->b", gu, gi))
    m2 = sigmoid(np.einsum("bk,bk->b", gu, gi * v))
    n = sigmoid(np.einsum("bk,bk->b", params.theta_u[u], v))
    return m1, m2, n, v


def _causal_back(params, grads, d_m1, d_m2, d_n, u, items, feats, m1, m2, n, v):
    gu, gi, tu = params.gamma_u[u], params.gamma_i[items], params.theta_u[u]
    da = (d_m1 * m1 * (1 - m1))[:, None]
    db = (d_m2 * m2 * (1 - m2))[:, None]
    dc = (d_n * n * (1 - n))[:, None]
    np.add.at(grads["gamma_u"], u, da * gi + db * gi * v)
    np.add.at(grads["gamma_i"], items, da * gu + db * gu * v)
    np.add.at(grads["theta_u"], u, dc * v)
    dv = db * gu * gi + dc * tu
    grads["E"] += dv.T @ feats
    return dv


def batch_loss_and_grads(kind, params: ParamSet, batch: TripleBatch, features: np.ndarray,
                         config: TrainConfig, categories=None, pos_delta=None,
                         with_grads: bool = True) -> Tuple[float, Optional[GradSet], np.ndarray]:
    """Mean triple loss of ``batch``, its gradient, and per-triple BPR margins.

    ``pos_delta`` (B, D) perturbs the positive items' features (AMR); negatives
    use the stored ``params.delta`` rows.
    """
    kind = ModelKind.parse(kind)
    u, i, j = (np.asarray(a, dtype=np.int64) for a in batch)
    B = len(u)
    grads = _zeros_like(params) if with_grads else None
    f_i = features[i] if features is not None else None
    f_j = features[j] if features is not None else None
    if kind is ModelKind.AMR:
        if pos_delta is not None:
            f_i = f_i + pos_delta
        if params.delta is not None:
            f_j = f_j + params.delta[j]

    if kind is ModelKind.CAUSALREC:
        loss, margins = _causal_loss(params, grads, config, u, i, j, f_i, f_j, B)
        n_terms = 3 if (config.multitask and config.multitask_l2_per_term) else 1
    else:
        ci, cj = _cats(categories, i), _cats(categories, j)
        y_i, v_i = _linear_side(kind, params, u, i, f_i, ci)
        y_j, v_j = _linear_side(kind, params, u, j, f_j, cj)
        margins = y_i - y_j
        loss = float(np.sum(softplus(-margins))) / B
        if with_grads:
            g = -sigmoid(-margins) / B
            _linear_back(kind, params, grads, g, u, i, f_i, ci, v_i)
            _linear_back(kind, params, grads, -g, u, j, f_j, cj, v_j)
        n_terms = 1
    weight = n_terms * config.lambda1 / B
    loss += _reg(params, TripleBatch(u, i, j), categories, grads, weight)
    if with_grads:
        for name in params.frozen:
            grads.pop(name, None)
    return loss, grads, margins


def _causal_loss(params, grads, config, u, i, j, f_i, f_j, B):
    fusion = config.fusion
    m1i, m2i, ni, vi = _causal_forward(params, u, i, f_i)
    m1j, m2j, nj, vj = _causal_forward(params, u, j, f_j)
    d_y = fuse(m1i, m2i, ni, fusion) - fuse(m1j, m2j, nj, fusion)
    loss = float(np.sum(softplus(-d_y)))
    if config.multitask:
        d_n = ni - nj
        d_m = fuse_match(m1i, m2i, fusion) - fuse_match(m1j, m2j, fusion)
        loss += float(np.sum(softplus(-d_n)) + np.sum(softplus(-d_m)))
    if grads is not None:
        gy = -sigmoid(-d_y) / B
        gn = -sigmoid(-d_n) / B if config.multitask else np.zeros(B)
        gm = -sigmoid(-d_m) / B if config.multitask else np.zeros(B)
        for sign, (m1, m2, n, v, items, feats) in ((1.0, (m1i, m2i, ni, vi, i, f_i)),
                                                   (-1.0, (m1j, m2j, nj, vj, j, f_j))):
            if fusion == "product":
                d_m1 = gy * m2 * n + gm * m2
                d_m2 = gy * m1 * n + gm * m1
                d_nn = gy * m1 * m2 + gn
            else:
                d_m1 = gy + gm
                d_m2 = gy + gm
                d_nn = gy + gn
            _causal_back(params, grads, sign * d_m1, sign * d_m2, sign * d_nn,
                         u, items, feats, m1, m2, n, v)
    return loss / B, d_y


def gradients(kind, params: ParamSet, triple, features, config: TrainConfig,
              categories=None, pos_delta=None) -> GradSet:
    """Exact gradient of one triple's loss; untouched entries are zero."""
    _, grads, _ = batch_loss_and_grads(kind, params, _single(triple), _dense(features),
                                       config, categories,
                                       None if pos_delta is None else np.atleast_2d(pos_delta))
    return grads


def triple_loss(kind, params: ParamSet, triple, features, config: TrainConfig,
                categories=None, pos_delta=None) -> float:
    loss, _, _ = batch_loss_and_grads(kind, params, _single(triple), _dense(features), config,
                                      categories,
                                      None if pos_delta is None else np.atleast_2d(pos_delta),
                                      with_grads=False)
    return loss


def _single(triple) -> TripleBatch:
    u, i, j = triple
    return TripleBatch(np.array([u]), np.array([i]), np.array([j]))


def _dense(features):
    if features is None:
        return None
    if isinstance(features, FeatureStore):
        return features.vectors.astype(np.float64)
    return np.asarray(features, dtype=np.float64)


# --------------------------------------------------------------------------
# adversary

def adversarial_deltas(params: ParamSet, batch: TripleBatch, features: np.ndarray,
                       epsilon: float) -> np.ndarray:
    """Per-triple epsilon * g / ||g|| with g = dBPR/d(positive raw feature)."""
    u, i, j = batch
    D = params.E.shape[1]
    if epsilon == 0:
        return np.zeros((len(u), D))
    gu = params.gamma_u[u]
    f_i, f_j = features[i], features[j]
    if params.delta is not None:
        f_j = f_j + params.delta[j]
    y_i = np.einsum("bk,bk->b", gu, f_i @ params.E.T + params.gamma_i[i])
    y_j = np.einsum("bk,bk->b", gu, f_j @ params.E.T + params.gamma_i[j])
    w = -sigmoid(-(y_i - y_j))
    g = (w[:, None] * gu) @ params.E
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    out = np.zeros_like(g)
    nz = norm[:, 0] > 0
    out[nz] = epsilon * g[nz] / norm[nz]
    return out


def adversarial_delta(params: ParamSet, triple, features, epsilon: float) -> np.ndarray:
    """Adversarial perturbation for one triple; stored into ``params.delta``."""
    batch = _single(triple)
    delta = adversarial_deltas(params, batch, _dense(features), epsilon)[0]
    if params.delta is not None:
        params.delta[batch.pos[0]] = delta
    return delta


# --------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: ParamSet) -> "AdamState":
        tables = params.trainable()
        return cls({k: np.zeros_like(a) for k, a in tables.items()},
                   {k: np.zeros_like(a) for k, a in tables.items()}, 0)


def adam_step(params: ParamSet, grads: GradSet, state: AdamState, config: TrainConfig):
    """Bias-corrected Adam update, in place. Returns ``(params, state)``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise TrainingError(f"non-finite gradient in {name!r} at step {state.t + 1}: "
                                f"{bad} bad entries, max |finite| = "
                                f"{np.nanmax(np.abs(np.where(np.isfinite(g), g, np.nan)), initial=0.0)}")
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    lr_t = config.learning_rate * math.sqrt(1 - b2 ** state.t) / (1 - b1 ** state.t)
    eps_t = config.adam_eps * math.sqrt(1 - b2 ** state.t)
    for name, arr in params.trainable().items():
        g = grads.get(name)
        if g is None:
            continue
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        # equivalent to lr * m_hat / (sqrt(v_hat) + eps)
        arr -= lr_t * m / (np.sqrt(v) + eps_t)
    return params, state


# --------------------------------------------------------------------------
# loop

def prepare_params(kind, config: TrainConfig, dataset: Dataset) -> ParamSet:
    kind = ModelKind.parse(kind)
    if kind.has_visual:
        if dataset.features is None:
            raise ConfigError(f"{kind.value} needs visual features")
        if config.visual_dim is None:
            config = config.replace(visual_dim=int(dataset.features.shape[1]))
    params = init_params(kind, config, dataset.n_users, dataset.n_items, dataset.n_categories)
    if kind is ModelKind.DEEPSTYLE and dataset.categories is None:
        # no category data: one category whose offset is fixed at zero
        params.c[:] = 0.0
        params.frozen = frozenset({"c"})
    return params


def train(kind, split, store=None, config: Optional[TrainConfig] = None,
          early_stopping_patience: Optional[int] = None,
          callback: Optional[Callable[[int, float], None]] = None):
    """Train ``kind`` on the training view of ``split``.

    ``store`` overrides the dataset's aligned features (FeatureStore or
    matrix). Early stopping needs ``split.validation`` and monitors
    validation MRR of the biased scorer.
    """
    kind = ModelKind.parse(kind)
    config = (config or TrainConfig()).validate()
    dataset = split.train if isinstance(split, SplitDataset) else split
    features = dataset.features
    if store is not None:
        features = (store.matrix(dataset.item_tokens) if isinstance(store, FeatureStore)
                    else np.asarray(store, dtype=np.float64))
    if features is not None and dataset.features is not features:
        dataset = Dataset(dataset.user_tokens, dataset.item_tokens, dataset.positives,
                          dataset.timestamps, features, dataset.categories)
    if kind.has_visual and features is not None and config.visual_dim is None:
        config = config.replace(visual_dim=int(features.shape[1]))

    params = prepare_params(kind, config, dataset)
    history = TrainHistory()
    if config.epochs == 0:
        return params, history

    sampler = TripleSampler(dataset)
    rng = np.random.default_rng([config.seed, 1])
    state = AdamState.zeros(params)
    steps = max(1, math.ceil(dataset.n_interactions / config.batch_size))
    categories = dataset.categories

    best, best_params, stale = -np.inf, None, 0
    val = split.validation if isinstance(split, SplitDataset) else None
    if early_stopping_patience is not None and val is None:
        raise ConfigError("early stopping needs a validation split")

    for epoch in range(config.epochs):
        start = time.perf_counter()
        total = 0.0
        for _ in range(steps):
            batch = sampler.sample(config.batch_size, rng)
            pos_delta = None
            if kind is ModelKind.AMR:
                pos_delta = adversarial_deltas(params, batch, features, config.amr_epsilon)
                params.delta[batch.pos] = pos_delta
            loss, grads, _ = batch_loss_and_grads(kind, params, batch, features, config,
                                                  categories, pos_delta)
            total += loss
            adam_step(params, grads, state, config)
        history.losses.append(total / steps)
        history.epoch_seconds.append(time.perf_counter() - start)
        logger.debug("epoch %d loss %.6f (%.2fs)", epoch + 1, history.losses[-1],
                     history.epoch_seconds[-1])
        if callback is not None:
            callback(epoch, history.losses[-1])
        if early_stopping_patience is not None:
            from .evaluation import evaluate, make_scorer
            mrr = evaluate(make_scorer(kind, params, dataset.features, categories,
                                       fusion=config.fusion),
                           SplitDataset(dataset, val), k=50).mrr
            history.validation_mrr.append(mrr)
            if mrr > best:
                best, best_params, stale = mrr, params.copy(), 0
            else:
                stale += 1
                if stale >= early_stopping_patience:
                    logger.info("early stop after epoch %d", epoch + 1)
                    break
    if best_params is not None:
        params = best_params
    return params, history


# --------------------------------------------------------------------------
# checkpoints
#
# little-endian layout, version 1:
#   b"VDCK" | u16 version | u16 len | kind utf-8 | u32 len | config JSON
#   | u32 len | frozen-table JSON list | u32 n_tables
#   | n_tables x (u16 len | name | u8 ndim | ndim x u64 | float64 data)

CKPT_MAGIC = b"VDCK"
CKPT_VERSION = 1


def save_checkpoint(path, params: ParamSet, config: TrainConfig) -> None:
    out = [CKPT_MAGIC, struct.pack("<H", CKPT_VERSION)]
    kind = params.kind.value.encode("utf-8")
    out += [struct.pack("<H", len(kind)), kind]
    cfg = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    out += [struct.pack("<I", len(cfg)), cfg]
    frozen = json.dumps(sorted(params.frozen)).encode("utf-8")
    out += [struct.pack("<I", len(frozen)), frozen]
    tables = params.tables()
    out.append(struct.pack("<I", len(tables)))
    for name, arr in tables.items():
        enc = name.encode("utf-8")
        out += [struct.pack("<H", len(enc)), enc, struct.pack("<B", arr.ndim)]
        out += [struct.pack("<Q", d) for d in arr.shape]
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_checkpoint(path) -> Tuple[ParamSet, TrainConfig]:
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError("truncated checkpoint", path)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CKPT_MAGIC:
        raise FormatError("not a checkpoint (bad magic)", path)
    (version,) = struct.unpack("<H", take(2))
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", path)
    (n,) = struct.unpack("<H", take(2))
    kind = ModelKind.parse(take(n).decode("utf-8"))
    (n,) = struct.unpack("<I", take(4))
    config = TrainConfig(**json.loads(take(n).decode("utf-8")))
    (n,) = struct.unpack("<I", take(4))
    frozen = frozenset(json.loads(take(n).decode("utf-8")))
    (n_tables,) = struct.unpack("<I", take(4))
    params = ParamSet(kind=kind, frozen=frozen)
    for _ in range(n_tables):
        (n,) = struct.unpack("<H", take(2))
        name = take(n).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<Q", take(8))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
        setattr(params, name, arr)
    if pos != len(buf):
        raise FormatError("trailing bytes in checkpoint", path)
    return params, config
