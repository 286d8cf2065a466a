"""Interaction/feature ingestion, k-core filtering, splits and synthetic corpora.

File formats
------------
Interactions: UTF-8 text, ``user<TAB>item[<TAB>timestamp]`` per line, lines
starting with ``#`` are comments. A timestamp of ``-1`` means absent.

Visual features (binary, little-endian)::

    b"VFT1" | u32 dim | u64 count | count x (u16 token_len | token utf-8 | dim x f32)

A TSV fallback (``token<TAB>v1<TAB>...<TAB>vD``) is accepted when the
dimension is declared by the caller.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError, DataError, FormatError, ParseError, SparseDatasetError

logger = logging.getLogger(__name__)

MAGIC = b"VFT1"
_HEADER = struct.Struct("<4sIQ")
_TOKEN_LEN = struct.Struct("<H")
NO_TIMESTAMP = -1


@dataclass
class RawInteractions:
    users: List[str] = field(default_factory=list)
    items: List[str] = field(default_factory=list)
    # NO_TIMESTAMP (-1) when absent
    timestamps: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.users)

    def append(self, user: str, item: str, timestamp: Optional[int] = None):
        if not user or not item:
            raise DataError("user and item tokens must be non-empty")
        self.users.append(user)
        self.items.append(item)
        self.timestamps.append(NO_TIMESTAMP if timestamp is None else int(timestamp))

    @property
    def records(self) -> List[Tuple[str, str, Optional[int]]]:
        return [(u, i, None if t == NO_TIMESTAMP else t)
                for u, i, t in zip(self.users, self.items, self.timestamps)]


@dataclass
class FeatureStore:
    dim: int
    tokens: List[str]
    vectors: np.ndarray  # (n, dim) float32

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.dim < 1:
            raise FormatError(f"feature dimension must be >= 1, got {self.dim}")
        if self.vectors.ndim != 2 or self.vectors.shape != (len(self.tokens), self.dim):
            raise FormatError(f"expected {len(self.tokens)} x {self.dim} feature matrix, "
                              f"got shape {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise FormatError("feature vectors contain non-finite entries")
        self._index = {tok: k for k, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise FormatError("duplicate item token in feature store")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def __getitem__(self, token) -> np.ndarray:
        return self.vectors[self._index[token]]

    def matrix(self, tokens: Sequence[str]) -> np.ndarray:
        """float64 feature rows for ``tokens`` in the given order."""
        try:
            rows = [self._index[t] for t in tokens]
        except KeyError as exc:
            raise DataError(f"item {exc.args[0]!r} has no visual feature") from None
        return self.vectors[rows].astype(np.float64)


@dataclass
class Dataset:
    """Densely indexed implicit-feedback corpus.

    ``positives[u]`` holds user u's item indices in interaction order
    (timestamp ascending, absent timestamps last); ``timestamps[u]`` is
    aligned with it.
    """

    user_tokens: List[str]
    item_tokens: List[str]
    positives: List[np.ndarray]
    timestamps: List[np.ndarray]
    features: Optional[np.ndarray] = None
    categories: Optional[np.ndarray] = None

    @property
    def n_users(self) -> int:
        return len(self.user_tokens)

    @property
    def n_items(self) -> int:
        return len(self.item_tokens)

    @property
    def n_interactions(self) -> int:
        return int(sum(len(p) for p in self.positives))

    @property
    def n_categories(self) -> int:
        if self.categories is None:
            return 1
        return int(self.categories.max()) + 1

    def pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        users = np.repeat(np.arange(self.n_users), [len(p) for p in self.positives])
        items = np.concatenate(self.positives) if self.positives else np.empty(0, np.int64)
        return users.astype(np.int64), items.astype(np.int64)

    def item_degrees(self) -> np.ndarray:
        _, items = self.pairs()
        return np.bincount(items, minlength=self.n_items)

    def with_positives(self, positives, timestamps) -> "Dataset":
        return Dataset(self.user_tokens, self.item_tokens, positives, timestamps,
                       self.features, self.categories)


@dataclass
class SplitDataset:
    train: Dataset
    test: np.ndarray  # (n_users,) held-out item per user, -1 when none
    validation: Optional[np.ndarray] = None

    @property
    def n_users(self):
        return self.train.n_users

    @property
    def n_items(self):
        return self.train.n_items


@dataclass
class SyntheticSpec:
    n_users: int = 500
    n_items: int = 800
    true_dim: int = 4
    visual_share: float = 0.5
    clicks_per_user: int = 20
    feature_noise: float = 0.1
    seed: int = 0
    # extra weight of real preference in the click logits; 0 keeps clicks visual-only
    preference_weight: float = 0.0
    # standard deviation of each block affinity
    affinity_scale: float = 1.0

    def validate(self) -> "SyntheticSpec":
        if self.n_users < 1 or self.n_items < 1:
            raise ConfigError("synthetic corpus needs n_users >= 1 and n_items >= 1")
        if self.true_dim < 1:
            raise ConfigError("true_dim must be >= 1")
        if not 0.0 <= self.visual_share <= 1.0:
            raise ConfigError(f"visual_share must lie in [0, 1], got {self.visual_share}")
        if self.clicks_per_user < 1:
            raise ConfigError("clicks_per_user must be >= 1")
        if self.clicks_per_user > self.n_items:
            raise ConfigError("clicks_per_user cannot exceed n_items")
        if self.feature_noise < 0:
            raise ConfigError("feature_noise must be non-negative")
        if not self.affinity_scale > 0:
            raise ConfigError("affinity_scale must be positive")
        if self.preference_weight < 0:
            raise ConfigError("preference_weight must be non-negative")
        return self


@dataclass
class GroundTruth:
    user_tokens: List[str]
    item_tokens: List[str]
    scores: np.ndarray  # (n_users, n_items) real preference

    def aligned(self, dataset: Dataset) -> np.ndarray:
        """Score matrix reindexed to ``dataset``'s dense user/item order."""
        u_idx = {t: k for k, t in enumerate(self.user_tokens)}
        i_idx = {t: k for k, t in enumerate(self.item_tokens)}
        try:
            rows = [u_idx[t] for t in dataset.user_tokens]
            cols = [i_idx[t] for t in dataset.item_tokens]
        except KeyError as exc:
            raise DataError(f"token {exc.args[0]!r} missing from ground truth") from None
        return self.scores[np.ix_(rows, cols)]


# --------------------------------------------------------------------------
# ingestion

def load_interactions(path) -> RawInteractions:
    raw = RawInteractions()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise ParseError(f"expected 2 or 3 tab-separated fields, got {len(fields)}",
                                 path, lineno)
            user, item = fields[0].strip(), fields[1].strip()
            if not user or not item:
                raise ParseError("empty user or item token", path, lineno)
            ts = None
            if len(fields) == 3:
                try:
                    ts = int(fields[2])
                except ValueError:
                    raise ParseError(f"non-integer timestamp {fields[2]!r}", path, lineno) from None
                if ts == NO_TIMESTAMP:
                    ts = None
            raw.append(user, item, ts)
    return raw


def save_interactions(path, raw: RawInteractions) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i, t in zip(raw.users, raw.items, raw.timestamps):
            if t == NO_TIMESTAMP:
                fh.write(f"{u}\t{i}\n")
            else:
                fh.write(f"{u}\t{i}\t{t}\n")


def load_visual_features(path, dim: Optional[int] = None) -> FeatureStore:
    """Read a VFT1 binary feature file, or a TSV file when ``dim`` is given."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return _load_vft1(path)
    if dim is None:
        raise FormatError(f"bad magic {head!r}; pass the feature dimension to read TSV", path)
    return _load_feature_tsv(path, dim)


def _load_vft1(path) -> FeatureStore:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", path)
    magic, dim, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path)
    if dim == 0:
        raise FormatError("feature dimension D=0", path)
    pos = _HEADER.size
    vec_bytes = 4 * dim
    tokens: List[str] = []
    vectors = np.empty((count, dim), dtype=np.float32) if count < 2**31 else None
    if vectors is None:
        raise FormatError(f"implausible record count {count}", path)
    for k in range(count):
        if pos + _TOKEN_LEN.size > len(buf):
            raise FormatError(f"truncated record {k}", path)
        (tlen,) = _TOKEN_LEN.unpack_from(buf, pos)
        pos += _TOKEN_LEN.size
        if pos + tlen + vec_bytes > len(buf):
            raise FormatError(f"truncated record {k}", path)
        try:
            tokens.append(buf[pos:pos + tlen].decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError(f"record {k}: token is not valid UTF-8", path) from None
        pos += tlen
        vectors[k] = np.frombuffer(buf, dtype="<f4", count=dim, offset=pos)
        pos += vec_bytes
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after {count} records", path)
    return FeatureStore(int(dim), tokens, vectors)


def _load_feature_tsv(path, dim: int) -> FeatureStore:
    if dim < 1:
        raise FormatError(f"feature dimension must be >= 1, got {dim}", path)
    tokens, rows = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) - 1 != dim:
                raise FormatError(f"expected {dim} values, got {len(fields) - 1}", path, lineno)
            try:
                rows.append([float(x) for x in fields[1:]])
            except ValueError:
                raise FormatError("non-numeric feature value", path, lineno) from None
            tokens.append(fields[0])
    vectors = np.asarray(rows, dtype=np.float32).reshape(len(rows), dim)
    return FeatureStore(dim, tokens, vectors)


def save_visual_features(path, store: FeatureStore) -> None:
    parts = [_HEADER.pack(MAGIC, store.dim, len(store))]
    vecs = store.vectors.astype("<f4")
    for tok, vec in zip(store.tokens, vecs):
        enc = tok.encode("utf-8")
        if len(enc) > 0xFFFF:
            raise FormatError(f"token too long for u16 length: {tok[:40]!r}...")
        parts.append(_TOKEN_LEN.pack(len(enc)))
        parts.append(enc)
        parts.append(vec.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def save_visual_features_tsv(path, store: FeatureStore) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tok, vec in zip(store.tokens, store.vectors):
            fh.write(tok + "\t" + "\t".join(repr(float(x)) for x in vec) + "\n")


def load_categories(path) -> Dict[str, str]:
    """``item<TAB>category`` lines; returns item token -> category token."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise ParseError("expected item<TAB>category", path, lineno)
            out[fields[0]] = fields[1]
    return out


def load_ground_truth(path) -> GroundTruth:
    users: Dict[str, int] = {}
    items: Dict[str, int] = {}
    triples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError("expected user<TAB>item<TAB>score", path, lineno)
            try:
                score = float(fields[2])
            except ValueError:
                raise ParseError(f"non-numeric score {fields[2]!r}", path, lineno) from None
            u = users.setdefault(fields[0], len(users))
            i = items.setdefault(fields[1], len(items))
            triples.append((u, i, score))
    scores = np.full((len(users), len(items)), np.nan)
    for u, i, s in triples:
        scores[u, i] = s
    if np.isnan(scores).any():
        raise ParseError("ground truth does not cover every user-item pair", path)
    return GroundTruth(list(users), list(items), scores)


def save_ground_truth(path, truth: GroundTruth) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, ut in enumerate(truth.user_tokens):
            # repr of a Python float round-trips exactly
            row = truth.scores[u].tolist()
            fh.write("".join(f"{ut}\t{it}\t{row[i]!r}\n"
                             for i, it in enumerate(truth.item_tokens)))


# --------------------------------------------------------------------------
# filtering and splitting

def _core_mask(users: np.ndarray, items: np.ndarray, n_users: int, n_items: int,
               min_count: int, fixpoint: bool) -> np.ndarray:
    keep = np.ones(len(users), dtype=bool)
    while True:
        changed = False
        udeg = np.bincount(users[keep], minlength=n_users)
        drop = keep & (udeg[users] < min_count)
        if drop.any():
            keep &= ~drop
            changed = True
        ideg = np.bincount(items[keep], minlength=n_items)
        drop = keep & (ideg[items] < min_count)
        if drop.any():
            keep &= ~drop
            changed = True
        if not fixpoint or not changed:
            return keep


def kcore_filter(raw: RawInteractions, store: FeatureStore, min_count: int = 5,
                 fixpoint: bool = True, categories: Optional[Dict[str, str]] = None) -> Dataset:
    """Drop featureless items, dedupe pairs, and k-core filter users and items.

    With ``fixpoint=False`` a single user pass followed by a single item pass
    is applied instead of iterating until no node has degree < ``min_count``.
    """
    has_feature = np.fromiter((it in store for it in raw.items), dtype=bool, count=len(raw))
    user_ids: Dict[str, int] = {}
    item_ids: Dict[str, int] = {}
    u = np.fromiter((user_ids.setdefault(t, len(user_ids)) for t in raw.users),
                    dtype=np.int64, count=len(raw))
    i = np.fromiter((item_ids.setdefault(t, len(item_ids)) for t in raw.items),
                    dtype=np.int64, count=len(raw))
    t = np.asarray(raw.timestamps, dtype=np.int64).reshape(-1)
    order = np.arange(len(raw))

    u, i, t, order = u[has_feature], i[has_feature], t[has_feature], order[has_feature]

    # dedupe (user, item) keeping the earliest timestamp; absent sorts last
    absent = t == NO_TIMESTAMP
    srt = np.lexsort((order, t, absent, i, u))
    u, i, t, order, absent = u[srt], i[srt], t[srt], order[srt], absent[srt]
    first = np.ones(len(u), dtype=bool)
    first[1:] = (u[1:] != u[:-1]) | (i[1:] != i[:-1])
    u, i, t, order, absent = u[first], i[first], t[first], order[first], absent[first]

    keep = _core_mask(u, i, len(user_ids), len(item_ids), min_count, fixpoint)
    u, i, t, order, absent = u[keep], i[keep], t[keep], order[keep], absent[keep]
    if len(u) == 0:
        raise SparseDatasetError(f"no interactions survive {min_count}-core filtering")

    # dense reindex in order of first appearance in the file
    user_tokens_all = list(user_ids)
    item_tokens_all = list(item_ids)
    first_seen = np.argsort(order, kind="stable")
    u_seen = _unique_in_order(u[first_seen])
    i_seen = _unique_in_order(i[first_seen])
    u_map = np.full(len(user_ids), -1, dtype=np.int64)
    u_map[u_seen] = np.arange(len(u_seen))
    i_map = np.full(len(item_ids), -1, dtype=np.int64)
    i_map[i_seen] = np.arange(len(i_seen))
    du, di = u_map[u], i_map[i]

    srt = np.lexsort((order, t, absent, du))
    du, di, t = du[srt], di[srt], t[srt]
    bounds = np.searchsorted(du, np.arange(len(u_seen) + 1))
    positives = [di[bounds[k]:bounds[k + 1]].copy() for k in range(len(u_seen))]
    stamps = [t[bounds[k]:bounds[k + 1]].copy() for k in range(len(u_seen))]

    item_tokens = [item_tokens_all[k] for k in i_seen]
    user_tokens = [user_tokens_all[k] for k in u_seen]
    cats = None
    if categories is not None:
        cat_ids: Dict[str, int] = {}
        cats = np.array([cat_ids.setdefault(categories.get(tok, ""), len(cat_ids))
                         for tok in item_tokens], dtype=np.int64)
    return Dataset(user_tokens, item_tokens, positives, stamps,
                   features=store.matrix(item_tokens), categories=cats)


def _unique_in_order(values: np.ndarray) -> np.ndarray:
    _, idx = np.unique(values, return_index=True)
    return values[np.sort(idx)]


def split_leave_one_out(dataset: Dataset, seed: int = 0, validation: bool = False) -> SplitDataset:
    """Hold out each user's latest interaction as the test target.

    Ties on the latest timestamp, and users without timestamps, are resolved
    by a uniform draw from a generator seeded with ``seed``. With
    ``validation`` the latest remaining interaction is also held out.
    """
    rng = np.random.default_rng(seed)
    n_rounds = 2 if validation else 1
    positives = [p.copy() for p in dataset.positives]
    stamps = [s.copy() for s in dataset.timestamps]
    held = [np.full(dataset.n_users, -1, dtype=np.int64) for _ in range(n_rounds)]
    for rnd in range(n_rounds):
        for u in range(dataset.n_users):
            items, ts = positives[u], stamps[u]
            if len(items) < 2:
                continue
            present = ts != NO_TIMESTAMP
            if present.any():
                cand = np.flatnonzero(present & (ts == ts[present].max()))
            else:
                cand = np.arange(len(items))
            pick = cand[rng.integers(len(cand))] if len(cand) > 1 else cand[0]
            held[rnd][u] = items[pick]
            positives[u] = np.delete(items, pick)
            stamps[u] = np.delete(ts, pick)
    train = dataset.with_positives(positives, stamps)
    return SplitDataset(train=train, test=held[0], validation=held[1] if validation else None)


def split_by_ground_truth(dataset: Dataset, truth: GroundTruth) -> SplitDataset:
    """Train on every observed click; test on each user's best unclicked item.

    The target is the argmax of the real-preference score over items the user
    never interacted with (lowest index on ties), so the evaluation measures
    recovery of real preference rather than of logged clicks.
    """
    scores = truth.aligned(dataset).copy()
    for u, items in enumerate(dataset.positives):
        scores[u, items] = -np.inf
    test = np.argmax(scores, axis=1).astype(np.int64)
    test[~np.isfinite(scores.max(axis=1))] = -1
    train = dataset.with_positives([p.copy() for p in dataset.positives],
                                   [s.copy() for s in dataset.timestamps])
    return SplitDataset(train=train, test=test)


def dataset_stats(dataset_or_counts) -> Tuple[int, int, int, float]:
    """(users, items, interactions, sparsity) with sparsity = 1 - n/(users*items)."""
    if isinstance(dataset_or_counts, Dataset):
        n_users, n_items = dataset_or_counts.n_users, dataset_or_counts.n_items
        n_inter = dataset_or_counts.n_interactions
    else:
        n_users, n_items, n_inter = (int(x) for x in dataset_or_counts)
    if n_users < 1 or n_items < 1 or n_inter < 1:
        raise DataError("dataset is empty")
    return n_users, n_items, n_inter, 1.0 - n_inter / (n_users * n_items)


# --------------------------------------------------------------------------
# synthetic planted-bias corpora

def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def generate_synthetic(spec: SyntheticSpec):
    """Draw a corpus whose clicks are driven by visual affinity alone.

    Users and items get a visual and a non-visual latent block of
    ``true_dim`` entries each. Real preference is
    ``visual_share * <p_v, q_v> + (1 - visual_share) * <p_n, q_n>``; clicks are
    sampled without replacement with probability proportional to
    ``softmax(<p_v, q_v> + preference_weight * real)`` (visual-only at the
    default weight of 0); the item feature is ``q_v`` plus Gaussian noise.

    Returns ``(raw_interactions, feature_store, ground_truth)``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    d = spec.true_dim
    # entries N(0, s^2 d^-1/2) give block affinities of standard deviation s
    scale = np.sqrt(spec.affinity_scale) * d ** -0.25
    p_vis = rng.normal(0.0, scale, (spec.n_users, d))
    p_non = rng.normal(0.0, scale, (spec.n_users, d))
    q_vis = rng.normal(0.0, scale, (spec.n_items, d))
    q_non = rng.normal(0.0, scale, (spec.n_items, d))

    visual_aff = p_vis @ q_vis.T
    real = spec.visual_share * visual_aff + (1.0 - spec.visual_share) * (p_non @ q_non.T)
    click_prob = _softmax(visual_aff + spec.preference_weight * real)

    user_tokens = [f"u{k}" for k in range(spec.n_users)]
    item_tokens = [f"i{k}" for k in range(spec.n_items)]
    raw = RawInteractions()
    for u in range(spec.n_users):
        clicked = _sample_without_replacement(rng, click_prob[u], spec.clicks_per_user)
        for step, it in enumerate(clicked):
            raw.append(user_tokens[u], item_tokens[it], step + 1)

    noise = rng.normal(0.0, 1.0, q_vis.shape) * spec.feature_noise
    store = FeatureStore(d, item_tokens, (q_vis + noise).astype(np.float32))
    truth = GroundTruth(user_tokens, item_tokens, real)
    return raw, store, truth


def _sample_without_replacement(rng, prob: np.ndarray, k: int) -> np.ndarray:
    # Gumbel top-k: equivalent to successive draws proportional to prob
    keys = np.log(np.maximum(prob, 1e-300)) + rng.gumbel(size=prob.shape)
    top = np.argpartition(-keys, k - 1)[:k]
    return top[np.argsort(-keys[top], kind="stable")]


def write_synthetic(out_dir, spec: SyntheticSpec) -> Dict[str, str]:
    """Generate and serialize a synthetic corpus; returns the written paths."""
    raw, store, truth = generate_synthetic(spec)
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "interactions": os.path.join(out_dir, "interactions.tsv"),
        "features": os.path.join(out_dir, "features.vft"),
        "ground_truth": os.path.join(out_dir, "ground_truth.tsv"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
    save_interactions(paths["interactions"], raw)
    save_visual_features(paths["features"], store)
    save_ground_truth(paths["ground_truth"], truth)
    try:
        n_u, n_i, n_x, sparsity = dataset_stats(kcore_filter(raw, store))
        filtered = {"n_users": n_u, "n_items": n_i, "n_interactions": n_x,
                    "sparsity": sparsity}
    except SparseDatasetError:
        filtered = None
    manifest = {"spec": {k: getattr(spec, k) for k in spec.__dataclass_fields__},
                "filtered": filtered,
                "files": {k: os.path.basename(v) for k, v in paths.items() if k != "manifest"}}
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
