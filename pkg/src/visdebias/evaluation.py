"""Full-item ranking metrics (MRR, NDCG@k, HR@k) for single held-out targets."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .core import ModelKind
from .exceptions import DataError, ProtocolError

Scorer = Callable[[int], np.ndarray]


@dataclass
class EvalReport:
    mrr: float
    ndcg_at_k: float
    hr_at_k: float
    k: int
    n_users_evaluated: int
    model: Optional[str] = None
    lambda2: Optional[float] = None
    ci: bool = False
    seed: Optional[int] = None
    elapsed_seconds: float = 0.0
    exclude_train_positives: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, with_timing: bool = True) -> str:
        d = self.to_dict()
        if not with_timing:
            d.pop("elapsed_seconds")
        return json.dumps(d, sort_keys=True)


def _rank(scores: np.ndarray, target: int, mask: Optional[np.ndarray]) -> int:
    s_t = scores[target]
    if mask is None:
        better = scores > s_t
        tied = scores == s_t
    else:
        better = (scores > s_t) & mask
        tied = (scores == s_t) & mask
    # ties go to the lower item index
    return 1 + int(np.count_nonzero(better)) + int(np.count_nonzero(tied[:target]))


def rank_of_target(scorer, u: int, target_item: int, candidates=None) -> int:
    """1-based rank of ``target_item`` among ``candidates`` under ``scorer(u)``.

    ``candidates`` is a sequence of item indices or a boolean mask; None means
    every item.
    """
    scores = np.asarray(scorer(u) if callable(scorer) else scorer, dtype=np.float64)
    mask = None
    if candidates is not None:
        cand = np.asarray(candidates)
        if cand.dtype == bool:
            mask = cand
        else:
            mask = np.zeros(len(scores), dtype=bool)
            mask[cand] = True
        if not mask[target_item]:
            raise ProtocolError(f"target item {target_item} is not among the candidates")
    return _rank(scores, int(target_item), mask)


def metrics_from_rank(rank: int, k: int):
    """(reciprocal rank, NDCG@k, HR@k) for one relevant item at ``rank``."""
    if rank < 1 or k < 1:
        raise ValueError("rank and k must be >= 1")
    hit = rank <= k
    return 1.0 / rank, (1.0 / math.log2(rank + 1) if hit else 0.0), (1.0 if hit else 0.0)


def evaluate(scorer: Scorer, split, store=None, k: int = 50,
             exclude_train_positives: bool = True, **meta) -> EvalReport:
    """Average per-user metrics of the held-out targets over all test users.

    ``scorer(u)`` returns the scores of every item for user ``u``. ``store``
    is accepted for symmetry with the training call and unused here.
    """
    start = time.perf_counter()
    train, test = split.train, split.test
    users = np.flatnonzero(test >= 0)
    if len(users) == 0:
        raise DataError("no test targets to evaluate")
    rr_sum = ndcg_sum = hr_sum = 0.0
    mask = np.ones(train.n_items, dtype=bool)
    for u in users:
        scores = np.asarray(scorer(int(u)), dtype=np.float64)
        target = int(test[u])
        if exclude_train_positives:
            seen = train.positives[u]
            mask[seen] = False
            mask[target] = True
            rank = _rank(scores, target, mask)
            mask[seen] = True
        else:
            rank = _rank(scores, target, None)
        rr, ndcg, hr = metrics_from_rank(rank, k)
        rr_sum += rr
        ndcg_sum += ndcg
        hr_sum += hr
    n = len(users)
    return EvalReport(mrr=rr_sum / n, ndcg_at_k=ndcg_sum / n, hr_at_k=hr_sum / n, k=k,
                      n_users_evaluated=n, exclude_train_positives=exclude_train_positives,
                      elapsed_seconds=time.perf_counter() - start, **meta)


class _MatrixScorer:
    """Scores users in blocks and serves them one row at a time."""

    def __init__(self, fn, n_users: int, block: int = 256):
        self.fn = fn
        self.n_users = n_users
        self.block = block
        self._lo = -1
        self._rows = None

    def __call__(self, u: int) -> np.ndarray:
        lo = (u // self.block) * self.block
        if lo != self._lo:
            users = np.arange(lo, min(lo + self.block, self.n_users))
            self._rows = self.fn(users)
            self._lo = lo
        return self._rows[u - lo]


def make_scorer(kind, params, features=None, categories=None, *, ci: bool = False,
                refs=None, lambda2: float = 1.0, fusion: str = "product") -> Scorer:
    """Per-user scorer over all items, biased or (``ci``) debiased."""
    from .causal import debiased_score_matrix
    from .models import score_matrix

    kind = ModelKind.parse(kind)
    if ci:
        if not kind.has_debiased_scorer:
            raise ProtocolError(f"{kind.value} has no debiased (CI) scorer")
        if refs is None:
            raise ProtocolError("debiased scoring needs reference values")
        fn = lambda users: debiased_score_matrix(kind, params, users, features, refs,
                                                 lambda2, fusion)
    else:
        fn = lambda users: score_matrix(kind, params, users, features, categories, fusion)
    return _MatrixScorer(fn, params.n_users)
