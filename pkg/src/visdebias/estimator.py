"""scikit-learn style front end over the training and scoring functions."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .causal import reference_values
from .core import ModelKind, TrainConfig
from .data import NO_TIMESTAMP, Dataset, SplitDataset
from .evaluation import evaluate, make_scorer
from .exceptions import ConfigError, ProtocolError
from .training import train
from .validation import check_categories, check_features, check_interactions, check_users


def interactions_to_dataset(X, n_users: Optional[int] = None, n_items: Optional[int] = None,
                            features=None, categories=None) -> Dataset:
    """Build a Dataset from (user, item) index pairs, dropping repeated pairs."""
    if n_items is None and features is not None:
        n_items = features.shape[0]
    X = check_interactions(X, n_items)
    n_users = int(X[:, 0].max()) + 1 if n_users is None else int(n_users)
    if n_items is None:
        n_items = int(X[:, 1].max()) + 1
    if X[:, 0].max() >= n_users:
        raise ConfigError(f"user index {int(X[:, 0].max())} out of range for {n_users} users")
    positives = [[] for _ in range(n_users)]
    seen = set()
    for u, i in X:
        if (u, i) not in seen:
            seen.add((u, i))
            positives[u].append(i)
    positives = [np.asarray(p, dtype=np.int64) for p in positives]
    stamps = [np.full(len(p), NO_TIMESTAMP, dtype=np.int64) for p in positives]
    return Dataset([str(u) for u in range(n_users)], [str(i) for i in range(n_items)],
                   positives, stamps, features, categories)


class VisualRecommender(BaseEstimator):
    """Pairwise-ranking recommender with optional visual-bias removal.

    Parameters mirror :class:`~visdebias.core.TrainConfig`. ``model`` is one
    of MF, VBPR, DeepStyle, AMR, DVBPR or CausalRec. With ``debias=True``
    scores come from the model's debiased (total indirect effect) scorer,
    weighted by ``lambda2`` for CausalRec.

    ``fit`` takes ``X`` as an (n, 2) array of (user, item) indices and the
    item feature matrix as ``features``. After fitting, ``params_``,
    ``history_`` and ``references_`` hold the learned tables, the per-epoch
    loss and the no-treatment reference values.
    """

    def __init__(self, model: str = "CausalRec", embedding_dim: int = 32,
                 learning_rate: float = 0.001, batch_size: int = 100, epochs: int = 100,
                 lambda1: float = 0.01, lambda2: float = 1.0, fusion: str = "product",
                 multitask: bool = True, amr_epsilon: float = 0.5,
                 reference_mode: str = "mean", debias: bool = False, random_state: int = 0):
        self.model = model
        self.embedding_dim = embedding_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.fusion = fusion
        self.multitask = multitask
        self.amr_epsilon = amr_epsilon
        self.reference_mode = reference_mode
        self.debias = debias
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            embedding_dim=self.embedding_dim, learning_rate=self.learning_rate,
            batch_size=self.batch_size, epochs=self.epochs, lambda1=self.lambda1,
            lambda2=self.lambda2, fusion=self.fusion, multitask=self.multitask,
            amr_epsilon=self.amr_epsilon, reference_mode=self.reference_mode,
            seed=int(self.random_state),
        ).validate()

    def fit(self, X, y=None, *, features=None, categories=None, n_users=None):
        kind = ModelKind.parse(self.model)
        config = self._config()
        if self.debias and not kind.has_debiased_scorer:
            raise ProtocolError(f"{kind.value} has no debiased scorer")
        if features is not None:
            features = check_features(features)
        elif kind.has_visual:
            raise ConfigError(f"{kind.value} needs item features")
        dataset = interactions_to_dataset(X, n_users=n_users, features=features)
        if categories is not None:
            dataset.categories = check_categories(categories, dataset.n_items)

        self.params_, self.history_ = train(kind, dataset, config=config)
        self.kind_ = kind
        self.dataset_ = dataset
        self.n_users_ = dataset.n_users
        self.n_items_ = dataset.n_items
        self.references_ = (reference_values(self.params_, dataset, mode=config.reference_mode)
                            if kind.has_debiased_scorer else None)
        return self

    def _scorer(self):
        return make_scorer(self.kind_, self.params_, self.dataset_.features,
                           self.dataset_.categories, ci=self.debias, refs=self.references_,
                           lambda2=self.lambda2, fusion=self.fusion)

    def decision_function(self, users) -> np.ndarray:
        """Scores of ``users`` against every item, shape (len(users), n_items)."""
        check_is_fitted(self, "params_")
        users = check_users(users, self.n_users_)
        scorer = self._scorer()
        return np.vstack([scorer(int(u)) for u in users]) if len(users) else \
            np.empty((0, self.n_items_))

    def predict(self, users, k: int = 10, exclude_seen: bool = True) -> np.ndarray:
        """Top-``k`` item indices per user, best first (ties to the lower index)."""
        scores = self.decision_function(users)
        users = check_users(users, self.n_users_)
        if exclude_seen:
            for row, u in enumerate(users):
                scores[row, self.dataset_.positives[u]] = -np.inf
        k = min(int(k), self.n_items_)
        # stable sort on negated scores keeps lower indices first among ties
        return np.argsort(-scores, axis=1, kind="stable")[:, :k]

    def score(self, X, y=None, k: int = 50) -> float:
        """Mean reciprocal rank of held-out (user, item) pairs, one per user.

        When a user appears several times only the last pair is used.
        """
        check_is_fitted(self, "params_")
        X = check_interactions(X, self.n_items_)
        check_users(X[:, 0], self.n_users_)
        test = np.full(self.n_users_, -1, dtype=np.int64)
        test[X[:, 0]] = X[:, 1]
        report = evaluate(self._scorer(), SplitDataset(self.dataset_, test), k=k)
        return report.mrr
