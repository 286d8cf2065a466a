"""Counterfactual effects and debiased (total-indirect-effect) scoring.

Every model's score is viewed as an outcome ``Y(item branch, notice branch)``.
The item branch carries what the item identity contributes (bias, latent
vector and, for CausalRec's visual match, the feature it is matched with); the
notice branch carries the visual feature as the user sees it (for DeepStyle
that includes the category offset, for AMR the perturbed feature). Setting a
branch to its no-treatment value swaps in the population reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ModelKind, ParamSet
from .exceptions import DataError, ProtocolError
from .models import fuse, project_visual, sigmoid


@dataclass
class ReferenceSet:
    """No-treatment values: the reference item i* and feature v*."""

    beta_ref: float
    gamma_ref: np.ndarray
    feature_ref: np.ndarray
    c_ref: np.ndarray
    mode: str = "mean"


@dataclass
class _ItemBranch:
    beta: float
    gamma: np.ndarray
    match_feature: Optional[np.ndarray]


@dataclass
class _NoticeBranch:
    feature: Optional[np.ndarray]
    c: Optional[np.ndarray]


def reference_values(params: ParamSet, dataset=None, store=None, mode: str = "mean") -> ReferenceSet:
    """Build the no-treatment references from the current parameters.

    ``store`` may be a FeatureStore, an aligned (n_items, D) matrix, or None
    to use ``dataset.features``.
    """
    K = params.gamma_u.shape[1] if params.gamma_u is not None else params.theta_u.shape[1]
    D = params.E.shape[1] if params.E is not None else None
    features = _aligned_features(dataset, store)
    if mode == "zero":
        return ReferenceSet(0.0, np.zeros(K), np.zeros(D or 0), np.zeros(K), "zero")
    if mode != "mean":
        raise ValueError(f"unknown reference mode {mode!r}")
    n_items = _n_items(params, dataset, features)
    if n_items == 0:
        raise DataError("cannot build references over an empty item set")
    beta_ref = float(params.beta_i.mean()) if params.beta_i is not None else 0.0
    gamma_ref = params.gamma_i.mean(axis=0) if params.gamma_i is not None else np.zeros(K)
    if features is not None:
        feature_ref = features.mean(axis=0)
    else:
        feature_ref = np.zeros(D or 0)
    c_ref = params.c.mean(axis=0) if params.c is not None else np.zeros(K)
    return ReferenceSet(beta_ref, gamma_ref, feature_ref, c_ref, "mean")


def _aligned_features(dataset, store):
    if store is None:
        return None if dataset is None else getattr(dataset, "features", None)
    if isinstance(store, np.ndarray):
        return store.astype(np.float64, copy=False)
    if dataset is not None:
        return store.matrix(dataset.item_tokens)
    return np.asarray(store.vectors, dtype=np.float64)


def _n_items(params, dataset, features):
    if dataset is not None:
        return dataset.n_items
    if features is not None:
        return features.shape[0]
    return params.n_items


# --------------------------------------------------------------------------

def _outcome(kind: ModelKind, params: ParamSet, u: int, item: _ItemBranch,
             notice: _NoticeBranch, fusion: str = "product") -> float:
    if kind is ModelKind.MF:
        return (float(params.alpha) + float(params.beta_u[u]) + item.beta
                + float(params.gamma_u[u] @ item.gamma))
    if kind is ModelKind.DVBPR:
        return (float(params.alpha) + float(params.beta_u[u])
                + float(params.theta_u[u] @ project_visual(params, notice.feature)))
    if kind is ModelKind.VBPR:
        return (float(params.alpha) + float(params.beta_u[u]) + item.beta
                + float(params.gamma_u[u] @ item.gamma)
                + float(params.theta_u[u] @ project_visual(params, notice.feature)))
    if kind in (ModelKind.DEEPSTYLE, ModelKind.AMR):
        style = project_visual(params, notice.feature)
        if notice.c is not None:
            style = style - notice.c
        return float(params.gamma_u[u] @ (style + item.gamma))
    gu = params.gamma_u[u]
    m_iu = sigmoid(gu @ item.gamma)
    m_ivu = sigmoid(gu @ (item.gamma * project_visual(params, item.match_feature)))
    n_vu = sigmoid(params.theta_u[u] @ project_visual(params, notice.feature))
    return float(fuse(m_iu, m_ivu, n_vu, fusion))


def _treated(kind, params, u, i, feature, category, delta):
    feature = None if feature is None else np.asarray(feature, dtype=np.float64)
    item = _ItemBranch(
        beta=float(params.beta_i[i]) if params.beta_i is not None else 0.0,
        gamma=params.gamma_i[i] if params.gamma_i is not None else None,
        match_feature=feature,
    )
    seen = feature
    if kind is ModelKind.AMR and delta is not None and feature is not None:
        seen = feature + np.asarray(delta, dtype=np.float64)
    c = params.c[category] if (kind is ModelKind.DEEPSTYLE and params.c is not None) else None
    return item, _NoticeBranch(seen, c)


def _reference(kind, params, refs: ReferenceSet):
    item = _ItemBranch(beta=refs.beta_ref, gamma=refs.gamma_ref, match_feature=refs.feature_ref)
    c = refs.c_ref if (kind is ModelKind.DEEPSTYLE and params.c is not None) else None
    return item, _NoticeBranch(refs.feature_ref, c)


def _check_feature(kind, feature):
    if kind.has_visual and feature is None:
        raise DataError(f"{kind.value} needs the item's visual feature")


def total_effect(kind, params: ParamSet, u: int, i: int, feature, refs: ReferenceSet,
                 category: int = 0, delta=None, fusion: str = "product") -> float:
    """Y(i, v, u) - Y(i*, v*, u)."""
    kind = ModelKind.parse(kind)
    _check_feature(kind, feature)
    item, notice = _treated(kind, params, u, i, feature, category, delta)
    item_ref, notice_ref = _reference(kind, params, refs)
    return (_outcome(kind, params, u, item, notice, fusion)
            - _outcome(kind, params, u, item_ref, notice_ref, fusion))


def natural_direct_effect(kind, params: ParamSet, u: int, i: int, feature, refs: ReferenceSet,
                          category: int = 0, delta=None, fusion: str = "product") -> float:
    """Y(i*, v, u) - Y(i*, v*, u): only the visual-notice branch is toggled."""
    kind = ModelKind.parse(kind)
    _check_feature(kind, feature)
    _, notice = _treated(kind, params, u, i, feature, category, delta)
    item_ref, notice_ref = _reference(kind, params, refs)
    return (_outcome(kind, params, u, item_ref, notice, fusion)
            - _outcome(kind, params, u, item_ref, notice_ref, fusion))


def total_indirect_effect(kind, params: ParamSet, u: int, i: int, feature, refs: ReferenceSet,
                          category: int = 0, delta=None, fusion: str = "product") -> float:
    """Y(i, v, u) - Y(i*, v, u), evaluated directly rather than as TE - NDE."""
    kind = ModelKind.parse(kind)
    _check_feature(kind, feature)
    item, notice = _treated(kind, params, u, i, feature, category, delta)
    item_ref, _ = _reference(kind, params, refs)
    return (_outcome(kind, params, u, item, notice, fusion)
            - _outcome(kind, params, u, item_ref, notice, fusion))


def debiased_score_vbpr(params: ParamSet, u: int, i: int, refs: ReferenceSet) -> float:
    return (float(params.beta_i[i]) - refs.beta_ref
            + float(params.gamma_u[u] @ (params.gamma_i[i] - refs.gamma_ref)))


def debiased_score_amr(params: ParamSet, u: int, i: int, refs: ReferenceSet) -> float:
    # also DeepStyle: the visual term and the category offset stay at treatment and cancel
    return float(params.gamma_u[u] @ (params.gamma_i[i] - refs.gamma_ref))


def debiased_score_causalrec(params: ParamSet, u: int, i: int, feature, refs: ReferenceSet,
                             lambda2: float = 1.0, fusion: str = "product") -> float:
    if lambda2 < 0:
        raise ValueError("lambda2 must be non-negative")
    item, notice = _treated(ModelKind.CAUSALREC, params, u, i, feature, 0, None)
    item_ref, _ = _reference(ModelKind.CAUSALREC, params, refs)
    biased = _outcome(ModelKind.CAUSALREC, params, u, item, notice, fusion)
    counterfactual = _outcome(ModelKind.CAUSALREC, params, u, item_ref, notice, fusion)
    return biased - lambda2 * counterfactual


def debiased_score(kind, params: ParamSet, u: int, i: int, feature, refs: ReferenceSet,
                   lambda2: float = 1.0, fusion: str = "product") -> float:
    kind = ModelKind.parse(kind)
    if kind is ModelKind.VBPR:
        return debiased_score_vbpr(params, u, i, refs)
    if kind in (ModelKind.AMR, ModelKind.DEEPSTYLE):
        return debiased_score_amr(params, u, i, refs)
    if kind is ModelKind.CAUSALREC:
        return debiased_score_causalrec(params, u, i, feature, refs, lambda2, fusion)
    raise ProtocolError(f"{kind.value} has no debiased scorer")


def debiased_score_matrix(kind, params: ParamSet, users, features: Optional[np.ndarray],
                          refs: ReferenceSet, lambda2: float = 1.0,
                          fusion: str = "product") -> np.ndarray:
    """Debiased scores of ``users`` against every item, shape (B, n_items)."""
    kind = ModelKind.parse(kind)
    users = np.atleast_1d(np.asarray(users, dtype=np.int64))
    if kind is ModelKind.VBPR:
        return ((params.beta_i - refs.beta_ref)[None, :]
                + params.gamma_u[users] @ (params.gamma_i - refs.gamma_ref).T)
    if kind in (ModelKind.AMR, ModelKind.DEEPSTYLE):
        return params.gamma_u[users] @ (params.gamma_i - refs.gamma_ref).T
    if kind is ModelKind.CAUSALREC:
        if lambda2 < 0:
            raise ValueError("lambda2 must be non-negative")
        gu = params.gamma_u[users]
        V = project_visual(params, features)
        m_iu = sigmoid(gu @ params.gamma_i.T)
        m_ivu = sigmoid(gu @ (params.gamma_i * V).T)
        n_vu = sigmoid(params.theta_u[users] @ V.T)
        v_ref = project_visual(params, refs.feature_ref)
        # reference match factors depend on the user only
        m_ref = sigmoid(gu @ refs.gamma_ref)[:, None]
        mv_ref = sigmoid(gu @ (refs.gamma_ref * v_ref))[:, None]
        return fuse(m_iu, m_ivu, n_vu, fusion) - lambda2 * fuse(m_ref, mv_ref, n_vu, fusion)
    raise ProtocolError(f"{kind.value} has no debiased scorer")
