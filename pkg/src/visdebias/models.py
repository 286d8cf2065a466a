"""Score functions of the six recommenders.

Scalar functions mirror the model definitions one user-item pair at a time;
``score_matrix`` evaluates the same formulas for a block of users against
every item and is what ranking uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ModelKind, ParamSet
from .exceptions import ConfigError, DataError, ShapeError


def sigmoid(x):
    """Logistic function, branch-wise so neither exp() can overflow."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CausalFactors:
    m_iu: float
    m_ivu: float
    n_vu: float

    def as_tuple(self):
        return (self.m_iu, self.m_ivu, self.n_vu)


def _feature(feature) -> np.ndarray:
    if feature is None:
        raise DataError("item has no visual feature")
    return np.asarray(feature, dtype=np.float64)


def _scalar(params: ParamSet, name: str, index=None) -> float:
    arr = getattr(params, name)
    if arr is None:
        return 0.0
    return float(arr if index is None else arr[index])


def project_visual(params: ParamSet, feature) -> np.ndarray:
    f = _feature(feature)
    E = params.E if isinstance(params, ParamSet) else np.asarray(params, dtype=np.float64)
    if E is None:
        raise ConfigError("model has no visual projection")
    if f.shape[-1] != E.shape[1]:
        raise ShapeError(f"feature has dimension {f.shape[-1]}, projection expects {E.shape[1]}")
    return f @ E.T


def score_mf(params: ParamSet, u: int, i: int) -> float:
    return (_scalar(params, "alpha") + _scalar(params, "beta_u", u) + _scalar(params, "beta_i", i)
            + float(params.gamma_u[u] @ params.gamma_i[i]))


def score_vbpr(params: ParamSet, u: int, i: int, feature) -> float:
    return score_mf(params, u, i) + float(params.theta_u[u] @ project_visual(params, feature))


def score_deepstyle(params: ParamSet, u: int, i: int, feature, category: int = 0) -> float:
    style = project_visual(params, feature)
    if params.c is not None:
        style = style - params.c[category]
    return float(params.gamma_u[u] @ (style + params.gamma_i[i]))


def score_amr(params: ParamSet, u: int, i: int, feature, delta=None) -> float:
    # the adversary perturbs the raw feature; clean scoring when delta is None
    f = _feature(feature)
    if delta is not None:
        f = f + np.asarray(delta, dtype=np.float64)
    return float(params.gamma_u[u] @ (project_visual(params, f) + params.gamma_i[i]))


def score_dvbpr(params: ParamSet, u: int, feature) -> float:
    return (_scalar(params, "alpha") + _scalar(params, "beta_u", u)
            + float(params.theta_u[u] @ project_visual(params, feature)))


def causalrec_factors(params: ParamSet, u: int, i: int, feature) -> CausalFactors:
    v = project_visual(params, feature)
    gu, gi = params.gamma_u[u], params.gamma_i[i]
    return CausalFactors(m_iu=sigmoid(gu @ gi),
                         m_ivu=sigmoid(gu @ (gi * v)),
                         n_vu=sigmoid(params.theta_u[u] @ v))


def fuse(m_iu, m_ivu, n_vu, fusion: str = "product"):
    if fusion == "product":
        return m_iu * m_ivu * n_vu
    if fusion == "sum":
        return m_iu + m_ivu + n_vu
    raise ConfigError(f"unknown fusion {fusion!r}")


def fuse_match(m_iu, m_ivu, fusion: str = "product"):
    """The match branch alone, combined the same way as the full fusion."""
    if fusion == "product":
        return m_iu * m_ivu
    if fusion == "sum":
        return m_iu + m_ivu
    raise ConfigError(f"unknown fusion {fusion!r}")


def score_causalrec(factors: CausalFactors, fusion: str = "product") -> float:
    return float(fuse(factors.m_iu, factors.m_ivu, factors.n_vu, fusion))


def score(kind, params: ParamSet, u: int, i: int, feature=None, category: int = 0,
          fusion: str = "product") -> float:
    """Dispatch to the biased score function of ``kind``."""
    kind = ModelKind.parse(kind)
    if kind is ModelKind.MF:
        return score_mf(params, u, i)
    if kind is ModelKind.VBPR:
        return score_vbpr(params, u, i, feature)
    if kind is ModelKind.DEEPSTYLE:
        return score_deepstyle(params, u, i, feature, category)
    if kind is ModelKind.AMR:
        return score_amr(params, u, i, feature)
    if kind is ModelKind.DVBPR:
        return score_dvbpr(params, u, feature)
    return score_causalrec(causalrec_factors(params, u, i, feature), fusion)


# --------------------------------------------------------------------------
# vectorized: users x all items

def causalrec_factor_matrix(params: ParamSet, users, features: np.ndarray):
    users = np.atleast_1d(np.asarray(users, dtype=np.int64))
    V = project_visual(params, features)                    # (n_items, K)
    gu = params.gamma_u[users]                              # (B, K)
    m_iu = sigmoid(gu @ params.gamma_i.T)
    m_ivu = sigmoid(gu @ (params.gamma_i * V).T)
    n_vu = sigmoid(params.theta_u[users] @ V.T)
    return m_iu, m_ivu, n_vu


def score_matrix(kind, params: ParamSet, users, features: Optional[np.ndarray] = None,
                 categories: Optional[np.ndarray] = None, fusion: str = "product") -> np.ndarray:
    """Biased scores of ``users`` (B,) against every item, shape (B, n_items)."""
    kind = ModelKind.parse(kind)
    users = np.atleast_1d(np.asarray(users, dtype=np.int64))
    if kind is ModelKind.CAUSALREC:
        return fuse(*causalrec_factor_matrix(params, users, features), fusion)
    if kind.has_visual and features is None:
        raise DataError(f"{kind.value} needs item features")

    if kind in (ModelKind.MF, ModelKind.VBPR, ModelKind.DVBPR):
        out = np.full((len(users), features.shape[0] if params.gamma_i is None
                       else params.gamma_i.shape[0]), float(params.alpha))
        out += params.beta_u[users][:, None]
        if params.beta_i is not None:
            out += params.beta_i[None, :]
            out += params.gamma_u[users] @ params.gamma_i.T
        if kind is not ModelKind.MF:
            out += params.theta_u[users] @ project_visual(params, features).T
        return out

    item_side = project_visual(params, features) + params.gamma_i
    if kind is ModelKind.DEEPSTYLE and params.c is not None:
        cats = np.zeros(item_side.shape[0], dtype=np.int64) if categories is None else categories
        item_side = item_side - params.c[cats]
    return params.gamma_u[users] @ item_side.T
