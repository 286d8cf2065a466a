"""Model kinds, training configuration and parameter tables."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .exceptions import ConfigError


class ModelKind(str, enum.Enum):
    MF = "MF"
    VBPR = "VBPR"
    DEEPSTYLE = "DeepStyle"
    AMR = "AMR"
    DVBPR = "DVBPR"
    CAUSALREC = "CausalRec"

    @classmethod
    def parse(cls, name) -> "ModelKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        # BPR-MF is the usual name for the plain factorization baseline
        if key in ("bpr", "bpr-mf", "bprmf"):
            return cls.MF
        raise ConfigError(f"unknown model kind {name!r}; expected one of "
                          f"{[k.value for k in cls]}")

    @property
    def has_visual(self) -> bool:
        return self is not ModelKind.MF

    @property
    def has_debiased_scorer(self) -> bool:
        return self in (ModelKind.VBPR, ModelKind.DEEPSTYLE, ModelKind.AMR,
                        ModelKind.CAUSALREC)


# Tables allocated per model kind. delta is the AMR adversary, never part of Theta.
ALLOCATION = {
    ModelKind.MF: ("alpha", "beta_u", "beta_i", "gamma_u", "gamma_i"),
    ModelKind.VBPR: ("alpha", "beta_u", "beta_i", "gamma_u", "gamma_i", "theta_u", "E"),
    ModelKind.DEEPSTYLE: ("gamma_u", "gamma_i", "E", "c"),
    ModelKind.AMR: ("gamma_u", "gamma_i", "E", "delta"),
    ModelKind.DVBPR: ("alpha", "beta_u", "theta_u", "E"),
    ModelKind.CAUSALREC: ("gamma_u", "gamma_i", "theta_u", "E"),
}

TABLE_ORDER = ("alpha", "beta_u", "beta_i", "gamma_u", "gamma_i", "theta_u", "E", "c", "delta")
NON_TRAINABLE = frozenset({"delta"})

LAMBDA1_GRID = (0.1, 0.05, 0.01, 0.005)
LAMBDA2_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2)
LEARNING_RATE_GRID = (0.01, 0.001, 0.0001)


@dataclass
class TrainConfig:
    embedding_dim: int = 32
    visual_dim: Optional[int] = None
    learning_rate: float = 0.001
    batch_size: int = 100
    epochs: int = 100
    lambda1: float = 0.01
    lambda2: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    reference_mode: str = "mean"
    fusion: str = "product"
    multitask: bool = True
    # count lambda1*||Theta||^2 once per multitask term instead of once overall
    multitask_l2_per_term: bool = False
    amr_epsilon: float = 0.5
    exclude_train_positives: bool = True

    def validate(self) -> "TrainConfig":
        if int(self.embedding_dim) < 1:
            raise ConfigError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if self.visual_dim is not None and int(self.visual_dim) < 1:
            raise ConfigError(f"visual_dim must be >= 1, got {self.visual_dim}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if int(self.epochs) < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be non-negative")
        for name in ("adam_beta1", "adam_beta2"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be positive")
        if self.reference_mode not in ("mean", "zero"):
            raise ConfigError(f"reference_mode must be 'mean' or 'zero', got {self.reference_mode!r}")
        if self.fusion not in ("product", "sum"):
            raise ConfigError(f"fusion must be 'product' or 'sum', got {self.fusion!r}")
        if self.amr_epsilon < 0:
            raise ConfigError("amr_epsilon must be non-negative")
        return self

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ParamSet:
    """Every trainable symbol of one model; unused tables stay ``None``.

    Scalars such as ``alpha`` are stored as 0-d float64 arrays so all tables
    can be updated in place by the optimizer.
    """

    kind: ModelKind
    alpha: Optional[np.ndarray] = None
    beta_u: Optional[np.ndarray] = None
    beta_i: Optional[np.ndarray] = None
    gamma_u: Optional[np.ndarray] = None
    gamma_i: Optional[np.ndarray] = None
    theta_u: Optional[np.ndarray] = None
    E: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    delta: Optional[np.ndarray] = None
    frozen: frozenset = field(default_factory=frozenset)

    def tables(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TABLE_ORDER
                if getattr(self, name) is not None}

    def trainable(self) -> Dict[str, np.ndarray]:
        return {name: arr for name, arr in self.tables().items()
                if name not in NON_TRAINABLE and name not in self.frozen}

    def theta(self) -> Dict[str, np.ndarray]:
        """Tables that make up Theta for the l2 penalty."""
        return {name: arr for name, arr in self.tables().items() if name not in NON_TRAINABLE}

    def copy(self) -> "ParamSet":
        out = dataclasses.replace(self)
        for name, arr in self.tables().items():
            setattr(out, name, arr.copy())
        return out

    @property
    def n_users(self) -> int:
        for name in ("beta_u", "gamma_u", "theta_u"):
            arr = getattr(self, name)
            if arr is not None:
                return arr.shape[0]
        raise AttributeError("no user table allocated")

    @property
    def n_items(self) -> int:
        for name in ("beta_i", "gamma_i", "delta"):
            arr = getattr(self, name)
            if arr is not None:
                return arr.shape[0]
        raise AttributeError("no item table allocated")

    def equals(self, other: "ParamSet") -> bool:
        """Bitwise equality of kind and all tables."""
        if self.kind != other.kind or self.frozen != other.frozen:
            return False
        a, b = self.tables(), other.tables()
        if a.keys() != b.keys():
            return False
        return all(a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a)


def _shape(name: str, kind: ModelKind, K: int, D: Optional[int],
           n_users: int, n_items: int, n_categories: int):
    if name == "alpha":
        return ()
    if name == "beta_u":
        return (n_users,)
    if name == "beta_i":
        return (n_items,)
    if name in ("gamma_u", "theta_u"):
        return (n_users, K)
    if name == "gamma_i":
        return (n_items, K)
    if name == "E":
        return (K, D)
    if name == "c":
        return (n_categories, K)
    if name == "delta":
        return (n_items, D)
    raise KeyError(name)


def init_params(kind, config: TrainConfig, n_users: int, n_items: int,
                n_categories: int = 1, init_std: float = 0.01) -> ParamSet:
    """Allocate the tables ``kind`` uses.

    Biases, ``alpha`` and the adversary start at zero; factors are drawn from
    N(0, init_std^2) in ``TABLE_ORDER`` from a generator seeded by
    ``config.seed``.
    """
    kind = ModelKind.parse(kind)
    config.validate()
    if n_users < 1 or n_items < 1:
        raise ConfigError(f"need at least one user and one item, got {n_users} users, {n_items} items")
    if n_categories < 1:
        raise ConfigError("n_categories must be >= 1")
    names = ALLOCATION[kind]
    K = int(config.embedding_dim)
    D = config.visual_dim
    if D is None and ("E" in names or "delta" in names):
        raise ConfigError(f"{kind.value} needs visual_dim")
    rng = np.random.default_rng(config.seed)
    params = ParamSet(kind=kind)
    for name in TABLE_ORDER:
        if name not in names:
            continue
        shape = _shape(name, kind, K, D, n_users, n_items, n_categories)
        if name in ("alpha", "beta_u", "beta_i", "delta"):
            arr = np.zeros(shape, dtype=np.float64)
        else:
            arr = rng.normal(0.0, init_std, size=shape)
        setattr(params, name, arr)
    return params


def param_l2(params) -> float:
    """Sum of squares over Theta (every trainable table, the adversary excluded)."""
    if isinstance(params, ParamSet):
        tables = params.theta().values()
    elif isinstance(params, dict):
        tables = params.values()
    else:
        tables = [params]
    total = 0.0
    for arr in tables:
        arr = np.asarray(arr, dtype=np.float64)
        total += float(np.dot(arr.ravel(), arr.ravel()))
    return total
