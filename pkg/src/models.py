"""
Data models for the FedGCV simulator
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import ValidationError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class WeightRule(str, Enum):
    BY_NODE_COUNT = "by_node_count"
    UNIFORM = "uniform"


class OptimizerName(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


class IsolatedNodePolicy(str, Enum):
    ZERO = "zero"      # D^{-1/2} entry set to 0, row of L_norm becomes e_i
    REJECT = "reject"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Variant(str, Enum):
    FULL = "full"
    NO_GRU = "no_gru"
    NO_VIRTUAL = "no_virtual"


class Phase(str, Enum):
    TRAIN = "train"
    UNLEARN = "unlearn"
    REPAIR = "repair"
    RETRAIN = "retrain"
    ABLATION = "ablation"
    SWEEP = "sweep"


PHASE_ORDER = [Phase.TRAIN, Phase.UNLEARN, Phase.REPAIR, Phase.RETRAIN, Phase.ABLATION, Phase.SWEEP]


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected simple graph with a symmetric 0/1 CSR adjacency"""
    n: int
    edges: np.ndarray  # (m, 2) int64, u < v, sorted lexicographically
    adjacency: sp.csr_matrix

    @classmethod
    def from_edges(cls, n: int, edges) -> "SparseGraph":
        """
        Build a graph from an edge list, symmetrizing and deduplicating.

        Self-loops are dropped (they only exist in A + I).
        """
        if n < 1:
            raise ValidationError(f"node count must be >= 1, got {n}")

        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValidationError(f"edge endpoint outside [0, {n})")

        loops = arr[:, 0] == arr[:, 1]
        if loops.any():
            logger.warning(f"Dropping {int(loops.sum())} self-loops")
            arr = arr[~loops]

        if arr.size:
            lo = np.minimum(arr[:, 0], arr[:, 1])
            hi = np.maximum(arr[:, 0], arr[:, 1])
            pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
            if len(pairs) < len(arr):
                logger.debug(f"Merged {len(arr) - len(pairs)} duplicate or mirrored edges")
        else:
            pairs = np.zeros((0, 2), dtype=np.int64)

        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        adjacency = sp.csr_matrix(
            (np.ones(len(rows), dtype=np.float64), (rows, cols)), shape=(n, n)
        )
        adjacency.sort_indices()
        return cls(n=n, edges=pairs, adjacency=adjacency)

    @property
    def num_edges(self) -> int:
        return int(len(self.edges))

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr).astype(np.int64)

    def to_dense(self) -> np.ndarray:
        return self.adjacency.toarray()


@dataclass(frozen=True, eq=False)
class Dataset:
    """Node-classification dataset: graph, features, labels and split masks"""
    graph: SparseGraph
    x: np.ndarray
    y: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_features(self) -> int:
        return int(self.x.shape[1])

    def mask(self, split: Split) -> np.ndarray:
        return {
            Split.TRAIN: self.train_mask,
            Split.VAL: self.val_mask,
            Split.TEST: self.test_mask,
        }[Split(split)]

    def validate(self, require_all_classes: bool = True) -> None:
        """Check shape, label and mask rules; raises ValidationError"""
        n = self.graph.n
        if self.x.ndim != 2 or self.x.shape[0] != n:
            raise ValidationError(f"feature matrix has {self.x.shape[0]} rows, graph has {n} nodes")
        if not np.all(np.isfinite(self.x)):
            raise ValidationError("feature matrix contains non-finite values")
        if self.y.shape != (n,):
            raise ValidationError(f"label vector length {self.y.shape} != ({n},)")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValidationError(f"label outside [0, {self.num_classes})")

        masks = {"train_mask": self.train_mask, "val_mask": self.val_mask, "test_mask": self.test_mask}
        for name, mask in masks.items():
            if mask.shape != (n,) or mask.dtype != np.bool_:
                raise ValidationError(f"{name} must be a boolean vector of length {n}")

        names = list(masks)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                overlap = np.flatnonzero(masks[a] & masks[b])
                if overlap.size:
                    raise ValidationError(f"{a} and {b} overlap at node {int(overlap[0])}")

        if require_all_classes:
            labeled = self.train_mask | self.val_mask | self.test_mask
            present = np.unique(self.y[labeled])
            missing = sorted(set(range(self.num_classes)) - set(present.tolist()))
            if missing:
                raise ValidationError(f"classes {missing} never appear among labeled nodes")


@dataclass(frozen=True, eq=False)
class ClientShard:
    """One client's induced subgraph; global_ids maps local to dataset node ids"""
    client_id: int
    global_ids: np.ndarray
    local: Dataset
    is_virtual: bool = False
    provenance: Optional[dict] = None

    @property
    def num_nodes(self) -> int:
        return self.local.n


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    """The k smallest eigenpairs of a symmetric matrix, ascending"""
    k: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True, eq=False)
class FeatureStats:
    """Per-feature mean and standard deviation released by a departing client"""
    mu: np.ndarray
    sigma: np.ndarray
    noise_std: float

    @classmethod
    def from_features(cls, x: np.ndarray, noise_std: float) -> "FeatureStats":
        return cls(mu=x.mean(axis=0), sigma=x.std(axis=0), noise_std=float(noise_std))


@dataclass(frozen=True, eq=False)
class SynthGraph:
    """Synthetic replacement graph uploaded in place of a departed shard"""
    graph: SparseGraph
    x: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def adjacency(self) -> np.ndarray:
        return self.graph.to_dense().astype(np.int8)


@dataclass(frozen=True)
class NodeSelection:
    """A set of local node indices on one client"""
    client_id: int
    nodes: tuple


@dataclass(frozen=True)
class MiaSets:
    """Members D_tgt (target train nodes) and non-members D_vir (held-out retained nodes)"""
    members: NodeSelection
    nonmembers: tuple  # of NodeSelection


def _summary(values: np.ndarray) -> dict:
    if values.size == 0:
        return {"count": 0}
    return {
        "count": int(values.size),
        "mean": float(values.mean()),
        "std": float(values.std()),
        "min": float(values.min()),
        "max": float(values.max()),
    }


@dataclass(frozen=True)
class MiaThreshold:
    """Fixed pre-unlearning membership threshold; never refitted"""
    tau_pre: float
    member_summary: dict
    nonmember_summary: dict
    balanced_accuracy: float
    separability: float
    degenerate: bool = False

    @classmethod
    def summarize(cls, tau_pre: float, members: np.ndarray, nonmembers: np.ndarray,
                  balanced_accuracy: float, separability: float,
                  degenerate: bool = False) -> "MiaThreshold":
        return cls(
            tau_pre=float(tau_pre),
            member_summary=_summary(members),
            nonmember_summary=_summary(nonmembers),
            balanced_accuracy=float(balanced_accuracy),
            separability=float(separability),
            degenerate=degenerate,
        )

    def to_dict(self) -> dict:
        return {
            "tau_pre": self.tau_pre,
            "member_summary": dict(self.member_summary),
            "nonmember_summary": dict(self.nonmember_summary),
            "balanced_accuracy": self.balanced_accuracy,
            "separability": self.separability,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MiaThreshold":
        return cls(**data)


@dataclass
class MetricsReport:
    """Accuracy and MIA rates for one phase or configuration"""
    name: str
    accuracy: float
    mia_rate_pre: Optional[float] = None
    mia_rate_post: Optional[float] = None
    curves: dict = field(default_factory=dict)  # series name -> list of records
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for label, rate in (("accuracy", self.accuracy), ("mia_rate_pre", self.mia_rate_pre),
                            ("mia_rate_post", self.mia_rate_post)):
            if rate is not None and not 0.0 <= rate <= 1.0:
                raise ValueError(f"{label}={rate} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "accuracy": self.accuracy,
            "mia_rate_pre": self.mia_rate_pre,
            "mia_rate_post": self.mia_rate_post,
            "curves": self.curves,
            "config": self.config,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(**data)


@dataclass
class ResultsReport:
    """Per-phase metrics of one pipeline run"""
    reports: dict = field(default_factory=dict)  # phase key -> MetricsReport
    timings: dict = field(default_factory=dict)  # phase key -> seconds
    config: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        # timings are kept out so reruns serialize byte-identically
        return {
            "format_version": self.format_version,
            "config": self.config,
            "phases": {key: report.to_dict() for key, report in self.reports.items()},
        }
