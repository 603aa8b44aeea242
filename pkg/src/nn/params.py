"""
GCN parameters and their flat vector view

Flat layout (version 1): W1 row-major, b1, W2 row-major, b2. The flat vector
is the unit of aggregation, correction, clipping and drift projection.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import ParseError, ShapeError

LAYOUT_VERSION = 1
_HEADER = np.dtype("<i8")
_BODY = np.dtype("<f8")


@dataclass(frozen=True)
class ParamLayout:
    """Shapes of a 2-layer GCN: d features, h hidden units, c classes"""
    d: int
    h: int
    c: int

    @property
    def size(self) -> int:
        return self.d * self.h + self.h + self.h * self.c + self.c

    def _bounds(self) -> list[int]:
        sizes = [self.d * self.h, self.h, self.h * self.c, self.c]
        return np.cumsum([0, *sizes]).tolist()

    def check(self, vec: np.ndarray) -> None:
        if vec.shape != (self.size,):
            raise ShapeError(f"parameter vector has shape {vec.shape}, layout needs ({self.size},)")


@dataclass(eq=False)
class GcnParams:
    w1: np.ndarray  # d×h
    b1: np.ndarray  # h
    w2: np.ndarray  # h×c
    b2: np.ndarray  # c

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout(d=self.w1.shape[0], h=self.w1.shape[1], c=self.w2.shape[1])

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1.ravel(), self.w2.ravel(), self.b2.ravel()])

    @classmethod
    def unflatten(cls, vec: np.ndarray, layout: ParamLayout) -> "GcnParams":
        """Views into `vec`; no copy"""
        layout.check(vec)
        s = layout._bounds()
        return cls(
            w1=vec[s[0]:s[1]].reshape(layout.d, layout.h),
            b1=vec[s[1]:s[2]],
            w2=vec[s[2]:s[3]].reshape(layout.h, layout.c),
            b2=vec[s[3]:s[4]],
        )

    @classmethod
    def glorot(cls, layout: ParamLayout, rng: np.random.Generator) -> "GcnParams":
        """Glorot-uniform weights, zero biases"""
        def uniform(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        return cls(
            w1=uniform(layout.d, layout.h),
            b1=np.zeros(layout.h),
            w2=uniform(layout.h, layout.c),
            b2=np.zeros(layout.c),
        )


def init_params(layout: ParamLayout, seed: int) -> np.ndarray:
    return GcnParams.glorot(layout, np.random.default_rng(seed)).flatten()


def weight_mask(layout: ParamLayout) -> np.ndarray:
    """1.0 on weight entries, 0.0 on biases"""
    s = layout._bounds()
    mask = np.zeros(layout.size)
    mask[s[0]:s[1]] = 1.0
    mask[s[2]:s[3]] = 1.0
    return mask


def params_to_bytes(vec: np.ndarray, layout: ParamLayout) -> bytes:
    layout.check(vec)
    header = np.array([layout.d, layout.h, layout.c, LAYOUT_VERSION], dtype=_HEADER)
    return header.tobytes() + np.asarray(vec, dtype=_BODY).tobytes()


def params_from_bytes(blob: bytes) -> tuple[np.ndarray, ParamLayout]:
    if len(blob) < 4 * _HEADER.itemsize:
        raise ParseError("parameter blob shorter than its header")
    d, h, c, version = np.frombuffer(blob[:4 * _HEADER.itemsize], dtype=_HEADER).tolist()
    if version != LAYOUT_VERSION:
        raise ParseError(f"unsupported parameter layout version {version}")
    layout = ParamLayout(d=d, h=h, c=c)
    body = np.frombuffer(blob[4 * _HEADER.itemsize:], dtype=_BODY)
    if body.size != layout.size:
        raise ParseError(f"parameter blob holds {body.size} values, header implies {layout.size}")
    return body.astype(np.float64), layout


def save_params(vec: np.ndarray, layout: ParamLayout, path) -> Path:
    """Checkpoint: little-endian float64 body behind a (d, h, C, version) header"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(params_to_bytes(vec, layout))
    return path


def load_params(path) -> tuple[np.ndarray, ParamLayout]:
    return params_from_bytes(Path(path).read_bytes())
