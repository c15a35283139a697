"""Matrix containers, seeded activation generators and the IFA1 tensor file format.

Matrices are plain 2-D numpy arrays with a fixed dtype:

* float matrices  -> ``np.float32``
* int8 matrices   -> ``np.int8``, codes in [-127, 127]
* int32 matrices  -> ``np.int32`` (GEMM accumulators)

Arrays produced by :func:`generate` and :func:`load_tensor` are marked
read-only; every kernel in the package returns fresh arrays and never writes
into its inputs.

Random generation uses numpy's ``PCG64`` bit generator seeded through
``SeedSequence(seed)``. Normal samples come from ``Generator.standard_normal``
(numpy's ziggurat method) and uniform samples from ``Generator.random``
(53-bit doubles in [0, 1)). Samples are drawn in float64, then transformed
(``mean + std * z`` or ``lo + (hi - lo) * u``) and rounded once to float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ParameterError, ShapeError, TensorFormatError

MAGIC = b"IFA1"
HEADER = struct.Struct("<4sB3xQQ")
_CODE_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("i1"), 2: np.dtype("<i4")}
_DTYPE_TO_CODE = {np.dtype(np.float32): 0, np.dtype(np.int8): 1, np.dtype(np.int32): 2}


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    stddev: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.stddev)) or self.stddev <= 0:
            raise ParameterError(f"Normal requires finite mean and stddev > 0, got {self}")

    @property
    def name(self) -> str:
        return "normal"


@dataclass(frozen=True)
class Uniform:
    lo: float = -0.5
    hi: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo >= self.hi:
            raise ParameterError(f"Uniform requires finite lo < hi, got {self}")

    @property
    def name(self) -> str:
        return "uniform"


Distribution = Union[Normal, Uniform]


@dataclass(frozen=True)
class ActivationSpec:
    distribution: Distribution
    seed: int = 0


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def generate(spec: ActivationSpec, rows: int, cols: int) -> np.ndarray:
    """Draw a ``rows x cols`` float32 matrix of i.i.d. samples from ``spec``."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"generate needs rows, cols >= 1, got {rows}x{cols}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    dist = spec.distribution
    if isinstance(dist, Normal):
        x = dist.mean + dist.stddev * rng.standard_normal((rows, cols))
    elif isinstance(dist, Uniform):
        x = dist.lo + (dist.hi - dist.lo) * rng.random((rows, cols))
    else:
        raise ParameterError(f"unknown distribution {dist!r}")
    return _frozen(x.astype(np.float32))


def as_float_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.asarray(x, dtype=np.float32)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} contains NaN or Inf")
    return a


def as_int8_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.asarray(x)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.issubdtype(a.dtype, np.integer):
        raise ParameterError(f"{name} must hold integers, got {a.dtype}")
    if a.size and (a.min() < -127 or a.max() > 127):
        raise ParameterError(f"{name} codes must lie in [-127, 127]")
    return a.astype(np.int8, copy=False)


def save_tensor(m: np.ndarray, path) -> None:
    a = np.asarray(m)
    if a.ndim != 2:
        raise ShapeError(f"only 2-D tensors can be saved, got shape {a.shape}")
    try:
        code = _DTYPE_TO_CODE[a.dtype]
    except KeyError:
        raise TensorFormatError(f"unsupported dtype {a.dtype}; expected float32, int8 or int32")
    payload = np.ascontiguousarray(a, dtype=_CODE_TO_DTYPE[code]).tobytes()
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, code, a.shape[0], a.shape[1]))
        f.write(payload)


def load_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise TensorFormatError(f"truncated header: {len(raw)} of {HEADER.size} bytes")
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if raw[5:8] != b"\x00\x00\x00":
        raise TensorFormatError("bad reserved bytes: must be zero")
    magic, code, rows, cols = HEADER.unpack_from(raw)
    if code not in _CODE_TO_DTYPE:
        raise TensorFormatError(f"bad dtype code {code}")
    dtype = _CODE_TO_DTYPE[code]
    expected = rows * cols * dtype.itemsize
    body = raw[HEADER.size:]
    if len(body) < expected:
        raise TensorFormatError(f"truncated payload: {len(body)} of {expected} bytes")
    if len(body) > expected:
        raise TensorFormatError(f"bad payload length: {len(body) - expected} trailing bytes")
    a = np.frombuffer(body, dtype=dtype).reshape(rows, cols)
    a = a.astype(dtype.newbyteorder("="), copy=True)
    if code == 0 and not np.all(np.isfinite(a)):
        raise TensorFormatError("bad payload: float tensor contains NaN or Inf")
    if code == 1 and a.size and a.min() == -128:
        raise TensorFormatError("bad payload: int8 tensor contains code -128")
    return _frozen(a)
