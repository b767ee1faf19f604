#!/usr/bin/env python3
"""
Two-dimensional interference channel: 1D/2D mapping, 2D convolution,
AWGN injection and SNR bookkeeping.
"""

import logging
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple, Union

import numpy as np
from scipy import signal

from .exceptions import ChannelFormatError, DimensionError

logger = logging.getLogger(__name__)

H_A = np.array(
    [
        [0.050684, 0.21273, 0.050684],
        [0.23825, 1.0, 0.23825],
        [0.050684, 0.21273, 0.050684],
    ]
)

H_B = np.array(
    [
        [0.0035638, 0.14843, 0.0035638],
        [0.013382, 0.55733, 0.013382],
        [0.0035638, 0.14843, 0.0035638],
    ]
)

PRESETS = {
    "HA": H_A,
    "HB": H_B,
    "AWGN": np.ones((1, 1)),
}


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """
    M_h x N_h channel response matrix.

    h[m, n] weights bit x(i - m, j - n) in the readback sample y(i, j):
    rows run cross-track, columns down-track.
    """

    h: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise ChannelFormatError(f"channel matrix must be a non-empty 2-D array, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ChannelFormatError("channel matrix has non-finite entries")
        if not np.sum(h * h) > 0.0:
            raise ChannelFormatError("channel matrix has zero energy")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @classmethod
    def preset(cls, name: str) -> "ChannelMatrix":
        key = name.upper()
        if key not in PRESETS:
            raise ChannelFormatError(f"unknown channel preset {name!r} (known: {', '.join(PRESETS)})")
        return cls(PRESETS[key], name=key)

    @classmethod
    def from_file(cls, path) -> "ChannelMatrix":
        """Parse "M_h N_h" followed by M_h rows of N_h floats."""
        with open(path, "r") as f:
            lines = [line.split() for line in f if line.strip() and not line.lstrip().startswith("#")]
        try:
            m_h, n_h = (int(x) for x in lines[0])
            rows = [[float(x) for x in line] for line in lines[1:]]
        except (IndexError, ValueError) as e:
            raise ChannelFormatError(f"{path}: {e}")
        if len(rows) != m_h or any(len(row) != n_h for row in rows):
            raise ChannelFormatError(f"{path}: expected {m_h} rows of {n_h} values")
        return cls(np.array(rows), name=os.path.basename(str(path)))

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(f"{self.m_h} {self.n_h}\n")
            for row in self.h:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")

    @property
    def m_h(self) -> int:
        return self.h.shape[0]

    @property
    def n_h(self) -> int:
        return self.h.shape[1]

    @cached_property
    def energy(self) -> float:
        return float(np.sum(self.h * self.h))

    @property
    def norm(self) -> float:
        return self.energy ** 0.5

    @property
    def is_memoryless(self) -> bool:
        return self.h.shape == (1, 1)


def load_channel(spec: Union[str, ChannelMatrix]) -> ChannelMatrix:
    """Preset name (HA, HB, AWGN) or path to a channel file."""
    if isinstance(spec, ChannelMatrix):
        return spec
    if spec.upper() in PRESETS:
        return ChannelMatrix.preset(spec)
    if not os.path.exists(spec):
        raise ChannelFormatError(f"{spec!r} is neither a preset nor an existing file")
    return ChannelMatrix.from_file(spec)


@dataclass(frozen=True, eq=False)
class BipolarGrid:
    """N_r x N_c page of +-1 bits surrounded by an implicit -1 guard border."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.int8)
        if values.ndim != 2:
            raise DimensionError(f"grid must be 2-D, got shape {values.shape}")
        if not np.all(np.abs(values) == 1):
            raise ValueError("grid entries must be -1 or +1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return self.values.size

    def at(self, i: int, j: int) -> int:
        """x(i, j) with 1-based coordinates; -1 outside the page."""
        if 1 <= i <= self.n_rows and 1 <= j <= self.n_cols:
            return int(self.values[i - 1, j - 1])
        return -1

    def padded(self, top: int = 0, left: int = 0, bottom: int = 0, right: int = 0) -> np.ndarray:
        return np.pad(self.values, ((top, bottom), (left, right)), constant_values=-1)


@dataclass(frozen=True, eq=False)
class Mapping:
    """
    Bijection between sequence positions and page cells.

    `permutation[i]` is the row-major flat cell index of sequence position i.
    """

    kind: str
    n_rows: int
    n_cols: int
    permutation: np.ndarray

    def __post_init__(self):
        permutation = np.array(self.permutation, dtype=np.int64)
        size = self.n_rows * self.n_cols
        if permutation.shape != (size,) or not np.array_equal(np.sort(permutation), np.arange(size)):
            raise DimensionError(f"mapping table is not a permutation of {size} cells")
        permutation.setflags(write=False)
        object.__setattr__(self, "permutation", permutation)

    @classmethod
    def row_major(cls, n_rows: int, n_cols: int) -> "Mapping":
        return cls("row-major", n_rows, n_cols, np.arange(n_rows * n_cols))

    @classmethod
    def random(cls, n_rows: int, n_cols: int, seed: int) -> "Mapping":
        rng = np.random.default_rng(seed)
        return cls("random", n_rows, n_cols, rng.permutation(n_rows * n_cols))

    @classmethod
    def create(cls, kind: str, n_rows: int, n_cols: int, seed: int = 0) -> "Mapping":
        if kind == "row-major":
            return cls.row_major(n_rows, n_cols)
        if kind == "random":
            return cls.random(n_rows, n_cols, seed)
        raise ValueError(f"unknown mapping kind {kind!r}")

    @property
    def size(self) -> int:
        return self.n_rows * self.n_cols

    @cached_property
    def inverse(self) -> np.ndarray:
        inverse = np.empty_like(self.permutation)
        inverse[self.permutation] = np.arange(self.size)
        inverse.setflags(write=False)
        return inverse


def page_shape(n: int) -> Tuple[int, int]:
    """Most nearly square N_r x N_c factorization of n with N_r <= N_c."""
    if n <= 0:
        raise DimensionError(f"page size must be positive, got {n}")
    n_rows = int(np.floor(np.sqrt(n)))
    while n % n_rows:
        n_rows -= 1
    return n_rows, n // n_rows


def parse_page_shape(text: str, n: int) -> Tuple[int, int]:
    """'auto' or 'RxC'; the product must equal n."""
    if text == "auto":
        return page_shape(n)
    try:
        n_rows, n_cols = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"page shape {text!r} is not of the form RxC")
    if n_rows * n_cols != n:
        raise DimensionError(f"page {n_rows}x{n_cols} does not hold {n} bits")
    return n_rows, n_cols


def modulate(s) -> np.ndarray:
    """c = 2 s - 1"""
    s = np.asarray(s)
    if s.size and not np.all((s == 0) | (s == 1)):
        raise ValueError("modulate expects binary input")
    return (2 * s.astype(np.int8) - 1).astype(np.int8)


def demodulate(c) -> np.ndarray:
    return ((np.asarray(c) + 1) // 2).astype(np.uint8)


def to_grid(values, mapping: Mapping) -> np.ndarray:
    """Place a length-N sequence of any dtype on the page."""
    values = np.asarray(values)
    if values.shape != (mapping.size,):
        raise DimensionError(f"sequence length {values.size} != page size {mapping.size}")
    flat = np.empty_like(values)
    flat[mapping.permutation] = values
    return flat.reshape(mapping.n_rows, mapping.n_cols)


def from_grid(array, mapping: Mapping) -> np.ndarray:
    array = np.asarray(array)
    if array.shape != (mapping.n_rows, mapping.n_cols):
        raise DimensionError(f"grid shape {array.shape} != {(mapping.n_rows, mapping.n_cols)}")
    return array.reshape(-1)[mapping.permutation]


def interleave(c, mapping: Mapping) -> BipolarGrid:
    return BipolarGrid(to_grid(np.asarray(c, dtype=np.int8), mapping))


def deinterleave(grid: BipolarGrid, mapping: Mapping) -> np.ndarray:
    return from_grid(grid.values, mapping)


def convolve2d(grid, channel: ChannelMatrix, guard: float = -1.0) -> np.ndarray:
    """
    y(i, j) = sum_m sum_n h(m, n) x(i - m, j - n) over the N_r x N_c page.

    Bits above and left of the page read as `guard`.
    """
    x = grid.values if isinstance(grid, BipolarGrid) else np.asarray(grid)
    x = np.asarray(x, dtype=np.float64)
    padded = np.pad(x, ((channel.m_h - 1, 0), (channel.n_h - 1, 0)), constant_values=guard)
    return signal.convolve2d(padded, channel.h, mode="valid")


def transmit(y, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """r = y + v with v ~ N(0, sigma^2)"""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    y = np.asarray(y, dtype=np.float64)
    if sigma == 0:
        return y.copy()
    return y + sigma * rng.standard_normal(y.shape)


def snr_db(channel: ChannelMatrix, rate: float, sigma: float) -> float:
    """10 log10(sum h^2 / (2 R sigma^2))"""
    if not 0 < rate <= 1:
        raise ValueError(f"rate must lie in (0, 1], got {rate}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return float(10.0 * np.log10(channel.energy / (2.0 * rate * sigma * sigma)))


def sigma_from_snr(channel: ChannelMatrix, rate: float, snr: float) -> float:
    if not 0 < rate <= 1:
        raise ValueError(f"rate must lie in (0, 1], got {rate}")
    return float(np.sqrt(channel.energy / (2.0 * rate * 10.0 ** (snr / 10.0))))
