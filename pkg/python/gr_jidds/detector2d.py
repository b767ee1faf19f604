#!/usr/bin/env python3
"""
Iterative two-dimensional channel detector.

A down-track symbol BCJR runs along every page row, a cross-track bit
BCJR runs along every page column, and the two exchange symbol
log-likelihoods for I_det inner iterations. Everything works in the log
domain with the exact Jacobian logarithm.

Conventions:
    symbol index t over the alphabet of 2**M_h column tuples: bit k of t
    is set iff x(i - k, j) = +1, so index 0 is the all -1 symbol.
    Bit LLRs are log P(x = +1) / P(x = -1).
    Bit log-priors carry a trailing axis of size 2: [log P(-1), log P(+1)].

All recursions are vectorized over a leading batch axis (rows of a page,
columns of a page, or stacked windows); every batch entry is independent.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .channel2d import ChannelMatrix
from .exceptions import DetectorError, DimensionError

logger = logging.getLogger(__name__)

LOG2 = float(np.log(2.0))

# Output magnitude used when an LLR is infinite (noiseless detection)
LLR_CLAMP = 38.0

# |r - e| below this counts as an exact match when sigma is zero
_EXACT_MATCH_TOL = 1e-9

SCHEDULES = ("down-first", "cross-first")


def max_star(x, y):
    """log(e^x + e^y) = max(x, y) + log(1 + e^-|x - y|); -inf is an absent term."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    hi = np.maximum(x, y)
    with np.errstate(invalid="ignore"):
        gap = np.abs(x - y)
    result = hi + np.where(np.isfinite(gap), np.log1p(np.exp(-np.where(np.isfinite(gap), gap, 0.0))), 0.0)
    return float(result) if result.ndim == 0 else result


def max_star_reduce(values, axis=-1):
    """max* folded over an axis; an all -inf slice gives -inf."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return logsumexp(values, axis=axis)


def _normalize(log_values, axis=-1):
    total = max_star_reduce(log_values, axis=axis)
    total = np.where(np.isfinite(total), total, 0.0)
    return log_values - np.expand_dims(total, axis)


def _masked_difference(a, b):
    """a - b where both are finite, -inf elsewhere."""
    finite = np.isfinite(a) & np.isfinite(b)
    return np.where(finite, a - np.where(finite, b, 0.0), -np.inf)


@dataclass(frozen=True)
class SymbolAlphabet:
    """All 2**M_h bipolar column tuples, indexed by binary expansion."""

    m_h: int

    def __post_init__(self):
        if self.m_h < 1:
            raise ValueError(f"M_h must be at least 1, got {self.m_h}")

    @property
    def size(self) -> int:
        return 1 << self.m_h

    @cached_property
    def bits(self) -> np.ndarray:
        """(size, M_h) array of 0/1 with bits[t, k] = bit k of t."""
        bits = (np.arange(self.size)[:, None] >> np.arange(self.m_h)[None, :]) & 1
        bits.setflags(write=False)
        return bits

    @cached_property
    def vectors(self) -> np.ndarray:
        """(size, M_h) bipolar tuples; column k is x(i - k)."""
        vectors = (2 * self.bits - 1).astype(np.float64)
        vectors.setflags(write=False)
        return vectors

    def index_of(self, symbol) -> int:
        symbol = np.asarray(symbol)
        if symbol.shape != (self.m_h,):
            raise DimensionError(f"symbol must have {self.m_h} entries")
        return int(np.sum((symbol > 0).astype(np.int64) << np.arange(self.m_h)))

    def symbol_of(self, index: int) -> Tuple[int, ...]:
        if not 0 <= index < self.size:
            raise IndexError(f"symbol index {index} outside 0..{self.size - 1}")
        return tuple(int(v) for v in self.vectors[index])


@dataclass(frozen=True, eq=False)
class TrellisSpec:
    """
    Down-track and cross-track trellises for one channel matrix.

    Down-track state: the N_h - 1 previous symbols as base-2**M_h digits,
    most recent in the lowest digit. Cross-track state: the M_h - 1
    previous bits, most recent in bit 0. State 0 is the all -1 state in both.
    """

    channel: ChannelMatrix

    @cached_property
    def alphabet(self) -> SymbolAlphabet:
        return SymbolAlphabet(self.channel.m_h)

    @property
    def n_symbols(self) -> int:
        return self.alphabet.size

    @property
    def n_down_states(self) -> int:
        return self.n_symbols ** (self.channel.n_h - 1)

    @property
    def n_cross_states(self) -> int:
        return 1 << (self.channel.m_h - 1)

    @cached_property
    def down_next(self) -> np.ndarray:
        """(states, symbols) successor state table."""
        states = np.arange(self.n_down_states)[:, None]
        symbols = np.arange(self.n_symbols)[None, :]
        return (states * self.n_symbols + symbols) % self.n_down_states

    @cached_property
    def down_output(self) -> np.ndarray:
        """(states, symbols) noiseless readback sample for each branch."""
        h = self.channel.h
        vectors = self.alphabet.vectors
        output = np.repeat((vectors @ h[:, 0])[None, :], self.n_down_states, axis=0)
        states = np.arange(self.n_down_states)
        for p in range(self.channel.n_h - 1):
            digit = (states // self.n_symbols**p) % self.n_symbols
            output = output + (vectors[digit] @ h[:, p + 1])[:, None]
        return output

    @cached_property
    def down_into(self) -> np.ndarray:
        """(states, symbols) flat branch indices s' * A + u that enter each state."""
        order = np.argsort(self.down_next.ravel(), kind="stable")
        return order.reshape(self.n_down_states, -1)

    @cached_property
    def cross_prev(self) -> np.ndarray:
        """Predecessor cross-track state of every transition symbol."""
        return np.arange(self.n_symbols) >> 1

    @cached_property
    def cross_next(self) -> np.ndarray:
        return np.arange(self.n_symbols) & (self.n_cross_states - 1)

    @cached_property
    def cross_into(self) -> np.ndarray:
        """(states, 2) transition symbols entering each state."""
        order = np.argsort(self.cross_next, kind="stable")
        return order.reshape(self.n_cross_states, -1)

    @cached_property
    def cross_from(self) -> np.ndarray:
        """(states, 2) transition symbols leaving each state."""
        return np.arange(self.n_symbols).reshape(self.n_cross_states, 2)

    def down_successors(self, state: int):
        return sorted(set(self.down_next[state].tolist()))

    def cross_successors(self, state: int):
        return sorted(set(self.cross_next[self.cross_from[state]].tolist()))


@lru_cache(maxsize=16)
def trellis_for(channel: ChannelMatrix) -> TrellisSpec:
    return TrellisSpec(channel)


def _as_trellis(channel: Union[ChannelMatrix, TrellisSpec]) -> TrellisSpec:
    return channel if isinstance(channel, TrellisSpec) else trellis_for(channel)


def bit_log_priors(llr) -> np.ndarray:
    """[log P(-1), log P(+1)] from bit LLRs; trailing axis of size 2."""
    llr = np.asarray(llr, dtype=np.float64)
    return np.stack([-np.logaddexp(0.0, llr), -np.logaddexp(0.0, -llr)], axis=-1)


def bit_to_symbol(bit_priors, m_h: int, top_known=True) -> np.ndarray:
    """
    log P(symbol at (i, j)) = sum_k log P(x(i - k, j)).

    Args:
        bit_priors: (..., R, C, 2) bit log-priors
        m_h: Symbol height
        top_known: Bits above the first row are the -1 guard (scalar or per
            leading batch entry); otherwise they are uniform

    Returns:
        (..., R, C, 2**m_h) symbol log-priors
    """
    bit_priors = np.asarray(bit_priors, dtype=np.float64)
    alphabet = SymbolAlphabet(m_h)
    lead = bit_priors.shape[:-3]
    n_cols = bit_priors.shape[-2]
    top_known = np.broadcast_to(np.asarray(top_known, dtype=bool), lead)

    guard = np.where(top_known[..., None, None, None], np.array([0.0, -np.inf]), -LOG2)
    guard = np.broadcast_to(guard, lead + (m_h - 1, n_cols, 2))
    padded = np.concatenate([guard, bit_priors], axis=-3)

    n_rows = bit_priors.shape[-3]
    symbols = np.zeros(lead + (n_rows, n_cols, alphabet.size))
    for k in range(m_h):
        shifted = padded[..., m_h - 1 - k : m_h - 1 - k + n_rows, :, :]
        symbols = symbols + shifted[..., alphabet.bits[:, k]]
    return symbols


def _branch_metrics(r, l_id, sigma, trellis):
    """(B, C, states, symbols) down-track branch metrics."""
    diff = r[:, :, None, None] - trellis.down_output[None, None, :, :]
    if sigma > 0:
        likelihood = -(diff * diff) / (2.0 * sigma * sigma)
    else:
        likelihood = np.where(np.abs(diff) <= _EXACT_MATCH_TOL, 0.0, -np.inf)
    return l_id[:, :, None, :] + likelihood


def down_track_bcjr(r, sigma, channel, l_id, left_known=True):
    """
    Symbol BCJR along rows.

    Args:
        r: (B, C) or (C,) received samples of B rows
        sigma: Noise standard deviation (0 means noiseless)
        channel: ChannelMatrix or TrellisSpec
        l_id: (B, C, 2**M_h) symbol log-priors
        left_known: Columns left of the row are the -1 guard (scalar or (B,));
            otherwise the initial state metric is uniform

    Returns:
        (l_od, l_ic): normalized symbol log-posteriors and l_od - l_id
    """
    trellis = _as_trellis(channel)
    single = np.ndim(r) == 1
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    l_id = np.asarray(l_id, dtype=np.float64)
    if single:
        l_id = l_id[None]
    n_batch, n_cols = r.shape
    n_states = trellis.n_down_states
    if l_id.shape != (n_batch, n_cols, trellis.n_symbols):
        raise DimensionError(f"symbol priors shape {l_id.shape} != {(n_batch, n_cols, trellis.n_symbols)}")

    gamma = _branch_metrics(r, l_id, sigma, trellis)
    left_known = np.broadcast_to(np.asarray(left_known, dtype=bool), (n_batch,))

    alpha = np.empty((n_batch, n_cols + 1, n_states))
    alpha[:, 0] = -trellis.channel.m_h * (trellis.channel.n_h - 1) * LOG2
    alpha[left_known, 0] = -np.inf
    alpha[left_known, 0, 0] = 0.0
    for k in range(n_cols):
        paths = (alpha[:, k, :, None] + gamma[:, k]).reshape(n_batch, -1)
        alpha[:, k + 1] = _normalize(max_star_reduce(paths[:, trellis.down_into], axis=-1))

    # Samples exist only inside the page, so the trailing guard is unobserved
    beta = np.empty((n_batch, n_cols + 1, n_states))
    beta[:, n_cols] = 0.0
    for k in range(n_cols - 1, -1, -1):
        beta[:, k] = _normalize(max_star_reduce(gamma[:, k] + beta[:, k + 1][:, trellis.down_next], axis=-1))

    joint = alpha[:, :-1, :, None] + gamma + beta[:, 1:][:, :, trellis.down_next]
    l_od = _normalize(max_star_reduce(joint, axis=2))
    if not np.all(np.any(np.isfinite(l_od), axis=-1)):
        raise DetectorError("down-track detector found no consistent path (non-finite branch metrics)")
    l_ic = _masked_difference(l_od, l_id)
    if single:
        return l_od[0], l_ic[0]
    return l_od, l_ic


def cross_track_bcjr(l_ic, bit_priors, channel, top_known=True):
    """
    Bit BCJR along columns.

    Args:
        l_ic: (B, R, 2**M_h) or (R, 2**M_h) symbol information from the down-track
        bit_priors: (B, R, 2) or (R, 2) bit log-priors of the column bits
        channel: ChannelMatrix or TrellisSpec
        top_known: Rows above the column are the -1 guard (scalar or (B,))

    Returns:
        (l_oc_symbol, l_oc_bit): normalized transition log-posteriors per
        row and bit LLRs
    """
    trellis = _as_trellis(channel)
    l_ic = np.asarray(l_ic, dtype=np.float64)
    bit_priors = np.asarray(bit_priors, dtype=np.float64)
    single = l_ic.ndim == 2
    if single:
        l_ic, bit_priors = l_ic[None], bit_priors[None]
    n_batch, n_rows, n_symbols = l_ic.shape
    if n_symbols != trellis.n_symbols or bit_priors.shape != (n_batch, n_rows, 2):
        raise DimensionError(f"cross-track inputs {l_ic.shape} / {bit_priors.shape} do not match the trellis")

    newest = np.arange(n_symbols) & 1
    metric = l_ic + bit_priors[:, :, newest]
    n_states = trellis.n_cross_states
    top_known = np.broadcast_to(np.asarray(top_known, dtype=bool), (n_batch,))

    a = np.empty((n_batch, n_rows + 1, n_states))
    a[:, 0] = -(trellis.channel.m_h - 1) * LOG2
    a[top_known, 0] = -np.inf
    a[top_known, 0, 0] = 0.0
    for k in range(n_rows):
        paths = a[:, k][:, trellis.cross_prev] + metric[:, k]
        a[:, k + 1] = _normalize(max_star_reduce(paths[:, trellis.cross_into], axis=-1))

    b = np.empty((n_batch, n_rows + 1, n_states))
    b[:, n_rows] = 0.0
    for k in range(n_rows - 1, -1, -1):
        paths = b[:, k + 1][:, trellis.cross_next] + metric[:, k]
        b[:, k] = _normalize(max_star_reduce(paths[:, trellis.cross_from], axis=-1))

    joint = a[:, :-1][:, :, trellis.cross_prev] + metric + b[:, 1:][:, :, trellis.cross_next]
    l_oc_symbol = _normalize(joint)
    with np.errstate(invalid="ignore"):
        l_oc_bit = max_star_reduce(joint[..., 1::2], axis=-1) - max_star_reduce(joint[..., 0::2], axis=-1)
    if single:
        return l_oc_symbol[0], l_oc_bit[0]
    return l_oc_symbol, l_oc_bit


def _detect_pages(r, sigma, trellis, prior_llr, det_iterations, top_known, left_known, schedule):
    """Detector on a (P, R, C) stack of pages or windows."""
    n_pages, n_rows, n_cols = r.shape
    m_h = trellis.channel.m_h
    n_symbols = trellis.n_symbols

    priors = bit_log_priors(prior_llr)
    column_priors = priors.transpose(0, 2, 1, 3).reshape(n_pages * n_cols, n_rows, 2)
    row_left = np.repeat(left_known, n_rows)
    col_top = np.repeat(top_known, n_cols)
    symbol_priors = bit_to_symbol(priors, m_h, top_known)

    def down(l_id):
        l_od, l_ic = down_track_bcjr(
            r.reshape(n_pages * n_rows, n_cols),
            sigma,
            trellis,
            l_id.reshape(n_pages * n_rows, n_cols, n_symbols),
            left_known=row_left,
        )
        return l_ic.reshape(n_pages, n_rows, n_cols, n_symbols)

    def cross(l_ic):
        columns = l_ic.transpose(0, 2, 1, 3).reshape(n_pages * n_cols, n_rows, n_symbols)
        l_oc_symbol, l_oc_bit = cross_track_bcjr(columns, column_priors, trellis, top_known=col_top)
        l_oc_symbol = l_oc_symbol.reshape(n_pages, n_cols, n_rows, n_symbols).transpose(0, 2, 1, 3)
        return l_oc_symbol, l_oc_bit.reshape(n_pages, n_cols, n_rows).transpose(0, 2, 1)

    def feedback(l_oc_symbol, l_ic):
        # The cross-track metric already carries the decoder's bit priors
        return _normalize(_masked_difference(l_oc_symbol, l_ic))

    l_id = symbol_priors
    if schedule == "cross-first":
        flat = np.zeros_like(symbol_priors)
        l_oc_symbol, _ = cross(flat)
        l_id = feedback(l_oc_symbol, flat)
    for _ in range(det_iterations):
        l_ic = down(l_id)
        l_oc_symbol, l_oc_bit = cross(l_ic)
        l_id = feedback(l_oc_symbol, l_ic)

    if np.any(np.isnan(l_oc_bit)):
        raise DetectorError("cross-track detector found no consistent path (non-finite branch metrics)")
    extrinsic = l_oc_bit - prior_llr
    return np.where(np.isfinite(extrinsic), extrinsic, np.sign(extrinsic) * LLR_CLAMP)


def _check_inputs(r, prior_llr, det_iterations, schedule):
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 2:
        raise DimensionError(f"received page must be 2-D, got shape {r.shape}")
    if prior_llr is None:
        prior_llr = np.zeros_like(r)
    prior_llr = np.asarray(prior_llr, dtype=np.float64)
    if prior_llr.shape != r.shape:
        raise DimensionError(f"prior LLR grid {prior_llr.shape} != received page {r.shape}")
    if det_iterations < 1:
        raise ValueError(f"I_det must be at least 1, got {det_iterations}")
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown detector schedule {schedule!r}")
    return r, prior_llr


def detect(r, sigma, channel, prior_llr=None, det_iterations=3, schedule="down-first") -> np.ndarray:
    """
    Full-page detector.

    Args:
        r: (N_r, N_c) received page
        sigma: Noise standard deviation
        channel: ChannelMatrix or TrellisSpec
        prior_llr: (N_r, N_c) decoder extrinsic LLRs used as bit priors (zeros if None)
        det_iterations: Inner down-track/cross-track iterations I_det
        schedule: "down-first" or "cross-first"

    Returns:
        (N_r, N_c) extrinsic bit LLRs, decoder prior removed
    """
    r, prior_llr = _check_inputs(r, prior_llr, det_iterations, schedule)
    trellis = _as_trellis(channel)
    return _detect_pages(
        r[None], sigma, trellis, prior_llr[None], det_iterations, np.ones(1, bool), np.ones(1, bool), schedule
    )[0]


def detect_batch(pages, sigma, channel, prior_llr, det_iterations=3, schedule="down-first") -> np.ndarray:
    """detect() over a (P, N_r, N_c) stack of independent pages."""
    pages = np.asarray(pages, dtype=np.float64)
    prior_llr = np.asarray(prior_llr, dtype=np.float64)
    if pages.ndim != 3 or prior_llr.shape != pages.shape:
        raise DimensionError(f"page stack {pages.shape} and priors {prior_llr.shape} must be equal 3-D shapes")
    known = np.ones(pages.shape[0], dtype=bool)
    return _detect_pages(pages, sigma, _as_trellis(channel), prior_llr, det_iterations, known, known, schedule)


def detect_windowed(
    r, sigma, channel, prior_llr=None, f_c=5, f_d=5, det_iterations=3, schedule="down-first", chunk=32
) -> np.ndarray:
    """
    Windowed detector: bit (i, j) is detected from received samples
    i +- (F_c + M_h - 1), j +- (F_d + N_h - 1) only.

    Windows clipped by the page edge keep the exact -1 boundary; inner
    window edges start from uniform state metrics.

    Args:
        f_c: Cross-track half width F_c
        f_d: Down-track half width F_d
        chunk: Windows processed per vectorized batch

    Returns:
        (N_r, N_c) extrinsic bit LLRs
    """
    r, prior_llr = _check_inputs(r, prior_llr, det_iterations, schedule)
    if f_c < 1 or f_d < 1:
        raise ValueError(f"window half widths must be at least 1, got ({f_c}, {f_d})")
    trellis = _as_trellis(channel)
    n_rows, n_cols = r.shape
    reach_r = f_c + trellis.channel.m_h - 1
    reach_c = f_d + trellis.channel.n_h - 1

    ii, jj = np.meshgrid(np.arange(n_rows), np.arange(n_cols), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    r0 = np.maximum(ii - reach_r, 0)
    r1 = np.minimum(ii + reach_r, n_rows - 1)
    c0 = np.maximum(jj - reach_c, 0)
    c1 = np.minimum(jj + reach_c, n_cols - 1)
    heights = r1 - r0 + 1
    widths = c1 - c0 + 1

    out = np.empty(n_rows * n_cols)
    groups = {}
    for idx, key in enumerate(zip(heights.tolist(), widths.tolist(), (r0 == 0).tolist(), (c0 == 0).tolist())):
        groups.setdefault(key, []).append(idx)

    for (height, width, top, left), members in groups.items():
        members = np.array(members)
        for start in range(0, members.size, chunk):
            batch = members[start : start + chunk]
            rows = r0[batch][:, None, None] + np.arange(height)[None, :, None]
            cols = c0[batch][:, None, None] + np.arange(width)[None, None, :]
            known_top = np.full(batch.size, top)
            known_left = np.full(batch.size, left)
            ext = _detect_pages(
                r[rows, cols], sigma, trellis, prior_llr[rows, cols], det_iterations, known_top, known_left, schedule
            )
            out[batch] = ext[np.arange(batch.size), ii[batch] - r0[batch], jj[batch] - c0[batch]]
    return out.reshape(n_rows, n_cols)
