#!/usr/bin/env python3
"""
Log-domain sum-product decoder for coset LDPC codes.

Messages live on the edges of the Tanner graph in check-major order.
Inside the message store they are parity-domain LLRs log P(s=0)/P(s=1),
where the check rule tanh(q/2) = (-1)^d(m) prod tanh(z/2) holds exactly.
decode() takes and returns bipolar LLRs log P(x=+1)/P(x=-1) with
x = 2s - 1, the detector's convention, which is the negated parity domain.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DimensionError
from .ldpc_code import CosetLdpcCode, ParityCheckMatrix, syndrome

logger = logging.getLogger(__name__)

# Message magnitude clamp; keeps tanh away from +-1
LLR_CLAMP = 38.0

# Smallest magnitude fed to phi so that phi stays finite
_MIN_MAGNITUDE = 1e-300


def phi(x):
    """phi(x) = -log tanh(x / 2) = log((e^x + 1) / (e^x - 1)); self-inverse on x > 0."""
    x = np.clip(np.asarray(x, dtype=np.float64), _MIN_MAGNITUDE, LLR_CLAMP)
    return np.log1p(2.0 / np.expm1(x))


@dataclass
class MessageStore:
    """
    Edge messages of one decoding run.

    z: variable-to-check messages, q: check-to-variable messages,
    channel: per-bit channel input, all parity-domain.
    """

    z: np.ndarray
    q: np.ndarray
    channel: np.ndarray

    @classmethod
    def fresh(cls, pcm: ParityCheckMatrix, channel) -> "MessageStore":
        channel = np.asarray(channel, dtype=np.float64)
        if channel.shape != (pcm.n_cols,):
            raise DimensionError(f"channel input length {channel.size} != N={pcm.n_cols}")
        return cls(z=np.zeros(pcm.n_edges), q=np.zeros(pcm.n_edges), channel=channel.copy())


@dataclass(frozen=True)
class DecodeResult:
    """
    llr: L_c = L_ext1 + L_ext2 per bit (bipolar)
    extrinsic: L_ext2 per bit (bipolar)
    hard: decided word s_hat
    converged: syndrome of s_hat equals d
    iterations: SPA iterations executed
    """

    llr: np.ndarray
    extrinsic: np.ndarray
    hard: np.ndarray
    converged: bool
    iterations: int


class SpaDecoder:
    """
    Flooding-schedule sum-product decoder bound to one parity-check matrix.

    Args:
        pcm: Parity-check matrix H
        syndrome_vector: Coset syndrome d = H b^T (zeros if None)
    """

    def __init__(self, pcm: ParityCheckMatrix, syndrome_vector: Optional[np.ndarray] = None):
        self.pcm = pcm
        if syndrome_vector is None:
            syndrome_vector = np.zeros(pcm.n_rows, dtype=np.uint8)
        self.syndrome_vector = np.asarray(syndrome_vector, dtype=np.uint8)
        if self.syndrome_vector.shape != (pcm.n_rows,):
            raise DimensionError(f"syndrome length {self.syndrome_vector.size} != M={pcm.n_rows}")

        self.edge_checks = pcm.edge_checks
        self.edge_vars = pcm.edge_vars
        self._edge_flip = self.syndrome_vector[self.edge_checks].astype(bool)

    @classmethod
    def for_code(cls, code: CosetLdpcCode) -> "SpaDecoder":
        return cls(code.pcm, code.syndrome_vector)

    def _var_sums(self, q):
        return np.bincount(self.edge_vars, weights=q, minlength=self.pcm.n_cols)

    def variable_update(self, store: MessageStore, n: Optional[int] = None) -> None:
        """z_mn = L(n) + sum of q_jn over the other checks j of n (all variables if n is None)."""
        if n is None:
            total = store.channel + self._var_sums(store.q)
            store.z[:] = total[self.edge_vars] - store.q
            return
        edges = np.flatnonzero(self.edge_vars == n)
        total = store.channel[n] + store.q[edges].sum()
        store.z[edges] = total - store.q[edges]

    def check_update(self, store: MessageStore, m: Optional[int] = None, d_m: Optional[int] = None) -> None:
        """
        tanh(q_mn / 2) = (-1)^d(m) prod tanh(z_jn / 2) over the other variables j of m,
        in sign / log-magnitude form (all checks if m is None).
        """
        if m is None:
            edges = slice(None)
            checks = self.edge_checks
            flips = self._edge_flip
        else:
            edges = np.flatnonzero(self.edge_checks == m)
            checks = np.zeros(edges.size, dtype=np.int64)
            bit = self.syndrome_vector[m] if d_m is None else d_m
            flips = np.full(edges.size, bool(bit))

        z = store.z[edges]
        negative = z < 0
        magnitude = phi(np.abs(z))
        n_groups = self.pcm.n_rows if m is None else 1
        magnitude_sum = np.bincount(checks, weights=magnitude, minlength=n_groups)
        negative_count = np.bincount(checks, weights=negative, minlength=n_groups).astype(np.int64)

        others = np.maximum(magnitude_sum[checks] - magnitude, 0.0)
        sign_flip = ((negative_count[checks] - negative) % 2).astype(bool) ^ flips
        q = np.where(sign_flip, -1.0, 1.0) * phi(others)
        store.q[edges] = np.clip(q, -LLR_CLAMP, LLR_CLAMP)

    def decode(self, channel_llr, iterations: int, early_exit: bool = False) -> DecodeResult:
        """
        Run I_c flooding iterations from q = 0.

        Args:
            channel_llr: L_ext1 per bit, bipolar convention
            iterations: I_c >= 1
            early_exit: Stop once the hard decision satisfies H s^T = d

        Returns:
            DecodeResult with bipolar L_c and L_ext2
        """
        if iterations < 1:
            raise ValueError(f"I_c must be at least 1, got {iterations}")
        channel_llr = np.clip(np.asarray(channel_llr, dtype=np.float64), -LLR_CLAMP, LLR_CLAMP)
        store = MessageStore.fresh(self.pcm, -channel_llr)

        performed = 0
        converged = False
        for _ in range(iterations):
            self.variable_update(store)
            self.check_update(store)
            performed += 1
            if early_exit:
                hard = (self._var_sums(store.q) + store.channel < 0).astype(np.uint8)
                if np.array_equal(syndrome(self.pcm, hard), self.syndrome_vector):
                    converged = True
                    break

        extrinsic = -self._var_sums(store.q)
        llr = channel_llr + extrinsic
        hard = (llr > 0).astype(np.uint8)
        if not early_exit:
            converged = bool(np.array_equal(syndrome(self.pcm, hard), self.syndrome_vector))
        logger.debug("SPA decode: %d iterations, converged=%s", performed, converged)
        return DecodeResult(llr=llr, extrinsic=extrinsic, hard=hard, converged=converged, iterations=performed)


def decode(channel_llr, code: CosetLdpcCode, iterations: int, early_exit: bool = False) -> DecodeResult:
    return SpaDecoder.for_code(code).decode(channel_llr, iterations, early_exit=early_exit)
