#!/usr/bin/env python3
"""
Joint iterative detection and decoding.

One frame is one N_r x N_c page: encode -> modulate -> interleave ->
2D convolution -> AWGN, then I_out rounds of
detect -> deinterleave -> SPA decode -> interleave feedback.
"""

import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from .channel2d import (
    ChannelMatrix,
    Mapping,
    convolve2d,
    from_grid,
    interleave,
    load_channel,
    modulate,
    parse_page_shape,
    sigma_from_snr,
    snr_db,
    to_grid,
    transmit,
)
from .detector2d import SCHEDULES, detect, detect_windowed, trellis_for
from .exceptions import DimensionError
from .ldpc_code import CosetLdpcCode, code_from_spec, encode
from .spa_decoder import DecodeResult, SpaDecoder

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationSchedule:
    """I_det inner detector iterations, I_c SPA iterations, I_out outer rounds."""

    det_iterations: int = 3
    decoder_iterations: int = 50
    outer_iterations: int = 10

    def __post_init__(self):
        for name in ("det_iterations", "decoder_iterations", "outer_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")

    @classmethod
    def parse(cls, text: str) -> "IterationSchedule":
        """'DET/IC/IOUT', e.g. '3/50/10'"""
        try:
            det, ic, iout = (int(x) for x in text.split("/"))
        except ValueError:
            raise ValueError(f"iteration schedule {text!r} is not of the form DET/IC/IOUT")
        return cls(det, ic, iout)

    def __str__(self):
        return f"{self.det_iterations}/{self.decoder_iterations}/{self.outer_iterations}"


@dataclass(frozen=True)
class RoundDiagnostics:
    round: int
    syndrome_ok: bool
    word_errors: Optional[int]
    mean_abs_ext1: float
    mean_abs_ext2: float


@dataclass(frozen=True)
class FrameResult:
    hard_word: np.ndarray
    info_bits: np.ndarray
    bit_errors: int
    frame_error: bool
    rounds: Tuple[RoundDiagnostics, ...]


class JiddsReceiver:
    """
    Receiver for one (code, page mapping, channel) combination.

    Args:
        code: Coset LDPC code
        mapping: Sequence-to-page mapping with N_r * N_c = N
        channel: Channel response matrix
        schedule: Iteration counts
        early_exit: Stop SPA and outer rounds once H s^T = d
        window: (F_c, F_d) to use the windowed detector, None for the full one
        detector_schedule: "down-first" or "cross-first"
    """

    def __init__(
        self,
        code: CosetLdpcCode,
        mapping: Mapping,
        channel: ChannelMatrix,
        schedule: IterationSchedule,
        early_exit: bool = False,
        window: Optional[Tuple[int, int]] = None,
        detector_schedule: str = "down-first",
    ):
        if mapping.size != code.n:
            raise DimensionError(f"page {mapping.n_rows}x{mapping.n_cols} does not hold N={code.n} bits")
        if detector_schedule not in SCHEDULES:
            raise ValueError(f"unknown detector schedule {detector_schedule!r}")
        self.code = code
        self.mapping = mapping
        self.channel = channel
        self.schedule = schedule
        self.early_exit = early_exit
        self.window = window
        self.detector_schedule = detector_schedule
        self.decoder = SpaDecoder.for_code(code)
        self.trellis = trellis_for(channel)

    def _detect(self, r, sigma, prior_grid):
        if self.window is None:
            return detect(r, sigma, self.trellis, prior_grid, self.schedule.det_iterations, self.detector_schedule)
        f_c, f_d = self.window
        return detect_windowed(
            r, sigma, self.trellis, prior_grid, f_c, f_d, self.schedule.det_iterations, self.detector_schedule
        )

    def receive(self, r, sigma: float, reference=None) -> Tuple[DecodeResult, List[RoundDiagnostics]]:
        """
        Run the outer loop on a received page.

        Args:
            r: (N_r, N_c) received page
            sigma: Noise standard deviation assumed by the detector
            reference: Transmitted word s, only used for diagnostics

        Returns:
            Final decoder result and one diagnostics record per outer round
        """
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (self.mapping.n_rows, self.mapping.n_cols):
            raise DimensionError(f"received page {r.shape} != {(self.mapping.n_rows, self.mapping.n_cols)}")
        prior_grid = np.zeros(r.shape)
        rounds = []
        result = None
        for t in range(1, self.schedule.outer_iterations + 1):
            ext1 = from_grid(self._detect(r, sigma, prior_grid), self.mapping)
            result = self.decoder.decode(ext1, self.schedule.decoder_iterations, early_exit=self.early_exit)
            word_errors = None if reference is None else int(np.count_nonzero(result.hard != reference))
            rounds.append(
                RoundDiagnostics(
                    round=t,
                    syndrome_ok=result.converged,
                    word_errors=word_errors,
                    mean_abs_ext1=float(np.mean(np.abs(ext1))),
                    mean_abs_ext2=float(np.mean(np.abs(result.extrinsic))),
                )
            )
            logger.debug("outer round %d: syndrome_ok=%s word_errors=%s", t, result.converged, word_errors)
            if self.early_exit and result.converged:
                break
            prior_grid = to_grid(result.extrinsic, self.mapping)
        return result, rounds

    def decode_page(self, r, sigma: float) -> np.ndarray:
        """Information bits recovered from one received page."""
        result, _ = self.receive(r, sigma)
        return self.code.extract_info(result.hard)


def build_link(
    code_spec: str,
    channel: str = "HA",
    grid: str = "auto",
    mapping: str = "row-major",
    mapping_seed: int = 0,
    coset: str = "zero",
    seed: int = 0,
    girth_min: int = 6,
) -> Tuple[CosetLdpcCode, ChannelMatrix, Mapping]:
    """Code, channel and page mapping from their textual descriptions."""
    code = code_from_spec(code_spec, girth_min=girth_min, seed=seed, coset=coset)
    shape = parse_page_shape(grid, code.n)
    return code, load_channel(channel), Mapping.create(mapping, *shape, seed=mapping_seed)


def encode_page(u, code: CosetLdpcCode, mapping: Mapping, channel: ChannelMatrix):
    """Returns (s, y): the coset codeword and the noiseless readback page."""
    s = encode(code, u)
    return s, convolve2d(interleave(modulate(s), mapping), channel)


def transmit_frame(u, code: CosetLdpcCode, mapping: Mapping, channel: ChannelMatrix, sigma: float, rng):
    """Returns (s, r): the coset codeword and the noisy received page."""
    s, y = encode_page(u, code, mapping, channel)
    return s, transmit(y, sigma, rng)


def run_frame(
    u,
    code: CosetLdpcCode,
    mapping: Mapping,
    channel: ChannelMatrix,
    sigma: float,
    schedule: IterationSchedule,
    rng: np.random.Generator,
    early_exit: bool = False,
    window: Optional[Tuple[int, int]] = None,
    receiver: Optional[JiddsReceiver] = None,
) -> FrameResult:
    """Transmit u over the 2D channel and decode it with the JIDDS loop."""
    u = np.asarray(u, dtype=np.uint8)
    if receiver is None:
        receiver = JiddsReceiver(code, mapping, channel, schedule, early_exit=early_exit, window=window)
    s, r = transmit_frame(u, code, mapping, channel, sigma, rng)
    result, rounds = receiver.receive(r, sigma, reference=s)
    info = code.extract_info(result.hard)
    errors = int(np.count_nonzero(info != u))
    return FrameResult(result.hard, info, errors, errors > 0, tuple(rounds))


@dataclass(frozen=True)
class SweepSettings:
    """Stop rules and execution knobs of a Monte-Carlo sweep."""

    max_frames: int = 100
    min_errors: int = 100
    seed: int = 0
    workers: int = 1
    batch_frames: int = 8
    timing: bool = True

    def __post_init__(self):
        for name in ("max_frames", "min_errors", "workers", "batch_frames"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class SweepPoint:
    snr_db: float
    sigma: float
    frames: int
    bits: int
    bit_errors: int
    frame_errors: int
    elapsed_s: float
    seed: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0


def sweep_points(channel: ChannelMatrix, rate: float, snr_grid=None, sigma_grid=None) -> List[Tuple[float, float]]:
    """(snr_db, sigma) pairs from exactly one of an SNR grid or a sigma grid."""
    if (snr_grid is None) == (sigma_grid is None):
        raise ValueError("exactly one of snr_grid and sigma_grid must be given")
    if snr_grid is not None:
        return [(float(s), sigma_from_snr(channel, rate, float(s))) for s in snr_grid]
    return [(snr_db(channel, rate, float(s)), float(s)) for s in sigma_grid]


def frame_seed(seed: int, point_index: int, frame_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(point_index, frame_index))


def _run_points(points, settings, task, label, progress):
    """
    Chunked frame loop shared by the sweeps.

    task(sigma, seed_seq) returns a tuple of integer counts; the first
    count drives the min_errors stop rule.

    Yields (snr, sigma, frames, totals, elapsed) per point.
    """
    with Parallel(n_jobs=settings.workers) as pool:
        for point_index, (snr, sigma) in enumerate(tqdm(points, desc=label, disable=not progress)):
            start = time.perf_counter()
            frames = 0
            totals = None
            while frames < settings.max_frames and (totals is None or totals[0] < settings.min_errors):
                count = min(settings.batch_frames, settings.max_frames - frames)
                outcomes = pool(
                    delayed(task)(sigma, frame_seed(settings.seed, point_index, frames + i)) for i in range(count)
                )
                frames += count
                chunk = np.sum(np.array(outcomes, dtype=np.int64), axis=0)
                totals = chunk if totals is None else totals + chunk
            elapsed = time.perf_counter() - start if settings.timing else 0.0
            yield snr, sigma, frames, [int(v) for v in totals], elapsed


class _FrameTask:
    def __init__(self, receiver: JiddsReceiver):
        self.receiver = receiver

    def __call__(self, sigma, seed_seq):
        receiver = self.receiver
        rng = np.random.default_rng(seed_seq)
        u = rng.integers(0, 2, size=receiver.code.k, dtype=np.uint8)
        frame = run_frame(
            u, receiver.code, receiver.mapping, receiver.channel, sigma, receiver.schedule, rng, receiver=receiver
        )
        return frame.bit_errors, int(frame.frame_error)


def ber_sweep(
    receiver: JiddsReceiver,
    points: Sequence[Tuple[float, float]],
    settings: SweepSettings,
    progress: bool = False,
) -> List[SweepPoint]:
    """
    Coded BER/FER per (snr_db, sigma) point.

    Frames run in chunks of settings.batch_frames; stop rules are checked
    between chunks, so results do not depend on the worker count.
    """
    table = []
    for snr, sigma, frames, (bit_errors, frame_errors), elapsed in _run_points(
        points, settings, _FrameTask(receiver), "JIDDS sweep", progress
    ):
        point = SweepPoint(
            snr, sigma, frames, frames * receiver.code.k, bit_errors, frame_errors, elapsed, settings.seed
        )
        logger.info(
            "SNR %.3f dB sigma %.5f: %d frames, BER %.3e, FER %.3e", snr, sigma, frames, point.ber, point.fer
        )
        table.append(point)
    return table


@dataclass(frozen=True)
class DetectorComparison:
    snr_db: float
    sigma: float
    frames: int
    bits: int
    full_errors: int
    window_errors: int
    elapsed_s: float
    seed: int

    @property
    def full_ber(self) -> float:
        return self.full_errors / self.bits if self.bits else 0.0

    @property
    def window_ber(self) -> float:
        return self.window_errors / self.bits if self.bits else 0.0


class _CompareTask:
    def __init__(self, channel, shape, window, det_iterations):
        self.trellis = trellis_for(channel)
        self.shape = shape
        self.window = window
        self.det_iterations = det_iterations

    def __call__(self, sigma, seed_seq):
        rng = np.random.default_rng(seed_seq)
        x = 2 * rng.integers(0, 2, size=self.shape).astype(np.int8) - 1
        r = transmit(convolve2d(x, self.trellis.channel), sigma, rng)
        full = detect(r, sigma, self.trellis, None, self.det_iterations)
        windowed = detect_windowed(r, sigma, self.trellis, None, self.window[0], self.window[1], self.det_iterations)
        truth = x > 0
        return int(np.count_nonzero((full > 0) != truth)), int(np.count_nonzero((windowed > 0) != truth))


def detector_ber_compare(
    channel: ChannelMatrix,
    shape: Tuple[int, int],
    points: Sequence[Tuple[float, float]],
    settings: SweepSettings,
    window: Tuple[int, int] = (5, 5),
    det_iterations: int = 3,
    progress: bool = False,
) -> List[DetectorComparison]:
    """
    Uncoded detection BER of the full and the windowed detector on the same
    received pages. Stop rules apply to the full detector's error count.
    """
    bits_per_page = shape[0] * shape[1]
    table = []
    for snr, sigma, frames, (full_errors, window_errors), elapsed in _run_points(
        points, settings, _CompareTask(channel, shape, window, det_iterations), "detector compare", progress
    ):
        row = DetectorComparison(
            snr, sigma, frames, frames * bits_per_page, full_errors, window_errors, elapsed, settings.seed
        )
        logger.info("SNR %.3f dB: full BER %.3e, windowed BER %.3e", snr, row.full_ber, row.window_ber)
        table.append(row)
    return table
