#!/usr/bin/env python3
"""
Density evolution for the joint detector/decoder.

Densities of correct LLRs (LLR times the true bipolar bit) are held as
quantized histograms on a symmetric grid with explicit masses at +-inf.
The decoder stages are evaluated exactly on the grid; the detector stage
is estimated by Monte Carlo on i.u.d. pages.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from .channel2d import ChannelMatrix, convolve2d
from .detector2d import detect_batch, trellis_for
from .exceptions import BracketError, DensityError, DimensionError
from .ldpc_code import DegreeDistribution

logger = logging.getLogger(__name__)

MODES = ("te", "non-te")


@dataclass(frozen=True)
class QuantizationGrid:
    """Bin centers k * delta for k = -n_half..n_half, n_half = llr_max / delta."""

    llr_max: float = 50.0
    delta: float = 0.05

    def __post_init__(self):
        if self.delta <= 0 or self.llr_max <= 0:
            raise ValueError(f"grid needs positive llr_max and delta, got {self.llr_max}, {self.delta}")
        ratio = self.llr_max / self.delta
        if abs(ratio - round(ratio)) > 1e-6:
            raise ValueError(f"llr_max {self.llr_max} is not a multiple of delta {self.delta}")

    @property
    def n_half(self) -> int:
        return int(round(self.llr_max / self.delta))

    @property
    def n_bins(self) -> int:
        return 2 * self.n_half + 1

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) - self.n_half) * self.delta

    def index_of(self, values) -> np.ndarray:
        """Nearest bin index; may fall outside 0..n_bins-1 for out-of-range values."""
        return np.rint(np.asarray(values, dtype=np.float64) / self.delta).astype(np.int64) + self.n_half


@dataclass(frozen=True, eq=False)
class LlrHistogram:
    """Probability masses on grid bins plus point masses at -inf and +inf."""

    grid: QuantizationGrid
    mass: np.ndarray
    neg_inf: float = 0.0
    pos_inf: float = 0.0

    def __post_init__(self):
        if self.mass.shape != (self.grid.n_bins,):
            raise DimensionError(f"histogram has {self.mass.size} bins, grid has {self.grid.n_bins}")

    @classmethod
    def point(cls, grid: QuantizationGrid, value: float) -> "LlrHistogram":
        """delta(value); values beyond the grid become +-inf."""
        mass = np.zeros(grid.n_bins)
        if value == np.inf:
            return cls(grid, mass, pos_inf=1.0)
        if value == -np.inf:
            return cls(grid, mass, neg_inf=1.0)
        idx = int(grid.index_of(value))
        if idx < 0:
            return cls(grid, mass, neg_inf=1.0)
        if idx >= grid.n_bins:
            return cls(grid, mass, pos_inf=1.0)
        mass[idx] = 1.0
        return cls(grid, mass)

    @classmethod
    def from_samples(cls, grid: QuantizationGrid, samples) -> "LlrHistogram":
        samples = np.asarray(samples, dtype=np.float64).ravel()
        if samples.size == 0 or np.any(np.isnan(samples)):
            raise ValueError("histogram needs a non-empty, NaN-free sample")
        finite = np.isfinite(samples)
        idx = np.where(finite, grid.index_of(np.where(finite, samples, 0.0)), 0)
        low = (~finite & (samples < 0)) | (finite & (idx < 0))
        high = (~finite & (samples > 0)) | (finite & (idx >= grid.n_bins))
        inside = ~(low | high)
        mass = np.bincount(idx[inside], minlength=grid.n_bins).astype(np.float64)
        total = float(samples.size)
        return cls(grid, mass / total, neg_inf=np.count_nonzero(low) / total, pos_inf=np.count_nonzero(high) / total)

    @classmethod
    def gaussian(cls, grid: QuantizationGrid, mean: float, variance: float) -> "LlrHistogram":
        """N(mean, variance) integrated over each bin; tails go to +-inf."""
        std = math.sqrt(variance)
        edges = np.append(grid.centers - grid.delta / 2, grid.centers[-1] + grid.delta / 2)
        cdf = norm.cdf(edges, loc=mean, scale=std)
        return cls(grid, np.diff(cdf), neg_inf=float(cdf[0]), pos_inf=float(norm.sf(edges[-1], loc=mean, scale=std)))

    def total_mass(self) -> float:
        return float(self.mass.sum() + self.neg_inf + self.pos_inf)

    def normalized(self) -> "LlrHistogram":
        """Copy rescaled to unit total mass."""
        total = self.total_mass()
        if not (math.isfinite(total) and total > 0.0):
            raise DensityError(f"histogram total mass is {total}")
        return LlrHistogram(self.grid, self.mass / total, self.neg_inf / total, self.pos_inf / total)

    def mean(self) -> float:
        """Mean of the finite part."""
        finite = self.mass.sum()
        return float(np.dot(self.grid.centers, self.mass) / finite) if finite > 0 else 0.0

    def error_probability(self) -> float:
        return p_iud(self)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw LLRs; the infinite masses come out as +-llr_max."""
        probs = np.concatenate([[self.neg_inf], self.mass, [self.pos_inf]])
        cdf = np.cumsum(probs)
        draws = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
        draws = np.minimum(draws, probs.size - 1)
        values = np.concatenate([[-self.grid.llr_max], self.grid.centers, [self.grid.llr_max]])
        return values[draws]

    def scaled(self, weight: float) -> Tuple[np.ndarray, float, float]:
        return self.mass * weight, self.neg_inf * weight, self.pos_inf * weight


def _mixture(grid: QuantizationGrid, terms: List[Tuple[float, LlrHistogram]]) -> LlrHistogram:
    mass = np.zeros(grid.n_bins)
    neg = pos = 0.0
    for weight, hist in terms:
        m, n, p = hist.scaled(weight)
        mass += m
        neg += n
        pos += p
    return LlrHistogram(grid, mass, neg, pos).normalized()


def _same_grid(a: LlrHistogram, b: LlrHistogram) -> QuantizationGrid:
    if a.grid != b.grid:
        raise DimensionError(f"histogram grids differ: {a.grid} vs {b.grid}")
    return a.grid


def hist_convolve(a: LlrHistogram, b: LlrHistogram) -> LlrHistogram:
    """Density of the sum of independent LLRs; sums beyond the grid saturate to +-inf."""
    grid = _same_grid(a, b)
    n = grid.n_half
    full = np.convolve(a.mass, b.mass)
    mass = full[n : 3 * n + 1].copy()
    finite_a = a.mass.sum()
    finite_b = b.mass.sum()

    # +inf and -inf cancel into the zero bin
    mass[n] += a.pos_inf * b.neg_inf + a.neg_inf * b.pos_inf
    pos = full[3 * n + 1 :].sum() + a.pos_inf * (finite_b + b.pos_inf) + finite_a * b.pos_inf
    neg = full[:n].sum() + a.neg_inf * (finite_b + b.neg_inf) + finite_a * b.neg_inf
    # Rounding error compounds geometrically over decoder iterations
    return LlrHistogram(grid, mass, float(neg), float(pos)).normalized()


def _phi(x):
    with np.errstate(divide="ignore", over="ignore"):
        return np.log1p(2.0 / np.expm1(x))


@lru_cache(maxsize=4)
def _check_table(grid: QuantizationGrid) -> np.ndarray:
    """Bin index of 2 atanh(tanh(a/2) tanh(b/2)) for every pair of bin centers."""
    c = grid.centers
    mag = _phi(np.abs(c))
    with np.errstate(invalid="ignore"):
        out = np.sign(c)[:, None] * np.sign(c)[None, :] * _phi(mag[:, None] + mag[None, :])
    out = np.nan_to_num(out, nan=0.0)
    table = np.clip(grid.index_of(out), 0, grid.n_bins - 1).astype(np.int32)
    table.setflags(write=False)
    return table


def check_fold(a: LlrHistogram, b: LlrHistogram) -> LlrHistogram:
    """Density of the two-input check operation on independent LLRs."""
    grid = _same_grid(a, b)
    table = _check_table(grid)
    mass = np.bincount(table.ravel(), weights=np.outer(a.mass, b.mass).ravel(), minlength=grid.n_bins)
    # +inf passes the other input through, -inf flips its sign
    mass += a.pos_inf * b.mass + a.neg_inf * b.mass[::-1] + b.pos_inf * a.mass + b.neg_inf * a.mass[::-1]
    pos = a.pos_inf * b.pos_inf + a.neg_inf * b.neg_inf
    neg = a.pos_inf * b.neg_inf + a.neg_inf * b.pos_inf
    return LlrHistogram(grid, mass, float(neg), float(pos)).normalized()


def _power(base: LlrHistogram, exponent: int, op, identity: LlrHistogram, cache: Dict[int, LlrHistogram]):
    """op-fold of exponent copies of base by squaring; cache holds powers of two."""
    result = identity
    bit = 1
    square = base
    remaining = exponent
    while remaining:
        if bit not in cache:
            cache[bit] = square
        square = cache[bit]
        if remaining & 1:
            result = square if result is identity else op(result, square)
        remaining >>= 1
        if remaining:
            if 2 * bit not in cache:
                cache[2 * bit] = op(square, square)
            square = cache[2 * bit]
        bit *= 2
    return result


def check_node_density(f_z: LlrHistogram, rho) -> LlrHistogram:
    """f_q = sum_i rho_i * (f_z folded i - 1 times through the check operation)."""
    rho = rho.rho if isinstance(rho, DegreeDistribution) else rho
    grid = f_z.grid
    identity = LlrHistogram.point(grid, np.inf)
    cache: Dict[int, LlrHistogram] = {}
    return _mixture(grid, [(w, _power(f_z, i - 1, check_fold, identity, cache)) for i, w in rho])


def variable_node_density(f_tau: LlrHistogram, f_q: LlrHistogram, lam) -> LlrHistogram:
    """f_z = f_tau * sum_i lambda_i f_q^{*(i - 1)}"""
    lam = lam.lam if isinstance(lam, DegreeDistribution) else lam
    grid = _same_grid(f_tau, f_q)
    identity = LlrHistogram.point(grid, 0.0)
    cache: Dict[int, LlrHistogram] = {}
    mixed = _mixture(grid, [(w, _power(f_q, i - 1, hist_convolve, identity, cache)) for i, w in lam])
    return hist_convolve(f_tau, mixed)


def ext2_density(f_tau: LlrHistogram, f_q: LlrHistogram, degrees: DegreeDistribution, include_channel=True):
    """
    Density of the decoder-to-detector message: full-degree sums of check
    messages mixed by node-perspective fractions, convolved with f_tau
    unless include_channel is False.
    """
    grid = _same_grid(f_tau, f_q)
    identity = LlrHistogram.point(grid, 0.0)
    cache: Dict[int, LlrHistogram] = {}
    mixed = _mixture(grid, [(w, _power(f_q, i, hist_convolve, identity, cache)) for i, w in degrees.node_fractions()])
    return hist_convolve(f_tau, mixed) if include_channel else mixed


def p_iud(f: LlrHistogram) -> float:
    """Mass below zero, with the zero bin split evenly."""
    n = f.grid.n_half
    return float(f.neg_inf + f.mass[:n].sum() + 0.5 * f.mass[n])


def _channel_pages(f_ext2, channel, sigma, shape, margin, det_iterations, n_pages, seed_seq):
    rng = np.random.default_rng(seed_seq)
    n_rows, n_cols = shape
    x = 2 * rng.integers(0, 2, size=(n_pages, n_rows, n_cols)).astype(np.int8) - 1
    y = np.stack([convolve2d(page, channel) for page in x])
    r = y + sigma * rng.standard_normal(y.shape)
    prior = f_ext2.sample(rng, x.shape) * x
    ext = detect_batch(r, sigma, trellis_for(channel), prior, det_iterations)
    tau = ext * x
    return tau[:, margin : n_rows - margin, margin : n_cols - margin].ravel()


def channel_stage_mc(
    f_ext2: LlrHistogram,
    channel: ChannelMatrix,
    sigma: float,
    samples: int,
    rng: np.random.Generator,
    page_shape: Tuple[int, int] = (64, 64),
    margin: int = 5,
    det_iterations: int = 3,
    pages_per_task: int = 4,
    workers: int = 1,
) -> LlrHistogram:
    """
    Monte-Carlo density of the detector's correct extrinsic LLR.

    Random i.u.d. pages are sent through the channel, decoder priors are
    drawn independently from f_ext2 and sign-corrected by the true bit, and
    only bits at least `margin` away from the page edge are harvested.
    """
    n_rows, n_cols = page_shape
    interior = (n_rows - 2 * margin) * (n_cols - 2 * margin)
    if interior <= 0:
        raise ValueError(f"margin {margin} leaves no interior in a {n_rows}x{n_cols} page")
    if samples < 1:
        raise ValueError(f"samples must be positive, got {samples}")
    n_tasks = math.ceil(samples / (interior * pages_per_task))
    seeds = np.random.SeedSequence(int(rng.integers(2**63))).spawn(n_tasks)
    chunks = Parallel(n_jobs=workers)(
        delayed(_channel_pages)(f_ext2, channel, sigma, page_shape, margin, det_iterations, pages_per_task, s)
        for s in seeds
    )
    tau = np.concatenate(chunks)[:samples]
    return LlrHistogram.from_samples(f_ext2.grid, tau)


def channel_stage_gaussian(grid: QuantizationGrid, channel: ChannelMatrix, sigma: float) -> LlrHistogram:
    """Exact density for a 1x1 channel: tau ~ N(2h^2/sigma^2, 4h^2/sigma^2)."""
    if not channel.is_memoryless:
        raise ValueError("closed-form channel stage needs a 1x1 channel")
    h2 = channel.energy
    return LlrHistogram.gaussian(grid, 2.0 * h2 / sigma**2, 4.0 * h2 / sigma**2)


@dataclass(frozen=True)
class DeSettings:
    """
    Density-evolution knobs; every field is recorded next to the results.

    stall_rounds / stall_rel: te mode reports stuck once p has not dropped by
    the relative amount stall_rel over stall_rounds outer rounds.

    ext2_includes_channel: feed the detector f_tau * lambda_bar(f_q) instead
    of the check-message sums alone. The receiver passes only the check
    messages, so the default leaves f_tau out.
    """

    samples: int = 100_000
    llr_max: float = 50.0
    delta: float = 0.05
    p_ers: float = 1e-6
    p_zero_tol: float = 1e-8
    max_outer: int = 20
    max_inner: int = 1000
    det_iterations: int = 3
    page_rows: int = 64
    page_cols: int = 64
    margin: int = 5
    stall_rounds: int = 3
    stall_rel: float = 0.02
    ext2_includes_channel: bool = False
    analytic_memoryless: bool = True
    pages_per_task: int = 4
    workers: int = 1

    @property
    def grid(self) -> QuantizationGrid:
        return QuantizationGrid(self.llr_max, self.delta)


@dataclass
class DeTrace:
    """(t, l, p) after every inner step, p at the end of every outer round and the verdict."""

    sigma: float
    mode: str
    points: List[Tuple[int, int, float]] = field(default_factory=list)
    rounds: List[Tuple[int, int, float]] = field(default_factory=list)
    status: str = "stuck"

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_p(self) -> float:
        return self.rounds[-1][2] if self.rounds else 1.0


def _inner_stalled(previous: float, p: float, settings: DeSettings) -> bool:
    # Relative step once p is below one error-rate step
    if p < settings.p_ers:
        return p >= (1.0 - settings.stall_rel) * previous
    return previous - p < settings.p_ers


def de_run(
    degrees: DegreeDistribution,
    channel: ChannelMatrix,
    sigma: float,
    settings: DeSettings,
    rng: np.random.Generator,
    mode: str = "te",
) -> DeTrace:
    """
    Track p_iud through detector and decoder stages.

    Inner decoder iterations continue until p improves by less than
    settings.p_ers (by less than the fraction stall_rel once p itself is
    below p_ers); mode "non-te" runs a single outer round.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if mode not in MODES:
        raise ValueError(f"unknown DE mode {mode!r}")
    grid = settings.grid
    analytic = settings.analytic_memoryless and channel.is_memoryless
    max_outer = 1 if mode == "non-te" or analytic else settings.max_outer
    trace = DeTrace(sigma=sigma, mode=mode)
    f_ext2 = LlrHistogram.point(grid, 0.0)
    zero = LlrHistogram.point(grid, 0.0)

    for t in range(1, max_outer + 1):
        if analytic:
            f_tau = channel_stage_gaussian(grid, channel, sigma)
        else:
            f_tau = channel_stage_mc(
                f_ext2,
                channel,
                sigma,
                settings.samples,
                rng,
                page_shape=(settings.page_rows, settings.page_cols),
                margin=settings.margin,
                det_iterations=settings.det_iterations,
                pages_per_task=settings.pages_per_task,
                workers=settings.workers,
            )

        f_q = zero
        previous = None
        for l in range(1, settings.max_inner + 1):
            f_z = variable_node_density(f_tau, f_q, degrees)
            p = p_iud(f_z)
            trace.points.append((t, l, p))
            if p < settings.p_zero_tol:
                trace.rounds.append((t, l, p))
                trace.status = "converged"
                logger.info("sigma %.4f: converged at t=%d, l=%d", sigma, t, l)
                return trace
            f_q = check_node_density(f_z, degrees)
            if previous is not None and _inner_stalled(previous, p, settings):
                break
            previous = p
        trace.rounds.append((t, l, p))
        logger.info("sigma %.4f: t=%d p=%.6f after %d decoder iterations", sigma, t, p, l)

        if t > settings.stall_rounds:
            earlier = trace.rounds[-1 - settings.stall_rounds][2]
            if p >= (1.0 - settings.stall_rel) * earlier:
                break
        f_ext2 = ext2_density(f_tau, f_q, degrees, include_channel=settings.ext2_includes_channel)

    logger.info("sigma %.4f: stuck at p=%.6f (%s)", sigma, trace.final_p, mode)
    return trace


@dataclass
class ThresholdReport:
    sigma: float
    lo: float
    hi: float
    tol: float
    mode: str
    norm: float
    rate: float
    history: List[Tuple[float, float, float, str]] = field(default_factory=list)

    @property
    def normalized_sigma(self) -> float:
        return self.sigma / self.norm

    @property
    def snr_db(self) -> float:
        return float(10.0 * np.log10(self.norm**2 / (2.0 * self.rate * self.sigma**2)))

    def to_text(self) -> str:
        lines = [
            f"sigma={self.sigma:.9g}",
            f"tol={self.tol:.9g}",
            f"mode={self.mode}",
            f"norm={self.norm:.9g}",
            f"normalized_sigma={self.normalized_sigma:.9g}",
            f"snr_db={self.snr_db:.9g}",
            f"bracket={self.lo:.9g}:{self.hi:.9g}",
        ]
        lines += [f"step{i}={lo:.9g}:{hi:.9g} mid={mid:.9g} {status}" for i, (lo, hi, mid, status) in enumerate(self.history)]
        return "\n".join(lines) + "\n"


def threshold_search(
    degrees: DegreeDistribution,
    channel: ChannelMatrix,
    mode: str = "te",
    tol: float = 0.01,
    bracket: Tuple[float, float] = (0.3, 1.5),
    settings: Optional[DeSettings] = None,
    seed: int = 0,
) -> ThresholdReport:
    """
    Largest sigma for which DE converges, by bisection to bracket width <= tol.

    Raises BracketError unless the low end converges and the high end is stuck.
    """
    if mode not in MODES:
        raise ValueError(f"unknown DE mode {mode!r}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    settings = settings or DeSettings()
    lo, hi = bracket
    if not 0 < lo < hi:
        raise BracketError(f"bracket ({lo}, {hi}) must satisfy 0 < lo < hi")

    step = 0

    def converges(sigma):
        nonlocal step
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(step,)))
        step += 1
        return de_run(degrees, channel, sigma, settings, rng, mode=mode).converged

    if not converges(lo):
        raise BracketError(f"low end sigma={lo} does not converge")
    if converges(hi):
        raise BracketError(f"high end sigma={hi} converges")

    report = ThresholdReport(
        sigma=0.5 * (lo + hi), lo=lo, hi=hi, tol=tol, mode=mode, norm=channel.norm, rate=degrees.design_rate
    )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok = converges(mid)
        report.history.append((lo, hi, mid, "converged" if ok else "stuck"))
        if ok:
            lo = mid
        else:
            hi = mid
        logger.info("threshold bracket [%.5f, %.5f]", lo, hi)
    report.lo, report.hi, report.sigma = lo, hi, 0.5 * (lo + hi)
    return report
