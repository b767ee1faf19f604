#!/usr/bin/env python3
"""
Message-flow neighborhood sizes of the joint detector/decoder graph and
the probability bound that a neighborhood of depth t is a tree.

Counts are exact Python integers; they grow doubly exponentially.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, List, NamedTuple, Optional, Tuple

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeighborhoodParams:
    """
    t: detector/decoder rounds, I_c: decoder iterations per round,
    F_c x F_d: detector window half widths, N / K: code length and dimension
    (K defaults to the design dimension N (1 - d_v / d_c)).
    """

    t: int
    I_c: int
    d_v: int
    d_c: int
    F_c: int = 1
    F_d: int = 1
    N: int = 1_000_000
    K: Optional[int] = None

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"t must be non-negative, got {self.t}")
        for name in ("I_c", "F_c", "F_d", "N"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_v < 2 or self.d_c < 2:
            raise ValueError(f"degrees must be at least 2, got d_v={self.d_v}, d_c={self.d_c}")
        if self.K is None:
            object.__setattr__(self, "K", self.N - (self.N * self.d_v) // self.d_c)
        if not 0 <= self.K < self.N:
            raise ValueError(f"K={self.K} must lie in [0, N={self.N})")

    @property
    def M(self) -> int:
        return self.N - self.K

    @property
    def detector_fanout(self) -> int:
        """Detector neighbours of one variable node: 4 F_c F_d - 1."""
        return 4 * self.F_c * self.F_d - 1

    def at_depth(self, t: int) -> "NeighborhoodParams":
        return NeighborhoodParams(t, self.I_c, self.d_v, self.d_c, self.F_c, self.F_d, self.N, self.K)


def _branching(p: NeighborhoodParams) -> int:
    return (p.d_v - 1) * (p.d_c - 1)


def q_v(params: NeighborhoodParams) -> int:
    """Variable nodes in the depth-t neighborhood."""
    a = _branching(params)
    decoder = sum(a**i for i in range(params.I_c))
    subtree = 1 + params.d_v * sum((params.d_v - 1) ** (i - 1) * (params.d_c - 1) ** i for i in range(1, params.I_c))
    x = params.detector_fanout * subtree
    return decoder + a ** (params.I_c - 1) * sum(x**j for j in range(1, params.t + 1))


def q_c(params: NeighborhoodParams) -> int:
    """
    Check nodes in the depth-t neighborhood, by the closed form.

    The closed form equals the literal count of unroll_neighborhood only
    when t <= 1 or I_c == 1. For t >= 2 with I_c > 1 the unrolled tree
    holds more checks than this returns.
    """
    a = _branching(params)
    decoder = 1 + (params.d_v - 1) * sum(a**i for i in range(params.I_c - 1))
    y = params.detector_fanout * params.d_v * sum(a ** (i - 1) for i in range(1, params.I_c))
    return decoder + a ** (params.I_c - 1) * sum(y**j for j in range(1, params.t + 1))


class GammaBound(NamedTuple):
    gamma: Fraction
    bound: float


def gamma_bound(params: NeighborhoodParams) -> GammaBound:
    """gamma = Q_v^2 + (d_c / d_v) Q_c^2; P(not tree-like) <= gamma / N, capped at 1."""
    qv, qc = q_v(params), q_c(params)
    gamma = Fraction(qv * qv) + Fraction(params.d_c, params.d_v) * qc * qc
    ratio = gamma / params.N
    if qv >= params.N or qc >= params.M or ratio >= 1:
        logger.info("neighborhood (Q_v=%d, Q_c=%d) too large for N=%d; bound is vacuous", qv, qc, params.N)
        return GammaBound(gamma, 1.0)
    return GammaBound(gamma, float(ratio))


def tree_probability_lower_bound(params: NeighborhoodParams) -> float:
    """(1 - Q_v/N)^Q_v (1 - Q_c/M)^Q_c, 0 when the neighborhood outgrows the graph."""
    qv, qc = q_v(params), q_c(params)
    if qv >= params.N or qc >= params.M:
        return 0.0
    log_p = qv * math.log1p(-qv / params.N) + qc * math.log1p(-qc / params.M)
    return math.exp(log_p)


class _Node(NamedTuple):
    kind: str
    depth: int


def _decoder_tree(root_edges: int, iterations: int, d_v: int, d_c: int) -> Iterator[_Node]:
    """
    Nodes hanging below a variable node that contributes `root_edges` check
    edges, unrolled for `iterations` decoder iterations (root excluded).
    """
    frontier = [(_Node("v", 0), root_edges)]
    for depth in range(1, iterations):
        grown = []
        for _, edges in frontier:
            for _ in range(edges):
                yield _Node("c", depth)
                for _ in range(d_c - 1):
                    child = _Node("v", depth)
                    yield child
                    grown.append((child, d_v - 1))
        frontier = grown


def unroll_neighborhood(params: NeighborhoodParams) -> Tuple[int, int]:
    """
    Grow the message-flow tree node by node and count (variables, checks).

    The root edge contributes its check node and an I_c-iteration decoder
    tree over the d_v - 1 other edges of its variable. Every frontier
    variable then pulls in 4 F_c F_d - 1 detector neighbours per round,
    each bringing an (I_c - 1)-iteration decoder tree over all d_v edges;
    every variable brought in by a round is frontier for the next one.
    """
    d_v, d_c = params.d_v, params.d_c
    n_vars, n_checks = 1, 1
    leaves = 0
    for node in _decoder_tree(d_v - 1, params.I_c, d_v, d_c):
        if node.kind == "v":
            n_vars += 1
            leaves += node.depth == params.I_c - 1
        else:
            n_checks += 1
    frontier_size = leaves if params.I_c > 1 else 1

    for _ in range(params.t):
        new_vars = 0
        for _ in range(frontier_size):
            for _ in range(params.detector_fanout):
                new_vars += 1
                for node in _decoder_tree(d_v, params.I_c, d_v, d_c):
                    if node.kind == "v":
                        new_vars += 1
                    else:
                        n_checks += 1
        n_vars += new_vars
        frontier_size = new_vars
    return n_vars, n_checks


def neighborhood_table(params: NeighborhoodParams, t_max: int) -> List[Tuple[int, int, int, float]]:
    """Rows (t, Q_v, Q_c, gamma/N) for t = 0..t_max."""
    rows = []
    for t in range(t_max + 1):
        p = params.at_depth(t)
        rows.append((t, q_v(p), q_c(p), gamma_bound(p).bound))
    return rows
