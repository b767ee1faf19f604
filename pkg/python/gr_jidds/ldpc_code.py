#!/usr/bin/env python3
"""
Coset LDPC codes: construction, generator derivation, encoding and alist I/O.

Codewords satisfy H s^T = d with d = H b^T for a fixed coset vector b.
"""

import logging
import re
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .exceptions import (
    AlistFormatError,
    CodeConstructionError,
    DimensionError,
    RankDeficientError,
)

logger = logging.getLogger(__name__)

# Random partner edges tried per conflicting edge in one repair pass
_SWAP_ATTEMPTS = 64

_CODE_PARAMS = re.compile(r"^\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*$")


@dataclass(frozen=True)
class DegreeDistribution:
    """
    Edge-perspective degree distributions lambda(x) and rho(x).

    Args:
        lam: (degree, fraction) pairs for variable nodes
        rho: (degree, fraction) pairs for check nodes
    """

    lam: Tuple[Tuple[int, float], ...]
    rho: Tuple[Tuple[int, float], ...]

    def __post_init__(self):
        lam = tuple((int(i), float(f)) for i, f in self.lam if f != 0.0)
        rho = tuple((int(i), float(f)) for i, f in self.rho if f != 0.0)
        object.__setattr__(self, "lam", tuple(sorted(lam)))
        object.__setattr__(self, "rho", tuple(sorted(rho)))
        for name, pairs, min_degree in (("lambda", lam, 1), ("rho", rho, 2)):
            if not pairs:
                raise ValueError(f"{name} is empty")
            for degree, fraction in pairs:
                if degree < min_degree:
                    raise ValueError(f"{name} degree {degree} below {min_degree}")
                if not 0.0 <= fraction <= 1.0:
                    raise ValueError(f"{name} fraction {fraction} outside [0, 1]")
            total = sum(f for _, f in pairs)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"{name} fractions sum to {total!r}, expected 1")

    @classmethod
    def regular(cls, d_v: int, d_c: int) -> "DegreeDistribution":
        return cls(lam=((d_v, 1.0),), rho=((d_c, 1.0),))

    @classmethod
    def from_pcm(cls, pcm: "ParityCheckMatrix") -> "DegreeDistribution":
        """Measure the edge-perspective distributions of a concrete matrix."""
        n_edges = pcm.n_edges

        def fractions(weights):
            degrees, counts = np.unique(weights[weights > 0], return_counts=True)
            raw = [(int(d), float(d * c) / n_edges) for d, c in zip(degrees, counts)]
            # Absorb the rounding residue so the fractions sum to exactly one
            residue = 1.0 - sum(f for _, f in raw)
            raw[-1] = (raw[-1][0], raw[-1][1] + residue)
            return tuple(raw)

        return cls(lam=fractions(pcm.col_weights), rho=fractions(pcm.row_weights))

    @property
    def d_v_max(self) -> int:
        return self.lam[-1][0]

    @property
    def d_c_max(self) -> int:
        return self.rho[-1][0]

    def node_fractions(self) -> Tuple[Tuple[int, float], ...]:
        """Variable-node-perspective fractions: (lambda_i / i) / sum_j (lambda_j / j)."""
        integral = sum(f / i for i, f in self.lam)
        return tuple((i, (f / i) / integral) for i, f in self.lam)

    @property
    def design_rate(self) -> float:
        return 1.0 - sum(f / i for i, f in self.rho) / sum(f / i for i, f in self.lam)


@dataclass(frozen=True, eq=False)
class ParityCheckMatrix:
    """
    Sparse binary parity-check matrix held as row and column adjacency lists.

    Adjacency entries are 0-based and sorted. Instances are immutable and
    safe to share between worker processes.
    """

    n_rows: int
    n_cols: int
    rows: Tuple[np.ndarray, ...]
    cols: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.rows) != self.n_rows or len(self.cols) != self.n_cols:
            raise DimensionError(
                f"adjacency sizes {len(self.rows)}x{len(self.cols)} do not match {self.n_rows}x{self.n_cols}"
            )
        for adjacency in (self.rows, self.cols):
            for entry in adjacency:
                entry.setflags(write=False)
        if int(self.row_weights.sum()) != int(self.col_weights.sum()):
            raise DimensionError("row and column adjacency disagree on the edge count")

    @classmethod
    def from_edges(cls, n_rows: int, n_cols: int, edge_rows, edge_cols) -> "ParityCheckMatrix":
        """Build from parallel arrays of (row, col) coordinates; duplicates are merged."""
        edge_rows = np.asarray(edge_rows, dtype=np.int64)
        edge_cols = np.asarray(edge_cols, dtype=np.int64)
        if edge_rows.size and (edge_rows.min() < 0 or edge_rows.max() >= n_rows):
            raise DimensionError("row index out of range")
        if edge_cols.size and (edge_cols.min() < 0 or edge_cols.max() >= n_cols):
            raise DimensionError("column index out of range")
        keys = np.unique(edge_rows * n_cols + edge_cols)
        r, c = np.divmod(keys, n_cols)
        row_split = np.searchsorted(r, np.arange(1, n_rows))
        rows = tuple(a.copy() for a in np.split(c, row_split))
        order = np.lexsort((r, c))
        col_split = np.searchsorted(c[order], np.arange(1, n_cols))
        cols = tuple(a.copy() for a in np.split(r[order], col_split))
        return cls(n_rows, n_cols, rows, cols)

    @classmethod
    def from_dense(cls, matrix) -> "ParityCheckMatrix":
        matrix = np.asarray(matrix)
        if matrix.ndim != 2:
            raise DimensionError(f"expected a 2-D matrix, got shape {matrix.shape}")
        r, c = np.nonzero(matrix % 2)
        return cls.from_edges(matrix.shape[0], matrix.shape[1], r, c)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_cols), dtype=np.uint8)
        dense[self.edge_checks, self.edge_vars] = 1
        return dense

    @cached_property
    def csr(self) -> sparse.csr_matrix:
        data = np.ones(self.n_edges, dtype=np.int64)
        return sparse.csr_matrix((data, (self.edge_checks, self.edge_vars)), shape=(self.n_rows, self.n_cols))

    def to_sparse(self) -> sparse.csr_matrix:
        return self.csr.copy()

    @cached_property
    def row_weights(self) -> np.ndarray:
        return np.array([len(a) for a in self.rows], dtype=np.int64)

    @cached_property
    def col_weights(self) -> np.ndarray:
        return np.array([len(a) for a in self.cols], dtype=np.int64)

    @property
    def n_edges(self) -> int:
        return int(self.row_weights.sum())

    @cached_property
    def edge_checks(self) -> np.ndarray:
        """Check index of every edge, check-major order."""
        return np.repeat(np.arange(self.n_rows), self.row_weights)

    @cached_property
    def edge_vars(self) -> np.ndarray:
        """Variable index of every edge, check-major order."""
        if not self.n_rows:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.rows).astype(np.int64)

    def has_four_cycle(self) -> bool:
        """True when two columns share more than one row."""
        overlap = (self.csr.T @ self.csr).tocoo()
        off_diagonal = overlap.row != overlap.col
        return bool(np.any(overlap.data[off_diagonal] > 1))

    def __eq__(self, other):
        if not isinstance(other, ParityCheckMatrix):
            return NotImplemented
        return (
            self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and all(np.array_equal(a, b) for a, b in zip(self.rows, other.rows))
        )

    __hash__ = None


class SystematicGenerator(NamedTuple):
    """Generator derived by GF(2) elimination, in the original column order."""

    generator: np.ndarray
    column_permutation: np.ndarray
    rank: int
    effective_dimension: int


@dataclass(frozen=True, eq=False)
class CosetLdpcCode:
    """
    LDPC coset code: parity-check matrix, derived generator and coset vector b.

    `column_permutation[j]` is the original column placed at position j of
    the systematic form; information bits occupy the last K positions.
    """

    pcm: ParityCheckMatrix
    generator: np.ndarray
    column_permutation: np.ndarray
    coset: np.ndarray

    def __post_init__(self):
        if self.generator.shape[1] != self.pcm.n_cols:
            raise DimensionError(f"generator has {self.generator.shape[1]} columns, code length is {self.pcm.n_cols}")
        if self.coset.shape != (self.pcm.n_cols,):
            raise DimensionError(f"coset vector length {self.coset.size} != {self.pcm.n_cols}")
        for array in (self.generator, self.column_permutation, self.coset):
            array.setflags(write=False)

    @classmethod
    def from_pcm(cls, pcm: ParityCheckMatrix, coset=None, strict: bool = False) -> "CosetLdpcCode":
        derived = derive_generator(pcm, strict=strict)
        if coset is None:
            coset = np.zeros(pcm.n_cols, dtype=np.uint8)
        coset = np.asarray(coset, dtype=np.uint8) % 2
        return cls(pcm, derived.generator, derived.column_permutation, coset)

    @property
    def n(self) -> int:
        return self.pcm.n_cols

    @property
    def k(self) -> int:
        return self.generator.shape[0]

    @property
    def m(self) -> int:
        return self.pcm.n_rows

    @property
    def rate(self) -> float:
        return self.k / self.n

    @cached_property
    def syndrome_vector(self) -> np.ndarray:
        """d = H b^T"""
        d = syndrome(self.pcm, self.coset)
        d.setflags(write=False)
        return d

    @cached_property
    def info_positions(self) -> np.ndarray:
        return np.array(self.column_permutation[self.n - self.k :])

    def encode(self, u) -> np.ndarray:
        return encode(self, u)

    def extract_info(self, s) -> np.ndarray:
        """Recover u from a (possibly corrupted) word s."""
        s = np.asarray(s, dtype=np.uint8)
        if s.shape != (self.n,):
            raise DimensionError(f"word length {s.size} != {self.n}")
        return (s ^ self.coset)[self.info_positions]


def random_coset(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def construct_regular_code(
    n: int, d_v: int, d_c: int, girth_min: int = 6, seed: int = 0, max_rounds: int = 50
) -> ParityCheckMatrix:
    """
    Random regular (d_v, d_c) parity-check matrix.

    Sockets are matched by a seeded permutation, then double edges (and
    4-cycles when girth_min is 6) are removed by swapping check endpoints
    with random partner edges, which keeps every row and column weight.

    Args:
        n: Code length N
        d_v: Column weight
        d_c: Row weight
        girth_min: 4 (double edges only) or 6 (no 4-cycles)
        seed: Seed for the socket permutation and repair swaps
        max_rounds: Repair passes before giving up

    Returns:
        ParityCheckMatrix of shape (N d_v / d_c) x N
    """
    if n <= 0 or d_v <= 0 or d_c <= 0:
        raise CodeConstructionError(f"N, d_v, d_c must be positive (got {n}, {d_v}, {d_c})")
    if girth_min not in (4, 6):
        raise ValueError(f"girth_min must be 4 or 6, got {girth_min}")
    if (n * d_v) % d_c:
        raise CodeConstructionError(f"N*d_v = {n * d_v} is not divisible by d_c = {d_c}")
    m = n * d_v // d_c
    if d_v > m or d_c > n:
        raise CodeConstructionError(f"degrees ({d_v}, {d_c}) do not fit a {m}x{n} matrix")

    rng = np.random.default_rng(seed)
    edge_vars = np.repeat(np.arange(n, dtype=np.int64), d_v)
    edge_checks = rng.permutation(np.repeat(np.arange(m, dtype=np.int64), d_c))

    for round_idx in range(max_rounds):
        bad = _conflicting_edges(edge_checks, edge_vars, m, n, girth_min)
        if bad.size == 0:
            logger.info("regular (%d,%d) code N=%d built after %d repair rounds", d_v, d_c, n, round_idx)
            return ParityCheckMatrix.from_edges(m, n, edge_checks, edge_vars)
        logger.debug("repair round %d: %d conflicting edges", round_idx, bad.size)
        _repair_edges(edge_checks, edge_vars, bad, m, n, girth_min, rng)

    raise CodeConstructionError(
        f"no ({d_v},{d_c}) code with girth >= {girth_min} found for N={n} after {max_rounds} rounds"
    )


def _conflicting_edges(edge_checks, edge_vars, m, n, girth_min) -> np.ndarray:
    keys = edge_checks * n + edge_vars
    order = np.argsort(keys, kind="stable")
    repeated = keys[order][1:] == keys[order][:-1]
    bad = [order[1:][repeated]]

    if girth_min == 6:
        incidence = sparse.csr_matrix(
            (np.ones(keys.size, dtype=np.int64), (edge_checks, edge_vars)), shape=(m, n)
        )
        incidence.data[:] = 1
        overlap = sparse.triu(incidence.T @ incidence, k=1).tocoo()
        pairs = overlap.data > 1
        if np.any(pairs):
            sorted_keys = keys[order]
            csc = incidence.tocsc()
            for a, b in zip(overlap.row[pairs], overlap.col[pairs]):
                shared = np.intersect1d(
                    csc.indices[csc.indptr[a] : csc.indptr[a + 1]],
                    csc.indices[csc.indptr[b] : csc.indptr[b + 1]],
                )
                hit = np.searchsorted(sorted_keys, shared[0] * n + b)
                bad.append(order[hit : hit + 1])
    return np.unique(np.concatenate(bad))


def _repair_edges(edge_checks, edge_vars, bad, m, n, girth_min, rng):
    var_checks = [set() for _ in range(n)]
    check_vars = [set() for _ in range(m)]
    for c, v in zip(edge_checks.tolist(), edge_vars.tolist()):
        var_checks[v].add(c)
        check_vars[c].add(v)

    def fits(c, v, c_old):
        others = var_checks[v] - {c_old}
        if c in others:
            return False
        if girth_min == 6:
            members = check_vars[c] - {v}
            return all(members.isdisjoint(check_vars[o] - {v}) for o in others)
        return True

    n_edges = edge_checks.size
    for e in bad.tolist():
        c1, v1 = int(edge_checks[e]), int(edge_vars[e])
        for _ in range(_SWAP_ATTEMPTS):
            f = int(rng.integers(n_edges))
            c2, v2 = int(edge_checks[f]), int(edge_vars[f])
            if c2 == c1 or v2 == v1 or not fits(c2, v1, c1) or not fits(c1, v2, c2):
                continue
            var_checks[v1].discard(c1)
            var_checks[v1].add(c2)
            var_checks[v2].discard(c2)
            var_checks[v2].add(c1)
            check_vars[c1].discard(v1)
            check_vars[c1].add(v2)
            check_vars[c2].discard(v2)
            check_vars[c2].add(v1)
            edge_checks[e], edge_checks[f] = c2, c1
            break


def derive_generator(pcm: ParityCheckMatrix, strict: bool = False) -> SystematicGenerator:
    """
    Generator matrix of the code defined by pcm via GF(2) Gauss-Jordan elimination.

    Columns are pivoted left to right; pivot columns come first in the
    systematic form [I | P] and the permutation is returned with the
    generator, which is already expressed in the original column order.

    Args:
        pcm: Parity-check matrix
        strict: Raise RankDeficientError instead of logging a warning

    Returns:
        SystematicGenerator(generator, column_permutation, rank, effective_dimension)
    """
    reduced = pcm.to_dense().astype(bool)
    m, n = reduced.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        hits = np.flatnonzero(reduced[row:, col])
        if hits.size == 0:
            continue
        pivot = row + int(hits[0])
        if pivot != row:
            reduced[[row, pivot]] = reduced[[pivot, row]]
        mask = reduced[:, col].copy()
        mask[row] = False
        reduced[mask] ^= reduced[row]
        pivots.append(col)
        row += 1

    rank = row
    k = n - rank
    if rank < m:
        message = f"parity-check matrix has rank {rank} < {m} rows; effective dimension K={k}"
        if strict:
            raise RankDeficientError(message, k)
        logger.warning(message)

    is_pivot = np.zeros(n, dtype=bool)
    is_pivot[pivots] = True
    free = np.flatnonzero(~is_pivot)
    permutation = np.concatenate([np.array(pivots, dtype=np.int64), free])

    parity = reduced[:rank][:, free]
    generator = np.zeros((k, n), dtype=np.uint8)
    generator[:, permutation] = np.hstack([parity.T, np.eye(k, dtype=bool)])
    return SystematicGenerator(generator, permutation, rank, k)


def encode(code: CosetLdpcCode, u) -> np.ndarray:
    """s = (u G) xor b"""
    u = np.asarray(u, dtype=np.int64)
    if u.shape != (code.k,):
        raise DimensionError(f"information word length {u.size} != K={code.k}")
    s = (u @ code.generator.astype(np.int64)) % 2
    return s.astype(np.uint8) ^ code.coset


def syndrome(pcm: ParityCheckMatrix, s) -> np.ndarray:
    """H s^T over GF(2)"""
    s = np.asarray(s, dtype=np.int64)
    if s.shape != (pcm.n_cols,):
        raise DimensionError(f"word length {s.size} != N={pcm.n_cols}")
    return (pcm.csr @ s % 2).astype(np.uint8)


def load_alist(path) -> ParityCheckMatrix:
    """Read a MacKay alist file. Zero padding in adjacency lines is ignored."""
    with open(path, "r") as f:
        lines = [line.split() for line in f if line.strip()]
    try:
        n, m = (int(x) for x in lines[0])
        max_col, max_row = (int(x) for x in lines[1])
        col_weights = [int(x) for x in lines[2]]
        row_weights = [int(x) for x in lines[3]]
    except (IndexError, ValueError) as e:
        raise AlistFormatError(f"{path}: malformed header: {e}")

    if len(col_weights) != n or len(row_weights) != m:
        raise AlistFormatError(f"{path}: expected {n} column and {m} row weights")
    if len(lines) < 4 + n + m:
        raise AlistFormatError(f"{path}: truncated, {len(lines)} lines for N={n}, M={m}")
    if max(col_weights, default=0) > max_col or max(row_weights, default=0) > max_row:
        raise AlistFormatError(f"{path}: weight exceeds declared maximum")

    def adjacency(block, weights, bound):
        entries = []
        for idx, (tokens, weight) in enumerate(zip(block, weights)):
            try:
                values = [int(x) for x in tokens if int(x) != 0]
            except ValueError as e:
                raise AlistFormatError(f"{path}: bad adjacency entry: {e}")
            if len(values) != weight:
                raise AlistFormatError(f"{path}: list {idx + 1} has {len(values)} entries, weight says {weight}")
            if any(v < 1 or v > bound for v in values):
                raise AlistFormatError(f"{path}: index out of range in list {idx + 1}")
            entries.append(values)
        return entries

    col_lists = adjacency(lines[4 : 4 + n], col_weights, m)
    row_lists = adjacency(lines[4 + n : 4 + n + m], row_weights, n)

    edge_rows = [r - 1 for c, rows in enumerate(col_lists) for r in rows]
    edge_cols = [c for c, rows in enumerate(col_lists) for _ in rows]
    pcm = ParityCheckMatrix.from_edges(m, n, edge_rows, edge_cols)
    if sorted((r - 1, c - 1) for r, cols in enumerate(row_lists, start=1) for c in cols) != sorted(
        zip(edge_rows, edge_cols)
    ):
        raise AlistFormatError(f"{path}: row and column lists disagree")
    return pcm


def save_alist(pcm: ParityCheckMatrix, path) -> None:
    lines = [
        f"{pcm.n_cols} {pcm.n_rows}",
        f"{int(pcm.col_weights.max(initial=0))} {int(pcm.row_weights.max(initial=0))}",
        " ".join(str(w) for w in pcm.col_weights),
        " ".join(str(w) for w in pcm.row_weights),
    ]
    lines += [" ".join(str(int(r) + 1) for r in col) for col in pcm.cols]
    lines += [" ".join(str(int(c) + 1) for c in row) for row in pcm.rows]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_code(
    alist_path: Optional[str] = None,
    params: Optional[Sequence[int]] = None,
    girth_min: int = 6,
    seed: int = 0,
    coset: str = "zero",
    coset_seed: int = 0,
) -> CosetLdpcCode:
    """
    Build a coset code from exactly one source: an alist file or (N, d_v, d_c).

    Args:
        coset: "zero" for b = 0 or "random" for a seeded random b
    """
    if (alist_path is None) == (params is None):
        raise ValueError("exactly one of alist_path and params must be given")
    if alist_path is not None:
        pcm = load_alist(alist_path)
    else:
        n, d_v, d_c = params
        pcm = construct_regular_code(n, d_v, d_c, girth_min=girth_min, seed=seed)
    if coset == "zero":
        b = None
    elif coset == "random":
        b = random_coset(pcm.n_cols, np.random.default_rng(coset_seed))
    else:
        raise ValueError(f"unknown coset kind {coset!r}")
    return CosetLdpcCode.from_pcm(pcm, coset=b)


def parse_code_params(text: str) -> Optional[Tuple[int, int, int]]:
    """(N, d_v, d_c) from "N,DV,DC", None for anything else (an alist path)."""
    match = _CODE_PARAMS.match(text)
    return tuple(int(x) for x in match.groups()) if match else None


def code_from_spec(text: str, girth_min: int = 6, seed: int = 0, coset: str = "zero") -> CosetLdpcCode:
    """Alist path or "N,DV,DC"; seed drives both construction and a random coset."""
    params = parse_code_params(text)
    if params is not None:
        return load_code(params=params, girth_min=girth_min, seed=seed, coset=coset, coset_seed=seed)
    return load_code(alist_path=text, coset=coset, coset_seed=seed)
