"""Multi-index combinatorics and tensor-product constructions.

The central objects are dense matrices whose columns are indexed by
non-decreasing index tuples: the symmetrized Kronecker lift of a matrix, the
permutation-averaging selector that converts a full Kronecker power into that
lift, and sparse merge operators that multiply monomial coefficient vectors.

All tensor reshaping is row-major with mode 1 slowest, so ``np.kron`` of
column vectors and ``ndarray.reshape`` agree with the flattening used here.
Every function is pure; returned arrays are owned by the caller.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.sparse as sp

# Hard cap on materialized index sets; lifts are dense and desk-scale.
MAX_INDEX_COUNT = 2**26


class LiftSizeError(ValueError):
    """Requested index set or lift is too large to materialize."""


def _check_size(n: int, d: int) -> int:
    count = math.comb(n + d - 1, d)
    if count > MAX_INDEX_COUNT:
        raise LiftSizeError(
            f"C({n}+{d}-1,{d}) = {count} exceeds the materialization cap {MAX_INDEX_COUNT}"
        )
    return count


@dataclass(frozen=True)
class MultiIndex:
    """A non-decreasing d-tuple over 1..n; canonical column label for lifts."""

    entries: tuple[int, ...]
    n: int

    def __post_init__(self):
        if not self.entries:
            raise ValueError("MultiIndex needs at least one entry")
        if any(e < 1 or e > self.n for e in self.entries):
            raise ValueError(f"entries {self.entries} out of range 1..{self.n}")
        if any(a > b for a, b in zip(self.entries, self.entries[1:])):
            raise ValueError(f"entries {self.entries} are not non-decreasing")

    @property
    def d(self) -> int:
        return len(self.entries)

    def multiplicities(self) -> list[int]:
        """Multiplicity of each distinct value, in order of appearance."""
        return [len(list(g)) for _, g in itertools.groupby(self.entries)]

    def orbit_size(self) -> int:
        """Number of distinct orderings of the tuple."""
        return math.factorial(self.d) // math.prod(
            math.factorial(t) for t in self.multiplicities())

    def rank(self) -> int:
        """1-based position in the lexicographic enumeration."""
        n, d = self.n, self.d
        r = 0
        prev = 1
        for pos, v in enumerate(self.entries):
            for w in range(prev, v):
                remaining = d - pos - 1
                r += math.comb((n - w + 1) + remaining - 1, remaining)
            prev = v
        return r + 1


def enumerate_multi_indices(n: int, d: int) -> list[MultiIndex]:
    """All non-decreasing d-tuples over 1..n in lexicographic order."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be at least 1")
    _check_size(n, d)
    return [MultiIndex(entries, n)
            for entries in itertools.combinations_with_replacement(range(1, n + 1), d)]


def _flat_index(entries: tuple[int, ...], n: int) -> int:
    """Row-major position of a 1-based tuple in the full n**d coordinate space."""
    idx = 0
    for e in entries:
        idx = idx * n + (e - 1)
    return idx


@dataclass(frozen=True)
class LiftMatrix:
    """A dense lift with its column-index bookkeeping.

    ``kind`` is ``"symmetrized"`` (columns indexed by non-decreasing tuples,
    each a permutation average) or ``"full_kron"`` (all m**d ordered tuples).
    """

    data: np.ndarray
    n: int
    m: int
    d: int
    kind: str
    column_order: list[MultiIndex] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("symmetrized", "full_kron"):
            raise ValueError(f"unknown lift kind {self.kind!r}")
        expected = (math.comb(self.m + self.d - 1, self.d)
                    if self.kind == "symmetrized" else self.m**self.d)
        if self.data.shape[1] != expected:
            raise ValueError(
                f"{self.kind} lift must have {expected} columns, got {self.data.shape[1]}")

    def descriptor(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "d": self.d,
            "kind": self.kind,
            "column_order": [list(ix.entries) for ix in self.column_order],
        }


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kronecker product; block (i, j) of the result is A[i, j] * B."""
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def kron_power(U: np.ndarray, d: int) -> np.ndarray:
    """d-fold Kronecker power of U."""
    U = np.asarray(U, dtype=float)
    if d < 1:
        raise ValueError("d must be at least 1")
    return reduce(np.kron, [U] * d)


def khatri_rao(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Columnwise Kronecker product; column i is a_i tensor b_i."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    na, nb, m = A.shape[0], B.shape[0], A.shape[1]
    return (A[:, None, :] * B[None, :, :]).reshape(na * nb, m)


def sym_kron(factors: list[np.ndarray]) -> LiftMatrix:
    """Symmetrized Kronecker product of d equal-shape factors.

    The column for a non-decreasing tuple (i_1, ..., i_d) is the average over
    all permutations pi of factor_1[:, i_pi(1)] tensor ... tensor
    factor_d[:, i_pi(d)].
    """
    mats = [np.asarray(F, dtype=float) for F in factors]
    d = len(mats)
    if d < 1:
        raise ValueError("need at least one factor")
    shape = mats[0].shape
    if any(M.shape != shape for M in mats):
        raise ValueError("all factors must share the same shape")
    n, m = shape
    indices = enumerate_multi_indices(m, d)
    perms = list(itertools.permutations(range(d)))
    cols = np.empty((n**d, len(indices)))
    for c, ix in enumerate(indices):
        acc = np.zeros(n**d)
        for pi in perms:
            term = mats[0][:, ix.entries[pi[0]] - 1]
            for j in range(1, d):
                term = np.kron(term, mats[j][:, ix.entries[pi[j]] - 1])
            acc += term
        cols[:, c] = acc / len(perms)
    return LiftMatrix(cols, n=n, m=m, d=d, kind="symmetrized", column_order=indices)


def sym_lift(U: np.ndarray, d: int) -> LiftMatrix:
    """Symmetric d-th order lift of U (the d-fold symmetrized Kronecker power)."""
    if d < 1:
        raise ValueError("d must be at least 1")
    return sym_kron([U] * d)


def full_lift(U: np.ndarray, d: int) -> LiftMatrix:
    """Full Kronecker power of U wrapped with column metadata."""
    U = np.asarray(U, dtype=float)
    n, m = U.shape
    return LiftMatrix(kron_power(U, d), n=n, m=m, d=d, kind="full_kron")


def sym_project(v: np.ndarray, n: int, d: int) -> np.ndarray:
    """Average a flattened d-tensor over all d! mode permutations."""
    v = np.asarray(v, dtype=float)
    if v.shape != (n**d,):
        raise ValueError(f"expected a vector of length {n}**{d} = {n**d}, got {v.shape}")
    T = v.reshape((n,) * d)
    acc = np.zeros_like(T)
    perms = list(itertools.permutations(range(d)))
    for pi in perms:
        acc += np.transpose(T, pi)
    return (acc / len(perms)).reshape(n**d)


def sym_projector_matrix(n: int, d: int) -> np.ndarray:
    """Dense n**d x n**d matrix of the mode-permutation averaging projector."""
    if n**d > 2**13:
        raise LiftSizeError(f"projector of side {n**d} is too large to materialize")
    P = np.zeros((n**d, n**d))
    perms = list(itertools.permutations(range(d)))
    for col, entries in enumerate(itertools.product(range(1, n + 1), repeat=d)):
        for pi in perms:
            P[_flat_index(tuple(entries[j] for j in pi), n), col] += 1.0
    return P / len(perms)


def sel_avg(m: int, d: int) -> np.ndarray:
    """Selector converting a full Kronecker power into the symmetrized lift.

    The unique m**d x C(m+d-1, d) matrix with (V1 tensor ... tensor Vd) @
    sel_avg(m, d) equal to the permutation-averaged columns for any factors.
    Columns have disjoint supports, so its singular values are the column
    norms; they all lie in [1/sqrt(d!), 1].
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be at least 1")
    indices = enumerate_multi_indices(m, d)
    counts = np.zeros((m**d, len(indices)))
    for c, ix in enumerate(indices):
        for pi in itertools.permutations(ix.entries):
            counts[_flat_index(pi, m), c] += 1
    return counts / math.factorial(d)


@dataclass(frozen=True)
class SymMergeOperator:
    """Sparse map merging two symmetric coordinate spaces into a higher one.

    Maps the basis pair (I, J) of degree-k1 and degree-k2 multisets to the
    basis vector of the multiset union I + J in degree k1+k2.  The
    ``unit_merge`` variant has a single entry 1 per column (polynomial
    multiplication of monomial coefficient vectors); ``weighted_merge``
    rescales rows and columns so the operator agrees with the orthogonal
    symmetrization expressed in isometric coordinates.  Both variants share
    the sparsity pattern and hence the rank.
    """

    n: int
    k1: int
    k2: int
    variant: str
    data: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def apply_pair(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Image of x tensor y for coefficient vectors x, y."""
        return self.data @ np.kron(x, y)


def sym_merge(n: int, k1: int, k2: int, variant: str = "unit_merge") -> SymMergeOperator:
    """Build the degree-(k1+k2) merge operator over n variables."""
    if variant not in ("unit_merge", "weighted_merge"):
        raise ValueError(f"unknown variant {variant!r}")
    if n < 1 or k1 < 1 or k2 < 1:
        raise ValueError("n, k1, k2 must be at least 1")
    left = enumerate_multi_indices(n, k1)
    right = enumerate_multi_indices(n, k2)
    out_rank = {ix.entries: r for r, ix in enumerate(enumerate_multi_indices(n, k1 + k2))}
    d_tot = math.factorial(k1 + k2)
    rows = np.empty(len(left) * len(right), dtype=np.int64)
    vals = np.empty(len(left) * len(right))
    c = 0
    for I in left:
        for J in right:
            K = tuple(sorted(I.entries + J.entries))
            rows[c] = out_rank[K]
            if variant == "unit_merge":
                vals[c] = 1.0
            else:
                mu_K = math.prod(
                    math.factorial(len(list(g))) for _, g in itertools.groupby(K))
                vals[c] = math.sqrt(I.orbit_size() * J.orbit_size() * mu_K / d_tot)
            c += 1
    cols = np.arange(len(left) * len(right), dtype=np.int64)
    data = sp.csr_matrix((vals, (rows, cols)),
                         shape=(len(out_rank), len(left) * len(right)))
    return SymMergeOperator(n=n, k1=k1, k2=k2, variant=variant, data=data)
