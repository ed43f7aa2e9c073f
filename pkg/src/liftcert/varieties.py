"""Cutting polynomials for matrix varieties and the distance certificate.

A conic variety is handed around as an orthonormalized family of dual
tensors: degree-d symmetric forms that vanish on the variety.  The induced
operator maps a d-tensor to the vector of form evaluations; applying it to
the symmetric lift of an orthonormal subspace basis and reading off the least
singular value yields a scale-free certificate that every unit vector of the
variety is far from the subspace.

Supported constructions: the determinantal variety of n1 x n2 matrices of
rank at most r (all (r+1)-minors, expanded into dual tensors), and the
separable variety of product tensors (the quadratic forms vanishing on every
Kronecker product of unit factors).  Custom generator lists are accepted
wherever an operator is built.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import rng as _rng
from .matrixio import matrix_sha256
from .spectral import singular_values
from .tensor_lift import (LiftSizeError, _flat_index, enumerate_multi_indices,
                          sym_lift, sym_project)

ORTHO_DROP_RTOL = 1e-8


def _sign_normalize_rows(M: np.ndarray) -> np.ndarray:
    M = M.copy()
    for i in range(M.shape[0]):
        nz = np.nonzero(np.abs(M[i]) > 1e-12)[0]
        if nz.size and M[i, nz[0]] < 0:
            M[i] = -M[i]
    return M


def _full_to_sym_coords(row: np.ndarray, n: int, d: int) -> np.ndarray:
    """Isometric coordinates of a symmetric tensor in the multiset basis."""
    out = np.empty(math.comb(n + d - 1, d))
    for c, ix in enumerate(enumerate_multi_indices(n, d)):
        out[c] = row[_flat_index(ix.entries, n)] * math.sqrt(ix.orbit_size())
    return out


def determinantal_generators(n1: int, n2: int, r: int) -> list[np.ndarray]:
    """Dual tensors of all (r+1) x (r+1) minors of an n1 x n2 matrix of variables.

    One generator per (row-set, column-set) pair: the signed-permutation
    expansion of that minor, symmetrized into a degree-(r+1) dual tensor over
    the n1*n2 entry variables.  Every generator evaluates to zero on matrices
    of rank at most r.
    """
    if not 1 <= r < min(n1, n2):
        raise ValueError(f"r = {r} must satisfy 1 <= r < min({n1}, {n2})")
    N = n1 * n2
    d = r + 1
    if N**d > 2**24:
        raise LiftSizeError(f"dual tensors of size {N}^{d} are too large")
    w = 1.0 / math.factorial(d)
    gens = []
    for I in itertools.combinations(range(n1), d):
        for J in itertools.combinations(range(n2), d):
            F = np.zeros(N**d)
            for pi in itertools.permutations(range(d)):
                sign = _perm_sign(pi)
                vars_flat = tuple(I[t] * n2 + J[pi[t]] + 1 for t in range(d))
                for arrangement in itertools.permutations(vars_flat):
                    F[_flat_index(arrangement, N)] += sign * w
            gens.append(F)
    return gens


def _perm_sign(pi) -> float:
    sign = 1.0
    for a, b in itertools.combinations(range(len(pi)), 2):
        if pi[a] > pi[b]:
            sign = -sign
    return sign


def _sym2_iso_elements(n: int) -> list[np.ndarray]:
    """Orthonormal basis of symmetric n x n matrices, multiset order."""
    out = []
    for a in range(n):
        for b in range(a, n):
            E = np.zeros((n, n))
            if a == b:
                E[a, a] = 1.0
            else:
                E[a, b] = E[b, a] = 1.0 / math.sqrt(2.0)
            out.append(E)
    return out


def separable_generators(dims: tuple[int, ...]) -> list[np.ndarray]:
    """Orthonormal quadratic dual tensors vanishing on all product tensors.

    The squares of separable vectors span (after rearrangement) the tensor
    product of the per-axis symmetric-matrix spaces; the generators are an
    orthonormal basis of its orthogonal complement inside the symmetric
    matrices on the product space, returned as dual vectors over the
    prod(dims)^2 coordinates.
    """
    dims = tuple(int(x) for x in dims)
    if len(dims) < 2 or any(x < 2 for x in dims):
        raise ValueError("need at least two axes, each of dimension >= 2")
    N = math.prod(dims)
    M2 = math.comb(N + 1, 2)
    if N > 64:
        raise LiftSizeError(f"ambient dimension {N} too large for dense construction")

    pair_indices = [(a, b) for a in range(N) for b in range(a, N)]
    iso_scale = {pair: (1.0 if pair[0] == pair[1] else math.sqrt(2.0))
                 for pair in pair_indices}

    def to_iso(X: np.ndarray) -> np.ndarray:
        return np.array([X[a, b] * iso_scale[(a, b)] for a, b in pair_indices])

    factor_bases = [_sym2_iso_elements(nd) for nd in dims]
    cols = []
    for combo in itertools.product(*factor_bases):
        X = reduce(np.kron, combo)
        cols.append(to_iso(X))
    B = np.column_stack(cols)

    _, s, Vt = np.linalg.svd(B.T, full_matrices=True)
    rank = int(np.count_nonzero(s > ORTHO_DROP_RTOL * s[0]))
    kernel = _sign_normalize_rows(Vt[rank:])

    gens = []
    for row in kernel:
        G = np.zeros((N, N))
        for coord, (a, b) in zip(row, pair_indices):
            G[a, b] = coord / iso_scale[(a, b)]
            G[b, a] = G[a, b]
        gens.append(G.reshape(N * N))
    return gens


@dataclass(frozen=True)
class VarietyOperator:
    """Orthonormalized dual generators and the induced evaluation map.

    ``phi`` is p x n**d with orthonormal rows, each row a symmetric tensor,
    so phi @ v equals the generator evaluations at the symmetrization of v.
    ``generators`` carries the same rows in isometric symmetric coordinates.
    """

    n: int
    d: int
    phi: np.ndarray
    generators: np.ndarray
    provenance: str = "custom"

    @property
    def p(self) -> int:
        return self.phi.shape[0]

    @property
    def ambient_sym_dim(self) -> int:
        return math.comb(self.n + self.d - 1, self.d)

    @property
    def density(self) -> float:
        """Fraction of the symmetric space the generators span."""
        return self.p / self.ambient_sym_dim

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Generator evaluations at the d-th power of a point x in R^n."""
        x = np.asarray(x, dtype=float)
        power = x
        for _ in range(self.d - 1):
            power = np.kron(power, x)
        return self.phi @ power


def build_phi(generators: list[np.ndarray], n: int, d: int,
              provenance: str = "custom") -> VarietyOperator:
    """Orthonormalize dual generators and materialize the evaluation map.

    Numerically dependent generators are dropped at a relative tolerance of
    1e-8; the surviving count p is recorded in the operator.
    """
    if not generators:
        raise ValueError("no generators given")
    G = np.vstack([np.asarray(g, dtype=float).reshape(-1) for g in generators])
    if G.shape[1] != n**d:
        raise ValueError(f"generators must live in R^({n}^{d}); got length {G.shape[1]}")
    G = np.vstack([sym_project(row, n, d) for row in G])
    _, s, Vt = np.linalg.svd(G, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("all generators vanish after symmetrization")
    keep = s > ORTHO_DROP_RTOL * s[0]
    if not keep.any():
        raise ValueError("no generators survive orthonormalization")
    phi = _sign_normalize_rows(Vt[: int(keep.sum())])
    sym_coords = np.vstack([_full_to_sym_coords(row, n, d) for row in phi])
    return VarietyOperator(n=n, d=d, phi=phi, generators=sym_coords,
                           provenance=provenance)


def determinantal_operator(n1: int, n2: int, r: int) -> VarietyOperator:
    gens = determinantal_generators(n1, n2, r)
    return build_phi(gens, n=n1 * n2, d=r + 1,
                     provenance=f"determinantal({n1},{n2},{r})")


def separable_operator(dims: tuple[int, ...]) -> VarietyOperator:
    gens = separable_generators(dims)
    dims_str = ",".join(str(x) for x in dims)
    return build_phi(gens, n=math.prod(dims), d=2,
                     provenance=f"separable({dims_str})")


def variety_from_spec(spec: str) -> VarietyOperator:
    """Parse ``determinantal:n1,n2,r`` or ``separable:n1,n2[,...]``."""
    kind, _, args = spec.partition(":")
    try:
        nums = [int(tok) for tok in args.split(",") if tok]
    except ValueError as exc:
        raise ValueError(f"bad variety spec {spec!r}: {exc}") from exc
    if kind == "determinantal":
        if len(nums) != 3:
            raise ValueError("determinantal variety needs n1,n2,r")
        return determinantal_operator(*nums)
    if kind == "separable":
        if len(nums) < 2:
            raise ValueError("separable variety needs at least two dimensions")
        return separable_operator(tuple(nums))
    raise ValueError(f"unknown variety kind {kind!r}")


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of one certificate run."""

    eta: float
    m: int
    n: int
    d: int
    verdict: str
    wall_time_ms: float
    basis_sha256: str
    tolerance: float

    def to_json(self) -> dict:
        return {
            "eta": self.eta,
            "m": self.m,
            "n": self.n,
            "d": self.d,
            "verdict": self.verdict,
            "wall_time_ms": self.wall_time_ms,
            "basis_sha256": self.basis_sha256,
            "tolerance": self.tolerance,
        }


def orthonormalize_basis(B: np.ndarray, keep_first: bool = False) -> np.ndarray:
    """QR-orthonormalize columns (deterministic signs).

    With ``keep_first`` the first column is only rescaled, never rotated, so
    planted test fixtures survive orthonormalization exactly.
    """
    B = np.asarray(B, dtype=float)
    if keep_first:
        first = B[:, :1] / np.linalg.norm(B[:, 0])
        rest = B[:, 1:] - first @ (first.T @ B[:, 1:])
        if rest.shape[1]:
            Q, _ = np.linalg.qr(rest)
            return np.hstack([first, Q])
        return first
    Q, R = np.linalg.qr(B)
    return Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))


def certify(op: VarietyOperator, basis: np.ndarray,
            tolerance: float = 1e-9) -> CertificateReport:
    """Least singular value of the operator applied to the basis lift.

    A positive value eta certifies that every unit vector of the variety is
    at distance at least eta / d (up to the lift's conditioning) from the
    subspace; the report carries the raw eta and the threshold verdict.
    """
    start = time.perf_counter()
    basis = np.asarray(basis, dtype=float)
    n, m = basis.shape
    if n != op.n:
        raise ValueError(f"basis lives in R^{n}, operator expects R^{op.n}")
    gram_resid = np.linalg.norm(basis.T @ basis - np.eye(m))
    if gram_resid > 1e-8:
        raise ValueError(f"basis is not orthonormal (Gram residual {gram_resid:.3e})")
    lifted_cols = math.comb(m + op.d - 1, op.d)
    if lifted_cols > op.p:
        raise ValueError(
            f"lift has {lifted_cols} columns but the operator rank budget is {op.p}")
    L = sym_lift(basis, op.d)
    s = singular_values(op.phi @ L.data)
    eta = float(s[-1])
    verdict = "certified_far" if eta > tolerance else "dont_know"
    elapsed = (time.perf_counter() - start) * 1e3
    return CertificateReport(eta=eta, m=m, n=n, d=op.d, verdict=verdict,
                             wall_time_ms=elapsed,
                             basis_sha256=matrix_sha256(basis),
                             tolerance=tolerance)


def random_rank_le_point(n1: int, n2: int, r: int, seed: int, tag=0) -> np.ndarray:
    """A random unit-norm matrix of rank at most r, flattened row-major."""
    A = _rng.gaussians((n1, r), seed, "rank_point", tag, "left")
    B = _rng.gaussians((r, n2), seed, "rank_point", tag, "right")
    X = A @ B
    return (X / np.linalg.norm(X)).reshape(n1 * n2)


def random_separable_point(dims: tuple[int, ...], seed: int, tag=0) -> np.ndarray:
    """A random unit-norm product tensor, flattened row-major."""
    factors = [_rng.gaussians((nd,), seed, "sep_point", tag, axis)
               for axis, nd in enumerate(dims)]
    v = reduce(np.kron, factors)
    return v / np.linalg.norm(v)
