"""Builders for the structured matrices behind power-sum and clustering checks.

Quadratic polynomials are carried as coefficient vectors over the multiset
(monomial) basis of the degree-2 space, of dimension N2 = C(n+1, 2).  The
merge operators from :mod:`liftcert.tensor_lift` then implement polynomial
multiplication, and the builders below assemble the block matrices whose
least singular values the experiment harness measures: the merged identity
Kronecker block, its explicit solution-space basis, layered-noise variants,
concatenated subspace lifts, and the power-coefficient matrix of inner-power
polynomials.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .stats import wilson_interval
from .tensor_lift import (MultiIndex, enumerate_multi_indices, sym_lift,
                          sym_merge, sym_project)


def _sign_normalize_cols(M: np.ndarray) -> np.ndarray:
    M = M.copy()
    for j in range(M.shape[1]):
        nz = np.nonzero(np.abs(M[:, j]) > 1e-12)[0]
        if nz.size and M[nz[0], j] < 0:
            M[:, j] = -M[:, j]
    return M


@dataclass(frozen=True)
class PowerSumInstance:
    """m smoothed quadratic forms over n variables plus a basis completion.

    A has shape N2 x m (columns are perturbed coefficient vectors); F is an
    orthonormal basis of the orthogonal complement of the column span, so
    [A, F] spans the whole degree-2 coordinate space.
    """

    n: int
    m: int
    A: np.ndarray
    base: np.ndarray
    F: np.ndarray
    rho: float
    seed: int

    @property
    def n2(self) -> int:
        return math.comb(self.n + 1, 2)

    def __post_init__(self):
        n2 = self.n2
        if self.A.shape != (n2, self.m) or self.F.shape != (n2, n2 - self.m):
            raise ValueError("instance arrays have inconsistent shapes")
        if np.linalg.norm(self.F.T @ self.F - np.eye(n2 - self.m)) > 1e-10:
            raise ValueError("completion F is not orthonormal")
        if np.linalg.norm(self.F.T @ self.A) > 1e-8 * np.linalg.norm(self.A):
            raise ValueError("completion F is not orthogonal to A")


def make_power_sum_instance(n: int, m: int, rho: float, seed: int) -> PowerSumInstance:
    """Random unit-column base forms, perturbed at scale rho, with completion."""
    n2 = math.comb(n + 1, 2)
    if not 1 <= m < n2:
        raise ValueError(f"need 1 <= m < N2 = {n2}")
    base = _rng.gaussians((n2, m), seed, "powersum", "base")
    base /= np.linalg.norm(base, axis=0)
    A = base + rho * _rng.gaussians((n2, m), seed, "powersum", "noise")
    U, _, _ = np.linalg.svd(A, full_matrices=True)
    F = _sign_normalize_cols(U[:, m:])
    return PowerSumInstance(n=n, m=m, A=A, base=base, F=F, rho=rho, seed=seed)


def _noise_layers(instance: PowerSumInstance, rho1: float, rho2: float):
    """Split the realized noise of A into two layers of scales rho1, rho2.

    Conditional decomposition: the layers have the right joint law given that
    they must sum to the already-realized noise, so A == base + Z1 + Z2
    holds exactly for this sample.
    """
    rho = instance.rho
    if abs(rho1**2 + rho2**2 - rho**2) > 1e-12 * rho**2:
        raise ValueError("rho1^2 + rho2^2 must equal rho^2")
    Z = instance.A - instance.base
    shape = Z.shape
    y1 = rho1 * _rng.gaussians(shape, instance.seed, "powersum", "layer", 0)
    y2 = rho2 * _rng.gaussians(shape, instance.seed, "powersum", "layer", 1)
    corr = (y1 + y2 - Z) / rho**2
    return y1 - rho1**2 * corr, y2 - rho2**2 * corr


def build_sym4_IkronA(instance: PowerSumInstance,
                         variant: str = "unit_merge") -> np.ndarray:
    """The degree-4 merge operator applied to I tensor A.

    Columns are indexed by (monomial i, form t) with i slow; column (i, t)
    is the coefficient vector of monomial_i(x) * a_t(x).  The nullspace is
    spanned by the antisymmetric pair witnesses, so the numerical rank of the
    result is m*N2 - C(m, 2) for perturbed instances.
    """
    n2, m = instance.n2, instance.m
    merge = sym_merge(instance.n, 2, 2, variant)
    out = np.empty((merge.shape[0], n2 * m))
    for i in range(n2):
        block = merge.data[:, i * n2:(i + 1) * n2]
        out[:, i * m:(i + 1) * m] = block @ instance.A
    return out


def antisym_witnesses(instance: PowerSumInstance) -> np.ndarray:
    """Exact nullspace witnesses of the merged identity-Kronecker block.

    For each pair s < t the witness encodes q_s = a_t, q_t = -a_s (all other
    q zero): the combination sum_u a_u q_u collapses to a_s a_t - a_t a_s.
    Returns one unit column per pair, C(m, 2) in total.
    """
    n2, m = instance.n2, instance.m
    cols = []
    for s in range(m):
        for t in range(s + 1, m):
            w = np.zeros(n2 * m)
            w[s::m] = instance.A[:, t]
            w[t::m] = -instance.A[:, s]
            cols.append(w / np.linalg.norm(w))
    return np.column_stack(cols) if cols else np.zeros((n2 * m, 0))


def build_solution_space_M(instance: PowerSumInstance,
                           variant: str = "unit_merge") -> np.ndarray:
    """Explicit basis matrix of the merged pair space.

    Columns: merged (a_i a_j + a_j a_i) over pairs i <= j in lexicographic
    order, then merged (a_i f_j + f_j a_i) over cross pairs (i, j).  The
    column count is C(m+1, 2) + m (N2 - m) = m N2 - C(m, 2).
    """
    n2, m = instance.n2, instance.m
    merge = sym_merge(instance.n, 2, 2, variant)
    cols = []
    for i in range(m):
        for j in range(i, m):
            cols.append(merge.apply_pair(instance.A[:, i], instance.A[:, j])
                        + merge.apply_pair(instance.A[:, j], instance.A[:, i]))
    for i in range(m):
        for j in range(n2 - m):
            cols.append(merge.apply_pair(instance.A[:, i], instance.F[:, j])
                        + merge.apply_pair(instance.F[:, j], instance.A[:, i]))
    return np.column_stack(cols)


def build_claim_Q(instance: PowerSumInstance, rho1: float, rho2: float) -> np.ndarray:
    """The square matrix [base + Z1 + 2 Z2, F] under a two-layer noise split."""
    Z1, Z2 = _noise_layers(instance, rho1, rho2)
    return np.hstack([instance.base + Z1 + 2.0 * Z2, instance.F])


def build_claim_W(instance: PowerSumInstance, rho1: float, rho2: float,
                  variant: str = "unit_merge") -> np.ndarray:
    """Modal contraction of the degree-4 merge operator by [base + Z1, Z2].

    Slice i of the merge operator (the columns pairing monomial i with every
    monomial) is contracted by the N2 x 2m random matrix; the slices are
    concatenated into an R x (2 m N2) block matrix.
    """
    Z1, Z2 = _noise_layers(instance, rho1, rho2)
    U = np.hstack([instance.base + Z1, Z2])
    n2 = instance.n2
    merge = sym_merge(instance.n, 2, 2, variant)
    blocks = [merge.data[:, i * n2:(i + 1) * n2] @ U for i in range(n2)]
    return np.hstack(blocks)


def build_projected_V(matrices: list[np.ndarray], ell: int,
                      budget_fraction: float = 0.1) -> np.ndarray:
    """Block matrix of lifted column selections next to the full matrices.

    For each of the m input n x n matrices, take its first ell columns S_t and
    emit the symmetric lift S_t (*) S_t, then append the vectorized full
    matrices; the result has m C(ell+1, 2) + m columns in R^(n^2).
    """
    if not matrices:
        raise ValueError("need at least one matrix")
    mats = [np.asarray(getattr(M, "realized", M), dtype=float) for M in matrices]
    n = mats[0].shape[0]
    if any(M.shape != (n, n) for M in mats):
        raise ValueError("all matrices must be square of the same size")
    if not 1 <= ell <= n:
        raise ValueError(f"ell = {ell} out of range 1..{n}")
    m = len(mats)
    r = n**2 - n * ell - m * math.comb(ell + 1, 2) - m + 1
    if r <= 0:
        raise ValueError(f"dimension budget violated: r = {r} <= 0")
    if r < budget_fraction * n**2:
        warnings.warn(f"slack dimension r = {r} below {budget_fraction} * n^2",
                      RuntimeWarning, stacklevel=2)
    cols = [sym_lift(M[:, :ell], 2).data for M in mats]
    cols += [M.reshape(n * n, 1) for M in mats]
    return np.hstack(cols)


@dataclass(frozen=True)
class ClusteringInstance:
    """Orthonormal subspace bases to perturb, lift, and concatenate."""

    bases: list[np.ndarray]
    d: int
    rho: float
    seed: int

    def __post_init__(self):
        if not self.bases:
            raise ValueError("need at least one basis")
        n, m = self.bases[0].shape
        for P in self.bases:
            if P.shape != (n, m):
                raise ValueError("all bases must share a shape")
            if np.linalg.norm(P.T @ P - np.eye(m)) > 1e-8:
                raise ValueError("bases must be orthonormal")

    @property
    def shape(self) -> tuple[int, int]:
        return self.bases[0].shape


def make_clustering_instance(n: int, m: int, s: int, d: int, rho: float,
                             seed: int, shared_base: bool = True) -> ClusteringInstance:
    """s orthonormal bases; by default all equal to one seeded random base,
    the hardest layout that the perturbation must still separate."""
    def draw(tag):
        G = _rng.gaussians((n, m), seed, "cluster", "base", tag)
        Q, _ = np.linalg.qr(G)
        return Q
    bases = [draw(0)] * s if shared_base else [draw(i) for i in range(s)]
    return ClusteringInstance(bases=bases, d=d, rho=rho, seed=seed)


def build_block_lift(instance: ClusteringInstance) -> np.ndarray:
    """Concatenated symmetric lifts of independently perturbed bases.

    Each base P_i receives i.i.d. noise of entrywise variance rho^2 / n, is
    re-orthonormalized, and lifted to order d.  rho = 0 skips the
    perturbation (degenerate control).
    """
    n, m = instance.shape
    d, s = instance.d, len(instance.bases)
    if s * math.comb(m + d - 1, d) > math.comb(n + d - 1, d):
        raise ValueError("dimension budget violated: too many blocks for the lift space")
    blocks = []
    for i, P in enumerate(instance.bases):
        if instance.rho > 0:
            noise = (instance.rho / math.sqrt(n)) * _rng.gaussians(
                (n, m), instance.seed, "cluster", "noise", i)
            Q, _ = np.linalg.qr(P + noise)
        else:
            Q = P
        blocks.append(sym_lift(Q, d).data)
    return np.hstack(blocks)


def power_row(u: np.ndarray, r: int, indices: list[MultiIndex] | None = None) -> np.ndarray:
    """Coefficient vector of the polynomial <u, x>^r over the monomial basis."""
    u = np.asarray(u, dtype=float)
    dim = u.shape[0]
    if r < 1:
        raise ValueError("r must be at least 1")
    if indices is None:
        indices = enumerate_multi_indices(dim, r)
    out = np.empty(len(indices))
    r_fact = math.factorial(r)
    for c, ix in enumerate(indices):
        coeff = r_fact // math.prod(math.factorial(t) for t in ix.multiplicities())
        prod = 1.0
        for e in ix.entries:
            prod *= u[e - 1]
        out[c] = coeff * prod
    return out


def build_power_matrix(points: np.ndarray, r: int) -> np.ndarray:
    """N x C(dim+r-1, r) matrix whose i-th row represents <u_i, x>^r."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    indices = enumerate_multi_indices(points.shape[1], r)
    return np.vstack([power_row(u, r, indices) for u in points])


def evaluate_power_row(row: np.ndarray, x: np.ndarray, r: int) -> float:
    """Pair a coefficient row with the monomial vector of x (oracle helper)."""
    x = np.asarray(x, dtype=float)
    vals = []
    for ix in enumerate_multi_indices(x.shape[0], r):
        prod = 1.0
        for e in ix.entries:
            prod *= x[e - 1]
        vals.append(prod)
    return float(row @ np.asarray(vals))


def small_ball_estimate(base_point: np.ndarray, r: int, sigma: float,
                        a: np.ndarray, eps: float, trials: int, seed: int,
                        y: float = 0.0) -> dict:
    """Monte Carlo frequency of |<row(u + noise), a> - y| < eps.

    Fresh sigma-perturbations of the base point per trial; the result carries
    the count, frequency, and a Wilson 95% interval.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    a = np.asarray(a, dtype=float)
    if abs(np.linalg.norm(a) - 1.0) > 1e-8:
        raise ValueError("test vector a must be a unit vector")
    base_point = np.asarray(base_point, dtype=float)
    indices = enumerate_multi_indices(base_point.shape[0], r)
    if a.shape != (len(indices),):
        raise ValueError(f"a must have length {len(indices)}")
    hits = 0
    for t in range(trials):
        u = base_point + sigma * _rng.gaussians(base_point.shape, seed, "smallball", t)
        if abs(float(power_row(u, r, indices) @ a) - y) < eps:
            hits += 1
    low, high = wilson_interval(hits, trials)
    return {"hits": hits, "trials": trials, "frequency": hits / trials,
            "wilson_low": low, "wilson_high": high, "eps": eps}


def symmetric_cube_lift(C: np.ndarray, n: int) -> np.ndarray:
    """Order-6 symmetrization of the cube lift of symmetric-matrix columns.

    C has n^2 rows (vectorized symmetric matrices); the third symmetric
    Kronecker power is computed over the n^2-dimensional coordinates and each
    column is then averaged over all 6! mode permutations of (R^n)^(x6).
    """
    C = np.asarray(C, dtype=float)
    if C.shape[0] != n * n:
        raise ValueError(f"columns must be vectorized {n} x {n} matrices")
    L = sym_lift(C, 3).data
    return np.column_stack([sym_project(L[:, j], n, 6) for j in range(L.shape[1])])


def make_symmetric_columns(n: int, m: int, rho: float, seed: int) -> np.ndarray:
    """m vectorized symmetric n x n matrices, upper triangle perturbed i.i.d."""
    iu = np.triu_indices(n)
    cols = np.empty((n * n, m))
    for t in range(m):
        vals = _rng.gaussians((len(iu[0]),), seed, "symcols", "base", t)
        vals = vals / np.linalg.norm(vals)
        vals = vals + rho * _rng.gaussians((len(iu[0]),), seed, "symcols", "noise", t)
        X = np.zeros((n, n))
        X[iu] = vals
        X = X + X.T - np.diag(np.diag(X))
        cols[:, t] = X.reshape(n * n)
    return cols
