import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftcert.tensor_lift import (LiftMatrix, LiftSizeError, MultiIndex,
                                  enumerate_multi_indices, full_lift,
                                  khatri_rao, kron, kron_power, sel_avg,
                                  sym_kron, sym_lift, sym_merge, sym_project)


def brute_force_tuples(n, d):
    return [t for t in itertools.product(range(1, n + 1), repeat=d)
            if all(a <= b for a, b in zip(t, t[1:]))]


class TestMultiIndex:
    def test_small_enumerations(self):
        assert [ix.entries for ix in enumerate_multi_indices(2, 2)] == \
            [(1, 1), (1, 2), (2, 2)]
        assert [ix.entries for ix in enumerate_multi_indices(3, 1)] == \
            [(1,), (2,), (3,)]
        assert len(enumerate_multi_indices(3, 2)) == len(brute_force_tuples(3, 2)) == 6

    def test_counts_match_brute_force(self):
        for n in range(1, 7):
            for d in range(1, 5):
                got = enumerate_multi_indices(n, d)
                assert len(got) == len(brute_force_tuples(n, d))
                assert len(got) == math.comb(n + d - 1, d)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 4))
    def test_rank_is_lexicographic_bijection(self, n, d):
        indices = enumerate_multi_indices(n, d)
        assert [ix.rank() for ix in indices] == list(range(1, len(indices) + 1))

    def test_invariant_violations(self):
        with pytest.raises(ValueError):
            MultiIndex((2, 1), n=3)
        with pytest.raises(ValueError):
            MultiIndex((0, 1), n=3)
        with pytest.raises(ValueError):
            MultiIndex((1, 4), n=3)

    def test_size_guard(self):
        with pytest.raises(LiftSizeError):
            enumerate_multi_indices(10**6, 6)


class TestKron:
    def test_identity(self):
        assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_mixed_product(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            A, B, C, D = (rng.standard_normal((2, 2)) for _ in range(4))
            lhs = kron(A, B) @ kron(C, D)
            rhs = kron(A @ C, B @ D)
            assert np.linalg.norm(lhs - rhs) <= 1e-12

    def test_mixed_product_rectangular(self):
        rng = np.random.default_rng(1)
        A, B = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
        C, D = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        assert np.linalg.norm(kron(A, B) @ kron(C, D) - kron(A @ C, B @ D)) <= 1e-12

    def test_basis_index_arithmetic(self):
        e1, e2 = np.eye(2)[:, 0], np.eye(2)[:, 1]
        v = np.kron(e1, e2)
        expected = np.zeros(4)
        expected[0 * 2 + 1] = 1.0
        assert np.array_equal(v, expected)


class TestKhatriRao:
    def test_identity_columns(self):
        K = khatri_rao(np.eye(2), np.eye(2))
        assert np.array_equal(K[:, 0], np.eye(4)[:, 0])
        assert np.array_equal(K[:, 1], np.eye(4)[:, 3])

    def test_matches_kron_diagonal_columns(self):
        rng = np.random.default_rng(2)
        A, B = rng.standard_normal((3, 4)), rng.standard_normal((2, 4))
        K = khatri_rao(A, B)
        full = kron(A, B)
        for i in range(4):
            assert np.allclose(K[:, i], full[:, i * 4 + i])

    def test_worked_example(self):
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(khatri_rao(A, A)[:, 0], np.array([1.0, 3.0, 3.0, 9.0]))

    def test_column_mismatch(self):
        with pytest.raises(ValueError):
            khatri_rao(np.ones((2, 2)), np.ones((2, 3)))


class TestSymKron:
    def test_pair_columns(self):
        rng = np.random.default_rng(3)
        U = rng.standard_normal((4, 3))
        L = sym_kron([U, U])
        for c, ix in enumerate(L.column_order):
            i, j = ix.entries
            ui, uj = U[:, i - 1], U[:, j - 1]
            expected = 0.5 * (np.kron(ui, uj) + np.kron(uj, ui))
            assert np.allclose(L.data[:, c], expected)

    def test_identity_factor_columns(self):
        L = sym_kron([np.eye(2), np.eye(2)])
        col = L.data[:, [ix.entries for ix in L.column_order].index((1, 2))]
        assert np.allclose(col, np.array([0.0, 0.5, 0.5, 0.0]))

    def test_order_one_is_input(self):
        rng = np.random.default_rng(4)
        U = rng.standard_normal((5, 3))
        assert np.array_equal(sym_kron([U]).data, U)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sym_kron([np.ones((2, 2)), np.ones((3, 2))])


class TestSymLift:
    def test_identity_gram_is_diagonal(self):
        n = 3
        L = sym_lift(np.eye(n), 2)
        G = L.data.T @ L.data
        expected = np.diag([1.0 if ix.entries[0] == ix.entries[1] else 0.5
                            for ix in L.column_order])
        assert np.allclose(G, expected)

    def test_scalar_cube(self):
        assert np.allclose(sym_lift(np.array([[2.0]]), 3).data, [[8.0]])

    def test_matches_kron_power_through_selector(self):
        rng = np.random.default_rng(5)
        U = rng.standard_normal((3, 2))
        resid = np.linalg.norm(kron_power(U, 2) @ sel_avg(2, 2) - sym_lift(U, 2).data)
        assert resid <= 1e-12

    def test_columns_are_symmetrization_fixed_points(self):
        rng = np.random.default_rng(6)
        for n, m, d in [(2, 2, 2), (3, 2, 3), (2, 4, 2), (4, 3, 2)]:
            U = rng.standard_normal((n, m))
            L = sym_lift(U, d)
            for c in range(L.data.shape[1]):
                resid = np.linalg.norm(sym_project(L.data[:, c], n, d) - L.data[:, c])
                assert resid <= 1e-10


class TestSymProject:
    def test_two_element_orbit(self):
        v = np.kron(np.eye(2)[:, 0], np.eye(2)[:, 1])
        expected = np.zeros(4)
        expected[1] = expected[2] = 0.5
        assert np.allclose(sym_project(v, 2, 2), expected)

    def test_fixed_point(self):
        rng = np.random.default_rng(7)
        v = sym_project(rng.standard_normal(27), 3, 3)
        assert np.allclose(sym_project(v, 3, 3), v)

    def test_idempotent(self):
        rng = np.random.default_rng(8)
        v = rng.standard_normal(16)
        once = sym_project(v, 2, 4)
        assert np.linalg.norm(sym_project(once, 2, 4) - once) <= 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sym_project(np.ones(5), 2, 2)


class TestSelAvg:
    def test_small_case_explicit(self):
        S = sel_avg(2, 2)
        expected = np.array([
            [1.0, 0.0, 0.0],
            [0.0, 0.5, 0.0],
            [0.0, 0.5, 0.0],
            [0.0, 0.0, 1.0],
        ])
        assert np.allclose(S, expected)
        svals = np.linalg.svd(S, compute_uv=False)
        assert np.allclose(sorted(svals), sorted([1.0, 1.0 / math.sqrt(2), 1.0]))

    def test_degenerate_is_identity(self):
        assert np.array_equal(sel_avg(1, 3), np.ones((1, 1)))

    def test_spectrum_window(self):
        for m in range(1, 5):
            for d in range(1, 4):
                s = np.linalg.svd(sel_avg(m, d), compute_uv=False)
                assert s.min() >= 1.0 / math.sqrt(math.factorial(d)) - 1e-9
                assert s.max() <= 1.0 + 1e-9

    def test_columns_disjoint_support(self):
        S = sel_avg(3, 3)
        support = S != 0
        assert np.all((support.astype(int).sum(axis=1)) <= 1)
        G = S.T @ S
        assert np.allclose(G, np.diag(np.diag(G)))

    def test_realizes_permutation_average_for_distinct_factors(self):
        rng = np.random.default_rng(9)
        mats = [rng.standard_normal((3, 2)) for _ in range(3)]
        full = np.kron(np.kron(mats[0], mats[1]), mats[2])
        direct = sym_kron(mats).data
        assert np.linalg.norm(full @ sel_avg(2, 3) - direct) <= 1e-12


class TestPermutationInvariance:
    def symmetric_row_operator(self, n, d, rows, seed):
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((rows, n**d))
        return np.vstack([sym_project(r, n, d) for r in raw])

    def test_selector_washes_out_factor_order(self):
        rng = np.random.default_rng(10)
        for d in (2, 3):
            n, m = 3, 2
            mats = [rng.standard_normal((n, m)) for _ in range(d)]
            psi = self.symmetric_row_operator(n, d, 5, seed=d)
            S = sel_avg(m, d)
            base = psi @ _chain(mats) @ S
            for pi in itertools.permutations(range(d)):
                permuted = psi @ _chain([mats[j] for j in pi]) @ S
                assert np.linalg.norm(base - permuted) <= 1e-10


def _chain(mats):
    out = mats[0]
    for M in mats[1:]:
        out = np.kron(out, M)
    return out


class TestSymMerge:
    def test_pair_merge(self):
        op = sym_merge(2, 1, 1)
        assert op.shape == (3, 4)
        e1, e2 = np.eye(2)[:, 0], np.eye(2)[:, 1]
        image = op.apply_pair(e1, e2)
        expected = np.zeros(3)
        expected[1] = 1.0  # multiset {1, 2} is the middle degree-2 index
        assert np.allclose(image, expected)
        assert len(set(op.data.nonzero()[0])) == 3

    def test_degree4_row_count(self):
        for n in (2, 3, 4):
            op = sym_merge(n, 2, 2)
            assert op.shape[0] == math.comb(n + 3, 4)

    def test_full_row_space(self):
        op = sym_merge(3, 1, 2)
        dense = op.data.toarray()
        assert np.linalg.matrix_rank(dense) == math.comb(3 + 2, 3)

    def test_variants_share_rank_and_sparsity(self):
        unit = sym_merge(3, 2, 2, "unit_merge").data
        weighted = sym_merge(3, 2, 2, "weighted_merge").data
        assert (unit != 0).toarray().tolist() == (weighted != 0).toarray().tolist()
        assert np.linalg.matrix_rank(unit.toarray()) == \
            np.linalg.matrix_rank(weighted.toarray())

    def test_weighted_matches_orthogonal_symmetrization(self):
        # Independent oracle: embed both coordinate vectors isometrically as
        # tensors, symmetrize the tensor product, and read isometric
        # degree-4 coordinates back off.
        n = 2
        op = sym_merge(n, 2, 2, "weighted_merge")
        pairs = enumerate_multi_indices(n, 2)
        quads = enumerate_multi_indices(n, 4)

        def embed_pair(c):
            v = np.zeros(n * n)
            for coeff, ix in zip(c, pairs):
                i, j = ix.entries
                vec = np.zeros(n * n)
                if i == j:
                    vec[(i - 1) * n + (j - 1)] = 1.0
                else:
                    vec[(i - 1) * n + (j - 1)] = 1.0 / math.sqrt(2)
                    vec[(j - 1) * n + (i - 1)] = 1.0 / math.sqrt(2)
                v += coeff * vec
            return v

        rng = np.random.default_rng(11)
        x, y = rng.standard_normal(len(pairs)), rng.standard_normal(len(pairs))
        got = op.apply_pair(x, y)
        T = sym_project(np.kron(embed_pair(x), embed_pair(y)), n, 4)
        T = T.reshape((n,) * 4)
        oracle = np.zeros(len(quads))
        for c, ix in enumerate(quads):
            entry = tuple(e - 1 for e in ix.entries)
            oracle[c] = T[entry] * math.sqrt(ix.orbit_size())
        assert np.linalg.norm(got - oracle) <= 1e-10

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            sym_merge(2, 1, 1, "other")


class TestLiftMatrix:
    def test_column_count_validation(self):
        with pytest.raises(ValueError):
            LiftMatrix(np.ones((4, 5)), n=2, m=2, d=2, kind="symmetrized")
        with pytest.raises(ValueError):
            LiftMatrix(np.ones((4, 3)), n=2, m=2, d=2, kind="full_kron")
        with pytest.raises(ValueError):
            LiftMatrix(np.ones((4, 3)), n=2, m=2, d=2, kind="other")

    def test_descriptor_round_trip_fields(self):
        L = sym_lift(np.eye(2), 2)
        desc = L.descriptor()
        assert desc["kind"] == "symmetrized"
        assert desc["column_order"] == [[1, 1], [1, 2], [2, 2]]

    def test_full_kron_kind(self):
        rng = np.random.default_rng(12)
        U = rng.standard_normal((3, 2))
        L = full_lift(U, 2)
        assert L.kind == "full_kron"
        assert L.data.shape == (9, 4)
        assert np.array_equal(L.data, kron_power(U, 2))
