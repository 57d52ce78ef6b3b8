import itertools

import numpy as np
import pytest
from scipy.stats import chisquare

import juror.radon as radon
from juror.radon import (
    DirectionSet,
    adjoint,
    build_operator,
    forward,
    ls_invert,
    ls_solve,
    sample_directions,
)


def op_for(phi, I_j, I_k, B=None):
    return build_operator(DirectionSet(np.atleast_2d(np.asarray(phi, float))), I_j, I_k, B)


def enumerate_bins(op):
    """Cell -> bin by scanning the edge list, independent of the floor formula."""
    M = op.directions.count
    out = np.empty((M, op.num_cells), dtype=int)
    for m, (a, b) in itertools.product(range(M), itertools.product(*map(range, op.shape))):
        phi = op.directions.directions[m]
        t = phi[0] * a + phi[1] * b
        edges = op.bin_edges[m]
        hit = op.num_bins - 1
        for i in range(op.num_bins):
            if edges[i] <= t < edges[i + 1]:
                hit = i
                break
        out[m, a * op.shape[1] + b] = hit
    return out


def random_pmf(rng, shape):
    Z = rng.random(shape)
    return Z / Z.sum()


class TestDirections:
    def test_unit_norm(self):
        d = sample_directions(500, seed=1)
        assert np.all(np.abs(np.linalg.norm(d.directions, axis=1) - 1) < 1e-12)

    def test_determinism(self):
        a, b = sample_directions(50, seed=7), sample_directions(50, seed=7)
        assert np.array_equal(a.directions, b.directions)

    def test_uniform_angles(self):
        d = sample_directions(10**4, seed=11)
        angles = np.arctan2(d.directions[:, 1], d.directions[:, 0])
        counts, _ = np.histogram(angles, bins=16, range=(-np.pi, np.pi))
        assert chisquare(counts).pvalue > 0.01

    def test_nonpositive(self):
        with pytest.raises(ValueError):
            sample_directions(0)


class TestBuildOperator:
    def test_axis_aligned_rows(self):
        op = op_for([1.0, 0.0], 5, 4, B=5)
        assert np.array_equal(op.cell_bins[0].reshape(5, 4), np.repeat(np.arange(5)[:, None], 4, 1))

    def test_axis_aligned_cols(self):
        op = op_for([0.0, 1.0], 3, 6, B=6)
        assert np.array_equal(op.cell_bins[0].reshape(3, 6), np.tile(np.arange(6), (3, 1)))

    def test_diagonal_enumeration(self):
        s = 1 / np.sqrt(2)
        op = op_for([s, s], 3, 3, B=3)
        assert np.array_equal(op.cell_bins, enumerate_bins(op))
        # offsets {0, .707, 1.414, 2.121, 2.828}; cells on one anti-diagonal share a bin
        bins = op.cell_bins[0].reshape(3, 3)
        assert bins[0, 1] == bins[1, 0] and bins[0, 2] == bins[1, 1] == bins[2, 0]
        assert bins[0, 0] < bins[1, 1] < bins[2, 2]

    def test_random_enumeration(self):
        op = build_operator(sample_directions(12, seed=3), 4, 5)
        assert np.array_equal(op.cell_bins, enumerate_bins(op))

    def test_one_bin_per_cell(self):
        op = build_operator(sample_directions(30, seed=2), 6, 7)
        dense = op.matrix.toarray().reshape(30, op.num_bins, op.num_cells)
        np.testing.assert_array_equal(dense.sum(axis=1), 1.0)
        assert op.matrix.nnz == 30 * 42

    def test_edges_cover_range(self):
        op = build_operator(sample_directions(40, seed=5), 10, 10)
        assert np.all(np.diff(op.bin_edges, axis=1) > 0)
        phi = op.directions.directions
        aa, bb = np.meshgrid(np.arange(10), np.arange(10), indexing="ij")
        t = phi[:, :1] * aa.ravel() + phi[:, 1:] * bb.ravel()
        assert np.all(op.bin_edges[:, 0] <= t.min(axis=1))
        assert np.all(op.bin_edges[:, -1] >= t.max(axis=1))

    def test_bin_of_matches_cells(self):
        op = build_operator(sample_directions(25, seed=4), 5, 6)
        aa, bb = np.meshgrid(np.arange(5), np.arange(6), indexing="ij")
        assert np.array_equal(op.bin_of(aa, bb), op.cell_bins)

    def test_determinism(self):
        a = build_operator(sample_directions(20, seed=1), 4, 4)
        b = build_operator(sample_directions(20, seed=1), 4, 4)
        assert np.array_equal(a.cell_bins, b.cell_bins)
        assert np.array_equal(a.bin_edges, b.bin_edges)
        assert (a.matrix != b.matrix).nnz == 0

    @pytest.mark.parametrize("I", [4, 6, 8, 10, 12, 15])
    def test_full_column_rank(self, I):
        op = build_operator(sample_directions(200, seed=0), I, I)
        assert np.linalg.matrix_rank(op.matrix.toarray()) == I * I

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            build_operator(sample_directions(3, seed=0), 1, 4)


class TestForwardAdjoint:
    def test_delta_input(self):
        op = build_operator(sample_directions(15, seed=8), 4, 5)
        Z = np.zeros((4, 5))
        Z[2, 3] = 1.0
        Y = forward(op, Z)
        expected = np.zeros(op.out_shape)
        expected[np.arange(15), op.bin_of(2, 3)[:, 0]] = 1.0
        np.testing.assert_array_equal(Y, expected)

    def test_brute_force_accumulation(self, rng):
        op = build_operator(sample_directions(7, seed=9), 3, 4)
        Z = rng.random((3, 4))
        expected = np.zeros(op.out_shape)
        for m in range(7):
            for a, b in itertools.product(range(3), range(4)):
                expected[m, enumerate_bins(op)[m, a * 4 + b]] += Z[a, b]
        np.testing.assert_allclose(forward(op, Z), expected, atol=1e-15)

    def test_mass_conservation(self, rng):
        op = build_operator(sample_directions(50, seed=1), 6, 6)
        for _ in range(20):
            Z = rng.random((6, 6))
            np.testing.assert_allclose(forward(op, Z).sum(axis=1), Z.sum(), atol=1e-12)

    def test_linearity(self, rng):
        op = build_operator(sample_directions(30, seed=1), 5, 5)
        Z1, Z2 = rng.random((5, 5)), rng.random((5, 5))
        lhs = forward(op, 2.5 * Z1 - 0.7 * Z2)
        rhs = 2.5 * forward(op, Z1) - 0.7 * forward(op, Z2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_adjoint_zero(self):
        op = build_operator(sample_directions(10, seed=1), 3, 3)
        np.testing.assert_array_equal(adjoint(op, np.zeros(op.out_shape)), 0.0)

    def test_adjoint_one_hot(self):
        op = build_operator(sample_directions(10, seed=1), 4, 4)
        Y = np.zeros(op.out_shape)
        Y[6, 2] = 1.0
        expected = (op.cell_bins[6] == 2).reshape(4, 4).astype(float)
        np.testing.assert_array_equal(adjoint(op, Y), expected)

    def test_adjoint_identity(self, rng):
        op = build_operator(sample_directions(40, seed=2), 5, 6)
        for _ in range(50):
            Z, Y = rng.normal(size=(5, 6)), rng.normal(size=op.out_shape)
            lhs = np.vdot(forward(op, Z), Y)
            rhs = np.vdot(Z, adjoint(op, Y))
            assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(Z) * np.linalg.norm(Y)

    def test_shape_errors(self):
        op = build_operator(sample_directions(5, seed=0), 3, 3)
        with pytest.raises(ValueError):
            forward(op, np.zeros((3, 4)))
        with pytest.raises(ValueError):
            adjoint(op, np.zeros((4, 3)))


class TestLsInvert:
    def test_exact_data(self, rng):
        op = build_operator(sample_directions(40, seed=6), 5, 5)
        Z = random_pmf(rng, (5, 5))
        assert np.abs(ls_invert(op, forward(op, Z)) - Z).max() < 1e-6

    def test_penalty_dominance(self, rng):
        op = build_operator(sample_directions(40, seed=6), 4, 4)
        prior = random_pmf(rng, (4, 4))
        Y = forward(op, random_pmf(rng, (4, 4)))
        assert np.abs(ls_invert(op, Y, 1e8, prior) - prior).max() < 1e-4

    def test_consistent_prior_fixed_point(self, rng):
        op = build_operator(sample_directions(20, seed=6), 4, 4)
        prior = random_pmf(rng, (4, 4))
        np.testing.assert_allclose(ls_invert(op, forward(op, prior), 1.0, prior), prior, atol=1e-8)

    def test_least_squares_optimality(self, rng):
        op = build_operator(sample_directions(12, seed=3), 4, 4)
        Y = rng.random(op.out_shape)
        Z = ls_solve(op, Y)
        base = np.sum((Y - forward(op, Z)) ** 2)
        for _ in range(50):
            D = rng.normal(size=(4, 4))
            D *= 1e-3 / np.linalg.norm(D)
            assert np.sum((Y - forward(op, Z + D)) ** 2) >= base - 1e-12

    def test_rank_deficient_min_norm(self, rng):
        # 3 directions cannot determine 25 cells; the solution must lie in range(R^T)
        op = build_operator(sample_directions(3, seed=1), 5, 5)
        Z = ls_solve(op, rng.random(op.out_shape))
        R = op.matrix.toarray()
        coef, *_ = np.linalg.lstsq(R.T, Z.ravel(), rcond=None)
        np.testing.assert_allclose(R.T @ coef, Z.ravel(), atol=1e-10)

    def test_output_is_pmf(self, rng):
        op = build_operator(sample_directions(8, seed=3), 4, 4)
        Z = ls_invert(op, rng.normal(size=op.out_shape))
        assert np.all(Z >= 0) and abs(Z.sum() - 1) < 1e-12

    def test_conjugate_gradient_path(self, rng, monkeypatch):
        op = build_operator(sample_directions(60, seed=4), 6, 6)
        prior = random_pmf(rng, (6, 6))
        Y = forward(op, random_pmf(rng, (6, 6))) + 0.01 * rng.normal(size=op.out_shape)
        dense0, dense1 = ls_solve(op, Y), ls_solve(op, Y, 0.5, prior)
        monkeypatch.setattr(radon, "DENSE_SOLVE_LIMIT", 10)
        cg0, cg1 = ls_solve(op, Y), ls_solve(op, Y, 0.5, prior)
        np.testing.assert_allclose(cg0, dense0, atol=1e-7)
        np.testing.assert_allclose(cg1, dense1, atol=1e-7)

    def test_errors(self, rng):
        op = build_operator(sample_directions(8, seed=3), 3, 3)
        Y = rng.random(op.out_shape)
        with pytest.raises(ValueError):
            ls_invert(op, Y, rho=1.0)
        Y[0, 0] = np.nan
        with pytest.raises(ValueError):
            ls_invert(op, Y)
