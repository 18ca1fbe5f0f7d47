import numpy as np
import pytest

from orliczeig.energy import build_context, energy_A, mass_matrix, stiffness_matrix
from orliczeig.errors import ConfigError, NonconvergenceError
from orliczeig.fracgrid import QuadConfig, build_basis
from orliczeig.kernels import catalog_kernel, catalog_source
from orliczeig.solver import (
    EigenpairResult,
    SolverConfig,
    _annotate_sequence,
    k_study,
    linear_oracle,
    solve_first,
    solve_sequence,
)

FAST_QUAD = QuadConfig(cells_per_axis=12, grading_depth=4, tail_panels=8)


@pytest.fixture(scope="module")
def ctx_lin():
    return build_context(
        catalog_kernel("plap:2"),
        catalog_source("power:2"),
        build_basis(0.0, 1.0, 12),
        s=0.5,
        quad_cfg=FAST_QUAD,
    )


@pytest.fixture(scope="module")
def ctx_nl():
    return build_context(
        catalog_kernel("plap:3"),
        catalog_source("power:3"),
        build_basis(0.0, 1.0, 8),
        s=0.4,
        quad_cfg=FAST_QUAD,
    )


@pytest.fixture(scope="module")
def ground_lin(ctx_lin):
    return solve_first(ctx_lin, 12, SolverConfig(rng_seed=3, n_restarts=4))


@pytest.fixture(scope="module")
def seq_lin(ctx_lin):
    return solve_sequence(ctx_lin, 12, 3, SolverConfig(rng_seed=3, n_restarts=4))


@pytest.fixture(scope="module")
def pair_nl(ctx_nl):
    return solve_first(ctx_nl, 8, SolverConfig(rng_seed=5, n_restarts=4))


@pytest.fixture(scope="module")
def report_lin(ctx_lin):
    return k_study(ctx_lin, SolverConfig(rng_seed=3, n_restarts=3), [4, 8, 12], 2)


class TestConfig:
    def test_defaults_valid(self):
        SolverConfig()

    @pytest.mark.parametrize("kwargs", [
        {"max_iter": 0},
        {"step0": 0.0},
        {"backtrack_ratio": 1.0},
        {"backtrack_ratio": 0.0},
        {"armijo_slope": -1e-4},
        {"grad_tol": 0.0},
        {"n_restarts": 0},
        {"rng_seed": -1},
        {"deflation_penalty": -5.0},
    ])
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ConfigError):
            SolverConfig(**kwargs)


class TestLinearGround:
    def test_matches_dense_oracle(self, ctx_lin, ground_lin):
        lam1, v1 = linear_oracle(ctx_lin, 12)[0]
        assert ground_lin.lambda_ == pytest.approx(lam1, rel=1e-8)
        u = ground_lin.coeffs
        align = abs(np.dot(u, v1)) / (np.linalg.norm(u) * np.linalg.norm(v1))
        assert align >= 1.0 - 1e-8

    def test_on_unit_level_set(self, ctx_lin, ground_lin):
        assert abs(ground_lin.a_value - 1.0) <= 1e-8
        assert abs(energy_A(ctx_lin, ground_lin.coeffs) - 1.0) <= 1e-8

    def test_converged_with_small_residual(self, ground_lin):
        assert ground_lin.converged
        assert ground_lin.residual <= 1e-8
        assert ground_lin.lambda_ > 0
        assert ground_lin.label == "ground"
        assert ground_lin.index_i == 1
        assert ground_lin.basis_k == 12

    def test_monotone_certificate_on_iterates(self, ground_lin):
        assert ground_lin.mc_min >= -1e-10

    def test_deterministic_for_fixed_seed(self, ctx_lin, ground_lin):
        again = solve_first(ctx_lin, 12, SolverConfig(rng_seed=3, n_restarts=4))
        assert again.lambda_ == ground_lin.lambda_
        np.testing.assert_array_equal(again.coeffs, ground_lin.coeffs)

    def test_seed_independent_ground_level(self, ctx_lin, ground_lin):
        other = solve_first(ctx_lin, 12, SolverConfig(rng_seed=99, n_restarts=4))
        assert other.lambda_ == pytest.approx(ground_lin.lambda_, rel=1e-10)

    def test_single_function_subspace(self, ctx_lin):
        res = solve_first(ctx_lin, 1, SolverConfig(rng_seed=0, n_restarts=2))
        lam, _ = linear_oracle(ctx_lin, 1)[0]
        assert res.converged
        assert res.lambda_ == pytest.approx(lam, rel=1e-10)

    def test_k_out_of_range(self, ctx_lin):
        with pytest.raises(ConfigError):
            solve_first(ctx_lin, 0)
        with pytest.raises(ConfigError):
            solve_first(ctx_lin, 13)


class TestLinearSequence:
    def test_matches_oracle_spectrum(self, ctx_lin, seq_lin):
        oracle = linear_oracle(ctx_lin, 12)
        assert len(seq_lin) == 3
        for res, (lam, _) in zip(seq_lin, oracle):
            assert res.converged
            assert res.lambda_ == pytest.approx(lam, rel=1e-8)

    def test_labels_and_indices(self, seq_lin):
        assert [r.index_i for r in seq_lin] == [1, 2, 3]
        assert [r.label for r in seq_lin] == ["ground", "candidate", "candidate"]

    def test_no_order_flags_for_clean_spectrum(self, seq_lin):
        assert all(r.flags == [] for r in seq_lin)
        assert not any(r.cluster for r in seq_lin)

    def test_modes_mass_orthogonal(self, ctx_lin, seq_lin):
        B = mass_matrix(ctx_lin, 12)
        for i in range(3):
            for j in range(i):
                q = abs(seq_lin[i].coeffs @ B @ seq_lin[j].coeffs)
                assert q <= 1e-8

    def test_bad_i_max(self, ctx_lin):
        with pytest.raises(ConfigError):
            solve_sequence(ctx_lin, 4, 5)
        with pytest.raises(ConfigError):
            solve_sequence(ctx_lin, 4, 0)


class TestLinearOracle:
    def test_full_spectrum_ascending_and_positive(self, ctx_lin):
        pairs = linear_oracle(ctx_lin, 8)
        lams = [lam for lam, _ in pairs]
        assert len(pairs) == 8
        assert lams[0] > 0
        assert np.all(np.diff(lams) > 0)

    def test_vectors_on_unit_level_set(self, ctx_lin):
        for lam, u in linear_oracle(ctx_lin, 6):
            assert energy_A(ctx_lin, u) == pytest.approx(1.0, rel=1e-10)

    def test_vectors_satisfy_matrix_pencil(self, ctx_lin):
        K = stiffness_matrix(ctx_lin, 8)
        B = mass_matrix(ctx_lin, 8)
        for lam, u in linear_oracle(ctx_lin, 8):
            r = np.linalg.norm(K @ u - lam * B @ u) / np.linalg.norm(K @ u)
            assert r <= 1e-10

    def test_rejects_nonquadratic_kernel(self, ctx_nl):
        with pytest.raises(ConfigError):
            linear_oracle(ctx_nl, 4)

    def test_weighted_quadratic_case_agrees_with_iteration(self):
        ctx = build_context(
            catalog_kernel("weighted-plap:2:1 + 0.25*cos(x - y)"),
            catalog_source("power:2"),
            build_basis(0.0, 1.0, 8),
            s=0.5,
            quad_cfg=FAST_QUAD,
        )
        lam1, v1 = linear_oracle(ctx, 8)[0]
        res = solve_first(ctx, 8, SolverConfig(rng_seed=1, n_restarts=3))
        assert res.converged
        assert res.lambda_ == pytest.approx(lam1, rel=1e-8)


class TestNonlinear:
    def test_converges_on_level_set(self, pair_nl):
        assert pair_nl.converged
        assert pair_nl.residual <= 1e-8
        assert abs(pair_nl.a_value - 1.0) <= 1e-8
        assert pair_nl.lambda_ > 0
        assert pair_nl.g_value > 0

    def test_rayleigh_identity(self, ctx_nl, pair_nl):
        from orliczeig.energy import grad_A, grad_G
        gA = grad_A(ctx_nl, pair_nl.coeffs)
        gG = grad_G(ctx_nl, pair_nl.coeffs)
        lhs = float(gA @ pair_nl.coeffs)
        rhs = pair_nl.lambda_ * float(gG @ pair_nl.coeffs)
        assert lhs == pytest.approx(rhs, abs=1e-8)

    def test_ground_level_stable_across_seeds(self, ctx_nl, pair_nl):
        other = solve_first(ctx_nl, 8, SolverConfig(rng_seed=77, n_restarts=4))
        assert other.lambda_ == pytest.approx(pair_nl.lambda_, rel=1e-8)

    def test_deflated_pair_sits_higher(self, ctx_nl, pair_nl):
        seq = solve_sequence(ctx_nl, 8, 2, SolverConfig(rng_seed=5, n_restarts=4))
        assert seq[0].lambda_ == pytest.approx(pair_nl.lambda_, rel=1e-8)
        assert seq[1].lambda_ > seq[0].lambda_
        assert seq[1].g_value < seq[0].g_value
        assert seq[1].converged


class TestNonconvergenceReporting:
    def test_best_iterate_attached(self, ctx_nl):
        starved = SolverConfig(
            rng_seed=2, n_restarts=2, max_iter=1, newton_iters=1,
            grad_tol=1e-300, ascent_tol=1e-300,
        )
        with pytest.raises(NonconvergenceError) as exc_info:
            solve_first(ctx_nl, 8, starved)
        best = exc_info.value.best
        assert best is not None
        assert not best.converged
        assert np.all(np.isfinite(best.coeffs))


class TestAnnotation:
    def _mk(self, i, lam, g):
        return EigenpairResult(
            index_i=i, basis_k=4, lambda_=lam, coeffs=np.zeros(4),
            g_value=g, a_value=1.0, residual=0.0, iterations=1,
            converged=True,
        )

    def test_order_violations_flagged_not_reordered(self):
        seq = [self._mk(1, 10.0, 1.0), self._mk(2, 5.0, 2.0)]
        _annotate_sequence(seq)
        assert "lambda_order" in seq[1].flags
        assert "g_order" in seq[1].flags
        assert [r.lambda_ for r in seq] == [10.0, 5.0]

    def test_near_degenerate_pair_marked_cluster(self):
        seq = [self._mk(1, 10.0, 1.0), self._mk(2, 10.0 + 1e-7, 0.9)]
        _annotate_sequence(seq)
        assert seq[0].cluster and seq[1].cluster
        assert seq[1].flags == []

    def test_clean_sequence_untouched(self):
        seq = [self._mk(1, 10.0, 1.0), self._mk(2, 20.0, 0.5)]
        _annotate_sequence(seq)
        assert all(r.flags == [] for r in seq)
        assert not any(r.cluster for r in seq)


class TestKStudy:
    def test_tables_filled(self, report_lin):
        assert report_lin.g_table.shape == (2, 3)
        assert np.all(np.isfinite(report_lin.g_table))
        assert np.all(np.isfinite(report_lin.lambda_table))

    def test_nested_subspace_monotonicity(self, report_lin):
        assert report_lin.verdicts["g1_nondecreasing_in_k"]
        assert report_lin.verdicts["lambda1_nonincreasing_in_k"]

    def test_oracle_column_for_quadratic_case(self, report_lin):
        assert report_lin.oracle_lambda1 is not None
        assert report_lin.verdicts["lambda1_matches_oracle"]
        for j, k in enumerate(report_lin.k_list):
            assert report_lin.lambda_table[0, j] == pytest.approx(
                report_lin.oracle_lambda1[k], rel=1e-8)

    def test_no_oracle_for_nonquadratic(self, ctx_nl):
        rep = k_study(ctx_nl, SolverConfig(rng_seed=1, n_restarts=2), [4, 8], 1)
        assert rep.oracle_lambda1 is None
        assert "lambda1_matches_oracle" not in rep.verdicts

    def test_k_list_must_increase(self, ctx_lin):
        with pytest.raises(ConfigError):
            k_study(ctx_lin, SolverConfig(), [8, 4], 1)
        with pytest.raises(ConfigError):
            k_study(ctx_lin, SolverConfig(), [4, 16], 1)
