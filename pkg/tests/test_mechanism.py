"""Mechanism runs against hand-traced realizations and balance identities."""

import numpy as np
import pytest

from dpflow.ccopf import solve_ccopf
from dpflow.grid_model import (
    GridError,
    build_topology,
    bundled_case_path,
    load_case_file,
)
from dpflow.mechanism import (
    GaussianSampler,
    MechanismError,
    PrivacyLedger,
    RealizedDispatch,
    gaussian_sampler,
    realize,
    run_dp_ccopf,
    run_output_perturbation,
)
from dpflow.dopf import solve_dopf
from dpflow.privacy_calibration import PrivacyError, calibrate_sigma

from test_grid_model import make_grid


@pytest.fixture(scope="module")
def chain3():
    grid = load_case_file(bundled_case_path("chain3"))
    return grid, build_topology(grid)


def chain3_affine(chain3, betas=(0.05, 0.08)):
    grid, topo = chain3
    spec = calibrate_sigma(1.0, 0.5, np.asarray(betas, dtype=float))
    return spec, solve_ccopf(grid, topo, spec)


def subtree_flow_residual(grid, topo, realized):
    """Max balance error: every line's flow vs net load below it (MW)."""
    base = grid.base_mva
    worst = 0.0
    for line in grid.lines:
        below = sorted(topo.subtree(line))
        want_p = sum(grid.d_p[i] * base - realized.g_p[i] for i in below)
        want_q = sum(grid.d_q[i] * base - realized.g_q[i] for i in below)
        worst = max(worst, abs(realized.f_p[line - 1] - want_p),
                    abs(realized.f_q[line - 1] - want_q))
    return worst


def voltage_residual(grid, topo, realized):
    """Max error of u against the drop recursion from realized flows."""
    base = grid.base_mva
    worst = 0.0
    for i in range(1, grid.node_count):
        drop = sum(grid.r[l - 1] * realized.f_p[l - 1] / base
                   + grid.x[l - 1] * realized.f_q[l - 1] / base
                   for l in topo.root_path_lines[i])
        worst = max(worst, abs(realized.u[i] - (1.0 - 2.0 * drop)))
    return worst


class TestSampler:
    def test_zero_sigma_exact_zero(self):
        draw = gaussian_sampler(7, np.zeros(4))()
        assert draw.shape == (4,)
        assert np.all(draw == 0.0)

    def test_mixed_support_zero_components(self):
        sampler = GaussianSampler(3, np.array([0.0, 1.0, 0.0]))
        for _ in range(5):
            draw = sampler()
            assert draw[0] == 0.0 and draw[2] == 0.0
            assert draw[1] != 0.0

    def test_reproducible_stream(self):
        a = GaussianSampler(42, np.array([1.0, 2.0]))
        b = GaussianSampler(42, np.array([1.0, 2.0]))
        for _ in range(10):
            assert np.array_equal(a(), b())

    def test_streams_differ(self):
        a = GaussianSampler(42, np.ones(3), stream=0)
        b = GaussianSampler(42, np.ones(3), stream=1)
        assert not np.array_equal(a(), b())

    def test_seed_changes_draws(self):
        assert not np.array_equal(GaussianSampler(1, np.ones(2))(),
                                  GaussianSampler(2, np.ones(2))())

    def test_moments_large_sample(self):
        sigma = np.array([0.5, 2.0])
        draws = GaussianSampler(0, sigma).batch(1_000_000)
        # CLT: |mean| < 4 sigma/sqrt(N); chi-square: std within 1% of sigma
        assert np.all(np.abs(draws.mean(axis=0)) < 4 * sigma / 1000)
        assert np.allclose(draws.std(axis=0), sigma, rtol=0.01)

    def test_negative_sigma_rejected(self):
        with pytest.raises(PrivacyError, match="non-negative"):
            GaussianSampler(0, np.array([0.1, -0.1]))

    def test_matrix_sigma_rejected(self):
        with pytest.raises(PrivacyError, match="one-dimensional"):
            GaussianSampler(0, np.ones((2, 2)))


class TestLedger:
    def test_linear_composition(self):
        ledger = PrivacyLedger(0.4, 0.01, 5)
        assert ledger.epsilon_spent == pytest.approx(2.0)

    def test_single_draw(self):
        assert PrivacyLedger(1.0, 0.1, 1).epsilon_spent == 1.0

    def test_zero_draws_rejected(self):
        with pytest.raises(PrivacyError, match="at least 1"):
            PrivacyLedger(1.0, 0.1, 0)


class TestRealize:
    def test_zero_xi_is_nominal(self, chain3):
        grid, _ = chain3
        spec, affine = chain3_affine(chain3)
        realized = realize(affine, np.zeros(2))
        base = grid.base_mva
        assert np.allclose(realized.g_p, affine.nominal.g_p * base, atol=1e-12)
        assert np.allclose(realized.f_p, affine.nominal.f_p * base, atol=1e-12)
        assert np.allclose(realized.u, affine.nominal.u, atol=1e-12)
        assert realized.feasible["overall"] is True
        assert realized.seed is None

    def test_unit_shift_moves_own_flow(self, chain3):
        grid, _ = chain3
        spec, affine = chain3_affine(chain3)
        for line in (1, 2):
            xi = np.zeros(2)
            xi[line - 1] = spec.sigma[line - 1]
            realized = realize(affine, xi)
            want = affine.nominal.f_p[line - 1] * grid.base_mva \
                + spec.sigma[line - 1]
            assert realized.f_p[line - 1] == pytest.approx(want, abs=1e-9)

    def test_balance_holds_for_100_draws(self, chain3):
        grid, topo = chain3
        spec, affine = chain3_affine(chain3)
        sampler = GaussianSampler(11, spec.sigma)
        for _ in range(100):
            realized = realize(affine, sampler())
            assert subtree_flow_residual(grid, topo, realized) < 1e-10
            assert voltage_residual(grid, topo, realized) < 1e-10

    def test_huge_xi_flags_infeasible(self, chain3):
        grid, _ = chain3
        _, affine = chain3_affine(chain3)
        realized = realize(affine, np.array([80.0, 50.0]))
        assert realized.feasible["overall"] is False
        assert not (realized.feasible["generator"] and realized.feasible["flow"])

    def test_wrong_length_rejected(self, chain3):
        _, affine = chain3_affine(chain3)
        with pytest.raises(GridError, match="per line"):
            realize(affine, np.zeros(3))


class TestRunDpCcopf:
    def test_zero_beta_deterministic(self, chain3):
        grid, topo = chain3
        realized, ledger = run_dp_ccopf(grid, topo, 1.0, 0.5, np.zeros(2),
                                        seed=123)
        dopf = solve_dopf(grid, topo)
        base = grid.base_mva
        assert np.all(realized.xi == 0.0)
        assert np.allclose(realized.g_p, dopf.g_p * base, atol=1e-6)
        assert np.allclose(realized.f_p, dopf.f_p * base, atol=1e-6)
        assert realized.feasible["overall"] is True
        assert ledger.draws == 1
        assert ledger.epsilon_spent == pytest.approx(1.0)

    def test_bit_reproducible(self, chain3):
        grid, topo = chain3
        beta = np.array([0.05, 0.08])
        first, led_a = run_dp_ccopf(grid, topo, 1.0, 0.5, beta, seed=9)
        second, led_b = run_dp_ccopf(grid, topo, 1.0, 0.5, beta, seed=9)
        assert np.array_equal(first.xi, second.xi)
        assert np.array_equal(first.g_p, second.g_p)
        assert np.array_equal(first.u, second.u)
        assert led_a == led_b
        assert first.seed == 9

    def test_seed_changes_sample(self, chain3):
        grid, topo = chain3
        beta = np.array([0.05, 0.08])
        one, _ = run_dp_ccopf(grid, topo, 1.0, 0.5, beta, seed=1)
        two, _ = run_dp_ccopf(grid, topo, 1.0, 0.5, beta, seed=2)
        assert not np.array_equal(one.xi, two.xi)

    def test_single_line_noise_consistency(self, chain3):
        grid, topo = chain3
        realized, _ = run_dp_ccopf(grid, topo, 1.0, 0.5,
                                   np.array([0.0, 0.08]), seed=5)
        assert realized.xi[0] == 0.0
        assert subtree_flow_residual(grid, topo, realized) < 1e-10

    def test_ledger_counts_resamples(self, chain3):
        grid, topo = chain3
        beta = np.array([0.05, 0.08])
        for seed in range(6):
            realized, ledger = run_dp_ccopf(grid, topo, 1.0, 0.5, beta,
                                            seed=seed, max_resamples=4)
            assert 1 <= ledger.draws <= 5
            assert ledger.epsilon_spent == pytest.approx(ledger.draws * 1.0)
            if not realized.feasible["overall"]:
                assert ledger.draws == 5

    def test_infeasible_requirement_raises(self, chain3):
        grid, topo = chain3
        with pytest.raises(MechanismError, match="not accommodable"):
            run_dp_ccopf(grid, topo, 1.0, 0.5, np.array([40.0, 60.0]))


class TestOutputPerturbation:
    def test_zero_beta_matches_dopf(self, chain3):
        grid, topo = chain3
        realized, ledger = run_output_perturbation(grid, topo, 1.0, 0.5,
                                                   np.zeros(2), seed=3)
        dopf = solve_dopf(grid, topo)
        base = grid.base_mva
        assert np.allclose(realized.f_p, dopf.f_p * base, atol=1e-7)
        assert np.allclose(realized.g_p, dopf.g_p * base, atol=1e-6)
        assert realized.feasible["overall"] is True
        assert ledger.draws == 1

    def test_flows_pinned_to_perturbation(self, chain3):
        grid, topo = chain3
        dopf = solve_dopf(grid, topo)
        realized, _ = run_output_perturbation(grid, topo, 1.0, 0.5,
                                              np.array([0.02, 0.02]), seed=4)
        want = dopf.f_p * grid.base_mva + realized.xi
        assert np.allclose(realized.f_p, want, atol=1e-6)

    def test_forced_generation_telescopes(self):
        # chain with ample DER range: pinned flows force g by nodal balance
        grid = make_grid({1: 0, 2: 1}, d_p=[0.0, 1.0, 1.0],
                         g_p_max=[10.0, 5.0, 5.0], g_p_min=[0.0, -5.0, -5.0],
                         g_q_min=[-5.0, -5.0, -5.0], g_q_max=[5.0, 5.0, 5.0])
        topo = build_topology(grid)
        realized, _ = run_output_perturbation(grid, topo, 1.0, 0.5,
                                              np.array([0.3, 0.3]), seed=8)
        xi1, xi2 = realized.xi
        dopf = solve_dopf(grid, topo)
        want_g1 = dopf.g_p[1] + xi2 - xi1
        want_g2 = dopf.g_p[2] - xi2
        assert realized.g_p[1] == pytest.approx(want_g1, abs=1e-6)
        assert realized.g_p[2] == pytest.approx(want_g2, abs=1e-6)

    def test_rigid_grid_reports_infeasible(self):
        # no active DER range off-root: nonzero draws break exact balance
        grid = make_grid({1: 0, 2: 1}, d_p=[0.0, 1.0, 1.0],
                         g_p_max=[10.0, 0.0, 0.0])
        topo = build_topology(grid)
        realized, ledger = run_output_perturbation(grid, topo, 1.0, 0.5,
                                                   np.array([0.0, 0.2]),
                                                   seed=1)
        assert realized.feasible["overall"] is False
        assert realized.feasible["generator"] is False
        assert realized.xi[1] != 0.0
        assert ledger.draws == 1
        # the reported point keeps nodal balance at the forced generations
        assert subtree_flow_residual(grid, topo, realized) < 1e-10
        assert voltage_residual(grid, topo, realized) < 1e-10

    def test_infeasible_forced_point_values(self):
        grid = make_grid({1: 0, 2: 1}, d_p=[0.0, 1.0, 1.0],
                         g_p_max=[10.0, 0.0, 0.0])
        topo = build_topology(grid)
        realized, _ = run_output_perturbation(grid, topo, 1.0, 0.5,
                                              np.array([0.1, 0.2]), seed=2)
        xi1, xi2 = realized.xi
        assert realized.g_p[1] == pytest.approx(xi2 - xi1, abs=1e-7)
        assert realized.g_p[2] == pytest.approx(-xi2, abs=1e-7)
