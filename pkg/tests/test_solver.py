"""Solver unit tests: coefficients, invariants, convergence, mode agreement."""

import numpy as np
import pytest

from oilopt import (
    ConvergenceError,
    DiscreteOperator,
    Dynamics,
    Economics,
    GridField,
    LevyMeasure,
    MarketModel,
    MonotonicityError,
    SolverConfig,
    analytic_oracle,
    build_grid,
    build_quadrature,
    dpp_residual,
    scheme_coefficients,
    solve,
)


def single_regime_model(u_max=0.0, fixed_cost=0.0, kappa=0.01, sigma=0.2,
                        horizon=1.0, measure=None, jump_scale=0.0):
    dyn = Dynamics(kappa=kappa, mu=(55.0,), sigma=(sigma,), jump_scale=(jump_scale,),
                   discount_rate=0.05)
    eco = Economics(fixed_cost=fixed_cost, marginal_cost=20.0, reserve_slope=0.0,
                    reserve_offset=1.0, u_max=u_max, reserve_capacity=10.0,
                    horizon=horizon, terminal_offset=20.0)
    return MarketModel(generator=np.array([[0.0]]), dynamics=dyn, economics=eco,
                       measure=measure or LevyMeasure.null())


def reference_model(horizon=2.0, u_max=50000.0):
    dyn = Dynamics(kappa=0.01, mu=(55.0, 35.0), sigma=(0.2, 0.3),
                   jump_scale=(0.1, 0.1), discount_rate=0.05)
    eco = Economics(fixed_cost=5.0, marginal_cost=20.0, reserve_slope=0.0,
                    reserve_offset=1.0, u_max=u_max, reserve_capacity=10.0,
                    horizon=horizon, terminal_offset=20.0)
    return MarketModel(generator=np.array([[-0.01, 0.01], [0.15, -0.15]]),
                       dynamics=dyn, economics=eco,
                       measure=LevyMeasure.uniform(1.0, 0.5))


def small_grid(horizon=1.0, price_cap=100.0, k=0.1, h=0.5, l=0.5, n_regimes=1):
    return build_grid(horizon=horizon, price_cap=price_cap, reserve_capacity=10.0,
                      time_step=k, price_step=h, reserve_step=l, n_regimes=n_regimes)


class TestCoefficients:
    """Frozen hand-computed weights: sigma=0.2, r=0.05, h=0.5, kappa=0.01, mu=55."""

    def setup_method(self):
        self.model = single_regime_model()
        self.grid = small_grid()
        self.scheme = build_quadrature(self.model.measure, xi=0.01)

    def test_diffusion_weight(self):
        a, b, c = scheme_coefficients(self.model, self.grid, 35.0, 0, 0.0,
                                      self.scheme, mode="paper_faithful")
        assert b == pytest.approx(1.6)

    def test_drift_boosted_up_weight(self):
        a, b, c = scheme_coefficients(self.model, self.grid, 35.0, 0, 0.0,
                                      self.scheme, mode="paper_faithful")
        # 1.6 + 0.01*(55-35)/(0.05*0.5)
        assert a == pytest.approx(9.6)

    def test_negative_weight_raises_with_step_bound(self):
        with pytest.raises(MonotonicityError, match=r"h < sigma\^2"):
            scheme_coefficients(self.model, self.grid, 60.0, 0, 0.0,
                                self.scheme, mode="paper_faithful")

    def test_upwind_splits_drift_by_sign(self):
        a, b, c = scheme_coefficients(self.model, self.grid, 60.0, 0, 0.0,
                                      self.scheme, mode="upwind")
        assert a == pytest.approx(1.6)   # no upward drift at x > mu
        assert b == pytest.approx(3.6)   # diffusion + downward drift
        assert a > 0 and b > 0

    @pytest.mark.parametrize("mode", ["paper_faithful", "upwind"])
    def test_center_weight_identity(self, mode):
        """With no jumps, no switching, and u = 0 the weights satisfy
        1/(rk) + a + b = c, which is what makes constants invariant under the
        raw balance (the discrete analogue of r*const = 0 + r*const)."""
        a, b, c = scheme_coefficients(self.model, self.grid, 35.0, 0, 0.0,
                                      self.scheme, mode=mode)
        r, k = 0.05, self.grid.time_step
        assert 1.0 / (r * k) + a + b == pytest.approx(c, rel=1e-12)


class TestExactDiscounting:
    def test_frozen_dynamics_discount_geometrically(self):
        """kappa = sigma = 0, no jumps, no extraction: the recursion collapses
        to V(s) = V(s+k)/(1+rk), so each slice is the terminal payoff divided
        by (1+rk)^steps. The solver must hit this exactly."""
        model = single_regime_model(kappa=0.0, sigma=0.0)
        grid = small_grid(horizon=1.0, k=0.25)
        field, report = solve(model, grid, SolverConfig(tolerance=1e-13, mode="upwind"))
        r, k = 0.05, 0.25
        psi = field.values[0, -1]
        for back, si in enumerate(range(grid.n_s - 1, -1, -1)):
            expected = psi / (1.0 + r * k) ** back
            np.testing.assert_allclose(field.values[0, si], expected, atol=1e-10)
        assert report.converged


class TestSolve:
    def test_oracle_config_interior_error(self):
        model = single_regime_model()
        grid = small_grid(horizon=1.0, k=0.05)
        field, report = solve(model, grid, SolverConfig(tolerance=1e-6))
        assert report.converged
        xs = grid.x_values
        inner = (xs >= 10.0) & (xs <= 90.0)
        worst = 0.0
        scale = 0.0
        for yi, y in enumerate(grid.y_values):
            exact = np.array([analytic_oracle(model, 0.0, x, y) for x in xs[inner]])
            err = np.max(np.abs(field.values[0, 0, inner, yi] - exact))
            worst = max(worst, float(err))
            scale = max(scale, float(np.max(np.abs(exact))))
        assert worst / scale < 5e-4

    def test_residuals_shrink_monotonically_after_burn_in(self):
        model = reference_model()
        grid = small_grid(horizon=2.0, n_regimes=2)
        field, report = solve(model, grid, SolverConfig(tolerance=1e-8))
        res = report.residuals
        assert all(res[i + 1] <= res[i] * (1 + 1e-12) for i in range(2, len(res) - 1))

    def test_jacobi_and_backward_agree(self):
        model = reference_model()
        grid = small_grid(horizon=2.0, n_regimes=2)
        tol = 1e-6
        fj, _ = solve(model, grid, SolverConfig(tolerance=tol, sweep="jacobi"))
        fb, _ = solve(model, grid, SolverConfig(tolerance=tol, sweep="backward"))
        assert np.max(np.abs(fj.values - fb.values)) < 2 * tol

    def test_terminal_slice_pinned(self):
        from oilopt import terminal_value

        model = reference_model()
        grid = small_grid(horizon=2.0, n_regimes=2)
        field, _ = solve(model, grid)
        psi = terminal_value(model, grid.x_values[:, None], grid.y_values[None, :])
        for m in range(2):
            assert np.array_equal(field.values[m, -1], psi)

    def test_iteration_cap_raises_with_history(self):
        model = reference_model(horizon=10.0)
        grid = build_grid(horizon=10.0, price_cap=100.0, reserve_capacity=10.0,
                          time_step=0.1, price_step=0.5, reserve_step=0.5, n_regimes=2)
        with pytest.raises(ConvergenceError) as err:
            solve(model, grid, SolverConfig(tolerance=1e-10, max_iterations=3))
        assert len(err.value.residual_history) == 3

    def test_dense_control_grid_matches_endpoints(self):
        """The best rate is an endpoint of [0, u_max] (the objective is a
        ratio of affine functions of u), so a dense control scan must not
        change any solved value."""
        model = reference_model()
        grid = small_grid(horizon=2.0, n_regimes=2)
        cfg = SolverConfig(tolerance=1e-8)
        field, _ = solve(model, grid, cfg)
        op = DiscreteOperator(model, grid, cfg)
        dense = np.linspace(0.0, model.economics.u_max, 51)
        one = op.sweep(field.values)
        two = op.sweep(field.values, controls=dense)
        np.testing.assert_array_equal(one, two)

    def test_order_preserved_by_sweep(self):
        """V <= W pointwise implies sweep(V) <= sweep(W) in upwind mode."""
        model = reference_model()
        grid = small_grid(horizon=2.0, n_regimes=2)
        op = DiscreteOperator(model, grid, SolverConfig())
        rng = np.random.default_rng(0)
        lower = op.initial_guess()
        for _ in range(10):
            bump = rng.uniform(0.0, 5.0, size=lower.shape)
            upper = lower + bump
            sl, su = op.sweep(lower), op.sweep(upper)
            assert np.all(sl <= su + 1e-12)
            lower = su  # walk around the space a bit

    def test_dpp_residual_small_on_solution_large_off_solution(self):
        model = reference_model()
        grid = small_grid(horizon=2.0, n_regimes=2)
        cfg = SolverConfig(tolerance=1e-8)
        field, _ = solve(model, grid, cfg)
        op = DiscreteOperator(model, grid, cfg)
        mism, info = dpp_residual(field, op, n_samples=1000, seed=0)
        assert mism <= 10 * cfg.tolerance
        # a visible dent in the field must show up as a recursion mismatch
        dent = field.values.copy()
        dent[0, 2, 50, 5] -= 0.5
        gap = np.abs(op.sweep(dent) - dent)
        assert gap[0, 2, 50, 5] > 0.4

    def test_contraction_gate_blocks_bad_quadrature(self):
        from oilopt import ContractionError

        measure = LevyMeasure.double_exponential(decay=60.0, half_width=5.0,
                                                 total_mass=40.0)
        model = single_regime_model(measure=measure, jump_scale=0.1)
        grid = small_grid(horizon=1.0)
        with pytest.raises(ContractionError):
            solve(model, grid, SolverConfig(xi=0.9))

    def test_mismatched_grid_regimes_rejected(self):
        from oilopt import ConfigError

        model = reference_model()
        grid = small_grid(horizon=2.0, n_regimes=1)
        with pytest.raises(ConfigError):
            solve(model, grid)


class TestSolverConfig:
    def test_rejects_unknown_mode(self):
        from oilopt import ConfigError

        with pytest.raises(ConfigError):
            SolverConfig(mode="central")

    def test_rejects_bad_dense_controls(self):
        from oilopt import ConfigError

        with pytest.raises(ConfigError):
            SolverConfig(dense_controls=1)

    def test_rejects_nonpositive_tolerance(self):
        from oilopt import ConfigError

        with pytest.raises(ConfigError):
            SolverConfig(tolerance=0.0)
