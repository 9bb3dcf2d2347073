import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oilopt import (
    Dynamics,
    Economics,
    LevyMeasure,
    MarketModel,
    profit_rate,
    terminal_value,
    validate_model,
)


def make_model(u_max=50000.0, fixed_cost=5.0, mu=(55.0, 35.0), generator=None,
               measure=None, **kw):
    if generator is None:
        generator = np.array([[-0.01, 0.01], [0.15, -0.15]])
    M = len(mu)
    dyn = Dynamics(
        kappa=kw.get("kappa", 0.01),
        mu=mu,
        sigma=kw.get("sigma", (0.2, 0.3)[:M]),
        jump_scale=kw.get("jump_scale", (0.1,) * M),
        discount_rate=kw.get("discount_rate", 0.05),
    )
    eco = Economics(
        fixed_cost=fixed_cost,
        marginal_cost=kw.get("marginal_cost", 20.0),
        reserve_slope=kw.get("reserve_slope", 0.0),
        reserve_offset=kw.get("reserve_offset", 1.0),
        u_max=u_max,
        reserve_capacity=kw.get("reserve_capacity", 10.0),
        horizon=kw.get("horizon", 10.0),
        terminal_offset=kw.get("terminal_offset", 20.0),
    )
    return MarketModel(
        generator=np.asarray(generator, dtype=float),
        dynamics=dyn,
        economics=eco,
        measure=measure if measure is not None else LevyMeasure.uniform(1.0, 0.5),
    )


class TestProfitRate:
    def test_worked_example(self):
        # price 30, one unit extracted: 30 - (5 + 20*1*(0*y + 1)) = 5
        model = make_model()
        assert profit_rate(model, 0.0, 30.0, 4.0, 1.0) == pytest.approx(5.0)

    def test_zero_rate_pays_fixed_cost(self):
        model = make_model()
        assert profit_rate(model, 0.0, 30.0, 4.0, 0.0) == pytest.approx(-5.0)

    def test_reserve_dependent_markup(self):
        model = make_model(reserve_slope=0.5, reserve_offset=2.0)
        # cost = 5 + 20*u*(0.5*4 + 2) = 5 + 80u
        assert profit_rate(model, 0.0, 100.0, 4.0, 1.0) == pytest.approx(100.0 - 85.0)

    def test_rejects_rate_outside_bounds(self):
        model = make_model(u_max=10.0)
        with pytest.raises(ValueError):
            profit_rate(model, 0.0, 30.0, 4.0, 11.0)
        with pytest.raises(ValueError):
            profit_rate(model, 0.0, 30.0, 4.0, -1.0)

    def test_rejects_reserve_outside_bounds(self):
        model = make_model()
        with pytest.raises(ValueError):
            profit_rate(model, 0.0, 30.0, 11.0, 1.0)

    @given(
        u1=st.floats(0.0, 1000.0),
        u2=st.floats(0.0, 1000.0),
        w=st.floats(0.0, 1.0),
    )
    def test_affine_in_rate(self, u1, u2, w):
        """The running profit must stay affine in u (this is what makes the
        optimal control bang-bang)."""
        model = make_model(u_max=1000.0)
        x, y = 47.0, 3.5
        mix = w * u1 + (1 - w) * u2
        lhs = profit_rate(model, 0.0, x, y, mix)
        rhs = w * profit_rate(model, 0.0, x, y, u1) + (1 - w) * profit_rate(
            model, 0.0, x, y, u2
        )
        assert lhs == pytest.approx(rhs, abs=1e-6)


class TestTerminalValue:
    def test_worked_example(self):
        model = make_model()
        # (10 - 4) * (30 - 20) = 60
        assert terminal_value(model, 30.0, 4.0) == pytest.approx(60.0)

    def test_empty_reserve_settles_full_capacity(self):
        model = make_model()
        assert terminal_value(model, 30.0, 0.0) == pytest.approx(100.0)

    def test_full_reserve_settles_zero(self):
        model = make_model()
        assert terminal_value(model, 30.0, 10.0) == 0.0

    def test_vectorized_over_grid(self):
        model = make_model()
        x = np.array([0.0, 20.0, 50.0])
        y = np.array([0.0, 10.0])
        out = terminal_value(model, x[:, None], y[None, :])
        assert out.shape == (3, 2)
        assert out[1, 0] == 0.0  # price == terminal offset
        assert out[2, 1] == 0.0  # nothing left to settle


class TestLevyMeasure:
    def test_null_measure(self):
        m = LevyMeasure.null()
        assert m.total_mass == 0.0
        assert m.compensator_drift() == 0.0

    def test_uniform_mass_and_density(self):
        m = LevyMeasure.uniform(half_width=1.0, total_mass=0.5)
        assert m.total_mass == 0.5
        assert m.density(0.0) == pytest.approx(0.25)
        assert m.density(1.5) == 0.0

    def test_uniform_compensator_is_zero(self):
        m = LevyMeasure.uniform(half_width=1.0, total_mass=2.0)
        assert abs(m.compensator_drift()) < 1e-12

    def test_atom_compensator_counts_only_small_jumps(self):
        m = LevyMeasure.atoms([(0.5, 1.0), (2.0, 3.0), (-0.25, 2.0)])
        # |z| < 1 strictly: 0.5*1 + (-0.25)*2 = 0
        assert m.compensator_drift() == pytest.approx(0.0)
        assert m.total_mass == pytest.approx(6.0)

    def test_double_exponential_mass(self):
        m = LevyMeasure.double_exponential(decay=2.0, half_width=5.0, total_mass=1.5)
        assert m.total_mass == 1.5
        # integrate the density numerically as a cross-check
        z = np.linspace(-5, 5, 200001)
        mass = np.trapezoid(m.density(z), z)
        assert mass == pytest.approx(1.5, rel=1e-6)

    def test_from_density_normalizes(self):
        m = LevyMeasure.from_density(lambda z: 1.0 + 0.0 * np.asarray(z), 2.0,
                                     total_mass=3.0)
        assert m.total_mass == pytest.approx(3.0)
        assert m.density(0.0) == pytest.approx(0.75)

    def test_sampling_double_exponential_matches_cdf(self):
        m = LevyMeasure.double_exponential(decay=2.0, half_width=5.0, total_mass=1.0)
        rng = np.random.default_rng(0)
        s = m.sample_jumps(rng, 200000)
        assert abs(np.mean(s)) < 0.01  # symmetric
        # P(|Z| <= 0.5) for the truncated double exponential
        lam, w = 2.0, 5.0
        p = (1 - math.exp(-lam * 0.5)) / (1 - math.exp(-lam * w))
        assert np.mean(np.abs(s) <= 0.5) == pytest.approx(p, abs=0.01)

    def test_sampling_atoms(self):
        m = LevyMeasure.atoms([(1.0, 3.0), (-2.0, 1.0)])
        rng = np.random.default_rng(1)
        s = m.sample_jumps(rng, 40000)
        assert set(np.unique(s)) == {1.0, -2.0}
        assert np.mean(s == 1.0) == pytest.approx(0.75, abs=0.01)

    def test_zero_mass_sampling_rejected(self):
        with pytest.raises(ValueError):
            LevyMeasure.null().sample_jumps(np.random.default_rng(0), 5)


class TestValidation:
    def test_reference_model_is_clean(self):
        assert validate_model(make_model()).ok

    def test_bad_generator_rows(self):
        model = make_model(generator=[[-0.01, 0.02], [0.15, -0.15]])
        report = validate_model(model)
        assert not report.ok
        assert any("sum to zero" in v for v in report.violations)

    def test_negative_off_diagonal(self):
        model = make_model(generator=[[0.01, -0.01], [0.15, -0.15]])
        assert any("off-diagonal" in v for v in validate_model(model).violations)

    def test_length_mismatch(self):
        model = make_model(mu=(55.0, 35.0, 45.0))  # generator stays 2x2
        report = validate_model(model)
        assert any("mu" in v for v in report.violations)

    def test_multiple_violations_collected(self):
        dyn = Dynamics(kappa=-1.0, mu=(55.0,), sigma=(-0.2,), jump_scale=(0.1,),
                       discount_rate=0.0)
        eco = Economics(fixed_cost=-5.0, marginal_cost=0.0, reserve_slope=0.0,
                        reserve_offset=1.0, u_max=-1.0, reserve_capacity=0.0,
                        horizon=0.0, terminal_offset=20.0)
        model = MarketModel(generator=np.array([[0.0]]), dynamics=dyn, economics=eco,
                            measure=LevyMeasure.null())
        report = validate_model(model)
        assert len(report.violations) >= 7

    def test_single_regime_allowed(self):
        model = make_model(mu=(55.0,), sigma=(0.2,), jump_scale=(0.1,),
                           generator=[[0.0]])
        assert validate_model(model).ok
