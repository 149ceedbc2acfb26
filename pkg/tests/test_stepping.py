import numpy as np
import pytest

from undercool.models.alloy import AlloyKernel, AlloyParams
from undercool.models.free_growth import FreeGrowthKernel
from undercool.stepping import ThetaScheme, lagged_rate, timescales


def test_scheme_times_and_validation():
    s = ThetaScheme(0.5, 0.1, 3)
    assert s.t_old == pytest.approx(0.3)
    assert s.t_new == pytest.approx(0.4)
    with pytest.raises(ValueError):
        ThetaScheme(1.5, 0.1)
    with pytest.raises(ValueError):
        ThetaScheme(0.5, 0.0)


def test_lagged_rate_constant_is_zero():
    u = np.full(5, 2.0)
    r = lagged_rate(u, u, u, ThetaScheme(0.5, 0.01, 0))
    assert np.all(r == 0.0)


def test_lagged_rate_backward_euler_unit_increment():
    dt = 0.25
    old = np.zeros(4)
    new = old + dt
    r = lagged_rate(new, old, old, ThetaScheme(1.0, dt, 0))
    assert np.allclose(r, 1.0)


def test_lagged_rate_trapezoidal_arithmetic():
    dt = 0.5
    prev = np.zeros(3)
    old = prev + 4 * dt
    new = old + 2 * dt
    r = lagged_rate(new, old, prev, ThetaScheme(0.5, dt, 1))
    assert np.allclose(r, 3.0)


def test_lagged_rate_linear_in_each_argument():
    rng = np.random.default_rng(3)
    s = ThetaScheme(0.3, 0.1, 0)
    a, b, c = (rng.standard_normal(6) for _ in range(3))
    d, e, f = (rng.standard_normal(6) for _ in range(3))
    lhs = lagged_rate(a + 2 * d, b + 2 * e, c + 2 * f, s)
    rhs = lagged_rate(a, b, c, s) + 2 * lagged_rate(d, e, f, s)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_free_growth_heat_timescale_value():
    k = FreeGrowthKernel()
    ts = timescales(k.scales(), h=0.03, dt=1e-4, dim=2)
    # h^2 / (4 alpha) with alpha = 4
    assert ts.dt_heat == pytest.approx(5.625e-5, rel=1e-12)
    assert ts.dt_solute == np.inf
    assert ts.dt_phase > ts.dt_heat


def test_alloy_kappa_value():
    k = AlloyKernel()
    assert k.params.diffusivity == pytest.approx(6.267, rel=1e-12)
    assert k.params.solute_d0 == pytest.approx(6.267 / 1.14, rel=1e-12)
    ts = timescales(k.scales(), h=0.8, dt=0.002, dim=2)
    assert ts.kappa == pytest.approx(2 * 0.002 * (6.267 / 1.14) / 0.64, rel=1e-12)
    assert ts.kappa == pytest.approx(0.03436, rel=1e-3)


def test_kappa_is_one_at_the_explicit_solute_limit():
    k = AlloyKernel()
    d0 = k.params.solute_d0
    h = 0.8
    ts = timescales(k.scales(), h=h, dt=h * h / (2 * d0), dim=2)
    assert ts.kappa == pytest.approx(1.0, rel=1e-14)


def test_zero_diffusivity_reports_infinite_scale():
    ts = timescales({"tau": 1.0, "interface_width": 1.0}, h=0.1, dt=0.01)
    assert ts.dt_solute == np.inf
    assert ts.dt_heat == np.inf


def test_timescale_ordering_with_all_fields_active():
    # synthetic three-field regime: weak phase relaxation, moderate solute
    # diffusion, fast heat diffusion
    scales = {
        "tau": 1.0,
        "interface_width": 1.0,  # phase diffusivity 1
        "solute_diffusivity": 10.0,
        "heat_diffusivity": 100.0,
        "solute_d0": 9.0,
    }
    ts = timescales(scales, h=0.1, dt=0.01)
    assert ts.dt_phase > ts.dt_solute > ts.dt_heat
