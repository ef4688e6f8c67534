import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from haptofv import Grid, InitialData, ModelParams, SchemeConfig, SchemeFailure, State
from haptofv import compute_flux, simulate, stable_dt, step
from suite import random_case
from oracles import logistic


def _state(grid, psi, phi):
    return State(grid, np.asarray(psi, float), np.asarray(phi, float))


def test_single_face_flux_by_hand():
    g = Grid.uniform(0.0, 0.2, 2)  # h = 0.1
    s = _state(g, [1.0, 2.0], [0.2, 0.4])
    # drift part alone: S(0.3) * alpha * dphi * psi_left = 0.21 * 2 * 1
    p = ModelParams(alpha=1.0, D=1e-14, delta=0.0)
    (f,) = compute_flux(s, p)
    assert f[0] == pytest.approx(0.42, abs=1e-12)
    # with diffusion: subtract S * D/2 * (4 - 1)/h
    p = ModelParams(alpha=1.0, D=1.0, delta=0.0)
    (f,) = compute_flux(s, p)
    assert f[0] == pytest.approx(0.42 - 0.21 * 0.5 * 30.0, rel=1e-14)


def test_upwind_donor_follows_drift():
    g = Grid.uniform(0.0, 0.2, 2)
    p = ModelParams(alpha=1.0, D=1e-14)
    (f,) = compute_flux(_state(g, [1.0, 2.0], [0.4, 0.2]), p)
    # drift points left, so the donor is the right cell (psi = 2)
    assert f[0] == pytest.approx(0.21 * (-2.0) * 2.0, abs=1e-12)


def test_fluxes_vanish():
    g = Grid.uniform(-1, 1, 16)
    x = g.axes[0]
    p = ModelParams(alpha=1.3, D=0.7, delta=0.0)
    (f,) = compute_flux(_state(g, np.full(16, 0.3), np.full(16, 0.4)), p)
    assert np.all(f == 0.0)
    (f,) = compute_flux(_state(g, np.exp(-x**2), np.zeros(16)), p)
    assert np.all(f == 0.0)
    (f,) = compute_flux(_state(g, np.exp(-x**2), np.ones(16)), p)
    assert np.all(f == 0.0)


def test_flux_nan_reports_face():
    g = Grid.uniform(0, 1, 5)
    psi = np.array([0.1, 0.2, np.nan, 0.1, 0.1])
    with pytest.raises(SchemeFailure, match="face"):
        compute_flux(_state(g, psi, np.full(5, 0.3)), ModelParams())


def test_stable_dt_trivial_is_max_dt():
    g = Grid.uniform(-1, 1, 32)
    s = _state(g, np.exp(-g.axes[0] ** 2), np.zeros(32))
    cfg = SchemeConfig(max_dt=3e-3)
    assert stable_dt(s, ModelParams(R0=0.0, delta=0.0), cfg) == 3e-3


def _dt(n, params, psi_fn, phi_fn):
    g = Grid.uniform(-1, 1, n)
    x = g.axes[0]
    return stable_dt(_state(g, psi_fn(x), phi_fn(x)), params, SchemeConfig(max_dt=1e9))


def test_stable_dt_diffusive_scaling():
    p = ModelParams(alpha=1e-9, D=1.0, R0=0.0, delta=0.0)
    dts = [_dt(n, p, lambda x: 0.5 + 0.4 * np.exp(-x**2), lambda x: 0.5 + 0 * x) for n in (64, 128, 256)]
    assert dts[1] / dts[0] == pytest.approx(0.25, rel=2e-2)
    assert dts[2] / dts[1] == pytest.approx(0.25, rel=1e-2)


def test_stable_dt_drift_scaling():
    p = ModelParams(alpha=1.0, D=1e-9, R0=0.0, delta=0.0)
    dts = [_dt(n, p, lambda x: 0.5 + 0 * x, lambda x: 0.2 + 0.2 * x) for n in (64, 128, 256)]
    assert dts[1] / dts[0] == pytest.approx(0.5, rel=2e-2)
    assert dts[2] / dts[1] == pytest.approx(0.5, rel=1e-2)


def test_stable_dt_reaction_cap():
    g = Grid.uniform(-1, 1, 8)
    s = _state(g, np.full(8, 2.0), np.zeros(8))
    dt = stable_dt(s, ModelParams(R0=4.0, delta=0.0), SchemeConfig(max_dt=1.0, cfl_safety=0.5))
    assert dt == pytest.approx(0.5 / (4.0 * 2.0))


@pytest.mark.parametrize("gamma", [0.3, 1.0, 2.5])
def test_homogeneous_saturated_step(gamma):
    g = Grid.uniform(0, 1, 10)
    s = _state(g, np.full(10, 0.5), np.full(10, 0.5))
    out = step(s, ModelParams(R0=1.7, gamma=gamma), 0.01)
    assert np.all(out.psi == 0.5)
    np.testing.assert_allclose(out.phi, 0.5 * math.exp(-gamma * 0.01 * 0.5), rtol=1e-15)
    assert out.time == 0.01


def test_zero_psi_invariant():
    g = Grid.uniform(-5, 5, 64)
    phi0 = 0.3 + 0.2 * np.sin(g.axes[0])
    tr = simulate(g, ModelParams(), InitialData(np.zeros(64), phi0), SchemeConfig(t_end=0.5), output_times=(0.25,))
    for s in tr.states:
        assert np.all(s.psi == 0.0)
        assert np.array_equal(s.phi, phi0)


def test_step_halves_on_negativity():
    g = Grid.uniform(0, 1, 2)
    s = _state(g, [1.0, 0.0], [0.5, 0.5])
    p = ModelParams(alpha=1.0, D=1.0, R0=0.0, delta=0.1)
    # outflow 0.35 per unit time from a cell of width 0.5 empties it after dt = 1/0.7
    out = step(s, p, 2.0)
    assert out.time == 1.0
    np.testing.assert_allclose(out.psi, [0.3, 0.7], rtol=1e-14)
    with pytest.raises(SchemeFailure, match="halvings"):
        step(s, p, 1e6)


@pytest.mark.parametrize("dim", [1, 2])
def test_mass_conserved_without_reaction(dim):
    g = Grid.uniform(-3, 3, 40, dim=dim)
    r2 = g.radius_sq
    init = InitialData(0.8 * np.exp(-r2), 0.3 + 0.3 * np.exp(-((g.centers[0] - 1) ** 2)))
    tr = simulate(g, ModelParams(R0=0.0, delta=0.05), init, SchemeConfig(t_end=0.2, max_dt=1e-3), stride=20)
    m = tr.record["mass"]
    assert np.max(np.abs(m - m[0])) <= 1e-12 * m[0]
    assert np.all(tr.record["psi_min"][1:] >= 0.0)


def test_2d_symmetric_run():
    g = Grid.uniform(-2, 2, 24, dim=2)
    x, y = g.centers
    init = InitialData(np.exp(-(x**2 + y**2) * 2), 0.4 + 0.2 * np.exp(-(x**2 + y**2)))
    tr = simulate(g, ModelParams(), init, SchemeConfig(t_end=0.1, max_dt=1e-3))
    psi = tr.states[-1].psi
    np.testing.assert_allclose(psi, psi.T, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(psi, psi[::-1, :], rtol=1e-12, atol=1e-15)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_positivity_and_phi_monotone(seed):
    grid, params, init, cfg = random_case(seed, n=64, t_end=0.2)
    tr = simulate(grid, params, init, cfg, output_times=(0.05, 0.1, 0.15))
    rec = tr.record
    assert np.all(rec["psi_min"][1:] >= 0.0)
    assert np.all(rec["phi_increase"][1:] <= 0.0)
    prev = init.phi0
    for s in tr.states:
        assert np.all(s.psi >= 0.0)
        assert np.all(s.phi >= 0.0) and np.all(s.phi <= prev) and np.all(s.phi <= 2 / 3)
        prev = s.phi


def test_logistic_freezing_one_step():
    g = Grid.uniform(-5, 5, 32)
    psi0 = 0.1 + 0.8 * np.exp(-g.axes[0] ** 2)
    s = _state(g, psi0, np.zeros(32))
    p = ModelParams(R0=1.5, delta=0.0)
    out = step(s, p, 1e-3)
    np.testing.assert_allclose(out.psi, psi0 + 1e-3 * 1.5 * psi0 * (1 - psi0), rtol=1e-15)


def test_full_ecm_first_step_fluxes_zero():
    g = Grid.uniform(-5, 5, 32)
    s = _state(g, 0.1 + 0.8 * np.exp(-g.axes[0] ** 2), np.ones(32))
    (f,) = compute_flux(s, ModelParams(delta=0.0))
    assert np.all(f == 0.0)


def test_pure_reaction_first_order_in_dt():
    g = Grid.uniform(-5, 5, 16)
    psi0 = 0.05 + 0.5 * np.exp(-g.axes[0] ** 2)
    exact = np.array([logistic(v, 1.0, 1.0) for v in psi0])
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
        tr = simulate(g, ModelParams(R0=1.0, delta=0.0), InitialData(psi0, np.zeros(16)),
                      SchemeConfig(t_end=1.0, max_dt=dt), stride=10**9)
        errs.append(g.lp_norm(tr.states[-1].psi - exact, 1))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 1.0) < 0.05)


def test_t_end_zero():
    g = Grid.uniform(0, 1, 8)
    init = InitialData(np.full(8, 0.2), np.full(8, 0.3))
    tr = simulate(g, ModelParams(), init, SchemeConfig(t_end=0.0))
    assert len(tr.states) == 1 and len(tr.record) == 1 and tr.steps == 0
    assert np.array_equal(tr.states[0].psi, init.psi0)


def test_output_times_hit_exactly():
    g = Grid.uniform(-2, 2, 16)
    init = InitialData(np.exp(-g.axes[0] ** 2), np.full(16, 0.3))
    tr = simulate(g, ModelParams(), init, SchemeConfig(t_end=0.3), output_times=(0.1, 0.2), stride=5)
    assert [s.time for s in tr.states] == [0.0, 0.1, 0.2, 0.3]
    assert tr.record.times[-1] == 0.3
    assert tr.formal is True
    tr = simulate(g, ModelParams(delta=0.1), init, SchemeConfig(t_end=0.1))
    assert tr.formal is False


def test_config_validation():
    with pytest.raises(ValueError):
        SchemeConfig(cfl_safety=1.5)
    with pytest.raises(ValueError):
        SchemeConfig(t_end=-1)
    with pytest.raises(ValueError):
        SchemeConfig(flux_form="central")
