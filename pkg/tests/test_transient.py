import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsrestore.transient import (
    F0,
    OMEGA0,
    EquilibriumError,
    FrequencyTrace,
    InverterParams,
    InverterState,
    SimOptions,
    delta_f_meas,
    equilibrium_state,
    frequency_nadir,
    params_from_dict,
    params_to_dict,
    rk4_integrate,
    simulate_load_step,
    state_derivative,
)

P = InverterParams()


def derivative_oracle(s: InverterState, p: InverterParams, p_l, q_l):
    """The seven right-hand sides written out longhand."""
    c, sn = math.cos(s.theta), math.sin(s.theta)
    k = 1.0 if p.dq_convention == "printed" else -1.0
    return np.array([
        p.omega_c * (s.v * c * s.i_d + s.v * sn * s.i_q - s.p),
        p.omega_c * (s.v * sn * s.i_d - s.v * c * s.i_q - s.q),
        s.omega - p.omega_0,
        p.omega_c * (p.omega_set - s.omega) + p.gain * p.d_p * (s.p - p_l),
        p.omega_c * (p.v_set - s.v) + p.gain * p.d_q * (s.q - q_l),
        (s.v * c - p.v_bus - p.r * s.i_d) / p.l + k * p.omega_0 * s.i_q,
        (s.v * sn - p.r * s.i_q) / p.l - k * p.omega_0 * s.i_d,
    ])


state_st = st.builds(
    InverterState,
    p=st.floats(-1, 1), q=st.floats(-1, 1), theta=st.floats(-1, 1),
    omega=st.floats(0.95 * OMEGA0, 1.05 * OMEGA0), v=st.floats(0.9, 1.1),
    i_d=st.floats(-1, 1), i_q=st.floats(-1, 1),
)


@given(state_st, st.floats(0, 1), st.floats(0, 1), st.sampled_from(["stable", "printed"]))
def test_derivative_matches_oracle(s, p_l, q_l, conv):
    p = replace(P, dq_convention=conv)
    got = state_derivative(s, p, p_l, q_l).as_array()
    assert np.allclose(got, derivative_oracle(s, p, p_l, q_l), rtol=1e-12, atol=1e-9)


@given(state_st)
def test_frequency_rate_zero_at_setpoint_and_matched_power(s):
    s = replace(s, omega=P.omega_set)
    d = state_derivative(s, P, s.p, 0.0)
    assert d.omega == pytest.approx(0.0, abs=1e-9)


def test_current_rates_zero_with_no_drive():
    p = replace(P, r=0.0)
    s = InverterState(theta=0.0, v=p.v_bus, i_d=0.0, i_q=0.0)
    d = state_derivative(s, p, 0.2, 0.1)
    assert d.i_d == 0.0 and d.i_q == 0.0


def test_equilibrium_zero_load():
    s = equilibrium_state(P, 0.0, 0.0)
    assert s.p == pytest.approx(0.0, abs=1e-12) and s.q == pytest.approx(0.0, abs=1e-12)
    assert s.omega == pytest.approx(P.omega_0) and s.v == pytest.approx(P.v_set)
    assert abs(s.i_d) < 1e-12 and abs(s.i_q) < 1e-12 and abs(s.theta) < 1e-12


@pytest.mark.parametrize("p_l, q_l", [(0.3, 0.0), (0.3, 0.1), (0.6, 0.2), (0.05, 0.0)])
def test_equilibrium_residual(p_l, q_l):
    s = equilibrium_state(P, p_l, q_l)
    assert np.max(np.abs(derivative_oracle(s, P, p_l, q_l))) <= 1e-9
    assert s.p == pytest.approx(p_l, abs=1e-9)


def test_equilibrium_needs_matching_setpoint():
    with pytest.raises(ValueError):
        equilibrium_state(replace(P, omega_set=P.omega_0 + 1.0), 0.1, 0.0)


def test_equilibrium_failure_is_explicit():
    with pytest.raises(EquilibriumError):
        equilibrium_state(P, 50.0, 0.0)


def test_params_validation_and_dict_roundtrip():
    with pytest.raises(ValueError):
        InverterParams(omega_c=0.0)
    with pytest.raises(ValueError):
        InverterParams(l=0.0)
    with pytest.raises(ValueError):
        InverterParams(r=-1.0)
    assert params_from_dict(params_to_dict(P)) == P
    with pytest.raises(ValueError):
        params_from_dict({"bogus": 1})


def test_sim_options_validation():
    with pytest.raises(ValueError):
        SimOptions(dt=0.0).validate(P)
    with pytest.raises(ValueError):
        SimOptions(duration=0.5).validate(P)


def test_zero_step_is_flat():
    s0 = equilibrium_state(P, 0.0, 0.0)
    tr = simulate_load_step(s0, P, 0.0, 0.0)
    assert np.max(np.abs(tr.f - F0)) <= 1e-12
    assert tr.f_nadir == pytest.approx(F0, abs=1e-12) and tr.delta_f_meas <= 1e-12


def test_fixed_point_holds_for_whole_run():
    s0 = equilibrium_state(P, 0.3, 0.05)
    xs, stable = rk4_integrate(s0.as_array(), P, 0.3, 0.05, 1e-4, 30_000, 0.1)
    assert stable
    assert np.max(np.abs(xs - s0.as_array())) <= 1e-9


def test_grid_and_trace_invariants():
    tr = simulate_load_step(equilibrium_state(P, 0.0, 0.0), P, 0.2, 0.0)
    assert np.all(np.diff(tr.t) > 0)
    assert tr.f_nadir == tr.f.min()
    assert tr.delta_f_meas == pytest.approx(F0 - tr.f_nadir)
    assert tr.stable


def test_convergence_order():
    s0 = equilibrium_state(P, 0.0, 0.0).as_array()
    ref, _ = rk4_integrate(s0, P, 0.3, 0.05, 1e-5, 20_000, 0.1)
    errs = []
    for dt in (4e-4, 2e-4, 1e-4):
        n = int(round(0.2 / dt))
        xs, _ = rk4_integrate(s0, P, 0.3, 0.05, dt, n, 0.1)
        errs.append(np.max(np.abs(xs - ref[:: int(round(dt / 1e-5))][: len(xs)])))
    orders = [math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])]
    # halving dt should cut the error about 16 times
    assert min(orders) >= 3.7
    assert 10 < errs[0] / errs[1] < 24


def test_recovers_nominal_frequency():
    for step in (0.1, 0.3, 0.5):
        tr = simulate_load_step(equilibrium_state(P, 0.0, 0.0), P, step, 0.0)
        assert abs(tr.f[-1] - F0) <= 1e-3


def test_nadir_non_increasing_in_step():
    s0 = equilibrium_state(P, 0.0, 0.0)
    nadirs = [simulate_load_step(s0, P, x, 0.0).f_nadir for x in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)]
    assert all(b <= a for a, b in zip(nadirs, nadirs[1:]))


def test_larger_droop_lowers_nadir():
    s0 = equilibrium_state(P, 0.0, 0.0)
    n1, n2, n3 = (simulate_load_step(s0, replace(P, d_p=d), 0.3, 0.0).f_nadir for d in (10.0, 20.0, 30.0))
    assert n3 < n2 < n1


def test_runaway_flagged_unstable():
    p = replace(P, d_p=500.0)
    tr = simulate_load_step(equilibrium_state(p, 0.0, 0.0), p, 0.3, 0.0)
    assert not tr.stable
    assert np.all(np.isfinite(tr.f))


def test_frequency_nadir_rules():
    tr = FrequencyTrace(np.arange(4) * 0.1, np.array([60.0, 59.8, 59.7, 59.9]), 0, 0, 0, True)
    assert frequency_nadir(tr) == (59.7, pytest.approx(0.2))
    flat = FrequencyTrace(np.arange(3) * 0.1, np.full(3, 60.0), 0, 0, 0, True)
    assert frequency_nadir(flat) == (60.0, 0.0)
    tie = FrequencyTrace(np.arange(4) * 0.1, np.array([60.0, 59.5, 59.9, 59.5]), 0, 0, 0, True)
    assert frequency_nadir(tie)[1] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        frequency_nadir(FrequencyTrace(np.array([]), np.array([]), 0, 0, 0, True))


def test_delta_f_meas_rules():
    def tr(fmin):
        return FrequencyTrace(np.array([0.0, 0.1]), np.array([max(60.0, fmin), fmin]), 0, 0, 0, True)
    assert delta_f_meas(tr(59.7044), 60.0) == pytest.approx(0.2956)
    assert delta_f_meas(tr(60.0), 60.0) == 0.0
    assert delta_f_meas(tr(60.2), 60.0) == 0.0


def test_step_refinement_agrees():
    s0 = equilibrium_state(P, 0.0, 0.0)
    a = simulate_load_step(s0, P, 0.3, 0.0, SimOptions(dt=1e-4)).f_nadir
    b = simulate_load_step(s0, P, 0.3, 0.0, SimOptions(dt=5e-5)).f_nadir
    assert abs(a - b) < 1e-4


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 0.4), st.floats(0.01, 0.3))
def test_step_from_loaded_state(p0, step):
    s0 = equilibrium_state(P, p0, 0.0)
    tr = simulate_load_step(s0, P, p0 + step, 0.0, SimOptions(duration=1.0))
    assert tr.stable and tr.f_nadir < F0
