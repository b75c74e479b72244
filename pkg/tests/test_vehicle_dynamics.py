import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import REFERENCE_VEHICLE, fine_reference, passive_matrix
from suspension_ddpg.errors import NumericalDivergence
from suspension_ddpg.vehicle_dynamics import (
    FLAT_ROAD,
    PASSIVE,
    ActiveAction,
    ForceMode,
    QuarterCarParams,
    RoadInput,
    active_force,
    derivative,
    outputs,
    simulate,
    step_rk4,
    system_matrix,
    vehicle_state,
)

AUG = QuarterCarParams()
LIT = QuarterCarParams(force_mode=ForceMode.PAPER_LITERAL)


def flat(t):
    return FLAT_ROAD


def passive(t, y):
    return PASSIVE


def test_defaults_match_table():
    for name, value in REFERENCE_VEHICLE.items():
        assert getattr(AUG, name) == value
    assert AUG.force_mode is ForceMode.AUGMENTED


@pytest.mark.parametrize("field,value", [("m_b", 0.0), ("m_w", -1.0), ("k_b", -1.0), ("c_w", -0.5)])
def test_params_reject_invalid(field, value):
    with pytest.raises(ValueError):
        QuarterCarParams(**{field: value})


# -- active force -----------------------------------------------------------------

@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_augmented_zero_action_is_zero(state):
    assert active_force(state, PASSIVE, AUG) == 0.0


def test_paper_literal_zero_action():
    assert active_force(vehicle_state(x_b=0.01), PASSIVE, LIT) == pytest.approx(150.0, abs=1e-12)


def test_augmented_stiffness_sign():
    s = vehicle_state(x_b=0.03, x_w=0.01)
    assert active_force(s, ActiveAction(1000.0, 0.0), AUG) == pytest.approx(-20.0, abs=1e-12)


def test_augmented_damping_term():
    s = vehicle_state(v_b=0.4, v_w=0.1)
    assert active_force(s, ActiveAction(0.0, 200.0), AUG) == pytest.approx(-60.0, abs=1e-12)


# -- derivative -----------------------------------------------------------------

def test_derivative_equilibrium():
    assert np.array_equal(derivative(vehicle_state(), FLAT_ROAD, 0.0, AUG), np.zeros(4))


def test_derivative_road_step():
    d = derivative(vehicle_state(), RoadInput(0.01, 0.0), 0.0, AUG)
    assert d[1] == 0.0
    assert d[3] == pytest.approx(150000 * 0.01 / 45, rel=1e-12)


def test_derivative_body_offset():
    d = derivative(vehicle_state(x_b=0.01), FLAT_ROAD, 0.0, AUG)
    assert d[1] == pytest.approx(-15000 * 0.01 / 450, rel=1e-12)
    assert d[3] == pytest.approx(15000 * 0.01 / 45, rel=1e-12)


def test_road_enters_with_positive_tyre_stiffness():
    # the printed B matrix carries the opposite sign; Newton's law wins
    d = derivative(vehicle_state(), RoadInput(0.02, 0.0), 0.0, AUG)
    assert d[3] > 0


def test_nonzero_tyre_damping():
    p = QuarterCarParams(c_w=100.0)
    d = derivative(vehicle_state(), RoadInput(0.0, 0.5), 0.0, p)
    assert d[3] == pytest.approx(100 * 0.5 / 45, rel=1e-12)


def test_matrix_matches_oracle():
    a = system_matrix(AUG)
    assert np.allclose(a, passive_matrix(**REFERENCE_VEHICLE), rtol=1e-14, atol=0)


@settings(max_examples=50)
@given(
    st.lists(st.floats(-1, 1), min_size=4, max_size=4),
    st.lists(st.floats(-1, 1), min_size=4, max_size=4),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_derivative_is_linear(s1, s2, alpha, beta):
    s1, s2 = np.array(s1), np.array(s2)
    lhs = derivative(alpha * s1 + beta * s2, FLAT_ROAD, 0.0, AUG)
    rhs = alpha * derivative(s1, FLAT_ROAD, 0.0, AUG) + beta * derivative(s2, FLAT_ROAD, 0.0, AUG)
    # relative to |A| |x|, the size of the terms being summed
    scale = np.abs(passive_matrix(**REFERENCE_VEHICLE)) @ (np.abs(alpha * s1) + np.abs(beta * s2))
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * scale)


def test_passive_system_is_stable():
    a = passive_matrix(**REFERENCE_VEHICLE)
    roots = np.roots(np.poly(a))  # characteristic-polynomial root oracle
    assert np.all(roots.real <= 0)
    eig = np.linalg.eigvals(system_matrix(AUG))
    assert np.allclose(np.sort_complex(eig), np.sort_complex(roots), rtol=1e-8)


# -- outputs -----------------------------------------------------------------------

def test_outputs_zero():
    assert outputs(vehicle_state(), FLAT_ROAD, 0.0, AUG) == (0.0, 0.0)


def test_outputs_rattle_space():
    assert outputs(vehicle_state(x_b=0.03, x_w=0.01), FLAT_ROAD, 0.0, AUG).rattle_space == pytest.approx(0.02)


def test_outputs_accel_matches_derivative():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        s = rng.normal(size=4) * [0.05, 0.5, 0.01, 1.0]
        road = RoadInput(*rng.normal(size=2) * 0.01)
        f = rng.normal() * 100
        assert outputs(s, road, f, AUG).body_accel == derivative(s, road, f, AUG)[1]


# -- integration -------------------------------------------------------------------

def test_zero_state_is_fixed_point():
    states, _ = simulate(vehicle_state(), flat, passive, AUG, 1e-3, 500)
    assert not np.any(states)


def test_static_equilibrium_on_raised_road():
    h = 0.05
    states, _ = simulate(vehicle_state(), lambda t: RoadInput(h, 0.0), passive, AUG, 1e-3, 30000)
    assert abs(states[-1, 0] - h) < 1e-6
    assert abs(states[-1, 2] - h) < 1e-6


def free_response(dt, seconds=1.0):
    n = int(round(seconds / dt))
    states, _ = simulate(vehicle_state(x_b=0.05), flat, passive, AUG, dt, n)
    return states


def test_free_response_matches_fine_reference():
    a = passive_matrix(**REFERENCE_VEHICLE)
    ref = fine_reference(a, np.array([0.05, 0, 0, 0]), 1e-5, 1e-3, 1000)
    err = np.max(np.abs(free_response(1e-3)[:, 0] - ref[:, 0]))
    assert err < 1e-6


def test_fine_reference_agrees_with_matrix_exponential():
    from scipy.linalg import expm

    a = passive_matrix(**REFERENCE_VEHICLE)
    y0 = np.array([0.05, 0, 0, 0])
    ref = fine_reference(a, y0, 1e-5, 1e-3, 1000)
    exact = expm(a * 1.0) @ y0
    assert np.max(np.abs(ref[-1] - exact)) < 1e-12


def test_rk4_error_ratio_on_halving():
    a = passive_matrix(**REFERENCE_VEHICLE)
    ref = fine_reference(a, np.array([0.05, 0, 0, 0]), 1e-5, 2e-3, 500)
    coarse = free_response(4e-3)
    fine = free_response(2e-3)
    e_coarse = np.max(np.abs(coarse[:, 0] - ref[::2, 0]))
    e_fine = np.max(np.abs(fine[:, 0] - ref[:, 0]))
    assert e_coarse / e_fine >= 12


def test_single_step_matches_amplification_matrix():
    from oracles import rk4_amplification

    a = passive_matrix(**REFERENCE_VEHICLE)
    y = np.array([0.01, -0.2, 0.003, 0.4])
    new = step_rk4(y, flat, PASSIVE, AUG, 0.0, 1e-3)
    assert np.allclose(new, rk4_amplification(a, 1e-3) @ y, rtol=1e-13, atol=1e-16)


def test_road_sampled_at_stage_times():
    seen = []

    def road(t):
        seen.append(t)
        return FLAT_ROAD

    step_rk4(vehicle_state(), road, PASSIVE, AUG, 0.5, 0.01)
    assert sorted(set(seen)) == pytest.approx([0.5, 0.505, 0.51])


def test_zero_action_augmented_equals_passive_bitwise():
    road = lambda t: RoadInput(0.02 * np.sin(7 * t), 0.14 * np.cos(7 * t))
    s0 = vehicle_state(0.01, 0.0, 0.0, 0.1)
    a, _ = simulate(s0, road, passive, AUG, 1e-3, 2000)
    b, _ = simulate(s0, road, lambda t, y: (0.0, 0.0), AUG, 1e-3, 2000)
    assert np.array_equal(a, b)


def test_paper_literal_differs_from_augmented():
    a, _ = simulate(vehicle_state(x_b=0.01), flat, passive, LIT, 1e-3, 100)
    b, _ = simulate(vehicle_state(x_b=0.01), flat, passive, AUG, 1e-3, 100)
    assert not np.allclose(a, b)


def test_divergence_raises():
    # absolute-coordinate law with its positive-feedback sign grows without bound
    with pytest.raises(NumericalDivergence) as info:
        simulate(vehicle_state(x_b=0.01), flat, lambda t, y: (5000.0, 600.0), LIT, 1e-3, 200000)
    assert info.value.step is not None


def test_non_finite_state_raises():
    with pytest.raises(NumericalDivergence):
        step_rk4(vehicle_state(x_b=np.nan), flat, PASSIVE, AUG, 0.0, 1e-3)


def test_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step_rk4(vehicle_state(), flat, PASSIVE, AUG, 0.0, 0.0)


def test_simulation_is_deterministic():
    a = free_response(1e-3)
    b = free_response(1e-3)
    assert np.array_equal(a, b)
