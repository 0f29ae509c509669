import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entangletraj.states import PRESETS, make_state
from entangletraj.unraveling import (
    ZERO, CorrelationMatrix, OptimalPhaseUndefined, UnravelingError, cbar,
    optimal_unraveling, theta_from_state, theta_quantity, validate,
)

angles = st.floats(-math.pi, math.pi, allow_nan=False)


def test_fig1_optimal_phases():
    # theta = arg(conj(cbar) psi11^2): solid -> -pi/2, dashed -> +pi/2
    assert math.isclose(optimal_unraveling(PRESETS["fig1-solid"]).theta_opt, -math.pi / 2)
    assert math.isclose(optimal_unraveling(PRESETS["fig1-dashed"]).theta_opt, math.pi / 2)


def test_fig1_initial_concurrence():
    c0 = (1 + math.sqrt(5)) / 4
    for name in ("fig1-solid", "fig1-dashed"):
        assert math.isclose(abs(cbar(np.asarray(PRESETS[name]))), c0, rel_tol=1e-14)


def test_optimal_u_form():
    o = optimal_unraveling(PRESETS["fig1-solid"])
    assert o.u.u11 == 0 and o.u.u22 == 0
    assert math.isclose(abs(o.u.u12), 1.0)
    assert np.isclose(o.u.u12, -np.exp(1j * o.theta_opt))
    assert math.isclose(o.u.norm2(), 1.0)


def test_bell_state_has_no_optimal_phase():
    with pytest.raises(OptimalPhaseUndefined, match="optimal phase undefined"):
        optimal_unraveling(PRESETS["bell"])


def test_unphysical_u_rejected():
    with pytest.raises(UnravelingError, match="unphysical"):
        CorrelationMatrix(1.0, 0.5, 0.0)


def test_non_symmetric_matrix_rejected():
    with pytest.raises(UnravelingError, match="not symmetric"):
        validate(np.array([[0, 0.5], [0.2, 0]]))
    assert validate(np.zeros((2, 2))) == ZERO


@settings(max_examples=50, deadline=None)
@given(angles, angles)
def test_theta_ignores_global_phase(alpha, beta):
    rng = np.random.default_rng(int(1e6 * (alpha + 4)))
    a = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi = make_state(a)
    shifted = make_state(np.exp(1j * alpha) * np.asarray(psi))
    # Theta = conj(cbar) psi11^2 is invariant under a global phase
    assert np.isclose(theta_quantity(np.asarray(psi)), theta_quantity(np.asarray(shifted)))
    d = theta_from_state(psi) - theta_from_state(shifted)
    assert abs((d + math.pi) % (2 * math.pi) - math.pi) < 1e-9


@settings(max_examples=50, deadline=None)
@given(angles)
def test_off_diagonal_roundtrip(phase):
    u = CorrelationMatrix.off_diagonal(phase)
    again = CorrelationMatrix.from_reals(u.to_reals())
    assert again == u
    assert np.isclose(np.angle(-u.u12), phase) or math.isclose(abs(phase), math.pi)


def test_theta_principal_range():
    th = theta_from_state(make_state([1, 0, 0, -1]))  # cbar = 2/2 real, psi11^2 > 0
    assert -math.pi < th <= math.pi
