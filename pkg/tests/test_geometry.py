"""Flows, trajectories and Jacobians."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from holodiff.geometry import (
    BOX,
    BumpModulatedField,
    ChartDomain,
    ConformalMetric,
    ConstantField,
    Curve,
    DegenerateJacobianError,
    LinearField,
    RotationField,
    TrajectoryEscapeError,
    ZeroField,
    flow_at,
    flow_jacobian_det,
    flow_trajectory,
    integrate,
)

A = np.array([[0.3, 0.8], [-0.5, -0.1]])
coord = st.floats(-0.9, 0.9)


def test_zero_field_fixes_points(torus):
    m = np.array([[0.2, 0.7], [0.9, 0.05]])
    assert np.array_equal(flow_at(ZeroField(), m, 1.0, torus), m)


def test_constant_field_translates_on_torus(torus):
    out = flow_at(ConstantField("e1", (1.0, 0.0)), [0.2, 0.5], 1.0, torus)
    np.testing.assert_allclose(out, [0.2, 0.5], atol=1e-12)
    out = flow_at(ConstantField("e", (0.25, 0.0)), [0.2, 0.5], 1.0, torus)
    np.testing.assert_allclose(out, [0.45, 0.5], atol=1e-12)


@given(x=coord, y=coord, t=st.floats(0.1, 1.5))
def test_linear_flow_matches_expm(plane, x, y, t):
    m = np.array([x, y])
    np.testing.assert_allclose(flow_at(LinearField("A", A), m, t, plane), expm(t * A) @ m, atol=1e-8)


def test_rotation_trajectory_stays_on_unit_circle(plane):
    curve = flow_trajectory(RotationField("rot"), [1.0, 0.0], 65, plane)
    assert np.max(np.abs(np.linalg.norm(curve.points, axis=1) - 1.0)) < 1e-8
    assert np.array_equal(curve.end, [1.0, 0.0])
    np.testing.assert_allclose(curve.start, [np.cos(1.0), np.sin(1.0)], atol=1e-10)


def test_trajectory_of_translation_is_a_segment(plane):
    curve = flow_trajectory(ConstantField("e1", (1.0, 0.0)), [0.0, 0.0], 9, plane)
    np.testing.assert_allclose(curve.points[:, 0], 1.0 - curve.t, atol=1e-12)
    assert np.all(curve.points[:, 1] == 0.0)
    flat = flow_trajectory(ZeroField(), [0.3, 0.3], 5, plane)
    assert np.all(flat.points == 0.3)


def test_trajectory_needs_two_samples(plane):
    with pytest.raises(ValueError):
        flow_trajectory(ZeroField(), [0.0, 0.0], 1, plane)


def test_jacobian_of_linear_flow_is_exp_trace(plane):
    det = flow_jacobian_det(LinearField("A", A), np.array([[0.1, 0.2], [-0.4, 0.3]]), plane)
    np.testing.assert_allclose(det, np.exp(np.trace(A)), atol=1e-6)


def test_jacobian_of_isometry_and_zero(plane):
    assert abs(flow_jacobian_det(RotationField("rot", rate=2.0), np.array([0.3, 0.1]), plane) - 1.0) < 1e-6
    assert flow_jacobian_det(ZeroField(), np.array([0.3, 0.1]), plane) == 1.0


def test_liouville_logdet_matches_trace(plane):
    _, ld = integrate(LinearField("A", A), np.array([[0.2, 0.1]]), 1.0, plane, with_logdet=True)
    np.testing.assert_allclose(ld, np.trace(A), atol=1e-10)


def test_negative_step_is_rejected(plane):
    with pytest.raises(ValueError):
        flow_at(ZeroField(), [0.0, 0.0], 1.0, plane, step=0.0)


@given(x=coord, y=coord, s=st.floats(0.0, 1.0), t=st.floats(0.0, 1.0))
def test_group_law(plane, x, y, s, t):
    X = LinearField("A", A)
    m = np.array([x, y])
    h = 1 / 256
    one = flow_at(X, m, s + t, plane, step=h)
    two = flow_at(X, flow_at(X, m, t, plane, step=h), s, plane, step=h)
    assert np.max(np.abs(one - two)) < 10 * h**4


@given(x=st.floats(0.0, 1.0), y=st.floats(0.0, 1.0))
def test_inverse_law_on_torus(torus, x, y):
    X = BumpModulatedField("b", RotationField("r", (0.5, 0.5), 2.0), (0.5, 0.5), 0.4)
    m = np.array([x, y])
    back = flow_at(X.scaled(-1.0), flow_at(X, m, 1.0, torus), 1.0, torus)
    assert np.max(np.abs(torus.displacement(m, back))) < 1e-9


def test_fourth_order_convergence(plane):
    X, m = LinearField("A", 2 * A), np.array([0.7, -0.4])
    exact = expm(2 * A) @ m
    errs = [np.max(np.abs(flow_at(X, m, 1.0, plane, step=h) - exact)) for h in (1 / 8, 1 / 16, 1 / 32)]
    assert errs[0] / errs[1] >= 8 and errs[1] / errs[2] >= 8


@given(x=coord, y=coord)
def test_jacobian_chain_rule(plane, x, y):
    G = RotationField("r", (0.2, 0.0), 0.7)
    lin = LinearField("B", [[0.2, 0.1], [0.0, -0.3]])
    m = np.array([x, y])
    # exp(G) then exp(lin), composed by hand on a callable map
    class Composite:
        def apply(self, p, domain, step, wrap=False):
            return integrate(lin, integrate(G, p, 1.0, domain, step)[0], 1.0, domain, step)[0]
    Gm = integrate(G, m, 1.0, plane)[0]
    lhs = flow_jacobian_det(Composite(), m, plane)
    rhs = flow_jacobian_det(lin, Gm, plane) * flow_jacobian_det(G, m, plane)
    assert abs(lhs - rhs) < 1e-4


def test_escape_from_box_raises():
    box = ChartDomain((0.0, 0.0), (1.0, 1.0), topology=BOX)
    with pytest.raises(TrajectoryEscapeError):
        flow_at(ConstantField("e1", (1.0, 0.0)), [0.5, 0.5], 1.0, box)


def test_compact_support_never_escapes():
    box = ChartDomain((0.0, 0.0), (1.0, 1.0), topology=BOX)
    X = BumpModulatedField("b", ConstantField("e", (3.0, 0.0)), (0.5, 0.5), 0.3)
    out = flow_at(X, np.random.default_rng(0).uniform(0, 1, (50, 2)), 1.0, box)
    assert np.all(box.contains(out, tol=1e-12))


def test_bad_offset_rejected(plane):
    with pytest.raises(ValueError):
        flow_jacobian_det(LinearField("A", A), np.array([0.1, 0.1]), plane, offset=0.0)


def test_orientation_reversing_map_is_degenerate(plane):
    class Flip:
        def apply(self, p, domain, step, wrap=False):
            return p * np.array([1.0, -1.0])
    with pytest.raises(DegenerateJacobianError):
        flow_jacobian_det(Flip(), np.array([0.1, 0.1]), plane)


def test_conformal_density_is_positive():
    metric = ConformalMetric(0.2, (1.0, 1.0))
    dom = ChartDomain((0.0, 0.0), (1.0, 1.0), metric=metric)
    x = np.random.default_rng(2).uniform(0, 1, (100, 2))
    assert np.all(dom.density(x) > 0)


def test_curve_parameters_must_increase():
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 0.5, 0.5]), np.zeros((3, 2)))


def test_domain_validation():
    with pytest.raises(ValueError):
        ChartDomain((0.0,), (1.0,))
    with pytest.raises(ValueError):
        ChartDomain((0.0, 0.0), (1.0, 0.0))
    with pytest.raises(ValueError):
        ChartDomain((0.0, 0.0), (1.0, 1.0), topology="sphere")
