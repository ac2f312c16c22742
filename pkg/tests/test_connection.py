"""Holonomy along sampled curves."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from holodiff.connection import (
    SIGMA,
    ConstantConnection,
    ConstantCurvatureAbelian,
    DiagonalAbelian,
    EndpointMismatchError,
    OpenCurveError,
    PeriodicAbelian,
    PeriodicSU2,
    SU2TwoAxis,
    TrivialConnection,
    expm_antihermitian,
    holonomy,
    holonomy_compose_check,
    loop_phase_stokes_check,
    op_norm,
    path_product,
    polar_unitary,
    rectangle_loop,
    unitarity_defect,
)
from holodiff.geometry import BOX, ChartDomain, Curve, flow_trajectory

BOXDOM = ChartDomain((-1.0, -1.0), (1.0, 1.0), topology=BOX)


def segment(a, b, n=33, id="seg"):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return Curve.from_function(lambda t: a + t[:, None] * (b - a), n, id=id)


def wiggle(n=129):
    return Curve.from_function(
        lambda t: np.stack([0.2 + 0.5 * t + 0.05 * np.sin(6 * t), 0.3 + 0.3 * t**2], axis=-1), n
    )


def catalogue_connections(dom):
    return [
        SU2TwoAxis(dom, 0.7, -1.1),
        PeriodicSU2(dom, 0.9, 0.6, 0.3),
        PeriodicAbelian(dom, 0.8, -0.5),
        DiagonalAbelian(PeriodicAbelian(dom, 0.8, -0.5), ConstantCurvatureAbelian(dom, 1.3)),
    ]


@given(seed=st.integers(0, 10_000))
def test_expm_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    for n in (1, 2, 3):
        H = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        M = 0.5 * (H - H.conj().T)
        np.testing.assert_allclose(expm_antihermitian(M), expm(M), atol=1e-12)


def test_polar_unitary_is_unitary():
    U = polar_unitary(expm(np.array([[0.3j, 0.2], [-0.2, 0.0]])) * 1.001)
    assert unitarity_defect(U) < 1e-14


def test_zero_connection_gives_identity(torus):
    H = holonomy(TrivialConnection(torus, 2), wiggle()).matrix
    assert np.array_equal(H, np.eye(2))


@pytest.mark.parametrize("c,dx", [(0.7, 0.5), (-2.0, 0.3), (5.0, 0.9)])
def test_constant_abelian_closed_form(torus, c, dx):
    # A = i c dx; transport solves U' = -A U
    nabla = ConstantConnection(torus, [[[1j * c]], [[0.0]]])
    H = holonomy(nabla, segment((0.05, 0.4), (0.05 + dx, 0.4))).matrix
    assert abs(H[0, 0] - np.exp(-1j * c * dx)) < 1e-8


def test_constant_su2_closed_form(torus):
    c, dx = 1.7, 0.6
    nabla = ConstantConnection(torus, [1j * c * SIGMA[2] / 2, np.zeros((2, 2))])
    H = holonomy(nabla, segment((0.1, 0.1), (0.1 + dx, 0.1))).matrix
    assert op_norm(H - expm(-1j * c * dx * SIGMA[2] / 2)) < 1e-8


def test_compose_trivial_and_collinear(torus):
    g2, g1 = segment((0.1, 0.2), (0.4, 0.2)), segment((0.4, 0.2), (0.7, 0.2))
    assert holonomy_compose_check(TrivialConnection(torus, 1), g1, g2) < 1e-12
    nabla = ConstantConnection(torus, [[[0.9j]], [[-0.4j]]])
    assert holonomy_compose_check(nabla, g1, g2) < 1e-8


def test_compose_flow_trajectories(torus, registry):
    X = registry.field("R")
    m = np.array([0.5, 0.2])
    g2 = flow_trajectory(X, m, 65, torus).reversed()  # m -> exp(X)m
    g1 = segment(g2.end, g2.end + np.array([0.1, 0.05]))
    for nabla in (registry.connection("su2"), registry.connection("psu2")):
        assert holonomy_compose_check(nabla, g1, g2) < 1e-6


def test_compose_needs_matching_endpoints(torus):
    with pytest.raises(EndpointMismatchError):
        holonomy_compose_check(TrivialConnection(torus), segment((0, 0), (0.1, 0)), segment((0.3, 0.3), (0.4, 0.4)))


@pytest.mark.parametrize("L", [0.2, 0.5, 0.9])
def test_stokes_square(L):
    B = 1.3
    nabla = ConstantCurvatureAbelian(BOXDOM, B)
    loop = rectangle_loop((-L / 2, -L / 2), L, L)
    phase, oracle = loop_phase_stokes_check(nabla, loop)
    expect = np.angle(np.exp(-1j * B * L * L))
    assert abs(phase - expect) < 1e-6 and abs(oracle - expect) < 1e-6
    back, _ = loop_phase_stokes_check(nabla, loop.reversed())
    assert abs(back + phase) < 1e-10


def test_stokes_trivial_and_open(torus):
    assert loop_phase_stokes_check(TrivialConnection(torus, 1), rectangle_loop((0.1, 0.1), 0.3, 0.3)) == (0.0, 0.0)
    with pytest.raises(OpenCurveError):
        loop_phase_stokes_check(TrivialConnection(torus, 1), segment((0, 0), (0.2, 0)))


def test_unitarity_and_inversion(torus):
    gamma = wiggle()
    for nabla in catalogue_connections(torus):
        H = holonomy(nabla, gamma).matrix
        assert unitarity_defect(H) < 1e-10
        R = holonomy(nabla, gamma.reversed()).matrix
        assert op_norm(R @ H - np.eye(nabla.fiber_dim)) < 1e-8


def _path(t):
    return np.stack([0.2 + 0.5 * t + 0.05 * np.sin(6 * t), 0.3 + 0.3 * t**2], axis=-1)


@given(a=st.floats(-0.9, 0.9), k=st.integers(1, 3))
def test_reparametrization_invariance(torus, a, k):
    # phi(s) = s + a sin(2 pi k s) / (2 pi k) is a smooth monotone time change
    s = np.linspace(0.0, 1.0, 1025)
    phi = s + a * np.sin(2 * np.pi * k * s) / (2 * np.pi * k)
    nabla = SU2TwoAxis(torus, 0.7, -1.1)
    H = holonomy(nabla, Curve(s, _path(s)), refine=4).matrix
    K = holonomy(nabla, Curve(s, _path(phi)), refine=4).matrix
    assert op_norm(H - K) < 1e-7


def test_second_order_refinement(torus):
    nabla = PeriodicSU2(torus, 0.9, 0.6, 0.3)
    pts = wiggle(17).points
    ref = path_product(nabla, pts, refine=64)
    errs = [op_norm(path_product(nabla, pts, r) - ref) for r in (1, 2, 4)]
    assert errs[0] / errs[1] >= 3.8 and errs[1] / errs[2] >= 3.8


def test_pauli_fast_path_matches_matrices(torus):
    x = np.random.default_rng(3).uniform(0, 1, (40, 2))
    v = np.random.default_rng(4).normal(size=(40, 2))
    for nabla in catalogue_connections(torus):
        full = np.einsum("...mij,...m->...ij", nabla.components(x), v)
        np.testing.assert_allclose(nabla.contract(x, v), full, atol=1e-14)


def test_catalogue_connections_are_unitary(torus):
    x = np.random.default_rng(5).uniform(0, 1, (30, 2))
    for nabla in catalogue_connections(torus):
        assert nabla.check_invariants(x)
