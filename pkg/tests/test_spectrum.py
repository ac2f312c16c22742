"""Commutants, irreducibility verdicts and the norm-gap probe."""
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import unitary_group

from holodiff.connection import (
    SIGMA,
    ConstantCurvatureAbelian,
    DiagonalAbelian,
    SU2TwoAxis,
    TrivialConnection,
    holonomy,
    op_norm,
    rectangle_loop,
)
from holodiff.gauge import gauge_transform_connection
from holodiff.representation import GridSpec
from holodiff.spectrum import (
    NormGapProbeConfig,
    ResolutionWarning,
    SupportLeakageWarning,
    commutant_basis,
    commutant_dimension,
    counting_norm,
    holonomy_group_sample,
    irreducibility_verdict,
    norm_gap_probe,
    splitting_reconstruction_residual,
)

ROT1 = np.array([[np.cos(1.0), -np.sin(1.0)], [np.sin(1.0), np.cos(1.0)]])
SQUEEZE = np.diag([2.0, 0.5])
BASE = (0.5, 0.5)


def test_commutant_dimensions():
    assert commutant_dimension([np.eye(2)]) == 4
    a = 0.7
    assert commutant_dimension([np.diag([np.exp(1j * a), np.exp(-1j * a)])]) == 2
    assert commutant_dimension([expm(1j * SIGMA[0] / 2), expm(1j * SIGMA[1] / 2)]) == 1
    with pytest.raises(ValueError):
        commutant_dimension([])


def test_commutant_basis_commutes():
    U = [np.diag([1j, -1.0])]
    for M in commutant_basis(U):
        assert np.max(np.abs(M @ U[0] - U[0] @ M)) < 1e-12


@given(seed=st.integers(0, 10_000))
def test_commutant_is_conjugation_invariant(seed):
    V = unitary_group.rvs(2, random_state=seed)
    for mats in ([np.eye(2)], [np.diag([1j, -1j])], [expm(1j * SIGMA[0] / 2), expm(1j * SIGMA[1] / 2)]):
        assert commutant_dimension([V @ U @ V.conj().T for U in mats]) == commutant_dimension(mats)


def test_trivial_sample_is_identity(torus):
    sample = holonomy_group_sample(TrivialConnection(torus, 2), BASE)
    assert all(np.allclose(U, np.eye(2), atol=1e-14) for U in sample.matrices)


def test_abelian_sample_is_diagonal(torus):
    nabla = DiagonalAbelian(ConstantCurvatureAbelian(torus, 1.3, BASE), ConstantCurvatureAbelian(torus, -0.4, BASE))
    sample = holonomy_group_sample(nabla, BASE)
    for U, loop in zip(sample.matrices, sample.loops):
        assert abs(U[0, 1]) + abs(U[1, 0]) < 1e-12
        assert np.allclose(loop.start, BASE) and loop.is_closed()


def group_commutator(U, V):
    return op_norm(U @ V @ U.conj().T @ V.conj().T - np.eye(2))


def test_two_axis_holonomies_do_not_commute(registry, torus):
    nabla = registry.connection("su2")
    U = holonomy(nabla, rectangle_loop(BASE, 0.8, 0.6), 2).matrix
    V = holonomy(nabla, rectangle_loop(BASE, -0.6, 0.8), 2).matrix
    assert group_commutator(U, V) > 0.1
    # a stronger field shows it inside the random loop sample too
    sample = holonomy_group_sample(SU2TwoAxis(torus, 2.0, 2.0), BASE)
    assert max(group_commutator(U, V) for U in sample.matrices for V in sample.matrices) > 0.1


@pytest.mark.parametrize(
    "conn,expected",
    [("su2", "irreducible"), ("psu2", "irreducible"), ("trivial", "reducible-with-splitting"), ("diag", "reducible-with-splitting")],
)
def test_verdicts(registry, conn, expected):
    assert irreducibility_verdict(registry.connection(conn), BASE).verdict == expected


def test_split_recovers_diagonal_forms(registry):
    nabla = registry.connection("diag")
    res = irreducibility_verdict(nabla, BASE)
    x = np.random.default_rng(0).uniform(0, 1, (50, 2))
    diag = np.diagonal(nabla.components(x), axis1=-2, axis2=-1)  # (P, d, 2)
    got = np.stack([s.components(x)[..., 0, 0] for s in res.split], axis=-1)
    err = min(np.max(np.abs(got - diag)), np.max(np.abs(got[..., ::-1] - diag)))
    assert err < 1e-6


def test_splitting_reconstruction(registry):
    grid = GridSpec.square(registry.domain, 32)
    words = [registry.word([["R", 1]]), registry.word([["S", -1]])]
    for conn in ("trivial", "diag"):
        nabla = registry.connection(conn)
        res = irreducibility_verdict(nabla, BASE)
        assert splitting_reconstruction_residual(nabla, res, words, grid) < 1e-4


def test_verdict_is_gauge_invariant(registry):
    for g, c in (("grot", "psu2"), ("gphase", "diag")):
        nabla = registry.connection(c)
        gauged = gauge_transform_connection(registry.gauge(g), nabla)
        assert irreducibility_verdict(gauged, BASE).verdict == irreducibility_verdict(nabla, BASE).verdict


def test_identity_probe():
    out = norm_gap_probe(NormGapProbeConfig([1.0], [np.eye(2)], resolution=32))
    assert out["counting_norm"] == 1.0
    assert abs(out["l2_estimate"] - 1.0) < 1e-6


@given(coef=st.lists(st.floats(0.01, 10.0), min_size=1, max_size=6))
def test_counting_norm_is_exact_sum(coef):
    cfg = NormGapProbeConfig(coef, [np.eye(2)] * len(coef))
    assert counting_norm(cfg) == math.fsum(coef)


def test_squeeze_rotation_pair():
    for N in (64, 128):
        cfg = NormGapProbeConfig([1.0, 1.0], [SQUEEZE, ROT1 @ SQUEEZE], resolution=N)
        out = norm_gap_probe(cfg)
        assert out["counting_norm"] == 2.0
        assert out["l2_estimate"] <= 2.0 + 1e-3


def test_leakage_warning():
    cfg = NormGapProbeConfig([1.0], [np.diag([4.0, 0.25])], resolution=128)
    with pytest.warns(SupportLeakageWarning):
        norm_gap_probe(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        norm_gap_probe(NormGapProbeConfig([1.0], [np.eye(2)], resolution=32))


def test_coarse_grid_warns():
    cfg = NormGapProbeConfig([1.0, 1.0], [SQUEEZE, ROT1 @ SQUEEZE], resolution=32, support_radius=0.45)
    with pytest.warns(ResolutionWarning):
        out = norm_gap_probe(cfg)
    assert out["support_cells"] < 7


def test_probe_config_validation():
    with pytest.raises(ValueError):
        NormGapProbeConfig([1.0, 2.0], [np.eye(2)])
    with pytest.raises(ValueError):
        NormGapProbeConfig([-1.0], [np.eye(2)])
    with pytest.raises(ValueError):
        NormGapProbeConfig([1.0], [np.diag([1.0, -1.0])])
    with pytest.raises(ValueError):
        NormGapProbeConfig([1.0], [np.eye(2)], support_radius=1.5)
