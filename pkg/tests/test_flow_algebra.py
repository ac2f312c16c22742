"""Flow words, the cross product and the reparametrization ideal."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holodiff.connection import SU2TwoAxis, TrivialConnection
from holodiff.flow_algebra import (
    AlgebraElement,
    BallSupport,
    Bump,
    ConstantFunction,
    Everywhere,
    FlowWord,
    FourierMode,
    Gaussian,
    Scaled,
    algebra_adjoint,
    algebra_multiply,
    ideal_residual,
    is_local_reparametrization,
    word_action_on_function,
    word_apply,
    word_inverse,
    word_multiply,
)
from holodiff.geometry import BumpModulatedField, ConstantField, RotationField, flow_at, grid_points
from holodiff.representation import GridSpec

X = ConstantField("X", (0.1, 0.0))
Y = ConstantField("Y", (0.0, 0.2))
Z = ConstantField("Z", (0.05, 0.05))
SWIRL = BumpModulatedField("swirl", RotationField("r", (0.5, 0.5), 1.5), (0.5, 0.5), 0.35)
LETTERS = [(X, 1), (X, -1), (Y, 1), (Y, -1), (SWIRL, 1), (SWIRL, -1)]
words = st.lists(st.sampled_from(LETTERS), max_size=5).map(FlowWord)
short_words = st.lists(st.sampled_from(LETTERS), max_size=2).map(FlowWord)
FUNCS = [
    Bump("f", (0.5, 0.5), 0.3),
    Gaussian("g", (0.4, 0.6), 0.1),
    FourierMode("q", (1, 0)),
    ConstantFunction(),
]


def sample_points(n=64):
    return grid_points((0.0, 0.0), (1.0, 1.0), (n // 8, 8)).reshape(-1, 2) + 0.01


@st.composite
def elements(draw, max_terms=3):
    terms = []
    for _ in range(draw(st.integers(1, max_terms))):
        f = draw(st.sampled_from(FUNCS))
        c = complex(draw(st.floats(-2, 2)), draw(st.floats(-2, 2)))
        terms.append((Scaled(f, c), draw(short_words)))
    return AlgebraElement(terms)


def test_identity_and_cancellation():
    w = FlowWord([(X, 1), (Y, -1)])
    assert word_multiply(w, FlowWord()) == w
    assert word_multiply(FlowWord.of(X), FlowWord.of(X, -1)) == FlowWord()
    left = FlowWord([(X, 1), (Y, 1)])
    right = FlowWord([(Y, -1), (Z, 1)])
    assert word_multiply(left, right) == FlowWord([(X, 1), (Z, 1)])


@given(a=words, b=words, c=words)
def test_group_axioms(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * word_inverse(a) == FlowWord()
    assert word_inverse(a) * a == FlowWord()
    assert word_inverse(a * b) == word_inverse(b) * word_inverse(a)


def test_apply_right_to_left(torus):
    m = np.array([0.3, 0.3])
    assert np.array_equal(word_apply(FlowWord(), m, torus), m)
    np.testing.assert_allclose(word_apply(FlowWord.of(SWIRL), m, torus), flow_at(SWIRL, m, 1.0, torus), atol=1e-14)
    w = FlowWord([(X, 1), (SWIRL, 1)])
    np.testing.assert_allclose(word_apply(w, m, torus), flow_at(SWIRL, m, 1.0, torus) + [0.1, 0.0], atol=1e-12)


@given(w=words)
def test_word_then_inverse_returns(torus, w):
    m = sample_points()
    back = word_apply(word_inverse(w), word_apply(w, m, torus), torus)
    assert np.max(np.abs(torus.displacement(m, back))) < 1e-9


def test_translation_moves_bump(torus):
    f = Bump("b", (0.3, 0.5), 0.2)
    moved = word_action_on_function(FlowWord.of(ConstantField("e", (0.25, 0.0))), f)
    x = np.random.default_rng(0).uniform(0, 1, (200, 2))
    np.testing.assert_allclose(moved.eval(x, torus), Bump("b2", (0.55, 0.5), 0.2).eval(x, torus), atol=1e-12)
    assert word_action_on_function(FlowWord(), f) is f


@given(w1=words, w2=words)
def test_action_composes(torus, w1, w2):
    f = FUNCS[1]
    x = sample_points()
    one = word_action_on_function(w1 * w2, f).eval(x, torus)
    two = word_action_on_function(w1, word_action_on_function(w2, f)).eval(x, torus)
    assert np.max(np.abs(one - two)) < 1e-9


def test_function_subalgebra(torus):
    f, g = FUNCS[0], FUNCS[1]
    prod = AlgebraElement.function(f) * AlgebraElement.function(g)
    x = sample_points()
    assert prod.words() == [FlowWord()]
    np.testing.assert_allclose(prod.terms[0][0].eval(x, torus), f.eval(x, torus) * g.eval(x, torus))


def test_flow_times_function(torus):
    F = FlowWord.of(SWIRL)
    f = FUNCS[1]
    lhs = AlgebraElement.flow(F) * AlgebraElement.function(f)
    rhs = AlgebraElement([(word_action_on_function(F, f), F)])
    assert lhs.grid_distance(rhs, sample_points(), torus) < 1e-12


@settings(max_examples=10)
@given(a=elements(), b=elements(), c=elements())
def test_associativity(torus, a, b, c):
    assert ((a * b) * c).grid_distance(a * (b * c), sample_points(), torus) < 1e-9


@settings(max_examples=10)
@given(a=elements(), b=elements(), c=elements())
def test_distributivity(torus, a, b, c):
    assert (a * (b + c)).grid_distance(a * b + a * c, sample_points(), torus) < 1e-9


@settings(max_examples=10)
@given(a=elements(), b=elements())
def test_adjoint_laws(torus, a, b):
    x = sample_points()
    assert algebra_adjoint(algebra_multiply(a, b)).grid_distance(b.adjoint() * a.adjoint(), x, torus) < 1e-9
    assert a.adjoint().adjoint().grid_distance(a, x, torus) < 1e-9


def test_adjoint_of_function_is_conjugate(torus):
    f = Scaled(FUNCS[2], 1 + 2j)
    a = AlgebraElement.function(f)
    x = sample_points()
    star = a.adjoint()
    np.testing.assert_allclose(star.terms[0][0].eval(x, torus), np.conj(f.eval(x, torus)))


def test_reparametrization_half_steps(torus):
    F1 = FlowWord.of(SWIRL)
    F2 = FlowWord.of(SWIRL.scaled(0.5)) * FlowWord.of(SWIRL.scaled(0.5))
    cert = is_local_reparametrization(F1, F2, Everywhere(), 16, torus)
    assert cert.holds and len(cert.maps) == 16
    for phi_t, _ in cert.maps:
        assert np.all(np.diff(phi_t) >= 0)


def test_reparametrization_rejects_different_endpoints(plane):
    T = ConstantField("T", (0.3, 0.1))
    cert = is_local_reparametrization(FlowWord.of(T), FlowWord.of(T.scaled(2.0)), BallSupport((0.0, 0.0), 0.5), 8, plane)
    assert not cert.holds and cert.violation is not None


def test_reparametrization_on_invariant_support(torus):
    # same rotation inside radius 0.2, different cut-offs outside
    rot = RotationField("rot", (0.5, 0.5), 1.0)
    A1 = BumpModulatedField("A1", rot, (0.5, 0.5), 0.4, plateau=0.25)
    A2 = BumpModulatedField("A2", rot, (0.5, 0.5), 0.3, plateau=0.22)
    disk = BallSupport((0.5, 0.5), 0.2)
    assert is_local_reparametrization(FlowWord.of(A1), FlowWord.of(A2), disk, 24, torus).holds
    assert not is_local_reparametrization(FlowWord.of(A1), FlowWord.of(A2), Everywhere(), 64, torus).holds


@pytest.fixture(scope="module")
def small_grid(torus):
    return GridSpec.square(torus, 24)


def test_ideal_residual_vanishes(torus, small_grid):
    f = Bump("f", (0.5, 0.5), 0.3)
    F1 = FlowWord.of(SWIRL)
    assert ideal_residual(F1, F1, f, SU2TwoAxis(torus, 0.7, -1.1), small_grid) == 0.0
    F2 = FlowWord.of(SWIRL.scaled(0.5)) * FlowWord.of(SWIRL.scaled(0.5))
    for nabla in (TrivialConnection(torus, 1), SU2TwoAxis(torus, 0.7, -1.1)):
        assert ideal_residual(F1, F2, f, nabla, small_grid) < 1e-6


def test_ideal_is_two_sided(torus, small_grid):
    f = Bump("f", (0.5, 0.5), 0.3)
    F1 = FlowWord.of(SWIRL)
    F2 = FlowWord.of(SWIRL.scaled(0.5)) * FlowWord.of(SWIRL.scaled(0.5))
    G = FlowWord.of(ConstantField("G", (0.125, 0.25)))
    nabla = SU2TwoAxis(torus, 0.7, -1.1)
    assert ideal_residual(G * F1, G * F2, f, nabla, small_grid) < 1e-6
    Gf = word_action_on_function(word_inverse(G), f)
    assert ideal_residual(F1 * G, F2 * G, Gf, nabla, small_grid) < 1e-6


def test_ideal_contrast_is_large(torus, small_grid):
    f = Bump("f", (0.5, 0.5), 0.3)
    other = BumpModulatedField("lin", ConstantField("c", (0.2, 0.0)), (0.5, 0.5), 0.35)
    assert ideal_residual(FlowWord.of(SWIRL), FlowWord.of(other), f, TrivialConnection(torus, 1), small_grid) > 0.1


def test_json_round_trip(torus):
    a = AlgebraElement([(Scaled(FUNCS[0], 1 - 0.5j), FlowWord([(X, 1), (SWIRL, -1)])), (FUNCS[2], FlowWord())])
    data = json.loads(a.dumps())
    assert {"function_id", "coefficients", "word"} <= set(data[0])
    b = AlgebraElement.from_json(data, {f.id: f for f in FUNCS}, {F.id: F for F in (X, Y, SWIRL)})
    assert a.grid_distance(b, sample_points(), torus) < 1e-15
    assert b.words() == a.words()
