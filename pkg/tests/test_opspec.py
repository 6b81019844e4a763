from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import allclose_rel_abs, central_grad
from pinn_ntk.errors import IncompleteJet, InvalidArgument
from pinn_ntk.netcore import MultiIndex, grad_of_derivative, jet, make_params
from pinn_ntk.opspec import (
    NON_HOMOGENEOUS,
    Composite,
    Monomial,
    OperatorSpec,
    eval_operator,
    heat_operator,
    homogeneity,
    identity_operator,
    kdv_operator,
    linearize,
    needed_indices,
    operator_from_records,
    residual_gradient,
    sine_gordon_operator,
    term_to_record,
    threshold_s1,
    threshold_s2,
)

Q, QX, QT, QXX, QTT, QXXX = ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (3, 0))


def mi(a):
    return MultiIndex(a)


def test_eval_examples():
    assert eval_operator(sine_gordon_operator(), {mi(Q): 0.0, mi(QXX): 0.0, mi(QTT): 0.0}) == 0.0
    kdv_jet = {mi(Q): 1.0, mi(QX): 2.0, mi(QT): 3.0, mi(QXXX): 4.0}
    assert eval_operator(kdv_operator(), kdv_jet) == 19.0
    assert eval_operator(identity_operator(1), {mi((0,)): 5.0}) == 5.0


def test_missing_jet_entry():
    with pytest.raises(IncompleteJet):
        eval_operator(kdv_operator(), {mi(Q): 1.0})


def test_linearize_examples():
    F = linearize(kdv_operator(), {mi(Q): 1.0, mi(QX): 2.0, mi(QT): 0.0, mi(QXXX): 0.0})
    assert F == {mi(Q): 12.0, mi(QX): 6.0, mi(QT): 1.0, mi(QXXX): 1.0}
    F = linearize(sine_gordon_operator(), {mi(Q): 0.0, mi(QXX): 0.0, mi(QTT): 0.0})
    assert F == {mi(Q): -1.0, mi(QTT): 1.0, mi(QXX): -1.0}
    rng = np.random.default_rng(0)
    for _ in range(3):
        j = {mi(QT): rng.normal(), mi(QXX): rng.normal()}
        assert linearize(heat_operator(), j) == {mi(QT): 1.0, mi(QXX): -1.0}


def test_needed_indices():
    assert needed_indices(kdv_operator()) == {mi(Q), mi(QX), mi(QXXX), mi(QT)}
    assert needed_indices(sine_gordon_operator()) == {mi(Q), mi(QXX), mi(QTT)}
    assert needed_indices(identity_operator(3)) == {mi((0, 0, 0))}


def test_invalid_terms():
    with pytest.raises(InvalidArgument):
        Monomial(1.0, (((0, 0), 0),))
    with pytest.raises(InvalidArgument):
        Composite(1.0, "tan", mi(Q))


# -- linearize against a finite-difference oracle -------------------------------

_index = st.sampled_from([Q, QX, QT, QXX, QTT, QXXX])
_monomial = st.builds(
    lambda c, idx, pows: Monomial(c, tuple(zip(idx, pows))),
    st.floats(-3, 3, allow_nan=False),
    st.lists(_index, min_size=1, max_size=3, unique=True),
    st.lists(st.integers(1, 3), min_size=3, max_size=3),
)
_composite = st.builds(Composite, st.floats(-3, 3, allow_nan=False),
                       st.sampled_from(["sin", "cos", "exp", "identity"]), _index.map(mi))
_operator = st.lists(st.one_of(_monomial, _composite), min_size=1, max_size=4).map(
    lambda terms: OperatorSpec(terms=terms))


@settings(max_examples=60, deadline=None)
@given(op=_operator, vals=st.lists(st.floats(-1.5, 1.5), min_size=6, max_size=6))
def test_linearize_matches_fd(op, vals):
    j = {mi(a): v for a, v in zip([Q, QX, QT, QXX, QTT, QXXX], vals)}
    F = linearize(op, j)
    h = 1e-6
    for a in needed_indices(op):
        up, dn = dict(j), dict(j)
        up[a] += h
        dn[a] -= h
        fd = (eval_operator(op, up) - eval_operator(op, dn)) / (2 * h)
        assert F[a] == pytest.approx(fd, rel=1e-5, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(op=st.lists(_monomial, min_size=1, max_size=4).map(lambda t: OperatorSpec(terms=t)))
def test_polynomial_degrees_consistent(op):
    """A homogeneous F_i scales like lambda^deg when every jet entry is scaled by lambda."""
    rep = homogeneity(op)
    rng = np.random.default_rng(1)
    j = {mi(a): rng.uniform(0.5, 1.5) for a in [Q, QX, QT, QXX, QTT, QXXX]}
    lam = 1.7
    F1 = linearize(op, j)
    F2 = linearize(op, {a: lam * v for a, v in j.items()})
    for a, deg in rep.per_Fi.items():
        if deg != NON_HOMOGENEOUS:
            assert F2[a] == pytest.approx(lam ** deg * F1[a], rel=1e-9, abs=1e-9)


# -- residual gradients ---------------------------------------------------------

def test_identity_residual_gradient():
    p = make_params(5, 1, 0.5, "all-normal", seed=2)
    g = residual_gradient(p, identity_operator(1), [0.3])
    assert np.array_equal(g, grad_of_derivative(p, [0.3], (0,)))


def test_linear_residual_gradient():
    p = make_params(5, 1, 0.5, "all-normal", seed=2)
    op = OperatorSpec(terms=[Monomial(2.0, (((1,), 1),))])
    assert np.array_equal(residual_gradient(p, op, [0.3]), 2 * grad_of_derivative(p, [0.3], (1,)))


def test_kdv_residual_gradient_matches_fd():
    p = make_params(8, 2, 0.5, "all-normal", seed=9)
    op, x = kdv_operator(), [0.2, 0.4]
    f = lambda th: eval_operator(op, jet(p.with_flat(th), x, needed_indices(op)))
    assert allclose_rel_abs(residual_gradient(p, op, x), central_grad(f, p.flatten()), 1e-5, 1e-9)


# -- homogeneity and thresholds ---------------------------------------------

def test_kdv_thresholds():
    rep = homogeneity(kdv_operator())
    assert (rep.case_label, rep.T) == ("B", 1)
    assert rep.s1 == 0.75 and rep.s2 == pytest.approx(2 / 3, abs=1e-12) and rep.s_min == 0.75


def test_sine_gordon_is_case_a():
    rep = homogeneity(sine_gordon_operator())
    assert rep.case_label == "A" and rep.s_min == 1.0
    assert rep.per_Fi[mi(Q)] == NON_HOMOGENEOUS


def test_heat_thresholds():
    rep = homogeneity(heat_operator())
    assert (rep.case_label, rep.T, rep.s1, rep.s2) == ("B", 0, 0.5, 0.5)


def test_constant_in_f0_forces_case_a():
    op = OperatorSpec(terms=[Monomial(1.0, ((QT, 1),)), Monomial(3.0, ((Q, 1),))])
    assert homogeneity(op).case_label == "A"


def test_threshold_ordering():
    for T in range(0, 8):
        assert threshold_s1(T) >= threshold_s2(T)
        if T >= 1:
            assert threshold_s1(T) > threshold_s2(T)
    assert threshold_s1(1) == Fraction(3, 4) and threshold_s2(1) == Fraction(2, 3)


def test_record_roundtrip():
    op = sine_gordon_operator()
    back = operator_from_records([term_to_record(t) for t in op.terms])
    j = {mi(Q): 0.3, mi(QXX): -0.2, mi(QTT): 1.1}
    assert eval_operator(back, j) == eval_operator(op, j)
