import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdefilter import model as cm
from spdefilter.model import CoefficientFn, FlowModel, SystemModel, Term

finite = st.floats(-3, 3, allow_nan=False).filter(lambda v: abs(v) > 0.05)
positive = st.floats(0.2, 3)


@st.composite
def coefficients(draw, bounded_only=False):
    kinds = ["constant", "tanh", "sine", "gaussian_bump"]
    if not bounded_only:
        kinds += ["linear", "quadratic"]
    kind = draw(st.sampled_from(kinds))
    if kind == "gaussian_bump":
        params = (draw(finite), draw(st.floats(-2, 2)), draw(positive))
    else:
        params = tuple(draw(finite) for _ in cm.KINDS[kind])
    scale = draw(st.sampled_from([1.0, draw(st.floats(0.3, 2.0)), -draw(st.floats(0.3, 2.0))]))
    shift = draw(st.sampled_from([0.0, draw(st.floats(-1, 1))]))
    return CoefficientFn(kind, params, scale, shift)


def test_eval_examples():
    assert cm.eval(cm.tanh(1, 1), 0.0) == 0.0
    assert cm.eval(cm.constant(2), 3.7) == 2.0
    assert cm.eval(cm.constant(2), -1e6) == 2.0
    assert cm.eval(cm.gaussian_bump(1, 0, 1), 0.0) == 1.0


def test_derivative_examples():
    assert cm.d1(cm.linear(3), 0.4) == 3.0
    assert cm.d1(cm.linear(3), -12.0) == 3.0
    assert cm.d2(cm.constant(7), 1.3) == 0.0
    fn = cm.tanh(1, 1)
    step = 1e-6
    fd = (cm.eval(fn, step) - cm.eval(fn, -step)) / (2 * step)
    assert abs(cm.d1(fn, 0.0) - fd) <= 1e-8
    assert cm.d1(fn, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_sup_norm_examples():
    assert cm.sup_norms(cm.sine(2, 3)) == (2.0, 6.0, 18.0, 54.0)
    assert cm.sup_norms(cm.constant(5)) == (5.0, 0.0, 0.0, 0.0)
    assert cm.sup_norms(cm.linear(1)) is cm.Unbounded
    assert cm.sup_norms(cm.linear(0)) == (0.0, 0.0, 0.0, 0.0)


def test_array_evaluation_matches_scalar():
    fn = cm.gaussian_bump(1.5, 0.3, 0.7)
    xs = np.linspace(-3, 3, 11)
    np.testing.assert_array_equal(cm.d2(fn, xs), [cm.d2(fn, x) for x in xs])


@settings(max_examples=60, deadline=None)
@given(coefficients(), st.integers(0, 2**32 - 1))
def test_derivatives_match_central_differences(fn, seed):
    x = np.random.default_rng(seed).uniform(-4, 4, 1000)
    norms = cm.sup_norms(fn)
    d1_bound = 1.0 if norms is cm.Unbounded else norms[1]
    h = 1e-5
    fd1 = (cm.eval(fn, x + h) - cm.eval(fn, x - h)) / (2 * h)
    fd2 = (cm.d1(fn, x + h) - cm.d1(fn, x - h)) / (2 * h)
    fd3 = (cm.d2(fn, x + h) - cm.d2(fn, x - h)) / (2 * h)
    assert np.max(np.abs(cm.d1(fn, x) - fd1)) <= 1e-6 * (1 + d1_bound)
    assert np.max(np.abs(cm.d2(fn, x) - fd2)) <= 1e-4
    assert np.max(np.abs(cm.d3(fn, x) - fd3)) <= 1e-4 * (1 + abs(fn.scale) ** 3 * 30)


def test_second_derivative_against_value_differences():
    # the invariant as stated: d2 against a second difference of eval
    h = 1e-4
    x = np.linspace(-3, 3, 1000)
    for fn in [cm.tanh(1, 1), cm.sine(1, 1), cm.gaussian_bump(1, 0, 1), cm.quadratic(0.5)]:
        fd = (cm.eval(fn, x + h) - 2 * cm.eval(fn, x) + cm.eval(fn, x - h)) / h**2
        assert np.max(np.abs(cm.d2(fn, x) - fd)) <= 1e-4


@settings(max_examples=60, deadline=None)
@given(coefficients(bounded_only=True))
def test_sup_norms_hold_and_are_tight(fn):
    # tanh only approaches its sup at infinity, so widen the window for slow rates
    rate = abs(fn.scale * fn.params[1]) if fn.kind == "tanh" else 1.0
    width = 25 / min(1.0, rate)
    x = np.linspace(-width, width, 400_001)
    bounds = cm.sup_norms(fn)
    sampled = [np.max(np.abs(d(fn, x))) for d in (cm.eval, cm.d1, cm.d2, cm.d3)]
    for s, b in zip(sampled, bounds):
        assert s <= b * (1 + 1e-12) + 1e-300
        # closed-form bounds are attained, not just valid
        assert s >= b * 0.999 - 1e-12


def test_unknown_kind_and_bad_params():
    with pytest.raises(ValueError):
        CoefficientFn("cubic", (1,))
    with pytest.raises(ValueError):
        CoefficientFn("tanh", (1,))
    with pytest.raises(ValueError):
        cm.gaussian_bump(1, 0, 0)


def test_camel_case_aliases():
    assert CoefficientFn("SineBounded", (2, 3)) == cm.sine(2, 3)
    assert CoefficientFn("GaussianBump", (1, 0, 1)).kind == "gaussian_bump"


@settings(max_examples=40, deadline=None)
@given(coefficients())
def test_record_round_trip(fn):
    assert CoefficientFn.from_record(fn.to_record()) == fn


def test_record_param_names_checked():
    with pytest.raises(ValueError, match="missing"):
        CoefficientFn.from_record({"kind": "tanh", "params": {"a": 1}})


def test_system_model_rejects_unbounded_without_flag():
    with pytest.raises(ValueError, match="allow_unbounded"):
        SystemModel(cm.linear(-0.5), cm.linear(1), cm.linear(1))
    m = SystemModel(cm.linear(-0.5), cm.linear(1), cm.linear(1), allow_unbounded=True)
    assert len(m.assumption_violations) == 3
    assert all(v.startswith("assumption_violation") for v in m.assumption_violations)
    with pytest.raises(ValueError):
        SystemModel(cm.tanh(1, 1), cm.sine(1, 1), cm.tanh(1, 2), T=0.0)


def test_g_smoothness_metadata():
    assert SystemModel(cm.tanh(1, 1), cm.sine(1, 1), cm.tanh(1, 2)).g_smoothness == "C3_b"


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), finite, finite)
def test_flow_diffusion_covariance_is_psd(z, fa, ha):
    model = FlowModel.signal_likelihood(cm.tanh(fa, 1), cm.sine(ha, 1))
    a = model.a(np.array(z))
    np.testing.assert_allclose(a, a.T)
    assert np.min(np.linalg.eigvalsh(a)) >= -1e-12


def test_flow_model_shapes_and_terms():
    model = FlowModel.signal_likelihood(cm.tanh(1, 1), cm.sine(1, 1))
    z = np.array([[0.3, 2.0], [-1.0, 0.5]])
    b = model.drift(z)
    s = model.diffusion(z)
    assert b.shape == (2, 2) and s.shape == (2, 2, 2)
    np.testing.assert_allclose(b[:, 0], np.tanh(z[:, 0]))
    np.testing.assert_array_equal(b[:, 1], 0.0)
    np.testing.assert_allclose(s[:, 1, 1], np.sin(z[:, 0]) * z[:, 1])
    np.testing.assert_array_equal(s[:, 0, 0], 1.0)
    assert model.unbounded  # the rho component grows linearly
    assert not FlowModel.scalar(cm.tanh(1, 1)).unbounded
    with pytest.raises(ValueError):
        FlowModel(2, 1, (cm.constant(0),), ((cm.constant(1),),))


def test_term_with_factor():
    t = Term(cm.sine(2, 1), arg=1, factor=0)
    z = np.array([3.0, 0.5])
    assert t(z) == pytest.approx(2 * math.sin(0.5) * 3.0)
