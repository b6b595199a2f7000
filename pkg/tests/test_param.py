import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scorecomp.oracle import KINDS, GaussianMixture, oracle_field
from scorecomp.param import Prediction, SingularTimeError, as_score_field, convert, convert_value, native_field
from scorecomp.sampler import sample
from scorecomp.schedule import KINDS as SCHEDULES, NoiseSchedule
from scorecomp.verify import conversion_errors

vecs = arrays(np.float64, 3, elements=st.floats(-5, 5))


def test_epsilon_to_score_scalar():
    s = NoiseSchedule("flow-linear")
    p = convert(Prediction("epsilon", np.array([1.0]), 0.5, np.array([0.3]), s), "score")
    assert p.kind == "score"
    np.testing.assert_allclose(p.value, [-2.0], atol=1e-15)


@pytest.mark.parametrize("kind", SCHEDULES)
def test_velocity_to_epsilon_at_origin(kind):
    s = NoiseSchedule(kind)
    if kind == "flow-linear":
        t = 0.4
    else:
        # time where alpha = 0.6: integrated beta = -2 log 0.6
        from scipy.optimize import brentq
        t = brentq(lambda u: s.alpha_sigma(u)[0] - 0.6, 0.0, 1.0, xtol=1e-15)
    assert s.alpha_sigma(t)[0] == pytest.approx(0.6, abs=1e-12)
    eps = convert_value(np.array([1.0]), "velocity", "epsilon", t, np.array([0.0]), s)
    np.testing.assert_allclose(eps, [0.6], atol=1e-12)


def test_vp_velocity_matches_salimans_form(rng):
    s = NoiseSchedule("vp-linear")
    t = 0.37
    a, sg = s.alpha_sigma(t)
    x, v = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(convert_value(v, "velocity", "epsilon", t, x, s), a * v + sg * x, atol=1e-14)


@pytest.mark.parametrize("kind", SCHEDULES)
@given(value=vecs, x=vecs, t=st.floats(0.02, 0.98))
def test_round_trips(kind, value, x, t):
    s = NoiseSchedule(kind)
    for a, b in itertools.permutations(KINDS, 2):
        back = convert_value(convert_value(value, a, b, t, x, s), b, a, t, x, s)
        np.testing.assert_allclose(back, value, atol=1e-12 * max(1.0, np.abs(value).max()) * 10)


@pytest.mark.parametrize("kind", SCHEDULES)
def test_full_cycle_10k(kind):
    s = NoiseSchedule(kind)
    rng = np.random.default_rng(0)
    n = 10_000
    ts = rng.uniform(0.02, 0.98, n)
    xs, vals = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    out = vals
    for a, b in zip(["score", "epsilon", "sample", "velocity"], ["epsilon", "sample", "velocity", "score"]):
        out = convert_value(out, a, b, ts, xs, s)
    assert np.max(np.abs(out - vals)) <= 1e-12


@pytest.mark.parametrize("kind", SCHEDULES)
def test_composition_order_equivalence(kind):
    worst, order, order_abs = conversion_errors(NoiseSchedule(kind), 2000, seed=1)
    assert len(worst) == 12
    assert max(worst.values()) <= 1e-12
    assert order <= 1e-12


def test_singular_times_refused():
    vp, fl = NoiseSchedule("vp-linear"), NoiseSchedule("flow-linear")
    x = np.ones(2)
    with pytest.raises(SingularTimeError):
        convert_value(x, "epsilon", "score", 0.0, x, vp)
    with pytest.raises(SingularTimeError):
        convert_value(x, "sample", "epsilon", 0.0, x, fl)
    with pytest.raises(SingularTimeError):
        convert_value(x, "epsilon", "sample", 1.0, x, fl)
    with pytest.raises(SingularTimeError):
        convert_value(x, "epsilon", "velocity", 1.0, x, fl)
    # conversions that do not divide are allowed at the endpoints
    np.testing.assert_array_equal(convert_value(x, "score", "epsilon", 0.0, x, vp), -0.0 * x)


def test_as_score_field_identity_and_epsilon_native(rng):
    s = NoiseSchedule("vp-linear")
    mix = GaussianMixture.gaussian([0.4, -0.2], np.diag([0.5, 2.0]))
    orc = oracle_field(mix, s)
    assert as_score_field(orc) is orc
    eps_native = native_field(orc, "epsilon")
    assert eps_native.kind == "epsilon"
    wrapped = as_score_field(eps_native)
    X = rng.normal(size=(1000, 2))
    for t in (0.05, 0.5, 0.95):
        np.testing.assert_allclose(wrapped(t, X), orc(t, X), atol=1e-12)
        np.testing.assert_allclose(eps_native(t, X), -s.alpha_sigma(t)[1] * orc(t, X), atol=1e-15)


def test_velocity_native_sampling_matches_score_native():
    s = NoiseSchedule("vp-linear")
    orc = oracle_field(GaussianMixture.gaussian(np.zeros(2)), s)
    v_field = as_score_field(native_field(orc, "velocity"))
    a = sample(orc, s, "pf-ode-euler", 100, 2000, seed=7, t_min=1e-3, record="ends").terminal
    b = sample(v_field, s, "pf-ode-euler", 100, 2000, seed=7, t_min=1e-3, record="ends").terminal
    assert np.max(np.abs(a - b)) <= 1e-12
    np.testing.assert_allclose(a.mean(0), b.mean(0), atol=1e-13)
    np.testing.assert_allclose(np.cov(a.T), np.cov(b.T), atol=1e-12)
