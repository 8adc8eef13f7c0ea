import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from drbaseline.baselines import (
    DrProgram,
    Method,
    approx_error_percent,
    approx_high_x_of_y,
    approx_low_x_of_y,
    approx_mid_x_of_y,
    approximation_errors,
    baseline,
    baseline_rows,
    fit_trunc_spec,
    high_x_of_y,
    join,
    low_x_of_y,
    meet,
    mid_x_of_y,
)
from drbaseline.errors import DomainError, ParameterError
from drbaseline.truncnorm import TruncNormalSpec, expected_max, sample_max_factor
from oracles import bottom_mean, top_mean

SPEC = TruncNormalSpec(0.0, 1.0, -3.0, 3.0)
kwh = st.floats(0.0, 20.0, allow_nan=False)


@st.composite
def window_and_x(draw, min_y=1, max_y=10):
    Y = draw(st.integers(min_y, max_y))
    w = draw(st.lists(kwh, min_size=Y, max_size=Y))
    X = draw(st.integers(1, Y))
    return np.array(w), X


@st.composite
def window_pair(draw, min_y=1, max_y=10):
    w, X = draw(window_and_x(min_y, max_y))
    v = draw(st.lists(kwh, min_size=w.size, max_size=w.size))
    return w, np.array(v), X


# ---- exact baselines ------------------------------------------------------

def test_examples():
    assert high_x_of_y((3, 1, 2), 2) == 2.5
    assert high_x_of_y((5, 5, 5, 5), 3) == 5
    assert low_x_of_y((3, 1, 2), 2) == 1.5
    assert low_x_of_y((5, 5, 5, 5), 1) == 5
    assert mid_x_of_y((4, 1, 3, 2), 2) == 2.5
    assert mid_x_of_y((1, 2, 3), 1) == 2
    assert mid_x_of_y((1, 2, 3), 3) == 2


@given(window_and_x())
def test_against_sort_oracle(wx):
    w, X = wx
    assert high_x_of_y(w, X) == pytest.approx(top_mean(w, X), abs=1e-12)
    assert low_x_of_y(w, X) == pytest.approx(bottom_mean(w, X), abs=1e-12)


@given(window_and_x())
def test_limiting_cases(wx):
    w, _ = wx
    Y = w.size
    assert high_x_of_y(w, Y) == pytest.approx(w.mean())
    assert low_x_of_y(w, Y) == pytest.approx(w.mean())
    assert high_x_of_y(w, 1) == w.max()
    assert low_x_of_y(w, 1) == w.min()


def test_x_out_of_range():
    with pytest.raises(ParameterError):
        high_x_of_y((1, 2), 3)
    with pytest.raises(ParameterError):
        low_x_of_y((1, 2), 0)
    with pytest.raises(ParameterError):
        mid_x_of_y((1, 2, 3), 2)


@pytest.mark.parametrize("kw", [dict(X=0, Y=3), dict(X=4, Y=3), dict(X=1, Y=3, r=-0.1),
                                dict(X=2, Y=5, method="mid")])
def test_program_validation(kw):
    kw.setdefault("r", 0.12)
    with pytest.raises(ParameterError):
        DrProgram(**kw)


def test_negative_window_rejected():
    with pytest.raises((DomainError, ParameterError)):
        high_x_of_y((1.0, -0.5), 1)


@given(window_pair())
def test_monotone_in_window(pair):
    w, d, X = pair
    hi = w + d
    assert high_x_of_y(w, X) <= high_x_of_y(hi, X) + 1e-9
    assert low_x_of_y(w, X) <= low_x_of_y(hi, X) + 1e-9
    Xm = X + (w.size - X) % 2
    assert mid_x_of_y(w, Xm) <= mid_x_of_y(hi, Xm) + 1e-9


@given(window_and_x())
def test_monotone_in_x(wx):
    w, _ = wx
    h = [high_x_of_y(w, k) for k in range(1, w.size + 1)]
    lo = [low_x_of_y(w, k) for k in range(1, w.size + 1)]
    assert np.all(np.diff(h) <= 1e-9)
    assert np.all(np.diff(lo) >= -1e-9)


@given(window_pair(), st.floats(0.0, 1.0))
def test_convexity(pair, lam):
    x, y, X = pair
    m = lam * x + (1 - lam) * y
    assert high_x_of_y(m, X) <= lam * high_x_of_y(x, X) + (1 - lam) * high_x_of_y(y, X) + 1e-9
    assert low_x_of_y(m, X) >= lam * low_x_of_y(x, X) + (1 - lam) * low_x_of_y(y, X) - 1e-9


@given(window_pair())
def test_sub_and_supermodularity(pair):
    x, y, X = pair
    j, m = join(x, y), meet(x, y)
    assert high_x_of_y(x, X) + high_x_of_y(y, X) >= high_x_of_y(j, X) + high_x_of_y(m, X) - 1e-9
    assert low_x_of_y(x, X) + low_x_of_y(y, X) <= low_x_of_y(j, X) + low_x_of_y(m, X) + 1e-9


def test_join_meet():
    assert list(join((1, 5), (3, 2))) == [3, 5]
    assert list(meet((1, 5), (3, 2))) == [1, 2]


# ---- approximated baselines -----------------------------------------------

def test_approx_examples():
    for X in (1, 2, 3):
        assert approx_high_x_of_y((2, 2, 2), X) == 2
    f3 = expected_max(3, SPEC.alpha, SPEC.beta)
    assert approx_high_x_of_y((1, 2, 3), 1, 3, spec=SPEC) == pytest.approx(2 + f3 * 1.0, abs=1e-6)
    assert approx_low_x_of_y((1, 2, 3), 1) == 1
    assert approx_mid_x_of_y((1, 2, 3), 1) == 2
    assert approx_low_x_of_y((1, 2, 3), 2, 3) == pytest.approx(1.5)


def test_approx_needs_two_days():
    with pytest.raises(ParameterError):
        approx_high_x_of_y((1.0,), 1)
    with pytest.raises(ParameterError):
        approx_low_x_of_y((1.0,), 1)


@given(window_and_x(min_y=2, max_y=8))
@settings(max_examples=60, deadline=None)
def test_approx_endpoints(wx):
    w, _ = wx
    Y = w.size
    s = w.std(ddof=1)
    assert approx_high_x_of_y(w, Y) == pytest.approx(w.mean(), abs=1e-12)
    assert approx_low_x_of_y(w, Y) == pytest.approx(w.mean(), abs=1e-12)
    assert approx_mid_x_of_y(w, Y) == pytest.approx(w.mean(), abs=1e-12)
    f = sample_max_factor(Y, SPEC)
    assert approx_high_x_of_y(w, 1, spec=SPEC) == pytest.approx(w.mean() + f * s, abs=1e-9)


@given(window_and_x(min_y=2, max_y=8))
@settings(max_examples=40, deadline=None)
def test_approx_non_increasing_in_x(wx):
    w, _ = wx
    v = [approx_high_x_of_y(w, k) for k in range(1, w.size + 1)]
    assert np.all(np.diff(v) <= 1e-9)


@given(window_and_x(min_y=2, max_y=8), st.floats(0.01, 5.0))
@settings(max_examples=60, deadline=None)
def test_approx_translation_with_fixed_spec(wx, c):
    w, X = wx
    shift = approx_high_x_of_y(w + c, X, spec=SPEC) - approx_high_x_of_y(w, X, spec=SPEC)
    assert shift == pytest.approx(c, abs=1e-9)


@given(window_and_x(min_y=2, max_y=6), st.floats(1.0, 4.0))
@settings(max_examples=40, deadline=None)
def test_approx_scaling_does_not_decrease(wx, k):
    w, X = wx
    assume(w.std() > 1e-6)
    assert approx_high_x_of_y(k * w, X) >= approx_high_x_of_y(w, X) - 1e-9


@given(st.integers(3, 8), st.data())
@settings(max_examples=60, deadline=None)
def test_mixed_difference_sign(Y, data):
    # with the truncation held fixed, the (x_i, X) mixed difference is >= 0 when
    # x_i moves below the mean of the others and <= 0 above it
    x = np.array(data.draw(st.lists(st.floats(0.5, 8.0), min_size=Y, max_size=Y)))
    i = data.draw(st.integers(0, Y - 1))
    X = data.draw(st.integers(1, Y - 1))
    others = np.delete(x, i).mean()
    below = data.draw(st.booleans())
    span = (0.0, others) if below else (others, others + 8.0)
    lo, hi = sorted(data.draw(st.lists(st.floats(*span), min_size=2, max_size=2)))
    xl, xh = x.copy(), x.copy()
    xl[i], xh[i] = lo, hi

    def h(v, k):
        return approx_high_x_of_y(v, k, spec=SPEC)

    d = h(xh, X + 1) - h(xh, X) - h(xl, X + 1) + h(xl, X)
    assert (d >= -1e-9) if below else (d <= 1e-9)


def test_degenerate_window_returns_mean():
    assert approx_high_x_of_y((3.0, 3.0, 3.0, 3.0), 1, a_hat=10) == 3.0


def test_fit_trunc_spec():
    s = fit_trunc_spec((1.0, 2.0, 3.0), a_hat=5.0)
    assert (s.mu, s.lower, s.upper) == (2.0, 0.0, 5.0)
    assert s.sigma == pytest.approx(1.0)
    assert fit_trunc_spec((2.0, 2.0)).sigma == 1e-9


def test_error_percent():
    assert approx_error_percent(1.0, 1.0) == 0
    assert approx_error_percent(1.05, 1.0) == pytest.approx(5.0)
    with pytest.raises(DomainError):
        approx_error_percent(1.0, 0.0)


# ---- dispatch -------------------------------------------------------------

@pytest.mark.parametrize("method", list(Method))
def test_baseline_rows_matches_scalar(method):
    rng = np.random.default_rng(1)
    Y = 5
    X = 3
    prog = DrProgram(X, Y, 0.1, method)
    w = rng.uniform(0, 6, (4, 3, Y))
    rows = baseline_rows(w, prog, 9.0)
    for idx in np.ndindex(4, 3):
        assert rows[idx] == pytest.approx(baseline(w[idx], prog, 9.0), abs=1e-12)
    # axis argument: window axis first
    assert np.allclose(baseline_rows(np.moveaxis(w, -1, 0), prog, 9.0, axis=0), rows)


def test_baseline_rows_checks_length():
    with pytest.raises(ParameterError):
        baseline_rows(np.ones((2, 4)), DrProgram(1, 5, 0.1))


def test_approximation_errors_matches_scalar():
    rng = np.random.default_rng(5)
    w = rng.uniform(0.5, 4.0, (6, 5))
    w[0] = 2.0  # constant window: approximation is exact
    err = approximation_errors(w, a_hat=6.0)
    assert err.shape == (6, 5)
    np.testing.assert_allclose(err[0], 0.0)
    for i in range(1, 6):
        for X in range(1, 6):
            want = approx_error_percent(high_x_of_y(w[i], X), approx_high_x_of_y(w[i], X, a_hat=6.0))
            assert err[i, X - 1] == pytest.approx(want, rel=1e-12, abs=1e-12)
    with pytest.raises(ParameterError):
        approximation_errors(np.ones((3, 1)))
