import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from heatmoi.divdiff import (
    DomainError,
    FunctionSpec,
    QuadratureError,
    dd_batch,
    dd_eval,
    dd_expand_power,
    dd_quadrature,
    dd_recursive,
    fkd,
)

positive = st.floats(min_value=0.2, max_value=6.0)
SPECS = [fkd(0, 2), fkd(2, 2), fkd(2, 3), fkd(4, 2), fkd(4, 3), fkd(6, 4), FunctionSpec.exp(-1.0)]


def mp_divdiff(fn, pts):
    """Divided difference in 60-digit arithmetic for distinct points."""
    with mpmath.workdps(60):
        pts = [mpmath.mpf(p) for p in pts]
        vals = [fn(p) for p in pts]
        for level in range(1, len(pts)):
            vals = [(vals[j + 1] - vals[j]) / (pts[j + level] - pts[j]) for j in range(len(vals) - 1)]
        return float(vals[0])


@pytest.mark.parametrize("d", [2, 3, 4, 5])
@pytest.mark.parametrize("k", [0, 2, 4, 6])
def test_fkd_is_iterated_primitive(k, d):
    f = fkd(k, d)
    a = np.array([0.7, 1.3, 2.9])
    # the (k/2)-th derivative returns a^{-d/2}
    assert np.allclose(f.derivative(k // 2, a), a ** (-d / 2), rtol=1e-12)


def test_fkd_rejects_bad_arguments():
    with pytest.raises(ValueError):
        fkd(3, 2)
    with pytest.raises(ValueError):
        fkd(2, 1)


@settings(max_examples=60, deadline=None)
@given(st.lists(positive, min_size=2, max_size=5, unique=True), st.sampled_from(range(len(SPECS))))
def test_matches_high_precision_recurrence(pts, which):
    assume(min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1 :]) >= 1e-2)
    f = SPECS[which]
    if f.kind == "exp":
        fn = lambda t: f.coef * mpmath.exp(f.scale * t)  # noqa: E731
    elif f.kind == "power":
        fn = lambda t: f.coef * t ** mpmath.mpf(f.p)  # noqa: E731
    else:
        fn = lambda t: f.coef * t ** mpmath.mpf(f.p) * mpmath.log(t)  # noqa: E731
    ref = mp_divdiff(fn, pts)
    assert dd_eval(f, pts) == pytest.approx(ref, rel=1e-9, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.lists(positive, min_size=1, max_size=5), st.randoms())
def test_permutation_symmetry(pts, rnd):
    f = fkd(2, 3)
    shuffled = list(pts)
    rnd.shuffle(shuffled)
    assert dd_eval(f, shuffled) == pytest.approx(dd_eval(f, pts), rel=1e-10)


@pytest.mark.parametrize("f", SPECS, ids=lambda f: f.label)
@pytest.mark.parametrize("n", range(5))
def test_confluent_value(f, n):
    alpha = 1.7
    exact = float(f.derivative(n, np.array([alpha]))[0]) / math.factorial(n)
    assert dd_eval(f, [alpha] * (n + 1)) == pytest.approx(exact, rel=1e-10)


@pytest.mark.parametrize("f", SPECS, ids=lambda f: f.label)
@pytest.mark.parametrize("n", range(1, 5))
def test_quadrature_oracle(f, n):
    rng = np.random.default_rng(n)
    for _ in range(4):
        pts = rng.uniform(0.3, 4.0, n + 1)
        assert dd_quadrature(f, pts) == pytest.approx(dd_eval(f, pts), rel=1e-8)


def test_nearly_confluent_points_are_continuous():
    f = fkd(2, 2)
    base = dd_eval(f, [1.0, 1.0, 2.0])
    for eps in (1e-3, 1e-6, 1e-9):
        assert dd_eval(f, [1.0, 1.0 + eps, 2.0]) == pytest.approx(base, rel=5 * eps + 1e-12)


def test_recursive_definition_agrees_for_spread_points():
    f = fkd(4, 3)
    pts = [0.5, 1.4, 2.8, 4.1]
    assert dd_recursive(f, pts) == pytest.approx(dd_eval(f, pts), rel=1e-10)


@pytest.mark.parametrize("p", [-4, -3, -1, 0, 1, 2, 4, 6])
@pytest.mark.parametrize("n", range(5))
def test_expand_power(p, n):
    rng = np.random.default_rng(abs(p) * 10 + n)
    pts = rng.uniform(0.5, 3.0, n + 1)
    ref = dd_eval(FunctionSpec.power(p), pts)
    assert dd_expand_power(p, n)(pts) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_expand_power_term_count():
    # h_{p-n} in n+1 variables has C(p, n) monomials
    assert len(dd_expand_power(5, 2)) == math.comb(5, 2)


def test_batch_shape():
    pts = np.random.default_rng(0).uniform(0.5, 2.0, (7, 3))
    out = dd_batch(fkd(2, 2), pts)
    assert out.shape == (7,)
    assert np.allclose(out, [dd_eval(fkd(2, 2), p) for p in pts])


def test_anchored_and_combo():
    base = fkd(2, 3)
    h = FunctionSpec.anchored(base, 1.0)
    a = 2.5
    assert dd_eval(h, [a]) == pytest.approx(dd_eval(base, [1.0, a]), rel=1e-12)
    combo = FunctionSpec.combo((2.0, fkd(0, 2)), (-1.0, fkd(2, 3)))
    pts = [0.8, 1.1, 2.0]
    expected = 2 * dd_eval(fkd(0, 2), pts) - dd_eval(fkd(2, 3), pts)
    assert dd_eval(combo, pts) == pytest.approx(expected, rel=1e-12)


def test_domain_and_quadrature_errors():
    with pytest.raises(DomainError):
        dd_quadrature(fkd(2, 3), [-1.0, 1.0])
    with pytest.raises(QuadratureError):
        dd_quadrature(FunctionSpec.power(-6), [1e-3, 5.0, 9.0], order=4, rtol=1e-14)
