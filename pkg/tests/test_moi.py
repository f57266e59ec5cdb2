import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from heatmoi.divdiff import DomainError, FunctionSpec, fkd
from heatmoi.moi import (
    SparseOperator,
    SpectralOperator,
    check_commutator_identities,
    eval_expression,
    moi_algebraic,
    moi_apply,
    moi_spectral,
    simplex_fm,
    simplex_fm_with_error,
)
from heatmoi.recursion import local_invariant

rng = np.random.default_rng(7)


def rpos(n, shift=0.5):
    B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return B @ B.conj().T / n + shift * np.eye(n)


def rmat(n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_order_zero_is_functional_calculus():
    x = rpos(5)
    S = SpectralOperator(x)
    assert rel(moi_spectral(S, FunctionSpec.exp(-1.0), []), sla.expm(-x)) < 1e-12
    assert rel(moi_spectral(S, FunctionSpec.power(-1), []), np.linalg.inv(x)) < 1e-12


def test_first_order_is_frechet_derivative():
    x, V = rpos(5), rmat(5)
    V = V + V.conj().T
    S = SpectralOperator(x)
    h = 1e-5
    fd = (sla.expm(-(x + h * V)) - sla.expm(-(x - h * V))) / (2 * h)
    assert rel(moi_spectral(S, FunctionSpec.exp(-1.0), [V]), fd) < 1e-8


@pytest.mark.parametrize("m", [1, 2, 3])
def test_simplex_oracle(m):
    S = SpectralOperator(rpos(6))
    V = [rmat(6) for _ in range(m)]
    ref = (-1) ** m * moi_spectral(S, FunctionSpec.exp(-1.0), V)
    assert rel(simplex_fm(1.0, S, V), ref) < 1e-6
    val, err = simplex_fm_with_error(1.0, S, V)
    assert err < 1e-8 * np.linalg.norm(val)


@pytest.mark.parametrize("f", [fkd(2, 3), fkd(4, 2), FunctionSpec.exp(-0.5)], ids=str)
@pytest.mark.parametrize("m", [1, 2, 3])
def test_commutator_identities(f, m):
    H = rmat(5)
    S = SpectralOperator(H + H.conj().T + 8 * np.eye(5))
    assert check_commutator_identities(S, rmat(5), [rmat(5) for _ in range(m)], f) < 1e-10


def test_multilinearity():
    S = SpectralOperator(rpos(4))
    f = fkd(2, 3)
    V1, V2, W = rmat(4), rmat(4), rmat(4)
    lhs = moi_spectral(S, f, [2 * V1 - 3j * V2, W])
    rhs = 2 * moi_spectral(S, f, [V1, W]) - 3j * moi_spectral(S, f, [V2, W])
    assert rel(lhs, rhs) < 1e-13


def test_adjoint_reverses_arguments():
    S = SpectralOperator(rpos(4))
    f = fkd(4, 3)
    V = [rmat(4) for _ in range(3)]
    lhs = moi_spectral(S, f, V).conj().T
    rhs = moi_spectral(S, f, [v.conj().T for v in reversed(V)])
    assert rel(lhs, rhs) < 1e-13


@pytest.mark.parametrize("p", [-3, -1, 2, 3])
def test_algebraic_powers(p):
    x = rpos(5)
    V = [rmat(5) for _ in range(2)]
    assert rel(moi_algebraic(x, p, V), moi_spectral(SpectralOperator(x), FunctionSpec.power(p), V)) < 1e-10


@pytest.mark.parametrize("f", [fkd(2, 3), fkd(4, 2), fkd(2, 2), fkd(0, 3)], ids=str)
@pytest.mark.parametrize("m", range(4))
def test_contour_application(f, m):
    S = SpectralOperator(rpos(6))
    V = [rmat(6) for _ in range(m)]
    v = rmat(6)[:, 0]
    assert rel(moi_apply(S, f, V, v), moi_spectral(S, f, V) @ v) < 1e-10


def test_sparse_operator_route_matches_dense():
    x = rpos(80, shift=1.0)
    V = [sp.csr_matrix(rmat(80)) for _ in range(2)]
    v = rmat(80)[:, 0]
    f = fkd(2, 3)
    dense = moi_spectral(SpectralOperator(x), f, [m.toarray() for m in V]) @ v
    assert rel(moi_apply(SparseOperator(x), f, V, v), dense) < 1e-10


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        SpectralOperator(rmat(4))


def test_domain_checked():
    H = rmat(4)
    S = SpectralOperator(H + H.conj().T)  # indefinite
    with pytest.raises(DomainError):
        moi_spectral(S, fkd(2, 3), [rmat(4)])


def _scalar_realizer(c, mu):
    def realize(at, values):
        if at.derivs:
            return np.zeros((1, 1))
        if at.name == "x":
            return np.array([[c]])
        return np.array([[mu if at.label < 0 else 0.0]])

    return realize


@pytest.mark.parametrize("d", [2, 3, 4])
def test_constant_zeroth_invariant(d):
    c = 1.7
    val = eval_expression(local_invariant(0), _scalar_realizer(c, 0.0), SpectralOperator(np.array([[c]])), d)
    assert val[0, 0].real == pytest.approx(math.pi ** (d / 2) * c ** (-d / 2), rel=1e-13)


def test_constant_second_invariant():
    c, mu = 1.7, 0.4
    val = eval_expression(local_invariant(2), _scalar_realizer(c, mu), SpectralOperator(np.array([[c]])), 2)
    assert val[0, 0].real == pytest.approx(-math.pi * mu / c, rel=1e-13)


def test_vector_and_dense_evaluation_agree():
    n = 6
    x = rpos(n, 1.0)
    mats = {("x", ()): x, ("x", (0,)): rmat(n), ("x", (1,)): rmat(n), ("x", (0, 0)): rmat(n),
            ("x", (0, 1)): rmat(n), ("x", (1, 1)): rmat(n)}

    def realize(at, values):
        ds = tuple(sorted(values[l] for l in at.derivs))
        if at.name == "x":
            return mats[("x", ds)]
        return np.zeros((n, n))

    S = SpectralOperator(x)
    v = rmat(n)[:, 0]
    expr = local_invariant(2)
    dense = eval_expression(expr, realize, S, 2) @ v
    vec = eval_expression(expr, realize, S, 2, vector=v)
    assert rel(vec, dense) < 1e-10
