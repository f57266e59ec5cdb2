import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatmoi.divdiff import FunctionSpec
from heatmoi.modular import (
    H0,
    H0_SYMBOL,
    K0,
    K0_SYMBOL,
    K0d,
    K0d_from_Phi,
    K0d_symbol,
    Phi,
    Phi_K,
    Phi_alt,
    Psi,
    Psi_KH,
    Psi_alt,
    f_function,
    g_function,
    phi_at_unit,
    modular_apply,
    primitive_pair_gap,
    symbol_from,
    write_k0d_grid,
)
from heatmoi.moi import SpectralOperator, moi_spectral

GRID = np.geomspace(0.1, 10.0, 20)
A0, A1 = np.meshgrid(GRID, GRID)
DIMS = [2, 3, 4, 6]


def relmax(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


@pytest.mark.parametrize("d", DIMS)
def test_phi_at_unit_vanishes(d):
    assert np.abs(phi_at_unit(GRID, d)).max() <= 1e-10


@pytest.mark.parametrize("d", DIMS)
def test_phi_forms_agree(d):
    assert relmax(Phi(A0, A1, d), Phi_alt(A0, A1, d)) <= 1e-10


@pytest.mark.parametrize("d", DIMS)
def test_psi_forms_agree(d):
    assert max(relmax(Psi(A0, m, A1, d), Psi_alt(A0, m, A1, d)) for m in GRID) <= 1e-10


@pytest.mark.parametrize("d", DIMS)
def test_primitive_pair(d):
    gap = primitive_pair_gap(A0, A1, f_function(d), g_function(d))
    assert float(np.max(np.abs(gap) / np.maximum(1.0, np.abs(f_function(d)(A0))))) <= 1e-8


def test_modular_forms_at_d2():
    assert relmax(Phi(A0, A1, 2), Phi_K(K0, A0, A1)) <= 1e-8
    assert max(relmax(Psi(A0, m, A1, 2), Psi_KH(K0, H0, A0, m, A1)) for m in GRID) <= 1e-8


def test_k0_values():
    assert K0(0.0) == pytest.approx(1 / 3, rel=1e-14)
    s = np.linspace(-10, 10, 401)
    assert np.allclose(K0(s), K0(-s), rtol=1e-13, atol=1e-15)
    # smooth across the removable singularity
    assert K0(1e-7) == pytest.approx(1 / 3, rel=1e-12)


def test_k0d_special_dimensions():
    s = np.linspace(-10.0, 10.0, 2001)
    assert np.abs(K0d(s, 4)).max() <= 1e-12
    assert np.abs(K0d(s, 2 + 1e-6) - K0(s)).max() <= 1e-4


@pytest.mark.parametrize("d", [2.5, 3, 5, 7])
def test_k0d_via_phi(d):
    s = np.linspace(-6, 6, 121)
    assert np.allclose(K0d(s, d), K0d_from_Phi(s, d), rtol=1e-10, atol=1e-13)


def test_h0_is_antisymmetric():
    S, T = np.meshgrid(np.linspace(-3, 3, 13), np.linspace(-3, 3, 13))
    assert np.abs(H0(S, T) + H0(T, S)).max() <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4))
def test_h0_continuous_near_singular_lines(s, t):
    eps = 1e-6
    assert H0(s + eps, t) == pytest.approx(H0(s, t), rel=1e-4, abs=1e-4)


def _modular_superop(h):
    """``log Delta`` with ``Delta(V) = e^{-h} V e^{h}`` acting on column-major vec(V)."""
    n = h.shape[0]
    eye = np.eye(n)
    return np.kron(h.T, eye) - np.kron(eye, h)


def _apply_superop_fn(L, fn, V):
    w, R = np.linalg.eigh(L)
    vec = V.reshape(-1, order="F")
    out = R @ (fn(w) * (R.conj().T @ vec))
    return out.reshape(V.shape, order="F")


def test_modular_functional_calculus_matches_superoperator():
    rng = np.random.default_rng(3)
    H = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = 0.3 * (H + H.conj().T)
    w, Q = np.linalg.eigh(h)
    x = SpectralOperator(Q @ np.diag(np.exp(w)) @ Q.conj().T)
    V = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    ref = _apply_superop_fn(_modular_superop(h), K0, V)
    assert np.linalg.norm(modular_apply(K0_SYMBOL, x, V) - ref) <= 1e-12 * np.linalg.norm(ref)
    # Phi = K0(nabla) applied to the first divided difference of log
    lhs = moi_spectral(x, symbol_from(Phi, 2), [V])
    logV = moi_spectral(x, FunctionSpec.log(), [V])
    rhs = 0.5 * _apply_superop_fn(_modular_superop(h), K0, logV)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)
    d4 = modular_apply(K0d_symbol(4), x, V)
    assert np.linalg.norm(d4) <= 1e-12 * np.linalg.norm(V)


def test_modular_apply_checks_arity():
    x = SpectralOperator(np.diag([1.0, 2.0]))
    with pytest.raises(ValueError):
        modular_apply(H0_SYMBOL, x, np.eye(2))


def test_k0d_grid_csv(tmp_path):
    path = tmp_path / "k0d.csv"
    write_k0d_grid(path, num=11)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 6 * 11
    flagged = {float(r["d"]) for r in rows if r["extrapolated"] == "1"}
    assert flagged == {0.01, 1.0}
    assert all(np.isfinite(float(r["K0d"])) for r in rows)


def test_conformal_symbols_in_modular_form():
    """T_Phi(W) + sum T_Psi(V, V) == K0(nabla)(h-Laplacian)/2 + sum H0(nabla_1, nabla_2)(D h, D h)/4
    for x = e^h, with the log change of variables supplying the h-side arguments."""
    rng = np.random.default_rng(11)

    def herm(n):
        B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        return B + B.conj().T

    h = 0.25 * herm(6)
    w, Q = np.linalg.eigh(h)
    x = SpectralOperator(Q @ np.diag(np.exp(w)) @ Q.conj().T)
    W, Vs = herm(6), [herm(6), herm(6)]
    log = FunctionSpec.log()

    lhs = moi_spectral(x, symbol_from(Phi, 2), [W])
    for V in Vs:
        lhs = lhs + moi_spectral(x, symbol_from(Psi, 2), [V, V])

    lap_h = moi_spectral(x, log, [W]) + 2 * sum(moi_spectral(x, log, [V, V]) for V in Vs)
    rhs = 0.5 * modular_apply(K0_SYMBOL, x, lap_h)
    for V in Vs:
        Dh = moi_spectral(x, log, [V])
        rhs = rhs + 0.25 * modular_apply(H0_SYMBOL, x, Dh, Dh)
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)
