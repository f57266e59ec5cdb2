"""Numerical multiple operator integrals on finite Hermitian matrices."""

from __future__ import annotations

import itertools
import math
from typing import Callable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .divdiff import DomainError, FunctionSpec, _simplex_rule, dd_batch, dd_expand_power, fkd
from .terms import Atom, MOIExpression

Symbol = Union[FunctionSpec, Callable[[np.ndarray], np.ndarray]]

# dense symbol tables beyond this many entries are refused
MAX_TABLE_ENTRIES = 60_000_000


class SpectralOperator:
    """Hermitian matrix together with its eigendecomposition."""

    def __init__(self, matrix, check: bool = True, tol: float = 1e-10):
        M = np.asarray(matrix.toarray() if sp.issparse(matrix) else matrix, dtype=complex)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("matrix must be square")
        herm = 0.5 * (M + M.conj().T)
        if check and np.linalg.norm(M - herm) > tol * max(np.linalg.norm(M), 1.0):
            raise ValueError("matrix is not Hermitian")
        w, Q = np.linalg.eigh(herm)
        self.matrix = herm
        self.eigenvalues = w
        self.eigenvectors = Q
        self._tables: dict = {}
        if check:
            res = np.linalg.norm((Q * w) @ Q.conj().T - herm)
            if res > tol * max(np.linalg.norm(herm), 1.0):
                raise ValueError(f"eigendecomposition residual {res:.2e} too large")

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def is_positive(self) -> bool:
        return bool(self.eigenvalues.min() > 0)

    def scaled(self, s: float) -> "SpectralOperator":
        out = object.__new__(SpectralOperator)
        out.matrix = s * self.matrix
        out.eigenvalues = s * self.eigenvalues
        out.eigenvectors = self.eigenvectors
        out._tables = {}
        return out

    def to_eig(self, V) -> np.ndarray:
        Q = self.eigenvectors
        V = V.toarray() if sp.issparse(V) else np.asarray(V)
        return Q.conj().T @ V @ Q

    def from_eig(self, W) -> np.ndarray:
        Q = self.eigenvectors
        return Q @ W @ Q.conj().T

    def function(self, f: Symbol) -> np.ndarray:
        vals = _symbol_table(self, f, 0)
        Q = self.eigenvectors
        return (Q * vals) @ Q.conj().T


class SparseOperator:
    """Sparse Hermitian matrix used through its resolvents only.

    Only the extremal eigenvalues are computed; functions of the matrix are
    applied to vectors by contour quadrature with one sparse LU factorisation
    per node, so no dense eigendecomposition is ever formed.
    """

    def __init__(self, matrix, check: bool = True, tol: float = 1e-10):
        M = sp.csc_matrix(matrix, dtype=complex)
        if M.shape[0] != M.shape[1]:
            raise ValueError("matrix must be square")
        if check and spla.norm(M - M.conj().T) > tol * max(spla.norm(M), 1.0):
            raise ValueError("matrix is not Hermitian")
        self.matrix = M
        if M.shape[0] <= 64:
            w = np.linalg.eigvalsh(M.toarray())
            self.lo, self.hi = float(w[0]), float(w[-1])
        else:
            lo = spla.eigsh(M, k=1, which="SA", return_eigenvectors=False, tol=1e-10)
            hi = spla.eigsh(M, k=1, which="LA", return_eigenvectors=False, tol=1e-10)
            self.lo, self.hi = float(lo[0]), float(hi[0])
        self._lu: dict = {}

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_positive(self) -> bool:
        return self.lo > 0

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([self.lo, self.hi])

    def resolvent_solvers(self, z: np.ndarray) -> list:
        key = tuple(np.round(z, 14))
        if key not in self._lu:
            eye = sp.identity(self.n, dtype=complex, format="csc")
            self._lu = {key: [spla.splu((zj * eye - self.matrix).tocsc()).solve for zj in z]}
        return self._lu[key]


def _symbol_table(x: SpectralOperator, f: Symbol, n: int) -> np.ndarray:
    lam = x.eigenvalues
    N = lam.size
    if N ** (n + 1) > MAX_TABLE_ENTRIES:
        raise MemoryError(
            f"symbol table with {N}^{n + 1} entries exceeds the configured cap; "
            "use moi_apply for large matrices"
        )
    key = (f, n) if isinstance(f, FunctionSpec) else None
    if key is not None and key in x._tables:
        return x._tables[key]
    grids = np.meshgrid(*([lam] * (n + 1)), indexing="ij")
    pts = np.stack(grids, axis=-1)
    if isinstance(f, FunctionSpec):
        table = dd_batch(f, pts)
    else:
        table = np.asarray(f(pts))
    if key is not None:
        x._tables[key] = table
    return table


def _check_shapes(x: SpectralOperator, V: Sequence) -> None:
    for j, Vj in enumerate(V):
        if Vj.shape != (x.n, x.n):
            raise ValueError(f"argument {j} has shape {Vj.shape}, expected {(x.n, x.n)}")


def moi_spectral(x: SpectralOperator, f: Symbol, V: Sequence) -> np.ndarray:
    """``T^x_phi(V_1, ..., V_n)`` with ``phi = f^{[n]}`` or an explicit symbol.

    ``f`` is either a :class:`FunctionSpec` (its ``n``-th divided difference
    is used) or a vectorised callable taking an array whose last axis holds
    ``(a_0, ..., a_n)``.
    """
    n = len(V)
    _check_shapes(x, V)
    if isinstance(f, FunctionSpec) and f.positive_domain and not x.is_positive:
        raise DomainError("symbol requires a positive spectrum")
    table = _symbol_table(x, f, n)
    if n == 0:
        return x.from_eig(np.diag(table.astype(complex)))
    W = [x.to_eig(Vj) for Vj in V]
    # contract table[p0..pn] * W1[p0,p1] * ... * Wn[p_{n-1},p_n]
    letters = "abcdefghijklmnopqrstuvw"[: n + 1]
    spec = letters + "," + ",".join(letters[j] + letters[j + 1] for j in range(n))
    out = np.einsum(spec + "->" + letters[0] + letters[n], table, *W, optimize=True)
    return x.from_eig(out)


def moi_algebraic(x: np.ndarray, p: int, V: Sequence, coef: float = 1.0) -> np.ndarray:
    """``T^x_{(a^p)^{[n]}}`` through the exact monomial expansion (no eigensolver)."""
    x = np.asarray(x, dtype=complex)
    expansion = dd_expand_power(p, len(V))
    inv = np.linalg.inv(x) if p < 0 else None
    cache: dict = {}

    def power(e):
        if e not in cache:
            base = x if e >= 0 else inv
            cache[e] = np.linalg.matrix_power(base, abs(e))
        return cache[e]

    out = np.zeros_like(x)
    for c, exps in expansion.terms:
        term = power(exps[0])
        for Vj, e in zip(V, exps[1:]):
            term = term @ np.asarray(Vj) @ power(e)
        out += float(c) * term
    return coef * out


# ---------------------------------------------------------------------------
# application to a vector for large matrices


def _contour(x: SpectralOperator, f: FunctionSpec, tol: float):
    """Nodes ``z_j``, weights ``w_j`` and values ``f(z_j)`` of a trapezoidal rule
    for ``(2 pi i)^{-1} \\oint f(z) g(z) dz`` around the spectrum.

    For a positive spectrum the circle is drawn in ``u = log z``: the symbols
    in use are entire in ``u`` and the integrand's only other poles sit at
    ``log(lambda) + 2 pi i k``, so the rule converges much faster than a
    circle in ``z`` pinched between the spectrum and the origin.
    """
    lam = x.eigenvalues
    lo, hi = float(lam.min()), float(lam.max())
    if lo > 0 and _has_log_extension(f):
        c = 0.5 * (math.log(lo) + math.log(hi))
        inner = max(0.5 * (math.log(hi) - math.log(lo)), 1e-3)
        if inner < math.pi:
            r = math.sqrt(inner * 2 * math.pi)
            M = _node_count(math.sqrt(inner / (2 * math.pi)), tol)
            e = np.exp(2j * np.pi * np.arange(M) / M)
            u = c + r * e
            z = np.exp(u)
            # dz/(2 pi i) = e^u du/(2 pi i), du = i r e^{it} dt, dt = 2 pi / M
            return z, z * r * e / M, f_of_log(f, u)
    if f.positive_domain and lo <= 0:
        raise DomainError("symbol requires a positive spectrum")
    c = 0.5 * (lo + hi)
    inner = max(0.5 * (hi - lo), 1e-3 * max(abs(c), 1.0))
    if f.positive_domain:
        r = math.sqrt(inner * c)
        q = max(inner / r, r / c)
    else:
        r = inner + 1.0
        q = inner / r
    M = _node_count(q, tol)
    e = np.exp(2j * np.pi * np.arange(M) / M)
    z = c + r * e
    return z, r * e / M, f_complex(f, z)


def _node_count(q: float, tol: float) -> int:
    M = int(math.ceil(math.log(tol) / math.log(q))) + 16
    return M + M % 2


def moi_apply(
    x: SpectralOperator,
    f: FunctionSpec,
    V: Sequence,
    v: np.ndarray,
    tol: float = 1e-14,
) -> np.ndarray:
    """``T^x_{f^{[n]}}(V_1, ..., V_n) v`` without forming the symbol table.

    Uses the Cauchy representation of the divided difference on a contour
    enclosing the spectrum, ``f^{[n]}(a) = (2 pi i)^{-1} \\oint f(z) prod
    (z - a_j)^{-1} dz``, so the operator factorises into resolvents.
    Sparse ``V_j`` stay sparse.
    """
    z, w, fz = _contour(x, f, tol)
    v = np.asarray(v, dtype=complex).reshape(-1)
    if isinstance(x, SparseOperator):
        out = np.zeros(x.n, dtype=complex)
        for solve, c in zip(x.resolvent_solvers(z), w * fz):
            y = solve(v)
            for Vj in reversed(V):
                y = solve(Vj @ y)
            out += c * y
        return out
    Q = x.eigenvectors
    lam = x.eigenvalues
    R = 1.0 / (z[None, :] - lam[:, None])  # (N, M) resolvent in eigenbasis
    y = (Q.conj().T @ v)[:, None] * R
    for Vj in reversed(V):
        y = Q @ y
        y = Vj @ y
        y = (Q.conj().T @ y) * R
    return Q @ (y @ (w * fz))


def _has_log_extension(f: FunctionSpec) -> bool:
    if f.kind == "combo":
        return all(_has_log_extension(s) for _, s in f.parts)
    return f.kind in ("power", "powerlog", "exp")


def f_of_log(f: FunctionSpec, u: np.ndarray) -> np.ndarray:
    """``f(e^u)`` continued analytically in ``u`` (no branch cut)."""
    u = np.asarray(u, dtype=complex)
    if f.kind == "power":
        return f.coef * np.exp(f.p * u)
    if f.kind == "powerlog":
        return f.coef * np.exp(f.p * u) * u
    if f.kind == "exp":
        return f.coef * np.exp(f.scale * np.exp(u))
    if f.kind == "combo":
        return sum(c * f_of_log(s, u) for c, s in f.parts)
    raise TypeError(f"no entire extension in log variables for kind {f.kind!r}")


def f_complex(f: FunctionSpec, z: np.ndarray) -> np.ndarray:
    """``f`` on complex arguments, principal branch of ``log``."""
    z = np.asarray(z, dtype=complex)
    if f.kind in ("power", "powerlog"):
        return f_of_log(f, np.log(z))
    if f.kind == "exp":
        return f.coef * np.exp(f.scale * z)
    if f.kind == "combo":
        return sum(c * f_complex(s, z) for c, s in f.parts)
    raise TypeError(f"no complex extension for kind {f.kind!r}")


# ---------------------------------------------------------------------------
# simplex functional calculus


def simplex_fm(xi_norm_sq: float, x: SpectralOperator, V: Sequence, quad_order: int = 24) -> np.ndarray:
    """Integral over ``0 <= s_m <= ... <= s_1 <= 1`` of
    ``e^{(s_1-1)X} V_1 e^{(s_2-s_1)X} ... V_m e^{-s_m X}`` with ``X = |xi|^2 x``.

    The gaps ``(1-s_1, s_1-s_2, ..., s_m)`` are barycentric coordinates on the
    standard simplex, which is integrated with a collapsed Gauss-Legendre rule.
    """
    m = len(V)
    _check_shapes(x, V)
    lam = xi_norm_sq * x.eigenvalues
    if m == 0:
        return x.from_eig(np.diag(np.exp(-lam).astype(complex)))
    W = [x.to_eig(Vj) for Vj in V]
    bary, weights = _simplex_rule(m, quad_order)
    # E[q, j, p] = exp(-gap_j * lam_p)
    E = np.exp(-bary[:, :, None] * lam[None, None, :])
    acc = E[:, 0, :, None] * W[0][None, :, :]
    for j in range(1, m):
        acc = (acc * E[:, j, None, :]) @ W[j]
    acc = acc * E[:, m, None, :]
    return x.from_eig(np.tensordot(weights, acc, axes=1))


def simplex_fm_with_error(xi_norm_sq, x, V, quad_order=24):
    a = simplex_fm(xi_norm_sq, x, V, quad_order)
    b = simplex_fm(xi_norm_sq, x, V, quad_order + 8)
    return a, float(np.linalg.norm(a - b))


# ---------------------------------------------------------------------------
# commutator identities


def check_commutator_identities(
    x: SpectralOperator, y: np.ndarray, V: Sequence, f: FunctionSpec
) -> float:
    """Largest Frobenius deviation over the insertion identities.

    Checks, for every insertion point ``j`` of ``y``, the interior, left and
    right moves of ``y`` through ``T^x_{f^{[n]}}`` against the MOI of order
    ``n+1`` carrying ``[x, y]``, plus the functional-calculus case.
    """
    X = x.matrix
    y = np.asarray(y, dtype=complex)
    C = X @ y - y @ X
    V = [np.asarray(Vj, dtype=complex) for Vj in V]
    n = len(V)
    devs = []
    base = moi_spectral(x, f, V)
    for j in range(1, n):
        left = V[:j] + [y @ V[j]] + V[j + 1 :]
        right = V[: j - 1] + [V[j - 1] @ y] + V[j:]
        lhs = moi_spectral(x, f, left) - moi_spectral(x, f, right)
        rhs = moi_spectral(x, f, V[:j] + [C] + V[j:])
        devs.append(np.linalg.norm(lhs - rhs))
    if n >= 1:
        lhs = moi_spectral(x, f, [y @ V[0]] + V[1:]) - y @ base
        devs.append(np.linalg.norm(lhs - moi_spectral(x, f, [C] + V)))
        lhs = base @ y - moi_spectral(x, f, V[:-1] + [V[-1] @ y])
        devs.append(np.linalg.norm(lhs - moi_spectral(x, f, V + [C])))
    fx = x.function(f)
    devs.append(np.linalg.norm(fx @ y - y @ fx - moi_spectral(x, f, [C])))
    return float(max(devs))


# ---------------------------------------------------------------------------
# realising symbolic expressions


Realizer = Callable[[Atom, Mapping[int, int]], object]


def _assignments(labels, d):
    for values in itertools.product(range(d), repeat=len(labels)):
        yield dict(zip(labels, values))


def eval_expression(
    expr: MOIExpression,
    realize: Realizer,
    x: SpectralOperator,
    d: int,
    functions: Mapping[str, FunctionSpec] | None = None,
    vector: np.ndarray | None = None,
    include_prefactor: bool = True,
    free_values: Mapping[int, int] | None = None,
):
    """Numerically evaluate ``expr`` with every summed label running over ``0..d-1``.

    ``realize(atom, values)`` returns the matrix of the atom once its labels
    are fixed by ``values``.  With ``vector`` given the result is the vector
    ``expr(x) @ vector``, computed through :func:`moi_apply`; otherwise a dense
    matrix from :func:`moi_spectral`.
    """
    if int(d) != d or d < 2:
        raise ValueError("d must be an integer >= 2")
    functions = dict(functions or {})
    sym = expr.symbol
    if sym.k is not None:
        f = functions.get(sym.name) or fkd(sym.k, d)
    elif sym.name in functions:
        f = functions[sym.name]
    else:
        raise KeyError(f"no function bound to symbol {sym.name!r}")
    free_values = dict(free_values or {})
    total = None
    for term in expr:
        c = float(term.coeff(d))
        labels = sorted({l for a in term.args for l in a.labels() if l not in expr.free})
        for assign in _assignments(labels, d):
            values = {**free_values, **assign}
            mats = [realize(a, values) for a in term.args]
            if vector is None:
                val = moi_spectral(x, f, [_dense(m) for m in mats])
            else:
                val = moi_apply(x, f, mats, vector)
            total = c * val if total is None else total + c * val
    if total is None:
        total = np.zeros(x.n, complex) if vector is not None else np.zeros((x.n, x.n), complex)
    if include_prefactor:
        total = total * expr.sign * math.pi ** (expr.pi_power * d / 2)
    return total


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)
