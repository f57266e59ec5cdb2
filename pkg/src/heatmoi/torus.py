"""Truncated left-regular representation of the non-commutative torus,
direct heat traces and fitting of their small-time coefficients."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from sklearn.base import BaseEstimator, RegressorMixin

from .divdiff import FunctionSpec, dd_batch
from .moi import SparseOperator, SpectralOperator, _has_log_extension, eval_expression, moi_apply
from .terms import Atom, MOIExpression

Mode = tuple[int, ...]


class ThetaMatrix:
    """Real antisymmetric ``d x d`` deformation matrix."""

    def __init__(self, entries, tol: float = 1e-14):
        M = np.array(entries, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("theta must be a square matrix")
        if np.max(np.abs(M + M.T), initial=0.0) > tol:
            raise ValueError("theta must be antisymmetric")
        self.entries = M
        self.entries.setflags(write=False)

    @classmethod
    def zero(cls, d: int) -> "ThetaMatrix":
        return cls(np.zeros((d, d)))

    @classmethod
    def two_dim(cls, theta: float) -> "ThetaMatrix":
        return cls([[0.0, theta], [-theta, 0.0]])

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def __repr__(self) -> str:
        return f"ThetaMatrix({self.entries.tolist()})"


def mult_phase(m: Sequence[int], n: Sequence[int], theta: ThetaMatrix) -> complex:
    """Phase ``phi`` with ``U^m U^n = phi * U^{m+n}`` for ``U^n = U_1^{n_1}...U_d^{n_d}``.

    Sorting the word ``U^m U^n`` moves each ``U_k^{n_k}`` left past every
    ``U_l^{m_l}`` with ``l > k``, collecting ``exp(2 pi i theta_{lk} m_l n_k)``.
    """
    T = theta.entries
    d = T.shape[0]
    s = 0.0
    for k in range(d):
        for l in range(k + 1, d):
            s += T[l, k] * m[l] * n[k]
    return complex(np.exp(2j * np.pi * s))


def _phase_array(m: np.ndarray, n: np.ndarray, theta: ThetaMatrix) -> np.ndarray:
    low = np.tril(theta.entries, -1)  # entries theta_{lk} with l > k
    return np.exp(2j * np.pi * np.einsum("...l,lk,...k->...", m, low, n))


@dataclass
class FourierElement:
    """Finite Fourier series ``sum_n c_n U^n``."""

    coeffs: dict
    d: int

    def __post_init__(self):
        clean = {}
        for n, c in self.coeffs.items():
            n = tuple(int(v) for v in n)
            if len(n) != self.d:
                raise ValueError(f"mode {n} does not have length {self.d}")
            if c != 0:
                clean[n] = complex(c)
        self.coeffs = clean

    @classmethod
    def constant(cls, c, d: int) -> "FourierElement":
        return cls({(0,) * d: c}, d)

    @classmethod
    def unitary(cls, k: int, d: int, power: int = 1) -> "FourierElement":
        n = [0] * d
        n[k] = power
        return cls({tuple(n): 1.0}, d)

    @classmethod
    def from_vector(cls, v: np.ndarray, rep: "TruncatedRep", tol: float = 0.0) -> "FourierElement":
        return cls({n: c for n, c in zip(rep.modes_list, v) if abs(c) > tol}, rep.d)

    # -- algebra ----------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, FourierElement):
            other = FourierElement.constant(other, self.d)
        out = dict(self.coeffs)
        for n, c in other.coeffs.items():
            out[n] = out.get(n, 0) + c
        return FourierElement(out, self.d)

    __radd__ = __add__

    def __neg__(self):
        return FourierElement({n: -c for n, c in self.coeffs.items()}, self.d)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, s) -> "FourierElement":
        return FourierElement({n: s * c for n, c in self.coeffs.items()}, self.d)

    def __mul__(self, s):
        if isinstance(s, FourierElement):
            raise TypeError("use product(other, theta) for algebra multiplication")
        return self.scale(s)

    __rmul__ = __mul__

    def product(self, other: "FourierElement", theta: ThetaMatrix) -> "FourierElement":
        out: dict = {}
        for m, b in self.coeffs.items():
            for n, c in other.coeffs.items():
                key = tuple(i + j for i, j in zip(m, n))
                out[key] = out.get(key, 0) + b * c * mult_phase(m, n, theta)
        return FourierElement(out, self.d)

    def adjoint(self, theta: ThetaMatrix) -> "FourierElement":
        # (U^n)^* = (U^n)^{-1} = conj(phi(-n, n)) U^{-n}
        out = {}
        for n, c in self.coeffs.items():
            neg = tuple(-v for v in n)
            out[neg] = out.get(neg, 0) + np.conj(c) * np.conj(mult_phase(neg, n, theta))
        return FourierElement(out, self.d)

    def is_self_adjoint(self, theta: ThetaMatrix, tol: float = 1e-12) -> bool:
        diff = self - self.adjoint(theta)
        return all(abs(c) <= tol for c in diff.coeffs.values())

    def derivative(self, i: int, times: int = 1) -> "FourierElement":
        return FourierElement({n: c * n[i] ** times for n, c in self.coeffs.items()}, self.d)

    def derivatives(self, idx: Iterable[int]) -> "FourierElement":
        out = self
        for i in idx:
            out = out.derivative(i)
        return out

    def laplacian(self) -> "FourierElement":
        return FourierElement(
            {n: c * sum(v * v for v in n) for n, c in self.coeffs.items()}, self.d
        )

    @property
    def support_radius(self) -> int:
        return max((max(abs(v) for v in n) for n in self.coeffs), default=0)

    def norm(self) -> float:
        """Sum of absolute coefficients, a bound for the operator norm."""
        return float(sum(abs(c) for c in self.coeffs.values()))

    def vector(self, rep: "TruncatedRep") -> np.ndarray:
        v = np.zeros(rep.dim, dtype=complex)
        for n, c in self.coeffs.items():
            j = rep.index.get(n)
            if j is None:
                raise ValueError(f"mode {n} lies outside the truncation")
            v[j] = c
        return v


def tau(z: FourierElement) -> complex:
    """The trace: the coefficient of ``U^0``."""
    return z.coeffs.get((0,) * z.d, 0j)


class TruncatedRep:
    """Basis ``U^n`` with ``|n|_inf <= N`` of ``L_2`` of the torus."""

    def __init__(self, N: int, theta: ThetaMatrix):
        if N < 0:
            raise ValueError("N must be non-negative")
        self.N = int(N)
        self.theta = theta
        self.d = theta.d
        rng = range(-self.N, self.N + 1)
        self.modes = np.array(list(itertools.product(rng, repeat=self.d)), dtype=int)
        self.modes_list = [tuple(int(v) for v in n) for n in self.modes]
        self.index = {n: j for j, n in enumerate(self.modes_list)}
        self._D = [sp.diags(self.modes[:, i].astype(float)).tocsr() for i in range(self.d)]

    @property
    def dim(self) -> int:
        return self.modes.shape[0]

    def flat_index(self, modes: np.ndarray) -> np.ndarray:
        """Basis position of each row of ``modes`` (row-major over ``[-N, N]^d``)."""
        side = 2 * self.N + 1
        out = np.zeros(modes.shape[:-1], dtype=np.int64)
        for k in range(self.d):
            out = out * side + (modes[..., k] + self.N)
        return out

    def D(self, i: int) -> sp.csr_matrix:
        return self._D[i]

    def laplacian(self) -> sp.csr_matrix:
        return sp.diags((self.modes**2).sum(axis=1).astype(float)).tocsr()

    def e0(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index[(0,) * self.d]] = 1.0
        return v

    def interior(self, radius: int) -> np.ndarray:
        return np.flatnonzero(np.abs(self.modes).max(axis=1) <= radius)

    def element(self, v: np.ndarray, tol: float = 0.0) -> FourierElement:
        return FourierElement.from_vector(v, self, tol)


def left_mult_matrix(b: FourierElement, rep: TruncatedRep) -> sp.csr_matrix:
    """Compression of ``lambda_l(b)`` to the truncated basis."""
    if b.d != rep.d:
        raise ValueError("dimension mismatch")
    if not b.coeffs:
        return sp.csr_matrix((rep.dim, rep.dim), dtype=complex)
    ms = np.array(list(b.coeffs), dtype=int)
    cs = np.array(list(b.coeffs.values()), dtype=complex)
    reach = np.abs(ms).max(axis=1) <= 2 * rep.N
    ms, cs = ms[reach], cs[reach]
    if ms.size == 0:
        return sp.csr_matrix((rep.dim, rep.dim), dtype=complex)
    n = rep.modes
    rows, cols, vals = [], [], []
    chunk = max(1, 4_000_000 // rep.dim)
    for s in range(0, len(ms), chunk):
        m = ms[s : s + chunk, None, :]
        target = m + n[None, :, :]
        inside = np.abs(target).max(axis=2) <= rep.N
        k, src = np.nonzero(inside)
        rows.append(rep.flat_index(target[k, src]))
        cols.append(src)
        vals.append(cs[s : s + chunk][k] * _phase_array(ms[s : s + chunk][k], n[src], rep.theta))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(rep.dim, rep.dim),
    )


def build_P(
    x: FourierElement,
    a_vec: Sequence[FourierElement] | None,
    a: FourierElement | None,
    rep: TruncatedRep,
    check: bool = True,
) -> sp.csr_matrix:
    """``lambda(x) Delta + sum_i lambda(a_i) D_i + lambda(a)`` on the truncation."""
    Lx = left_mult_matrix(x, rep)
    if check:
        lo = SparseOperator(Lx).lo
        if lo <= 0:
            raise ValueError(f"x has non-positive truncated spectrum (min {lo:.3e})")
    P = Lx @ rep.laplacian()
    for i, ai in enumerate(a_vec or ()):
        if ai is not None and ai.coeffs:
            P = P + left_mult_matrix(ai, rep) @ rep.D(i)
    if a is not None and a.coeffs:
        P = P + left_mult_matrix(a, rep)
    return P.tocsr()


class HeatTrace:
    """Spectral data of a truncated ``P`` for evaluating ``Tr(lambda(y) e^{-tP})``.

    A Hermitian ``P`` is diagonalised with ``eigh``; otherwise the general
    eigendecomposition is used, and with ``y = 1`` only the eigenvalues are
    needed because the trace of ``e^{-tP}`` is the sum of ``e^{-t mu_j}``.
    With ``symmetrize`` the Hermitian part is used instead.
    """

    def __init__(self, Pmat, y_matrix=None, symmetrize: bool = False, herm_tol: float = 1e-12):
        if sp.issparse(Pmat) and y_matrix is None:
            off = Pmat - sp.diags(Pmat.diagonal())
            if off.count_nonzero() == 0:
                self.asymmetry = 0.0
                self.eigenvalues = np.asarray(Pmat.diagonal())
                self.weights = None
                return
        P = Pmat.toarray() if sp.issparse(Pmat) else np.asarray(Pmat)
        self.asymmetry = float(np.linalg.norm(P - P.conj().T))
        hermitian = symmetrize or self.asymmetry <= herm_tol * max(np.linalg.norm(P), 1.0)
        Y = None if y_matrix is None else (
            y_matrix.toarray() if sp.issparse(y_matrix) else np.asarray(y_matrix)
        )
        if hermitian:
            w, R = np.linalg.eigh(0.5 * (P + P.conj().T))
            self.weights = None if Y is None else np.einsum("ij,ik,kj->j", R.conj(), Y, R)
        elif Y is None:
            w = sla.eigvals(P)
            self.weights = None
        else:
            w, R = sla.eig(P)
            self.weights = np.einsum("ij,jk,ki->i", np.linalg.inv(R), Y, R)
        self.eigenvalues = w

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t <= 0):
            raise ValueError("t must be positive")
        E = np.exp(-np.outer(t, self.eigenvalues))
        return E.sum(axis=1) if self.weights is None else E @ self.weights


def heat_trace(Pmat, y: FourierElement | None, t, rep: TruncatedRep | None = None, symmetrize=False):
    """``Tr(lambda(y) e^{-t P})`` for a scalar or array of ``t``."""
    Y = None
    if y is not None and not (len(y.coeffs) == 1 and y.coeffs.get((0,) * y.d) == 1):
        if rep is None:
            raise ValueError("a representation is needed for non-trivial y")
        Y = left_mult_matrix(y, rep)
    out = HeatTrace(Pmat, Y, symmetrize)(t)
    return out[0] if np.ndim(t) == 0 else out


def flat_trace_series(c: float, mu: float, N: int, d: int, t) -> np.ndarray:
    """Exact truncated trace for ``x = c``, ``a = mu``, ``theta = 0``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = np.arange(-N, N + 1)
    one = np.exp(-np.outer(t, c * n**2)).sum(axis=1)
    return one**d * np.exp(-t * mu)


# ---------------------------------------------------------------------------
# fitting


class IllConditionedFit(RuntimeError):
    pass


def _design(t: np.ndarray, d: int, orders: Sequence[int]) -> np.ndarray:
    return np.stack([t ** ((k - d) / 2) for k in orders], axis=1)


@dataclass
class FitResult:
    orders: tuple
    coefficients: np.ndarray
    residual: float
    condition: float


def fit_invariants(samples, d: int, orders: Sequence[int], max_condition: float = 1e12) -> FitResult:
    """Least squares for ``trace(t) ~ sum_k c_k t^{(k-d)/2}``.

    Columns are scaled to unit norm before solving; the condition number of
    the scaled design is reported and a :class:`IllConditionedFit` raised
    above ``max_condition``.
    """
    arr = np.asarray(samples)
    t = np.asarray(arr[:, 0].real, dtype=float)
    y = np.asarray(arr[:, 1])
    A = _design(t, d, orders)
    scale = np.linalg.norm(A, axis=0)
    As = A / scale
    cond = float(np.linalg.cond(As))
    if cond > max_condition:
        raise IllConditionedFit(f"design matrix condition number {cond:.3e}")
    sol, *_ = np.linalg.lstsq(As, y, rcond=None)
    coef = sol / scale
    resid = float(np.linalg.norm(A @ coef - y) / max(np.linalg.norm(y), 1e-300))
    return FitResult(tuple(orders), coef, resid, cond)


class HeatTraceFitter(RegressorMixin, BaseEstimator):
    """Estimator fitting small-time heat-trace coefficients.

    ``X`` holds the times ``t`` (shape ``(n,)`` or ``(n, 1)``), ``y`` the traces.
    After :meth:`fit`, ``coef_[j]`` estimates the coefficient of
    ``t^{(orders[j]-d)/2}``.
    """

    def __init__(self, d: int = 2, orders: Sequence[int] = (0, 2, 4, 6), max_condition: float = 1e12):
        self.d = d
        self.orders = orders
        self.max_condition = max_condition

    def fit(self, X, y):
        t = np.asarray(X, dtype=float).reshape(-1)
        y = np.asarray(y)
        if t.size != y.size:
            raise ValueError("X and y have different lengths")
        if t.size < len(self.orders):
            raise ValueError("need at least as many samples as orders")
        res = fit_invariants(np.column_stack([t, y]), self.d, list(self.orders), self.max_condition)
        self.coef_ = res.coefficients
        self.residual_ = res.residual
        self.condition_ = res.condition
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        t = np.asarray(X, dtype=float).reshape(-1)
        pred = _design(t, self.d, list(self.orders)) @ self.coef_
        return pred.real if np.isrealobj(pred) or np.allclose(pred.imag, 0) else pred

    def coefficient(self, k: int) -> complex:
        return self.coef_[list(self.orders).index(k)]


def write_trace_csv(path, t, traces) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re_trace", "im_trace"])
        for ti, tr in zip(np.atleast_1d(t), np.atleast_1d(traces)):
            w.writerow([repr(float(ti)), repr(float(np.real(tr))), repr(float(np.imag(tr)))])


# ---------------------------------------------------------------------------
# functional calculus and symbolic realisation


def matrix_function_fourier(
    b: FourierElement,
    f: Union[FunctionSpec, Callable[[np.ndarray], np.ndarray]],
    rep: TruncatedRep,
    rtol: float = 0.0,
) -> FourierElement:
    """Fourier coefficients of ``f(b)`` for self-adjoint ``b``, read off
    ``f(lambda(b)) U^0`` on the truncation.

    Coefficients below ``rtol`` times the largest one are dropped.
    """
    L = left_mult_matrix(b, rep)
    if isinstance(f, FunctionSpec) and _has_log_extension(f):
        S = SparseOperator(L)
        if f.positive_domain and not S.is_positive:
            raise ValueError("truncated spectrum leaves the domain of f")
        v = moi_apply(S, f, [], rep.e0())
    else:
        S = SpectralOperator(L)
        if isinstance(f, FunctionSpec):
            if f.positive_domain and not S.is_positive:
                raise ValueError("truncated spectrum leaves the domain of f")
            vals = dd_batch(f, S.eigenvalues[:, None])
        else:
            vals = np.asarray(f(S.eigenvalues))
        Q = S.eigenvectors
        v = Q @ (vals * (Q.conj().T @ rep.e0()))
    return rep.element(v, rtol * float(np.abs(v).max()))


def torus_realizer(
    rep: TruncatedRep,
    x: FourierElement,
    a_vec: Sequence[FourierElement] = (),
    a: FourierElement | None = None,
):
    """Map atoms ``D^alpha g`` to sparse matrices ``lambda(D^alpha g)``."""
    cache: dict = {}
    zero = FourierElement({}, rep.d)

    def generator(at: Atom, values: Mapping[int, int]) -> FourierElement:
        if at.name == "x":
            return x
        if at.name == "a":
            if at.label < 0:
                return a if a is not None else zero
            i = values[at.label]
            return a_vec[i] if i < len(a_vec) and a_vec[i] is not None else zero
        raise KeyError(f"unbound generator {at.name!r}")

    def realize(at: Atom, values: Mapping[int, int]):
        label_val = values[at.label] if at.label >= 0 else -1
        derivs = tuple(sorted(values[l] for l in at.derivs))
        if any(i >= rep.d for i in derivs) or label_val >= rep.d:
            raise IndexError("index out of range")
        key = (at.name, label_val, derivs)
        if key not in cache:
            g = generator(at, values).derivatives(derivs)
            cache[key] = left_mult_matrix(g, rep)
        return cache[key]

    return realize


def invariant_element(
    expr: MOIExpression,
    rep: TruncatedRep,
    x: FourierElement,
    a_vec: Sequence[FourierElement] = (),
    a: FourierElement | None = None,
    vector: np.ndarray | None = None,
    include_prefactor: bool = True,
    operator: SparseOperator | None = None,
) -> np.ndarray:
    """``expr`` realised on the torus and applied to ``vector`` (default ``U^0``).

    Applied to ``U^0`` the result is the Fourier vector of the invariant,
    whose ``U^0`` entry is its trace.  ``operator`` may carry a prepared
    :class:`SparseOperator` for ``lambda(x)`` to share factorisations.
    """
    S = operator or SparseOperator(left_mult_matrix(x, rep))
    v = rep.e0() if vector is None else vector
    return eval_expression(
        expr, torus_realizer(rep, x, a_vec, a), S, rep.d, vector=v, include_prefactor=include_prefactor
    )
