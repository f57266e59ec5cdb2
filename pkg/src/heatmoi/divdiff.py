"""Divided differences of power, power-log and exponential functions.

Evaluation works on batches of point tuples.  A tuple is sorted, and if its
spread is small compared with the distance to the nearest singularity the
value comes from a Taylor expansion about the midpoint::

    f^{[n]}(a_0..a_n) = sum_{j>=n} f^{(j)}(c)/j! * h_{j-n}(a_0-c, ..., a_n-c)

with ``h_m`` the complete homogeneous symmetric polynomials.  Otherwise the
recurrence is applied with the extreme points, so the division is always by
the full spread of the tuple and never by a tiny gap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

TAYLOR_TERMS = 48
# Taylor about the midpoint when spread <= RHO * midpoint (power-type kinds)
RHO = 0.5
# ... or when spread * |scale| <= EXP_SPREAD (exponentials)
EXP_SPREAD = 1.0


class DomainError(ValueError):
    pass


class QuadratureError(RuntimeError):
    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class FunctionSpec:
    """A scalar function with enough structure to take divided differences.

    kinds
      ``power``     coef * a**p
      ``powerlog``  coef * a**p * log(a)
      ``exp``       coef * exp(scale * a)
      ``anchored``  h(a) = base^{[1]}(anchor, a)
      ``combo``     sum of coef_i * spec_i
      ``custom``    user supplied Taylor coefficients
    """

    kind: str
    p: float = 0.0
    coef: float = 1.0
    scale: float = 1.0
    base: "FunctionSpec | None" = None
    anchor: float = 1.0
    parts: tuple = ()
    taylor_fn: Callable | None = field(default=None, compare=False)
    radius_fn: Callable | None = field(default=None, compare=False)
    label: str = ""

    # -- constructors -----------------------------------------------------
    @classmethod
    def power(cls, p, coef=1.0) -> "FunctionSpec":
        return cls("power", p=float(p), coef=float(coef), label=f"a^{p}")

    @classmethod
    def powerlog(cls, p, coef=1.0) -> "FunctionSpec":
        return cls("powerlog", p=float(p), coef=float(coef), label=f"a^{p} log a")

    @classmethod
    def log(cls) -> "FunctionSpec":
        return cls.powerlog(0.0)

    @classmethod
    def exp(cls, scale=1.0, coef=1.0) -> "FunctionSpec":
        return cls("exp", scale=float(scale), coef=float(coef), label=f"exp({scale} a)")

    @classmethod
    def anchored(cls, base: "FunctionSpec", anchor=1.0) -> "FunctionSpec":
        return cls("anchored", base=base, anchor=float(anchor), label=f"{base.label}[1]({anchor},a)")

    @classmethod
    def combo(cls, *pairs) -> "FunctionSpec":
        parts = tuple((float(c), s) for c, s in pairs)
        return cls("combo", parts=parts, label=" + ".join(s.label for _, s in parts))

    @classmethod
    def custom(cls, taylor: Callable, radius: Callable, label="custom") -> "FunctionSpec":
        """``taylor(c, K)`` returns an array ``(K, *c.shape)`` of ``f^{(j)}(c)/j!``;
        ``radius(c)`` the convergence radius of the series about ``c``."""
        return cls("custom", taylor_fn=taylor, radius_fn=radius, label=label)

    # -- pointwise --------------------------------------------------------
    @property
    def positive_domain(self) -> bool:
        if self.kind in ("power", "powerlog"):
            return True
        if self.kind == "anchored":
            return self.base.positive_domain
        if self.kind == "combo":
            return any(s.positive_domain for _, s in self.parts)
        return False

    def taylor(self, c, K: int) -> np.ndarray:
        """``f^{(j)}(c)/j!`` for ``j < K``, shape ``(K, *c.shape)``."""
        c = np.asarray(c, dtype=float)
        out = np.empty((K,) + c.shape)
        if self.kind == "power":
            b = self.coef * c**self.p
            for j in range(K):
                out[j] = b
                b = b * (self.p - j) / ((j + 1) * c)
        elif self.kind == "powerlog":
            b = c**self.p
            db = b * np.log(c)
            for j in range(K):
                out[j] = self.coef * db
                b, db = (b * (self.p - j) / ((j + 1) * c), (db * (self.p - j) + b) / ((j + 1) * c))
        elif self.kind == "exp":
            b = self.coef * np.exp(self.scale * c)
            for j in range(K):
                out[j] = b
                b = b * self.scale / (j + 1)
        elif self.kind == "custom":
            out = np.asarray(self.taylor_fn(c, K), dtype=float)
        else:
            raise TypeError(f"no direct Taylor coefficients for kind {self.kind!r}")
        return out

    def derivative(self, j: int, a) -> np.ndarray:
        return self.taylor(a, j + 1)[j] * math.factorial(j)

    def __call__(self, a):
        return dd_batch(self, np.asarray(a, dtype=float)[..., None])

    def _taylor_ok(self, lo, hi):
        spread = hi - lo
        mid = 0.5 * (lo + hi)
        if self.kind in ("power", "powerlog"):
            return spread <= RHO * mid
        if self.kind == "exp":
            return spread * abs(self.scale) <= EXP_SPREAD
        return spread <= RHO * np.asarray(self.radius_fn(mid))


def fkd(k: int, d) -> FunctionSpec:
    """An explicit ``k/2``-fold primitive of ``a -> a^{-d/2}``."""
    if k < 0 or k % 2:
        raise ValueError("k must be even and non-negative")
    if d < 2:
        raise ValueError("d must be at least 2")
    p = (k - d) / 2
    d_int = int(d) if float(d).is_integer() else None
    if d_int is not None and d_int % 2 == 0 and k >= d_int:
        h = d_int // 2
        c = (-1) ** (h - 1) / (math.factorial(h - 1) * math.factorial(k // 2 - h))
        spec = FunctionSpec.powerlog(p, c)
    else:
        c = (-1) ** (k // 2) * math.gamma(d / 2 - k / 2) / math.gamma(d / 2)
        spec = FunctionSpec.power(p, c)
    return replace(spec, label=f"F_{{{k},{d}}}")


# ---------------------------------------------------------------------------
# batched evaluation


def _complete_homogeneous(y: np.ndarray, M: int) -> np.ndarray:
    """``h_m(y[..., 0], ..., y[..., n])`` for ``m < M``; shape ``(M, ...)``."""
    lead = y.shape[:-1]
    H = np.zeros((M,) + lead)
    H[0] = 1.0
    # first variable: powers
    y0 = y[..., 0]
    for m in range(1, M):
        H[m] = H[m - 1] * y0
    for v in range(1, y.shape[-1]):
        yv = y[..., v]
        for m in range(1, M):
            H[m] = H[m] + H[m - 1] * yv
    return H


def _dd_sorted(f: FunctionSpec, pts: np.ndarray) -> np.ndarray:
    """Core evaluation for sorted rows of ``pts`` (shape ``(M, n+1)``)."""
    M, n1 = pts.shape
    n = n1 - 1
    if n == 0:
        return f.taylor(pts[:, 0], 1)[0]
    lo, hi = pts[:, 0], pts[:, -1]
    out = np.empty(M)
    ok = f._taylor_ok(lo, hi)
    if np.any(ok):
        p = pts[ok]
        c = 0.5 * (p[:, 0] + p[:, -1])
        K = TAYLOR_TERMS + n
        a = f.taylor(c, K)[n:]
        H = _complete_homogeneous(p - c[:, None], TAYLOR_TERMS)
        out[ok] = np.sum(a * H, axis=0)
    rest = ~ok
    if np.any(rest):
        p = pts[rest]
        upper = _dd_sorted(f, p[:, 1:])
        lower = _dd_sorted(f, p[:, :-1])
        out[rest] = (upper - lower) / (p[:, -1] - p[:, 0])
    return out


def dd_batch(f: FunctionSpec, points) -> np.ndarray:
    """``f^{[n]}`` for every row of ``points`` (last axis holds ``a_0..a_n``)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        raise ValueError("points must have at least one axis")
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, pts.shape[-1])
    if f.kind == "combo":
        out = sum(c * dd_batch(s, flat) for c, s in f.parts)
        return np.asarray(out).reshape(shape)
    if f.kind == "anchored":
        anchor = np.full((flat.shape[0], 1), f.anchor)
        return dd_batch(f.base, np.concatenate([anchor, flat], axis=1)).reshape(shape)
    if f.positive_domain and flat.size and np.min(flat) <= 0:
        raise DomainError(f"{f.label or f.kind} requires positive points")
    if not np.all(np.isfinite(flat)):
        raise ValueError("points must be finite")
    return _dd_sorted(f, np.sort(flat, axis=1)).reshape(shape)


def dd_eval(f: FunctionSpec, points: Sequence[float]) -> float:
    """``f^{[n]}(a_0, ..., a_n)`` for a single tuple of points."""
    return float(dd_batch(f, np.asarray(points, dtype=float)[None, :])[0])


def dd_recursive(f: FunctionSpec, points: Sequence[float]) -> float:
    """Plain textbook recurrence; only valid for pairwise distinct points."""
    pts = [float(p) for p in points]
    if len(pts) == 1:
        return float(f(pts[0]))
    return (dd_recursive(f, pts[1:]) - dd_recursive(f, pts[:-1])) / (pts[-1] - pts[0])


# ---------------------------------------------------------------------------
# simplex quadrature oracle


def _simplex_rule(n: int, order: int):
    """Nodes ``(Q, n+1)`` of barycentric weights and quadrature weights on the
    standard simplex (total mass ``1/n!``) via a collapsed-cube map."""
    x, w = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([u] * n), indexing="ij")
    wgrids = np.meshgrid(*([w] * n), indexing="ij")
    U = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    lam = np.empty((U.shape[0], n + 1))
    remaining = np.ones(U.shape[0])
    jac = np.ones(U.shape[0])
    for i in range(n):
        lam[:, i] = remaining * U[:, i]
        jac *= remaining
        remaining = remaining * (1.0 - U[:, i])
    lam[:, n] = remaining
    return lam, W * jac


def dd_quadrature_with_error(f: FunctionSpec, points, order: int = 24):
    pts = np.asarray(points, dtype=float)
    n = pts.size - 1
    if f.kind in ("anchored", "combo"):
        raise TypeError("quadrature oracle needs a function with explicit derivatives")
    if f.positive_domain and np.min(pts) <= 0:
        raise DomainError("points must be positive")

    def rule(q):
        if n == 0:
            return float(f.derivative(0, pts[0]))
        lam, w = _simplex_rule(n, q)
        return float(np.sum(w * f.derivative(n, lam @ pts)))

    value = rule(order)
    err = abs(value - rule(order + 8))
    return value, err


def dd_quadrature(f: FunctionSpec, points, order: int = 24, rtol: float | None = None) -> float:
    """Hermite-Genocchi integral of ``f^{(n)}`` over the simplex.

    With ``rtol`` set, raises :class:`QuadratureError` when the difference
    to a higher-order rule exceeds ``rtol`` relative to the value.
    """
    value, err = dd_quadrature_with_error(f, points, order)
    if rtol is not None and err > rtol * max(abs(value), 1e-300):
        raise QuadratureError(f"simplex quadrature not converged (estimate {err:.3e})", err)
    return value


# ---------------------------------------------------------------------------
# exact expansion for integer powers


class SymmetricMonomialSum(NamedTuple):
    terms: tuple  # of (Fraction coefficient, exponent tuple)

    def __call__(self, points) -> float:
        pts = np.asarray(points, dtype=float)
        total = 0.0
        for c, e in self.terms:
            total += float(c) * float(np.prod(pts ** np.asarray(e, dtype=float)))
        return total

    def __len__(self) -> int:
        return len(self.terms)


def _compositions(total: int, parts: int):
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        vec = []
        for c in cuts + (total + parts - 1,):
            vec.append(c - prev - 1)
            prev = c
        yield tuple(vec)


def dd_expand_power(p: int, n: int) -> SymmetricMonomialSum:
    """Exact ``(a -> a^p)^{[n]}`` as a signed sum of monomials in ``a_0..a_n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p = int(p)
    if p >= n:
        terms = tuple((Fraction(1), e) for e in _compositions(p - n, n + 1))
    elif p >= 0:
        terms = ()
    else:
        q = -p
        sign = Fraction((-1) ** n)
        terms = tuple(
            (sign, tuple(-1 - ej for ej in e)) for e in _compositions(q - 1, n + 1)
        )
    return SymmetricMonomialSum(terms)
