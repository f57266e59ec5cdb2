"""Closed-form modular symbols and their divided-difference counterparts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import mpmath
import numpy as np

from .divdiff import FunctionSpec, dd_batch, fkd
from .moi import SpectralOperator, moi_spectral

# closed forms switch to high-precision evaluation inside this distance of
# a removable singularity; H0 cancels to much higher order near the origin
NEAR = 0.1
NEAR_H0 = 0.5
# points closer than this to a singular set are nudged off it
NUDGE = 1e-15
_OFFSETS = (1.0, math.sqrt(2.0), math.sqrt(3.0))


def _pts(*cols) -> np.ndarray:
    cols = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in cols])
    return np.stack(cols, axis=-1)


def _check_positive(*args) -> None:
    for a in args:
        if np.any(np.asarray(a) <= 0):
            raise ValueError("arguments must be positive")


def _check_d(d) -> None:
    if d < 2:
        raise ValueError("d must be at least 2")


# ---------------------------------------------------------------------------
# divided-difference forms


def Phi(a0, a1, d):
    """Second-order symbol of the conformal invariant (quotient form).

    Close to the diagonal the quotient is replaced by the equivalent
    cancellation-free expression
    ``-(2/d) sqrt(a0 a1) (a0 F^{[3]}(a0,a0,a1,a1) + F^{[2]}(a0,a1,a1))``.
    """
    _check_d(d)
    _check_positive(a0, a1)
    a0, a1 = np.broadcast_arrays(np.asarray(a0, float), np.asarray(a1, float))
    F = fkd(2, d)
    pref = 2.0 * np.sqrt(a0 * a1) / d
    gap = a1 - a0
    far = np.abs(gap) > 0.1 * np.maximum(a0, a1)
    safe_gap = np.where(far, gap, 1.0)
    quotient = (a0 * dd_batch(F, _pts(a0, a0, a1)) - a1 * dd_batch(F, _pts(a0, a1, a1))) / safe_gap
    near = -(a0 * dd_batch(F, _pts(a0, a0, a1, a1)) + dd_batch(F, _pts(a0, a1, a1)))
    out = pref * np.where(far, quotient, near)
    return out[()] if out.ndim == 0 else out


def Phi_alt(a0, a1, d):
    """The same symbol as ``sqrt(a1/a0) (a0 F^{[2]}(a0,a0,a1) + (4/d) a0^2 F^{[3]}(a0,a0,a0,a1))``."""
    _check_d(d)
    _check_positive(a0, a1)
    a0, a1 = np.broadcast_arrays(np.asarray(a0, float), np.asarray(a1, float))
    F = fkd(2, d)
    out = np.sqrt(a1 / a0) * (
        a0 * dd_batch(F, _pts(a0, a0, a1)) + (4.0 / d) * a0**2 * dd_batch(F, _pts(a0, a0, a0, a1))
    )
    return out[()] if out.ndim == 0 else out


def g_function(d) -> FunctionSpec:
    """``g(a) = F_{2,d}(a) + F_{2,d}^{[1]}(1, a)``."""
    F = fkd(2, d)
    return FunctionSpec.combo((1.0, F), (1.0, FunctionSpec.anchored(F, 1.0)))


def f_function(d) -> FunctionSpec:
    """``f(a) = F^{[2]}(1,1,a) + (d/2 - 1) F^{[1]}(1,a)``, which satisfies ``f + g' = 0``."""
    F = fkd(2, d)
    once = FunctionSpec.anchored(F, 1.0)
    return FunctionSpec.combo((1.0, FunctionSpec.anchored(once, 1.0)), (d / 2 - 1, once))


def Psi(a0, a1, a2, d):
    """Third-order symbol: ``-(4/d) sqrt(a0 a2) / a1^{2+d/2} g^{[3]}(r0, r0, r2, r2)``
    with ``r_j = a_j / a1``."""
    _check_d(d)
    _check_positive(a0, a1, a2)
    a0, a1, a2 = np.broadcast_arrays(*(np.asarray(a, float) for a in (a0, a1, a2)))
    r0, r2 = a0 / a1, a2 / a1
    g3 = dd_batch(g_function(d), _pts(r0, r0, r2, r2))
    out = -(4.0 / d) * np.sqrt(a0 * a2) / a1 ** (2 + d / 2) * g3
    return out[()] if out.ndim == 0 else out


def Psi_alt(a0, a1, a2, d):
    """Third-order symbol as a sum of three divided differences of ``F_{2,d}``."""
    _check_d(d)
    _check_positive(a0, a1, a2)
    a0, a1, a2 = np.broadcast_arrays(*(np.asarray(a, float) for a in (a0, a1, a2)))
    F = fkd(2, d)
    inner = (
        (4.0 / d) * a0 * a1 * dd_batch(F, _pts(a0, a0, a1, a1, a2))
        + (2 + 4.0 / d) * a0 * dd_batch(F, _pts(a0, a0, a1, a2))
        + (8.0 / d) * a0**2 * dd_batch(F, _pts(a0, a0, a0, a1, a2))
    )
    out = np.sqrt(a2 / a0) * inner
    return out[()] if out.ndim == 0 else out


def phi_at_unit(alpha, d):
    """``(d+2)F^{[2]}(1,1,a) + 2a F^{[3]}(1,1,a,a) + 4F^{[3]}(1,1,1,a)``; identically zero."""
    F = fkd(2, d)
    a = np.asarray(alpha, float)
    one = np.ones_like(a)
    return (
        (d + 2) * dd_batch(F, _pts(one, one, a))
        + 2 * a * dd_batch(F, _pts(one, one, a, a))
        + 4 * dd_batch(F, _pts(one, one, one, a))
    )


def primitive_pair_gap(alpha, beta, f: FunctionSpec, g: FunctionSpec):
    """``f^{[2]}(a,a,b) + 2 g^{[3]}(a,a,a,b) + g^{[3]}(a,a,b,b)``; zero whenever ``f + g' = 0``."""
    a, b = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(beta, float))
    return (
        dd_batch(f, _pts(a, a, b))
        + 2 * dd_batch(g, _pts(a, a, a, b))
        + dd_batch(g, _pts(a, a, b, b))
    )


# ---------------------------------------------------------------------------
# closed forms in the log variables


def _K0_mp(s):
    return (-2 + s * mpmath.coth(s / 2)) / (s * mpmath.sinh(s / 2))


def _H0_mp(s, t):
    u = s + t
    num = t * u * mpmath.cosh(s) - s * u * mpmath.cosh(t) + (s - t) * (
        u + mpmath.sinh(s) + mpmath.sinh(t) - mpmath.sinh(u)
    )
    den = s * t * u * mpmath.sinh(s / 2) * mpmath.sinh(t / 2) * mpmath.sinh(u / 2) ** 2
    return num / den


def _K0d_mp(s, d):
    q = 1 - mpmath.mpf(d) / 2
    e = mpmath.exp(q * s)
    ratio = s if q == 0 else mpmath.expm1(q * s) / q
    return (2 / mpmath.mpf(d)) * (-1 - e + ratio * mpmath.coth(s / 2)) / (s * mpmath.sinh(s / 2))


def _near_eval(fn_mp, forms: Callable, args: Sequence[float], extra=()) -> float:
    """Evaluate a closed form near its removable singularities.

    Arguments are nudged off the singular sets by ``NUDGE``-sized distinct
    offsets and the expression is evaluated with enough digits to absorb the
    cancellation, which is at most of order ``distance^-8``.
    """
    args = [float(a) for a in args]
    if min(abs(v) for v in forms(*args)) < NUDGE:
        args = [a + NUDGE * o for a, o in zip(args, _OFFSETS)]
    dist = max(min(abs(v) for v in forms(*args)), NUDGE / 4)
    dps = 30 + int(8 * max(0.0, -math.log10(dist)))
    with mpmath.workdps(dps):
        return float(fn_mp(*(mpmath.mpf(a) for a in args), *extra))


def _vectorize(regular, fn_mp, forms, *args, extra=(), near_dist=None):
    arrs = np.broadcast_arrays(*(np.asarray(a, float) for a in args))
    shape = arrs[0].shape
    flat = [a.reshape(-1) for a in arrs]
    dist = np.min(np.abs(np.stack(forms(*flat), axis=0)), axis=0)
    near = dist < (NEAR if near_dist is None else near_dist)
    out = np.empty(flat[0].shape)
    with np.errstate(all="ignore"):
        out[~near] = regular(*(f[~near] for f in flat))
    for j in np.flatnonzero(near):
        out[j] = _near_eval(fn_mp, forms, [f[j] for f in flat], extra)
    out = out.reshape(shape)
    return out[()] if out.ndim == 0 else out


def K0(s):
    """``(-2 + s coth(s/2)) / (s sinh(s/2))``, with ``K0(0) = 1/3``."""

    def regular(s):
        return (-2 + s / np.tanh(s / 2)) / (s * np.sinh(s / 2))

    return _vectorize(regular, _K0_mp, lambda s: (s,), s)


def H0(s, t):
    """Two-variable modular function, removable singularities at ``s t (s+t) = 0``."""

    def regular(s, t):
        u = s + t
        num = t * u * np.cosh(s) - s * u * np.cosh(t) + (s - t) * (
            u + np.sinh(s) + np.sinh(t) - np.sinh(u)
        )
        den = s * t * u * np.sinh(s / 2) * np.sinh(t / 2) * np.sinh(u / 2) ** 2
        return num / den

    return _vectorize(regular, _H0_mp, lambda s, t: (s, t, s + t), s, t, near_dist=NEAR_H0)


def K0d(s, d):
    """Dimension-``d`` analogue of ``K0``; ``d <= 2`` is an extrapolation of the formula."""
    d = float(d)
    q = 1 - d / 2

    def regular(s):
        ratio = s if q == 0 else np.expm1(q * s) / q
        return (2 / d) * (-1 - np.exp(q * s) + ratio / np.tanh(s / 2)) / (s * np.sinh(s / 2))

    return _vectorize(regular, _K0d_mp, lambda s: (s,), s, extra=(d,))


def log_dd(*alphas):
    """Divided difference of ``log`` at the given points."""
    return dd_batch(FunctionSpec.log(), _pts(*alphas))


def Phi_K(K: Callable, a0, a1):
    return 0.5 * K(np.log(np.asarray(a1) / a0)) * log_dd(a0, a1)


def Psi_KH(K: Callable, H: Callable, a0, a1, a2):
    return K(np.log(np.asarray(a2) / a0)) * log_dd(a0, a1, a2) + 0.25 * H(
        np.log(np.asarray(a1) / a0), np.log(np.asarray(a2) / a1)
    ) * log_dd(a0, a1) * log_dd(a1, a2)


def K0d_from_Phi(s, d):
    """``2 Phi(1, e^s) / log^{[1]}(1, e^s)``, an independent route to ``K0d``."""
    alpha = np.exp(np.asarray(s, float))
    return 2 * Phi(np.ones_like(alpha), alpha, d) / log_dd(np.ones_like(alpha), alpha)


# ---------------------------------------------------------------------------
# modular functional calculus


@dataclass(frozen=True)
class ModularSymbol:
    """Function of ``log(a_{j+1}/a_j)``; ``singular`` lists removable singular sets."""

    arity: int
    evaluate: Callable
    singular: tuple = ()
    name: str = ""

    def __call__(self, *s):
        return self.evaluate(*s)

    def symbol(self) -> Callable[[np.ndarray], np.ndarray]:
        """The induced MOI symbol on eigenvalue tuples."""

        def phi(pts):
            logs = np.log(pts)
            return self.evaluate(*(logs[..., j + 1] - logs[..., j] for j in range(self.arity)))

        return phi


K0_SYMBOL = ModularSymbol(1, K0, ("s = 0",), "K0")
H0_SYMBOL = ModularSymbol(2, H0, ("s = 0", "t = 0", "s + t = 0"), "H0")


def K0d_symbol(d) -> ModularSymbol:
    return ModularSymbol(1, lambda s: K0d(s, d), ("s = 0",), f"K0^{d}")


def modular_apply(K: ModularSymbol, x: SpectralOperator, *V) -> np.ndarray:
    """``K(nabla)(V)`` or ``H(nabla_1, nabla_2)(V_1, V_2)`` for positive ``x``."""
    if len(V) != K.arity:
        raise ValueError(f"symbol of arity {K.arity} needs {K.arity} arguments")
    if not x.is_positive:
        raise ValueError("x must have a positive spectrum")
    return moi_spectral(x, K.symbol(), list(V))


def symbol_from(fn: Callable, d) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap ``Phi``/``Psi``-style functions ``fn(a0, ..., d)`` as MOI symbols."""

    def phi(pts):
        return fn(*(pts[..., j] for j in range(pts.shape[-1])), d)

    return phi


def write_k0d_grid(path, dims=(0.01, 1, 2.01, 3, 4, 5), s_min=-10.0, s_max=10.0, num=401) -> None:
    """CSV of ``K0^d(s)``; the ``extrapolated`` column flags ``d <= 2``."""
    s = np.linspace(s_min, s_max, num)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "s", "K0d", "extrapolated"])
        for d in dims:
            vals = K0d(s, d)
            for si, v in zip(s, vals):
                w.writerow([d, repr(float(si)), repr(float(v)), int(d <= 2)])
