"""Verification suites run by ``heatmoi verify``.

Each suite returns a :class:`Report` listing one :class:`Check` per property
with its measured deviation and tolerance.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .config import ConfigError, RunConfig
from .divdiff import FunctionSpec, dd_eval, dd_expand_power, dd_quadrature, fkd
from .modular import (
    H0,
    K0,
    K0d,
    Phi,
    Phi_K,
    Phi_alt,
    Psi,
    Psi_KH,
    Psi_alt,
    f_function,
    g_function,
    phi_at_unit,
    primitive_pair_gap,
)
from .moi import (
    SpectralOperator,
    check_commutator_identities,
    moi_algebraic,
    moi_apply,
    moi_spectral,
    simplex_fm,
)
from .recursion import local_invariant
from .torus import (
    FourierElement,
    HeatTraceFitter,
    TruncatedRep,
    build_P,
    heat_trace,
    invariant_element,
    left_mult_matrix,
    matrix_function_fourier,
)


@dataclass
class Check:
    name: str
    deviation: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class Report:
    suite: str
    checks: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, deviation: float, tolerance: float, detail: str = "", passed=None) -> Check:
        deviation = float(deviation)
        ok = deviation <= tolerance if passed is None else bool(passed)
        c = Check(name, deviation, float(tolerance), ok and math.isfinite(deviation), detail)
        self.checks.append(c)
        return c

    def to_json(self) -> str:
        return json.dumps(
            {"suite": self.suite, "passed": self.passed, "seconds": self.seconds,
             "checks": [asdict(c) for c in self.checks], "values": self.values},
            indent=2,
        )

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            extra = f"  {c.detail}" if c.detail else ""
            out.append(f"{flag}  {c.name:<44} dev={c.deviation:.3e}  tol={c.tolerance:.1e}{extra}")
        return out


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# ---------------------------------------------------------------------------


def suite_dd(cfg: RunConfig) -> Report:
    rep = Report("dd")
    rng = np.random.default_rng(cfg.seed)
    specs = {f"F_{{{k},{d}}}": fkd(k, d) for k in (0, 2, 4) for d in (2, 3, 4)}
    specs["exp(-a)"] = FunctionSpec.exp(-1.0)
    quad = sym = conf = 0.0
    for name, f in specs.items():
        for n in range(5):
            for _ in range(6):
                pts = rng.uniform(0.3, 4.0, n + 1)
                v = dd_eval(f, pts)
                quad = max(quad, abs(v - dd_quadrature(f, pts)) / max(abs(v), 1e-300))
                w = dd_eval(f, rng.permutation(pts))
                sym = max(sym, abs(v - w) / max(abs(v), 1e-300))
            alpha = rng.uniform(0.3, 4.0)
            exact = float(f.derivative(n, np.array([alpha]))[0]) / math.factorial(n)
            conf = max(conf, abs(dd_eval(f, [alpha] * (n + 1)) - exact) / max(abs(exact), 1e-300))
    rep.add("dd_eval vs simplex quadrature (n<=4)", quad, cfg.tol("dd_quadrature_rel"))
    rep.add("permutation symmetry", sym, cfg.tol("dd_symmetry"))
    rep.add("confluent value f^(n)/n!", conf, cfg.tol("dd_confluent"))
    expand = 0.0
    for p in (-4, -3, -2, -1, 1, 2, 3, 5):
        for n in range(5):
            pts = rng.uniform(0.5, 3.0, n + 1)
            ref = dd_eval(FunctionSpec.power(p), pts)
            expand = max(expand, abs(dd_expand_power(p, n)(pts) - ref) / max(abs(ref), 1.0))
    rep.add("closed-form power expansion", expand, cfg.tol("dd_expand_power"))
    return rep


def _random_positive(rng, n: int) -> np.ndarray:
    B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return B @ B.conj().T / n + 0.5 * np.eye(n)


def _random_matrix(rng, n: int) -> np.ndarray:
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def suite_moi(cfg: RunConfig) -> Report:
    rep = Report("moi")
    rng = np.random.default_rng(cfg.seed)
    x = SpectralOperator(_random_positive(rng, 6))
    g = FunctionSpec.exp(-1.0)
    for m in (1, 2, 3):
        V = [_random_matrix(rng, 6) for _ in range(m)]
        err = _rel(simplex_fm(1.0, x, V), (-1) ** m * moi_spectral(x, g, V))
        rep.add(f"simplex oracle vs spectral, m={m}", err, cfg.tol("simplex_rel"))
    H = _random_matrix(rng, 5)
    h = SpectralOperator(H + H.conj().T + 8 * np.eye(5))
    comm = max(
        check_commutator_identities(h, _random_matrix(rng, 5), [_random_matrix(rng, 5) for _ in range(m)], f)
        for m in (1, 2, 3)
        for f in (fkd(2, 3), fkd(4, 2), g)
    )
    rep.add("commutator identities", comm, cfg.tol("commutator"))
    xm = _random_positive(rng, 5)
    alg = max(
        _rel(moi_algebraic(xm, p, V), moi_spectral(SpectralOperator(xm), FunctionSpec.power(p), V))
        for p in (-2, -1, 2, 3)
        for V in ([_random_matrix(rng, 5) for _ in range(2)],)
    )
    rep.add("algebraic power symbols vs spectral", alg, cfg.tol("algebraic_rel"))
    cont = 0.0
    for f in (fkd(2, 3), fkd(4, 2), fkd(2, 2)):
        for n in range(4):
            V = [_random_matrix(rng, 6) for _ in range(n)]
            v = _random_matrix(rng, 6)[:, 0]
            cont = max(cont, _rel(moi_apply(x, f, V, v), moi_spectral(x, f, V) @ v))
    rep.add("contour application vs spectral", cont, cfg.tol("contour_rel"))
    return rep


def suite_symbols(cfg: RunConfig) -> Report:
    rep = Report("symbols")
    g = np.geomspace(0.1, 10.0, cfg.grid_size)
    A0, A1 = np.meshgrid(g, g)

    def rel(a, b):
        return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))

    for d in cfg.dims:
        rep.add(f"phi(1, alpha) == 0, d={d}", np.abs(phi_at_unit(g, d)).max(), cfg.tol("phi_at_unit"))
        rep.add(f"Phi forms agree, d={d}", rel(Phi(A0, A1, d), Phi_alt(A0, A1, d)), cfg.tol("phi_forms"))
        psi = max(rel(Psi(A0, m, A1, d), Psi_alt(A0, m, A1, d)) for m in g)
        rep.add(f"Psi forms agree, d={d}", psi, cfg.tol("psi_forms"))
        F = f_function(d)(A0)
        gap = primitive_pair_gap(A0, A1, f_function(d), g_function(d))
        rep.add(
            f"primitive pair gap, d={d}",
            float(np.max(np.abs(gap) / np.maximum(1.0, np.abs(F)))),
            cfg.tol("primitive_pair"),
        )
    rep.add("Phi == Phi_K0 at d=2", rel(Phi(A0, A1, 2), Phi_K(K0, A0, A1)), cfg.tol("modular_phi_psi"))
    psi_kh = max(rel(Psi(A0, m, A1, 2), Psi_KH(K0, H0, A0, m, A1)) for m in g)
    rep.add("Psi == Psi_{K0,H0} at d=2", psi_kh, cfg.tol("modular_phi_psi"))
    s = np.linspace(-10.0, 10.0, 2001)
    rep.add("K0^4 == 0", np.abs(K0d(s, 4)).max(), cfg.tol("k0_four"))
    rep.add("K0^{2+1e-6} -> K0", np.abs(K0d(s, 2 + 1e-6) - K0(s)).max(), cfg.tol("k0_limit"))
    S, T = np.meshgrid(np.linspace(-3, 3, 13), np.linspace(-3, 3, 13))
    rep.add("H0 antisymmetry", np.abs(H0(S, T) + H0(T, S)).max(), cfg.tol("modular_phi_psi"))
    return rep


# ---------------------------------------------------------------------------
# torus suites


def _conformal_setup(y: FourierElement, theta, rep: TruncatedRep):
    x = 2 + y + y.product(y, theta) * 0.25
    yinv = matrix_function_fourier(y, FunctionSpec.power(-1), rep, rtol=1e-17)
    yix = yinv.product(x, theta)
    a_vec = [yix.product(y.derivative(i), theta) * 2 for i in range(y.d)]
    a = yix.product(y.laplacian(), theta)
    return x, yinv, a_vec, a


def conjugation_error(y: FourierElement, theta, N: int, interior: float = 0.5, expr=None) -> float:
    """Sup-norm gap between both sides of the conjugation identity for ``I_2``
    on the modes with ``|n|_inf <= interior * N``."""
    expr = expr or local_invariant(2)
    rep = TruncatedRep(N, theta)
    x, yinv, a_vec, a = _conformal_setup(y, theta, rep)
    lhs = invariant_element(expr, rep, x, a_vec, a)
    w = invariant_element(expr, rep, x, [], None, vector=y.vector(rep))
    rhs = left_mult_matrix(yinv, rep) @ w
    idx = rep.interior(int(round(interior * N)))
    return float(np.abs(lhs[idx] - rhs[idx]).max())


def suite_conjugation(cfg: RunConfig) -> Report:
    rep = Report("conjugation")
    if cfg.y is None:
        raise ConfigError("the conjugation suite needs a [y] section")
    theta = cfg.theta_matrix()
    if not cfg.y.is_self_adjoint(theta):
        raise ConfigError("y must be self-adjoint")
    expr = local_invariant(2)
    tol, floor = cfg.tol("conjugation"), cfg.tol("conjugation_floor")
    errs = []
    for N in cfg.conjugation_N:
        t0 = time.perf_counter()
        e = conjugation_error(cfg.y, theta, N, cfg.interior, expr)
        errs.append(e)
        rep.add(f"conjugation gap, N={N}", e, tol, f"{time.perf_counter() - t0:.1f}s")
    worst = max(
        (max(0.0, cur - max(prev, floor)) for prev, cur in zip(errs, errs[1:])), default=0.0
    )
    rep.add("non-increasing in N (above floor)", worst, 0.0)
    rep.values["errors"] = dict(zip(map(str, cfg.conjugation_N), errs))
    return rep


def reference_invariants(cfg: RunConfig, N: int, ks=(0, 2)) -> dict:
    """``tau(I_k)`` from the symbolic expansion realised on the truncation."""
    theta = cfg.theta_matrix()
    rep = TruncatedRep(N, theta)
    out = {}
    for k in ks:
        v = invariant_element(local_invariant(k), rep, cfg.x, cfg.a_vec, cfg.a)
        out[k] = complex(v[rep.index[(0,) * cfg.d]])
    return out


def fit_heat_trace(cfg: RunConfig, N: int):
    """Fitter and sampled traces for the operator described by ``cfg`` at truncation ``N``."""
    rep = TruncatedRep(N, cfg.theta_matrix())
    P = build_P(cfg.x, cfg.a_vec, cfg.a, rep)
    t = cfg.t_grid
    tr = heat_trace(P, cfg.y, t, rep)
    fitter = HeatTraceFitter(d=cfg.d, orders=cfg.orders).fit(t, tr)
    return fitter, t, tr


def analytic_constant(cfg: RunConfig) -> dict:
    """``tau(I_0)``, ``tau(I_2)`` for ``x = c``, ``a = mu`` on the flat torus."""
    c = complex(cfg.x.coeffs.get((0,) * cfg.d, 0)).real
    mu = complex(cfg.a.coeffs.get((0,) * cfg.d, 0)).real if cfg.a is not None else 0.0
    base = (math.pi / c) ** (cfg.d / 2)
    return {0: base, 2: -mu * base}


def _is_constant_flat(cfg: RunConfig) -> bool:
    zero = (0,) * cfg.d
    consts = all(el is None or set(el.coeffs) <= {zero} for name, el in cfg.fourier_items() if name != "y")
    no_drift = all(el is None or not el.coeffs for el in cfg.a_vec)
    return consts and no_drift and not np.any(cfg.theta_matrix().entries)


def suite_heatfit(cfg: RunConfig, on_trace: Callable | None = None) -> Report:
    rep = Report("heatfit")
    if cfg.x is None:
        raise ConfigError("the heatfit suite needs an [x] section")
    if cfg.reference == "analytic":
        if not _is_constant_flat(cfg):
            raise ConfigError("analytic reference needs constant x, a and theta = 0")
        ref = analytic_constant(cfg)
    else:
        ref = reference_invariants(cfg, cfg.reference_N)
        if cfg.reference_check_N:
            chk = reference_invariants(cfg, cfg.reference_check_N)
            for k in (0, 2):
                rep.add(
                    f"tau(I_{k}) converged (N={cfg.reference_N} vs {cfg.reference_check_N})",
                    abs(chk[k] - ref[k]) / max(abs(ref[k]), 1e-300),
                    cfg.tol("reference_convergence"),
                )
    t0 = time.perf_counter()
    fitter, t, tr = fit_heat_trace(cfg, cfg.N)
    if on_trace is not None:
        on_trace(t, tr)
    rep.values["N"] = cfg.N
    rep.values["reference"] = {f"tau(I_{k})": [v.real, v.imag] for k, v in ((k, complex(v)) for k, v in ref.items())}
    fits = {cfg.N: fitter}
    rep.add("fit residual", fitter.residual_, cfg.tol("fit_residual"), f"{time.perf_counter() - t0:.1f}s")
    tols = {0: cfg.tol("c0_rel"), 2: cfg.tol("c1_rel")}
    for k, name in ((0, "c0"), (2, "c1")):
        c = fitter.coefficient(k)
        rep.values[f"{name}(N={cfg.N})"] = [c.real, c.imag]
        rep.add(f"{name} vs tau(I_{k})", abs(c - ref[k]) / abs(ref[k]), tols[k], f"fit={c.real:.8g}")
    if cfg.doubling_N:
        fits[cfg.doubling_N], *_ = fit_heat_trace(cfg, cfg.doubling_N)
        for k, name in ((0, "c0"), (2, "c1")):
            a, b = fits[cfg.N].coefficient(k), fits[cfg.doubling_N].coefficient(k)
            rep.values[f"{name}(N={cfg.doubling_N})"] = [b.real, b.imag]
            rep.add(
                f"{name} doubling shift (N={cfg.doubling_N} vs {cfg.N})",
                abs(a - b) / abs(ref[k]),
                cfg.tol("doubling_fraction") * tols[k],
            )
    return rep


SUITES: dict[str, Callable[[RunConfig], Report]] = {
    "dd": suite_dd,
    "moi": suite_moi,
    "symbols": suite_symbols,
    "conjugation": suite_conjugation,
    "heatfit": suite_heatfit,
}


def run_suite(name: str, cfg: RunConfig) -> Report:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    t0 = time.perf_counter()
    rep = SUITES[name](cfg)
    rep.seconds = time.perf_counter() - t0
    return rep
