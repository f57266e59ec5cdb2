"""Plain-text run configuration (INI sections, ``key = value``).

Example::

    [run]
    d = 2

    [torus]
    N = 32
    theta = 0.3

    [x]
    0,0 = 1.5
    1,0 = 0.2
    -1,0 = 0.2

    [fit]
    t_min = 0.03
    t_max = 0.3
    t_count = 60
    orders = 0 2 4 6 8

Fourier sections (``x``, ``a``, ``a_1`` .. ``a_d``, ``y``) map a mode
``m_1,...,m_d`` to a complex coefficient.  Every tolerance has a default in
:data:`DEFAULT_TOLERANCES` and may be overridden in ``[tolerances]``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .torus import FourierElement, ThetaMatrix


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


DEFAULT_TOLERANCES = {
    # divided differences
    "dd_quadrature_rel": 1e-8,
    "dd_symmetry": 1e-10,
    "dd_confluent": 1e-10,
    "dd_expand_power": 1e-12,
    # operator integrals
    "simplex_rel": 1e-6,
    "commutator": 1e-10,
    "algebraic_rel": 1e-10,
    "contour_rel": 1e-10,
    # scalar symbols
    "phi_at_unit": 1e-10,
    "phi_forms": 1e-10,
    "psi_forms": 1e-10,
    "primitive_pair": 1e-8,
    "modular_phi_psi": 1e-8,
    "k0_four": 1e-12,
    "k0_limit": 1e-4,
    # heat trace
    "c0_rel": 0.02,
    "c1_rel": 0.05,
    "doubling_fraction": 0.5,
    "reference_convergence": 1e-6,
    "fit_residual": 1e-6,
    # conjugation
    "conjugation": 1e-3,
    "conjugation_floor": 1e-12,
}


@dataclass
class RunConfig:
    d: int = 2
    k: int = 2
    theta: ThetaMatrix | None = None
    x: FourierElement | None = None
    a_vec: list = field(default_factory=list)
    a: FourierElement | None = None
    y: FourierElement | None = None
    N: int = 16
    doubling_N: int | None = None
    conjugation_N: tuple = (16, 24, 32)
    interior: float = 0.5
    t_min: float = 0.03
    t_max: float = 0.3
    t_count: int = 60
    orders: tuple = (0, 2, 4, 6, 8)
    reference: str = "invariants"
    reference_N: int = 16
    reference_check_N: int | None = 20
    seed: int = 0
    grid_size: int = 20
    dims: tuple = (2, 3, 4, 6)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    csv: Path | None = None
    report: Path | None = None

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.t_count)

    def tol(self, name: str) -> float:
        return self.tolerances[name]

    def validate(self, numeric: bool = True) -> "RunConfig":
        if self.k < 0 or self.k % 2:
            raise ConfigError(f"k must be a non-negative even integer, got {self.k}")
        if numeric and self.d < 2:
            raise ConfigError(f"numeric runs need d >= 2, got {self.d}")
        if self.theta is not None and self.theta.d != self.d:
            raise ConfigError("theta size does not match d")
        for name, el in self.fourier_items():
            if el is not None and el.d != self.d:
                raise ConfigError(f"[{name}] modes must have {self.d} entries")
        if len(self.a_vec) > self.d:
            raise ConfigError("more a_i sections than dimensions")
        if self.N < 1 or (self.doubling_N is not None and self.doubling_N < 1):
            raise ConfigError("truncation N must be positive")
        if not 0 < self.t_min < self.t_max or self.t_count < len(self.orders):
            raise ConfigError("t-grid must satisfy 0 < t_min < t_max with t_count >= #orders")
        if self.reference not in ("invariants", "analytic"):
            raise ConfigError(f"unknown reference {self.reference!r}")
        if any(v < 0 for v in self.tolerances.values()):
            raise ConfigError("tolerances must be non-negative")
        return self

    def fourier_items(self):
        yield "x", self.x
        yield "a", self.a
        yield "y", self.y
        for i, el in enumerate(self.a_vec, 1):
            yield f"a_{i}", el

    def theta_matrix(self) -> ThetaMatrix:
        return self.theta if self.theta is not None else ThetaMatrix.zero(self.d)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _fourier(section: configparser.SectionProxy, d: int) -> FourierElement:
    coeffs = {}
    for key, val in section.items():
        try:
            mode = _ints(key)
            c = complex(val.replace(" ", ""))
        except ValueError as exc:
            raise ConfigError(f"[{section.name}] bad entry {key} = {val}") from exc
        if len(mode) != d:
            raise ConfigError(f"[{section.name}] mode {key} must have {d} entries")
        coeffs[mode] = coeffs.get(mode, 0) + c
    return FourierElement(coeffs, d)


def _theta(text: str, d: int) -> ThetaMatrix:
    rows = [r for r in text.split(";") if r.strip()]
    try:
        if len(rows) == 1 and len(rows[0].split()) == 1:
            if d != 2:
                raise ConfigError("a scalar theta is only meaningful for d = 2")
            return ThetaMatrix.two_dim(float(rows[0]))
        return ThetaMatrix(np.array([[float(v) for v in r.split()] for r in rows]))
    except ValueError as exc:
        raise ConfigError(f"invalid theta: {exc}") from exc


def parse_config(text: str, base: Path | None = None, numeric: bool = True) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    known = {"run", "torus", "fit", "reference", "conjugation", "suite", "tolerances", "output",
             "x", "a", "y"}
    cfg = RunConfig()
    try:
        run = cp["run"] if cp.has_section("run") else {}
        cfg.d = int(run.get("d", cfg.d))
        cfg.k = int(run.get("k", cfg.k))
        cfg.seed = int(run.get("seed", cfg.seed))
        if cp.has_section("torus"):
            s = cp["torus"]
            cfg.N = s.getint("N", cfg.N)
            if "doubling_N" in s:
                cfg.doubling_N = s.getint("doubling_N")
            if "theta" in s:
                cfg.theta = _theta(s["theta"], cfg.d)
        if cp.has_section("fit"):
            s = cp["fit"]
            cfg.t_min = s.getfloat("t_min", cfg.t_min)
            cfg.t_max = s.getfloat("t_max", cfg.t_max)
            cfg.t_count = s.getint("t_count", cfg.t_count)
            if "orders" in s:
                cfg.orders = _ints(s["orders"])
        if cp.has_section("reference"):
            s = cp["reference"]
            cfg.reference = s.get("kind", cfg.reference)
            cfg.reference_N = s.getint("N", cfg.reference_N)
            if "check_N" in s:
                v = s["check_N"].strip()
                cfg.reference_check_N = None if v.lower() in ("", "none") else int(v)
        if cp.has_section("conjugation"):
            s = cp["conjugation"]
            if "N" in s:
                cfg.conjugation_N = _ints(s["N"])
            cfg.interior = s.getfloat("interior", cfg.interior)
        if cp.has_section("suite"):
            s = cp["suite"]
            cfg.grid_size = s.getint("grid_size", cfg.grid_size)
            if "dims" in s:
                cfg.dims = _ints(s["dims"])
        if cp.has_section("tolerances"):
            for key, val in cp["tolerances"].items():
                if key not in DEFAULT_TOLERANCES:
                    raise ConfigError(f"unknown tolerance {key!r}")
                cfg.tolerances[key] = float(val)
        if cp.has_section("output"):
            s = cp["output"]
            for name in ("csv", "report"):
                if name in s:
                    p = Path(s[name])
                    setattr(cfg, name, p if base is None or p.is_absolute() else base / p)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    for name in ("x", "a", "y"):
        if cp.has_section(name):
            setattr(cfg, name, _fourier(cp[name], cfg.d))
    a_sections = sorted(
        (s for s in cp.sections() if s.startswith("a_")), key=lambda s: int(s[2:]) if s[2:].isdigit() else -1
    )
    for s in a_sections:
        if not s[2:].isdigit() or not 1 <= int(s[2:]) <= cfg.d:
            raise ConfigError(f"section [{s}] must be a_1 .. a_{cfg.d}")
        i = int(s[2:])
        while len(cfg.a_vec) < i:
            cfg.a_vec.append(None)
        cfg.a_vec[i - 1] = _fourier(cp[s], cfg.d)
    unknown = [s for s in cp.sections() if s not in known and s not in a_sections]
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(unknown)}")
    return cfg.validate(numeric)


def load_config(path, numeric: bool = True) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, path.parent, numeric)
