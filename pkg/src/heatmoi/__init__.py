"""Symbolic heat-kernel invariants of Laplace type operators on noncommutative
tori, expressed through multiple operator integrals, with numerical
realisations and verification suites."""

from .divdiff import FunctionSpec, dd_eval, dd_expand_power, dd_quadrature, fkd
from .latex import emit, load_golden, parse, term_diff
from .moi import SparseOperator, SpectralOperator, moi_apply, moi_spectral, simplex_fm
from .recursion import count_terms, expand_T, local_invariant
from .terms import MOIExpression
from .torus import (
    FourierElement,
    HeatTraceFitter,
    ThetaMatrix,
    TruncatedRep,
    build_P,
    heat_trace,
    invariant_element,
    tau,
)

__all__ = [
    "FourierElement",
    "FunctionSpec",
    "HeatTraceFitter",
    "MOIExpression",
    "SparseOperator",
    "SpectralOperator",
    "ThetaMatrix",
    "TruncatedRep",
    "build_P",
    "count_terms",
    "dd_eval",
    "dd_expand_power",
    "dd_quadrature",
    "emit",
    "expand_T",
    "fkd",
    "heat_trace",
    "invariant_element",
    "load_golden",
    "local_invariant",
    "moi_apply",
    "moi_spectral",
    "parse",
    "simplex_fm",
    "tau",
    "term_diff",
]
