"""LaTeX rendering of local invariants, a reparser for the rendered text and
the bundled golden expression for ``k = 2``."""

from __future__ import annotations

import json
import re
from collections import defaultdict
from fractions import Fraction
from importlib import resources
from typing import Iterable, Sequence

from .terms import (
    NO_LABEL,
    Atom,
    CoefficientFunction,
    FSymbol,
    MOIExpression,
    MOITerm,
    substitute_dimension,
)

LETTERS = "ijklmnpqrsuvw"


def _letter(n: int) -> str:
    if n < len(LETTERS):
        return LETTERS[n]
    return f"{LETTERS[n % len(LETTERS)]}{n // len(LETTERS)}"


def _first_use(args: Sequence[Atom]) -> dict[int, int]:
    order: dict[int, int] = {}
    for at in args:
        for l in at.labels():
            order.setdefault(l, len(order))
    return order


def atom_latex(at: Atom, names: dict[int, str]) -> str:
    ds = "".join(f"D_{{{names[l]}}}" if len(names[l]) > 1 else f"D_{names[l]}" for l in at.derivs)
    if at.label == NO_LABEL:
        base = at.name
    else:
        lab = names[at.label]
        base = f"{at.name}_{{{lab}}}" if len(lab) > 1 else f"{at.name}_{lab}"
    return ds + base


def _coeff_latex(c: Fraction, first: bool) -> str:
    sign = "-" if c < 0 else ("" if first else "+")
    c = abs(c)
    if c == 1:
        body = ""
    elif c.denominator == 1:
        body = str(c.numerator)
    else:
        body = f"\\frac{{{c.numerator}}}{{{c.denominator}}}"
    return sign + body


def _den_latex(den: Sequence[int]) -> str:
    return "".join("d" if j == 0 else f"(d+{j})" for j in den)


def term_latex(term: MOITerm, first: bool = False, d: int | None = None) -> str:
    names = {l: _letter(n) for l, n in _first_use(term.args).items()}
    coeff = _coeff_latex(term.coeff.numerator, first)
    body = ",".join(atom_latex(a, names) for a in term.args)
    sym = term.symbol.latex(len(term.args))
    if d is not None:
        sym = sym.replace(",d}", f",{d}}}")
    return f"{coeff}T^x_{{{sym}}}({body})"


def _lhs(expr: MOIExpression, k: int, d: int | None) -> str:
    sign = "-" if expr.sign < 0 else ""
    power = "-d/2" if d is None else ("-" + (str(d // 2) if d % 2 == 0 else f"{d}/2"))
    idx = f"{{{k}}}" if k >= 10 else str(k)
    return f"{sign}\\pi^{{{power}}}I_{idx}"


def group_terms(expr: MOIExpression) -> dict:
    """Terms keyed by ``(denominator, number of summed labels)`` in emission order."""
    groups: dict = defaultdict(list)
    for term in expr:
        if not term.coeff.is_constant_numerator():
            raise ValueError("only constant numerators can be rendered")
        groups[(term.coeff.den, len(_first_use(term.args)))].append(term)
    return dict(sorted(groups.items(), key=lambda kv: (len(kv[0][0]), kv[0][0], kv[0][1])))


def emit(expr: MOIExpression, terms_per_line: int = 4, d: int | None = None) -> str:
    """Render ``expr`` with the global prefactor moved to the left-hand side.

    Each coefficient family with a given number of summed labels becomes one
    block ``\\sum_{i,j}\\frac{1}{d(d+2)}\\Bigg( ... \\Bigg)``.  With an
    integer ``d`` the coefficients are evaluated first and families merge.
    """
    if d is not None:
        expr = substitute_dimension(expr, d)
    k = expr.symbol.k if expr.symbol.k is not None else 0
    lines = [f"{_lhs(expr, k, d)}="]
    if not len(expr):
        lines[0] += "0"
        return "\n".join(lines)
    first_block = True
    for (den, nlab), terms in group_terms(expr).items():
        head = "" if first_block else "+"
        first_block = False
        if nlab:
            head += "\\sum_{" + ",".join(_letter(n) for n in range(nlab)) + "}"
        if den:
            head += f"\\frac{{1}}{{{_den_latex(den)}}}"
        wrap = bool(head.strip("+"))
        body = [term_latex(t, first=j == 0, d=d) for j, t in enumerate(terms)]
        if wrap:
            lines.append(head + "\\Bigg(")
        elif head:
            body[0] = "+" + body[0] if not body[0].startswith("-") else body[0]
        for s in range(0, len(body), terms_per_line):
            lines.append("".join(body[s : s + terms_per_line]))
        if wrap:
            lines.append("\\Bigg)")
    if len(lines) == 2:
        return "".join(lines)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# reparsing

_LHS = re.compile(r"^(-?)\\pi\^\{-[^}]*\}I_\{?(\d+)\}?=")
_BLOCK = re.compile(r"([+-]?)(?:\\sum_\{([^}]*)\})?(?:\\frac\{1\}\{([^}]*)\})?\\Bigg\(")
_TERM = re.compile(
    r"([+-]?)(\d*|\\frac\{\d+\}\{\d+\})T\^x_\{(\w+)(?:_\{(\d+),\w+\})?\^\{\[(\d+)\]\}\}\(([^()]*)\)"
)
_ATOM = re.compile(r"^((?:D_(?:\{\w+\}|\w))*)([A-Za-z]+)(?:_(\{\w+\}|\w))?$")
_DERIV = re.compile(r"D_(\{\w+\}|\w)")
_DEN = re.compile(r"d(?:\+(\d+))?")


def _strip(label: str) -> str:
    return label[1:-1] if label.startswith("{") else label


def parse_atom(text: str, names: dict[str, int]) -> Atom:
    m = _ATOM.match(text.strip())
    if not m:
        raise ValueError(f"cannot parse argument {text!r}")
    derivs, name, lab = m.groups()
    idx = [names.setdefault(_strip(l), len(names)) for l in _DERIV.findall(derivs)]
    label = NO_LABEL if lab is None else names.setdefault(_strip(lab), len(names))
    return Atom(name, label, tuple(sorted(idx)))


def parse_args(items: Iterable[str]) -> tuple[Atom, ...]:
    names: dict[str, int] = {}
    return tuple(parse_atom(s, names) for s in items)


def _parse_den(text: str | None) -> tuple[int, ...]:
    if not text:
        return ()
    shifts = [int(m.group(1) or 0) for m in _DEN.finditer(text)]
    return tuple(shifts)


def _parse_coeff(sign: str, body: str) -> Fraction:
    if not body:
        c = Fraction(1)
    elif body.startswith("\\frac"):
        p, q = re.findall(r"\d+", body)
        c = Fraction(int(p), int(q))
    else:
        c = Fraction(int(body))
    return -c if sign == "-" else c


def parse(text: str) -> MOIExpression:
    """Inverse of :func:`emit`."""
    flat = "".join(text.split())
    m = _LHS.match(flat)
    if not m:
        raise ValueError("missing left-hand side")
    sign = -1 if m.group(1) else 1
    k = int(m.group(2))
    expr = MOIExpression(FSymbol("F", k), sign=sign, pi_power=1)
    pos = m.end()
    den: tuple[int, ...] = ()
    while pos < len(flat):
        b = _BLOCK.match(flat, pos)
        if b:
            den = _parse_den(b.group(3))
            pos = b.end()
            continue
        if flat.startswith("\\Bigg)", pos):
            den = ()
            pos += len("\\Bigg)")
            continue
        t = _TERM.match(flat, pos)
        if not t:
            if flat[pos:] == "0":
                break
            raise ValueError(f"unexpected text at {flat[pos:pos + 40]!r}")
        sgn, body, _name, _k, order, args = t.groups()
        atoms = parse_args(args.split(",")) if args else ()
        if len(atoms) != int(order):
            raise ValueError("divided-difference order does not match argument count")
        expr.add(atoms, CoefficientFunction((_parse_coeff(sgn, body),), den))
        pos = t.end()
    return expr


# ---------------------------------------------------------------------------
# golden data


def load_golden(name: str = "golden_k2.json") -> MOIExpression:
    raw = json.loads(resources.files("heatmoi.data").joinpath(name).read_text())
    expr = MOIExpression(FSymbol("F", raw["k"]), sign=raw["sign"], pi_power=1)
    for t in raw["terms"]:
        expr.add(parse_args(t["args"]), CoefficientFunction((Fraction(t["coeff"]),), t["den"]))
    return expr


def term_diff(actual: MOIExpression, expected: MOIExpression) -> list[str]:
    """Human-readable lines for every term present on only one side or with
    differing coefficients."""
    a, e = actual.term_set(), expected.term_set()
    out = []
    for key in sorted(set(a) | set(e), key=lambda k: (k[1], len(k[0]), k[0])):
        ca, ce = a.get(key), e.get(key)
        if ca == ce:
            continue
        term = MOITerm(ca or ce, actual.symbol, key[0])
        txt = term_latex(term, first=True)
        fam = _den_latex(key[1]) or "1"
        if ce is None:
            out.append(f"+ only in actual   [1/{fam}] {txt}")
        elif ca is None:
            out.append(f"- only in expected [1/{fam}] {txt}")
        else:
            out.append(f"~ coefficient {ca.to_text()} vs {ce.to_text()} [1/{fam}] {txt}")
    return out


def family_counts(expr: MOIExpression) -> dict[str, int]:
    """Number of terms per ``(denominator, summed labels, order)`` family."""
    out: dict[str, int] = defaultdict(int)
    for (den, nlab), terms in group_terms(expr).items():
        for t in terms:
            out[f"1/{_den_latex(den) or '1'} labels={nlab} order={len(t.args)}"] += 1
    return dict(out)
