"""Exact symbolic terms: atoms, formal differential operators and MOI expressions.

Index labels are small non-negative integers.  A label is *summed* (Einstein
convention, implicitly over ``1..d``) unless the owning expression declares it
free.  Canonical forms are computed by minimising over bijective relabelings
of the summed labels, so two terms that differ only by a renaming of dummy
indices always collapse to the same key.
"""

from __future__ import annotations

import itertools
from collections import Counter
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

NO_LABEL = -1


class Atom(NamedTuple):
    """``D^alpha g`` for a generator ``g``.

    ``name`` is ``"x"``, ``"a"`` or any other symbol name.  ``label`` is the
    index carried by the generator itself (``a_i``) or ``NO_LABEL``; the
    zeroth-order coefficient ``a`` is therefore ``Atom("a", NO_LABEL, ())``.
    ``derivs`` is kept sorted because partial derivatives commute.
    """

    name: str
    label: int
    derivs: tuple[int, ...]

    @property
    def generator(self) -> tuple[str, int]:
        return (self.name, self.label)

    @property
    def order(self) -> int:
        return len(self.derivs)

    def labels(self) -> Iterator[int]:
        if self.label != NO_LABEL:
            yield self.label
        yield from self.derivs

    def differentiate(self, i: int) -> "Atom":
        return Atom(self.name, self.label, tuple(sorted(self.derivs + (i,))))


def atom(name: str, label: int = NO_LABEL, derivs: Iterable[int] = ()) -> Atom:
    return Atom(name, label, tuple(sorted(derivs)))


def X(*derivs: int) -> Atom:
    return atom("x", NO_LABEL, derivs)


def A(label: int, *derivs: int) -> Atom:
    return atom("a", label, derivs)


def APOT(*derivs: int) -> Atom:
    return atom("a", NO_LABEL, derivs)


# ---------------------------------------------------------------------------
# coefficients


def _poly_trim(p: Sequence[Fraction]) -> tuple[Fraction, ...]:
    p = list(p)
    while p and p[-1] == 0:
        p.pop()
    return tuple(p)


def _poly_add(p, q):
    n = max(len(p), len(q))
    return _poly_trim(
        [(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)]
    )


def _poly_mul(p, q):
    if not p or not q:
        return ()
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return _poly_trim(out)


def _poly_eval(p, d):
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * d + c
    return acc


def _poly_div_linear(p, j):
    """Divide ``p(d)`` by ``(d + j)``; caller guarantees exactness."""
    # synthetic division at root -j, highest degree first
    coeffs = list(reversed(p))
    out = []
    carry = Fraction(0)
    for c in coeffs[:-1]:
        carry = c + carry
        out.append(carry)
        carry = carry * (-j)
    return tuple(reversed(out))


class CoefficientFunction:
    """``p(d) / prod_j (d + j)`` with ``p`` a rational polynomial in ``d``.

    Terms produced by the recursion always have a constant numerator; the
    polynomial numerator only appears after adding across denominators.
    """

    __slots__ = ("num", "den", "_hash")

    def __init__(self, num=(Fraction(1),), den: Iterable[int] = ()):
        if isinstance(num, (int, Fraction)):
            num = (Fraction(num),)
        num = _poly_trim([Fraction(c) for c in num])
        den = sorted(den)
        if any(j < 0 or j % 2 for j in den):
            raise ValueError("denominator shifts must be even and non-negative")
        # cancel common linear factors
        if not num:
            den = []
        else:
            kept = []
            for j in den:
                if len(num) > 1 and _poly_eval(num, -j) == 0:
                    num = _poly_div_linear(num, j)
                else:
                    kept.append(j)
            den = kept
        self.num = num
        self.den = tuple(den)
        self._hash = None

    @classmethod
    def const(cls, value) -> "CoefficientFunction":
        return cls((Fraction(value),), ())

    def is_zero(self) -> bool:
        return not self.num

    def is_constant_numerator(self) -> bool:
        return len(self.num) <= 1

    @property
    def numerator(self) -> Fraction:
        if len(self.num) > 1:
            raise ValueError("numerator is not constant")
        return self.num[0] if self.num else Fraction(0)

    def __call__(self, d) -> Fraction:
        d = Fraction(d)
        den = Fraction(1)
        for j in self.den:
            den *= d + j
        if den == 0:
            raise ZeroDivisionError(f"coefficient singular at d={d}")
        return _poly_eval(self.num, d) / den

    def __add__(self, other) -> "CoefficientFunction":
        other = _as_coeff(other)
        ca, cb = Counter(self.den), Counter(other.den)
        lcm = ca | cb
        fa = _expand_factors(lcm - ca)
        fb = _expand_factors(lcm - cb)
        num = _poly_add(_poly_mul(self.num, fa), _poly_mul(other.num, fb))
        return CoefficientFunction(num, lcm.elements())

    __radd__ = __add__

    def __neg__(self) -> "CoefficientFunction":
        return CoefficientFunction(tuple(-c for c in self.num), self.den)

    def __sub__(self, other) -> "CoefficientFunction":
        return self + (-_as_coeff(other))

    def __mul__(self, other) -> "CoefficientFunction":
        other = _as_coeff(other)
        return CoefficientFunction(_poly_mul(self.num, other.num), self.den + other.den)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = CoefficientFunction.const(other)
        if not isinstance(other, CoefficientFunction):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.num, self.den))
        return self._hash

    def __repr__(self) -> str:
        return f"CoefficientFunction({self.to_text()})"

    def numerator_text(self) -> str:
        terms = []
        for power, c in enumerate(self.num):
            if c == 0:
                continue
            mono = "" if power == 0 else ("d" if power == 1 else f"d^{power}")
            if mono and c == 1:
                terms.append(mono)
            elif mono and c == -1:
                terms.append("-" + mono)
            else:
                terms.append(f"{c}{'*' + mono if mono else ''}")
        return " + ".join(reversed(terms)) if terms else "0"

    def denominator_text(self) -> str:
        return "*".join("d" if j == 0 else f"(d+{j})" for j in self.den)

    def to_text(self) -> str:
        n = self.numerator_text()
        if not self.den:
            return n
        return f"({n})/({self.denominator_text()})"


def _expand_factors(counter: Counter) -> tuple[Fraction, ...]:
    poly: tuple[Fraction, ...] = (Fraction(1),)
    for j in counter.elements():
        poly = _poly_mul(poly, (Fraction(j), Fraction(1)))
    return poly


def _as_coeff(value) -> CoefficientFunction:
    if isinstance(value, CoefficientFunction):
        return value
    return CoefficientFunction.const(value)


def coeff_add(a: CoefficientFunction, b: CoefficientFunction) -> CoefficientFunction:
    return _as_coeff(a) + _as_coeff(b)


# ---------------------------------------------------------------------------
# formal differential operators


class XTerm(NamedTuple):
    """``coeff * atom * D_{formal[0]} D_{formal[1]} ...``.

    ``formal`` keeps the order in which the symbols were written; the
    recursion peels them from the right.
    """

    coeff: Fraction
    atom: Atom
    formal: tuple[int, ...] = ()

    @property
    def is_algebra_element(self) -> bool:
        return not self.formal


def xterm(atom_: Atom, *formal: int, coeff=1) -> XTerm:
    return XTerm(Fraction(coeff), atom_, tuple(formal))


# ---------------------------------------------------------------------------
# multiple operator integrals


class FSymbol(NamedTuple):
    """Name of the function whose divided differences appear: ``F_{k,d}`` or a bare ``f``."""

    name: str = "F"
    k: int | None = None

    def latex(self, order: int) -> str:
        if self.k is None:
            return f"{self.name}^{{[{order}]}}"
        return f"{self.name}_{{{self.k},d}}^{{[{order}]}}"


class MOITerm(NamedTuple):
    coeff: CoefficientFunction
    symbol: FSymbol
    args: tuple[Atom, ...]

    @property
    def order(self) -> int:
        return len(self.args)


def term_labels(args: Sequence[Atom]) -> Counter:
    c: Counter = Counter()
    for at in args:
        c.update(at.labels())
    return c


def _relabel(args, mapping):
    get = mapping.get
    return tuple(
        Atom(a.name, get(a.label, a.label), tuple(sorted(get(l, l) for l in a.derivs)))
        for a in args
    )


def canonical_args(args: Sequence[Atom], free: frozenset = frozenset()) -> tuple[Atom, ...] | None:
    """Canonical representative of ``args`` under renaming of summed labels.

    Returns ``None`` when a summed label occurs an odd number of times; such
    terms vanish after averaging over the sphere.
    """
    seen: list[int] = []
    counts: Counter = Counter()
    for a in args:
        for l in a.labels():
            if l in free:
                continue
            if l not in counts:
                seen.append(l)
            counts[l] += 1
    if any(c % 2 for c in counts.values()):
        return None
    if not seen:
        return tuple(args)
    targets = []
    t = 0
    while len(targets) < len(seen):
        if t not in free:
            targets.append(t)
        t += 1
    if len(seen) == 1:
        return _relabel(args, {seen[0]: targets[0]})
    best = None
    for perm in itertools.permutations(targets):
        cand = _relabel(args, dict(zip(seen, perm)))
        if best is None or cand < best:
            best = cand
    return best


class MOIExpression:
    """Canonical sum of ``coeff * T^x_{f^{[m]}}(args)``.

    Terms are keyed by ``(args, denominator)``: coefficients with different
    ``d``-denominators are kept apart, mirroring the grouping of the emitted
    formula.  ``sign`` and ``pi_power`` record the global prefactor
    ``sign * pi^{pi_power * d/2}``, which is never folded into coefficients.
    """

    def __init__(
        self,
        symbol: FSymbol = FSymbol(),
        free: Iterable[int] = (),
        sign: int = 1,
        pi_power: int = 0,
    ):
        self.symbol = symbol
        self.free = frozenset(free)
        self.sign = sign
        self.pi_power = pi_power
        self._terms: dict[tuple, CoefficientFunction] = {}

    # -- construction -----------------------------------------------------
    def add(self, args: Sequence[Atom], coeff) -> None:
        coeff = _as_coeff(coeff)
        if coeff.is_zero():
            return
        key_args = canonical_args(args, self.free)
        if key_args is None:
            return
        self._add_canonical(key_args, coeff)

    def _add_canonical(self, key_args, coeff: CoefficientFunction) -> None:
        key = (key_args, coeff.den)
        old = self._terms.get(key)
        new = coeff if old is None else old + coeff
        if new.is_zero():
            self._terms.pop(key, None)
        elif new.den != coeff.den:
            # adding polynomial numerators can cancel a denominator factor
            self._terms.pop(key, None)
            self._add_canonical(key_args, new)
        else:
            self._terms[key] = new

    def add_raw_counts(self, raw: Mapping[tuple, int], scale: CoefficientFunction) -> None:
        """Add a mapping ``args -> integer multiplicity`` times ``scale``."""
        for args, mult in raw.items():
            if mult:
                self.add(args, scale * mult)

    def copy(self) -> "MOIExpression":
        out = MOIExpression(self.symbol, self.free, self.sign, self.pi_power)
        out._terms = dict(self._terms)
        return out

    # -- inspection -------------------------------------------------------
    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[MOITerm]:
        for (args, _den), c in sorted(self._terms.items(), key=_sort_key):
            yield MOITerm(c, self.symbol, args)

    @property
    def terms(self) -> list[MOITerm]:
        return list(self)

    def term_set(self) -> dict[tuple, CoefficientFunction]:
        return dict(self._terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MOIExpression):
            return NotImplemented
        return (
            self._terms == other._terms
            and self.symbol == other.symbol
            and self.free == other.free
            and self.sign == other.sign
            and self.pi_power == other.pi_power
        )

    def __repr__(self) -> str:
        return f"<MOIExpression {len(self)} terms, symbol={self.symbol}>"

    def __add__(self, other: "MOIExpression") -> "MOIExpression":
        out = self.copy()
        for (args, _), c in other._terms.items():
            out.add(args, c)
        return out

    def scaled(self, factor) -> "MOIExpression":
        out = MOIExpression(self.symbol, self.free, self.sign, self.pi_power)
        for (args, _), c in self._terms.items():
            out.add(args, c * factor)
        return out

    def relabeled(self, mapping: Mapping[int, int]) -> "MOIExpression":
        """Apply a renaming to every summed label and re-canonicalize."""
        out = MOIExpression(self.symbol, self.free, self.sign, self.pi_power)
        for (args, _), c in self._terms.items():
            out.add(_relabel(args, mapping), c)
        return out

    def max_order(self) -> int:
        return max((len(a) for (a, _) in self._terms), default=0)


def _sort_key(item):
    (args, den), c = item
    return (den, len(args), args, c.num)


def canonicalize(expr: MOIExpression) -> MOIExpression:
    out = MOIExpression(expr.symbol, expr.free, expr.sign, expr.pi_power)
    for (args, _), c in expr.term_set().items():
        out.add(args, c)
    return out


def substitute_dimension(expr: MOIExpression, d: int) -> MOIExpression:
    """Evaluate every coefficient at the integer dimension ``d``.

    Terms that only differed by their ``d``-denominator merge.
    """
    if int(d) != d or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d!r}")
    out = MOIExpression(expr.symbol, expr.free, expr.sign, expr.pi_power)
    for (args, _), c in expr.term_set().items():
        out.add(args, CoefficientFunction.const(c(d)))
    return out
