"""Recursive expansion of ``T^{x,m}_f`` on formal differential operators and
assembly of the local invariants ``I_k``.
"""

from __future__ import annotations

import itertools
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import Iterable, Iterator, NamedTuple, Sequence, Union

from .terms import (
    APOT,
    X,
    A,
    Atom,
    CoefficientFunction,
    FSymbol,
    MOIExpression,
    XTerm,
    canonical_args,
    xterm,
)

Slot = Union[XTerm, Sequence[XTerm]]


def _dx(i: int) -> Atom:
    return Atom("x", -1, (i,))


class _Sweep:
    """Memoised left-to-right expansion.

    State: ``pend`` are the formal symbols still attached to the slot whose
    atom was just emitted, ``tail`` the remaining slots as ``(atom, formal)``.
    Peeling a symbol from ``pend`` when more slots follow yields the three
    summands of the defining rule (insert ``D_i x``, differentiate the next
    atom, push the symbol onto the next slot).  The rule remains valid when the
    next slot still carries formal symbols, so the slots need not be processed
    right to left.
    """

    def __init__(self, peel: str = "right"):
        if peel not in ("right", "left"):
            raise ValueError(f"peel must be 'right' or 'left', got {peel!r}")
        self.peel = peel
        self.cache: dict = {}

    def __call__(self, pend: tuple, tail: tuple) -> dict:
        key = (pend, tail)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if not pend:
            if not tail:
                out = {(): 1}
            else:
                at, ds = tail[0]
                out = {(at,) + t: c for t, c in self(ds, tail[1:]).items()}
        else:
            if self.peel == "right":
                i, rest = pend[-1], pend[:-1]
            else:
                i, rest = pend[0], pend[1:]
            if not tail:
                out = self(rest, ((_dx(i), ()),))
            else:
                at, ds = tail[0]
                acc: dict = defaultdict(int)
                for sub in (
                    ((_dx(i), ()),) + tail,
                    ((at.differentiate(i), ds),) + tail[1:],
                    ((at, (i,) + ds),) + tail[1:],
                ):
                    for t, c in self(rest, sub).items():
                        acc[t] += c
                out = dict(acc)
        self.cache[key] = out
        return out


def _expand_definition(slots: list) -> Counter:
    """Literal reading of the recursive definition (slow reference).

    Always peels the rightmost symbol of the rightmost slot carrying one, so
    every slot to its right is an algebra element, as the rules require.
    """
    out: Counter = Counter()
    for k in range(len(slots) - 1, -1, -1):
        if slots[k][1]:
            break
    else:
        out[tuple(at for at, _ in slots)] += 1
        return out
    at, ds = slots[k]
    i, rest = ds[-1], ds[:-1]
    head = slots[:k] + [(at, rest)]
    if k == len(slots) - 1:
        out.update(_expand_definition(head + [(_dx(i), ())]))
        return out
    nxt_atom, _ = slots[k + 1]
    after = slots[k + 2 :]
    out.update(_expand_definition(head + [(_dx(i), ())] + slots[k + 1 :]))
    out.update(_expand_definition(head + [(nxt_atom.differentiate(i), ())] + after))
    out.update(_expand_definition(head + [(nxt_atom, (i,))] + after))
    return out


def _as_sum(slot: Slot) -> list[XTerm]:
    if isinstance(slot, XTerm):
        return [slot]
    out = list(slot)
    if not all(isinstance(t, XTerm) for t in out):
        raise TypeError("each slot must be an XTerm or a sequence of XTerms")
    return out


def expand_raw(
    args: Sequence[Slot], method: str = "sweep", peel: str = "right", sweep: _Sweep | None = None
) -> dict[tuple[Atom, ...], Fraction]:
    """Expand into un-canonicalised ``args -> coefficient`` form."""
    sums = [_as_sum(s) for s in args]
    if method == "sweep":
        sweep = sweep or _Sweep(peel)
    elif method != "definition":
        raise ValueError(f"unknown method {method!r}")
    out: dict = defaultdict(Fraction)
    for combo in itertools.product(*sums):
        c = Fraction(1)
        for t in combo:
            c *= t.coeff
        if c == 0:
            continue
        slots = tuple((t.atom, tuple(t.formal)) for t in combo)
        if method == "sweep":
            raw = sweep((), slots)
        else:
            raw = _expand_definition(list(slots))
        for atoms, mult in raw.items():
            out[atoms] += c * mult
    return {k: v for k, v in out.items() if v}


def expand_T(
    f: FSymbol,
    args: Sequence[Slot],
    free: Iterable[int] = (),
    method: str = "sweep",
    peel: str = "right",
) -> MOIExpression:
    """``T^{x,m}_f(args)`` as a canonical sum of multiple operator integrals.

    Each slot is a sum of :class:`XTerm`.  Labels listed in ``free`` are
    treated as fixed external indices; all other labels are summed.
    """
    expr = MOIExpression(f, free=free)
    for atoms, c in expand_raw(args, method, peel).items():
        expr.add(atoms, c)
    return expr


# ---------------------------------------------------------------------------
# sphere moments and blocks


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def sphere_moment(multiplicities: Iterable[int]) -> CoefficientFunction:
    """Average of ``prod_j u_j^{n_j}`` over the unit sphere in ``R^d``."""
    ns = [int(n) for n in multiplicities if n]
    if any(n < 0 for n in ns):
        raise ValueError("multiplicities must be non-negative")
    if any(n % 2 for n in ns):
        return CoefficientFunction.const(0)
    num = 1
    for n in ns:
        num *= _double_factorial(n - 1)
    half = sum(ns) // 2
    return CoefficientFunction((Fraction(num),), [2 * j for j in range(half)])


class Block(NamedTuple):
    """One summand of the main formula.

    ``m`` is the number of slots, ``A`` the (0-based) positions holding
    ``A_i`` slots and ``classes`` groups those positions by shared index.
    Under the ``pairing`` collapse every class is a pair and labels are summed
    freely; under ``partition`` classes carry pairwise distinct values.
    """

    m: int
    A: tuple[int, ...]
    classes: tuple[tuple[int, ...], ...]
    coeff: CoefficientFunction


def _pairings(items: tuple) -> Iterator[tuple]:
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for j, other in enumerate(rest):
        remaining = rest[:j] + rest[j + 1 :]
        for p in _pairings(remaining):
            yield ((first, other),) + p


def _even_partitions(items: tuple) -> Iterator[tuple]:
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for size in range(1, len(rest) + 1, 2):
        for mates in itertools.combinations(rest, size):
            remaining = tuple(r for r in rest if r not in mates)
            for p in _even_partitions(remaining):
                yield ((first,) + mates,) + p


def enumerate_blocks(k: int, collapse: str = "pairing") -> list[Block]:
    """All ``(m, A, index classes)`` with their sphere-moment weights.

    ``pairing`` (default) expands every moment into perfect matchings, which
    is exact for unrestricted Einstein sums.  ``partition`` groups positions by
    equal index value; its terms are only correct when distinct classes are
    summed over distinct index values.
    """
    if k < 0 or k % 2:
        raise ValueError(f"k must be an even non-negative integer, got {k}")
    if collapse not in ("pairing", "partition"):
        raise ValueError(f"unknown collapse {collapse!r}")
    out = []
    for m in range(k // 2, k + 1):
        for Aset in itertools.combinations(range(m), 2 * m - k):
            if collapse == "pairing":
                for pairs in _pairings(Aset):
                    out.append(Block(m, Aset, pairs, sphere_moment([2] * len(pairs))))
            else:
                for parts in _even_partitions(Aset):
                    w = sphere_moment([len(p) for p in parts])
                    out.append(Block(m, Aset, parts, w))
    return out


def A_slot(label: int) -> list[XTerm]:
    """``2 x D_i + a_i``."""
    return [xterm(X(), label, coeff=2), xterm(A(label))]


def P_slot(label: int) -> list[XTerm]:
    """``x D_l D_l + a_l D_l + a`` with a dummy label ``l``."""
    return [xterm(X(), label, label), xterm(A(label), label), xterm(APOT())]


def block_slots(block: Block) -> list[list[XTerm]]:
    owner = {}
    for c, cls in enumerate(block.classes):
        for pos in cls:
            owner[pos] = c
    nxt = len(block.classes)
    slots = []
    for j in range(block.m):
        if j in owner:
            slots.append(A_slot(owner[j]))
        else:
            slots.append(P_slot(nxt))
            nxt += 1
    return slots


def _expand_block(block: Block, sweep: _Sweep | None = None) -> dict:
    """Canonical ``args -> rational`` contribution of one block (unweighted)."""
    raw = expand_raw(block_slots(block), sweep=sweep)
    out: dict = defaultdict(Fraction)
    memo: dict = {}
    for atoms, c in raw.items():
        if atoms in memo:
            key = memo[atoms]
        else:
            key = memo[atoms] = canonical_args(atoms)
        if key is not None:
            out[key] += c
    return out


def _expand_block_job(block: Block) -> dict:
    return _expand_block(block)


def local_invariant(k: int, collapse: str = "pairing", workers: int = 1) -> MOIExpression:
    """``I_k`` up to the prefactor ``(-1)^{k/2} pi^{d/2}`` kept as metadata."""
    blocks = enumerate_blocks(k, collapse)
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_expand_block_job, blocks, chunksize=1))
    else:
        sweep = _Sweep()
        parts = [_expand_block(b, sweep) for b in blocks]
    # merge per denominator family in block order; integer numerators stay exact
    families: dict = defaultdict(lambda: defaultdict(Fraction))
    for block, part in zip(blocks, parts):
        fam = families[block.coeff.den]
        w = block.coeff.numerator
        for key, c in part.items():
            fam[key] += w * c
    expr = MOIExpression(FSymbol("F", k), sign=(-1) ** (k // 2), pi_power=1)
    for den in sorted(families):
        for key, c in families[den].items():
            if c:
                expr._add_canonical(key, CoefficientFunction((c,), den))
    return expr


def count_terms(k: int, workers: int = 1) -> int:
    return len(local_invariant(k, workers=workers))


def max_derivative_order(expr: MOIExpression) -> int:
    return max((at.order for t in expr for at in t.args), default=0)
