import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatmoi.recursion import (
    enumerate_blocks,
    expand_raw,
    expand_T,
    local_invariant,
    sphere_moment,
)
from heatmoi.terms import (
    NO_LABEL,
    A,
    APOT,
    Atom,
    CoefficientFunction,
    FSymbol,
    MOIExpression,
    X,
    atom,
    canonical_args,
    substitute_dimension,
    xterm,
)

f = FSymbol("f")
a, b, c = atom("a"), atom("b"), atom("c")


# -- coefficients ----------------------------------------------------------


def test_coefficient_evaluation_and_sum():
    p = CoefficientFunction((Fraction(2),), (0,))
    q = CoefficientFunction((Fraction(1),), (0, 2))
    s = p + q
    for d in (2, 3, 7):
        assert s(d) == Fraction(2, d) + Fraction(1, d * (d + 2))
    assert (p - p).is_zero()
    assert p.denominator_text() == "d"


def test_coefficient_cancels_linear_factor():
    # (d + 2) / (d (d + 2)) reduces to 1 / d
    r = CoefficientFunction((Fraction(2), Fraction(1)), (0, 2))
    assert r.den == (0,) and r(5) == Fraction(1, 5)


def test_coefficient_rejects_odd_shift():
    with pytest.raises(ValueError):
        CoefficientFunction((Fraction(1),), (1,))


@pytest.mark.parametrize("mult", [(2,), (2, 2), (4,), (2, 2, 2), (4, 2), (6,)])
def test_sphere_moment_matches_double_factorials(mult):
    # direct formula: prod (n_j - 1)!! / (d (d+2) ... (d + 2(h-1)))
    m = sphere_moment(mult)
    for d in (2, 3, 5):
        num = 1
        for n in mult:
            num *= max(1, _dfact(n - 1))
        den = 1
        for j in range(sum(mult) // 2):
            den *= d + 2 * j
        assert m(d) == Fraction(num, den)


def _dfact(n):
    return 1 if n <= 1 else n * _dfact(n - 2)


def test_odd_moment_vanishes():
    assert sphere_moment((3, 1)).is_zero()


# -- canonical forms -------------------------------------------------------

labels = st.integers(min_value=0, max_value=3)
atoms = st.builds(
    lambda name, lab, ds: Atom(name, lab if name == "a" else NO_LABEL, tuple(sorted(ds))),
    st.sampled_from(["x", "a"]),
    labels,
    st.lists(labels, max_size=2),
)


@settings(max_examples=150, deadline=None)
@given(st.lists(atoms, min_size=1, max_size=4), st.permutations(range(4)))
def test_canonical_form_is_relabeling_invariant(args, perm):
    mapping = dict(enumerate(perm))
    renamed = tuple(
        Atom(x.name, mapping.get(x.label, x.label), tuple(sorted(mapping[l] for l in x.derivs)))
        for x in args
    )
    assert canonical_args(args) == canonical_args(renamed)


def test_unpaired_label_is_dropped():
    e = MOIExpression()
    e.add((X(0), X()), 1)
    assert len(e) == 0


def test_expression_addition_cancels():
    e = MOIExpression()
    e.add((X(0), X(0)), 3)
    e.add((X(1), X(1)), -3)
    assert len(e) == 0


def test_substitute_dimension_merges_families():
    e = MOIExpression()
    e.add((X(0), X(0)), CoefficientFunction((Fraction(1),), ()))
    e.add((X(0), X(0)), CoefficientFunction((Fraction(2),), (0,)))
    assert len(e) == 2
    s = substitute_dimension(e, 4)
    assert len(s) == 1
    assert next(iter(s)).coeff(4) == Fraction(3, 2)


# -- the expansion of T ------------------------------------------------------


def test_single_formal_symbol_moves_onto_x():
    e = expand_T(f, [xterm(a), xterm(b, 0)], free=(0,))
    assert [t.args for t in e] == [(a, b, X(0))]


def test_expansion_with_leading_formal_symbol():
    e = expand_T(f, [xterm(a, 0), xterm(b), xterm(c)], free=(0,))
    expected = {
        (a, X(0), b, c),
        (a, atom("b", NO_LABEL, (0,)), c),
        (a, b, X(0), c),
        (a, b, atom("c", NO_LABEL, (0,))),
        (a, b, c, X(0)),
    }
    assert {t.args for t in e} == expected
    assert all(t.coeff(2) == 1 for t in e)


def test_two_and_one_formal_symbols_give_145_terms():
    e = expand_T(f, [xterm(a, 0, 1), xterm(b, 2), xterm(c)], free=(0, 1, 2))
    assert len(e) == 145


def _random_slots(rng):
    n = rng.randint(2, 4)
    budget = rng.randint(1, 4)
    slots = []
    for j in range(n):
        k = rng.randint(0, budget) if j < n - 1 else 0
        budget -= k
        formal = [rng.randint(0, 2) for _ in range(k)]
        name = rng.choice("abc")
        slots.append(xterm(atom(name), *formal, coeff=rng.randint(1, 3)))
    return slots


def test_formal_symbols_commute_randomized():
    rng = random.Random(20240601)
    for _ in range(200):
        slots = _random_slots(rng)
        swapped = [
            xterm(s.atom, *rng.sample(s.formal, len(s.formal)), coeff=s.coeff) for s in slots
        ]
        ref = expand_T(f, slots, free=(0, 1, 2))
        assert expand_T(f, swapped, free=(0, 1, 2)) == ref


@pytest.mark.parametrize("seed", range(6))
def test_sweep_matches_literal_definition(seed):
    rng = random.Random(seed)
    slots = _random_slots(rng)
    right = expand_raw(slots, "sweep", "right")
    left = expand_raw(slots, "sweep", "left")
    lit = expand_raw(slots, "definition")
    assert right == lit
    assert expand_T(f, slots, free=(0, 1, 2), peel="left") == expand_T(f, slots, free=(0, 1, 2))
    assert sum(left.values()) == sum(lit.values())


def test_expansion_is_multilinear_in_slots():
    s1 = [xterm(a, 0), xterm(b)]
    s2 = [xterm(c, 0), xterm(b)]
    joined = expand_T(f, [[xterm(a, 0), xterm(c, 0)], xterm(b)], free=(0,))
    assert joined == expand_T(f, s1, free=(0,)) + expand_T(f, s2, free=(0,))


# -- local invariants --------------------------------------------------------


def test_blocks_for_k2():
    blocks = enumerate_blocks(2)
    assert {(bl.m, bl.A) for bl in blocks} == {(1, ()), (2, (0, 1))}


def test_odd_k_rejected():
    with pytest.raises(ValueError):
        local_invariant(3)


def test_zeroth_invariant():
    e = local_invariant(0)
    assert len(e) == 1 and e.sign == 1
    (t,) = e.terms
    assert t.args == () and t.coeff(2) == 1


def test_second_invariant_structure():
    e = local_invariant(2)
    assert e.sign == -1 and len(e) == 13
    # the potential enters only through a single first-order term
    pots = [t for t in e if any(x.name == "a" and x.label == NO_LABEL for x in t.args)]
    assert [t.args for t in pots] == [(APOT(),)]
    assert {t.coeff.den for t in e} == {(), (0,)}


def test_second_invariant_reduces_to_conformal_count_without_drift():
    e = local_invariant(2)
    pure = [t for t in e if all(x.name == "x" for x in t.args)]
    assert sorted((t.coeff.den, t.args) for t in pure) == sorted(
        [
            ((), (X(), X(0), X(0))),
            ((), (X(), X(0, 0))),
            ((0,), (X(), X(0), X(), X(0))),
            ((0,), (X(), X(0), X(0))),
            ((0,), (X(), X(), X(0), X(0))),
            ((0,), (X(), X(), X(0, 0))),
        ]
    )


def test_drift_terms_carry_labels():
    for t in local_invariant(2):
        for x in t.args:
            if x.name == "a" and x.label != NO_LABEL:
                assert x == A(x.label, *x.derivs)
