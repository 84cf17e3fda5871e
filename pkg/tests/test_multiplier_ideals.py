import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st

from lefschetz_lab.multiplier_ideals import (
    LocalModel, Prop2Family, SiuParams, StaircaseIdeal, ThresholdAmbiguity, coherence_diagnostic,
    e1_isolated_check, integrability_oracle, jumping_numbers, local_model, lower_gap,
    lower_regularization, mis_snc, oracle_ideal_agrees, prop2_q, prop2_stalk, scaled_ideal,
    siu_generators, siu_weight, snc_weight, zero_lelong_absorption,
)
from lefschetz_lab.singular_weights import ModelWeight, PolydiscDomain

F = Fraction


def ideal(*gens, n=2):
    return StaircaseIdeal(n, gens)


# -- staircase ideals ------------------------------------------------------------------

def test_staircase_minimal_and_membership():
    I = ideal((1, 0), (2, 0), (0, 3), (1, 1))
    assert I.generators == ((0, 3), (1, 0))
    assert I.contains((0, 4)) and not I.contains((0, 2))
    assert ideal((2, 0)) <= ideal((1, 0)) and ideal((2, 0)) < ideal((1, 0))
    with pytest.raises(ValueError):
        StaircaseIdeal(4, ((0, 0, 0, 0),))


# -- SNC ----------------------------------------------------------------------------

@pytest.mark.parametrize("alphas,gens", [
    ((F(1, 2), F(1, 2)), (0, 0)),
    ((F(3, 2), F(9, 4)), (1, 2)),
    ((1, 1), (1, 1)),
    ((F(7, 3),), (2,)),
])
def test_mis_snc(alphas, gens):
    I = mis_snc(alphas)
    assert I.generators == (gens,)
    ok, bad = oracle_ideal_agrees(LocalModel(tuple(F(a) for a in alphas)), 4)
    assert ok, bad


def test_mis_snc_rejects_negative():
    with pytest.raises(ValueError):
        mis_snc([1, -0.5])


def test_jumping_coefficient_case():
    w = snc_weight([1, 1])
    assert mis_snc([1, 1]) == ideal((1, 1))
    assert scaled_ideal(w, F(99, 100)).is_unit
    assert lower_regularization(w).is_unit


# -- Siu's lemma --------------------------------------------------------------------------

@pytest.mark.parametrize("abc,gens", [
    ((0.5, 0.9, 2.3), ((0, 1), (1, 0))),
    ((1.5, 0.9, 2.3), ((1, 1), (2, 0))),
])
def test_siu_examples(abc, gens):
    p = SiuParams(*abc)
    assert siu_generators(p).generators == gens
    ok, bad = oracle_ideal_agrees(local_model(siu_weight(p)), 6)
    assert ok, bad


@pytest.mark.parametrize("abc,msg", [
    ((0.5, 0.4, 2.3), "ceil"),
    ((1, 0.5, 2), "not in Z"),
    ((0.5, 1.2, 2), "b < 1"),
    ((0.5, 0.75, 3), "c\\(1-"),
])
def test_siu_constraints_named(abc, msg):
    with pytest.raises(ValueError, match=msg):
        SiuParams(*abc)


siu_params = st.builds(
    lambda a, b, c: (F(a).limit_denominator(97), F(b).limit_denominator(97), F(c).limit_denominator(97)),
    st.floats(0.05, 3), st.floats(0.05, 0.99), st.floats(0.1, 6))


@given(siu_params)
def test_lemma_matches_general_staircase(abc):
    try:
        p = SiuParams(*abc)
    except ValueError:
        assume(False)
    assert siu_generators(p) == LocalModel((p.a, F(0)), F(1), p.b, p.c).ideal()


@settings(max_examples=8)
@given(siu_params)
def test_siu_matches_oracle(abc):
    try:
        p = SiuParams(*abc)
    except ValueError:
        assume(False)
    gap = math.ceil(p.a) - p.a
    assume(min(gap, p.b - gap, 1 - p.b) >= 0.05)
    x = p.c * (1 - gap / p.b)
    assume(abs(x - round(x)) >= 0.05)
    ok, bad = oracle_ideal_agrees(local_model(siu_weight(p)), 6)
    assert ok, bad


# -- scaling, jumps, lower regularization ---------------------------------------------------

def test_scaled_examples():
    w = snc_weight([F(3, 2), F(9, 4)])
    assert scaled_ideal(w, F(1, 2)) == ideal((0, 1))
    assert scaled_ideal(w, 1) == mis_snc([F(3, 2), F(9, 4)])
    p = SiuParams(0.5, 0.9, 2.3)
    assert scaled_ideal(siu_weight(p), 1) == siu_generators(p)


def test_threshold_ambiguity():
    w = snc_weight([F(3, 2), F(9, 4)])
    with pytest.raises(ThresholdAmbiguity, match="threshold ambiguity"):
        scaled_ideal(w, 2 / 3)
    with pytest.raises(ThresholdAmbiguity):
        scaled_ideal(w, F(2, 3) + F(1, 10 ** 10))
    scaled_ideal(w, F(2, 3) + F(1, 10 ** 8))


def test_jumping_numbers_examples():
    assert jumping_numbers(snc_weight([1]), 3) == [1, 2, 3]
    assert jumping_numbers(snc_weight([F(3, 2), F(9, 4)]), 1) == [F(4, 9), F(2, 3), F(8, 9)]


@pytest.mark.parametrize("w", [
    snc_weight([F(3, 2), F(9, 4)]),
    snc_weight([1, F(1, 3)]),
    siu_weight(SiuParams(0.5, 0.9, 2.3)),
    siu_weight(SiuParams(1.5, 0.9, 2.3)),
])
def test_every_jump_is_strict(w):
    js = jumping_numbers(w, 2)
    assert js
    eps = F(1, 10 ** 6)
    for t in js:
        assert scaled_ideal(w, t + eps) < scaled_ideal(w, t - eps)


weights = [snc_weight([F(3, 2), F(9, 4)]), siu_weight(SiuParams(0.5, 0.9, 2.3)),
           siu_weight(SiuParams(1.5, 0.9, 2.3))]


@given(st.sampled_from(range(3)), st.fractions(F(1, 100), 2, max_denominator=1000),
       st.fractions(F(1, 100), 2, max_denominator=1000))
def test_monotone_in_t(i, t1, t2):
    w = weights[i]
    t1, t2 = min(t1, t2), max(t1, t2)
    try:
        assert scaled_ideal(w, t2) <= scaled_ideal(w, t1)
    except ThresholdAmbiguity:
        assume(False)


@pytest.mark.parametrize("w,expected,one_jumps", [
    (snc_weight([F(3, 2), F(9, 4)]), ideal((1, 2)), False),
    (snc_weight([1, 1]), ideal((0, 0)), True),
    (siu_weight(SiuParams(0.5, 0.9, 2.3)), ideal((1, 0), (0, 1)), False),
])
def test_lower_regularization(w, expected, one_jumps):
    low = lower_regularization(w)
    assert low == expected
    whole = local_model(w).ideal()
    assert whole <= low
    assert (whole != low) == one_jumps == (1 in jumping_numbers(w, 1))
    gap = lower_gap(w)
    for k in (1, 2, 3):
        assert scaled_ideal(w, 1 - gap / 2 ** k) == low


# -- Proposition 2 family --------------------------------------------------------------------

def test_default_family():
    f = Prop2Family.default(6)
    assert f.N == (3, 6, 12, 24, 48, 96)
    assert all(p == F(3, 2) for p in f.products)
    assert f.a[0] == F(1, 4) and f.eps[0] == F(1, 2)


@pytest.mark.parametrize("kw,msg", [
    (dict(a=(F(1, 4), F(1, 4)), eps=(F(1, 2), F(1, 4)), N=(3, 6)), "distinct"),
    (dict(a=(F(3, 4),), eps=(F(1, 2),), N=(3,)), "1/2"),
    (dict(a=(F(1, 4),), eps=(F(1, 2),), N=(4,)), "integer"),
    (dict(a=(F(1, 4),), eps=(F(1, 4),), N=(3,)), "C > 1"),
])
def test_family_constraints(kw, msg):
    with pytest.raises(ValueError, match=msg):
        Prop2Family(**kw)


def test_prop2_stalk_example():
    f = Prop2Family.default(6)
    I = prop2_stalk(f, 1, F(1, 100))
    assert I.generators == ((0, 1), (1, 0)) and I.point == (0, F(1, 4))
    with pytest.raises(ValueError, match="too large"):
        prop2_stalk(f, 1, F(2, 5))


def test_prop2_lemma_rule_closed_form():
    f = Prop2Family.default(6)
    for k in range(1, 7):
        for d in (F(1, 100), F(1, 1000)):
            assert prop2_q(f, k, d, "lemma") == math.floor(f.products[k - 1] * (1 - 2 * d))


@pytest.mark.parametrize("k,delta", [(1, F(1, 100)), (5, F(1, 100)), (6, F(1, 100)), (6, F(1, 1000))])
def test_prop2_exact_stalk_matches_oracle(k, delta):
    f = Prop2Family.default(6)
    model = local_model(f.weight(), (0, f.a[k - 1])).scaled(1 - delta)
    q = prop2_q(f, k, delta)
    assert q == max(0, math.floor(f.N[k - 1] * ((1 - delta) * f.eps[k - 1] - delta)))
    assert integrability_oracle(model, (1, 0))
    assert integrability_oracle(model, (0, q))
    if q:
        assert not integrability_oracle(model, (0, q - 1))


def test_prop2_limit_stalk():
    f = Prop2Family.default(6)
    for k in range(1, 7):
        low = lower_regularization(f.weight(), (0, f.a[k - 1]))
        assert low.generators == ((0, math.floor(f.products[k - 1])), (1, 0))


def test_coherence_diagnostic():
    f = Prop2Family.default(6)
    out = coherence_diagnostic(f, 3)
    assert out["verdict"] == "non-coherent witness found"
    assert out["witness"]["k"] == 1 and out["witness"]["exponent"] == 1
    assert coherence_diagnostic(f, 0)["verdict"] == "non-coherent witness found"
    with pytest.raises(ValueError, match="too small"):
        coherence_diagnostic(f, 5)


@given(st.permutations(range(6)))
def test_coherence_invariant_under_reordering(perm):
    f = Prop2Family.default(6)
    a = coherence_diagnostic(f, 3)
    b = coherence_diagnostic(f.reordered(perm), 3)
    assert a["verdict"] == b["verdict"]
    assert a["witness"]["point"] == b["witness"]["point"]


def test_coherence_stable_in_K():
    for K in (5, 6, 7, 8):
        assert coherence_diagnostic(Prop2Family.default(K), 3)["verdict"] == "non-coherent witness found"


# -- zero Lelong absorption and E1 ------------------------------------------------------------

def test_zero_lelong_absorption():
    assert zero_lelong_absorption(snc_weight([F(3, 2)]), ModelWeight(1))
    assert zero_lelong_absorption(snc_weight([F(3, 2)]), ModelWeight.parse("0.2*trig(cos1)", 1))
    assert zero_lelong_absorption(siu_weight(SiuParams(0.5, 0.9, 2.3)),
                                  ModelWeight.parse("0.3*trig(cos1 + sinx2) + re(z1*z2)", 2))
    with pytest.raises(ValueError):
        zero_lelong_absorption(snc_weight([1]), ModelWeight.parse("log|z1|"))


def test_e1_isolated_examples():
    D = PolydiscDomain.standard(2)
    assert not e1_isolated_check(ModelWeight.parse("log|z1|", 2), D)
    assert e1_isolated_check(ModelWeight.parse("log(|z1|^2 + |z2|^2)"), D)
    assert not e1_isolated_check(Prop2Family.default(6).weight(), D)
