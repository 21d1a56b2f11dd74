import itertools
import math
import warnings
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aposc.apfun import FrequencyBasis, MultiIndex, RationalRelation, SpatialStructure
from aposc.dioph import (
    ApproximationFunction,
    approx_validate,
    detect_resonances,
    distribution_count,
    enumerate_indices,
    nonres_margin,
    rotation_admissible,
    scan_rotation_interval,
)
from aposc.errors import DomainError

SQ2 = math.sqrt(2)
DELTA = ApproximationFunction()


def _brute_vectors(indices, K):
    """All nonzero integer vectors on ``indices`` with l1 norm <= K."""
    for k in itertools.product(range(-K, K + 1), repeat=len(indices)):
        if 0 < sum(map(abs, k)) <= K:
            yield dict(zip(indices, k))


def _log_weight(A, rho=3.0):
    return 1 + sum(math.log(1 + abs(i)) ** rho for i in A)


# -- approximation function -------------------------------------------------


def test_default_delta_normalized():
    assert DELTA(1.0) == 1.0
    assert DELTA(4.0) == pytest.approx(math.e)


def test_delta_below_one_rejected():
    with pytest.raises(DomainError):
        DELTA(0.5)


def test_approx_validate_oracles():
    rep = approx_validate(DELTA, t_max=1e6)
    assert rep.nondecreasing
    assert rep.quotient_decreasing
    assert rep.onset <= 4.0 + 1e-6
    # int_1^T (sqrt t - 1)/t^2 dt = 1 - 2/sqrt(T) + 1/T
    T = 1e6
    assert rep.integral == pytest.approx(1 - 2 / math.sqrt(T) + 1 / T, abs=1e-9)
    assert abs(rep.integral_with_tail - 1.0) <= 1e-3
    assert rep.passed


def test_user_table_delta():
    d = ApproximationFunction("user_table", [1.0, 1.0, 10.0, 2.0, 100.0, 3.0])
    assert d(1.0) == pytest.approx(1.0)
    assert d(10.0) == pytest.approx(2.0)
    assert d(50.0) >= d(20.0)


# -- nonresonance margin ----------------------------------------------------


def test_margin_single_frequency():
    b = FrequencyBasis({1: 1.0})
    S = SpatialStructure.singletons([1], 3.0)
    rep = nonres_margin(b, S, DELTA, 3)
    assert float(rep) == pytest.approx(DELTA(1 + math.log(2) ** 3), rel=1e-14)
    assert float(rep) == pytest.approx(1.16715232023858, rel=1e-13)


def test_margin_two_frequencies_brute_force():
    b = FrequencyBasis({-1: 1.0, 1: SQ2})
    S = SpatialStructure.all_subsets([-1, 1], 3.0)
    rep = nonres_margin(b, S, DELTA, 2)
    best = math.inf
    for k in _brute_vectors([-1, 1], 2):
        supp = [i for i, v in k.items() if v]
        val = abs(k[-1] + k[1] * SQ2) * DELTA(_log_weight(supp)) * DELTA(sum(map(abs, k.values())))
        best = min(best, val)
    assert rep.margin == pytest.approx(best, rel=1e-13)
    assert rep.margin == pytest.approx(0.8382786619656738, rel=1e-13)
    assert rep.argmin.norm == 2


def test_margin_exact_relation_is_zero():
    q = MultiIndex.of({1: 3, 2: -4})
    b = FrequencyBasis({1: 4 / 3, 2: 1.0}, relations=[RationalRelation(q)])
    S = SpatialStructure.all_subsets([1, 2], 3.0)
    rep = nonres_margin(b, S, DELTA, 7)
    assert rep.margin == 0.0
    assert rep.exact_zero
    assert set(rep.argmin.support) == {1, 2}


def test_margin_needs_positive_K():
    b = FrequencyBasis({1: 1.0})
    with pytest.raises(DomainError):
        nonres_margin(b, SpatialStructure.singletons([1]), DELTA, 0)


@settings(max_examples=10, deadline=None)
@given(st.floats(1.1, 3.0))
def test_margin_nonincreasing_in_K(w):
    b = FrequencyBasis({1: 1.0, 2: w})
    S = SpatialStructure.all_subsets([1, 2], 3.0)
    vals = [nonres_margin(b, S, DELTA, K).margin for K in range(1, 6)]
    assert all(x >= y for x, y in zip(vals, vals[1:]))


# -- rotation admissibility -------------------------------------------------


def test_rotation_admissible_sixty_cases():
    b = FrequencyBasis({1: 1.0, 2: SQ2})
    S = SpatialStructure.all_subsets([1, 2], 3.0)
    cases = list(_brute_vectors([1, 2], 5))
    assert len(cases) == len(enumerate_indices(S, 5)) == 60
    ok = True
    for k in cases:
        supp = [i for i, v in k.items() if v]
        x = (k[1] + k[2] * SQ2) / (2 * math.pi)
        bound = 0.01 / (DELTA(_log_weight(supp)) * DELTA(sum(map(abs, k.values()))))
        ok &= abs(x - round(x)) >= bound
    assert rotation_admissible(0.0, 1.0, b, S, 0.01, DELTA, 5) == ok


def test_rotation_integer_defect_rejected():
    b = FrequencyBasis({1: 1.0})
    S = SpatialStructure.singletons([1])
    assert not rotation_admissible(0.0, 2 * math.pi, b, S, 1e-6, DELTA, 3)


def test_rotation_gamma_must_be_positive():
    b = FrequencyBasis({1: 1.0})
    with pytest.raises(DomainError):
        rotation_admissible(0.0, 1.0, b, SpatialStructure.singletons([1]), 0.0, DELTA, 3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1e-4, 0.2), st.floats(0.01, 1.0))
def test_admissibility_monotone_in_gamma(beta, g2, ratio):
    b = FrequencyBasis({1: 1.0, 2: SQ2})
    S = SpatialStructure.all_subsets([1, 2], 3.0)
    if rotation_admissible(0.0, beta, b, S, g2, DELTA, 4):
        assert rotation_admissible(0.0, beta, b, S, g2 * ratio, DELTA, 4)


def test_scan_trivial_and_ladder():
    b = FrequencyBasis({1: 1.0, 2: SQ2})
    S = SpatialStructure.all_subsets([1, 2], 3.0)
    assert scan_rotation_interval(0.5, 2.0, 50, b, S, 1e3, DELTA, 3).fraction == 0.0
    assert scan_rotation_interval(0.5, 2.0, 50, b, S, 0.1, DELTA, 0).fraction == 1.0
    fr = [scan_rotation_interval(0.5, 2.0, 200, b, S, g, DELTA, 8).fraction for g in (1e-1, 1e-2, 1e-3)]
    assert fr == sorted(fr)
    assert fr[-1] > fr[0]


def test_scan_preconditions():
    b = FrequencyBasis({1: 1.0})
    S = SpatialStructure.singletons([1])
    with pytest.raises(DomainError):
        scan_rotation_interval(1.0, 1.0, 50, b, S, 0.1, DELTA, 2)
    with pytest.raises(DomainError):
        scan_rotation_interval(0.0, 1.0, 5, b, S, 0.1, DELTA, 2)


# -- resonances -------------------------------------------------------------


def test_exact_resonance_declared_rational():
    beta = 2 * math.pi * 0.75
    b = FrequencyBasis({1: 4 / 3}, relations=[RationalRelation(MultiIndex.unit(1), plain=Fraction(4, 3))])
    S = SpatialStructure.singletons([1])
    rep = detect_resonances(b, S, beta, 4, beta_exact=(Fraction(0), Fraction(3, 4)))
    ks = {str(k) for k, _, _ in rep.exact}
    assert "1:1" in ks and "1:-1" in ks
    assert all(d <= rep.tol for _, _, d in rep.exact)
    assert rep.is_resonant(MultiIndex.unit(1))
    assert frozenset({1}) in rep.resonant_sets


def test_irrational_no_resonance():
    beta = 2 * math.pi * 0.75
    b = FrequencyBasis({1: SQ2})
    S = SpatialStructure.singletons([1])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = detect_resonances(b, S, beta, 6)
    assert rep.exact == [] and rep.near == []
    assert rep.margin > 10 * rep.tol


def test_near_resonance_warns_and_is_not_exact():
    b = FrequencyBasis({1: 4 / 3})
    S = SpatialStructure.singletons([1])
    with pytest.warns(RuntimeWarning):
        rep = detect_resonances(b, S, 2 * math.pi * 0.75, 2)
    assert rep.exact == [] and rep.near
    for rec in rep.records():
        assert set(rec) == {"kind", "k", "j", "defect", "margin", "K"}


# -- distribution counts ----------------------------------------------------


def test_distribution_counts():
    S = SpatialStructure.all_subsets([-1, 0, 1], 3.0)
    assert distribution_count(S, 1, 0.5) == 0
    assert distribution_count(S, 1, 10.0) == 3
    assert distribution_count(S, 2, 1.5) == 2


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 5.0), st.floats(0.0, 3.0))
def test_distribution_monotone_and_additive(t, dt):
    S = SpatialStructure.all_subsets([-2, -1, 0, 1, 2], 3.0)
    for n in (1, 2, 3):
        assert distribution_count(S, n, t) <= distribution_count(S, n, t + dt)
    total = sum(distribution_count(S, n, t) for n in range(1, 6))
    assert total == sum(1 for A in S.sets if S.weight(A) <= t)
