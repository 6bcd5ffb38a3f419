import math

import pytest

from expsig import quadrature
from expsig.combinatorics import double_factorial
from expsig.errors import ResourceError
from expsig.expected_signature import (
    brownian_coefficient,
    brownian_expected_signature,
    canonical_In,
    cross_pairing_bound,
    even_words,
    expected_signature,
    expected_word_coefficient,
    fbm_coefficient_closed_scaling,
    noncanonical_terms,
)
from expsig.kernels import ExplicitF, FbmKernel
from expsig.quadrature import QuadratureSettings

FAST = QuadratureSettings(samples=50_000)


@pytest.fixture
def call_counter(monkeypatch):
    calls = []
    real = quadrature.simplex_pairing_integral

    def counting(pairing, *args, **kwargs):
        calls.append(tuple(pairing))
        return real(pairing, *args, **kwargs)

    monkeypatch.setattr(quadrature, "simplex_pairing_integral", counting)
    return calls


def test_zero_words_cost_nothing(call_counter):
    k = FbmKernel(0.7)
    for w in [(1, 2), (1,), (1, 1, 1), (1, 2, 2, 2), (1, 1, 2, 3)]:
        res = expected_word_coefficient(w, k, 1.0, FAST)
        assert res.value == 0.0 and res.stderr == 0.0
    assert expected_word_coefficient((), k, 1.0).value == 1.0
    assert call_counter == []


def test_level_two_and_four():
    k = FbmKernel(0.75)
    r2 = expected_word_coefficient((1, 1), k, 1.0, FAST)
    assert r2.value == pytest.approx(0.5, abs=3 * r2.stderr)
    r4 = expected_word_coefficient((1, 1, 1, 1), k, 1.0, QuadratureSettings(samples=200_000))
    assert abs(r4.value - 0.125) <= max(2e-3, 3 * r4.stderr)


@pytest.mark.parametrize("h,T", [(0.6, 1.0), (0.8, 1.5)])
def test_single_letter_moments(h, T):
    R = T ** (2 * h)
    for n in (1, 2):
        res = expected_word_coefficient((1,) * (2 * n), FbmKernel(h), T, QuadratureSettings(samples=200_000))
        oracle = double_factorial(2 * n - 1) * R**n / math.factorial(2 * n)
        assert abs(res.value - oracle) <= max(4 * res.stderr, 1e-12)


def test_report_structure():
    k = FbmKernel(0.75)
    rep = expected_signature(k, 1, 1, 1.0, FAST)
    assert [t.word for t in rep.terms] == [()]
    assert rep.coefficient(()) == 1.0
    rep = expected_signature(k, 2, 2, 1.0, FAST)
    assert [t.word for t in rep.terms] == [(), (1, 1), (2, 2)]
    assert rep.coefficient((1, 1)) == pytest.approx(0.5, abs=1e-12)
    assert rep.coefficient((2, 2)) == rep.coefficient((1, 1))
    rep = expected_signature(k, 2, 3, 1.0, FAST)
    assert all(len(t.word) != 3 for t in rep.terms)
    assert rep.coefficient((1, 2)) == 0.0
    rep = expected_signature(k, 2, 4, 1.0, FAST)
    for t in rep.terms:
        assert len(t.word) % 2 == 0
    assert rep.term((1, 1, 1, 1)).pairings == 3
    assert rep.term((1, 2, 2, 1)).pairings == 1
    tens = rep.to_tensor()
    assert tens[(1, 2, 1, 2)] == rep.coefficient((1, 2, 1, 2))
    assert tens[(1, 2, 2, 2)] == 0.0


def test_letter_symmetry_shares_work(call_counter):
    rep = expected_signature(FbmKernel(0.7), 3, 4, 1.0, FAST)
    a = rep.coefficient((1, 1, 2, 2))
    assert a == rep.coefficient((2, 2, 1, 1)) == rep.coefficient((1, 1, 3, 3)) == rep.coefficient((3, 3, 2, 2))
    assert rep.coefficient((1, 2, 2, 1)) == rep.coefficient((3, 1, 1, 3))
    # patterns (1,1), (1,1,1,1), (1,1,2,2), (1,2,1,2), (1,2,2,1): each distinct pairing integrated once
    assert len(call_counter) == len(set(call_counter)) == 4


def test_guards():
    with pytest.raises(ResourceError):
        expected_signature(FbmKernel(0.7), 5, 2, 1.0)
    with pytest.raises(ResourceError):
        expected_signature(FbmKernel(0.7), 1, 9, 1.0)
    with pytest.raises(ValueError):
        expected_signature(FbmKernel(0.7), 1, 2, 0.0)


def test_even_words_listing():
    assert list(even_words(2, 2)) == [(), (1, 1), (2, 2)]
    assert len([w for w in even_words(2, 4) if len(w) == 4]) == 8


def test_brownian_reference():
    rep = brownian_expected_signature(2, 4, 1.0)
    assert rep.coefficient((1, 1)) == 0.5
    assert rep.coefficient((1, 1, 2, 2)) == 0.125
    assert rep.coefficient((1, 2, 1, 2)) == 0.0
    assert rep.coefficient((1, 2, 2, 1)) == 0.0
    assert brownian_coefficient((1, 1), 2.0) == 1.0
    assert brownian_coefficient((1, 1, 1), 1.0) == 0.0


def test_constant_density_matches_simplex_volume():
    one = ExplicitF(lambda u, v: 1.0)
    res = expected_word_coefficient((1, 1, 1, 1), one, 2.0, QuadratureSettings(method="mc", samples=5000))
    assert res.value == pytest.approx(3 * 2.0**4 / 24, rel=1e-12)


def test_near_brownian_limit():
    settings = QuadratureSettings(samples=200_000)
    k = FbmKernel(0.51)
    for w in even_words(2, 4):
        if not w:
            continue
        res = expected_word_coefficient(w, k, 1.0, settings)
        assert abs(res.value - brownian_coefficient(w)) <= max(0.02, 4 * res.stderr)


def test_canonical_examples():
    for h in (0.55, 0.7, 0.95):
        assert canonical_In(1, h).value == pytest.approx(0.5, rel=1e-12)
    gaps = [abs(canonical_In(2, h).value - 0.125) for h in (0.6, 0.55, 0.51)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 0.02
    direct = quadrature.simplex_pairing_integral(((1, 2), (3, 4)), FbmKernel(0.75), 2, 1.0, FAST)
    assert abs(direct.value - canonical_In(2, 0.75).value) <= 3 * direct.stderr
    with pytest.raises(ValueError):
        canonical_In(2, 0.5)


def test_cross_pairing_bound():
    assert cross_pairing_bound(0.5) == 0.0
    assert cross_pairing_bound(0.75) == pytest.approx(0.5 * (1 - 2**-0.5), rel=1e-15)
    assert cross_pairing_bound(1.0) == 0.25
    with pytest.raises(ValueError):
        cross_pairing_bound(0.3)


@pytest.mark.parametrize("h", [0.55, 0.75])
def test_noncanonical_terms_below_bound(h):
    terms = noncanonical_terms(2, h, FAST)
    assert len(terms) == 2
    for _, r in terms:
        assert r.value <= cross_pairing_bound(h) + 3 * r.stderr


@pytest.mark.parametrize("h", [0.6, 0.75, 0.9])
def test_closed_scaling(h):
    T = 1.7
    res = fbm_coefficient_closed_scaling((1, 1), h, T, FAST)
    assert res.value == pytest.approx(T ** (2 * h) / 2, rel=1e-12)
    assert fbm_coefficient_closed_scaling((1, 1), h, 1.0, FAST).value == pytest.approx(0.5, rel=1e-12)
    for w in [(1, 1, 1, 1), (1, 2, 1, 2)]:
        scaled = fbm_coefficient_closed_scaling(w, h, 2.0, FAST)
        unit = fbm_coefficient_closed_scaling(w, h, 1.0, FAST)
        assert scaled.value / unit.value == pytest.approx(2 ** (2 * h * 2), rel=1e-12)
        direct = expected_word_coefficient(w, FbmKernel(h), 2.0, QuadratureSettings(samples=50_000, seed=9))
        assert abs(direct.value - scaled.value) <= 3 * math.hypot(direct.stderr, scaled.stderr)
