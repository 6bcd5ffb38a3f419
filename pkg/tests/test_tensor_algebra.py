import itertools

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from expsig.errors import ResourceError, ShapeError
from expsig.tensor_algebra import (
    TensorSeries,
    check_size,
    index_word,
    project_word,
    shuffles,
    signature_of_piecewise_linear,
    tensor_exp,
    tensor_mul,
    word_index,
    words,
)


def symbolic_signature(increments, truncation):
    """Iterated integrals of a polyline, integrated exactly segment by segment with sympy."""
    t, s = sympy.symbols("t s", nonnegative=True)
    d = len(increments[0])
    all_words = [w for k in range(truncation + 1) for w in words(d, k)]
    state = {w: sympy.Integer(0) for w in all_words}
    state[()] = sympy.Integer(1)
    for inc in increments:
        inc = [sympy.nsimplify(x) for x in inc]
        running = {(): sympy.Integer(1)}
        for w in all_words[1:]:
            # on this segment dX = inc dt for t in [0, 1]
            integrand = running[w[:-1]].subs(t, s) * inc[w[-1] - 1]
            running[w] = state[w] + sympy.integrate(integrand, (s, 0, t))
        state = {w: sympy.expand(p.subs(t, 1)) for w, p in running.items()}
    return state


def _rand_polyline(rng, d, segments):
    return rng.uniform(-1, 1, size=(segments, d))


# -- word indexing -----------------------------------------------------------


def test_word_index_is_lexicographic_rank():
    for d, k in [(2, 3), (3, 2), (4, 2)]:
        ws = list(words(d, k))
        assert ws == sorted(ws)
        assert [word_index(w, d) for w in ws] == list(range(d**k))
        assert all(index_word(i, k, d) == w for i, w in enumerate(ws))


def test_word_letters_out_of_range():
    with pytest.raises(ValueError):
        word_index((0, 1), 2)
    with pytest.raises(ValueError):
        word_index((3,), 2)


def test_size_guard():
    check_size(4, 8)
    with pytest.raises(ResourceError):
        check_size(10, 8)
    with pytest.raises(ResourceError):
        check_size(2, 5, cap=10)


# -- series basics -----------------------------------------------------------


def test_unit_and_level_zero():
    u = TensorSeries.unit(2, 3)
    assert u.levels[0].shape == (1,)
    assert project_word(u, ()) == 1.0
    assert all(np.all(lv == 0) for lv in u.levels[1:])


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        TensorSeries(1, 1, (np.ones(1), np.array([np.nan])))


def test_wrong_level_sizes_rejected():
    with pytest.raises(ShapeError):
        TensorSeries(2, 1, (np.ones(1), np.ones(3)))


def test_mul_identity_and_mismatch():
    rng = np.random.default_rng(0)
    b = signature_of_piecewise_linear(_rand_polyline(rng, 2, 3), 3)
    assert tensor_mul(TensorSeries.unit(2, 3), b).allclose(b, atol=0)
    with pytest.raises(ShapeError):
        tensor_mul(TensorSeries.unit(2, 3), TensorSeries.unit(3, 3))
    with pytest.raises(ShapeError):
        tensor_mul(TensorSeries.unit(2, 3), TensorSeries.unit(2, 2))


def test_mul_of_pure_level_one():
    u, v = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    a = TensorSeries(2, 2, (np.zeros(1), u, np.zeros(4)))
    b = TensorSeries(2, 2, (np.zeros(1), v, np.zeros(4)))
    prod = tensor_mul(a, b)
    for i, j in itertools.product((1, 2), repeat=2):
        assert prod[(i, j)] == u[i - 1] * v[j - 1]


def test_exp_examples():
    assert tensor_exp([0.0, 0.0], 3).allclose(TensorSeries.unit(2, 3), atol=0)
    e = tensor_exp([1.0, 0.0], 2)
    assert list(e.level(1)) == [1.0, 0.0]
    assert e[(1, 1)] == 0.5 and e[(1, 2)] == 0 and e[(2, 1)] == 0 and e[(2, 2)] == 0
    c = 1.7
    e = tensor_exp([c], 8)
    for n in range(5):
        assert e[(1,) * (2 * n)] == pytest.approx(c ** (2 * n) / np.prod(np.arange(1, 2 * n + 1)), rel=1e-14)


def test_exp_rejects_nonfinite():
    with pytest.raises(ValueError):
        tensor_exp([np.inf], 2)


def test_project_word():
    a, b = 0.3, -1.2
    assert project_word(tensor_exp([a, b], 2), (1, 2)) == pytest.approx(a * b / 2, abs=1e-16)
    with pytest.raises(IndexError):
        project_word(tensor_exp([a, b], 2), (1, 1, 1))


def test_polyline_examples():
    v = np.array([0.4, -0.9, 1.3])
    assert signature_of_piecewise_linear([v], 4).allclose(tensor_exp(v, 4), atol=1e-15)
    closed = signature_of_piecewise_linear([v, -v], 1)
    assert np.allclose(closed.level(1), 0, atol=0)
    ell = signature_of_piecewise_linear([(1, 0), (0, 1)], 2)
    assert ell[(1, 2)] == 1.0 and ell[(2, 1)] == 0.0
    with pytest.raises(ValueError):
        signature_of_piecewise_linear([], 2)


def test_two_segment_matches_symbolic_iterated_integrals():
    A, B = [0.5, -0.25], [1.0, 0.75]
    lifted = tensor_mul(tensor_exp(A, 3), tensor_exp(B, 3))
    direct = signature_of_piecewise_linear([A, B], 3)
    exact = symbolic_signature([A, B], 3)
    for w, val in exact.items():
        assert direct[w] == pytest.approx(float(val), abs=1e-14)
        assert lifted[w] == pytest.approx(float(val), abs=1e-14)


# -- property tests ----------------------------------------------------------

polylines = st.tuples(
    st.integers(1, 3),  # dimension
    st.integers(1, 5),  # truncation
    st.integers(2, 6),  # segments
    st.integers(0, 2**32 - 1),
)


@settings(max_examples=100, deadline=None)
@given(polylines)
def test_chen_identity(params):
    d, N, segs, seed = params
    rng = np.random.default_rng(seed)
    inc = _rand_polyline(rng, d, segs)
    split = int(rng.integers(1, segs))
    whole = signature_of_piecewise_linear(inc, N)
    joined = tensor_mul(
        signature_of_piecewise_linear(inc[:split], N), signature_of_piecewise_linear(inc[split:], N)
    )
    assert whole.max_abs_diff(joined) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(polylines)
def test_shuffle_identity(params):
    d, N, segs, seed = params
    rng = np.random.default_rng(seed)
    S = signature_of_piecewise_linear(_rand_polyline(rng, d, segs), N)
    for _ in range(5):
        p = int(rng.integers(0, N + 1))
        q = int(rng.integers(0, N - p + 1))
        u = tuple(int(x) for x in rng.integers(1, d + 1, size=p))
        v = tuple(int(x) for x in rng.integers(1, d + 1, size=q))
        lhs = S[u] * S[v]
        rhs = sum(S[w] for w in shuffles(u, v))
        assert abs(lhs - rhs) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_mul_associative(d, N, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (signature_of_piecewise_linear(_rand_polyline(rng, d, 2), N) for _ in range(3))
    left = tensor_mul(tensor_mul(a, b), c)
    right = tensor_mul(a, tensor_mul(b, c))
    assert left.max_abs_diff(right) <= 1e-14 * max(1.0, max(np.abs(lv).max() for lv in left.levels))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=3), st.integers(1, 6))
def test_exp_repeated_letter(v, N):
    e = tensor_exp(v, N)
    assert e[()] == 1.0
    for i, x in enumerate(v, start=1):
        for k in range(N + 1):
            assert e[(i,) * k] == pytest.approx(x**k / np.prod(np.arange(1, k + 1)), rel=1e-13, abs=1e-300)


def test_shuffle_count():
    assert len(shuffles((1, 2), (3,))) == 3
    assert sorted(shuffles((1,), (2,))) == [(1, 2), (2, 1)]
