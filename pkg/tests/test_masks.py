import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from psofed.errors import DimensionMismatch, InvalidArgument
from psofed.masks import SelectionMask, coordinated_init, init_masks, uncoordinated_init


def test_coordinated_canonical_block():
    masks = coordinated_init(4, 2, 1, 3)
    assert len(masks) == 3
    for m in masks:
        assert m.active.tolist() == [0, 1]


def test_coordinated_full_mask_is_full_sharing(rng):
    m, = coordinated_init(4, 4, 1, 1)
    w = rng.normal(size=4)
    np.testing.assert_array_equal(m.apply(w), w)
    np.testing.assert_array_equal(m.apply_complement(w), np.zeros(4))


def test_empty_mask():
    m, = coordinated_init(4, 0, 1, 1)
    assert m.active.size == 0
    np.testing.assert_array_equal(m.apply(np.arange(4.0)), np.zeros(4))


@pytest.mark.parametrize("args", [(4, 5, 1, 1), (4, -1, 1, 1), (4, 2, 0, 1), (4, 2, 5, 1), (4, 2, 1, 0), (0, 0, 1, 1)])
def test_init_rejects(args):
    with pytest.raises(InvalidArgument):
        coordinated_init(*args)
    with pytest.raises(InvalidArgument):
        uncoordinated_init(*args, seed=0)


def test_unknown_scheme():
    with pytest.raises(InvalidArgument):
        init_masks("random", 4, 2, 1, 1)


def test_uncoordinated_deterministic():
    a = uncoordinated_init(200, 40, 40, 100, seed=5)
    b = uncoordinated_init(200, 40, 40, 100, seed=5)
    assert a == b
    assert all(len(m.active) == 40 for m in a)


def test_uncoordinated_offsets_uniform():
    masks = uncoordinated_init(4, 2, 1, 10_000, seed=17)
    counts = np.bincount([m.offset for m in masks], minlength=4)
    assert stats.chisquare(counts).pvalue > 0.01


def test_uncoordinated_full_masks():
    for m in uncoordinated_init(4, 4, 1, 50, seed=3):
        assert m.active.tolist() == [0, 1, 2, 3]


def test_advance_examples():
    assert SelectionMask(4, 2, 0, 1).advance().active.tolist() == [1, 2]
    assert SelectionMask(4, 2, 2, 2).advance().active.tolist() == [0, 1]


def test_each_coordinate_shared_m_times_over_d_rounds():
    for start in range(6):
        m = SelectionMask(6, 2, start, 1)
        hits = np.zeros(6, dtype=int)
        for _ in range(6):
            hits[m.active] += 1
            m = m.advance()
        assert hits.tolist() == [2] * 6


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 30).flatmap(lambda D: st.tuples(
    st.just(D), st.integers(0, D), st.integers(1, D), st.integers(0, D - 1))))
def test_advance_properties(args):
    D, M, tau, off = args
    m = SelectionMask(D, M, off, tau)
    nxt = m.advance()
    assert len(nxt.active) == M
    assert sorted(((m.active + tau) % D).tolist()) == nxt.active.tolist()
    period = D // math.gcd(D, tau)
    assert m.advance(period) == m
    if M % math.gcd(D, tau):
        return
    # equal coverage over one period holds whenever gcd(D, tau) divides M (always for tau = M)
    hits = np.zeros(D, dtype=int)
    cur = m
    for _ in range(period):
        hits[cur.active] += 1
        cur = cur.advance()
    assert len(set(hits.tolist())) == 1


def test_apply_example():
    m = SelectionMask(2, 1, 0, 1)
    np.testing.assert_array_equal(m.apply([3.0, 5.0]), [3.0, 0.0])
    np.testing.assert_array_equal(m.apply_complement([3.0, 5.0]), [0.0, 5.0])


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 20).flatmap(lambda D: st.tuples(
    st.just(D), st.integers(0, D), st.integers(0, D - 1), st.integers(0, 2 ** 31))))
def test_partition_identity_exact(args):
    D, M, off, seed = args
    w = np.random.default_rng(seed).normal(size=D) * 1e3
    m = SelectionMask(D, M, off, 1)
    assert np.array_equal(m.apply(w) + m.apply_complement(w), w)
    assert set(np.flatnonzero(m.indicator).tolist()) == set(m.active.tolist())
    assert all((i in m) == m.indicator[i] for i in range(D))


def test_apply_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        SelectionMask(3, 1).apply(np.zeros(4))
    with pytest.raises(DimensionMismatch):
        SelectionMask(3, 1).apply_complement(np.zeros(2))


def test_coordinated_lockstep():
    masks = coordinated_init(10, 3, 2, 5)
    for _ in range(17):
        masks = [m.advance() for m in masks]
        assert all(m == masks[0] for m in masks)
