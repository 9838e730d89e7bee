import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlskam.indexing import (
    ModeSet,
    MultiIndex,
    from_text,
    mass,
    merge,
    momentum,
    multi_indices,
    split_min,
    to_text,
)

indices = st.dictionaries(st.integers(-4, 4), st.integers(0, 4), max_size=6).map(MultiIndex)


@pytest.mark.parametrize("alpha, expected", [({}, 0), ({1: 2, -3: 1}, 3), ({0: 5}, 5)])
def test_mass(alpha, expected):
    assert mass(MultiIndex(alpha)) == expected


@pytest.mark.parametrize("alpha, expected", [({}, 0), ({2: 1, -2: 1}, 0), ({1: 2, -3: 1}, -1)])
def test_momentum(alpha, expected):
    assert momentum(MultiIndex(alpha)) == expected


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ({1: 2}, {1: 1}, ({1: 1}, {1: 1}, {})),
        ({1: 1}, {2: 1}, ({}, {1: 1}, {2: 1})),
        ({0: 3}, {0: 3}, ({0: 3}, {}, {})),
    ],
)
def test_split_min(a, b, expected):
    assert split_min(a, b) == tuple(MultiIndex(e) for e in expected)


@pytest.mark.parametrize(
    "m, a, b, expected",
    [
        ({1: 1}, {}, {}, ({1: 1}, {1: 1})),
        ({}, {1: 1}, {2: 1}, ({1: 1}, {2: 1})),
        ({0: 2}, {1: 1}, {-1: 1}, ({0: 2, 1: 1}, {0: 2, -1: 1})),
    ],
)
def test_merge(m, a, b, expected):
    assert merge(m, a, b) == tuple(MultiIndex(e) for e in expected)


def test_merge_rejects_overlap():
    with pytest.raises(ValueError):
        merge({}, {1: 1}, {1: 2})


def test_zero_entries_dropped_and_negative_rejected():
    assert MultiIndex({3: 0, 1: 2}) == MultiIndex({1: 2})
    assert len(MultiIndex({3: 0})) == 0
    with pytest.raises(ValueError):
        MultiIndex({1: -1})


def test_text_form():
    assert to_text(MultiIndex({1: 2, -3: 1})) == "-3:1,1:2"
    assert to_text(MultiIndex()) == ""
    assert from_text("") == MultiIndex()
    assert from_text("-3:1,1:2") == MultiIndex({1: 2, -3: 1})


def test_modeset_validation():
    with pytest.raises(ValueError):
        ModeSet(-1)
    with pytest.raises(ValueError):
        ModeSet(2, frozenset({3}))
    ms = ModeSet(2, frozenset({-1, 1}))
    assert ms.modes == (-2, -1, 0, 1, 2)
    assert list(ms.tangential_mask()) == [False, True, False, True, False]
    assert ms.full().tangential is None


def test_array_roundtrip():
    ms = ModeSet(3)
    a = MultiIndex({-3: 1, 2: 4})
    assert MultiIndex.from_array(a.to_array(ms), ms) == a


def test_multi_indices_count():
    # stars and bars: C(total + n - 1, n - 1)
    assert sum(1 for _ in multi_indices(range(-1, 2), 3)) == 10
    assert all(mass(a) == 3 for a in multi_indices(range(-1, 2), 3))


@given(indices, indices)
def test_split_merge_roundtrip(a, b):
    m, x, y = split_min(a, b)
    assert merge(m, x, y) == (a, b)
    assert all(x.get(j) * y.get(j) == 0 for j in set(x) | set(y))


@given(indices, indices)
def test_additivity(a, b):
    assert mass(a + b) == mass(a) + mass(b)
    assert momentum(a + b) == momentum(a) + momentum(b)


@given(indices)
def test_text_roundtrip(a):
    assert from_text(to_text(a)) == a
