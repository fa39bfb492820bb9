import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from tailproc.seqcore import (
    EmptyExceedanceSet,
    LatticeSeq,
    NotInE0,
    ZeroSequence,
    anchor_dense,
    anchor_first_exceedance,
    anchor_first_maximum,
    associated_map,
    canonicalize_mod_shift,
    exceedance_set,
    exceedance_shift,
    shift,
    sup_norm,
    tau_cyclic,
    tau_nearest,
)

values = st.one_of(
    st.floats(-50, 50, allow_nan=False, allow_infinity=False),
    st.sampled_from([1.0, -1.0, 2.0, 0.5, 0.0]),
)
seqs = st.dictionaries(st.integers(-20, 20), values, max_size=10).map(LatticeSeq)


@st.composite
def seqs_with_origin_exceedance(draw):
    x = draw(seqs)
    v0 = draw(st.floats(1.0001, 50) | st.floats(-50, -1.0001))
    return LatticeSeq({**dict(x.items()), 0: v0})


def test_zero_entries_dropped_and_sorted():
    x = LatticeSeq({3: 1.5, -2: 0.0, 0: -4.0})
    assert x.indices == (0, 3)
    assert x[-2] == 0.0 and x[3] == 1.5
    assert str(x) == "0:-4.0,3:1.5"


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        LatticeSeq.parse("0:1,x")
    with pytest.raises(ValueError):
        LatticeSeq([(0, 1.0), (0, 2.0)])


@given(seqs)
def test_parse_roundtrip(x):
    assert LatticeSeq.parse(str(x)) == x


@given(seqs, st.integers(-30, 30), st.integers(-30, 30))
def test_shift_semantics(x, a, b):
    y = shift(x, a)
    for i in range(-25, 25):
        assert y[i] == x[i + a]
    assert shift(y, b) == shift(x, a + b)


@given(seqs, st.integers(-30, 30))
def test_exceedance_set_moves_with_shift(x, k):
    assert exceedance_set(shift(x, k)) == tuple(i - k for i in exceedance_set(x))


def test_exceedance_is_strict():
    x = LatticeSeq({0: 1.0, 1: -1.0, 2: 1.0000001})
    assert exceedance_set(x) == (2,)


@given(seqs, st.integers(-30, 30))
def test_anchors_shift_covariant(x, k):
    if exceedance_set(x):
        assert anchor_first_exceedance(shift(x, k)) == anchor_first_exceedance(x) - k
    if x:
        assert anchor_first_maximum(shift(x, k)) == anchor_first_maximum(x) - k


def test_first_maximum_takes_earliest_tie():
    assert anchor_first_maximum(LatticeSeq({-1: 2.0, 0: -2.0, 3: 1.0})) == -1


def test_anchor_errors():
    with pytest.raises(EmptyExceedanceSet):
        anchor_first_exceedance(LatticeSeq({0: 1.0}))
    with pytest.raises(ZeroSequence):
        anchor_first_maximum(LatticeSeq())
    with pytest.raises(NotInE0):
        tau_cyclic(LatticeSeq({1: 3.0}))


@settings(max_examples=200)
@given(seqs_with_origin_exceedance(), st.integers(-3, 3))
def test_cyclic_map_is_bijection_of_exceedances(x, n):
    e = exceedance_set(x)
    image = [associated_map(x, lambda s: tau_cyclic(s, n), k) for k in e]
    assert sorted(image) == list(e)


@settings(max_examples=200)
@given(seqs_with_origin_exceedance())
def test_nearest_map_is_involution(x):
    for k in exceedance_set(x):
        j = associated_map(x, tau_nearest, k)
        assert associated_map(x, tau_nearest, j) == k


def test_nearest_pairs_by_hand():
    x = LatticeSeq({-3: 2.0, 0: 2.0, 1: 2.0, 5: 2.0})
    assert tau_nearest(x) == 1
    assert tau_nearest(shift(x, -3)) == 0  # -3's nearest is 0, whose nearest is 1
    assert tau_cyclic(x) == 1 and tau_cyclic(x, -1) == -3 and tau_cyclic(shift(x, 5)) == -8


@given(seqs_with_origin_exceedance())
def test_exceedance_shift_keeps_origin_exceeding(x):
    y = exceedance_shift(x, tau_cyclic)
    assert abs(y[0]) > 1


@given(seqs, st.integers(-30, 30))
def test_canonical_form_is_shift_invariant(x, k):
    assume(x)
    c = canonicalize_mod_shift(x)
    assert anchor_first_maximum(c) == 0
    assert canonicalize_mod_shift(shift(x, k)) == c
    assert canonicalize_mod_shift(c) == c
    assert sup_norm(c) == sup_norm(x)


@given(st.lists(st.lists(values, min_size=5, max_size=5), min_size=1, max_size=8))
def test_anchor_dense_matches_sequence_anchors(rows):
    arr = np.array(rows)
    fm = anchor_dense(arr, "fm")
    fe = anchor_dense(arr, "fe")
    for r, a, b in zip(rows, fm, fe):
        x = LatticeSeq.from_dense(r)
        if x:
            assert a == anchor_first_maximum(x)
        assert b == (anchor_first_exceedance(x) if exceedance_set(x) else -1)


def test_alpha_mass_and_dense():
    x = LatticeSeq({-1: 2.0, 2: -0.5})
    assert x.alpha_mass(2.0) == pytest.approx(4.25)
    np.testing.assert_array_equal(x.to_dense(-2, 3), [0, 2.0, 0, 0, -0.5, 0])
