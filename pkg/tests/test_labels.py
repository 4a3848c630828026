import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cft.errors import ConfigurationError, FormatError, ParameterError
from cft.labels import (
    Ignore,
    LabelMatrix,
    LabelValue,
    Ones,
    OnesLSR,
    PerCategory,
    TargetMatrix,
    Zeros,
    assume_negative,
    drop_labels,
    known_index,
    read_labels_csv,
    resolve_uncertain,
    write_labels_csv,
)

P, N, U, Q = LabelValue.POSITIVE, LabelValue.NEGATIVE, LabelValue.UNKNOWN, LabelValue.UNCERTAIN


def full_matrix(n, c, seed=0):
    rng = np.random.default_rng(seed)
    return LabelMatrix(rng.choice([1, -1], size=(n, c)))


label_codes = arrays(np.int8, st.tuples(st.integers(1, 30), st.integers(1, 8)), elements=st.sampled_from([-1, 0, 1, 2]))


def test_label_matrix_rejects_bad_codes():
    with pytest.raises(ParameterError):
        LabelMatrix(np.array([[3]]))


def test_label_matrix_is_immutable():
    m = full_matrix(3, 2)
    with pytest.raises(ValueError):
        m.values[0, 0] = 0


# --- drop_labels ---------------------------------------------------------------


def test_drop_keep_all_is_identity():
    m = full_matrix(20, 4)
    assert drop_labels(m, 1.0, seed=1) == m


def test_drop_keep_none_is_all_unknown():
    m = full_matrix(20, 4)
    out = drop_labels(m, 0.0, seed=1)
    assert out.count(U) == m.values.size


def test_drop_half_of_80x10():
    m = full_matrix(80, 10)
    out = drop_labels(m, 0.5, seed=7)
    assert np.count_nonzero(out.values != U) == 400


def test_drop_is_seed_deterministic():
    m = full_matrix(50, 5)
    assert drop_labels(m, 0.3, seed=9) == drop_labels(m, 0.3, seed=9)
    assert drop_labels(m, 0.3, seed=9) != drop_labels(m, 0.3, seed=10)


@pytest.mark.parametrize("keep", [-0.1, 1.5])
def test_drop_rejects_bad_fraction(keep):
    with pytest.raises(ParameterError):
        drop_labels(full_matrix(3, 3), keep, seed=0)


def test_drop_stratified_counts_per_category():
    m = full_matrix(40, 3)
    out = drop_labels(m, 0.25, seed=2, stratified=True)
    assert (np.count_nonzero(out.values != U, axis=0) == 10).all()


@settings(max_examples=60, deadline=None)
@given(label_codes, st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_drop_count_and_subset_property(values, keep, seed):
    m = LabelMatrix(values)
    out = drop_labels(m, keep, seed)
    known_before = m.values != U
    known_after = out.values != U
    assert not (known_after & ~known_before).any()
    assert known_after.sum() == int(np.floor(keep * known_before.sum() + 0.5))
    # retained cells keep their original value
    assert np.array_equal(out.values[known_after], m.values[known_after])


# --- assume_negative ---------------------------------------------------------------


def test_assume_negative_rows():
    t = assume_negative(LabelMatrix([[U, U]]))
    assert t.values.tolist() == [[0.0, 0.0]] and not t.mask.any()
    t = assume_negative(LabelMatrix([[P, U, N]]))
    assert t.values.tolist() == [[1.0, 0.0, 0.0]]
    t = assume_negative(LabelMatrix([[Q]]))
    assert t.mask.tolist() == [[True]]


@given(label_codes)
def test_assume_negative_preserves_positives(values):
    m = LabelMatrix(values)
    t = assume_negative(m)
    assert np.all(t.values[m.values == P] == 1.0)
    assert np.all(t.values[(m.values == N) | (m.values == U)] == 0.0)
    assert np.array_equal(t.mask, m.values == Q)


def test_target_matrix_rejects_out_of_range():
    with pytest.raises(ParameterError):
        TargetMatrix(np.array([[1.5]]), np.array([[False]]))
    # masked cells may hold anything
    TargetMatrix(np.array([[np.nan]]), np.array([[True]]))


# --- resolve_uncertain -----------------------------------------------------------

MIXED = LabelMatrix([[P, Q, N], [Q, U, Q], [N, Q, P]])


def test_resolve_zeros_and_ones():
    base = assume_negative(MIXED)
    z = resolve_uncertain(base, MIXED, Zeros())
    o = resolve_uncertain(base, MIXED, Ones())
    unc = MIXED.values == Q
    assert np.all(z.values[unc] == 0.0) and not z.mask.any()
    assert np.all(o.values[unc] == 1.0) and not o.mask.any()


def test_resolve_ignore_masks_exactly_uncertain():
    r = resolve_uncertain(assume_negative(MIXED), MIXED, Ignore())
    assert r.mask.sum() == MIXED.count(Q)
    assert np.array_equal(r.mask, MIXED.values == Q)


def test_resolve_ones_lsr_range_and_determinism():
    base = assume_negative(MIXED)
    a = resolve_uncertain(base, MIXED, OnesLSR(0.55, 0.85), seed=4)
    b = resolve_uncertain(base, MIXED, OnesLSR(0.55, 0.85), seed=4)
    unc = MIXED.values == Q
    assert a == b
    assert np.all((a.values[unc] >= 0.55) & (a.values[unc] <= 0.85))


def test_ones_lsr_validates_bounds():
    with pytest.raises(ParameterError):
        OnesLSR(0.9, 0.5)
    with pytest.raises(ParameterError):
        OnesLSR(-0.1, 0.5)


def test_resolve_per_category():
    pol = PerCategory({0: Ones(), 1: Ignore(), 2: Zeros()})
    r = resolve_uncertain(assume_negative(MIXED), MIXED, pol)
    assert r.values[1, 0] == 1.0 and not r.mask[1, 0]
    assert r.mask[0, 1] and r.mask[2, 1]
    assert r.values[1, 2] == 0.0 and not r.mask[1, 2]


def test_resolve_per_category_missing_entry():
    with pytest.raises(ConfigurationError):
        resolve_uncertain(assume_negative(MIXED), MIXED, PerCategory({0: Ones(), 1: Ones()}))
    # categories without uncertain cells need no entry
    m = LabelMatrix([[P, Q], [N, N]])
    resolve_uncertain(assume_negative(m), m, PerCategory({1: Zeros()}))


@settings(max_examples=60, deadline=None)
@given(label_codes, st.sampled_from([Ignore(), Ones(), Zeros(), OnesLSR()]), st.integers(0, 1000))
def test_resolve_touches_only_uncertain(values, policy, seed):
    m = LabelMatrix(values)
    base = assume_negative(m)
    r = resolve_uncertain(base, m, policy, seed)
    other = m.values != Q
    assert np.array_equal(r.values[other], base.values[other])
    assert np.array_equal(r.mask[other], base.mask[other])


# --- known_index -----------------------------------------------------------------


def test_known_index_examples():
    assert known_index(LabelMatrix([[U], [U]]), 0).tolist() == []
    col = LabelMatrix(np.array([[P, U, N, Q, P]]).T)
    assert known_index(col, 0).tolist() == [0, 2, 4]
    assert known_index(full_matrix(6, 1), 0).tolist() == list(range(6))


def test_known_index_with_resolved_uncertain():
    col = LabelMatrix(np.array([[P, U, N, Q, P]]).T)
    ones = resolve_uncertain(assume_negative(col), col, Ones())
    ign = resolve_uncertain(assume_negative(col), col, Ignore())
    assert known_index(col, 0, ones).tolist() == [0, 2, 3, 4]
    assert known_index(col, 0, ign).tolist() == [0, 2, 4]


def test_known_index_out_of_range():
    with pytest.raises(ParameterError):
        known_index(full_matrix(2, 2), 2)


def test_known_index_matches_brute_force_large():
    rng = np.random.default_rng(0)
    m = LabelMatrix(rng.choice([-1, 0, 1, 2], size=(1000, 1000)))
    for c in rng.choice(1000, size=20, replace=False):
        brute = [i for i in range(1000) if m.values[i, c] in (1, -1)]
        assert known_index(m, int(c)).tolist() == brute


@given(label_codes)
def test_known_index_property(values):
    m = LabelMatrix(values)
    for c in range(m.n_categories):
        brute = [i for i in range(m.n_samples) if m.values[i, c] in (1, -1)]
        assert known_index(m, c).tolist() == brute


# --- CSV -------------------------------------------------------------------------


def test_csv_roundtrip(tmp_path):
    m = LabelMatrix([[P, N, U, Q], [Q, U, N, P]])
    path = tmp_path / "labels.csv"
    write_labels_csv(m, path)
    text = path.read_bytes()
    assert text.startswith(b"sample_id,cat_0,cat_1,cat_2,cat_3\n0,1,-1,0,u\n")
    assert b"\r" not in text
    assert read_labels_csv(path) == m


def test_csv_rejects_bad_cell(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("sample_id,cat_0\n0,2\n")
    with pytest.raises(FormatError):
        read_labels_csv(path)


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,a\n0,1\n")
    with pytest.raises(FormatError):
        read_labels_csv(path)
