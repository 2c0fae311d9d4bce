"""Property-based checks over randomized inputs (derandomized for CI)."""

import numpy as np
from hypothesis import given, settings, strategies as st

from issr import numerics as nm
from issr.data import build_training_instances, chronological_split
from issr.metrics import metrics_from_scores
from synthetic import labelled_log

common = settings(max_examples=50, derandomize=True, deadline=None)


@st.composite
def metric_cases(draw):
    n = draw(st.integers(5, 30))
    # integer scores so ties actually occur
    scores = draw(st.lists(st.integers(-3, 3), min_size=n, max_size=n))
    targets = draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=3))
    exclusions = draw(st.sets(st.integers(0, n - 1), max_size=n // 2)) - targets
    k = draw(st.integers(1, 15))
    return np.array(scores, dtype=np.float64), sorted(targets), sorted(exclusions), k


@common
@given(case=metric_cases())
def test_metric_bounds_and_relations(case):
    scores, targets, exclusions, k = case
    recall, ndcg, hr, mrr = metrics_from_scores(scores, targets, exclusions, k)
    assert hr in (0.0, 1.0)
    assert 0.0 <= recall <= hr
    assert 0.0 <= mrr <= hr
    assert 0.0 <= ndcg <= hr


@common
@given(case=metric_cases(), scale=st.integers(1, 5), shift=st.integers(-9, 9))
def test_metric_monotone_transform_invariance(case, scale, shift):
    scores, targets, exclusions, k = case
    base = metrics_from_scores(scores, targets, exclusions, k)
    # integer affine maps keep scores exact, so ranking ties are preserved
    assert metrics_from_scores(scale * scores + shift, targets, exclusions, k) == base


@common
@given(seqs=st.lists(st.lists(st.integers(0, 9), max_size=12),
                     min_size=1, max_size=6))
def test_split_partitions_every_sequence(seqs):
    split = chronological_split(labelled_log(seqs, 10))
    for u, seq in enumerate(seqs):
        parts = split.train[u] + split.val[u] + split.test[u]
        assert parts == [int(x) for x in seq]
        assert split.full_sequence(u) == parts


@common
@given(m=st.integers(0, 12), context_len=st.integers(1, 4),
       num_targets=st.integers(1, 3))
def test_window_count_and_contiguity(m, context_len, num_targets):
    seq = list(range(m))
    split = chronological_split(labelled_log([seq], max(m, 1)), (1, 0, 0))
    instances = build_training_instances(split, context_len, num_targets)
    assert len(instances) == max(0, m - context_len - num_targets + 1)
    for j, inst in enumerate(instances):
        assert list(inst.context) == seq[j : j + context_len]
        span = j + context_len
        assert list(inst.positives) == seq[span : span + num_targets]


@st.composite
def matrices(draw):
    rows = draw(st.integers(1, 4))
    cols = draw(st.integers(2, 6))
    data = draw(st.lists(
        st.lists(st.floats(-30, 30, width=32), min_size=cols, max_size=cols),
        min_size=rows, max_size=rows,
    ))
    return np.array(data, dtype=np.float64)


@common
@given(x=matrices(), shift=st.floats(-20, 20, width=32))
def test_softmax_rows_normalize_and_shift_invariance(x, shift):
    probs = nm.softmax(nm.constant(x), axis=-1).data
    assert np.all(probs >= 0.0) and np.all(probs <= 1.0)
    assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-12)
    shifted = nm.softmax(nm.constant(x + shift), axis=-1).data
    assert np.allclose(shifted, probs, atol=1e-12)
