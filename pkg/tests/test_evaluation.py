import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import reference_impls as ref
from facecomp_qc import evaluation
from facecomp_qc.errors import (
    DegenerateInput,
    EmptyComparisons,
    EmptyInput,
    UnknownSampleId,
)
from facecomp_qc.evaluation import ComparisonRecord


def test_det_separable_has_zero_error_point():
    points = evaluation.det_curve([0.9, 0.8], [0.1, 0.2])
    assert any(p.fpr == 0.0 and p.fnr == 0.0 for p in points)


def test_det_identical_distributions_eer_half():
    scores = [0.1, 0.4, 0.7, 0.9]
    value, _ = evaluation.eer(scores, scores)
    assert value == 0.5


def test_det_matches_oracle_small():
    unc = [0.9, 0.6, 0.4]
    comp = [0.5, 0.3, 0.2]
    got = [(p.threshold, p.fpr, p.fnr) for p in evaluation.det_curve(unc, comp)]
    assert got == ref.det_points_ref(unc, comp)


def test_eer_perfectly_separable():
    value, threshold = evaluation.eer([10.0, 9.0], [1.0, 2.0])
    assert value == 0.0
    assert 2.0 < threshold <= 9.0


def test_eer_empty_raises():
    with pytest.raises(EmptyInput):
        evaluation.eer([], [1.0])


def test_eer_and_f1_match_oracles_random(rng):
    for trial in range(60):
        n_u = int(rng.integers(1, 120))
        n_c = int(rng.integers(1, 120))
        unc = list(np.round(rng.normal(0.7, 0.2, n_u), 3))
        comp = list(np.round(rng.normal(0.4, 0.25, n_c), 3))
        got_eer, got_thr = evaluation.eer(unc, comp)
        want_eer, want_thr = ref.eer_ref(unc, comp)
        assert got_thr == want_thr
        assert abs(got_eer - want_eer) <= 1e-12
        assert abs(evaluation.f1_at(got_thr, unc, comp)
                   - ref.f1_ref(want_thr, unc, comp)) <= 1e-12


def test_eer_invariant_under_monotone_transforms(rng):
    unc = list(rng.normal(1.0, 0.4, 80))
    comp = list(rng.normal(0.2, 0.5, 90))
    base, _ = evaluation.eer(unc, comp)
    exp_eer, _ = evaluation.eer([math.exp(v) for v in unc], [math.exp(v) for v in comp])
    aff_eer, _ = evaluation.eer([3 * v + 7 for v in unc], [3 * v + 7 for v in comp])
    assert base == exp_eer == aff_eer


def test_f1_hand_enumerated():
    # u: 0.9, 0.4; c: 0.5, 0.1 at t=0.45 -> TP=1, FP=1, FN=1
    assert evaluation.f1_at(0.45, [0.9, 0.4], [0.5, 0.1]) == 0.5


def test_f1_all_compressed_missed():
    assert evaluation.f1_at(0.0, [0.5, 0.6], [0.1, 0.2]) == 0.0


def test_f1_perfect_at_eer_threshold():
    unc, comp = [0.9, 0.8, 0.7], [0.3, 0.2, 0.1]
    _, threshold = evaluation.eer(unc, comp)
    assert evaluation.f1_at(threshold, unc, comp) == 1.0


def test_spearman_monotone_cases():
    x = [1.0, 2.0, 3.0, 4.0]
    assert evaluation.spearman(x, [10, 20, 30, 40]) == 1.0
    assert evaluation.spearman(x, [40, 30, 20, 10]) == -1.0


def test_spearman_ties_match_oracle():
    x = [1.0, 2.0, 2.0, 4.0]
    y = [10.0, 20.0, 30.0, 40.0]
    assert abs(evaluation.spearman(x, y) - ref.spearman_ref(x, y)) <= 1e-12


def test_spearman_random_vs_oracle(rng):
    for _ in range(40):
        n = int(rng.integers(2, 80))
        x = list(rng.integers(0, 10, n).astype(float))
        y = list(np.round(rng.normal(0, 1, n), 2))
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert abs(evaluation.spearman(x, y) - ref.spearman_ref(x, y)) <= 1e-12


def test_spearman_invariance_under_monotone_transform(rng):
    x = list(rng.normal(0, 1, 50))
    y = list(rng.normal(0, 1, 50))
    base = evaluation.spearman(x, y)
    assert abs(evaluation.spearman([math.exp(v) for v in x], y) - base) <= 1e-12
    assert abs(evaluation.spearman(x, [5 * v - 3 for v in y]) - base) <= 1e-12


def test_spearman_degenerate():
    with pytest.raises(DegenerateInput):
        evaluation.spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateInput):
        evaluation.spearman([1.0], [2.0])


def test_fnmr_threshold_ten_points():
    assert evaluation.fnmr_threshold(list(range(1, 11)), 0.10) == 2.0


def test_fnmr_threshold_all_equal():
    t = evaluation.fnmr_threshold([5.0] * 20, 0.10)
    assert t == 5.0
    realized = sum(1 for s in [5.0] * 20 if s < t) / 20
    assert realized == 0.0


def test_fnmr_threshold_uniform_realized(rng):
    scores = list(rng.uniform(0, 1, 1000))
    t = evaluation.fnmr_threshold(scores, 0.10)
    realized = sum(1 for s in scores if s < t) / len(scores)
    assert 0.099 <= realized <= 0.101


def _mk_comparisons(similarities):
    return [ComparisonRecord(f"p{i}", f"r{i}", s, True) for i, s in enumerate(similarities)]


def test_edc_toy_four_pairs():
    # pair qualities 10..40, similarities low/high/low/high, threshold between
    comps = [
        ComparisonRecord("a", "b", 0.1, True),
        ComparisonRecord("c", "d", 0.9, True),
        ComparisonRecord("e", "f", 0.1, True),
        ComparisonRecord("g", "h", 0.9, True),
    ]
    qualities = {"a": 10, "b": 99, "c": 20, "d": 99, "e": 30, "f": 99, "g": 40, "h": 99}
    points = evaluation.edc_curve(qualities, comps, 0.5, [0.0, 0.25, 0.5])
    assert [round(p.fnmr, 10) for p in points] == [0.5, round(1 / 3, 10), 0.5]


def test_edc_start_error_and_zero_reach(rng):
    n = 200
    sims = list(rng.uniform(0.5, 1.0, n))
    threshold = evaluation.fnmr_threshold(sims, 0.10)
    failing = [i for i, s in enumerate(sims) if s < threshold]
    qualities = {}
    comps = []
    for i, s in enumerate(sims):
        comps.append(ComparisonRecord(f"p{i}", f"r{i}", s, True))
        # failing pairs get the lowest qualities
        q = int(rng.integers(0, 10)) if i in set(failing) else int(rng.integers(50, 100))
        qualities[f"p{i}"] = q
        qualities[f"r{i}"] = 100
    grid = evaluation.default_discard_grid()
    points = evaluation.edc_curve(qualities, comps, threshold, grid)
    assert abs(points[0].fnmr - 0.10) <= 1.0 / n
    failure_fraction = len(failing) / n
    for p in points:
        if p.discard_fraction >= failure_fraction + 1.0 / n:
            assert p.fnmr == 0.0


def test_edc_d0_equals_direct_fnmr(rng):
    sims = list(rng.uniform(0, 1, 97))
    comps = _mk_comparisons(sims)
    qualities = {}
    for c in comps:
        qualities[c.probe_id] = int(rng.integers(0, 101))
        qualities[c.reference_id] = int(rng.integers(0, 101))
    threshold = 0.35
    direct = sum(1 for s in sims if s < threshold) / len(sims)
    points = evaluation.edc_curve(qualities, comps, threshold, [0.0])
    assert points[0].fnmr == direct


def test_edc_bookkeeping_total(rng):
    sims = list(rng.uniform(0, 1, 50))
    comps = _mk_comparisons(sims)
    qualities = {k: int(rng.integers(0, 101)) for c in comps
                 for k in (c.probe_id, c.reference_id)}
    for d in (0.0, 0.13, 0.5, 1.0):
        drop = int(np.floor(d * len(comps)))
        assert drop + (len(comps) - drop) == len(comps)
        evaluation.edc_curve(qualities, comps, 0.5, [d])  # must not raise


def test_edc_unknown_sample():
    comps = [ComparisonRecord("x", "y", 0.5, True)]
    with pytest.raises(UnknownSampleId):
        evaluation.edc_curve({"x": 10}, comps, 0.4, [0.0])


def test_edc_empty():
    with pytest.raises(EmptyComparisons):
        evaluation.edc_curve({}, [], 0.5, [0.0])


def test_default_discard_grid():
    grid = evaluation.default_discard_grid()
    assert grid[0] == 0.0 and grid[-1] == 0.30
    assert len(grid) == 31


def test_comparisons_csv_round_trip(tmp_path):
    path = tmp_path / "comps.csv"
    path.write_text("probe_id,reference_id,similarity,mated\n"
                    "a,b,0.75,true\nc,d,0.25,false\n")
    rows = evaluation.read_comparisons_csv(path)
    assert rows[0] == ComparisonRecord("a", "b", 0.75, True)
    assert rows[1].mated is False


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=60),
       st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=60))
def test_det_curve_rates_in_unit_interval(unc, comp):
    for p in evaluation.det_curve(unc, comp):
        assert 0.0 <= p.fpr <= 1.0
        assert 0.0 <= p.fnr <= 1.0
