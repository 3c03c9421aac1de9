import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from woevae.data import CATEGORICAL, FeatureSchema, Segment, dataset_from_rows, synth_generate
from woevae.transform import (
    PCA_FULL, RAW, STANDARDIZE, WOE_COARSE, WOE_FINE, Bin, BinSpec, FitError, TransformError,
    apply_transform, coarse_merge, fit_fine_bins, fit_transform, load_spec, save_spec,
    woe_encode, woe_fit, woe_value,
)

from oracles import (
    AGE_COARSE_WOE, AGE_EDGES, AGE_FINE, AGE_FINE_WOE, age_rows, woe_from_counts,
)

AGE = [FeatureSchema("age")]


@pytest.fixture(scope="module")
def age_book():
    rows, labels = age_rows()
    return dataset_from_rows(AGE, rows, labels)


def test_table1_fine_counts_and_woe(age_book):
    spec = fit_fine_bins(age_book, "age", edges=AGE_EDGES)
    assert [(b.goods, b.bads) for b in spec.bins] == [(g, b) for _, g, b in AGE_FINE]
    assert spec.bins[1].woe == pytest.approx(-1.0898, abs=1e-3)
    np.testing.assert_allclose([b.woe for b in spec.bins], AGE_FINE_WOE, atol=1e-3)


def test_table1_coarse(age_book):
    fine = fit_fine_bins(age_book, "age", edges=AGE_EDGES)
    coarse = coarse_merge(fine, max_bins=2)
    assert [b.count for b in coarse.bins] == [1000, 19000, 20000]
    assert coarse.bins[1].upper == 29.0
    np.testing.assert_allclose([b.woe for b in coarse.bins], AGE_COARSE_WOE, atol=1e-3)


def test_table1_age_25_maps_to_coarse_woe(age_book):
    table = woe_fit(age_book, coarse=True, max_bins=2, edges={"age": AGE_EDGES})
    probe = dataset_from_rows(AGE, [[25.0], [None], [60.0]], [0, 0, 0])
    w = woe_encode(table, probe)[:, 0]
    np.testing.assert_allclose(w, AGE_COARSE_WOE[1:2] + AGE_COARSE_WOE[0:1]
                               + AGE_COARSE_WOE[2:], atol=1e-3)
    spec = fit_transform(age_book, WOE_COARSE, max_bins=2, edges={"age": AGE_EDGES})
    scaled = apply_transform(spec, probe)[:, 0]
    lo, hi = min(AGE_COARSE_WOE), max(AGE_COARSE_WOE)
    assert scaled[0] == pytest.approx((-0.5445 - lo) / (hi - lo), abs=1e-3)
    assert scaled[2] == pytest.approx(1.0)


def test_equal_shares_give_zero_woe():
    assert woe_value(10, 5, 100, 50, 3) == 0.0


def test_median_split_oracle():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=10)
    ds = dataset_from_rows(AGE, [[v] for v in x], [0, 1] * 5)
    spec = fit_fine_bins(ds, "age", k=2)
    srt = sorted(x)
    median = (srt[4] + srt[5]) / 2
    expected = [sum(v <= median for v in x), sum(v > median for v in x)]
    assert [b.count for b in spec.bins] == expected
    assert all(abs(c - 5) <= 1 for c in expected)


def test_zero_cell_uses_smoothing():
    ds = dataset_from_rows(AGE, [[1.0], [1.0], [5.0], [5.0]], [0, 0, 0, 1])
    spec = fit_fine_bins(ds, "age", edges=[2.0])
    # first bin has no bads
    expected = math.log(((2 + 0.5) / (3 + 1.0)) / ((0 + 0.5) / (1 + 1.0)))
    assert spec.bins[0].woe == pytest.approx(expected, rel=1e-12)
    assert all(math.isfinite(b.woe) for b in spec.bins)


def test_already_coarse_unchanged():
    spec = BinSpec("x", "numeric", (Bin(50, 10, lower=-math.inf, upper=0.0),
                                    Bin(40, 20, lower=0.0, upper=math.inf))).with_woe()
    assert coarse_merge(spec, max_bins=3, min_share=0.05) == spec


def test_degenerate_labels():
    ds = dataset_from_rows(AGE, [[1.0], [2.0]], [0, 0])
    with pytest.raises(FitError, match="degenerate"):
        woe_fit(ds)


@pytest.fixture(scope="module")
def synth_ds():
    segs = [
        Segment(0.6, 0.03, numeric={"a": (0.0, 1.0), "b": (5.0, 4.0)},
                categorical={"c": {"x": 0.6, "y": 0.3, "z": 0.1}}, missing={"a": 0.05}),
        Segment(0.4, 0.25, numeric={"a": (1.5, 1.0), "b": (2.0, 4.0)},
                categorical={"c": {"x": 0.2, "y": 0.3, "z": 0.5}}, missing={"a": 0.1}),
    ]
    return synth_generate(segs, 3000, seed=21)


def test_woe_tables_match_counting_oracle(synth_ds):
    table = woe_fit(synth_ds, k=10, coarse=False)
    y = synth_ds.labels.tolist()
    G, B = y.count(0), y.count(1)
    for spec in table.specs:
        col = synth_ds.column(spec.feature)
        for b in spec.bins:
            goods = bads = 0
            for i in range(synth_ds.n):
                if b.is_missing:
                    inside = col.missing[i]
                elif col.missing[i]:
                    inside = False
                elif b.categories is not None:
                    inside = col.values[i] in b.categories
                else:
                    inside = b.lower < col.values[i] <= b.upper
                if inside:
                    goods += y[i] == 0
                    bads += y[i] == 1
            assert (b.goods, b.bads) == (goods, bads)
            if goods and bads:
                assert b.woe == pytest.approx(woe_from_counts(goods, bads, G, B), rel=1e-12)


@pytest.mark.parametrize("coarse", [False, True])
def test_table_invariants(synth_ds, coarse):
    table = woe_fit(synth_ds, k=10, coarse=coarse)
    for spec in table.specs:
        G, B = spec.totals
        assert (G, B) == (table.total_goods, table.total_bads)
        assert G + B == synth_ds.n
        recomputed = spec.with_woe()
        for a, b in zip(spec.bins, recomputed.bins):
            assert abs(a.woe - b.woe) <= 1e-12
        if spec.kind == "numeric":
            reg = [spec.bins[k] for k in spec.regular_bins()]
            assert reg[0].lower == -math.inf and reg[-1].upper == math.inf
            assert all(p.upper == q.lower for p, q in zip(reg, reg[1:]))


def test_mediant_property_on_every_merge(synth_ds):
    merges = []
    fine = fit_fine_bins(synth_ds, "b", k=20)
    coarse_merge(fine, max_bins=3, min_share=0.1, on_merge=lambda a, b, m: merges.append((a, b, m)))
    assert merges
    for a, b, m in merges:
        lo, hi = sorted((a.bad_rate, b.bad_rate))
        assert lo - 1e-15 <= m.bad_rate <= hi + 1e-15


def test_coarse_respects_constraints(synth_ds):
    fine = fit_fine_bins(synth_ds, "b", k=20)
    coarse = coarse_merge(fine, max_bins=4, min_share=0.1)
    reg = [coarse.bins[k] for k in coarse.regular_bins()]
    assert len(reg) <= 4
    assert all(b.count >= 0.1 * synth_ds.n for b in reg)


def test_categorical_unseen_tokens(synth_ds):
    table = woe_fit(synth_ds, k=10, coarse=False)
    spec = table["c"]
    probe = dataset_from_rows(synth_ds.schema, [[0.0, 1.0, "w"]], [0])
    w = woe_encode(table, probe)
    assert w[0, 2] == spec.bins[spec.fallback].woe
    nofb = fit_fine_bins(synth_ds, "c", categorical_fallback=False)
    with pytest.raises(TransformError, match="'w'"):
        nofb.assign(np.array(["w"], dtype=object), np.array([False]))


def test_transform_total_on_training_rows(synth_ds):
    for kind in (WOE_COARSE, WOE_FINE):
        spec = fit_transform(synth_ds, kind, k=10)
        X = apply_transform(spec, synth_ds)
        assert X.shape == (synth_ds.n, 3)
        assert np.all((X >= 0) & (X <= 1))
        assert np.array_equal(X, apply_transform(spec, synth_ds))


def _complete_ds():
    rng = np.random.default_rng(2)
    schema = [FeatureSchema("a"), FeatureSchema("b"), FeatureSchema("c", CATEGORICAL)]
    rows = [[rng.normal(), rng.normal() * 3 + 1, rng.choice(["p", "q", "r"])] for _ in range(400)]
    return dataset_from_rows(schema, rows, rng.integers(0, 2, size=400).tolist())


def test_standardize_moments():
    ds = _complete_ds()
    spec = fit_transform(ds, STANDARDIZE)
    Z = spec.pre_scale(ds)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(Z.var(axis=0), 1.0, atol=1e-9)


def test_pca_uncorrelated_and_full_rank():
    ds = _complete_ds()
    spec = fit_transform(ds, PCA_FULL)
    P = spec.pre_scale(ds)
    assert P.shape[1] == spec.components.shape[0] == 5
    cov = np.cov(P, rowvar=False)
    off = cov - np.diag(np.diag(cov))
    assert np.abs(off).max() < 1e-6
    raw = spec.encoding.encode(ds) - spec.mean
    np.testing.assert_allclose(P @ spec.components.T, raw, atol=1e-6)
    for j in range(spec.components.shape[1]):
        col = spec.components[:, j]
        assert col[np.argmax(np.abs(col))] > 0


def test_raw_one_hot_and_missing():
    ds = _complete_ds()
    spec = fit_transform(ds, RAW)
    assert spec.columns == ("a", "b", "c=p", "c=q", "c=r")
    pre = spec.pre_scale(ds)
    assert np.all(pre[:, 2:].sum(axis=1) == 1)
    bad = dataset_from_rows(ds.schema, [[None, 0.0, "p"]], [0])
    with pytest.raises(TransformError, match="'a'"):
        apply_transform(spec, bad)


def test_out_of_range_clips():
    ds = _complete_ds()
    spec = fit_transform(ds, STANDARDIZE)
    far = dataset_from_rows(ds.schema, [[100.0, -100.0, "p"]], [0])
    X = apply_transform(spec, far)
    assert X[0, 0] == 1.0 and X[0, 1] == 0.0


@pytest.mark.parametrize("kind", [WOE_COARSE, WOE_FINE, PCA_FULL, STANDARDIZE, RAW])
def test_spec_json_round_trip(tmp_path, kind, synth_ds):
    ds = synth_ds if kind.startswith("woe") else _complete_ds()
    spec = fit_transform(ds, kind, k=8)
    save_spec(tmp_path / "t.json", spec)
    back = load_spec(tmp_path / "t.json")
    assert np.array_equal(apply_transform(back, ds), apply_transform(spec, ds))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 500), st.integers(1, 500)), min_size=2, max_size=8),
       st.integers(1, 4))
def test_merge_conserves_population(counts, max_bins):
    bins = tuple(Bin(g, b, lower=float(k - 1) if k else -math.inf,
                     upper=float(k) if k < len(counts) - 1 else math.inf)
                 for k, (g, b) in enumerate(counts))
    spec = BinSpec("x", "numeric", bins).with_woe()
    out = coarse_merge(spec, max_bins=max_bins, min_share=0.0)
    assert out.totals == spec.totals
    assert len(out.bins) <= max_bins
