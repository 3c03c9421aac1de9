"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE <k> PASS|FAIL`` line (outside pytest's
output capture) before asserting. Run this file directly to get only the
summary lines: ``python tests/test_acceptance.py``.
"""
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from woevae import cli
from woevae.analyze import binomial_ci, cluster_stats, overlap_matrix, salient_dimensions
from woevae.cluster import LabelingConfig, label_latent, ward_bisect
from woevae.data import FeatureSchema, Segment, dataset_from_rows, synth_generate
from woevae.transform import WOE_COARSE, apply_transform, coarse_merge, fit_fine_bins, fit_transform
from woevae.vae import (
    Architecture, EncodedMoments, TrainConfig, backward, elbo_terms, init_params, kl_to_prior,
    train,
)

from oracles import (
    AGE_COARSE_WOE, AGE_EDGES, AGE_FINE_WOE, adjusted_rand, blobs, brute_salient,
    exhaustive_bipartition, age_rows, wcss,
)

ROOT = Path(__file__).resolve().parents[1]


# -- 1 ------------------------------------------------------------------------

def check_1():
    t0 = time.perf_counter()
    rows, labels = age_rows()
    ds = dataset_from_rows([FeatureSchema("age")], rows, labels)
    fine = fit_fine_bins(ds, "age", edges=AGE_EDGES)
    coarse = coarse_merge(fine, max_bins=2)
    fine_err = max(abs(b.woe - w) for b, w in zip(fine.bins, AGE_FINE_WOE))
    coarse_err = max(abs(b.woe - w) for b, w in zip(coarse.bins, AGE_COARSE_WOE))
    elapsed = time.perf_counter() - t0
    ok = (len(fine.bins) == 7 and len(coarse.bins) == 3 and fine_err <= 1e-3
          and coarse_err <= 1e-3 and elapsed < 1.0)
    return ok, f"max fine error {fine_err:.2e}, max coarse error {coarse_err:.2e}, {elapsed:.2f}s"


# -- 2 ------------------------------------------------------------------------

def worst_gradient_error(preset, input_dim=10, n_inputs=20, h=1e-5, seed=0):
    rng = np.random.default_rng(seed)
    arch = Architecture.preset(preset, input_dim)
    p = init_params(arch, seed)
    for k in p.arrays:  # move biases off zero so every path is exercised
        p.arrays[k] = p.arrays[k] + rng.normal(scale=0.1, size=p.arrays[k].shape)
    X = rng.uniform(size=(n_inputs, input_dim))
    E = rng.normal(size=(n_inputs, arch.latent_dim))
    analytic = [backward(p, X[i], E[i]) for i in range(n_inputs)]
    worst = 0.0
    for k, a in p.arrays.items():
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            r1, k1 = elbo_terms(p, X, E)
            a[idx] = old - h
            r2, k2 = elbo_terms(p, X, E)
            a[idx] = old
            fd = ((k1 - r1) - (k2 - r2)) / (2 * h)
            an = np.array([g[k][idx] for g in analytic])
            rel = np.abs(an - fd) / np.maximum(np.maximum(np.abs(an), np.abs(fd)), 1e-6)
            worst = max(worst, float(rel.max()))
    return worst


def check_2():
    t0 = time.perf_counter()
    errs = {p: worst_gradient_error(p) for p in ("arch1", "arch4")}
    elapsed = time.perf_counter() - t0
    ok = all(e < 1e-4 for e in errs.values()) and elapsed < 30
    return ok, ", ".join(f"{k} worst relative error {v:.2e}" for k, v in errs.items()) \
        + f", {elapsed:.1f}s"


# -- 3 ------------------------------------------------------------------------

def check_3(samples=100_000):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        dz = int(rng.integers(1, 6))
        m = EncodedMoments(rng.normal(size=dz), rng.uniform(-3, 2, size=dz))
        closed = float(kl_to_prior(m.mu, m.log_var))
        z = m.mu + np.exp(0.5 * m.log_var) * rng.standard_normal((samples, dz))
        log_q = -0.5 * np.sum(np.log(2 * np.pi) + m.log_var + (z - m.mu) ** 2 / np.exp(m.log_var),
                              axis=1)
        log_p = -0.5 * np.sum(np.log(2 * np.pi) + z * z, axis=1)
        d = log_q - log_p
        se = d.std(ddof=1) / math.sqrt(samples)
        worst = max(worst, abs(d.mean() - closed) / se)
    return worst < 3.0, f"largest deviation {worst:.2f} standard errors"


# -- 4 ------------------------------------------------------------------------

def three_segment_dataset(n=5000, seed=4):
    names = [f"f{j}" for j in range(10)]
    centers = [(0.0, 1.0), (2.0, 1.5), (-1.5, 0.8)]
    segs = []
    for w, pd, (c, v) in zip((0.5, 0.3, 0.2), (0.02, 0.10, 0.30), centers):
        segs.append(Segment(w, pd, numeric={nm: (c + 0.3 * j * (c != 0), v)
                                            for j, nm in enumerate(names)}))
    return synth_generate(segs, n, seed)


def check_4():
    t0 = time.perf_counter()
    ds = three_segment_dataset()
    X = apply_transform(fit_transform(ds, WOE_COARSE), ds)
    cfg = TrainConfig(Architecture.preset("arch4", X.shape[1]), batch_size=100, seed=5)
    _, h1 = train(X, cfg)
    _, h2 = train(X, cfg)
    first, last = np.mean(h1.neg_elbo[:5]), np.mean(h1.neg_elbo[-5:])
    same = h1.neg_elbo == h2.neg_elbo
    elapsed = time.perf_counter() - t0
    ok = X.shape == (5000, 10) and len(h1) == 50 and last < first and same and elapsed < 120
    return ok, (f"first-5 mean {first:.4f}, last-5 mean {last:.4f}, "
                f"repeat identical={same}, {elapsed:.1f}s")


# -- 5 ------------------------------------------------------------------------

def check_5():
    cfg = LabelingConfig(n_min=50, rho=0.25)
    # centres 3 apart (12 rho); sigma keeps within-blob halves well under rho apart
    centers = [(0, 0), (3, 0), (0, 3), (3, 3), (1.5, 6)]
    results = []
    for seed in range(5):
        P, truth = blobs(centers, 2 * cfg.n_min + 20, 0.1, seed)
        asg = label_latent(P, cfg)
        results.append((asg.n_clusters, adjusted_rand(asg.labels, truth)))
    single, _ = blobs([(0, 0)], 500, 0.05, 99)
    one = label_latent(single, cfg).n_clusters
    ok = all(k == 5 and ari > 0.95 for k, ari in results) and one == 1
    return ok, (f"five-blob runs (clusters, ARI) {[(k, round(a, 4)) for k, a in results]}, "
                f"single blob -> {one} cluster(s)")


# -- 6 ------------------------------------------------------------------------

def check_6(instances=200):
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(instances):
        m = int(rng.integers(3, 13))
        P = rng.normal(size=(m, 2))
        best, _ = exhaustive_bipartition(P)
        got = wcss(P, ward_bisect(P).labels == 0)
        if got > best * (1 + 1e-12) + 1e-12:
            mismatches += 1
    return mismatches == 0, (f"{mismatches}/{instances} instances where the Ward cut is not the "
                             f"minimum within-cluster sum of squares bipartition")


# -- 7 ------------------------------------------------------------------------

PORTFOLIO = [(5327, 97434), (2028, 6121), (1128, 2026), (1543, 2427)]
PORTFOLIO_RATES = [5.47, 33.13, 55.68, 63.58]


def check_7():
    labels = np.concatenate([np.full(n, k) for k, (_, n) in enumerate(PORTFOLIO, start=1)])
    y = np.concatenate([np.r_[np.ones(b), np.zeros(n - b)] for b, n in PORTFOLIO]).astype(int)
    stats = cluster_stats(labels, y)
    rates = [s.default_rate * 100 for s in stats]
    err = max(abs(r - e) for r, e in zip(rates, PORTFOLIO_RATES))
    sep = overlap_matrix(stats)
    all_sep = bool(sep[~np.eye(4, dtype=bool)].all())
    ok = err <= 0.01 and all_sep and all(
        (s.ci_low, s.ci_high) == binomial_ci(s.default_rate, s.n) for s in stats)
    return ok, f"rates {[round(r, 4) for r in rates]} %, max error {err:.4f} pp, all separated={all_sep}"


# -- 8 ------------------------------------------------------------------------

def check_8(instances=50):
    rng = np.random.default_rng(8)
    bad = 0
    for _ in range(instances):
        n, ell, k = int(rng.integers(8, 101)), int(rng.integers(2, 11)), int(rng.integers(2, 5))
        X = rng.normal(1.0, 1.0, size=(n, ell))
        labels = np.concatenate([np.arange(1, k + 1), rng.integers(1, k + 1, size=n - k)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            got = salient_dimensions(X, labels)
        expect = brute_salient(X.tolist(), labels.tolist())
        same = [(s.cluster, s.feature) for s in got] == [(c, f"x{v + 1}") for c, v, _ in expect]
        same = same and all(abs(s.df - d) <= 1e-12 * max(1.0, abs(d))
                            for s, (_, _, d) in zip(got, expect))
        bad += not same
    return bad == 0, f"{instances - bad}/{instances} instances agree"


# -- 9 and 10 -----------------------------------------------------------------

def run_bundled(out: Path) -> float:
    t0 = time.perf_counter()
    code = cli.main(["all", "--config", str(ROOT / "configs" / "synthetic.json"),
                     "--out", str(out), "-q"])
    if code != 0:
        raise RuntimeError(f"pipeline exited with {code}")
    return time.perf_counter() - t0


def check_9(out: Path, elapsed: float):
    rep = json.loads((out / "report.json").read_text())
    cl = rep["clusters"]
    sep = np.array(rep["separated"], dtype=bool)
    pairs = int(np.triu(sep, 1).sum())
    ok = len(cl) >= 2 and pairs >= 1 and elapsed < 300
    rates = [round(float(c["default_rate"]), 4) for c in cl]
    return ok, (f"{len(cl)} clusters, default rates {rates}, {pairs} pair(s) with disjoint "
                f"99% intervals, {elapsed:.0f}s")


def check_10(a: Path, b: Path):
    names = ("embedding.csv", "assignment.csv", "report.json")
    same = {n: (a / n).read_bytes() == (b / n).read_bytes() for n in names}
    return all(same.values()), ", ".join(f"{n} identical={v}" for n, v in same.items())


# -- pytest glue ----------------------------------------------------------------

def announce(capsys, k, result):
    ok, detail = result
    line = f"ACCEPTANCE {k:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


@pytest.fixture(scope="module")
def bundled_runs(tmp_path_factory):
    a = tmp_path_factory.mktemp("run_a")
    b = tmp_path_factory.mktemp("run_b")
    elapsed = run_bundled(a)
    run_bundled(b)
    return a, b, elapsed


def test_criterion_1_woe_reproduction(capsys):
    assert announce(capsys, 1, check_1())


def test_criterion_2_gradients(capsys):
    assert announce(capsys, 2, check_2())


def test_criterion_3_kl_monte_carlo(capsys):
    assert announce(capsys, 3, check_3())


def test_criterion_4_convergence(capsys):
    assert announce(capsys, 4, check_4())


def test_criterion_5_blob_recovery(capsys):
    assert announce(capsys, 5, check_5())


def test_criterion_6_ward_exhaustive(capsys):
    assert announce(capsys, 6, check_6())


def test_criterion_7_default_rate_intervals(capsys):
    assert announce(capsys, 7, check_7())


def test_criterion_8_salient_oracle(capsys):
    assert announce(capsys, 8, check_8())


@pytest.mark.slow
def test_criterion_9_end_to_end(capsys, bundled_runs):
    a, _, elapsed = bundled_runs
    assert announce(capsys, 9, check_9(a, elapsed))


@pytest.mark.slow
def test_criterion_10_determinism(capsys, bundled_runs):
    a, b, _ = bundled_runs
    assert announce(capsys, 10, check_10(a, b))


if __name__ == "__main__":
    import tempfile
    results = [announce(None, k, f()) for k, f in enumerate(
        (check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8), start=1)]
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "a", Path(tmp) / "b"
        elapsed = run_bundled(a)
        run_bundled(b)
        results.append(announce(None, 9, check_9(a, elapsed)))
        results.append(announce(None, 10, check_10(a, b)))
    sys.exit(0 if all(results) else 1)
