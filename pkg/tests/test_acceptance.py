"""Acceptance criteria, one test per criterion.

Each test records a ``CRITERION n: PASS|FAIL`` line; the lines are printed in
the pytest terminal summary, and also when this file is run as a script.
Tolerances are fixed here and are not tuned to the results.
"""
import itertools
import math
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from oracles import naive_distances
from scopeguard import (
    CalibrationConfig,
    Dataset,
    DistanceMeasure,
    PowerSpec,
    ScopeMonitor,
    StreamSegment,
    apply_thresholds,
    batch_distance,
    bootstrap_pvalue,
    build_tss,
    fit,
    generate,
    inverse_normal_cdf,
    knn_fit,
    plan_sample_size,
    required_sample_size,
    separable_scenario,
    sweep,
    two_sample_distances,
)
from scopeguard.synth import DRIFT

RESULTS = []
MEASURES = list(DistanceMeasure)


def record(number, ok, detail):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------


def test_criterion_1_distance_oracle():
    rng = np.random.default_rng(1)
    pairs = []
    for i in range(1000):
        n, m = rng.integers(1, 51, size=2)
        if i % 2:  # heavy ties
            pairs.append((rng.integers(-5, 6, n).astype(float), rng.integers(-5, 6, m).astype(float)))
        else:
            pairs.append((rng.normal(0, 1, n), rng.normal(0.5, 2, m)))
    start = time.perf_counter()
    produced = [two_sample_distances(x, y) for x, y in pairs]
    elapsed = time.perf_counter() - start
    worst = 0.0
    for (x, y), got in zip(pairs, produced):
        ref = naive_distances(x, y)
        for meas, v in got.items():
            r = ref[meas.value]
            err = abs(v - r) / abs(r) if r != 0 else abs(v)
            worst = max(worst, err)
    ok = worst <= 1e-12 and elapsed < 10.0
    record(1, ok, f"1000 pairs, max relative error {worst:.2e} (<= 1e-12), production time {elapsed:.2f}s (< 10s)")


def test_criterion_2_permutation():
    x, y = [0.0, 1.0, 2.0, 3.0], [10.0, 11.0, 12.0, 13.0]
    p_exh = bootstrap_pvalue(x, y, "ks", exhaustive=True)
    exact = p_exh == 3 / 71

    # a second, interleaved pair checked against an independent enumeration
    u, v = [0.3, 1.1, 2.0, 2.9], [0.8, 2.5, 3.4, 4.0]
    pooled = u + v
    d_obs = naive_distances(u, v)["cvm"]
    hits = 0
    for first in itertools.combinations(range(8), 4):
        a = [pooled[i] for i in first]
        b = [pooled[i] for i in range(8) if i not in first]
        hits += naive_distances(a, b)["cvm"] >= d_obs - 1e-12
    enumerated = bootstrap_pvalue(u, v, "cvm", exhaustive=True) == (1 + hits) / 71

    # Monte Carlo: hits ~ Binomial(B, q), q the exact tail fraction over the 70 splits
    B = 10_000
    q = (p_exh * 71 - 1) / 70
    p_mc = bootstrap_pvalue(x, y, "ks", B=B, seed=2)
    expected = (1 + B * q) / (B + 1)
    sigma = math.sqrt(B * q * (1 - q)) / (B + 1)
    z = abs(p_mc - expected) / sigma
    ok = exact and enumerated and z <= 3.0
    record(2, ok, f"exhaustive p = {p_exh:.6f} (3/71 exact: {exact}), interleaved pair matches enumeration: "
                  f"{enumerated}; Monte Carlo B=10000 p = {p_mc:.5f}, {z:.2f} binomial sigma from expectation")


def test_criterion_3_power_anchors():
    n8 = required_sample_size(0.8, 0.05, 0.8)
    n5 = required_sample_size(0.5, 0.05, 0.8)
    z = inverse_normal_cdf(0.975)
    ok = n8 == 25 and n5 == 63 and abs(n8 - 26) <= 1 and abs(n5 - 64) <= 1 and abs(z - 1.95996398) <= 1e-6
    record(3, ok, f"n(0.8) = {n8} (want 25, t-table 26), n(0.5) = {n5} (want 63, t-table 64), "
                  f"z(0.975) = {z:.10f}")


def test_criterion_4_batch_size_pipeline():
    z = np.random.default_rng(0).standard_normal(400)
    z = (z - z.mean()) / z.std(ddof=1)
    train = Dataset(z.reshape(-1, 1), np.zeros(400, dtype=int))
    test = Dataset((z + 0.416).reshape(-1, 1), np.zeros(400, dtype=int))
    plan = plan_sample_size(train, test, PowerSpec(alpha=0.05, power=0.8, safety_factor=1.3, batch_multiple=120))
    ok = plan.n_max == 91 and plan.n_final == 120
    record(4, ok, f"max per-cell n_required = {plan.n_max}, n_final = {plan.n_final} (want 91 -> 120)")


def test_criterion_5_rq1_misclassified_vs_correct():
    start = time.perf_counter()
    wins = {m: 0 for m in MEASURES}
    for t in range(100):
        train, test, _ = generate(separable_scenario(seed=1000 + t, batches_before=0, drifted_batches=0,
                                                     batches_after=0, n_test=1500))
        pred = knn_fit(train, 5).predict(test.features)
        test = test.with_predictions(pred)
        tss = build_tss(train, 100, seed=t)
        right = np.flatnonzero(pred == test.labels)
        wrong = np.flatnonzero(pred != test.labels)
        rng = np.random.default_rng(t)
        means = []
        for pool in (wrong, right):
            vals = {m: [] for m in MEASURES}
            for _ in range(10):
                rows = rng.choice(pool, size=120, replace=True)
                overall = batch_distance(test.subset(rows), tss).overall
                for m in MEASURES:
                    vals[m].append(overall[m])
            means.append({m: np.mean(v) for m, v in vals.items()})
        for m in MEASURES:
            wins[m] += means[0][m] > means[1][m]
    elapsed = time.perf_counter() - start
    ok = all(w >= 99 for w in wins.values()) and elapsed < 60.0
    detail = ", ".join(f"{m.value} {w}/100" for m, w in wins.items())
    record(5, ok, f"misclassified > correct mean distance: {detail} (need >= 99); {elapsed:.1f}s (< 60s)")


@pytest.mark.filterwarnings("ignore::scopeguard.distances.SmallSubBatchWarning")  # size 25 can leave a class with 1 row
def test_criterion_6_rq2_gap_grows_with_size():
    sizes = [25, 50, 100, 200, 400]
    reps = 10
    drift = (DRIFT, DRIFT, -DRIFT, -DRIFT)
    good = {m: 0 for m in MEASURES}
    for t in range(100):
        base = separable_scenario(seed=2000 + t)
        spec = replace(base, n_test=1, segments=(StreamSegment(400 * reps, drift, "out"),
                                                 StreamSegment(400 * reps, (), "in")))
        train, _, stream = generate(spec)
        stream = stream.with_predictions(stream.labels)
        tss = build_tss(train, 100, seed=t)
        gaps = {m: np.zeros(len(sizes)) for m in MEASURES}
        for r in range(reps):
            drifted = np.arange(r * 400, (r + 1) * 400)
            clean = drifted + 400 * reps
            for i, n in enumerate(sizes):
                dd = batch_distance(stream.subset(drifted[:n]), tss).overall
                dc = batch_distance(stream.subset(clean[:n]), tss).overall
                for m in MEASURES:
                    gaps[m][i] += (dd[m] - dc[m]) / reps
        for m in MEASURES:
            good[m] += bool(np.all(np.diff(gaps[m]) >= 0))
    ok = all(g >= 95 for g in good.values())
    detail = ", ".join(f"{m.value} {g}/100" for m, g in good.items())
    record(6, ok, f"drift gap non-decreasing over sizes {sizes}: {detail} (need >= 95)")


def test_criterion_7_sweep(fitted, sweep_rows):
    monotone = True
    for m in MEASURES:
        tpr = [r.tpr(m) for r in sweep_rows]
        fpr = [r.fpr(m) for r in sweep_rows]
        monotone &= all(a >= b for a, b in zip(tpr, tpr[1:])) and all(a >= b for a, b in zip(fpr, fpr[1:]))
    perfect, best = {}, {}
    for m in (DistanceMeasure.CVM, DistanceMeasure.AD, DistanceMeasure.WS):
        perfect[m] = any(r.tpr(m) == 1.0 and r.fpr(m) == 0.0 for r in sweep_rows)
        best[m] = max((r.tpr(m) for r in sweep_rows if r.fpr(m) == 0.0), default=0.0)
    ok = monotone and all(perfect.values())
    detail = ", ".join(f"{m.value} {'yes' if perfect[m] else 'no'} (best tpr at fpr=0: {best[m]:.3f})" for m in perfect)
    record(7, ok, f"tpr/fpr non-increasing in k for all measures: {monotone}; k with tpr=1, fpr=0: {detail}")


def _pipeline_verdicts(seed):
    train, test, stream = generate(separable_scenario(seed=seed))
    model = knn_fit(train, 5)
    test = test.with_predictions(model.predict(test.features))
    stream = stream.with_predictions(model.predict(stream.features))
    config = CalibrationConfig(seed=seed)
    raw = fit(train, test, 120, config)
    art = apply_thresholds(raw, sweep(raw, test, config))
    return [(v.batch_index, v.kind.value, v.reason) for v in ScopeMonitor(art).run(stream)]


def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "scopeguard.cli", *args], cwd=cwd,
                          capture_output=True)


def test_criterion_8_monitor_end_to_end(tmp_path):
    first = _pipeline_verdicts(0)
    second = _pipeline_verdicts(0)
    kinds = [k for _, k, _ in first]
    counts_ok = kinds.count("OutOfScope") == 5 and kinds.count("InScope") == 15 and len(kinds) == 20
    drifted_ok = [i for i, k, _ in first if k == "OutOfScope"] == [10, 11, 12, 13, 14]

    knn = ["--model", "knn", "--train", "train.csv"]
    _cli("synth", "--preset", "separable", "--out-dir", ".", "--seed", "0", cwd=tmp_path)
    _cli("fit", "--test", "test.csv", *knn, "--batch-size", "120", "--out", "a.json", "--seed", "0", cwd=tmp_path)
    _cli("sweep", "--artifact", "a.json", "--test", "test.csv", *knn, "--out", "s.csv",
         "--artifact-out", "c.json", "--seed", "0", cwd=tmp_path)
    proc = _cli("monitor", "--artifact", "c.json", "--stream", "stream.csv", *knn, "--out", "v.jsonl", cwd=tmp_path)
    ok = counts_ok and drifted_ok and first == second and proc.returncode == 3
    record(8, ok, f"{kinds.count('InScope')} InScope / {kinds.count('OutOfScope')} OutOfScope "
                  f"(drifted batches flagged: {drifted_ok}), repeat run identical: {first == second}, "
                  f"CLI exit code {proc.returncode}")


def test_criterion_9_cli_determinism(tmp_path):
    z = np.random.default_rng(0).standard_normal(400)
    setup = tmp_path / "fixtures"
    setup.mkdir()
    (setup / "pa.csv").write_text("x,label\n" + "".join(f"{float(v)!r},0\n" for v in z))
    (setup / "pb.csv").write_text("x,label\n" + "".join(f"{float(v) + 0.5!r},0\n" for v in z))

    def run_all(root):
        root.mkdir()
        knn = ["--model", "knn", "--train", "train.csv"]
        steps = {
            "synth": ["synth", "--preset", "separable", "--out-dir", ".", "--seed", "7"],
            "power": ["power", "--train", str(setup / "pa.csv"), "--test", str(setup / "pb.csv"), "--seed", "7"],
            "fit": ["fit", "--test", "test.csv", *knn, "--batch-size", "120", "--r-batches", "50",
                    "--out", "a.json", "--seed", "7"],
            "sweep": ["sweep", "--artifact", "a.json", "--test", "test.csv", *knn, "--r-batches", "50",
                      "--out", "s.csv", "--artifact-out", "c.json", "--seed", "7"],
            "distance": ["distance", "--a", str(setup / "pa.csv"), "--b", str(setup / "pb.csv"),
                         "--bootstrap", "50", "--seed", "7"],
            "monitor": ["monitor", "--artifact", "c.json", "--stream", "stream.csv", *knn,
                        "--out", "v.jsonl", "--seed", "7"],
            "predict": ["predict", "--train", "train.csv", "--data", "stream.csv", "--output", "p.csv", "--seed", "7"],
        }
        out = {}
        for name, argv in steps.items():
            proc = _cli(*argv, cwd=root)
            out[name] = (proc.returncode, proc.stdout)
        files = {p.name: p.read_bytes() for p in sorted(root.iterdir())}
        return out, files

    a_out, a_files = run_all(tmp_path / "a")
    b_out, b_files = run_all(tmp_path / "b")
    differing = [k for k in a_out if a_out[k] != b_out[k]]
    differing += [k for k in a_files if a_files[k] != b_files.get(k)]
    codes = {k: v[0] for k, v in a_out.items()}
    ran = all(c == 0 for k, c in codes.items() if k != "monitor") and codes["monitor"] == 3
    ok = not differing and ran and set(a_files) == set(b_files)
    record(9, ok, f"7 subcommands x 2 runs, {len(a_files)} output files; differing outputs: {differing or 'none'}; "
                  f"exit codes {codes}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
