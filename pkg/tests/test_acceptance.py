"""End-to-end acceptance checks; each prints a single PASS/FAIL line."""
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import verdict
from seesaw.data import Dataset, SamplerKind, SyntheticSpec, epoch_indices, generate, repeat_factors, with_seed
from seesaw.gradcheck import run_gradcheck
from seesaw.heads import LinearHead, detection_score, linear_forward, spatial_normalized_forward
from seesaw.losses import (ClassCounts, SeesawConfig, ce_loss, compensation_factor, loss_with_factors,
                           mitigation_factor, negative_grad_sensitivity, seesaw_loss)
from seesaw.numerics import softmax
from seesaw.telemetry import grad_ratio_report, group_mean_ratios, ratio_spread
from seesaw.trainer import TrainConfig, summarize_sweep, sweep, train

SEEDS = range(5)
BASE = TrainConfig()
SPEC = SyntheticSpec()


def long_tail(seed):
    return generate(with_seed(SPEC, seed))


@pytest.fixture(scope="module")
def ce_vs_seesaw():
    """CE and Seesaw runs on the default long-tailed problem, one pair per seed."""
    start = time.perf_counter()
    runs = []
    for s in SEEDS:
        ds = long_tail(s)
        runs.append((train(ds, replace(BASE, loss="ce", seed=s)), train(ds, replace(BASE, seed=s))))
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def sweeps():
    p = summarize_sweep(sweep(long_tail, BASE, "p", [0.2, 0.4, 0.6, 0.8, 1.0, 1.2], seeds=range(3)))
    q = summarize_sweep(sweep(long_tail, BASE, "q", [0.5, 1.0, 1.5, 2.0, 2.5, 3.0], seeds=range(3)))
    return p, q


def test_ce_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    off = SeesawConfig.disabled()
    worst = 0.0
    for _ in range(10_000):
        c = int(rng.integers(2, 30))
        z = rng.normal(0.0, 5.0, c)
        label = int(rng.integers(c))
        counts = ClassCounts(rng.integers(1, 1000, c).astype(float))
        ref = ce_loss(z, label)
        for res in (seesaw_loss(z, label, counts, off), loss_with_factors(z, label, np.ones(c))):
            worst = max(worst, abs(res.loss - ref.loss), float(np.max(np.abs(res.grad_logits - ref.grad_logits))))

    ds = generate(SyntheticSpec(num_classes=8, feature_dim=6, imbalance_ratio=20, max_count=80, seed=2))
    traces = []
    for cfg in (replace(BASE, epochs=5, loss="ce"), replace(BASE, epochs=5, seesaw=off)):
        trace = []
        train(ds, cfg, callback=lambda st: trace.append(st.head.W.tobytes() + st.head.b.tobytes() + repr(st.loss).encode()))
        traces.append(trace)
    identical = traces[0] == traces[1]
    elapsed = time.perf_counter() - start
    verdict("CE equivalence", worst <= 1e-12 and identical and elapsed < 10,
            f"max diff {worst:.1e}, trajectory identical={identical}, {elapsed:.1f}s")


def test_gradcheck():
    start = time.perf_counter()
    errors = run_gradcheck(trials=200, h=1e-5)
    elapsed = time.perf_counter() - start
    worst = max(errors.values())
    verdict("gradient check", worst < 1e-6 and elapsed < 30 and len(errors) == 5,
            f"max rel err {worst:.1e} over {sorted(errors)}, {elapsed:.1f}s")


def test_factor_closed_forms():
    m = mitigation_factor(np.array([100.0, 10.0]), 0, 1, 0.8)
    c = compensation_factor(np.array([0.2, 0.4]), 0, 1, 2.0)
    boundaries = [
        mitigation_factor(np.array([10.0, 100.0]), 0, 1, 0.8),
        mitigation_factor(np.array([50.0, 50.0]), 0, 1, 0.8),
        compensation_factor(np.array([0.4, 0.2]), 0, 1, 2.0),
        compensation_factor(np.array([0.3, 0.3]), 0, 1, 2.0),
    ]
    ok = abs(m - 0.158489319246111349) <= 1e-12 and abs(c - 4.0) <= 1e-12 and all(b == 1.0 for b in boundaries)
    verdict("factor closed forms", ok, f"M={m!r}, C={c!r}, boundaries={boundaries}")


def test_negative_gradient_monotone_in_factor():
    rng = np.random.default_rng(7)
    violations = 0
    for _ in range(1000):
        c = int(rng.integers(2, 20))
        z = rng.normal(0.0, 3.0, c)
        label = int(rng.integers(c))
        j = int(rng.choice([k for k in range(c) if k != label]))
        S = np.exp(rng.uniform(-3.0, 2.0, c))
        bigger = S.copy()
        bigger[j] *= rng.uniform(1.1, 5.0)
        before = loss_with_factors(z, label, S).grad_logits[j]
        after = loss_with_factors(z, label, bigger).grad_logits[j]
        if not (after > before > 0 and negative_grad_sensitivity(z, label, S, j) > 0):
            violations += 1
    verdict("negative-gradient monotonicity", violations == 0, f"{violations} violations in 1000")


def test_tail_accuracy_improves(ce_vs_seesaw):
    runs, elapsed = ce_vs_seesaw
    rare = [(ss.metrics.group_acc["rare"] - ce.metrics.group_acc["rare"]) for ce, ss in runs]
    overall = [(ss.metrics.overall_acc - ce.metrics.overall_acc) for ce, ss in runs]
    ok = all(d > 0 for d in rare) and all(d >= -0.01 for d in overall) and elapsed < 300
    verdict("tail accuracy", ok, f"rare gains {np.round(rare, 3).tolist()}, "
            f"overall gains {np.round(overall, 3).tolist()}, {elapsed:.0f}s")


def test_p_sweep_rare_peak_is_interior(sweeps):
    p, _ = sweeps
    values = list(p)
    rare = [p[v]["rare_acc"] for v in values]
    best = values[int(np.argmax(rare))]
    verdict("p-sweep interior rare peak", best not in (values[0], values[-1]),
            f"rare acc {dict(zip(values, np.round(rare, 3).tolist()))}, peak at p={best}")


def test_q_sweep_flatter_than_p_sweep(sweeps):
    p, q = sweeps
    spread = lambda s: max(v["overall_acc"] for v in s.values()) - min(v["overall_acc"] for v in s.values())  # noqa: E731
    verdict("q-sweep robustness", spread(q) < spread(p), f"overall spread q={spread(q):.4f}, p={spread(p):.4f}")


def test_repeat_factor_statistics():
    t = 0.1
    labels = np.concatenate([np.zeros(2, dtype=np.int64), np.repeat(np.arange(1, 10), 222)])
    ds = Dataset(np.zeros((labels.size, 1)), labels, 10)
    freq = np.bincount(labels) / labels.size
    assert np.isclose(freq[0], t / 100) and np.all(freq[1:] >= t)
    rare_idx = np.flatnonzero(labels == 0)
    kind = SamplerKind("repeat_factor", t)
    repeats, once = [], True
    for epoch in range(1000):
        per_sample = np.bincount(epoch_indices(ds, kind, seed=0, epoch=epoch), minlength=labels.size)
        repeats.append(per_sample[rare_idx].mean())
        once &= bool(np.all(per_sample[labels != 0] == 1))
    mean = float(np.mean(repeats))
    r = repeat_factors(labels, 10, t)[0]
    verdict("repeat-factor sampling", abs(mean - 10) <= 0.1 and once,
            f"mean repeats {mean:.4f} (factor {r:.6f}), frequent classes once per epoch={once}")


def test_gradient_ratio_telemetry(ce_vs_seesaw):
    runs, _ = ce_vs_seesaw
    lines, ok = [], True
    for s, (ce, ss) in zip(SEEDS, runs):
        counts = long_tail(s).class_counts_static
        ce_means = group_mean_ratios(grad_ratio_report(ce.telemetry, counts))
        ss_means = group_mean_ratios(grad_ratio_report(ss.telemetry, counts))
        ok &= ce_means["frequent"] > ce_means["common"] > ce_means["rare"]
        ok &= ratio_spread(ss_means) < ratio_spread(ce_means)
        lines.append(f"seed {s}: CE {ce_means['frequent']:.3f}>{ce_means['common']:.3f}>{ce_means['rare']:.3f} "
                     f"spread {ratio_spread(ce_means):.3f} vs Seesaw {ratio_spread(ss_means):.3f}")
    verdict("gradient-ratio telemetry", ok, "; ".join(lines))


def test_count_source_equivalence():
    gaps = []
    for s in range(3):
        ds = long_tail(s)
        online = train(ds, replace(BASE, seed=s))
        pre = train(ds, replace(BASE, seed=s, seesaw=replace(BASE.seesaw, count_source="pre_recorded")),
                    initial_counts=online.counts)
        gaps.append(abs(pre.metrics.overall_acc - online.metrics.overall_acc))
    verdict("count-source equivalence", max(gaps) <= 0.01, f"overall gaps {np.round(gaps, 4).tolist()}")


def test_head_invariants():
    rng = np.random.default_rng(11)
    bound_ok = argmax_ok = True
    for _ in range(10_000):
        c, d = int(rng.integers(2, 12)), int(rng.integers(1, 10))
        tau = float(rng.uniform(0.5, 40.0))
        head = LinearHead(rng.normal(0, 3, (c, d)), rng.normal(0, 2, c), tau=tau, normalized=True)
        z = head.forward(rng.normal(0, 10, d))
        bound_ok &= bool(np.all(np.abs(z - head.b) <= tau * (1 + 1e-12)))
        sigma = softmax(rng.normal(0, 4, c))
        fg = float(rng.uniform(1e-6, 1.0))
        argmax_ok &= int(np.argmax(detection_score(sigma, fg))) == int(np.argmax(sigma))
    worst = 0.0
    for _ in range(200):
        c, d = int(rng.integers(2, 12)), int(rng.integers(1, 10))
        W, b, x = rng.normal(size=(c, d)), rng.normal(size=c), rng.normal(size=d)
        flat = linear_forward(LinearHead(W, b, tau=16.0, normalized=True), x)
        grid = spatial_normalized_forward(W, b, 16.0, x.reshape(1, 1, d))
        worst = max(worst, float(np.max(np.abs(grid[0, 0] - flat))))
    verdict("head invariants", bound_ok and argmax_ok and worst <= 1e-12,
            f"|z-b|<=tau {bound_ok}, argmax kept {argmax_ok}, spatial diff {worst:.1e}")
