import math

import numpy as np

from seesaw.losses import seesaw_loss
from seesaw.telemetry import (TelemetryLog, grad_ratio_report, group_mean_ratios, ratio_spread, read_report,
                              write_report)
from seesaw.trainer import TrainConfig, train


def test_record_splits_roles():
    log = TelemetryLog.zeros(3)
    log.record([0, 2], np.array([[-0.5, 0.25, 0.25], [0.1, 0.2, -0.3]]))
    np.testing.assert_allclose(log.pos_grad_sum, [0.5, 0.0, 0.3])
    np.testing.assert_allclose(log.neg_grad_sum, [0.1, 0.45, 0.25])


def test_empty_log_reports_infinite_ratios():
    rows = grad_ratio_report(TelemetryLog.zeros(4), [5, 40, 1, 10])
    assert [r.cls for r in rows] == [1, 3, 0, 2]
    assert all(math.isinf(r.ratio) for r in rows)
    assert all(math.isnan(v) for v in group_mean_ratios(rows).values())


def test_sums_non_decreasing_and_replayable(small_ds):
    steps = []
    cfg = TrainConfig(epochs=3)

    def cb(s):
        steps.append((s.indices.copy(), s.head.copy(), s.counts))

    res = train(small_ds, cfg, callback=cb)
    replay = TelemetryLog.zeros(small_ds.num_classes)
    for idx, head, counts in steps:
        g = seesaw_loss(head.forward(small_ds.features[idx]), small_ds.labels[idx], counts, cfg.seesaw).grad_logits
        before = (replay.pos_grad_sum.copy(), replay.neg_grad_sum.copy())
        replay.record(small_ds.labels[idx], g)
        assert np.all(replay.pos_grad_sum >= before[0]) and np.all(replay.neg_grad_sum >= before[1])
    np.testing.assert_allclose(replay.pos_grad_sum, res.telemetry.pos_grad_sum, rtol=1e-12)
    np.testing.assert_allclose(replay.neg_grad_sum, res.telemetry.neg_grad_sum, rtol=1e-12)


def test_report_csv_round_trip(small_ds, tmp_path):
    res = train(small_ds, TrainConfig(epochs=2))
    rows = grad_ratio_report(res.telemetry, small_ds.class_counts_static)
    write_report(rows, tmp_path / "t.csv")
    assert read_report(tmp_path / "t.csv") == rows


def test_ratio_spread():
    assert ratio_spread({"rare": 0.5, "common": 1.0, "frequent": 2.0}) == 4.0
    assert ratio_spread({"rare": math.nan, "common": 1.0, "frequent": 1.0}) == 1.0
