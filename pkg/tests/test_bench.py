import json

import numpy as np
import pytest

from gaussian_shading.bench import (BenchConfig, DiffusionConfig, clean_config, detection_curve,
                                    detection_rate, export_curve, export_records, export_roc,
                                    export_table, load_config, roc, run_experiment, run_trials,
                                    summarize, table3_report, uniqueness_experiment)
from gaussian_shading.diffusion import ChannelSpec
from gaussian_shading.exceptions import ConfigError


def test_identity_channel_all_detected():
    recs = run_trials(BenchConfig(trials=100, tfpr_grid=(0.001, 0.01, 0.05)))
    assert all(r.hamming == 0 for r in recs)
    assert all(all(r.detected.values()) for r in recs)
    assert all(r.exact_match for r in recs)


def test_run_is_reproducible_and_order_independent():
    cfg = BenchConfig(trials=20, message=None, channel=ChannelSpec.parse("bit_flip:0.2"), seed=5)
    a = run_trials(cfg)
    b = run_trials(cfg, trial_ids=reversed(range(20)))
    assert [r.to_dict() for r in a] == [r.to_dict() for r in reversed(b)]
    assert [r.to_dict() for r in a] == [r.to_dict() for r in run_trials(cfg)]


def test_random_message_lengths():
    recs = run_trials(BenchConfig(trials=50, message=None, random_message_bits=(8, 128)))
    lengths = {r.m_bits for r in recs}
    assert min(lengths) >= 8 and max(lengths) <= 128 and len(lengths) > 10


def test_diffusion_in_path_records_mse():
    cfg = BenchConfig(trials=5, diffusion=DiffusionConfig(num_steps=100))
    recs = run_trials(cfg)
    assert all(r.roundtrip_mse is not None and r.roundtrip_mse < 0.01 for r in recs)
    assert all(r.hamming == 0 for r in recs)


def test_clean_cohort_detection_rate_near_tfpr():
    clean = run_trials(clean_config(BenchConfig(trials=2000)))
    for t in (0.01, 0.05):
        rate = detection_rate(clean, t)
        assert abs(rate - t) <= 3 * np.sqrt(t * (1 - t) / 2000) + 0.003


def test_detection_curve_bands():
    wm = run_trials(BenchConfig(trials=600))
    clean = run_trials(clean_config(BenchConfig(trials=600)))
    curve = detection_curve(wm, clean, [0.01, 0.1, 0.3], n_folds=6, fold_size=100)
    assert curve.watermarked_mean == [1.0, 1.0, 1.0]
    assert curve.watermarked_std == [0.0, 0.0, 0.0]
    for t, m in zip(curve.tfpr, curve.clean_mean):
        assert abs(m - t) < 0.1
    small = detection_curve(wm, clean, [0.3], n_folds=6, fold_size=20)
    assert small.fold_size == 20 and curve.fold_size == 100


def test_detection_curve_sigma_shrinks_with_fold_size():
    # binomial sampling: sigma ~ sqrt(t(1-t)/fold_size)
    clean = run_trials(clean_config(BenchConfig(trials=2400)))
    stds = []
    for size in (25, 400):
        reps = [detection_curve(clean, clean, [0.3], n_folds=6, fold_size=size, seed=s).clean_std[0]
                for s in range(10)]
        stds.append(np.mean(reps))
    assert stds[1] < stds[0] / 2


def test_empty_cohort_errors():
    with pytest.raises(ValueError):
        roc([], run_trials(BenchConfig(trials=2)))
    with pytest.raises(ValueError):
        detection_curve([], [], [0.1])


def test_roc_identity_vs_clean():
    cfg = BenchConfig(trials=300)
    curve = roc(run_trials(cfg), run_trials(clean_config(cfg)))
    assert curve.auc >= 0.999
    fpr, tpr = np.array(curve.points).T
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)


def test_roc_same_distribution_is_half():
    cfg = BenchConfig(trials=1000)
    clean_a = run_trials(clean_config(cfg))
    clean_b = run_trials(clean_config(BenchConfig(trials=1000, seed=77)))
    assert abs(roc(clean_a, clean_b).auc - 0.5) <= 0.03
    assert roc(clean_a, clean_a).auc == pytest.approx(0.5, abs=1e-12)


def test_roc_bit_flip_0506_slightly_below_half():
    # 0.506 flip rate puts watermarked Hamming mean at 253 vs 250: AUC ~ 0.42
    cfg = BenchConfig(trials=1000, channel=ChannelSpec.parse("bit_flip:0.506"))
    auc = roc(run_trials(cfg), run_trials(clean_config(cfg))).auc
    assert 0.35 < auc < 0.5


def test_table3_small():
    rows = table3_report(trials=200, seed=1, diffusion=DiffusionConfig(num_steps=50))
    by = {r["method"]: r for r in rows}
    ident = by["identity_diffusion_roundtrip"]
    assert (ident["tpr_at_1pct_fpr"], ident["tpr_at_5pct_fpr"], ident["extraction"],
            ident["bit_accuracy"]) == (1.0, 1.0, 1.0, 1.0)
    assert by["diffusion_only"]["tpr_at_1pct_fpr"] == 1.0
    assert by["3d_decoded"]["tpr_at_1pct_fpr"] <= 0.03
    for row in rows[1:]:
        p = float(row["channel"].split(":")[1])
        n = 200 * 500
        assert abs(row["bit_accuracy"] - (1 - p)) <= 3 * np.sqrt(p * (1 - p) / n)


def test_uniqueness():
    out = uniqueness_experiment(100)
    assert out["fixed"]["distinct_latents"] == 1
    assert out["per_sample_nonce"]["distinct_latents"] == 100
    assert out["fixed_key_fresh_u"]["distinct_latents"] == 100
    assert out["fixed_key_fresh_u"]["distinct_ciphertexts"] == 1


@pytest.mark.parametrize("bad,field", [
    ({"trials": 0}, "trials"),
    ({"tfpr_grid": [0.05, 0.01]}, "tfpr_grid"),
    ({"tfpr_grid": [0.0]}, "tfpr_grid"),
    ({"key_policy": "sometimes"}, "key_policy"),
    ({"channel": "bit_flip:2"}, "channel"),
    ({"bogus": 1}, "bogus"),
    ({"diffusion": {"policy": "warp"}}, "diffusion.policy"),
    ({"message": "x" * 100}, "message"),
    ({"trials": "ten"}, "trials"),
])
def test_config_validation(bad, field):
    with pytest.raises(ConfigError) as info:
        BenchConfig.from_dict(bad)
    assert info.value.field == field


def test_config_json_syntax_error(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "trials": 3,\n  oops\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)


def test_exports_are_byte_identical(tmp_path):
    cfg = BenchConfig(trials=30, channel=ChannelSpec.parse("bit_flip:0.3"))
    recs = run_trials(cfg)
    clean = run_trials(clean_config(cfg))
    a = export_records(recs, tmp_path / "a.json").read_bytes()
    b = export_records(run_trials(cfg), tmp_path / "b.json").read_bytes()
    assert a == b
    data = json.loads(a)
    assert len(data["records"]) == 30 and "hamming" in data["records"][0]
    r = json.loads(export_roc(roc(recs, clean), tmp_path / "roc.json").read_text())
    assert set(r) == {"auc", "points"}
    curve = detection_curve(recs, clean, [0.01, 0.05], n_folds=3, fold_size=10)
    lines = export_curve(curve, tmp_path / "curve.csv").read_text().splitlines()
    assert lines[0] == "series,x,y,sigma" and len(lines) == 5


def test_table_csv_header(tmp_path):
    rows = [{"method": "m", "channel": "identity", "tpr_at_1pct_fpr": 1.0, "tpr_at_5pct_fpr": 1.0,
             "extraction": 1.0, "bit_accuracy": 1.0}]
    text = export_table(rows, tmp_path / "t.csv").read_text()
    assert text.splitlines()[0] == "method,channel,tpr_at_1pct_fpr,tpr_at_5pct_fpr,extraction,bit_accuracy"


@pytest.mark.parametrize("experiment,expected", [
    ("trials", {"records", "summary"}), ("roc", {"records", "roc", "roc_points"}),
    ("curve", {"records", "curve"}), ("uniqueness", {"uniqueness"})])
def test_run_experiment_outputs(tmp_path, experiment, expected):
    cfg = {"experiment": experiment, "trials": 24}
    if experiment == "curve":
        cfg.update(n_folds=3, fold_size=8)
    files = run_experiment(cfg, tmp_path)
    assert set(files) == expected
    assert all(p.exists() for p in files.values())


def test_summarize():
    s = summarize(run_trials(BenchConfig(trials=10)))
    assert s["tpr_at_0.01"] == 1.0 and s["extraction"] == 1.0 and s["roundtrip_mse"] is None
