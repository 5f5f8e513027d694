import math
from dataclasses import replace

import numpy as np
import pytest

from latentforest import pipelines
from latentforest.pipelines import (
    ABLATION_BASELINE,
    DEFAULT_RATIOS,
    METHODS,
    RunConfig,
    ablation_configs,
    derive_seed,
    run,
    run_ablation,
    run_attentionforest,
    run_embedforest,
    run_pcaforest,
    run_smote,
    sweep_ratios,
)
from latentforest.tabular import synthetic_count

from conftest import fast_config, imbalanced_gaussians


def _spans_valid(X, spans):
    for a, b in spans.values():
        block = X[:, a:b]
        if not (set(np.unique(block)) <= {0.0, 1.0} and np.all(block.sum(axis=1) == 1.0)):
            return False
    return True


@pytest.mark.parametrize("method", METHODS)
def test_every_method_keeps_the_protocol(method, mixed_data):
    res = run(mixed_data, fast_config(method))
    n_min = res.minority_train_count
    assert n_min == 21  # round(0.7 * 30)
    assert res.n_synthetic == synthetic_count(100, n_min)
    assert not res.test.synthetic.any()
    assert res.train.synthetic.sum() == res.n_synthetic
    assert np.all(res.train.y[res.train.synthetic] == res.synthetic_label)
    assert set(res.report.classifiers) == {"random_forest", "gbt_classifier"}
    assert np.isfinite(res.report.wd)
    if method == "pcaforest":
        assert res.metric_space == "latent"
        assert res.synthetic.shape[1] == res.models["pca"].d
    else:
        assert res.metric_space == "raw"
        assert res.synthetic.shape[1] == mixed_data.X.shape[1]
        assert _spans_valid(res.synthetic, mixed_data.encoding_map)


def test_pcaforest_seventy_minority_rows():
    d = imbalanced_gaussians(300, 100, dim=3, seed=1)
    res = run_pcaforest(d, fast_config())
    assert res.minority_train_count == 70
    assert res.n_synthetic == 70


def test_embedforest_latent_width(mixed_data):
    res = run_embedforest(mixed_data, fast_config())
    assert res.models["codec"].latent_dim == math.ceil(mixed_data.X.shape[1] / 2)
    assert res.config.mode == "vp_residual"


def test_attentionforest_contract(mixed_data):
    cfg = RunConfig(method="attentionforest")
    a = cfg.attention
    assert (a.embed_dim, a.nhead, a.num_layers, a.dim_ff) == (8, 4, 2, 64)
    res = run_attentionforest(mixed_data, fast_config())
    for stage in ("standardize", "encode", "flow_fit", "sample", "decode", "classify"):
        assert stage in res.timings
    assert res.models["codec"].latent_dim == 2  # 3 tokens * 0.5, rounded up
    assert _spans_valid(res.synthetic, mixed_data.encoding_map)


def test_smote_pipeline_stays_in_minority_box(small_data):
    res = run_smote(small_data, fast_config())
    ref = res.train.X[(~res.train.synthetic) & (res.train.y == res.synthetic_label)]
    assert np.all(res.synthetic >= ref.min(axis=0) - 1e-9)
    assert np.all(res.synthetic <= ref.max(axis=0) + 1e-9)


def test_runs_are_deterministic(small_data):
    a = run(small_data, fast_config("embedforest"))
    b = run(small_data, fast_config("embedforest"))
    np.testing.assert_array_equal(a.synthetic, b.synthetic)
    assert a.report.to_dict() == b.report.to_dict()


def test_seeds_do_not_depend_on_ratio():
    assert derive_seed(3, "split") == derive_seed(3, "split")
    assert len({derive_seed(0, s) for s in ("split", "codec", "generator", "sample")}) == 4


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(method="gan")
    with pytest.raises(ValueError):
        RunConfig(augmentation_ratio=-5)
    with pytest.raises(ValueError):
        RunConfig(method="smote", flow_mode="icfm")
    with pytest.raises(ValueError):
        RunConfig(classifiers=("svm",))
    with pytest.raises(ValueError):
        RunConfig(method="smote", metric_space="latent")
    cfg = fast_config("embedforest", flow_mode="icfm")
    assert RunConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_sweep_shares_partition(small_data):
    sw = sweep_ratios(small_data, fast_config(), [50, 100, 150], include_baseline=True)
    assert sw.ratios == [0, 50, 100, 150]
    assert len({r.test_index.tobytes() for r in sw.results}) == 1
    counts = [r.n_synthetic for r in sw.results]
    assert counts == [synthetic_count(r, 21) for r in (0, 50, 100, 150)]
    # shorter ratios reuse a prefix of the longest draw
    np.testing.assert_array_equal(sw.results[2].synthetic, sw.results[3].synthetic[:counts[2]])
    assert np.isnan(sw.results[0].report.wd)
    rows = sw.table()
    assert len(rows) == 4 * 2
    assert {r["classifier"] for r in rows} == {"random_forest", "gbt_classifier"}
    with pytest.raises(ValueError):
        sweep_ratios(small_data, fast_config(), [])


def test_default_ratios():
    assert list(DEFAULT_RATIOS) == list(range(25, 301, 25))
    assert len(DEFAULT_RATIOS) == 12


def test_ablation_grid():
    grid = ablation_configs(fast_config("attentionforest"))
    assert len(grid) == 15
    name, comp, val, base = grid[0]
    assert name == "baseline" and comp is None
    assert base.attention.embed_dim == 16 and base.flow.n_t == 50 and base.flow.duplicate_K == 100
    assert {v for _, c, v, _ in grid if c == "embed_dim"} == {8, 32}
    for _, comp, val, cfg in grid[1:]:
        assert val != ABLATION_BASELINE[comp]
        got = getattr(cfg.flow if comp in ("n_t", "duplicate_K") else cfg.attention, comp)
        assert got == val


def test_ablation_summary(monkeypatch, small_data):
    recalls = iter([0.5, 0.4, 0.6, 0.6] + [0.1] * 11)

    class _Report:
        def __init__(self, r):
            self.r = r

        def recall(self, name):
            return self.r

    class _Result:
        def __init__(self):
            self.report = _Report(next(recalls))

    monkeypatch.setattr(pipelines, "run", lambda d, cfg: _Result())
    ab = run_ablation(small_data, fast_config("attentionforest"))
    s = ab.summary()
    assert len(s["runs"]) == 15
    assert s["baseline_recall"] == 0.5
    assert (s["best_component"], s["best_value"]) == ("embed_dim", 32)  # first of the tie
    assert s["improvement_pct"] == pytest.approx(20.0)
    with pytest.raises(ValueError):
        run_ablation(small_data, fast_config("smote"))


def test_ablation_zero_baseline(monkeypatch, small_data):
    class _R:
        report = type("Rep", (), {"recall": lambda self, n: 0.0})()

    monkeypatch.setattr(pipelines, "run", lambda d, cfg: _R())
    assert run_ablation(small_data, fast_config("attentionforest")).improvement_pct is None


def test_ratio_zero_run(small_data):
    res = run(small_data, replace(fast_config("smote"), augmentation_ratio=0))
    assert res.n_synthetic == 0
    assert res.report.to_dict()["dcr_mean"] is None
