"""End-to-end oversampling runs, ratio sweeps and the attention ablation grid.

Every run follows one protocol: a stratified split is drawn from the labels
and the run seed before any generator sees the data, the generator is fitted
on minority training rows only, synthetic rows are appended to the training
partition, and classifiers are scored on the untouched test partition.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from latentforest.autoencoder import TrainConfig, default_latent_dim, fit_autoencoder
from latentforest.flow import ICFM, MODES, VP_RESIDUAL, FlowConfig, fit_forest_diffusion
from latentforest.metrics import MetricsReport, classification_metrics, similarity_metrics
from latentforest.pca import fit_pca
from latentforest.smote import fit_smote
from latentforest.tabular import (
    Dataset,
    FeatureSchema,
    augment,
    minority_label,
    project_one_hot,
    standardize,
    stratified_split_indices,
    synthetic_count,
)
from latentforest.transformer import AttnConfig, TokenLayout, fit_transformer_ae
from latentforest.trees import (
    ForestParams,
    GbtClassifierParams,
    fit_gbt_classifier,
    fit_random_forest,
)

METHODS = ("pcaforest", "embedforest", "attentionforest", "forestdiffusion", "smote")
CLASSIFIERS = ("random_forest", "gbt_classifier")
DEFAULT_RATIOS = tuple(range(25, 301, 25))
DEFAULT_MODE = {"pcaforest": ICFM, "forestdiffusion": ICFM,
                "embedforest": VP_RESIDUAL, "attentionforest": VP_RESIDUAL}
METRIC_SPACE = {"pcaforest": "latent"}

# stage codes for derived seeds; fixed so that seeds never depend on the ratio
_SEED_STAGES = {"split": 1, "codec": 2, "generator": 3, "sample": 4,
                "random_forest": 5, "gbt_classifier": 6}


def derive_seed(seed: int, stage: str) -> int:
    return int(np.random.SeedSequence([seed, _SEED_STAGES[stage]]).generate_state(1)[0])


@dataclass
class RunConfig:
    method: str = "pcaforest"
    augmentation_ratio: float = 100.0
    seed: int = 0
    train_fraction: float = 0.7
    flow: FlowConfig = field(default_factory=FlowConfig)
    flow_mode: str | None = None  # None: per-method default
    variance_target: float = 0.95
    autoencoder: TrainConfig = field(default_factory=TrainConfig)
    ae_latent_dim: int | None = None
    attention: AttnConfig = field(default_factory=AttnConfig)
    k_neighbors: int = 5
    classifiers: tuple[str, ...] = CLASSIFIERS
    forest: ForestParams = field(default_factory=ForestParams)
    gbt: GbtClassifierParams = field(default_factory=GbtClassifierParams)
    metric_space: str | None = None  # None: per-method default

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.augmentation_ratio < 0:
            raise ValueError("augmentation_ratio must be >= 0")
        if self.flow_mode is not None and self.flow_mode not in MODES:
            raise ValueError(f"flow_mode must be one of {MODES}")
        if self.flow_mode is not None and self.method == "smote":
            raise ValueError("smote does not use a flow")
        self.classifiers = tuple(self.classifiers)
        if not self.classifiers or any(c not in CLASSIFIERS for c in self.classifiers):
            raise ValueError(f"classifiers must be a non-empty subset of {CLASSIFIERS}")
        if self.metric_space is not None and self.metric_space != self.space:
            raise ValueError(f"{self.method} evaluates in {self.space} space, "
                             f"not {self.metric_space}")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")

    @property
    def mode(self) -> str | None:
        return self.flow_mode or DEFAULT_MODE.get(self.method)

    @property
    def space(self) -> str:
        return METRIC_SPACE.get(self.method, "raw")

    def with_ratio(self, ratio: float) -> "RunConfig":
        return replace(self, augmentation_ratio=ratio)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classifiers"] = list(self.classifiers)
        d["flow_mode"] = self.mode
        d["metric_space"] = self.space
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        nested = {"flow": FlowConfig, "autoencoder": TrainConfig, "attention": AttnConfig,
                  "forest": ForestParams, "gbt": GbtClassifierParams}
        for key, typ in nested.items():
            if key in d and isinstance(d[key], dict):
                d[key] = typ(**d[key])
        if "classifiers" in d:
            d["classifiers"] = tuple(d["classifiers"])
        return cls(**d)


@dataclass
class AugmentationResult:
    method: str
    ratio: float
    synthetic: np.ndarray
    synthetic_label: int
    train: Dataset  # augmented training partition, evaluation space
    test: Dataset
    train_index: np.ndarray
    test_index: np.ndarray
    report: MetricsReport
    models: dict
    timings: dict
    config: RunConfig
    seeds: dict

    @property
    def n_synthetic(self) -> int:
        return self.synthetic.shape[0]

    @property
    def minority_train_count(self) -> int:
        real = ~self.train.synthetic
        return int(np.sum(self.train.y[real] == self.synthetic_label))

    @property
    def metric_space(self) -> str:
        return self.report.metric_space

    @property
    def schema(self) -> FeatureSchema:
        return self.train.schema


class _Timer:
    def __init__(self, sink: dict, stage: str):
        self.sink, self.stage = sink, stage

    def __enter__(self):
        self.start = time.perf_counter()

    def __exit__(self, *exc):
        self.sink[self.stage] = self.sink.get(self.stage, 0.0) + time.perf_counter() - self.start


class PreparedRun:
    """Split and evaluation-space data for one (dataset, method, seed); the
    generator is fitted on first use and reused across ratios."""

    def __init__(self, d: Dataset, cfg: RunConfig):
        self.cfg = cfg
        self.seeds = {stage: derive_seed(cfg.seed, stage) for stage in _SEED_STAGES}
        self.timings: dict[str, float] = {}
        self.models: dict = {}
        self.minority = minority_label(d.y)
        self.train_index, self.test_index = stratified_split_indices(
            d.y, cfg.train_fraction, self.seeds["split"])
        with _Timer(self.timings, "standardize"):
            self.std_data, self.scaler = standardize(d)
        self.raw = d
        if cfg.method == "pcaforest":
            with _Timer(self.timings, "encode"):
                pca = fit_pca(self.std_data.X, cfg.variance_target)
                L = pca.project(self.std_data.X)
            self.models["pca"] = pca
            names = [f"pc{i + 1}" for i in range(pca.d)]
            space = Dataset(L, d.y, FeatureSchema.numeric(names, d.schema.target_column))
        else:
            space = d
        self.train = space.subset(self.train_index)
        self.test = space.subset(self.test_index)
        self.reference = self.train.X[self.train.y == self.minority]
        self._sampler = None

    @property
    def minority_train_count(self) -> int:
        return self.reference.shape[0]

    def _std_minority(self):
        rows = self.train_index[self.raw.y[self.train_index] == self.minority]
        return self.std_data.X[rows]

    def _fit_generator(self):
        cfg, seeds, t = self.cfg, self.seeds, self.timings
        flow_cfg = cfg.flow
        spans = self.raw.encoding_map
        if cfg.method == "pcaforest":
            with _Timer(t, "flow_fit"):
                fd = fit_forest_diffusion(self.reference, flow_cfg, seeds["generator"], cfg.mode)
            self.models["flow"] = fd
            return lambda n: _timed(t, "sample", fd.generate, n, seeds["sample"])
        if cfg.method == "forestdiffusion":
            with _Timer(t, "flow_fit"):
                fd = fit_forest_diffusion(self.reference, flow_cfg, seeds["generator"], cfg.mode)
            self.models["flow"] = fd

            def gen(n):
                raw = _timed(t, "sample", fd.generate, n, seeds["sample"])
                with _Timer(t, "decode"):
                    return project_one_hot(raw, spans)
            return gen
        if cfg.method == "smote":
            with _Timer(t, "flow_fit"):
                sm = fit_smote(self._std_minority(), cfg.k_neighbors, seeds["sample"])
            self.models["smote"] = sm

            def gen(n):
                Z = _timed(t, "sample", sm.sample, n)
                with _Timer(t, "decode"):
                    return project_one_hot(self.scaler.inverse(Z), spans)
            return gen

        Z_min = self._std_minority()
        if cfg.method == "embedforest":
            latent = cfg.ae_latent_dim or default_latent_dim(Z_min.shape[1])
            with _Timer(t, "encode"):
                codec = fit_autoencoder(Z_min, latent, replace(cfg.autoencoder, seed=seeds["codec"]))
                L = codec.encode(Z_min)

            def decode(Ls):
                return project_one_hot(self.scaler.inverse(codec.decode(Ls)), spans)
        else:
            layout = TokenLayout.from_schema(self.raw.schema)
            with _Timer(t, "encode"):
                codec = fit_transformer_ae(Z_min, layout,
                                           replace(cfg.attention, seed=seeds["codec"]))
                L = codec.encode(Z_min)

            def decode(Ls):
                out = codec.decode(Ls)
                R = self.scaler.inverse(out)
                for a, b in spans.values():  # categorical heads emit probabilities
                    R[:, a:b] = out[:, a:b]
                return project_one_hot(R, spans)
        self.models["codec"] = codec
        with _Timer(t, "flow_fit"):
            fd = fit_forest_diffusion(L, flow_cfg, seeds["generator"], cfg.mode)
        self.models["flow"] = fd

        def gen(n):
            Ls = _timed(t, "sample", fd.generate, n, seeds["sample"])
            with _Timer(t, "decode"):
                return decode(Ls)
        return gen

    def generate(self, n: int) -> np.ndarray:
        if n == 0:
            return np.zeros((0, self.train.X.shape[1]))
        if self._sampler is None:
            self._sampler = self._fit_generator()
        return self._sampler(n)


def _timed(sink, stage, fn, *args):
    with _Timer(sink, stage):
        return fn(*args)


def _classify(prep: PreparedRun, aug: Dataset, cfg: RunConfig, timings: dict) -> tuple[dict, dict]:
    scores, models = {}, {}
    for name in cfg.classifiers:
        with _Timer(timings, "classify"):
            if name == "random_forest":
                clf = fit_random_forest(aug.X, aug.y, replace(cfg.forest, seed=prep.seeds[name]))
            else:
                clf = fit_gbt_classifier(aug.X, aug.y, replace(cfg.gbt, seed=prep.seeds[name]))
            pred = clf.predict(prep.test.X)
        scores[name] = classification_metrics(prep.test.y, pred, prep.minority)
        models[name] = clf
    return scores, models


def evaluate_ratio(prep: PreparedRun, ratio: float, synthetic: np.ndarray | None = None
                   ) -> AugmentationResult:
    """Augment with ``ratio``% synthetic minority rows and score the classifiers."""
    cfg = prep.cfg.with_ratio(ratio)
    n = synthetic_count(ratio, prep.minority_train_count)
    if synthetic is None:
        synthetic = prep.generate(n)
    synthetic = synthetic[:n]
    timings = dict(prep.timings)
    aug = augment(prep.train, synthetic, prep.minority)
    scores, clf_models = _classify(prep, aug, cfg, timings)
    sim = similarity_metrics(prep.reference, synthetic)
    report = MetricsReport(scores, sim["wd"], sim["dcr_mean"], sim["dcr_median"],
                           sim["nndr_mean"], cfg.space, timings)
    return AugmentationResult(cfg.method, ratio, synthetic, prep.minority, aug, prep.test,
                              prep.train_index, prep.test_index, report,
                              {**prep.models, **clf_models}, timings, cfg, dict(prep.seeds))


def run(d: Dataset, cfg: RunConfig) -> AugmentationResult:
    return evaluate_ratio(PreparedRun(d, cfg), cfg.augmentation_ratio)


def run_pcaforest(d: Dataset, cfg: RunConfig | None = None) -> AugmentationResult:
    return run(d, replace(cfg or RunConfig(), method="pcaforest", flow_mode=None))


def run_embedforest(d: Dataset, cfg: RunConfig | None = None) -> AugmentationResult:
    return run(d, replace(cfg or RunConfig(), method="embedforest", flow_mode=None))


def run_attentionforest(d: Dataset, cfg: RunConfig | None = None) -> AugmentationResult:
    return run(d, replace(cfg or RunConfig(), method="attentionforest", flow_mode=None))


def run_forestdiffusion(d: Dataset, cfg: RunConfig | None = None) -> AugmentationResult:
    return run(d, replace(cfg or RunConfig(), method="forestdiffusion", flow_mode=None))


def run_smote(d: Dataset, cfg: RunConfig | None = None) -> AugmentationResult:
    return run(d, replace(cfg or RunConfig(), method="smote", flow_mode=None))


@dataclass
class SweepResult:
    results: list[AugmentationResult]

    @property
    def ratios(self) -> list[float]:
        return [r.ratio for r in self.results]

    def table(self) -> list[dict]:
        """One row per ratio per classifier."""
        rows = []
        for r in self.results:
            rep = r.report.to_dict()
            for name, s in r.report.classifiers.items():
                rows.append({
                    "method": r.method, "ratio": r.ratio, "n_synthetic": r.n_synthetic,
                    "classifier": name, "recall": s["recall"], "precision": s["precision"],
                    "f1": s["f1"], "wd": rep["wd"], "dcr_mean": rep["dcr_mean"],
                    "dcr_median": rep["dcr_median"], "nndr_mean": rep["nndr_mean"],
                    "metric_space": r.metric_space,
                })
        return rows


def sweep_ratios(d: Dataset, cfg: RunConfig, ratios=DEFAULT_RATIOS,
                 include_baseline: bool = False) -> SweepResult:
    """Fit the generator once, then evaluate each ratio on a prefix of one draw."""
    ratios = list(ratios)
    if include_baseline and 0 not in ratios:
        ratios = [0, *ratios]
    if not ratios:
        raise ValueError("ratios must be non-empty")
    prep = PreparedRun(d, cfg)
    counts = [synthetic_count(r, prep.minority_train_count) for r in ratios]
    pool = prep.generate(max(counts))
    return SweepResult([evaluate_ratio(prep, r, pool) for r in ratios])


ABLATION_BASELINE = {
    "embed_dim": 16, "num_layers": 2, "nhead": 4, "latent_dim_factor": 0.5,
    "learning_rate": 0.001, "n_t": 50, "duplicate_K": 100,
}
ABLATION_VALUES = {
    "embed_dim": (8, 16, 32),
    "num_layers": (1, 2, 3),
    "nhead": (2, 4, 8),
    "latent_dim_factor": (0.25, 0.5, 1.0),
    "learning_rate": (0.0001, 0.001, 0.01),
    "n_t": (25, 50, 100),
    "duplicate_K": (50, 100, 200),
}
_FLOW_KNOBS = ("n_t", "duplicate_K")


def _with_setting(cfg: RunConfig, component: str, value) -> RunConfig:
    if component in _FLOW_KNOBS:
        return replace(cfg, flow=replace(cfg.flow, **{component: value}))
    return replace(cfg, attention=replace(cfg.attention, **{component: value}))


def ablation_configs(base_cfg: RunConfig) -> list[tuple[str, str | None, object, RunConfig]]:
    """(name, component, value, config): the baseline, then one-factor variants."""
    base = replace(base_cfg, method="attentionforest", flow_mode=None)
    for component, value in ABLATION_BASELINE.items():
        base = _with_setting(base, component, value)
    out = [("baseline", None, None, base)]
    for component, values in ABLATION_VALUES.items():
        for v in values:
            if v != ABLATION_BASELINE[component]:
                out.append((f"{component}={v}", component, v, _with_setting(base, component, v)))
    return out


@dataclass
class AblationResult:
    runs: list[dict]  # name, component, value, recall, result
    baseline_recall: float
    best_component: str
    best_value: object
    best_recall: float
    improvement_pct: float | None

    def summary(self) -> dict:
        return {
            "baseline_recall": self.baseline_recall,
            "best_component": self.best_component,
            "best_value": self.best_value,
            "best_recall": self.best_recall,
            "improvement_pct": self.improvement_pct,
            "runs": [{k: r[k] for k in ("name", "component", "value", "recall")}
                     for r in self.runs],
        }


def run_ablation(d: Dataset, base_cfg: RunConfig, classifier: str = "random_forest"
                 ) -> AblationResult:
    if base_cfg.method != "attentionforest":
        raise ValueError("the ablation grid applies to attentionforest")
    runs = []
    for name, component, value, cfg in ablation_configs(base_cfg):
        res = run(d, cfg)
        runs.append({"name": name, "component": component, "value": value,
                     "recall": res.report.recall(classifier), "result": res})
    base = runs[0]["recall"]
    best = max(runs[1:], key=lambda r: r["recall"])  # first wins on ties
    gain = None if base == 0 else (best["recall"] - base) / base * 100.0
    return AblationResult(runs, base, best["component"], best["value"], best["recall"], gain)
