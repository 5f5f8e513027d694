"""Command-line entry point: ``latentforest {augment,evaluate,sweep,ablate}``.

Success prints a JSON summary on stdout and exits 0.  Failure prints a JSON
object ``{"error": ..., "message": ...}`` on stderr and exits 1 (2 for
unusable arguments).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from latentforest import __version__
from latentforest.autoencoder import TrainConfig
from latentforest.flow import MODES, VP_SAMPLERS, FlowConfig
from latentforest.metrics import MetricsReport, classification_metrics, similarity_metrics
from latentforest.pipelines import (
    CLASSIFIERS,
    DEFAULT_RATIOS,
    METHODS,
    RunConfig,
    run,
    run_ablation,
    sweep_ratios,
)
from latentforest.report import build_report, emit_report, validate_report, write_json
from latentforest.tabular import SchemaConfig, load_csv, load_schema_config, minority_label
from latentforest.transformer import AttnConfig
from latentforest.trees import ForestParams, GbtClassifierParams, fit_gbt_classifier, fit_random_forest

logger = logging.getLogger("latentforest")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ratios(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from exc


def _data_args(p):
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--schema", help="schema config file")
    p.add_argument("--target", help="target column (when no schema config is given)")


def _run_args(p, with_method=True):
    if with_method:
        p.add_argument("--method", choices=METHODS, default="pcaforest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train-fraction", type=float, default=0.7)
    g = p.add_argument_group("flow")
    g.add_argument("--n-t", type=int, default=50)
    g.add_argument("--duplicate-k", type=int, default=100)
    g.add_argument("--alpha-min", type=float, default=0.01)
    g.add_argument("--flow-trees", type=int, default=100)
    g.add_argument("--flow-lr", type=float, default=1.0)
    g.add_argument("--flow-depth", type=int, default=7)
    g.add_argument("--flow-min-child-weight", type=float, default=1.0)
    g.add_argument("--flow-batch-size", type=int, default=100)
    g.add_argument("--flow-mode", choices=MODES)
    g.add_argument("--vp-sampler", choices=VP_SAMPLERS, default="renoise")
    g.add_argument("--n-jobs", type=int, default=1)
    g = p.add_argument_group("codecs")
    g.add_argument("--variance-target", type=float, default=0.95)
    g.add_argument("--ae-epochs", type=int, default=1000)
    g.add_argument("--ae-batch-size", type=int, default=32)
    g.add_argument("--ae-lr", type=float, default=0.001)
    g.add_argument("--latent-dim", type=int)
    g.add_argument("--embed-dim", type=int, default=8)
    g.add_argument("--nhead", type=int, default=4)
    g.add_argument("--num-layers", type=int, default=2)
    g.add_argument("--dim-ff", type=int, default=64)
    g.add_argument("--latent-dim-factor", type=float, default=0.5)
    g.add_argument("--attn-epochs", type=int, default=1000)
    g.add_argument("--attn-batch-size", type=int, default=32)
    g.add_argument("--attn-lr", type=float, default=0.001)
    g.add_argument("--attn-optimizer", choices=("sgd", "adam"), default="sgd")
    g.add_argument("--k-neighbors", type=int, default=5)
    _classifier_args(p)


def _classifier_args(p):
    g = p.add_argument_group("classifiers")
    g.add_argument("--classifiers", default=",".join(CLASSIFIERS))
    g.add_argument("--rf-trees", type=int, default=100)
    g.add_argument("--gbt-trees", type=int, default=100)
    g.add_argument("--gbt-lr", type=float, default=0.1)
    g.add_argument("--gbt-depth", type=int, default=6)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentforest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("augment", help="one run: synthetic CSV + report")
    _data_args(p)
    p.add_argument("--ratio", type=float, default=100.0, help="augmentation percent")
    _run_args(p)

    p = sub.add_parser("sweep", help="ratio sweep sharing one split")
    _data_args(p)
    p.add_argument("--ratios", type=_ratios, default=list(DEFAULT_RATIOS))
    p.add_argument("--include-baseline", action="store_true", help="add ratio 0")
    _run_args(p)

    p = sub.add_parser("ablate", help="attentionforest one-factor ablation grid")
    _data_args(p)
    p.add_argument("--ratio", type=float, default=100.0)
    _run_args(p, with_method=False)

    p = sub.add_parser("evaluate", help="metrics for given real/synthetic CSVs")
    p.add_argument("--real", required=True, help="real rows CSV (the reference set)")
    p.add_argument("--synthetic", required=True, help="synthetic rows CSV")
    p.add_argument("--test", help="held-out CSV; enables classifier utility metrics")
    p.add_argument("--schema", help="schema config file")
    p.add_argument("--target", help="target column (when no schema config is given)")
    p.add_argument("--label", type=int, help="compare only real rows with this label "
                   "(default: the minority label of the real file)")
    p.add_argument("--metric-space", choices=("raw", "latent"), default="raw")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _classifier_args(p)
    return parser


def _schema(args):
    if args.schema:
        return load_schema_config(args.schema)
    if not args.target:
        raise UsageError("either --schema or --target is required")
    return SchemaConfig(target=args.target)


def _classifier_cfgs(args):
    names = tuple(c.strip() for c in args.classifiers.split(",") if c.strip())
    forest = ForestParams(n_estimators=args.rf_trees)
    gbt = GbtClassifierParams(n_estimators=args.gbt_trees, learning_rate=args.gbt_lr,
                              max_depth=args.gbt_depth)
    return names, forest, gbt


def config_from_args(args, method: str | None = None, ratio: float = 100.0) -> RunConfig:
    names, forest, gbt = _classifier_cfgs(args)
    flow = FlowConfig(n_t=args.n_t, duplicate_K=args.duplicate_k, alpha_min=args.alpha_min,
                      n_estimators=args.flow_trees, learning_rate=args.flow_lr,
                      max_depth=args.flow_depth, min_child_weight=args.flow_min_child_weight,
                      batch_size=args.flow_batch_size, n_jobs=args.n_jobs,
                      vp_sampler=args.vp_sampler)
    ae = TrainConfig(epochs=args.ae_epochs, batch_size=args.ae_batch_size,
                     learning_rate=args.ae_lr, seed=args.seed)
    attn = AttnConfig(embed_dim=args.embed_dim, nhead=args.nhead, num_layers=args.num_layers,
                      dim_ff=args.dim_ff, latent_dim_factor=args.latent_dim_factor,
                      epochs=args.attn_epochs, batch_size=args.attn_batch_size,
                      learning_rate=args.attn_lr, optimizer=args.attn_optimizer, seed=args.seed)
    return RunConfig(method=method or args.method, augmentation_ratio=ratio, seed=args.seed,
                     train_fraction=args.train_fraction, flow=flow, flow_mode=args.flow_mode,
                     variance_target=args.variance_target, autoencoder=ae,
                     ae_latent_dim=args.latent_dim, attention=attn, k_neighbors=args.k_neighbors,
                     classifiers=names, forest=forest, gbt=gbt)


def cmd_augment(args) -> dict:
    d = load_csv(args.data, _schema(args))
    cfg = config_from_args(args, ratio=args.ratio)
    res = run(d, cfg)
    paths = emit_report([res], args.out, "augment", dataset=d)
    return {"report": str(paths["report"]), "n_synthetic": res.n_synthetic,
            "recall": {k: v["recall"] for k, v in res.report.classifiers.items()}}


def cmd_sweep(args) -> dict:
    d = load_csv(args.data, _schema(args))
    cfg = config_from_args(args)
    sw = sweep_ratios(d, cfg, args.ratios, args.include_baseline)
    conf = cfg.to_dict()
    conf["ratios"] = sw.ratios
    paths = emit_report(sw.results, args.out, "sweep", dataset=d, config=conf,
                        sweep_rows=sw.table())
    return {"report": str(paths["report"]), "sweep": str(paths["sweep"]),
            "ratios": sw.ratios}


ABLATION_COLUMNS = ("name", "component", "value", "recall")


def cmd_ablate(args) -> dict:
    d = load_csv(args.data, _schema(args))
    cfg = config_from_args(args, method="attentionforest", ratio=args.ratio)
    ab = run_ablation(d, cfg)
    summary = ab.summary()
    results = [r["result"] for r in ab.runs]
    paths = emit_report(results, args.out, "ablate", dataset=d, config=cfg.to_dict(),
                        extra={"ablation": summary},
                        tables={"ablation": (summary["runs"], ABLATION_COLUMNS)})
    return {"report": str(paths["report"]), "runs": len(ab.runs),
            "best_component": ab.best_component, "improvement_pct": ab.improvement_pct}


def cmd_evaluate(args) -> dict:
    schema_cfg = _schema(args)
    real = load_csv(args.real, schema_cfg)
    synth = load_csv(args.synthetic, real.schema, require_both_labels=False)
    label = minority_label(real.y) if args.label is None else args.label
    reference = real.X[real.y == label]
    sim = similarity_metrics(reference, synth.X[synth.y == label])
    scores = {}
    if args.test:
        test = load_csv(args.test, real.schema)
        names, forest, gbt = _classifier_cfgs(args)
        X = np.vstack([real.X, synth.X])
        y = np.concatenate([real.y, synth.y])
        for name in names:
            if name == "random_forest":
                clf = fit_random_forest(X, y, replace(forest, seed=args.seed))
            elif name == "gbt_classifier":
                clf = fit_gbt_classifier(X, y, replace(gbt, seed=args.seed))
            else:
                raise UsageError(f"unknown classifier {name!r}")
            scores[name] = classification_metrics(test.y, clf.predict(test.X), label)
    rep = MetricsReport(scores, sim["wd"], sim["dcr_mean"], sim["dcr_median"], sim["nndr_mean"],
                        args.metric_space)
    config = {"real": args.real, "synthetic": args.synthetic, "test": args.test,
              "label": label, "seed": args.seed, "metric_space": args.metric_space}
    report = build_report("evaluate", [], real, config, {"evaluation": rep.to_dict()})
    validate_report(report)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "report.json", report)
    return {"report": str(out / "report.json"), **rep.to_dict()}


COMMANDS = {"augment": cmd_augment, "sweep": cmd_sweep, "ablate": cmd_ablate,
            "evaluate": cmd_evaluate}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except Exception as exc:  # reported as a machine-readable error object
        logger.debug("command failed", exc_info=True)
        return _fail(type(exc).__name__, str(exc), 1)
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
