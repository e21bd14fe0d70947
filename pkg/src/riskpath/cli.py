"""Command-line entry points for the full workflow.

Every command reads and writes one run directory so the steps chain:
``synth`` emits the dataset, ``prepare``/``train`` fit statistics and
models, ``evaluate``/``tune`` report, the explain commands and ``cf`` write
per-learner artifacts, ``feedback`` turns a chosen pathway into prompts and
text, ``serve`` exposes the HTTP API. A manifest records every artifact
with its content hash so runs stay reproducible from config plus seed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .boosting import train_baseline
from .config import load_config
from .counterfactual import NoFeasiblePathway
from .dataset import impute_and_encode, load_dataset, write_dataset
from .feedback import LlmConfig
from .metrics import cross_validate
from .pipeline import Pipeline
from .synth import generate_synthetic
from .tuning import random_search_cv


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _record_artifacts(run_dir: Path, command: str, seed: int, paths: list[Path]) -> None:
    manifest_path = run_dir / "manifest.json"
    manifest = {}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
    manifest[command] = {
        "seed": seed,
        "artifacts": {
            str(p.relative_to(run_dir)): _sha256(p) for p in sorted(paths)
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _load_pipeline(args) -> Pipeline:
    return Pipeline.load(Path(args.out), load_config(args.config))


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    gen = cfg.generator
    if args.learners:
        gen = replace(gen, n_learners=args.learners)
    dataset = generate_synthetic(gen, args.seed)
    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, run_dir / "dataset.csv")
    dataset.schema.to_manifest(run_dir / "schema.json")
    _record_artifacts(run_dir, "synth", args.seed,
                      [run_dir / "dataset.csv", run_dir / "schema.json"])
    print(f"wrote {len(dataset)} rows for {len(dataset.learner_ids())} learners")
    return 0


def cmd_prepare(args) -> int:
    cfg = load_config(args.config)
    run_dir = Path(args.out)
    pipeline = Pipeline.build(
        load_dataset(run_dir / "dataset.csv", run_dir / "schema.json"), cfg, args.seed
    )
    pipeline.stats.save(run_dir / "stats.csv")
    write_dataset(pipeline.engineered, run_dir / "engineered.csv")
    _record_artifacts(run_dir, "prepare", args.seed,
                      [run_dir / "stats.csv", run_dir / "engineered.csv"])
    print(f"fitted {len(pipeline.stats)} cohort statistics")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    run_dir = Path(args.out)
    pipeline = Pipeline.build(
        load_dataset(run_dir / "dataset.csv", run_dir / "schema.json"), cfg, args.seed
    )
    pipeline.save(run_dir)
    _record_artifacts(run_dir, "train", args.seed, [
        run_dir / "model.json", run_dir / "prescriptive_model.json",
        run_dir / "stats.csv", run_dir / "pipeline.json",
    ])
    print(f"trained models ({pipeline.model_version})")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    run_dir = Path(args.out)
    raw = load_dataset(run_dir / "dataset.csv", run_dir / "schema.json")
    pipeline = Pipeline.build(raw, cfg, args.seed)
    enc = impute_and_encode(pipeline.engineered, raw.schema.predictive_features())
    k = args.folds

    rows = []

    def run_model(name, factory):
        agg, _ = cross_validate(factory, enc.X, enc.y, enc.groups, k, args.seed)
        rows.append({"model": name, **agg.as_dict()})

    from .boosting import train_gbm  # local to keep module import light

    run_model("gradient_boosting",
              lambda X, y, s: train_gbm(X, y, cfg.hyperparams, s))
    run_model("baseline_stratified",
              lambda X, y, s: train_baseline("stratified", y, s))
    run_model("baseline_mode",
              lambda X, y, s: train_baseline("mode", y, s))

    report_path = _write_json(run_dir / "evaluation.json",
                              {"folds": k, "rows": rows})
    lines = [f"{'model':<22}{'F1':>12}{'Acc':>12}{'AUC':>12}{'Rec':>12}{'Prec':>12}"]
    for r in rows:
        auc = "n/a" if r["auc"] is None else f"{r['auc']:.1f}±{r['auc_std']:.1f}"
        lines.append(
            f"{r['model']:<22}"
            f"{r['f1']:>7.1f}±{r['f1_std']:<4.1f}"
            f"{r['accuracy']:>7.1f}±{r['accuracy_std']:<4.1f}"
            f"{auc:>12}"
            f"{r['recall']:>7.1f}±{r['recall_std']:<4.1f}"
            f"{r['precision']:>7.1f}±{r['precision_std']:<4.1f}"
        )
    text = "\n".join(lines)
    (run_dir / "evaluation.txt").write_text(text + "\n")
    _record_artifacts(run_dir, "evaluate", args.seed,
                      [report_path, run_dir / "evaluation.txt"])
    print(text)
    return 0


def cmd_tune(args) -> int:
    cfg = load_config(args.config)
    run_dir = Path(args.out)
    raw = load_dataset(run_dir / "dataset.csv", run_dir / "schema.json")
    pipeline = Pipeline.build(raw, cfg, args.seed)
    enc = impute_and_encode(pipeline.engineered, raw.schema.predictive_features())
    result = random_search_cv(
        enc.X, enc.y, enc.groups,
        n_iter=args.n_iter or cfg.tuning.n_iter,
        k_tune=cfg.tuning.k_tune,
        k_final=cfg.tuning.k_final,
        seed=args.seed,
    )
    doc = {
        "best": asdict(result.best),
        "metrics": result.metrics.as_dict(),
        "history": [
            {"hyperparams": asdict(hp), "mean_f1": f1} for hp, f1 in result.history
        ],
    }
    path = _write_json(run_dir / "tuning.json", doc)
    _record_artifacts(run_dir, "tune", args.seed, [path])
    print(f"best F1 {result.metrics.f1:.1f}±{result.metrics.f1_std:.1f} "
          f"with {asdict(result.best)}")
    return 0


def cmd_explain_global(args) -> int:
    pipeline = _load_pipeline(args)
    doc = pipeline.explain_global(seed=args.seed)
    path = _write_json(Path(args.out) / "global_importance.json", doc)
    _record_artifacts(Path(args.out), "explain-global", args.seed, [path])
    for row in doc["importance"][:10]:
        print(f"{row['feature']:<36}{row['mean_abs_phi']:.4f}")
    return 0


def cmd_explain_local(args) -> int:
    pipeline = _load_pipeline(args)
    doc = pipeline.explain_local(args.student)
    path = _write_json(
        Path(args.out) / "explanations" / f"{args.student}.json", doc
    )
    _record_artifacts(Path(args.out), "explain-local", args.seed, [path])
    print(f"completion probability {doc['completion_probability']:.3f}")
    for line in doc["anchor"]["predicates"]:
        print(f"  {line}")
    return 0


def cmd_cf(args) -> int:
    pipeline = _load_pipeline(args)
    constraints = pipeline.default_constraints(max_changed=args.max_changed)
    try:
        doc = pipeline.counterfactuals(
            args.student, k=args.k, constraints=constraints, seed=args.seed
        )
    except NoFeasiblePathway as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    path = _write_json(
        Path(args.out) / "counterfactuals" / f"{args.student}.json", doc
    )
    _record_artifacts(Path(args.out), "cf", args.seed, [path])
    table = doc["table"]
    widths = [max(len(str(r[i])) for r in [table["columns"]] + table["rows"])
              for i in range(len(table["columns"]))]
    for row in [table["columns"]] + table["rows"]:
        print("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))
    return 0


def cmd_feedback(args) -> int:
    pipeline = _load_pipeline(args)
    cf_path = Path(args.out) / "counterfactuals" / f"{args.student}.json"
    if not cf_path.exists():
        print(f"error: run `cf --student {args.student}` first", file=sys.stderr)
        return 2
    doc = json.loads(cf_path.read_text())
    pathways = doc["pathways"]
    if not 1 <= args.pf <= len(pathways):
        print(f"error: pathway {args.pf} not in 1..{len(pathways)}", file=sys.stderr)
        return 2
    pathway = pathways[args.pf - 1]
    raw_deltas = pipeline._raw_deltas_from_doc(pathway)
    llm = LlmConfig.from_env(mode=args.mode) if args.mode else LlmConfig.from_env()
    texts = pipeline.feedback_texts(args.student, raw_deltas, llm)
    out_doc = {"learner_id": args.student, "pf_index": args.pf, **texts}
    path = _write_json(
        Path(args.out) / "feedback" / f"{args.student}_pf{args.pf}.json", out_doc
    )
    _record_artifacts(Path(args.out), "feedback", args.seed, [path])
    print(texts["status_text"])
    print()
    print(texts["remedial_text"])
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_config(args.config)
    app = create_app(_load_pipeline(args), token=cfg.service.token or None)
    uvicorn.run(app, host=cfg.service.host, port=args.port or cfg.service.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskpath",
        description="Train, explain and prescribe over learner cohorts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default="run", help="run directory")

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    common(p)
    p.add_argument("--learners", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="fit cohort statistics and engineer features")
    common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the risk and actionability models")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="grouped cross-validated metrics report")
    common(p)
    p.add_argument("--folds", type=int, default=10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", help="random hyperparameter search")
    common(p)
    p.add_argument("--n-iter", type=int, default=None)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("explain-global", help="feature impact ranking")
    common(p)
    p.set_defaults(func=cmd_explain_global)

    p = sub.add_parser("explain-local", help="force plot and anchor for one learner")
    common(p)
    p.add_argument("--student", required=True)
    p.set_defaults(func=cmd_explain_local)

    p = sub.add_parser("cf", help="counterfactual pathways for one learner")
    common(p)
    p.add_argument("--student", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--max-changed", type=int, default=3)
    p.set_defaults(func=cmd_cf)

    p = sub.add_parser("feedback", help="draft feedback text from a pathway")
    common(p)
    p.add_argument("--student", required=True)
    p.add_argument("--pf", type=int, default=1)
    p.add_argument("--mode", choices=["offline", "live"], default=None)
    p.set_defaults(func=cmd_feedback)

    p = sub.add_parser("serve", help="start the advisor HTTP service")
    common(p)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    import warnings

    from .cohort import DegenerateCohortWarning

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = args.func(args)
        except Exception as exc:  # surface a clean message, nonzero exit
            print(f"error: {exc}", file=sys.stderr)
            code = 1
    degenerate = 0
    for w in caught:
        if issubclass(w.category, DegenerateCohortWarning):
            degenerate += 1
        else:
            print(warnings.formatwarning(w.message, w.category, w.filename,
                                         w.lineno), end="", file=sys.stderr)
    if degenerate:
        # one summary line instead of one warning per affected cell
        print(f"note: {degenerate} zero-spread cohort statistics; affected "
              "standard scores default to 0", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
