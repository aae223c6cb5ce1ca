"""Command-line entry point.

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataio
from .backend import BackendConfig, HTTPBackend, ReplayBackend
from .classification import ClassificationQuery, classify_entity, classify_progressive, deepest
from .core import AnnotatedSentence, TypeList, load_taxonomy, validate_dataset
from .dyncat import DynCatConfig, dump_records, load_synonyms, run_dynamic_categorization
from .errors import CascadeError
from .evaluation import aggregate_report, extraction_scores, group_scores
from .extraction import extract_rounds, fuse_results
from .markup import reembed_each
from .metrics import label_key, metric_report
from .pipeline import PipelineConfig, run_ner_batch

logger = logging.getLogger("cascadener")

CONFIG_KEYS = {
    "seed", "rounds", "mode", "workers", "timeout", "retries", "max_in_flight",
    *(f"{role}.{key}" for role in ("extractor", "classifier", "embedding")
      for key in ("base_url", "model", "api_key_env")),
}


class UsageError(Exception):
    pass


def read_config(path: str | None) -> dict[str, str]:
    """``key = value`` lines, ``#`` comments. Unknown keys are usage errors."""
    if not path:
        return {}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config entry {line!r}")
        out[key] = value.strip()
    return out


def _setting(args, cfg, name, default, cast=str):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in cfg:
        return cast(cfg[name])
    return default


def make_backend(args, cfg: dict, role: str):
    """HTTP client from config, optionally wrapped in record/playback."""
    http = None
    base_url = cfg.get(f"{role}.base_url")
    if base_url:
        http = HTTPBackend(BackendConfig(
            base_url=base_url,
            model=cfg.get(f"{role}.model", ""),
            api_key_env=cfg.get(f"{role}.api_key_env", ""),
            timeout=float(cfg.get("timeout", 60)),
            retries=int(cfg.get("retries", 2)),
            max_in_flight=int(cfg.get("max_in_flight", 4)),
            embedding_model=cfg.get("embedding.model", "") if role == "embedding" else "",
        ))
    if args.replay:
        return ReplayBackend(args.replay, inner=http if args.record else None)
    return http


def require_backend(args, cfg, role):
    backend = make_backend(args, cfg, role)
    if backend is None:
        raise CascadeError(f"no {role} backend: set {role}.base_url in --config or pass --replay")
    return backend


BUNDLED_TAXONOMY = ("dynamicner", "dynamicner.tax")


def _taxonomy(value):
    """A taxonomy file path; the bundled one by name unless such a file exists here."""
    if value is None:
        return None
    if value in BUNDLED_TAXONOMY and not Path(value).exists():
        return load_taxonomy()
    return load_taxonomy(value)


def _type_list(value, mode="supervised"):
    if not value:
        return None
    return TypeList(tuple(n.strip() for n in value.split(",") if n.strip()),
                    allow_unknown=mode == "zero_shot")


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


# --- subcommands ------------------------------------------------------------------


def cmd_ner(args, cfg):
    ds = dataio.read_corpus(args.input)
    pcfg = PipelineConfig(
        rounds=_setting(args, cfg, "rounds", 3, int),
        seed=_setting(args, cfg, "seed", 0, int),
        mode=_setting(args, cfg, "mode", "supervised"),
        taxonomy=_taxonomy(args.taxonomy),
        workers=_setting(args, cfg, "workers", 1, int),
        fail_fast=args.fail_fast,
    )
    pcfg.type_list = _type_list(args.types, pcfg.mode)
    ext = require_backend(args, cfg, "extractor")
    cls = require_backend(args, cfg, "classifier")
    preds, manifest = run_ner_batch(ds, ext, cls, pcfg)
    dataio.write_corpus(preds, args.output)
    manifest_path = args.manifest or f"{args.output}.manifest.json"
    _write_json(manifest.to_dict(), manifest_path)
    print(f"{len(preds)}/{len(ds)} sentences annotated, {len(manifest.errors)} errors")
    return 0


def cmd_extract(args, cfg):
    ds = dataio.read_corpus(args.input)
    ext = require_backend(args, cfg, "extractor")
    rounds_n = _setting(args, cfg, "rounds", 3, int)
    seed = _setting(args, cfg, "seed", 0, int)
    rows = []
    for rec in ds:
        rounds = extract_rounds(ext, rec.sentence, rounds_n, seed=seed)
        spans = sorted(fuse_results(rounds), key=lambda s: (s.start, s.end))
        rows.append({
            "id": rec.id,
            "text": rec.sentence.text,
            "spans": [{"start": s.start, "end": s.end, "surface": s.surface} for s in spans],
            "rounds": [{"index": r.index, "status": r.parse_status, "raw": r.raw_generation}
                       for r in rounds],
        })
    dataio.write_jsonl(rows, args.output)
    if args.gold:
        pred = [[(s["start"], s["end"]) for s in row["spans"]] for row in rows]
        scores = extraction_scores(pred, [rec.spans for rec in ds])
        print(f"span P={scores.precision:.4f} R={scores.recall:.4f} F1={scores.f1:.4f}")
    return 0


def cmd_classify(args, cfg):
    ds = dataio.read_corpus(args.input)
    cls = require_backend(args, cfg, "classifier")
    mode = _setting(args, cfg, "mode", "supervised")
    seed = _setting(args, cfg, "seed", 0, int)
    tax = _taxonomy(args.taxonomy)
    flat = _type_list(args.types, mode)
    out = []
    for rec in ds:
        entities = []
        for span, marked in zip(sorted(rec.spans), reembed_each(rec.sentence, rec.spans)):
            if tax is not None:
                label = deepest(classify_progressive(cls, marked, tax, mode=mode, seed=seed))
            else:
                tl = flat or rec.type_list
                label = classify_entity(cls, ClassificationQuery(marked, tl, mode), seed=seed)
            entities.append((span, label))
        out.append(AnnotatedSentence(rec.sentence, tuple(entities), rec.type_list))
    dataio.write_corpus(out, args.output)
    return 0


def cmd_eval(args, cfg):
    pred = dataio.read_corpus(args.pred)
    gold = dataio.read_corpus(args.gold)
    tax = _taxonomy(args.taxonomy)
    granularities = args.granularity or ["label"]
    groups = []
    for gran in granularities:
        if gran != "label" and tax is None:
            raise UsageError("--granularity other than 'label' needs --taxonomy")
        project = None if gran == "label" else label_key(tax, gran)
        groups += group_scores(pred, gold, granularity=gran, policy=args.policy, project=project)
    report = aggregate_report(groups)
    if args.extraction:
        ext = extraction_scores(pred, gold)
        report.rows.append({"language": "all", "granularity": "spans", "average": "micro",
                            "support": ext.support, **ext.as_row()})
    sys.stdout.write(report.to_text())
    if args.output:
        _write_json(report.to_dict(), args.output)
    if args.table:
        Path(args.table).write_text(report.to_text(), encoding="utf-8")
    if args.figure:
        # matplotlib is only imported when a figure is requested
        from .plotting import plot_eval_report
        plot_eval_report(report, args.figure)
    return 0


def _metrics_for(path, args, cfg, emb, tax):
    ds = dataio.read_corpus(path)
    return metric_report(ds, emb, tax=tax, granularity=args.granularity,
                         seed=_setting(args, cfg, "seed", 0, int))


def cmd_metrics(args, cfg):
    tax = _taxonomy(args.taxonomy)
    if args.granularity and tax is None:
        raise UsageError("--granularity needs --taxonomy")
    emb = None if args.no_cohesion else make_backend(args, cfg, "embedding")
    if emb is None and not args.no_cohesion:
        logger.warning("no embedding backend configured; cohesion is skipped")
    report = _metrics_for(args.input, args, cfg, emb, tax)
    payload = report.to_dict()
    print(json.dumps({k: payload[k] for k in
                      ("normalized_entropy", "gini", "variation_coefficient", "flags")},
                     indent=2, ensure_ascii=False))
    if args.output:
        _write_json(payload, args.output)
    if args.table:
        with open(args.table, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("category\tcount\tcohesion\n")
            for row in report.table_rows():
                coh = "" if row["cohesion"] is None else f"{row['cohesion']:.6f}"
                fh.write(f"{row['category']}\t{row['count']}\t{coh}\n")
    if args.figure:
        from .plotting import plot_metric_comparison, plot_metric_report
        if args.compare:
            reports = {"input": report}
            for item in args.compare:
                name, _, path = item.partition("=")
                reports[name] = _metrics_for(path, args, cfg, emb, tax)
            plot_metric_comparison(reports, args.figure)
        else:
            plot_metric_report(report, args.figure)
    return 0


def cmd_dyncat(args, cfg):
    ds = dataio.read_corpus(args.input)
    tax = _taxonomy(args.taxonomy or "dynamicner")
    synonyms = load_synonyms(args.synonyms) if args.synonyms else load_synonyms()
    dcfg = DynCatConfig(seed=_setting(args, cfg, "seed", 0, int), synonym_table=synonyms)
    emb = make_backend(args, cfg, "embedding") if args.cohesion else None
    out, log = run_dynamic_categorization(ds, tax, dcfg, emb_backend=emb)
    Path(args.output).write_text(dump_records(out), encoding="utf-8", newline="\n")
    log.write(args.audit or f"{args.output}.audit.jsonl")
    conv = log.convergence()["targets"]
    for metric, t in conv.items():
        final = "n/a" if t["final"] is None else f"{t['final']:.4f}"
        print(f"{metric:8s} final={final} threshold={t['threshold']} "
              f"met={t['met']} attainable={t['attainable']}")
    if args.figure:
        from .plotting import plot_convergence
        plot_convergence(log.metrics(), args.figure, dcfg.thresholds)
    return 0


def cmd_sample(args, cfg):
    ds = dataio.read_corpus(args.input)
    res = dataio.stratified_sample(ds, args.size, _setting(args, cfg, "seed", 0, int))
    dataio.write_corpus(res.records, args.output)
    _write_json(res.manifest(), args.manifest or f"{args.output}.manifest.json")
    print(f"{len(res.records)} sentences sampled")
    return 0


def _ratios(text):
    try:
        ratios = [float(x) for x in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {text!r}; expected e.g. 1:1:3") from None
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise argparse.ArgumentTypeError("need three non-negative ratios, e.g. 1:1:3")
    return ratios


def cmd_split(args, cfg):
    ds = dataio.read_corpus(args.input)
    parts = dataio.split_dataset(ds, args.ratios, _setting(args, cfg, "seed", 0, int))
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sizes = {}
    for name, part in zip(("train", "dev", "test"), parts):
        dataio.write_corpus(part, outdir / f"{name}.jsonl")
        sizes[name] = len(part)
    _write_json({"ratios": args.ratios, "sizes": sizes}, outdir / "split.manifest.json")
    print(" ".join(f"{k}={v}" for k, v in sizes.items()))
    return 0


def cmd_decontaminate(args, cfg):
    ds = dataio.read_corpus(args.input)
    ref = dataio.read_corpus(args.reference)
    emb = require_backend(args, cfg, "embedding")
    kept, excluded = dataio.decontaminate(ds, ref, emb, args.threshold)
    dataio.write_corpus(kept, args.output)
    if args.excluded:
        dataio.write_corpus(excluded, args.excluded)
    print(f"kept {len(kept)}, excluded {len(excluded)}")
    return 0


def cmd_convert(args, cfg):
    src = args.source or ("conll" if args.input.endswith((".conll", ".bio", ".txt")) else "jsonl")
    dst = args.target or ("jsonl" if src == "conll" else "conll")
    ds = dataio.read_conll(args.input, args.language, args.lenient) if src == "conll" \
        else dataio.read_corpus(args.input)
    if dst == "conll":
        dataio.write_conll(ds, args.output)
    else:
        dataio.write_corpus(ds, args.output)
    return 0


def cmd_validate(args, cfg):
    ds = dataio.read_corpus(args.input)
    report = validate_dataset(ds)
    if args.taxonomy:
        tax = _taxonomy(args.taxonomy)
        missing = sorted({label.name for rec in ds for label in rec.labels
                          if not label.is_unknown and label not in tax})
        for name in missing:
            print(f"label not in taxonomy: {name}")
        if missing:
            return 1
    for v in report.violations:
        print(f"{v.record_id}\t{v.kind}\t{v.detail}")
    print(f"{len(ds)} records, {len(report)} violations")
    return 0 if report else 1


# --- parser -----------------------------------------------------------------------


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--replay", help="replay file for record/playback of backend calls")
    p.add_argument("--record", action="store_true",
                   help="forward replay misses to the configured endpoint and record them")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


TAXONOMY_HELP = "taxonomy file; 'dynamicner' or 'dynamicner.tax' selects the bundled one"
MODES = ("supervised", "zero_shot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascadener",
                                     description="Extract-then-classify NER and dataset tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ner", help="run the full cascade over a corpus")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--output", required=True, help="predictions JSONL")
    p.add_argument("--manifest", help="run manifest path (default OUTPUT.manifest.json)")
    p.add_argument("--rounds", type=int, default=None, help="extraction rounds (default 3)")
    p.add_argument("--taxonomy", help=TAXONOMY_HELP + " (progressive classification)")
    p.add_argument("--types", help="comma-separated flat type list (default: per record)")
    p.add_argument("--mode", choices=MODES, default=None, help="classifier mode")
    p.add_argument("--workers", type=int, default=None, help="parallel sentences (default 1)")
    p.add_argument("--fail-fast", action="store_true", help="abort on the first sentence error")
    p.set_defaults(func=cmd_ner)

    p = sub.add_parser("extract", help="extraction and fusion only")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--output", required=True, help="spans JSONL")
    p.add_argument("--rounds", type=int, default=None, help="extraction rounds (default 3)")
    p.add_argument("--gold", action="store_true", help="print span F1 against input entities")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("classify", help="label the input entities")
    p.add_argument("--input", required=True, help="corpus JSONL whose entities get labelled")
    p.add_argument("--output", required=True, help="labelled corpus JSONL")
    p.add_argument("--taxonomy", help=TAXONOMY_HELP)
    p.add_argument("--types", help="comma-separated flat type list (default: per record)")
    p.add_argument("--mode", choices=MODES, default=None, help="classifier mode")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--pred", required=True, help="predictions JSONL")
    p.add_argument("--gold", required=True, help="gold JSONL")
    p.add_argument("--policy", choices=("drop", "fp"), default="drop",
                   help="how Unknown predictions count (default drop)")
    p.add_argument("--granularity", action="append",
                   choices=("label", "coarse", "medium", "fine"),
                   help="scoring level, repeatable (default label)")
    p.add_argument("--taxonomy", help=TAXONOMY_HELP)
    p.add_argument("--extraction", action="store_true", help="add a boundary-only row")
    p.add_argument("--output", help="report JSON")
    p.add_argument("--table", help="plain-text table")
    p.add_argument("--figure", help="PNG/PDF figure")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="categorization quality metrics")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--taxonomy", help=TAXONOMY_HELP)
    p.add_argument("--granularity", choices=("coarse", "medium", "fine"),
                   help="count categories at this level (needs --taxonomy)")
    p.add_argument("--no-cohesion", action="store_true", help="skip embedding calls")
    p.add_argument("--output", help="report JSON")
    p.add_argument("--table", help="per-category TSV")
    p.add_argument("--figure", help="figure path")
    p.add_argument("--compare", action="append", metavar="NAME=PATH",
                   help="extra corpus version for the comparison figure")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("dyncat", help="dynamic categorization")
    dsub = p.add_subparsers(dest="dyncat_command", required=True)
    p = dsub.add_parser("run", help="run the four re-categorization rounds")
    p.add_argument("--input", required=True, help="corpus JSONL with taxonomy labels")
    p.add_argument("--output", required=True, help="re-categorized corpus JSONL")
    p.add_argument("--audit", help="audit log JSONL (default OUTPUT.audit.jsonl)")
    p.add_argument("--taxonomy", help=TAXONOMY_HELP + " (default: bundled)")
    p.add_argument("--synonyms", help="synonym table (default: bundled starter table)")
    p.add_argument("--cohesion", action="store_true", help="use embeddings for cohesion")
    p.add_argument("--figure", help="convergence figure")
    p.set_defaults(func=cmd_dyncat)

    p = sub.add_parser("sample", help="stratified label sampling")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--size", type=int, required=True, help="total sample size S")
    p.add_argument("--output", required=True, help="sampled corpus JSONL")
    p.add_argument("--manifest", help="sample manifest (default OUTPUT.manifest.json)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("split", help="seeded train/dev/test split")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--ratios", type=_ratios, default=[1.0, 1.0, 3.0],
                   help="train:dev:test ratios (default 1:1:3)")
    p.add_argument("--outdir", required=True, help="directory for train/dev/test.jsonl")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("decontaminate", help="drop sentences similar to a reference corpus")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--reference", required=True, help="reference corpus JSONL")
    p.add_argument("--output", required=True, help="kept sentences")
    p.add_argument("--excluded", help="excluded sentences")
    p.add_argument("--threshold", type=float, default=0.8,
                   help="exclude when cosine similarity exceeds this (default 0.8)")
    p.set_defaults(func=cmd_decontaminate)

    p = sub.add_parser("convert", help="JSONL <-> CoNLL BIO")
    p.add_argument("--input", required=True, help="source file")
    p.add_argument("--output", required=True, help="target file")
    p.add_argument("--from", dest="source", choices=("jsonl", "conll"),
                   help="source format (default: from the file extension)")
    p.add_argument("--to", dest="target", choices=("jsonl", "conll"),
                   help="target format (default: the other one)")
    p.add_argument("--language", default="en", help="language code for CoNLL input")
    p.add_argument("--lenient", action="store_true", help="promote stray I- tags to B-")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("validate", help="check corpus invariants")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--taxonomy", help=TAXONOMY_HELP + "; also check labels against it")
    p.set_defaults(func=cmd_validate)

    for name, action in sub.choices.items():
        _common(dsub.choices["run"] if name == "dyncat" else action)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = read_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CascadeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
