"""Command-line entry point: ``retrocorpus <subcommand> ...``.

Exit codes: 0 success, 1 data error, 2 configuration/usage error. Every
successful run writes ``<out>.manifest.json`` next to its main output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import __version__
from .corpus import Document, ParallelPair, format_timestamp, read_records, write_jsonl
from .errors import ConfigError, DataError
from .ingest import IngestSpec, IngestStats, ingest
from .metrics import EvalPair, bleu_corpus, exact_match_rate, rouge_l_corpus
from .pipeline import PipelineConfig, run_pipeline
from .reporting import assemble_eval_report, corpus_stats, dumps_report, render_funnel, stats_csv, stats_table
from .sft import PromptTemplate, export_corpus
from .tokenization import TokenizerError, TokenizerSpec, load_tokenizer
from .translate import BackendSpec, Direction, TranslationCache, Translator, variety_invariance_audit
from .variety import UndefinedVidError, VarietyClassifier, vid_score

logger = logging.getLogger("retrocorpus")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="retrocorpus", description="Parallel corpus construction, filtering and evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="load a source corpus into canonical JSONL")
    s.add_argument("--spec", required=True, help="YAML ingest spec")
    s.add_argument("--out", required=True)
    s.add_argument("--errors", help="JSONL file for malformed rows (default <out>.errors.jsonl)")

    s = sub.add_parser("translate", help="retro-translate documents into parallel pairs")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--backend", required=True, help="backend YAML file or 'mock-identity'")
    s.add_argument("--cache", help="cache directory")
    s.add_argument("--direction", default="pt-PT->en")
    s.add_argument("--dead-letter", help="default <out>.dead.jsonl")
    s.add_argument("--workers", type=int, help="concurrent requests (overrides the backend spec)")
    s.add_argument("--created-at", help="ISO timestamp stamped on pairs (default SOURCE_DATE_EPOCH or now)")

    s = sub.add_parser("filter", help="run the quality-filter funnel")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="YAML pipeline config (defaults when omitted)")
    s.add_argument("--report", help="funnel report JSON")
    s.add_argument("--verdicts", help="per-stage verdict log JSONL")
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("stats", help="per-domain token statistics")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tokenizer", default="whitespace")
    s.add_argument("--format", choices=("json", "table", "csv"), help="default: from --out suffix")

    s = sub.add_parser("export-sft", help="write system/user/assistant training records")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tokenizer", default="whitespace")
    s.add_argument("--max-tokens", type=int, default=1024)
    s.add_argument("--template", help="YAML prompt template")

    s = sub.add_parser("eval", help="score hypotheses against references")
    s.add_argument("--hyp", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--metrics", default="bleu,rouge-l,exact")
    s.add_argument("--model", help="variety model, required for the vid metric")
    s.add_argument("--system", default="system")
    s.add_argument("--benchmark", default="benchmark")
    s.add_argument("--smoothing", choices=("add-one", "none"), default="add-one")

    vid = sub.add_parser("vid", help="train the variety classifier or compute VID")
    vsub = vid.add_subparsers(dest="vid_command", required=True, parser_class=_Parser)
    s = vsub.add_parser("train")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--alpha", type=float, default=1.0)
    s = vsub.add_parser("score")
    s.add_argument("--hyp", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", help="result JSON (stdout when omitted)")

    s = sub.add_parser("audit", help="variety-invariance audit of two translated corpora")
    s.add_argument("--pairs-a", required=True)
    s.add_argument("--pairs-b", required=True)
    s.add_argument("--out", required=True)
    return p


# -- helpers -------------------------------------------------------------------

def _hash(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_manifest(out: str, command: str, config: Any, inputs: list[str], outputs: list[str],
                   started: datetime, summary: dict[str, Any]) -> None:
    manifest = {
        "command": command,
        "config_hash": _hash(config),
        "inputs": inputs,
        "outputs": outputs,
        "started_at": format_timestamp(started),
        "finished_at": format_timestamp(datetime.now(timezone.utc)),
        "tool_version": __version__,
        "summary": summary,
    }
    _atomic_write(f"{out}.manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _tokenizer(value: str):
    try:
        return load_tokenizer(TokenizerSpec.parse(value))
    except TokenizerError as exc:
        raise ConfigError(str(exc)) from None


def _read_texts(path: str) -> list[tuple[str, list[str]]]:
    """(id, texts) rows from JSONL with ``text``, ``references``, ``target_text`` or ``hypothesis``."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            for key in ("references", "text", "target_text", "hypothesis", "reference"):
                if key in obj:
                    val = obj[key]
                    texts = [str(v) for v in val] if isinstance(val, list) else [str(val)]
                    break
            else:
                raise DataError(f"{path}:{lineno}: no text field")
            rows.append((str(obj.get("id", lineno)), texts))
    return rows


def _aligned(hyp_path: str, ref_path: str) -> tuple[list[str], list[EvalPair]]:
    hyps = _read_texts(hyp_path)
    refs = _read_texts(ref_path)
    if len(hyps) != len(refs):
        raise DataError(f"hyp has {len(hyps)} rows, ref has {len(refs)}")
    pairs = []
    for (hid, h), (rid, r) in zip(hyps, refs):
        if hid != rid:
            raise DataError(f"hyp/ref misaligned at id {hid!r} vs {rid!r}")
        pairs.append(EvalPair(h[0], tuple(r)))
    return [h[0] for h in hyps], pairs


def _created_at(value: str | None) -> datetime | None:
    if value:
        return datetime.fromisoformat(value.replace("Z", "+00:00")).astimezone(timezone.utc)
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    return None


# -- subcommands --------------------------------------------------------------

def cmd_ingest(args, started):
    spec = IngestSpec.from_file(args.spec)
    if not Path(spec.path).is_file():
        raise ConfigError(f"input corpus not found: {spec.path}")
    stats = IngestStats()
    n = write_jsonl(args.out, ingest(spec, stats))
    errors_path = args.errors or f"{args.out}.errors.jsonl"
    write_jsonl(errors_path, [e.to_dict() for e in stats.errors])
    logger.info("ingest: %d rows, %d kept, %d dropped by label, %d errors",
                stats.rows, n, stats.dropped_by_label, len(stats.errors))
    config = {
        "format": spec.format, "fields": spec.fields, "default_domain": spec.default_domain.value,
        "source": spec.source_name, "variety_aliases": spec.variety_aliases,
        "accept": None if spec.accept is None else sorted(v.value for v in spec.accept),
        "default_variety": spec.default_variety.value,
    }
    write_manifest(args.out, "ingest", config,
                   [spec.path], [args.out, errors_path], started, stats.to_dict())
    return 0


def cmd_translate(args, started):
    spec = BackendSpec.load(args.backend)
    if args.workers:
        spec = replace(spec, concurrency=args.workers)
    docs = list(read_records(args.inp))
    for d in docs:
        if not isinstance(d, Document):
            raise DataError(f"translate expects documents, got a pair ({d.id})")
    translator = Translator(spec, TranslationCache(args.cache), Direction.parse(args.direction),
                            created_at=_created_at(args.created_at))
    try:
        write_jsonl(args.out, translator.translate_batch(docs))
    finally:
        translator.backend.close()
    dead_path = args.dead_letter or f"{args.out}.dead.jsonl"
    write_jsonl(dead_path, [d.to_dict() for d in translator.dead_letters])
    summary = translator.stats.to_dict()
    logger.info("translate: %s", summary)
    config = {k: v for k, v in spec.__dict__.items() if k != "concurrency"}
    config["direction"] = args.direction
    write_manifest(args.out, "translate", config, [args.inp], [args.out, dead_path], started, summary)
    return 0


def cmd_filter(args, started):
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    result = run_pipeline(read_records(args.inp), config, workers=args.workers)
    write_jsonl(args.out, result.kept)
    outputs = [args.out]
    if args.report:
        _atomic_write(args.report, render_funnel(result.report, "json"))
        outputs.append(args.report)
    if args.verdicts:
        write_jsonl(args.verdicts, [v.to_dict() for v in result.verdicts])
        outputs.append(args.verdicts)
    sys.stderr.write(render_funnel(result.report))
    write_manifest(args.out, "filter", config.config_hash(), [args.inp], outputs, started,
                   result.report.to_dict())
    return 0


def cmd_stats(args, started):
    tok = _tokenizer(args.tokenizer)
    rows = corpus_stats(read_records(args.inp), tok)
    fmt = args.format or {".csv": "csv", ".txt": "table"}.get(Path(args.out).suffix, "json")
    if fmt == "json":
        text = dumps_report({"tokenizer": args.tokenizer, "rows": [r.to_dict() for r in rows]})
    elif fmt == "csv":
        text = stats_csv(rows)
    else:
        text = stats_table(rows)
    _atomic_write(args.out, text)
    write_manifest(args.out, "stats", {"tokenizer": args.tokenizer, "format": fmt}, [args.inp],
                   [args.out], started, {"rows": len(rows), "docs": rows[-1].n_docs})
    return 0


def cmd_export(args, started):
    tok = _tokenizer(args.tokenizer)
    template = PromptTemplate()
    if args.template:
        import yaml
        try:
            with open(args.template, encoding="utf-8") as fh:
                template = PromptTemplate.from_dict(yaml.safe_load(fh) or {})
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot load template {args.template}: {exc}") from None
    pairs = []
    for rec in read_records(args.inp):
        if not isinstance(rec, ParallelPair):
            raise DataError(f"export-sft expects parallel pairs, got a document ({rec.id})")
        pairs.append(rec)
    result = export_corpus(pairs, args.out, template, tok, args.max_tokens)
    skipped_path = f"{args.out}.skipped.jsonl"
    write_jsonl(skipped_path, result.skipped)
    config = {"template": template.__dict__, "tokenizer": args.tokenizer, "max_tokens": args.max_tokens}
    write_manifest(args.out, "export-sft", config, [args.inp], [args.out, skipped_path], started,
                   {"written": result.written, "skipped": len(result.skipped)})
    return 0


def cmd_eval(args, started):
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(metrics) - {"bleu", "rouge-l", "exact", "vid"}
    if unknown:
        raise ConfigError(f"unknown metric(s) {sorted(unknown)}")
    hyps, pairs = _aligned(args.hyp, args.ref)
    entries = []
    for m in metrics:
        if m == "bleu":
            result = bleu_corpus(pairs, smoothing=args.smoothing)
        elif m == "rouge-l":
            result = rouge_l_corpus(pairs)
        elif m == "exact":
            result = ("exact-match", exact_match_rate(pairs))
        else:
            if not args.model:
                raise ConfigError("the vid metric needs --model")
            model = VarietyClassifier.load(args.model)
            try:
                result = vid_score(hyps, [p.references[0] for p in pairs], model)
            except UndefinedVidError as exc:
                result = exc.result
        entries.append((args.system, args.benchmark, result))
    report = assemble_eval_report(entries)
    _atomic_write(args.out, dumps_report(report))
    write_manifest(args.out, "eval", {"metrics": metrics, "smoothing": args.smoothing}, [args.hyp, args.ref],
                   [args.out], started, {"n": len(pairs)})
    return 0


def cmd_vid(args, started):
    if args.vid_command == "train":
        docs = [d for d in read_records(args.inp) if isinstance(d, Document)]
        model = VarietyClassifier(alpha=args.alpha).fit([d.text for d in docs], [d.variety for d in docs])
        model.save(args.model, {"n_docs": len(docs), "tool_version": __version__})
        write_manifest(args.model, "vid train", {"alpha": args.alpha}, [args.inp], [args.model], started,
                       {"n_docs": len(docs), "n_features": model.n_features_in_})
        return 0
    model = VarietyClassifier.load(args.model)
    hyps, pairs = _aligned(args.hyp, args.ref)
    try:
        result = vid_score(hyps, [p.references[0] for p in pairs], model)
        code = 0
    except UndefinedVidError as exc:
        logger.error("%s", exc)
        result, code = exc.result, 1
    text = json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        _atomic_write(args.out, text)
        write_manifest(args.out, "vid score", {}, [args.hyp, args.ref, args.model], [args.out], started,
                       result.to_dict())
    else:
        sys.stdout.write(text)
    return code


def cmd_audit(args, started):
    a = [r for r in read_records(args.pairs_a)]
    b = [r for r in read_records(args.pairs_b)]
    for rec in a + b:
        if not isinstance(rec, ParallelPair):
            raise DataError(f"audit expects parallel pairs, got a document ({rec.id})")
    report = variety_invariance_audit(a, b)
    _atomic_write(args.out, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    write_manifest(args.out, "audit", {}, [args.pairs_a, args.pairs_b], [args.out], started, report.to_dict())
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "translate": cmd_translate,
    "filter": cmd_filter,
    "stats": cmd_stats,
    "export-sft": cmd_export,
    "eval": cmd_eval,
    "vid": cmd_vid,
    "audit": cmd_audit,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    started = datetime.now(timezone.utc)
    try:
        return COMMANDS[args.command](args, started)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return 2
    except (DataError, TokenizerError, ValueError, TypeError, FileNotFoundError) as exc:
        logger.error("data error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
