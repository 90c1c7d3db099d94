"""Command-line entry point for the pipeline: corpus-table building, batch
scoring, correlation, drift analysis, and perturbation.

Exit codes: 0 success, 1 scoring failures present, 2 usage/IO,
3 data validation, 4 transport.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click

from . import aspects, corpus_stats, metaeval, textproc
from .core import Aspect
from .errors import (
    CtrlEvalError,
    ProtocolError,
    ScoringError,
    TableLoadError,
    TransportError,
    ValidationError,
)
from .scorer import RemoteBackend, backend_from_spec

try:
    from importlib.metadata import version as _pkg_version

    TOOL_VERSION = _pkg_version("ctrleval")
except Exception:  # pragma: no cover - metadata missing in odd installs
    TOOL_VERSION = "0.1.0"

EXIT_SCORING_FAILURES = 1
EXIT_USAGE_IO = 2
EXIT_VALIDATION = 3
EXIT_TRANSPORT = 4

ASPECT_CHOICES = ["coherence", "consistency", "attr_rel"]


def _aspect(name: str) -> Aspect:
    return metaeval.ASPECT_JSON_KEYS[name]


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (TransportError, ProtocolError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_TRANSPORT)
        except (ValidationError, TableLoadError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE_IO)

    return wrapper


def _header(config: dict, seed: int | None = None) -> dict:
    header = {"tool": "ctrleval", "version": TOOL_VERSION, "config": config}
    if seed is not None:
        header["seed"] = seed
    return header


@click.group()
def main():
    """Reference-free evaluation of controlled text generation."""


@main.command("build-iwf")
@click.option("--corpus", required=True, type=click.Path(path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option(
    "--per-line-sentences/--segment-lines",
    default=True,
    help="Treat each corpus line as one sentence, or segment lines first.",
)
@_handle_errors
def cmd_build_iwf(corpus: Path, out: Path, per_line_sentences: bool):
    """Build and persist an inverse-word-frequency table from a corpus."""
    if not corpus.exists():
        click.echo(f"error: corpus file not found: {corpus}", err=True)
        sys.exit(EXIT_USAGE_IO)
    with open(corpus, encoding="utf-8") as stream:
        table = corpus_stats.build_iwf_table(stream, per_line_sentences=per_line_sentences)
    corpus_stats.save_table(table, out)
    click.echo(f"sentences={table.corpus_sentence_count} vocab={len(table.frequencies)}")


def _mock_vocab(records, catalog) -> list[str]:
    vocab: set[str] = set()
    for record in records:
        vocab.update(record.instance.generated_text.split())
        vocab.update(record.instance.prefix.split())
    if catalog is not None:
        for verbalizer in catalog.verbalizers:
            vocab.update(verbalizer.mapping.values())
    return sorted(vocab)


@main.command("score")
@click.option("--aspect", "aspect_name", required=True, type=click.Choice(ASPECT_CHOICES))
@click.option("--input", "input_path", required=True, type=click.Path(path_type=Path))
@click.option("--scorer", "scorer_spec", default=None,
              help="Backend spec: mock:<seed>, cmd:<command>, or tcp:<host>:<port>.")
@click.option("--iwf", "iwf_path", type=click.Path(path_type=Path), default=None)
@click.option("--catalog", "catalog_path", type=click.Path(path_type=Path), default=None)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--concurrency", default=16, show_default=True,
              help="In-flight request window for remote backends.")
@click.option("--strict", is_flag=True, help="Fail fast on the first scoring error.")
@click.option("--trim-incomplete-last-sentence", "trim_last", is_flag=True,
              help="Drop a trailing sentence without terminal punctuation.")
@_handle_errors
def cmd_score(aspect_name, input_path, scorer_spec, iwf_path, catalog_path, out,
              concurrency, strict, trim_last):
    """Score every record of an evaluation-set JSONL file on one aspect."""
    scorer_spec = os.environ.get("CTRLEVAL_SCORER") or scorer_spec
    if not scorer_spec:
        raise click.UsageError("--scorer is required (or set CTRLEVAL_SCORER)")
    aspect = _aspect(aspect_name)
    if aspect in (Aspect.COHERENCE, Aspect.CONSISTENCY) and iwf_path is None:
        raise click.UsageError(f"--iwf is required for aspect {aspect_name}")
    if aspect is Aspect.ATTRIBUTE_RELEVANCE and catalog_path is None:
        raise click.UsageError("--catalog is required for aspect attr_rel")
    if Path(input_path).resolve() == Path(out).resolve():
        raise click.UsageError("input and output paths must differ")
    if not input_path.exists():
        click.echo(f"error: input file not found: {input_path}", err=True)
        sys.exit(EXIT_USAGE_IO)

    raw_records = []
    with open(input_path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                raw_records.append(json.loads(line))
    if trim_last:
        for obj in raw_records:
            obj["text"] = textproc.trim_incomplete_last_sentence(obj["text"])
    records = [metaeval.parse_eval_record(obj) for obj in raw_records]

    table = corpus_stats.load_table(iwf_path) if iwf_path is not None else None
    catalog = aspects.load_catalog(catalog_path) if catalog_path is not None else None

    backend = backend_from_spec(scorer_spec, vocab=_mock_vocab(records, catalog))
    if isinstance(backend, RemoteBackend):
        backend.batch_window = max(1, concurrency)

    rows = []
    failures = 0
    for record in records:
        try:
            if aspect is Aspect.COHERENCE:
                result = aspects.score_coherence(record.instance, table, backend)
            elif aspect is Aspect.CONSISTENCY:
                result = aspects.score_consistency(record.instance, table, backend)
            else:
                result = aspects.score_attribute_relevance(catalog, record.instance, backend)
        except ScoringError as exc:
            failures += 1
            click.echo(f"warning: {record.sample_id}: {exc}", err=True)
            if strict:
                sys.exit(EXIT_SCORING_FAILURES)
            continue
        rows.append(metaeval.score_row(record.sample_id, result))

    config = {
        "aspect": aspect_name,
        "scorer": scorer_spec,
        "input": str(input_path),
        "iwf": str(iwf_path) if iwf_path else None,
        "catalog": str(catalog_path) if catalog_path else None,
        "trim_incomplete_last_sentence": trim_last,
    }
    metaeval.write_scores(out, rows, header=_header(config))
    if failures:
        click.echo(f"{failures} of {len(records)} records failed", err=True)
        sys.exit(EXIT_SCORING_FAILURES)
    click.echo(f"scored {len(rows)} records")


def _load_scores_for_aspect(path: Path, aspect_name: str) -> dict[str, float]:
    _, rows = metaeval.read_scores(path)
    return {row["id"]: row["score"] for row in rows if row["aspect"] == aspect_name}


def _matched(records, scores):
    missing = [r.sample_id for r in records if r.sample_id not in scores]
    if missing:
        raise ValidationError(f"ids without scores: {', '.join(sorted(missing))}")
    return [r for r in records if r.sample_id in scores]


@main.command("correlate")
@click.option("--scores", "scores_path", required=True, type=click.Path(path_type=Path))
@click.option("--ratings", "ratings_path", required=True, type=click.Path(path_type=Path))
@click.option("--aspect", "aspect_name", required=True, type=click.Choice(ASPECT_CHOICES))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_handle_errors
def cmd_correlate(scores_path, ratings_path, aspect_name, out):
    """Correlate metric scores with mean human ratings."""
    aspect = _aspect(aspect_name)
    records = metaeval.read_eval_set(ratings_path)
    scores = _load_scores_for_aspect(scores_path, aspect_name)
    records = _matched(records, scores)
    xs = [scores[r.sample_id] for r in records]
    ys = [r.mean_rating(aspect) for r in records]
    report = metaeval.correlation_report(xs, ys, aspect)
    payload = {
        "header": _header({"scores": str(scores_path), "ratings": str(ratings_path),
                           "aspect": aspect_name}),
        **report.to_dict(),
    }
    Path(out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
    click.echo(f"r={report.pearson_r:.4f} rho={report.spearman_rho:.4f} "
               f"tau={report.kendall_tau:.4f} n={report.n}")


@main.command("drift")
@click.option("--mode", required=True, type=click.Choice(["model", "quality"]))
@click.option("--scores", "scores_path", required=True, type=click.Path(path_type=Path))
@click.option("--ratings", "ratings_path", required=True, type=click.Path(path_type=Path))
@click.option("--aspect", "aspect_name", required=True, type=click.Choice(ASPECT_CHOICES))
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_handle_errors
def cmd_drift(mode, scores_path, ratings_path, aspect_name, seed, out):
    """Model-drift or quality-drift stability analysis."""
    aspect = _aspect(aspect_name)
    records = metaeval.read_eval_set(ratings_path)
    scores = _load_scores_for_aspect(scores_path, aspect_name)
    records = _matched(records, scores)
    config = {"mode": mode, "scores": str(scores_path), "ratings": str(ratings_path),
              "aspect": aspect_name}

    if mode == "model":
        report = metaeval.model_drift_report(records, scores, aspect)
        payload = {"header": _header(config), **report.to_dict()}
    else:
        subsets = metaeval.quality_drift_subsets(records, scores, seed)
        payload = {"header": _header(config, seed=seed), "subsets": []}
        for j, subset in enumerate(subsets):
            entry = {"index": j, "ids": [r.sample_id for r in subset]}
            if len(subset) >= 2:
                xs = [scores[r.sample_id] for r in subset]
                ys = [r.mean_rating(aspect) for r in subset]
                try:
                    entry["correlation"] = metaeval.correlation_report(xs, ys, aspect).to_dict()
                except ValidationError as exc:
                    entry["correlation_error"] = str(exc)
            payload["subsets"].append(entry)
    Path(out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
    click.echo(f"wrote {mode}-drift report to {out}")


@main.command("perturb")
@click.option("--input", "input_path", required=True, type=click.Path(path_type=Path))
@click.option("--strategy", required=True, type=click.Choice(list(metaeval.PERTURB_STRATEGIES)))
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_handle_errors
def cmd_perturb(input_path, strategy, seed, out):
    """Create negative samples by perturbing evaluation-set records."""
    records = metaeval.read_eval_set(input_path)
    skipped = 0
    with open(out, "w", encoding="utf-8") as f:
        header = _header({"input": str(input_path), "strategy": strategy}, seed=seed)
        f.write(json.dumps({"header": header}, ensure_ascii=False, sort_keys=True) + "\n")
        for i, record in enumerate(records):
            try:
                perturbed = metaeval.perturb_negative(record.instance, strategy, seed + i)
            except ValidationError as exc:
                skipped += 1
                click.echo(f"warning: {record.sample_id}: {exc}", err=True)
                continue
            f.write(json.dumps({
                "id": f"{record.sample_id}~{strategy}",
                "prefix": perturbed.prefix,
                "label": perturbed.label,
                "text": perturbed.generated_text,
                "model": record.generator_model,
                "source_id": record.sample_id,
            }, ensure_ascii=False) + "\n")
    click.echo(f"perturbed {len(records) - skipped} records ({skipped} skipped)")


if __name__ == "__main__":
    main()
