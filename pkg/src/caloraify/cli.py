"""Command-line entry points: KB management, parsing, estimation, metric
evaluation, dataset curation, and the HTTP service."""

from __future__ import annotations

import json
import sys

import click

from . import curator as curator_module
from . import kb as kb_module
from . import metrics as metrics_module
from . import service as service_module
from .calories import EstimateConfig, estimate
from .ingredients import parse_block
from .retrieval import build_index
from .service import ServiceConfig, config_from_env, parsed_to_dict, report_to_dict, context_to_dict


def _load_kb(path: str):
    if path.endswith(".csv"):
        return kb_module.ingest_csv_path(path)
    return kb_module.load_snapshot_path(path)


@click.group()
def main() -> None:
    """Retrieval-grounded calorie estimation toolkit."""


@main.group("kb")
def kb_group() -> None:
    """Knowledge-base commands."""


@kb_group.command("ingest")
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def kb_ingest(csv_path: str, out_path: str) -> None:
    """Ingest a nutrition CSV and write a JSONL snapshot."""
    try:
        kb = kb_module.ingest_csv_path(csv_path)
    except kb_module.KnowledgeBaseError as exc:
        raise click.ClickException(str(exc))
    kb_module.write_snapshot(kb, out_path)
    click.echo(f"ingested {kb.record_count} records (digest {kb.source_digest[:12]}) -> {out_path}")


@kb_group.command("stats")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True, dir_okay=False))
def kb_stats(kb_path: str) -> None:
    """Record count, digest and nutrient-consistency warnings."""
    kb = _load_kb(kb_path)
    outliers = kb_module.atwater_outliers(kb)
    click.echo(f"records: {kb.record_count}")
    click.echo(f"digest:  {kb.source_digest}")
    click.echo(f"atwater outliers (>25% deviation): {len(outliers)}")
    for food_id, deviation in outliers:
        click.echo(f"  {food_id}: {deviation:.1%}")


@kb_group.command("search")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--query", required=True)
@click.option("-k", "k", default=3, show_default=True, type=int)
def kb_search(kb_path: str, query: str, k: int) -> None:
    """Top-k cosine search over the KB documents."""
    kb = _load_kb(kb_path)
    index = build_index(kb)
    context = index.search(query, k)
    click.echo(json.dumps(context_to_dict(context), indent=2))


@main.command("parse")
@click.option("--text", required=True, help="Ingredient block, one item per line.")
def parse_command(text: str) -> None:
    """Parse an ingredient block into structured JSON."""
    items, errors = parse_block(text)
    click.echo(
        json.dumps(
            {
                "items": [parsed_to_dict(item) for item in items],
                "errors": [{"line": line, "message": message} for line, message in errors],
            },
            indent=2,
        )
    )


@main.command("estimate")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--ingredients",
    "ingredients_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option("-k", "k", default=3, show_default=True, type=int)
@click.option("--min-score", default=0.35, show_default=True, type=float)
def estimate_command(kb_path: str, ingredients_path: str, k: int, min_score: float) -> None:
    """Estimate calories for an ingredient file against a KB."""
    kb = _load_kb(kb_path)
    index = build_index(kb)
    with open(ingredients_path, "r", encoding="utf-8") as fh:
        text = fh.read()
    items, errors = parse_block(text)
    report = estimate(items, index, kb, EstimateConfig(k=k, min_score=min_score))
    payload = report_to_dict(report)
    payload["line_errors"] = [{"line": line, "message": message} for line, message in errors]
    click.echo(json.dumps(payload, indent=2))
    click.echo(report.generated_answer)


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lambda-rouge", default=metrics_module.DEFAULT_LAMBDA_ROUGE, show_default=True)
@click.option("--lambda-bleu", default=metrics_module.DEFAULT_LAMBDA_BLEU, show_default=True)
def eval_command(pred_path: str, ref_path: str, lambda_rouge: float, lambda_bleu: float) -> None:
    """Evaluate line-aligned prediction/reference files."""
    spec = metrics_module.AggregateSpec(lambda_rouge=lambda_rouge, lambda_bleu=lambda_bleu)
    try:
        report = metrics_module.evaluate_corpus(pred_path, ref_path, spec)
    except metrics_module.MetricsError as exc:
        raise click.ClickException(str(exc))
    click.echo(report.render_table())
    click.echo(json.dumps(report.to_dict(), indent=2))


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise click.ClickException(f"ratios must be three comma-separated numbers, got {text!r}")
    return parts[0], parts[1], parts[2]


@main.command("curate")
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--ratios", default="0.6,0.2,0.2", show_default=True)
@click.option("--max-images", default=curator_module.DEFAULT_MAX_IMAGES, show_default=True, type=int)
@click.option(
    "--instructions-per-image",
    default=curator_module.DEFAULT_INSTRUCTIONS_PER_IMAGE,
    show_default=True,
    type=int,
)
def curate_command(
    catalog_path: str,
    target: int,
    seed: int,
    out_path: str,
    ratios: str,
    max_images: int,
    instructions_per_image: int,
) -> None:
    """Sample, pair and split a recipe catalog into a manifest."""
    with open(catalog_path, "r", encoding="utf-8") as fh:
        catalog = curator_module.load_catalog(fh)
    try:
        manifest, warnings = curator_module.curate(
            catalog,
            target=target,
            seed=seed,
            ratios=_parse_ratios(ratios),
            max_images=max_images,
            instructions_per_image=instructions_per_image,
        )
    except curator_module.CuratorError as exc:
        raise click.ClickException(str(exc))
    curator_module.write_manifest(
        manifest,
        out_path,
        max_images=max_images,
        instructions_per_image=instructions_per_image,
    )
    for warning in warnings:
        click.echo(f"warning: {warning}", err=True)
    counts = manifest.split_counts()
    click.echo(
        f"wrote {len(manifest.entries)} pairs -> {out_path} "
        f"(train {counts['train']} / val {counts['val']} / test {counts['test']})"
    )


@main.command("serve")
@click.option("--port", default=None, type=int)
@click.option("--kb", "kb_path", default=None, type=click.Path(dir_okay=False))
@click.option("--vlm-mode", default=None, type=click.Choice(["stub", "http"]))
@click.option("--vlm-endpoint", default=None)
@click.option("--stub-fixtures", "stub_fixture_path", default=None, type=click.Path(dir_okay=False))
@click.option("--retrieval-k", default=None, type=int)
@click.option("--min-score", default=None, type=float)
@click.option("--max-image-bytes", default=None, type=int)
@click.option("--session-capacity", default=None, type=int)
def serve_command(**flags) -> None:
    """Run the HTTP service. Flags override CALORAIFY_* environment variables."""
    from dataclasses import replace

    config = config_from_env()
    explicit = {key: value for key, value in flags.items() if value is not None}
    if explicit:
        config = replace(config, **explicit)
    if not config.kb_path:
        raise click.ClickException("a knowledge base is required (--kb or CALORAIFY_KB)")
    click.echo(f"serving on 127.0.0.1:{config.port} (vlm_mode={config.vlm_mode})")
    service_module.run(config)


if __name__ == "__main__":
    main()
