"""Command-line front end.

Subcommands: index, featurize, fit, score, evaluate, render-debug.
Every command is idempotent: rerunning with unchanged inputs rewrites
byte-identical outputs.
"""

import sys
from collections import Counter
from pathlib import Path

import click
import numpy as np

from . import embedding, evaluation, ingest, models, patches as patching, pipeline, spectral
from .config import CACHE_DIR_ENV, RunConfig, load_config


def _resolved_config(ctx):
    cfg = ctx.obj.get("config")
    if cfg is None:
        cfg = RunConfig()
    overrides = {}
    if ctx.obj.get("cache_dir"):
        overrides["cache_dir"] = ctx.obj["cache_dir"]
    if ctx.obj.get("workers"):
        overrides["workers"] = ctx.obj["workers"]
    return cfg.with_overrides(**overrides)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Declarative run configuration (YAML).")
@click.option("--seed", type=int, default=None, help="Seed for single-seed commands.")
@click.option("--workers", type=int, default=None, help="Worker count (default: all cores).")
@click.option("--cache-dir", type=click.Path(), default=None,
              help=f"Feature cache directory (or ${CACHE_DIR_ENV}).")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Output path.")
@click.pass_context
def main(ctx, config_path, seed, workers, cache_dir, out_path):
    """Acoustic anomaly detection toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = load_config(config_path) if config_path else None
    ctx.obj["seed"] = seed
    ctx.obj["workers"] = workers
    ctx.obj["cache_dir"] = cache_dir
    ctx.obj["out"] = out_path


def _out(ctx, default):
    return Path(ctx.obj["out"] or default)


@main.command()
@click.argument("root", type=click.Path())
@click.pass_context
def index(ctx, root):
    """Index a dataset directory into a manifest file."""
    try:
        ds = ingest.index_dataset(root)
    except ingest.IngestError as exc:
        raise click.ClickException(str(exc))
    out = _out(ctx, "manifest.tsv")
    ingest.write_manifest(ds.entries, out)
    counts = Counter((e.machine_type, e.machine_id, e.label) for e in ds.entries)
    for (machine, mid, label), n in sorted(counts.items()):
        click.echo(f"{machine}/{mid}/{label}: {n}")
    click.echo(f"wrote {len(ds.entries)} entries to {out}")


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--root", "root", type=click.Path(exists=True), required=True,
              help="Dataset root the manifest paths are relative to.")
@click.option("--extractor", type=str, default="identity", show_default=True)
@click.option("--graph", "graph_path", type=click.Path(exists=True), default=None,
              help="ONNX graph for non-identity extractors.")
@click.pass_context
def featurize(ctx, manifest_path, root, extractor, graph_path):
    """Extract features for every (machine, id) group in a manifest."""
    cfg = _resolved_config(ctx).with_overrides(dataset_root=str(root))
    if graph_path:
        cfg = cfg.with_overrides(graphs={**cfg.graphs, extractor: str(graph_path)})
    entries = ingest.read_manifest(manifest_path)
    ds = ingest.DatasetIndex(entries=tuple(sorted(entries, key=lambda e: e.path)),
                             root=str(root))
    provider = pipeline.DatasetProvider(cfg, index=ds)
    groups = sorted({(e.machine_type, e.machine_id) for e in entries})
    try:
        for machine, mid in groups:
            key = pipeline.cache_key(extractor, cfg.dsp, cfg.render,
                                     cfg.graphs.get(extractor) or None)
            path = pipeline.cache_path(provider.cache_dir, machine, mid, extractor, key)
            if path.exists():
                click.echo(f"{machine}/{mid}: cache present, skipped ({path.name})")
                continue
            matrix = provider.features_for(extractor, machine, mid)
            click.echo(f"{machine}/{mid}: {matrix.n_rows} rows of d={matrix.dim} -> {path.name}")
    except (embedding.EmbeddingError, pipeline.PipelineError, ingest.IngestError) as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--cache", "cache_path", type=click.Path(exists=True), required=True)
@click.option("--model", "model_kind", type=click.Choice(models.MODEL_KINDS), required=True)
@click.pass_context
def fit(ctx, cache_path, model_kind):
    """Fit an anomaly model on a feature cache.

    Unstandardized caches are standardized first; the fitted statistics
    are written next to the model file (<out>.std) for use by `score`.
    """
    cfg = _resolved_config(ctx)
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else 0
    out = _out(ctx, f"{model_kind}.adm")
    matrix = embedding.read_cache(cache_path)
    try:
        if not matrix.standardized:
            standardizer = embedding.fit_standardizer(matrix)
            matrix = embedding.apply_standardizer(standardizer, matrix)
            embedding.save_standardizer(standardizer, str(out) + ".std")
        model = models.fit_model(
            model_kind, matrix.values, seed=seed, **cfg.hyper.get(model_kind, {})
        )
    except Exception as exc:
        raise click.ClickException(str(exc))
    models.save_model(model, out)
    click.echo(f"fitted {model_kind} on {matrix.n_rows} rows (seed {seed}) -> {out}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--cache", "cache_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.pass_context
def score(ctx, model_path, cache_path, manifest_path):
    """Pool per-patch model scores into per-clip scores."""
    model = models.load_model(model_path)
    matrix = embedding.read_cache(cache_path)
    std_path = Path(str(model_path) + ".std")
    if not matrix.standardized and std_path.exists():
        matrix = embedding.apply_standardizer(
            embedding.load_standardizer(std_path), matrix
        )
    entries = ingest.read_manifest(manifest_path)
    matrix = matrix.sorted_rows()
    cached_clips = set(cid for cid, _ in matrix.row_meta)
    missing = [e.path for e in entries if e.path not in cached_clips]
    if missing:
        raise click.ClickException(
            f"{len(missing)} manifest clips missing from cache, e.g. {missing[0]}"
        )
    labels = {e.path: e.label for e in entries}
    wanted = set(labels)
    clip_scores = []
    for clip_id in matrix.clip_ids():
        if clip_id not in wanted:
            continue
        rows = matrix.rows_for_clip(clip_id)
        clip_scores.append(
            evaluation.pool_mean(model.score(rows), clip_id=clip_id, label=labels[clip_id])
        )
    out = _out(ctx, "clip_scores.tsv")
    lines = ["clip_scores_version: 1", "# clip_id\tlabel\tn_patches\tscore"]
    for c in sorted(clip_scores, key=lambda c: c.clip_id):
        lines.append(f"{c.clip_id}\t{c.label}\t{c.n_patches}\t{c.score:.17g}")
    out.write_text("\n".join(lines) + "\n")
    click.echo(f"wrote {len(clip_scores)} clip scores to {out}")


@main.command()
@click.pass_context
def evaluate(ctx):
    """Run the full experiment grid from the config and write reports."""
    cfg = _resolved_config(ctx)
    if not cfg.dataset_root:
        raise click.ClickException("config must set dataset_root")
    out_dir = Path(ctx.obj["out"] or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_json = out_dir / "report.json"
    existing = {}
    if report_json.exists():
        existing = evaluation.ExperimentReport.from_json(report_json.read_text()).cells
    provider = pipeline.DatasetProvider(cfg)
    report = evaluation.run_experiment(
        provider,
        extractors=cfg.extractors,
        model_kinds=cfg.models,
        machines=[tuple(m) for m in cfg.machines],
        seeds=tuple(cfg.seeds),
        n_test_normal=cfg.n_test_normal,
        hyper=cfg.hyper,
        config=cfg.to_dict(),
        existing_cells=existing,
        on_cell=lambda key, cell: click.echo(
            f"{key[2]}/{key[3]} {key[0]}+{key[1]}: mean AUC {100 * cell['mean']:.1f}"
        ),
    )
    report_json.write_text(report.to_json() + "\n")
    table = evaluation.render_table(report) + "\n" + evaluation.render_rank_section(report)
    (out_dir / "report.txt").write_text(table)
    if report.failures:
        for failure in report.failures:
            click.echo(f"FAILED cell {failure['cell']}: {failure['error']}", err=True)
        sys.exit(1)
    click.echo(f"report written to {out_dir}")


@main.command("render-debug")
@click.option("--wav", "wav_path", type=click.Path(exists=True), required=True)
@click.pass_context
def render_debug(ctx, wav_path):
    """Dump the Mel spectrogram and rendered patch images for one clip."""
    cfg = _resolved_config(ctx)
    out_dir = Path(ctx.obj["out"] or "render-debug")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        w = ingest.decode_wav(wav_path)
        mel = pipeline.mel_for_waveform(w, cfg.dsp)
    except (ingest.IngestError, pipeline.PipelineError, spectral.SpectralError) as exc:
        raise click.ClickException(str(exc))
    stem = Path(wav_path).stem
    spectral.write_mels(mel, out_dir / f"{stem}.mels")
    cmap = patching.viridis()
    for p in patching.extract_patches(mel, clip_id=stem,
                                      width=cfg.render["width"],
                                      stride=cfg.render["stride"]):
        u = patching.patch_to_unit(p)
        if cfg.render["orientation"] == patching.ORIENT_LOW_BOTTOM:
            u = u[::-1, :]
        rgb = patching.apply_colormap(u, cmap)
        patching.write_ppm(rgb, out_dir / f"{stem}_{p.frame_offset:05d}.ppm")
    click.echo(f"debug renders written to {out_dir}")


if __name__ == "__main__":
    main()
