"""Command-line entry point for the graph exporter."""

import click

from .export import EXPORTABLE, ExportError, ExportSpec, export_model


@click.group()
def main():
    """Export feature-extractor networks as portable inference graphs."""


@main.command()
@click.option("--model", "model_name", type=click.Choice(EXPORTABLE), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Weight seed when no checkpoint is given.")
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None,
              help="Optional .npz checkpoint keyed by parameter name.")
@click.option("--lockfile", type=click.Path(), default=None,
              help="Weight-checksum lockfile to update (refuses mismatches).")
def export(model_name, out_path, seed, weights_path, lockfile):
    """Export one model, verifying the graph before writing it."""
    try:
        sidecar = export_model(
            ExportSpec(
                extractor_id=model_name,
                out_path=out_path,
                seed=seed,
                weights_path=weights_path or "",
            ),
            lockfile=lockfile,
        )
    except (ExportError, KeyError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"{model_name}: d={sidecar['dim']} tap={sidecar['tap']} "
        f"max probe diff {sidecar['probe_max_abs_diff']:.3g} -> {out_path}"
    )


if __name__ == "__main__":
    main()
