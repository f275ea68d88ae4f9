"""Command line entry points for the scorer sidecar."""

from __future__ import annotations

import logging
import sys

import click

from .config import SidecarConfig, SidecarConfigError, load_config_file
from .ordering import read_dataset, train_ordering_model

logger = logging.getLogger(__name__)


@click.group()
def main() -> None:
    """Scorer service and ordering-model training."""
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(message)s"
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON config mapping scorer kinds to model specs.")
@click.option("--port", type=int, default=None,
              help="Override the configured port.")
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(config_path: str | None, port: int | None, host: str) -> None:
    """Run the scoring service."""
    import uvicorn

    from .app import create_app

    try:
        config = load_config_file(config_path) if config_path else SidecarConfig()
        app = create_app(config)
    except (SidecarConfigError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    uvicorn.run(app, host=host, port=port if port is not None else config.port)


@main.command("train-ordering")
@click.option("--dataset", required=True, type=click.Path(exists=True),
              help="jsonl export from the engine's dataset builder.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Where to write the model artifact.")
@click.option("--heldout-fraction", type=float, default=0.25, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def train_ordering(dataset: str, out_path: str,
                   heldout_fraction: float, seed: int) -> None:
    """Train the sentence-ordering classifier from a jsonl dataset."""
    try:
        records = read_dataset(dataset)
        model = train_ordering_model(
            records, heldout_fraction=heldout_fraction, seed=seed
        )
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    model.save(out_path)
    click.echo(
        f"trained on {model.training_size} examples; "
        f"held-out accuracy {model.heldout_accuracy:.3f}; "
        f"artifact written to {out_path}"
    )


if __name__ == "__main__":
    main()
