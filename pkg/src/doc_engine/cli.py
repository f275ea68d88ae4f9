"""Command-line entry points.

`doc-engine generate` runs the batch pipeline (or the rolling baseline),
`doc-engine serve` exposes the HTTP control API for the browser UI.
Interactive terminal runs pause between outline depths so the checkpoint
can be edited on disk before expansion continues.
"""

from __future__ import annotations

import dataclasses
import logging
import sys
from pathlib import Path

import click

from . import pipeline
from .errors import DocEngineError
from .pipeline import (
    PipelineConfig,
    PipelineRun,
    load_config_file,
    resume_run,
    run_rolling_baseline,
    start_run,
)
from .story import Stage

logger = logging.getLogger(__name__)


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _fail(error: BaseException) -> None:
    click.echo(f"error: {error}", err=True)
    sys.exit(pipeline.exit_code_for(error))


@click.group()
def main() -> None:
    """Outline-driven story generation."""


@main.command()
@click.option("--premise-file", type=click.Path(exists=True, dir_okay=False),
              help="Use this premise instead of generating one.")
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
              help="JSON pipeline configuration.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              help="Output directory for checkpoints and the story.")
@click.option("--interactive", is_flag=True,
              help="Pause after each outline depth so the checkpoint can be edited.")
@click.option("--resume", "resume_dir", type=click.Path(exists=True, file_okay=False),
              help="Continue an interrupted run from its checkpoint directory.")
@click.option("--baseline", type=click.Choice(["rolling"]),
              help="Skip detailed outlining and draft with the named baseline.")
@click.option("--max-depth", type=int, help="Outline depth limit (1-3).")
@click.option("--seed", type=int, help="Deterministic seed for mock runs.")
@click.option("--verbose", is_flag=True, help="Debug logging.")
def generate(premise_file: str | None, config_file: str | None,
             out_dir: str | None, interactive: bool, resume_dir: str | None,
             baseline: str | None, max_depth: int | None, seed: int | None,
             verbose: bool) -> None:
    """Generate a story from a premise."""
    _configure_logging(verbose)
    try:
        if resume_dir is not None:
            run = resume_run(resume_dir)
            _drive(run, interactive)
            return

        config = load_config_file(config_file) if config_file else PipelineConfig()
        overrides = {}
        if out_dir is not None:
            overrides["output_dir"] = out_dir
        if max_depth is not None:
            overrides["outliner"] = dataclasses.replace(
                config.outliner, max_depth=max_depth
            )
        if seed is not None:
            overrides["seed"] = seed
        if interactive:
            overrides["interactive"] = True
        if overrides:
            config = dataclasses.replace(config, **overrides)

        premise_text = None
        if premise_file is not None:
            premise_text = Path(premise_file).read_text(encoding="utf-8").strip()

        if baseline == "rolling":
            output = run_rolling_baseline(config, premise_text=premise_text)
            click.echo(f"baseline story written to {config.output_dir}")
            click.echo(f"{len(output.text)} characters over {len(output.spans)} items")
            return

        run = start_run(config, premise_text=premise_text)
        _drive(run, interactive)
    except DocEngineError as e:
        _fail(e)


def _drive(run: PipelineRun, interactive: bool) -> None:
    pause_at = {Stage.DEPTH1, Stage.DEPTH2, Stage.DEPTH3} if interactive else set()
    while run.state.stage is not Stage.DONE:
        stage = run.step()
        click.echo(f"stage: {stage.value}")
        if stage in pause_at:
            checkpoint = run.out_dir / pipeline.CHECKPOINT_FILE
            click.echo(f"outline at depth {stage.value[-1]} saved to {checkpoint}")
            click.pause("edit the checkpoint if you like, then press any key ...")
            # pick up hand edits before expanding further
            run.state = pipeline.load_checkpoint(run.out_dir)
    story = run.out_dir / pipeline.STORY_FILE
    click.echo(f"story written to {story}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True,
              help="Bind address for the control API.")
@click.option("--port", default=8100, show_default=True, type=int)
@click.option("--out", "out_dir", default="runs", show_default=True,
              type=click.Path(file_okay=False),
              help="Directory that holds one subdirectory per run.")
def serve(host: str, port: int, out_dir: str) -> None:
    """Serve the HTTP control API for interactive runs."""
    _configure_logging(False)
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(base_dir=out_dir), host=host, port=port)


if __name__ == "__main__":
    main()
