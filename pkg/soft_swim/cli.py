import inspect
import logging
from contextlib import contextmanager
from functools import partial, wraps
from pathlib import Path
from typing import Annotated, Callable, Iterator

import typer
from pydantic_typer import Typer as PydanticTyper
from typer import Option

from soft_swim.harness.model import Plane, RunConfig, TiltAxis
from soft_swim.utils.errors import InvalidDesignError, UndefinedFieldError
from soft_swim.utils.logging import Logger

CONFIG_ERROR = 2
IO_ERROR = 3

# Custom options
config_option = Option(
    "--config",
    "-c",
    exists=True,
    file_okay=True,
    dir_okay=False,
    show_default=False,
    help="Run configuration (TOML), the bundled config.toml by default",
)
out_option = Option("--out", "-o", file_okay=False, help="Output folder")
workers_option = Option(
    "--workers",
    "-w",
    min=1,
    show_default=False,
    help="Worker processes, [sweep].workers by default",
)
resume_option = Option(
    "--resume", help="Continue a sweep CSV of the same configuration"
)


class AsyncTyper(PydanticTyper):
    """Pydantic-aware Typer app whose commands may be coroutines.

    The sweep and stability commands await their process pool; every
    coroutine command runs in a fresh event loop of its own.
    """

    @staticmethod
    def maybe_run_async(decorator: Callable, f: Callable) -> Callable:
        if inspect.iscoroutinefunction(f):
            import asyncio

            @wraps(f)
            def runner(*args, **kwargs):  # noqa: ANN202
                return asyncio.run(f(*args, **kwargs))

            decorator(runner)
        else:
            decorator(f)
        return f

    def callback(self, *args, **kwargs) -> Callable:
        decorator = super().callback(*args, **kwargs)
        return partial(self.maybe_run_async, decorator)

    def command(self, *args, **kwargs) -> Callable:
        decorator = super().command(*args, **kwargs)
        return partial(self.maybe_run_async, decorator)


app = AsyncTyper(
    context_settings={"help_option_names": ["-h", "--help"]},
    add_completion=False,
)


@contextmanager
def exit_codes() -> Iterator[None]:
    """Maps configuration and I/O failures onto the process exit code."""
    from pydantic import ValidationError
    from toml import TomlDecodeError

    try:
        yield
    except ValidationError as error:
        for issue in error.errors():
            location = ".".join(str(part) for part in issue["loc"])
            Logger.error(f"{location or 'config'}: {issue['msg']}")
        raise typer.Exit(CONFIG_ERROR)
    except (
        TomlDecodeError,
        InvalidDesignError,
        UndefinedFieldError,
        ValueError,
    ) as error:
        Logger.error(f"Invalid configuration: {error}")
        raise typer.Exit(CONFIG_ERROR)
    except OSError as error:
        Logger.error(f"I/O failure: {error}")
        raise typer.Exit(IO_ERROR)


@app.callback()
def main(
    verbose: Annotated[
        bool, Option("--verbose", "-v", help="Log debug messages")
    ] = False,
    quiet: Annotated[
        bool, Option("--quiet", "-q", help="Log warnings and errors only")
    ] = False,
) -> None:
    """Magnetic soft robotic swimmers in Stokes flow."""
    if verbose:
        Logger.setLevel(logging.DEBUG)
    elif quiet:
        Logger.setLevel(logging.WARNING)


# Commands
@app.command()
def simulate(
    config: Annotated[Path | None, config_option] = None,
    out: Annotated[Path, out_option] = Path("out"),
) -> None:
    """Runs one simulation: trajectory, cycle table and summary."""
    from soft_swim.harness.scenarios import simulate as run_simulation

    with exit_codes():
        summary = run_simulation(RunConfig.load(config), out)

    if summary.regime != "OK":
        Logger.warning(f"Finished in regime {summary.regime}")
    Logger.info(f"blpc = {summary.final_blpc:.4g} ({summary.regime})")


@app.command()
async def sweep(
    config: Annotated[Path | None, config_option] = None,
    out: Annotated[Path, out_option] = Path("out"),
    workers: Annotated[int | None, workers_option] = None,
    resume: Annotated[bool, resume_option] = False,
) -> None:
    """Sweeps two parameters into sweep.csv and a heatmap."""
    from soft_swim.harness.sweep import sweep as run_sweep

    with exit_codes():
        await run_sweep(
            RunConfig.load(config), out / "sweep.csv", workers, resume
        )


@app.command()
async def stability(
    config: Annotated[Path | None, config_option] = None,
    out: Annotated[Path, out_option] = Path("out"),
    axis: Annotated[
        TiltAxis | None,
        Option(help="Tilt axis, [scenario].stability_axis by default"),
    ] = None,
    angles: Annotated[
        list[float] | None,
        Option("--angle", min=0, max=90, help="Tilt angle [deg], repeatable"),
    ] = None,
    cycles: Annotated[
        int | None, Option(min=2, help="Cycles per tilt angle")
    ] = None,
    workers: Annotated[int | None, workers_option] = None,
    resume: Annotated[bool, resume_option] = False,
) -> None:
    """Per-cycle blpc of a design started at several initial tilts."""
    from soft_swim.harness.sweep import stability as run_stability

    with exit_codes():
        await run_stability(
            RunConfig.load(config),
            out / "stability.csv",
            axis=axis,
            angles=angles or None,
            cycles=cycles,
            workers=workers,
            resume=resume,
        )


@app.command()
def bidir(
    config: Annotated[Path | None, config_option] = None,
    out: Annotated[Path, out_option] = Path("out"),
) -> None:
    """Checks whether a design reverses its swimming direction."""
    from soft_swim.harness.scenarios import bidirectionality

    with exit_codes():
        report = bidirectionality(RunConfig.load(config), out)

    for phase in report.phases:
        Logger.info(f"{phase.name}: blpc = {phase.blpc:.4g} ({phase.regime})")
    Logger.info(f"Bidirectional: {report.bidirectional}")


@app.command()
def compare(
    runs: Annotated[
        list[Path],
        typer.Argument(
            exists=True,
            file_okay=False,
            help="Run folders of sweep, bidir and stability, one per design",
        ),
    ],
    out: Annotated[Path, out_option] = Path("out"),
    tolerance: Annotated[
        float, Option(min=0, help="Allowed blpc deviation under tilt")
    ] = 0.2,
) -> None:
    """Tabulates peak blpc, bidirectionality and stability per design."""
    from soft_swim.harness.scenarios import compare as run_compare

    with exit_codes():
        table = run_compare(runs, out, tolerance)

    for row in table.itertuples(index=False):
        Logger.info(
            f"{row.design}: peak blpc {row.peak_blpc}, "
            f"bidirectional {row.bidirectional}, stable {row.stable}"
        )


@app.command()
def flowfield(
    config: Annotated[Path | None, config_option] = None,
    out: Annotated[Path, out_option] = Path("out"),
    plane: Annotated[
        Plane | None, Option(help="Frame plane, [flow].plane by default")
    ] = None,
    resolution: Annotated[
        int | None, Option(min=2, help="Grid points per side")
    ] = None,
) -> None:
    """Flow speed frames and flowrate traces over one steady cycle."""
    from soft_swim.harness.scenarios import flowfield as run_flowfield
    from soft_swim.utils.errors import NotConvergedError

    with exit_codes():
        try:
            run_flowfield(RunConfig.load(config), out, plane, resolution)
        except NotConvergedError as error:
            Logger.warning(f"No flow field written: {error}")


@app.command()
def validate(
    out: Annotated[Path | None, out_option] = None,
    oracles: Annotated[
        list[str] | None,
        Option("--oracle", help="Run only this oracle, repeatable"),
    ] = None,
) -> None:
    """Runs the oracle suite, exits with 1 when an oracle fails."""
    from soft_swim.harness.scenarios import ORACLES
    from soft_swim.harness.scenarios import validate as run_validation

    if unknown := set(oracles or []) - set(ORACLES):
        Logger.error(f"Unknown oracles {sorted(unknown)}")
        raise typer.Exit(CONFIG_ERROR)

    with exit_codes():
        report = run_validation(out, oracles or None)
    if not report.passed:
        raise typer.Exit(1)


@app.command()
def mesh(
    config: Annotated[Path | None, config_option] = None,
    out: Annotated[Path, out_option] = Path("out"),
) -> None:
    """Exports the initial mesh and magnetization of a design."""
    from soft_swim.harness.scenarios import export_mesh

    with exit_codes():
        export_mesh(RunConfig.load(config), out)
