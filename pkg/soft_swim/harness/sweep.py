from __future__ import annotations

import asyncio
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from types import TracebackType
from typing import TYPE_CHECKING, Any

from soft_swim.core.dynamics.model import Regime
from soft_swim.harness.model import (
    RunConfig,
    SweepAxis,
    SweepParameter,
    SweepSection,
    TiltAxis,
)
from soft_swim.harness.output import (
    append_rows,
    heatmap_svg,
    read_provenance,
    read_table,
    start_table,
)
from soft_swim.utils.errors import ResumeMismatchError, SoftSwimError
from soft_swim.utils.logging import Logger

if TYPE_CHECKING:
    from pathlib import Path

    import pandas as pd

DISTRIBUTION = "soft-swim"
RESULT_COLUMNS = [
    "blpc",
    "regime",
    "cycles_to_steady",
    "Qtotal",
    "realized_Mn",
]


def code_version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version(DISTRIBUTION)
    except PackageNotFoundError:
        return "unknown"


def config_hash(config: RunConfig) -> str:
    """Short digest of everything that determines the sweep results."""
    payload = config.model_dump(mode="json", exclude={"sweep": {"workers"}})
    digest = hashlib.sha1(json.dumps(payload, sort_keys=True).encode())
    return digest.hexdigest()[:10]


@dataclass(frozen=True)
class Job:
    """One simulation and the grid cells it fills.

    Attributes:
        values: Parameter assignments of the simulation.
        cells: Row-major cell indices with the cycle each one reports,
            None for the steady value.
    """

    values: tuple[tuple[SweepParameter, float], ...]
    cells: tuple[tuple[int, int | None], ...]

    @property
    def n_cycles(self) -> int | None:
        cycles = [cycle for _, cycle in self.cells if cycle is not None]
        return max(cycles) if cycles else None


def plan(sweep: SweepSection) -> tuple[list[tuple[float, float]], list[Job]]:
    """Row-major grid of (axis1, axis2) values and the jobs covering it."""
    axis1, axis2 = sweep.axis1, sweep.axis2
    grid = [(a, b) for a in axis1.values for b in axis2.values]
    width = len(axis2.values)

    def key(i: int, j: int) -> int:
        return i * width + j

    cycle = SweepParameter.CYCLE_INDEX
    if cycle not in (axis1.name, axis2.name):
        jobs = [
            Job(
                values=((axis1.name, a), (axis2.name, b)),
                cells=((key(i, j), None),),
            )
            for i, a in enumerate(axis1.values)
            for j, b in enumerate(axis2.values)
        ]
        return grid, jobs

    if axis1.name is cycle:
        jobs = [
            Job(
                values=((axis2.name, b),),
                cells=tuple(
                    (key(i, j), int(a)) for i, a in enumerate(axis1.values)
                ),
            )
            for j, b in enumerate(axis2.values)
        ]
    else:
        jobs = [
            Job(
                values=((axis1.name, a),),
                cells=tuple(
                    (key(i, j), int(b)) for j, b in enumerate(axis2.values)
                ),
            )
            for i, a in enumerate(axis1.values)
        ]
    return grid, jobs


def evaluate(
    payload: dict[str, Any], job: Job
) -> list[tuple[int, dict[str, Any]]]:
    """Runs one job in a worker process.

    Args:
        payload: Dumped RunConfig.
        job: Job to run.

    Returns:
        Result columns of every cell the job fills.
    """
    from soft_swim.core.dynamics.core import Simulation
    from soft_swim.core.dynamics.diagnostics import steady_blpc

    Logger.worker()
    try:
        config = RunConfig.model_validate(payload)
        # L0 goes last: a swept Mn sets B at the configured magnet length
        values = sorted(
            job.values,
            key=lambda item: item[0] is SweepParameter.L0_OVER_L,
        )
        for parameter, value in values:
            config = config.with_value(parameter, value)

        if (n_cycles := job.n_cycles) is not None:
            data = config.model_dump()
            data["sim"] |= {
                "stop_at_steady": False,
                "n_cycles_max": max(2, n_cycles),
            }
            config = RunConfig.model_validate(data)

        realized_Mn = config.realized_Mn
        traj = Simulation(config.to_sim_config()).run()
    except (SoftSwimError, ValueError) as error:
        Logger.warning(f"Skipping {job.values}: {error}")
        failed = {
            "blpc": math.nan,
            "regime": Regime.NOT_CONVERGED.value,
            "cycles_to_steady": None,
            "Qtotal": math.nan,
            "realized_Mn": math.nan,
        }
        return [(key, dict(failed)) for key, _ in job.cells]

    window = traj.cycles[-2:]
    Qtotal = (
        sum(cycle.Qtotal for cycle in window) / len(window)
        if window
        else math.nan
    )
    results = []
    for key, cycle in job.cells:
        if cycle is None:
            blpc = steady_blpc(traj)
        elif cycle <= len(traj.cycles):
            blpc = traj.cycles[cycle - 1].blpc
        else:
            blpc = math.nan
        results.append((
            key,
            {
                "blpc": blpc,
                "regime": traj.regime.value,
                "cycles_to_steady": traj.cycles_to_steady,
                "Qtotal": Qtotal,
                "realized_Mn": realized_Mn,
            },
        ))
    return results


class SweepRunner:
    """Ordered, resumable sweep over a pool of worker processes.

    Results are appended to the CSV in row-major order as soon as every
    earlier cell is known, regardless of the order workers finish in.
    """

    def __init__(
        self,
        config: RunConfig,
        path: Path,
        workers: int | None = None,
        resume: bool = False,
    ) -> None:
        """Instantiates SweepRunner.

        Args:
            config: Run configuration with its [sweep] section.
            path: Output CSV.
            workers: Worker processes, [sweep].workers by default.
            resume: Continue an existing CSV of the same configuration.
        """
        self.config = config
        self.path = path
        self.workers = workers or config.sweep.workers
        self.resume = resume
        self._executor: ProcessPoolExecutor | None = None

    async def __aenter__(self) -> SweepRunner:
        self._executor = ProcessPoolExecutor(max_workers=self.workers)
        return self

    async def __aexit__(
        self,
        exc_type: type[Exception] | None,
        exc_val: BaseException | None,
        exc_tb: TracebackType | None,
    ) -> None:
        assert self._executor
        self._executor.shutdown(cancel_futures=exc_type is not None)
        self._executor = None

    @property
    def axes(self) -> tuple[SweepAxis, SweepAxis]:
        return self.config.sweep.axis1, self.config.sweep.axis2

    @property
    def columns(self) -> list[str]:
        return [axis.name.value for axis in self.axes] + RESULT_COLUMNS

    def _completed_rows(self, digest: str) -> int:
        """Rows already present in a resumable CSV, 0 for a fresh one."""
        if not (self.resume and self.path.is_file()):
            start_table(self.path, self.columns, digest, code_version())
            return 0

        found = read_provenance(self.path).get("config_hash")
        if found != digest:
            msg = (
                f"{self.path} was produced by configuration {found}, "
                f"not {digest}"
            )
            Logger.error(msg)
            raise ResumeMismatchError(msg)

        done = len(read_table(self.path))
        Logger.info(f"Resuming {self.path} after {done} rows")
        return done

    async def run(self) -> pd.DataFrame:
        import pandas as pd

        assert self._executor
        grid, jobs = plan(self.config.sweep)
        done = self._completed_rows(config_hash(self.config))
        payload = self.config.model_dump(mode="json")

        loop = asyncio.get_running_loop()
        futures = [
            loop.run_in_executor(self._executor, evaluate, payload, job)
            for job in jobs
            if any(key >= done for key, _ in job.cells)
        ]
        Logger.info(
            f"Sweeping {len(grid) - done} cells with {len(futures)} runs "
            f"on {self.workers} workers"
        )

        results: dict[int, dict[str, Any]] = {}
        cursor = done
        for future in asyncio.as_completed(futures):
            for key, record in await future:
                if key >= done:
                    results[key] = record
            rows = []
            while cursor in results:
                a, b = grid[cursor]
                rows.append([a, b, *results.pop(cursor).values()])
                cursor += 1
            if rows:
                frame = pd.DataFrame(rows, columns=self.columns)
                append_rows(self.path, frame)

        frame = read_table(self.path)
        axis1, axis2 = self.axes
        heatmap_svg(
            frame,
            x=axis2.name.value,
            y=axis1.name.value,
            path=self.path.with_suffix(".svg"),
            title=self.config.design.kind.value,
        )
        return frame

    def __repr__(self) -> str:
        path = self.path
        workers = self.workers
        return f"SweepRunner({path=}, {workers=})"


def stability_config(
    config: RunConfig,
    axis: TiltAxis | None = None,
    angles: list[float] | None = None,
    cycles: int | None = None,
) -> RunConfig:
    """Sweep of tilt angle against cycle index for the stability battery."""
    scenario = config.scenario
    axis = axis or scenario.stability_axis
    angles = angles or scenario.stability_angles
    cycles = cycles or scenario.stability_cycles

    data = config.model_dump()
    data["sweep"] |= {
        "axis1": {"name": f"tilt_{axis.value}", "points": angles},
        "axis2": {
            "name": SweepParameter.CYCLE_INDEX.value,
            "points": list(range(1, cycles + 1)),
        },
    }
    return RunConfig.model_validate(data)


async def sweep(
    config: RunConfig,
    path: Path,
    workers: int | None = None,
    resume: bool = False,
) -> pd.DataFrame:
    async with SweepRunner(config, path, workers, resume) as runner:
        return await runner.run()


async def stability(
    config: RunConfig,
    path: Path,
    axis: TiltAxis | None = None,
    angles: list[float] | None = None,
    cycles: int | None = None,
    workers: int | None = None,
    resume: bool = False,
) -> pd.DataFrame:
    """Per-cycle blpc of a design started at several initial tilts."""
    battery = stability_config(config, axis, angles, cycles)
    return await sweep(battery, path, workers, resume)
