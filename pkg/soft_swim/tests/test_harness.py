import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import toml
from conftest import TINY, merge, tiny_config
from pydantic import ValidationError
from typer.testing import CliRunner

from soft_swim.cli import CONFIG_ERROR, app
from soft_swim.core.geometry.core import build_swimmer
from soft_swim.core.geometry.io import read_mesh
from soft_swim.core.geometry.model import DesignKind, TiltSpec
from soft_swim.core.magnetics.core import field_at
from soft_swim.core.magnetics.model import FieldKind
from soft_swim.harness.model import (
    BidirectionalityReport,
    RunConfig,
    SweepAxis,
    SweepParameter,
)
from soft_swim.harness.output import (
    heatmap_svg,
    read_provenance,
    read_table,
    start_table,
)
from soft_swim.harness.scenarios import (
    bidirectionality,
    compare,
    export_mesh,
    flowfield,
    simulate,
    validate,
)
from soft_swim.harness.sweep import config_hash, plan, stability, sweep
from soft_swim.utils.errors import ResumeMismatchError
from soft_swim.utils.processing import (
    COMPARE_COLUMNS,
    stability_table,
    sweep_grid,
)

runner = CliRunner()


# Configuration
def test_defaults_load() -> None:
    config = RunConfig.load()
    assert config.design.kind is DesignKind.CARANGIFORM
    assert config.sim.dt <= 1 / (500 * config.field.frequency)
    sim_config = config.to_sim_config()
    assert sim_config.field.kind is FieldKind.OSCILLATING
    assert sim_config.probes is None


@pytest.mark.parametrize(
    ("kind", "field"),
    [
        ("FingerShaped", FieldKind.ROTATING),
        ("DragInduced", FieldKind.ROTATING),
        ("CarangiformLike", FieldKind.OSCILLATING),
        ("AnguilliformLike", FieldKind.OSCILLATING_AXIAL),
    ],
)
def test_family_field(kind: str, field: FieldKind) -> None:
    config = RunConfig.model_validate({"design": {"kind": kind}})
    program = config.field.program(
        config.design.kind, 1e-3, config.tilt.spec()
    )
    assert program.kind is field


def test_coarse_time_step() -> None:
    with pytest.raises(ValidationError, match="dt"):
        RunConfig.model_validate({"sim": {"dt": 1e-3}})


@pytest.mark.parametrize(
    "data",
    [
        {"sim": {"timestep": 1e-4}},
        {"bogus": {}},
        {"tilt": {"roll": 120.0}},
        {"field": {"Mn": -1.0}},
    ],
)
def test_invalid_config(data: dict) -> None:
    with pytest.raises(ValidationError):
        RunConfig.model_validate(data)


def test_load_file(tmp_path: Path) -> None:
    path = tmp_path / "run.toml"
    path.write_text(toml.dumps(TINY))
    assert RunConfig.load(path) == tiny_config()


def test_with_value(tiny: RunConfig) -> None:
    changed = tiny.with_value(SweepParameter.TILT_PITCH, 30.0)
    assert changed.tilt.pitch == 30.0
    assert tiny.tilt.pitch == 0.0
    assert changed.with_value(SweepParameter.FN, 12.0).fluid.Fn == 12.0


def test_tilt_turns_only_the_swimmer() -> None:
    config = tiny_config(field={"Mn": 200.0}, tilt={"yaw": 90.0})
    tilted = config.to_sim_config()
    assert tilted.tilt == TiltSpec(yaw=90.0)
    assert tilted.field.orientation.is_identity

    untilted = tiny_config(field={"Mn": 200.0}).to_sim_config()
    for t in (0.0, 0.03, 0.11):
        assert np.allclose(
            field_at(tilted.field, t), field_at(untilted.field, t)
        )

    rotated = config.to_sim_config(rotate_field=True)
    assert rotated.field.orientation == TiltSpec(yaw=90.0)


def test_magnet_length_keeps_field(tiny: RunConfig) -> None:
    B = tiny.field_strength().amplitude
    short = tiny.with_value(SweepParameter.L0_OVER_L, 0.2)
    long = tiny.with_value(SweepParameter.L0_OVER_L, 0.8)

    assert short.field.amplitude == long.field.amplitude == B
    assert short.field_strength().amplitude == B
    assert long.realized_Mn == pytest.approx(4 * short.realized_Mn)
    expected = tiny.field.Mn * 0.2 / tiny.design.resolved_L0_over_L
    assert short.realized_Mn == pytest.approx(expected)


def test_swept_Mn_drops_amplitude(tiny: RunConfig) -> None:
    fixed = tiny_config(field={"amplitude": 0.01})
    assert fixed.field_strength().amplitude == 0.01
    changed = fixed.with_value(SweepParameter.MN, 50.0)
    assert changed.field.amplitude is None
    assert changed.realized_Mn == 50.0
    assert tiny.realized_Mn == tiny.field.Mn


def test_axis_values() -> None:
    axis = SweepAxis(name=SweepParameter.MN, start=0.0, stop=500.0, num=6)
    assert axis.values == [0.0, 100.0, 200.0, 300.0, 400.0, 500.0]
    assert SweepAxis(name=SweepParameter.FN, start=7.0).values == [7.0]
    explicit = SweepAxis(name=SweepParameter.FN, points=[30.0, 5.0])
    assert explicit.values == [30.0, 5.0]


@pytest.mark.parametrize("points", [[0.0, 1.0], [1.5], [2.0, 2.0]])
def test_invalid_cycle_axis(points: list[float]) -> None:
    with pytest.raises(ValidationError):
        SweepAxis(name=SweepParameter.CYCLE_INDEX, points=points)


def test_repeated_sweep_axis() -> None:
    with pytest.raises(ValidationError, match="Both"):
        tiny_config(sweep={"axis2": {"name": "Mn", "points": [1.0]}})


# Sweeps
def test_plan_is_row_major(tiny: RunConfig) -> None:
    section = tiny_config(
        sweep={
            "axis1": {"name": "Mn", "points": [0.0, 10.0, 20.0]},
            "axis2": {"name": "Fn", "points": [5.0, 30.0]},
        }
    ).sweep
    grid, jobs = plan(section)
    assert grid == [
        (0.0, 5.0),
        (0.0, 30.0),
        (10.0, 5.0),
        (10.0, 30.0),
        (20.0, 5.0),
        (20.0, 30.0),
    ]
    assert len(jobs) == 6
    assert [job.cells[0][0] for job in jobs] == list(range(6))
    assert all(job.n_cycles is None for job in jobs)


def test_plan_groups_cycles() -> None:
    section = tiny_config(
        sweep={
            "axis1": {"name": "tilt_roll", "points": [0.0, 45.0]},
            "axis2": {"name": "cycle_index", "points": [1, 2, 3]},
        }
    ).sweep
    grid, jobs = plan(section)
    assert len(grid) == 6
    assert len(jobs) == 2
    assert jobs[1].values == ((SweepParameter.TILT_ROLL, 45.0),)
    assert jobs[1].cells == ((3, 1), (4, 2), (5, 3))
    assert jobs[1].n_cycles == 3


def test_hash_ignores_workers(tiny: RunConfig) -> None:
    more = tiny_config(sweep={"workers": 8})
    assert config_hash(more) == config_hash(tiny)
    assert len(config_hash(tiny)) == 10
    assert config_hash(tiny_config(field={"Mn": 1.0})) != config_hash(tiny)


def test_provenance(tmp_path: Path) -> None:
    path = tmp_path / "table.csv"
    start_table(path, ["Mn", "Fn", "blpc"], "0123456789", "1.2.3")
    assert read_provenance(path) == {
        "config_hash": "0123456789",
        "code_version": "1.2.3",
    }
    lines = path.read_text().splitlines()
    assert lines[1].startswith("# created")
    assert lines[2] == "Mn,Fn,blpc"
    assert read_table(path).empty


SWEEP = {
    "sweep": {
        "axis1": {"name": "Mn", "points": [0.0, 1.0]},
        "axis2": {"name": "Fn", "points": [5.0, 10.0]},
    },
}


@pytest.mark.asyncio
async def test_sweep_is_reproducible(tmp_path: Path) -> None:
    config = tiny_config(**SWEEP)
    serial = await sweep(config, tmp_path / "serial.csv", workers=1)
    parallel = await sweep(config, tmp_path / "parallel.csv", workers=2)

    assert list(serial.columns) == [
        "Mn",
        "Fn",
        "blpc",
        "regime",
        "cycles_to_steady",
        "Qtotal",
        "realized_Mn",
    ]
    assert list(serial["realized_Mn"]) == list(serial["Mn"])
    assert list(zip(serial["Mn"], serial["Fn"])) == [
        (0.0, 5.0),
        (0.0, 10.0),
        (1.0, 5.0),
        (1.0, 10.0),
    ]
    pd.testing.assert_frame_equal(serial, parallel)
    assert set(serial["regime"][:2]) == {"Floppy"}
    assert (tmp_path / "serial.svg").is_file()

    grid = sweep_grid(serial, "Mn", "Fn")
    assert grid.shape == (2, 2)

    provenance = read_provenance(tmp_path / "serial.csv")
    assert provenance["config_hash"] == config_hash(config)


@pytest.mark.asyncio
async def test_sweep_resume(tmp_path: Path) -> None:
    config = tiny_config(**SWEEP)
    path = tmp_path / "sweep.csv"
    first = await sweep(config, path, workers=1)
    again = await sweep(config, path, workers=2, resume=True)
    pd.testing.assert_frame_equal(first, again)

    other = tiny_config(**merge(SWEEP, {"field": {"frequency": 4.0}}))
    with pytest.raises(ResumeMismatchError):
        await sweep(other, path, resume=True)


@pytest.mark.asyncio
async def test_stability_battery(tmp_path: Path) -> None:
    config = tiny_config(field={"Mn": 0.0})
    frame = await stability(
        config, tmp_path / "stability.csv", angles=[0.0, 45.0], cycles=2
    )
    assert list(frame.columns[:2]) == ["tilt_roll", "cycle_index"]
    assert len(frame) == 4
    assert list(frame["cycle_index"]) == [1, 2, 1, 2]
    assert np.allclose(frame["blpc"], 0.0, atol=1e-9)


# Output
def heatmap_frame() -> pd.DataFrame:
    return pd.DataFrame({
        "Mn": [0.0, 0.0, 100.0, 100.0],
        "Fn": [5.0, 10.0, 5.0, 10.0],
        "blpc": [0.0, 0.0, 0.12, math.nan],
        "regime": ["Floppy", "Floppy", "OK", "NotConverged"],
    })


def test_heatmap(tmp_path: Path) -> None:
    first, second = tmp_path / "a.svg", tmp_path / "b.svg"
    heatmap_svg(heatmap_frame(), x="Fn", y="Mn", path=first)
    heatmap_svg(heatmap_frame(), x="Fn", y="Mn", path=second)

    svg = first.read_text()
    for i in range(2):
        for j in range(2):
            assert f'id="cell-{i}-{j}"' in svg
    assert first.read_bytes() == second.read_bytes()


# Scenarios
def test_simulate(tmp_path: Path) -> None:
    summary = simulate(tiny_config(field={"Mn": 0.0}), tmp_path)
    assert summary.regime == "Floppy"
    assert summary.steady
    assert summary.blpc == pytest.approx(0.0, abs=1e-9)

    cycles = pd.read_csv(tmp_path / "cycles.csv")
    assert list(cycles["cycle"]) == list(range(1, summary.n_cycles + 1))
    trajectory = pd.read_csv(tmp_path / "trajectory.csv")
    assert trajectory["t"].is_monotonic_increasing
    saved = json.loads((tmp_path / "summary.json").read_text())
    assert saved["design"] == "CarangiformLike"


def test_snapshots_are_written(tmp_path: Path) -> None:
    config = tiny_config(field={"Mn": 0.0}, sim={"snapshots": True})
    summary = simulate(config, tmp_path)
    written = sorted((tmp_path / "snapshots").iterdir())
    assert len(written) == summary.n_cycles
    nodes, triangles = read_mesh(written[0])
    mesh = build_swimmer(config.design_spec())
    assert nodes.shape == mesh.nodes.shape
    assert np.array_equal(triangles, mesh.triangles)


def test_still_design_is_not_bidirectional(tmp_path: Path) -> None:
    config = tiny_config(
        field={"Mn": 0.0},
        scenario={
            "forward_cycles": 2,
            "reverse_cycles": 2,
            "reorient_cycles": 1.0,
        },
    )
    report = bidirectionality(config, tmp_path)
    assert [phase.name for phase in report.phases] == [
        "forward",
        "reversed",
        "reorientation",
        "mirrored",
    ]
    assert all(phase.sign == 0 for phase in report.phases)
    assert not report.bidirectional
    assert (tmp_path / "bidirectionality.json").is_file()


def test_flowfield(tmp_path: Path) -> None:
    config = tiny_config(
        field={"Mn": 0.0},
        flow={"samples_per_cycle": 4, "plane_resolution": 8, "resolution": 4},
    )
    frames, flowrates = flowfield(config, tmp_path)
    assert sorted(frames["frame"].unique()) == list(range(5))
    assert len(flowrates) == 5
    assert flowrates["t_over_T"].iloc[0] == 0.0
    assert flowrates["t_over_T"].iloc[-1] == pytest.approx(1.0)
    assert (frames["speed"] == 0.0).all()
    assert len(frames) < 5 * 8 * 8
    assert (tmp_path / "frames.csv").is_file()


def test_oracles(tmp_path: Path) -> None:
    report = validate(tmp_path, ["far_field", "nondim_round_trip"])
    assert report.summary() == {"far_field": True, "nondim_round_trip": True}
    assert (tmp_path / "validation.json").is_file()


@pytest.mark.slow
def test_full_validation() -> None:
    assert validate().passed


def test_export_mesh(tiny: RunConfig, tmp_path: Path) -> None:
    export_mesh(tiny, tmp_path)
    mesh = build_swimmer(tiny.design_spec())
    nodes, triangles = read_mesh(tmp_path / "mesh.txt")
    assert np.allclose(nodes, mesh.nodes)
    assert len(triangles) == mesh.n_elements
    table = pd.read_csv(tmp_path / "magnetization.csv")
    assert len(table) == mesh.n_elements
    assert table["active"].sum() == mesh.active.sum()


@pytest.mark.slow
def test_field_induced_reverses(tmp_path: Path) -> None:
    config = RunConfig.model_validate({
        "design": {"kind": "FieldInduced"},
        "field": {"Mn": 200.0},
    })
    assert bidirectionality(config, tmp_path).reverses_on_the_fly


@pytest.mark.slow
def test_drag_induced_keeps_direction(tmp_path: Path) -> None:
    config = RunConfig.model_validate({
        "design": {"kind": "DragInduced"},
        "field": {"Mn": 200.0},
    })
    assert not bidirectionality(config, tmp_path).reverses_on_the_fly


# Design comparison
def write_run(
    folder: Path, kind: DesignKind, peak: float, tilted: float, flips: bool
) -> Path:
    folder.mkdir()
    pd.DataFrame({
        "Mn": [0.0, 100.0, 100.0],
        "Fn": [5.0, 5.0, 30.0],
        "blpc": [0.0, peak, 2 * peak],
        "regime": ["Floppy", "OK", "SelfContact"],
    }).to_csv(folder / "sweep.csv", index=False)
    report = BidirectionalityReport(
        design=kind,
        phases=[],
        reverses_on_the_fly=flips,
        reverses_after_reorientation=None,
        bidirectional=flips,
    )
    (folder / "bidirectionality.json").write_text(report.model_dump_json())
    pd.DataFrame({
        "tilt_roll": [0.0, 0.0, 60.0, 60.0],
        "cycle_index": [1, 2, 1, 2],
        "blpc": [0.05, 0.1, 0.02, tilted],
        "regime": ["OK"] * 4,
    }).to_csv(folder / "stability.csv", index=False)
    return folder


def test_stability_table() -> None:
    frame = pd.DataFrame({
        "tilt_pitch": [0.0, 30.0, 90.0],
        "cycle_index": [5, 5, 5],
        "blpc": [0.1, 0.085, 0.1],
        "regime": ["OK", "OK", "Coiling"],
    })
    table = stability_table(frame)
    assert list(table["angle"]) == [0.0, 30.0, 90.0]
    assert set(table["axis"]) == {"pitch"}
    assert list(table["holds"]) == [True, True, False]
    assert table["deviation"][1] == pytest.approx(0.15)


def test_stability_table_needs_untilted_run() -> None:
    frame = pd.DataFrame({
        "tilt_yaw": [30.0],
        "cycle_index": [1],
        "blpc": [0.1],
        "regime": ["OK"],
    })
    with pytest.raises(ValueError, match="0 degree"):
        stability_table(frame)


def test_compare(tmp_path: Path) -> None:
    runs = [
        write_run(tmp_path / "a", DesignKind.CARANGIFORM, 0.12, 0.09, False),
        write_run(tmp_path / "b", DesignKind.FIELD_INDUCED, -0.05, 0.02, True),
    ]
    table = compare(runs, tmp_path)
    assert list(table.columns) == COMPARE_COLUMNS
    assert list(table["design"]) == ["CarangiformLike", "FieldInduced"]
    assert list(table["peak_blpc"]) == [0.12, -0.05]
    assert table["peak_at"][0] == "Mn=100;Fn=5"
    assert list(table["bidirectional"]) == [False, True]
    assert list(table["stable"]) == [True, False]
    assert list(table["weak_axes"]) == ["", "roll"]
    assert table["worst_deviation"][0] == pytest.approx(0.1)
    assert read_table(tmp_path / "compare.csv")["design"][1] == "FieldInduced"


def test_compare_partial_run(tmp_path: Path) -> None:
    run = write_run(tmp_path / "run", DesignKind.DRAG_INDUCED, 0.1, 0.1, False)
    (run / "bidirectionality.json").unlink()
    (run / "stability.csv").unlink()
    row = compare([run]).iloc[0]
    assert row["design"] == "run"
    assert row["peak_blpc"] == 0.1
    assert pd.isna(row["bidirectional"])
    assert pd.isna(row["stable"])


def test_compare_missing_folder(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError, match="No run folder"):
        compare([tmp_path / "absent"])


# Command line
def test_cli_oracle() -> None:
    result = runner.invoke(app, ["validate", "--oracle", "far_field"])
    assert result.exit_code == 0


def test_cli_unknown_oracle() -> None:
    result = runner.invoke(app, ["validate", "--oracle", "bogus"])
    assert result.exit_code == CONFIG_ERROR


def test_cli_rejects_coarse_time_step(tmp_path: Path) -> None:
    path = tmp_path / "coarse.toml"
    path.write_text(toml.dumps(merge(TINY, {"sim": {"dt": 1e-2}})))
    result = runner.invoke(app, ["mesh", "-c", str(path), "-o", "out"])
    assert result.exit_code == CONFIG_ERROR


def test_cli_mesh(tmp_path: Path) -> None:
    path = tmp_path / "tiny.toml"
    path.write_text(toml.dumps(TINY))
    out = tmp_path / "out"
    result = runner.invoke(app, ["mesh", "-c", str(path), "-o", str(out)])
    assert result.exit_code == 0
    assert (out / "mesh.txt").is_file()


def test_cli_compare(tmp_path: Path) -> None:
    run = write_run(tmp_path / "run", DesignKind.CARANGIFORM, 0.1, 0.1, True)
    out = tmp_path / "out"
    result = runner.invoke(app, ["compare", str(run), "-o", str(out)])
    assert result.exit_code == 0
    assert read_table(out / "compare.csv")["bidirectional"][0]
