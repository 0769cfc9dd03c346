from __future__ import annotations

import math
from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.dynamics.core import Simulation
from soft_swim.core.dynamics.diagnostics import compute_blpc, steady_blpc
from soft_swim.core.dynamics.model import FLOPPY_BLPC
from soft_swim.core.magnetics.model import FieldKind, FieldProgram
from soft_swim.harness.model import (
    BidirectionalityReport,
    OracleResult,
    PhaseReport,
    Plane,
    RunConfig,
    RunSummary,
    ValidationReport,
)
from soft_swim.harness.output import read_table, write_table
from soft_swim.utils.errors import NotConvergedError
from soft_swim.utils.logging import Logger
from soft_swim.utils.processing import (
    COMPARE_COLUMNS,
    cycles_frame,
    flowrate_frame,
    stability_table,
    sweep_peak,
    trajectory_frame,
)

if TYPE_CHECKING:
    from pathlib import Path

    import pandas as pd

    from soft_swim.core.dynamics.model import SimState, Trajectory

# Undulatory bodies are magnetized along the propulsion axis
PROPULSION_AXIS = (1.0, 0.0, 0.0)


def _write_json(
    path: Path, report: RunSummary | BidirectionalityReport
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2) + "\n")
    Logger.info(f"Wrote {path}")


@Logger.func()
def simulate(config: RunConfig, out: Path) -> RunSummary:
    """Runs one configuration and writes its trajectory and summary.

    Writes trajectory.csv, cycles.csv, summary.json and, when enabled,
    one mesh per completed cycle under snapshots/.
    """
    from soft_swim.core.geometry.io import write_mesh

    sim_config = config.to_sim_config()
    simulation = Simulation(sim_config)
    traj = simulation.run()

    write_table(out / "trajectory.csv", trajectory_frame(traj))
    write_table(out / "cycles.csv", cycles_frame(traj))
    if traj.snapshots:
        (folder := out / "snapshots").mkdir(parents=True, exist_ok=True)
        for index, nodes in enumerate(traj.snapshots, start=1):
            path = folder / f"cycle_{index:03d}.mesh"
            write_mesh(path, simulation.mesh, nodes)

    flows = [c.Qtotal for c in traj.cycles if math.isfinite(c.Qtotal)]
    summary = RunSummary(
        design=config.design.kind,
        regime=traj.regime.value,
        blpc=compute_blpc(traj) if traj.is_steady else None,
        final_blpc=steady_blpc(traj),
        steady=traj.is_steady,
        cycles_to_steady=traj.cycles_to_steady,
        n_cycles=len(traj.cycles),
        Mn=config.realized_Mn,
        Fn=config.fluid.Fn,
        amplitude=sim_config.field.amplitude,
        viscosity=sim_config.fluid.viscosity,
        mean_Qtotal=float(np.mean(flows)) if flows else None,
        failure=traj.failure,
    )
    _write_json(out / "summary.json", summary)
    return summary


def _sign(blpc: float) -> int:
    if abs(blpc) < FLOPPY_BLPC:
        return 0
    return 1 if blpc > 0 else -1


def _phase(name: str, program: FieldProgram, traj: Trajectory) -> PhaseReport:
    blpc = steady_blpc(traj)
    return PhaseReport(
        name=name,
        field=program.kind,
        cycles=len(traj.cycles),
        blpc=blpc,
        sign=_sign(blpc),  # pyright: ignore[reportArgumentType]
        regime=traj.regime.value,
    )


def _reverses(forward: PhaseReport, backward: PhaseReport) -> bool:
    return forward.sign != 0 and backward.sign == -forward.sign


def reversed_program(program: FieldProgram) -> FieldProgram:
    """Same field law with its rotation sense or oscillation phase flipped."""
    return replace(program, sense=-program.sense)


def reorientation_program(
    program: FieldProgram, sweep_cycles: float
) -> FieldProgram:
    """Field that turns the body half a turn about z, then holds."""
    return FieldProgram(
        kind=FieldKind.REORIENT,
        amplitude=program.amplitude,
        frequency=program.frequency,
        direction=PROPULSION_AXIS,
        sweep_axis=(0.0, 0.0, 1.0),
        sweep_angle=180.0,
        sweep_cycles=sweep_cycles,
        orientation=program.orientation,
    )


def mirrored_program(program: FieldProgram) -> FieldProgram:
    """Program turned half a turn about z."""
    x, y, z = program.direction
    return replace(program, direction=(-x, -y, z))


@Logger.func()
def bidirectionality(
    config: RunConfig, out: Path | None = None
) -> BidirectionalityReport:
    """Checks whether a design can swim backwards.

    The forward program is followed by its reversed twin (rotation sense
    or oscillation phase flipped). Undulatory designs additionally branch
    from the end of the forward phase into a field-guided half turn about
    z and the mirrored program.
    """
    scenario = config.scenario
    sim_config = config.to_sim_config(probes=False)
    simulation = Simulation(sim_config)
    program = sim_config.field

    def segment(
        state: SimState | None, n_cycles: int, field: FieldProgram
    ) -> Trajectory:
        assert state
        return simulation.run_segment(
            state,
            n_cycles,
            field,
            stop_at_steady=False,
            flows=False,
        )

    forward = segment(
        simulation.initial_state(), scenario.forward_cycles, program
    )
    phases = [_phase("forward", program, forward)]

    flipped = reversed_program(program)
    on_the_fly = segment(forward.final_state, scenario.reverse_cycles, flipped)
    phases.append(_phase("reversed", flipped, on_the_fly))
    reverses_on_the_fly = _reverses(phases[0], phases[1])

    reverses_after_reorientation = None
    if config.design.kind.is_undulatory:
        turn = reorientation_program(program, scenario.reorient_cycles)
        turned = segment(
            forward.final_state, math.ceil(scenario.reorient_cycles) + 1, turn
        )
        phases.append(_phase("reorientation", turn, turned))

        mirrored = mirrored_program(program)
        backward = segment(
            turned.final_state, scenario.reverse_cycles, mirrored
        )
        phases.append(_phase("mirrored", mirrored, backward))
        reverses_after_reorientation = _reverses(phases[0], phases[-1])

    report = BidirectionalityReport(
        design=config.design.kind,
        phases=phases,
        reverses_on_the_fly=reverses_on_the_fly,
        reverses_after_reorientation=reverses_after_reorientation,
        bidirectional=(
            reverses_on_the_fly or bool(reverses_after_reorientation)
        ),
    )
    if out is not None:
        _write_json(out / "bidirectionality.json", report)
    return report


def plane_probes(
    center: np.ndarray,
    plane: Plane,
    half: float,
    resolution: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Square probe grid through a center, with its in-plane offsets."""
    axis = np.linspace(-half, half, resolution)
    a, b = (g.ravel() for g in np.meshgrid(axis, axis, indexing="ij"))
    first, second = plane.axes
    probes = np.tile(np.asarray(center, dtype=float), (a.size, 1))
    probes[:, first] += a
    probes[:, second] += b
    return probes, a, b


@Logger.func()
def flowfield(
    config: RunConfig,
    out: Path | None = None,
    plane: Plane | None = None,
    resolution: int | None = None,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Flow speed on a plane and flowrate traces over one steady cycle.

    Returns:
        Frames (frame, t_over_T, a, b, speed) with in-plane offsets a, b
        from the center of mass, and flowrates (t_over_T, Qx, Qy, Qz,
        Qtotal) at samples_per_cycle + 1 instants spanning the cycle.

    Raises:
        NotConvergedError: If no steady cycle is reached.
    """
    import pandas as pd
    from scipy.spatial import cKDTree

    from soft_swim.core.hydrodynamics.core import flow_at_probes

    flow = config.flow
    plane = plane or flow.plane
    resolution = resolution or flow.plane_resolution

    sim_config = config.to_sim_config(probes=True)
    simulation = Simulation(sim_config)
    program = sim_config.field

    settle = simulation.run_segment(
        simulation.initial_state(),
        sim_config.n_cycles_max,
        stop_at_steady=True,
        flows=False,
    )
    if not settle.is_steady or settle.failure:
        msg = f"No steady cycle to sample, regime {settle.regime.value}"
        Logger.error(msg)
        raise NotConvergedError(msg)

    assert settle.final_state
    cycle = simulation.run_segment(
        settle.final_state,
        1,
        stop_at_steady=False,
        samples_per_cycle=flow.samples_per_cycle,
    )
    if cycle.failure:
        raise NotConvergedError(cycle.failure)

    half = 0.5 * flow.box_factor * simulation.mesh.characteristic_length
    exclusion = flow.exclusion_factor * sim_config.fluid.epsilon
    frames = []
    for index, sample in enumerate(cycle.samples):
        forces = simulation.forces(sample.nodes, program, sample.t_local)
        probes, a, b = plane_probes(sample.com, plane, half, resolution)
        distance, _ = cKDTree(sample.nodes).query(probes, k=1)
        keep = distance >= exclusion
        velocities = flow_at_probes(
            sample.nodes, forces, probes[keep], sim_config.fluid
        )
        speed = np.linalg.norm(velocities, axis=1)
        frames.append(
            pd.DataFrame({
                "frame": index,
                "t_over_T": sample.t_local / program.period,
                "a": a[keep],
                "b": b[keep],
                "speed": speed,
            })
        )

    frame_data = pd.concat(frames, ignore_index=True)
    flowrates = flowrate_frame(cycle)
    if out is not None:
        write_table(out / "frames.csv", frame_data)
        write_table(out / "flowrates.csv", flowrates)
    return frame_data, flowrates


def _sphere_drag() -> OracleResult:
    from soft_swim.core.geometry.core import build_sphere_shell
    from soft_swim.core.hydrodynamics.core import mean_spacing, rigid_drag
    from soft_swim.core.hydrodynamics.model import FluidParams

    mesh = build_sphere_shell(1.0, 642)
    fluid = FluidParams(viscosity=1.0, epsilon=0.75 * mean_spacing(mesh))
    force = rigid_drag(mesh.nodes, fluid, np.array([1.0, 0.0, 0.0]))
    return OracleResult.relative("sphere_drag", force[0], 6.0 * math.pi, 0.05)


def _elastic_gradient() -> OracleResult:
    from soft_swim.core.elastica.core import ShellEnergy
    from soft_swim.core.elastica.model import MaterialParams
    from soft_swim.core.geometry.core import build_swimmer
    from soft_swim.core.geometry.model import DesignKind, SwimmerDesign

    design = SwimmerDesign(
        kind=DesignKind.CARANGIFORM,
        length=2.0,
        width=1.0,
        thickness=0.05,
        L0_over_L=0.0,
        mesh_resolution=0.25,
    )
    mesh = build_swimmer(design)
    shell = ShellEnergy(mesh, MaterialParams(1.0, 0.05))
    rng = np.random.default_rng(0)
    nodes = mesh.nodes + 0.05 * rng.standard_normal(mesh.nodes.shape)

    step = 1e-6
    flat = nodes.ravel()
    numeric = np.empty_like(flat)
    for dof in range(flat.size):
        forward, backward = flat.copy(), flat.copy()
        forward[dof] += step
        backward[dof] -= step
        numeric[dof] = -(
            shell.evaluate(forward.reshape(-1, 3)).energy
            - shell.evaluate(backward.reshape(-1, 3)).energy
        ) / (2.0 * step)

    analytic = shell.forces(nodes).ravel()
    error = np.abs(analytic - numeric).max() / np.abs(analytic).max()
    return OracleResult(
        name="elastic_gradient",
        value=float(error),
        expected=0.0,
        tolerance=1e-4,
        passed=bool(error <= 1e-4),
    )


def _cantilever() -> OracleResult:
    from soft_swim.core.elastica.calibration import (
        beam_deflection,
        calibrate_bending_prefactor,
        cantilever_tip_deflection_check,
    )

    length, width, h, E = 10.0, 1.0, 0.1, 1.0
    factor = calibrate_bending_prefactor(length, width, h, E)
    inertia = width * h**3 / 12.0
    load = 0.02 * length * 3.0 * E * inertia / length**3
    deflection = cantilever_tip_deflection_check(
        length, width, h, E, load, bending_prefactor=factor
    )
    expected = beam_deflection(length, width, h, E, load)
    return OracleResult.relative("cantilever", deflection, expected, 0.05)


def _far_field() -> OracleResult:
    from soft_swim.core.hydrodynamics.core import stokeslet_regularized

    epsilon = 1e-3
    r = np.array([100.0 * epsilon, 0.0, 0.0])
    u = stokeslet_regularized(r, np.array([0.0, 1.0, 0.0]), 1.0, epsilon)
    expected = 1.0 / (8.0 * math.pi * np.linalg.norm(r))
    return OracleResult.relative("far_field", float(u[1]), expected, 0.01)


def _nondim_round_trip() -> OracleResult:
    from soft_swim.core.magnetics.core import (
        magnetoelastic_number,
        nondim_to_physical,
    )
    from soft_swim.core.magnetics.model import PhysicalParams

    fixed = PhysicalParams(1e5, 1e-4, 5e-3, 2.75e-3, 5e4, 5.0)
    strength = nondim_to_physical(191.0, 5.0, fixed)
    Mn = magnetoelastic_number(strength.amplitude, fixed)
    return OracleResult.relative("nondim_round_trip", Mn, 191.0, 1e-12)


ORACLES = {
    "sphere_drag": _sphere_drag,
    "elastic_gradient": _elastic_gradient,
    "cantilever": _cantilever,
    "far_field": _far_field,
    "nondim_round_trip": _nondim_round_trip,
}


@Logger.func()
def validate(
    out: Path | None = None, names: list[str] | None = None
) -> ValidationReport:
    """Runs the oracle suite, optionally restricted to some oracles."""
    results = []
    for name, oracle in ORACLES.items():
        if names and name not in names:
            continue
        result = oracle()
        level = Logger.info if result.passed else Logger.error
        level(
            f"{name}: {result.value:.6g} vs {result.expected:.6g} "
            f"({'pass' if result.passed else 'FAIL'})"
        )
        results.append(result)

    report = ValidationReport(oracles=results)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation.json").write_text(
            report.model_dump_json(indent=2) + "\n"
        )
    return report


def export_mesh(config: RunConfig, out: Path) -> None:
    """Writes the initial mesh and magnetization table of a design."""
    from soft_swim.core.geometry.core import apply_tilt, build_swimmer
    from soft_swim.core.geometry.io import write_magnetization, write_mesh

    mesh = apply_tilt(build_swimmer(config.design_spec()), config.tilt.spec())
    out.mkdir(parents=True, exist_ok=True)
    write_mesh(out / "mesh.txt", mesh)
    write_magnetization(out / "magnetization.csv", mesh)
    Logger.info(
        f"{config.design.kind.value}: {mesh.n_nodes} nodes, "
        f"{mesh.n_elements} elements, "
        f"active fraction {mesh.active_area_fraction:.3f}"
    )


def _compare_row(run: Path, tolerance: float) -> list:
    import pandas as pd

    design, peak_blpc, peak_at = run.name, None, None
    if (path := run / "sweep.csv").is_file():
        data = read_table(path)
        if (peak := sweep_peak(data)) is not None:
            peak_blpc = peak["blpc"]
            peak_at = ";".join(
                f"{axis}={peak[axis]:g}" for axis in data.columns[:2]
            )
    else:
        Logger.warning(f"{run}: no sweep.csv")

    reverses: list[bool | None] = [None, None, None]
    if (path := run / "bidirectionality.json").is_file():
        report = BidirectionalityReport.model_validate_json(path.read_text())
        design = report.design.value
        reverses = [
            report.reverses_on_the_fly,
            report.reverses_after_reorientation,
            report.bidirectional,
        ]
    else:
        Logger.warning(f"{run}: no bidirectionality.json")

    stable, weak_axes, worst = None, None, None
    if tables := [
        stability_table(read_table(path), tolerance)
        for path in sorted(run.glob("stability*.csv"))
    ]:
        angles = pd.concat(tables, ignore_index=True)
        stable = bool(angles["holds"].all())
        weak_axes = ";".join(sorted(set(angles["axis"][~angles["holds"]])))
        worst = angles["deviation"].max()
    else:
        Logger.warning(f"{run}: no stability*.csv")

    return [design, peak_blpc, peak_at, *reverses, stable, weak_axes, worst]


@Logger.func()
def compare(
    runs: list[Path], out: Path | None = None, tolerance: float = 0.2
) -> pd.DataFrame:
    """Tabulates the sweep, bidir and stability outputs of several designs.

    Every run folder holds the outputs of one design: sweep.csv,
    bidirectionality.json and any number of stability*.csv tables, one per
    tilt axis. Missing outputs leave their columns empty.
    """
    import pandas as pd

    rows = []
    for run in runs:
        if not run.is_dir():
            raise FileNotFoundError(f"No run folder {run}")
        rows.append(_compare_row(run, tolerance))

    frame = pd.DataFrame(rows, columns=COMPARE_COLUMNS)
    if out is not None:
        write_table(out / "compare.csv", frame)
    return frame
