import math
from dataclasses import replace

import numpy as np
import pytest
from conftest import tiny_config
from scipy.spatial.distance import cdist

from soft_swim.core.dynamics.core import Simulation, step
from soft_swim.core.dynamics.diagnostics import (
    centerline_twist,
    compute_blpc,
    compute_flowrates,
    detect_regime,
    min_self_distance,
    steady_blpc,
    triangle_distances,
)
from soft_swim.core.dynamics.model import (
    CycleDiagnostics,
    ProbeSpec,
    Regime,
    SimConfig,
    Trajectory,
)
from soft_swim.core.geometry.model import SwimmerMesh, TiltSpec
from soft_swim.core.hydrodynamics.model import FluidParams
from soft_swim.harness.model import RunConfig
from soft_swim.utils.errors import EmptyProbeSetError, NotConvergedError

LBAR = 5e-3
PERIOD = 0.2


def sim_config(Mn: float, **sim: float) -> SimConfig:
    return tiny_config(field={"Mn": Mn}, sim=sim).to_sim_config()


def trajectory(
    blpcs: list[float],
    steady_cycle: int | None = None,
    actuated: bool = True,
    **changes: object,
) -> Trajectory:
    traj = Trajectory(
        characteristic_length=LBAR,
        period=PERIOD,
        thickness=1e-4,
        actuated=actuated,
        steady_cycle=steady_cycle,
    )
    traj.cycles = [
        CycleDiagnostics(
            index=index,
            displacement=np.array([blpc * LBAR, 0.0, 0.0]),
            blpc=blpc,
        )
        for index, blpc in enumerate(blpcs)
    ]
    for name, value in changes.items():
        setattr(traj, name, value)
    return traj


# Config
def test_time_step_floor() -> None:
    config = sim_config(0.0)
    with pytest.raises(ValueError, match="dt"):
        replace(config, dt=PERIOD / 400)


def test_cycle_cap() -> None:
    with pytest.raises(ValueError, match="n_cycles_max"):
        replace(sim_config(0.0), n_cycles_max=1)


# Stepping
def test_null_field_keeps_rest_state() -> None:
    config = sim_config(0.0)
    state = Simulation(config).initial_state()
    after = step(state, config)
    assert np.array_equal(after.nodes, state.nodes)
    assert after.t == pytest.approx(config.dt)
    assert after.step == 1


def test_internal_forces_balance() -> None:
    config = sim_config(200.0)
    simulation = Simulation(config)
    rng = np.random.default_rng(0)
    nodes = simulation.mesh.nodes + 1e-2 * simulation.spacing * (
        rng.standard_normal(simulation.mesh.nodes.shape)
    )
    forces = simulation.forces(nodes, config.field, 0.3 * PERIOD)
    scale = np.abs(forces).max() * simulation.mesh.n_nodes
    assert scale > 0
    assert np.abs(forces.sum(axis=0)).max() < 1e-10 * scale


def test_mobility_follows_every_step(
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    config = sim_config(200.0)
    assert config.mobility_refresh == 1
    simulation = Simulation(config)
    build = simulation.mobility
    built = []

    def counting(nodes: np.ndarray) -> object:
        built.append(nodes.copy())
        return build(nodes)

    monkeypatch.setattr(simulation, "mobility", counting)
    state = simulation.initial_state()
    starts = []
    for _ in range(3):
        starts.append(state.nodes.copy())
        state = simulation.step(state, config.field, state.t)
    assert len(built) == 3
    for used, start in zip(built, starts):
        assert np.array_equal(used, start)


def test_mobility_reuse_stays_close() -> None:
    fresh_config = sim_config(200.0)
    reuse_config = replace(fresh_config, mobility_refresh=4)
    moves = []
    for config in (fresh_config, reuse_config):
        simulation = Simulation(config)
        state = start = simulation.initial_state()
        for _ in range(8):
            state = simulation.step(state, config.field, state.t)
        moves.append(state.nodes - start.nodes)

    fresh, reuse = moves
    motion = np.abs(fresh).max()
    assert motion > 0
    assert np.abs(reuse - fresh).max() < 0.25 * motion


def test_steps_cover_whole_period() -> None:
    simulation = Simulation(sim_config(0.0, dt=1e-4))
    assert simulation.steps_per_cycle == 2000
    assert simulation.steps_per_cycle * simulation.dt == pytest.approx(PERIOD)


# Runs
def test_zero_actuation_stays_put() -> None:
    simulation = Simulation(sim_config(0.0))
    traj = simulation.run_segment(
        simulation.initial_state(), 5, stop_at_steady=False
    )
    assert len(traj.cycles) == 5
    drift = np.linalg.norm(traj.com - traj.com[0], axis=1).max()
    assert drift < 1e-6 * LBAR
    assert traj.regime is Regime.FLOPPY


def test_zero_actuation_run() -> None:
    traj = Simulation(sim_config(0.0)).run()
    assert traj.is_steady
    assert abs(compute_blpc(traj)) < 0.005
    assert traj.regime is Regime.FLOPPY


def test_actuated_run_is_deterministic() -> None:
    config = sim_config(200.0)
    first = Simulation(config).run()
    second = Simulation(config).run()

    assert np.all(np.diff(first.times) > 0)
    assert 1 <= len(first.cycles) <= config.n_cycles_max
    assert [c.index for c in first.cycles] == list(range(len(first.cycles)))
    assert first.regime in Regime
    assert np.array_equal(first.com, second.com)
    assert np.array_equal(first.blpc_per_cycle, second.blpc_per_cycle)


def test_samples_per_cycle() -> None:
    config = sim_config(0.0, samples_per_cycle=4)
    simulation = Simulation(config)
    traj = simulation.run_segment(
        simulation.initial_state(), 2, stop_at_steady=False
    )
    assert len(traj.samples) == 1 + 2 * 4
    assert traj.times[-1] == pytest.approx(2 * PERIOD)
    assert traj.final_state is not None
    assert traj.final_state.step == 2 * simulation.steps_per_cycle


def test_snapshots() -> None:
    config = replace(sim_config(0.0), snapshots=True)
    simulation = Simulation(config)
    traj = simulation.run_segment(
        simulation.initial_state(), 2, stop_at_steady=False
    )
    assert len(traj.snapshots) == 2
    assert traj.snapshots[0].shape == simulation.mesh.nodes.shape


def test_substep_underflow_is_not_converged() -> None:
    config = sim_config(
        200.0, displacement_limit=1e-9, max_substep_level=0
    )
    traj = Simulation(config).run()
    assert traj.failure is not None
    assert "Substep" in traj.failure
    assert traj.regime is Regime.NOT_CONVERGED
    assert traj.final_state is not None


# Diagnostics
def test_blpc_definition() -> None:
    traj = trajectory([0.05, 0.1, 0.1], steady_cycle=1)
    assert compute_blpc(traj) == pytest.approx(0.1)
    assert trajectory([0.0, 0.0], steady_cycle=1).cycles[0].blpc == 0.0


def test_blpc_needs_steady_state() -> None:
    traj = trajectory([0.05, 0.1])
    with pytest.raises(NotConvergedError):
        compute_blpc(traj)
    assert steady_blpc(traj) == pytest.approx(0.075)
    assert steady_blpc(trajectory([])) == 0.0


@pytest.mark.parametrize(
    ("traj", "regime"),
    [
        (trajectory([0.1, 0.1], steady_cycle=1), Regime.OK),
        (
            trajectory([0.1, 0.1], steady_cycle=1, min_self_distance=5e-5),
            Regime.SELF_CONTACT,
        ),
        (
            trajectory(
                [0.1, 0.1],
                min_self_distance=5e-5,
                failure="Substep",
            ),
            Regime.SELF_CONTACT,
        ),
        (trajectory([0.001] * 5, steady_cycle=3), Regime.FLOPPY),
        (trajectory([0.001] * 2, steady_cycle=1), Regime.OK),
        (trajectory([0.0, 0.0], actuated=False), Regime.FLOPPY),
        (trajectory([0.1, 0.2]), Regime.NOT_CONVERGED),
        (trajectory([0.1], failure="Substep"), Regime.NOT_CONVERGED),
    ],
)
def test_detect_regime(traj: Trajectory, regime: Regime) -> None:
    assert detect_regime(traj) is regime


def test_coiling_regime() -> None:
    traj = trajectory([0.1, 0.1], steady_cycle=1)
    traj.cycles[-1] = replace(traj.cycles[-1], max_twist=-7.0)
    assert detect_regime(traj) is Regime.COILING


def test_flat_mesh_is_contact_free(strip: SwimmerMesh) -> None:
    distance = min_self_distance(strip, strip.nodes)
    assert distance > 5 * strip.thickness
    traj = trajectory([0.1, 0.1], steady_cycle=1)
    traj.thickness = strip.thickness
    traj.min_self_distance = distance
    assert detect_regime(traj) is Regime.OK


def test_folded_mesh_self_contact(strip: SwimmerMesh) -> None:
    h = strip.thickness
    nodes = strip.nodes.copy()
    folded = nodes[:, 0] > 0
    nodes[folded, 0] *= -1
    nodes[folded, 2] = h / 2

    distance = min_self_distance(strip, nodes)
    assert distance == pytest.approx(h / 2)
    traj = trajectory([0.1, 0.1], steady_cycle=1)
    traj.thickness = h
    traj.min_self_distance = distance
    assert detect_regime(traj) is Regime.SELF_CONTACT


def test_staggered_fold_self_contact(strip: SwimmerMesh) -> None:
    h = strip.thickness
    nodes = strip.nodes.copy()
    folded = nodes[:, 0] > 0
    # Half a cell along x: no folded node sits above an unfolded one
    nodes[folded, 0] = -nodes[folded, 0] - 0.125
    nodes[folded, 2] = h / 2
    assert cdist(nodes[folded], nodes[~folded]).min() > h

    distance = min_self_distance(strip, nodes)
    assert distance == pytest.approx(h / 2)
    traj = trajectory([0.1, 0.1], steady_cycle=1)
    traj.thickness = h
    traj.min_self_distance = distance
    assert detect_regime(traj) is Regime.SELF_CONTACT


def corners(*points: tuple[float, float, float]) -> np.ndarray:
    return np.array([points], dtype=float)


@pytest.mark.parametrize(
    ("first", "second", "expected"),
    [
        # corner above the interior of the other triangle
        (
            corners((0, 0, 0), (1, 0, 0), (0, 1, 0)),
            corners((0.2, 0.2, 0.3), (2, 0.2, 0.3), (0.2, 2, 0.3)),
            0.3,
        ),
        # skew edges
        (
            corners((0, 0, 0), (1, 0, 0), (0.5, 0, -1)),
            corners((0.5, -0.5, 0.5), (0.5, 0.5, 0.5), (0.5, 0, 1.5)),
            0.5,
        ),
        # an edge piercing the other triangle
        (
            corners((0, 0, 0), (1, 0, 0), (0, 1, 0)),
            corners((0.25, 0.25, -1), (0.25, 0.25, 1), (3, 3, 0)),
            0.0,
        ),
    ],
)
def test_triangle_distances(
    first: np.ndarray, second: np.ndarray, expected: float
) -> None:
    forward = triangle_distances(first, second)
    backward = triangle_distances(second, first)
    assert forward[0] == pytest.approx(expected, abs=1e-12)
    assert backward[0] == pytest.approx(expected, abs=1e-12)


def test_flat_mesh_twist(strip: SwimmerMesh) -> None:
    assert centerline_twist(strip, strip.nodes) == pytest.approx(0.0)


def test_twisted_mesh(strip: SwimmerMesh) -> None:
    total = 1.5 * math.pi
    x, y, _ = strip.nodes.T
    angle = total * (x - x.min()) / (x.max() - x.min())
    nodes = np.column_stack([x, y * np.cos(angle), y * np.sin(angle)])
    assert centerline_twist(strip, nodes) == pytest.approx(total, rel=1e-9)


def test_zero_forces_zero_flow(strip: SwimmerMesh) -> None:
    fluid = FluidParams(1.0, 0.2)
    flow = compute_flowrates(
        strip.nodes,
        np.zeros_like(strip.nodes),
        fluid,
        strip.characteristic_length,
        PERIOD,
        ProbeSpec(resolution=6),
    )
    assert (flow.Qx, flow.Qy, flow.Qz, flow.Qtotal) == (0.0, 0.0, 0.0, 0.0)


def test_point_force_flow(strip: SwimmerMesh) -> None:
    forces = np.zeros_like(strip.nodes)
    forces[0] = (0.0, 0.0, 1.0)
    flow = compute_flowrates(
        strip.nodes,
        forces,
        FluidParams(1.0, 0.2),
        strip.characteristic_length,
        PERIOD,
        ProbeSpec(resolution=6),
    )
    assert flow.Qz > flow.Qx > 0
    assert flow.Qtotal == pytest.approx(flow.Qx + flow.Qy + flow.Qz)


def test_empty_probe_set(strip: SwimmerMesh) -> None:
    with pytest.raises(EmptyProbeSetError):
        compute_flowrates(
            strip.nodes,
            np.ones_like(strip.nodes),
            FluidParams(1.0, 0.2),
            strip.characteristic_length,
            PERIOD,
            ProbeSpec(resolution=4, exclusion_factor=1e6),
        )


# Acceptance runs at the default resolution
def steady_run(**sections: dict) -> Trajectory:
    return Simulation(RunConfig.model_validate(sections).to_sim_config()).run()


@pytest.mark.slow
def test_finger_shaped_reference_speed() -> None:
    traj = steady_run(
        design={"kind": "FingerShaped"},
        field={"Mn": 191.0},
        fluid={"Fn": 5.0},
    )
    assert traj.regime is Regime.OK
    assert 0.155 <= compute_blpc(traj) <= 0.465


@pytest.mark.slow
def test_fully_magnetized_carangiform_does_not_swim() -> None:
    traj = steady_run(
        design={"kind": "CarangiformLike", "L0_over_L": 1.0},
        field={"Mn": 200.0},
    )
    assert abs(steady_blpc(traj)) < 0.01


@pytest.mark.slow
def test_curling_anguilliform() -> None:
    traj = steady_run(
        design={"kind": "AnguilliformLike"},
        field={"Mn": 500.0},
        fluid={"Fn": 5.0},
    )
    assert traj.regime is Regime.SELF_CONTACT


@pytest.mark.slow
def test_time_step_convergence() -> None:
    coarse = steady_run(design={"kind": "CarangiformLike"})
    fine = steady_run(design={"kind": "CarangiformLike"}, sim={"dt": 5e-5})
    assert compute_blpc(fine) == pytest.approx(compute_blpc(coarse), rel=0.02)


@pytest.mark.slow
def test_rotation_equivariance() -> None:
    plain = sim_config(200.0)
    yaw = TiltSpec(yaw=90.0)
    turned = tiny_config(field={"Mn": 200.0}, tilt={"yaw": 90.0})
    turned = turned.to_sim_config(rotate_field=True)

    reference = Simulation(plain).run_segment(
        Simulation(plain).initial_state(), 2, stop_at_steady=False
    )
    rotated = Simulation(turned).run_segment(
        Simulation(turned).initial_state(), 2, stop_at_steady=False
    )
    expected = yaw.rotation().apply(reference.com - reference.com[0])
    actual = rotated.com - rotated.com[0]
    assert np.allclose(actual, expected, rtol=0, atol=1e-8 * LBAR * 2)
