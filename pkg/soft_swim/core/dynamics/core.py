from __future__ import annotations

import math
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.dynamics.diagnostics import (
    centerline_twist,
    compute_flowrates,
    detect_regime,
    min_self_distance,
    steady_blpc,
)
from soft_swim.core.dynamics.model import (
    COILING_TWIST,
    FLOPPY_BLPC,
    FLOPPY_MIN_CYCLES,
    CycleDiagnostics,
    Regime,
    Sample,
    SimConfig,
    SimState,
    Trajectory,
)
from soft_swim.core.elastica.core import ShellEnergy
from soft_swim.core.geometry.core import apply_tilt, build_swimmer
from soft_swim.core.hydrodynamics.core import (
    build_mobility,
    velocities_from_forces,
)
from soft_swim.core.magnetics.core import MagneticBody, field_at
from soft_swim.utils.errors import (
    DegenerateTriangleError,
    SubstepUnderflowError,
)
from soft_swim.utils.logging import Logger

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from soft_swim.core.hydrodynamics.model import MobilityOperator
    from soft_swim.core.magnetics.model import FieldProgram

STABILITY_ITERATIONS = 30
# Cycle displacements below this fraction of Lbar count as standing still
NULL_DISPLACEMENT = 1e-6


class Simulation:
    """Inertialess swimmer: dx/dt = M(x) (f_elastic + f_magnetic)."""

    def __init__(self, config: SimConfig) -> None:
        """Builds the mesh and the force models of a run.

        Args:
            config: Run description.
        """
        self.config = config
        self.mesh = apply_tilt(build_swimmer(config.design), config.tilt)
        self.shell = ShellEnergy(self.mesh, config.material)
        self.body = MagneticBody(self.mesh)
        self.weights = self.mesh.node_weights

        self.steps_per_cycle = max(1, round(config.period / config.dt))
        self.dt = config.period / self.steps_per_cycle
        self.spacing = self.mesh.mean_edge_length
        self.limit = config.displacement_limit * self.spacing

        self._mobility: MobilityOperator | None = None
        self._mobility_epoch = -1
        self.base_level = self._stability_level()
        Logger.info(
            f"{config.design.kind.value}: {self.mesh.n_nodes} nodes, "
            f"{self.steps_per_cycle} steps per cycle, "
            f"base substep level {self.base_level}"
        )

    def __repr__(self) -> str:
        config = self.config
        return f"Simulation({config=})"

    def initial_state(self) -> SimState:
        return SimState(t=0.0, nodes=self.mesh.nodes.copy())

    def com(self, nodes: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.weights @ nodes

    def forces(
        self,
        nodes: NDArray[np.float64],
        program: FieldProgram,
        t_local: float,
    ) -> NDArray[np.float64]:
        """Non-hydrodynamic nodal forces, i.e. the forces on the fluid."""
        B = field_at(program, t_local)
        return self.shell.forces(nodes) + self.body.load(nodes, B).forces

    def mobility(self, nodes: NDArray[np.float64]) -> MobilityOperator:
        return build_mobility(
            nodes, self.config.fluid, cap=self.config.mobility_cap
        )

    def _stability_level(self) -> int:
        """Halving level keeping explicit steps inside the stable range.

        The largest rate of the linearized system M K is estimated by
        power iteration, K applied by central differences of the forces.
        """
        nodes = self.mesh.nodes
        op = self.mobility(nodes)
        delta = 1e-6 * self.spacing
        vector = np.random.default_rng(0).standard_normal(nodes.shape)
        vector /= np.linalg.norm(vector)

        rate = 0.0
        for _ in range(STABILITY_ITERATIONS):
            stiffness = (
                self.shell.forces(nodes - delta * vector)
                - self.shell.forces(nodes + delta * vector)
            ) / (2.0 * delta)
            image = op.apply(stiffness)
            if (rate := float(np.linalg.norm(image))) == 0.0:
                return 0
            vector = image / rate

        return max(0, math.ceil(math.log2(self.dt * rate)))

    def _operator(self, state: SimState) -> MobilityOperator:
        epoch = state.step // self.config.mobility_refresh
        if self._mobility is None or epoch != self._mobility_epoch:
            self._mobility = self.mobility(state.nodes)
            self._mobility_epoch = epoch
        return self._mobility

    def _advance(
        self,
        nodes: NDArray[np.float64],
        op: MobilityOperator,
        program: FieldProgram,
        t_local: float,
        level: int,
    ) -> NDArray[np.float64] | None:
        """Substeps of dt / 2^level, None once a substep moves too far."""
        n_substeps = 2**level
        dt = self.dt / n_substeps
        for substep in range(n_substeps):
            forces = self.forces(nodes, program, t_local + substep * dt)
            displacement = dt * velocities_from_forces(op, forces)
            if np.linalg.norm(displacement, axis=1).max() > self.limit:
                return None
            nodes = nodes + displacement
        return nodes

    def step(
        self, state: SimState, program: FieldProgram, t_local: float
    ) -> SimState:
        """Advances one outer step, halving substeps on large displacements.

        Raises:
            SubstepUnderflowError: If the deepest level still moves too far.
            DegenerateTriangleError: If an element collapsed.
        """
        op = self._operator(state)
        level = self.base_level
        while (
            nodes := self._advance(state.nodes, op, program, t_local, level)
        ) is None:
            level += 1
            if level > self.config.max_substep_level:
                msg = (
                    f"Substep dt/2^{level} needed at t={state.t:.6g} s, "
                    f"beyond dt/2^{self.config.max_substep_level}"
                )
                Logger.warning(msg)
                raise SubstepUnderflowError(msg)
        return SimState(
            t=state.t + self.dt, nodes=nodes, step=state.step + 1, level=level
        )

    def _sample(
        self,
        state: SimState,
        program: FieldProgram,
        t_local: float,
        flows: bool,
    ) -> Sample:
        forces = self.forces(state.nodes, program, t_local)
        com = self.com(state.nodes)
        flow = None
        if flows and self.config.probes is not None:
            flow = compute_flowrates(
                state.nodes,
                forces,
                self.config.fluid,
                self.mesh.characteristic_length,
                program.period,
                self.config.probes,
                center=com,
            )
        return Sample(
            t=state.t,
            t_local=t_local,
            com=com,
            nodes=state.nodes,
            level=state.level,
            net_force=float(np.linalg.norm(forces.sum(axis=0))),
            flow=flow,
        )

    def _sample_steps(self, samples_per_cycle: int) -> set[int]:
        """Steps of a cycle (1-based) after which a sample is taken."""
        n = self.steps_per_cycle
        count = min(samples_per_cycle, n)
        return {round(k * n / count) for k in range(1, count + 1)}

    def _cycle(
        self,
        index: int,
        start: NDArray[np.float64],
        nodes: NDArray[np.float64],
        samples: list[Sample],
        twist: float,
        distance: float,
    ) -> CycleDiagnostics:
        displacement = self.com(nodes) - start
        Lbar = self.mesh.characteristic_length
        Q = np.full(3, math.nan)
        if flows := [sample.flow for sample in samples if sample.flow]:
            Q = np.mean([[f.Qx, f.Qy, f.Qz] for f in flows], axis=0)
        return CycleDiagnostics(
            index=index,
            displacement=displacement,
            blpc=float(displacement[0] / Lbar),
            Qx=float(Q[0]),
            Qy=float(Q[1]),
            Qz=float(Q[2]),
            max_twist=twist,
            min_self_distance=distance,
        )

    def _is_steady(self, cycles: list[CycleDiagnostics]) -> bool:
        if len(cycles) < max(2, self.config.n_cycles_min):
            return False
        current = cycles[-1].displacement
        previous = cycles[-2].displacement
        floor = NULL_DISPLACEMENT * self.mesh.characteristic_length
        if max(np.linalg.norm(current), np.linalg.norm(previous)) < floor:
            return True
        change = np.linalg.norm(current - previous)
        return bool(
            change < self.config.steady_tolerance * np.linalg.norm(current)
        )

    @Logger.func()
    def run_segment(
        self,
        state: SimState,
        n_cycles: int,
        program: FieldProgram | None = None,
        stop_at_steady: bool | None = None,
        samples_per_cycle: int | None = None,
        flows: bool = True,
    ) -> Trajectory:
        """Integrates whole cycles of a field program from a given state.

        The field clock restarts at zero for the segment. Physics failures
        end the segment and are reported through the regime flag.

        Args:
            state: State to continue from.
            n_cycles: Cycle cap of the segment.
            program: Field program, the configured one by default.
            stop_at_steady: Whether to stop at steady swimming.
            samples_per_cycle: Samples per cycle, configured by default.
            flows: Whether samples carry flowrates.

        Returns:
            Trajectory whose final_state continues the run.
        """
        config = self.config
        program = program or config.field
        if stop_at_steady is None:
            stop_at_steady = config.stop_at_steady
        sample_steps = self._sample_steps(
            samples_per_cycle or config.samples_per_cycle
        )
        h = self.mesh.thickness

        traj = Trajectory(
            characteristic_length=self.mesh.characteristic_length,
            period=program.period,
            thickness=h,
            actuated=not program.is_null and bool(self.body.elements.size),
        )
        traj.samples.append(self._sample(state, program, 0.0, flows))
        traj.min_self_distance = min_self_distance(self.mesh, state.nodes)

        try:
            for index in range(n_cycles):
                start = self.com(state.nodes)
                first_sample = len(traj.samples)
                distance = math.inf
                for s in range(self.steps_per_cycle):
                    t_local = (index * self.steps_per_cycle + s) * self.dt
                    state = self.step(state, program, t_local)
                    if (s + 1) in sample_steps:
                        traj.samples.append(
                            self._sample(
                                state, program, t_local + self.dt, flows
                            )
                        )
                    if (s + 1) % config.contact_every == 0:
                        distance = min(
                            distance, min_self_distance(self.mesh, state.nodes)
                        )
                        if distance < h:
                            break
                traj.min_self_distance = min(traj.min_self_distance, distance)
                if distance < h:
                    Logger.warning(f"Self-contact in cycle {index}")
                    break

                twist = centerline_twist(self.mesh, state.nodes)
                cycle = self._cycle(
                    index,
                    start,
                    state.nodes,
                    traj.samples[first_sample:],
                    twist,
                    distance,
                )
                traj.cycles.append(cycle)
                if config.snapshots:
                    traj.snapshots.append(state.nodes.copy())
                Logger.debug(f"Cycle {index}: blpc={cycle.blpc:.5f}")

                if abs(twist) > COILING_TWIST:
                    Logger.warning(f"Coiling in cycle {index}")
                    break

                if self._is_steady(traj.cycles):
                    if traj.steady_cycle is None:
                        traj.steady_cycle = index
                    floppy_pending = (
                        traj.actuated
                        and abs(steady_blpc(traj)) < FLOPPY_BLPC
                        and len(traj.cycles) < FLOPPY_MIN_CYCLES
                    )
                    if stop_at_steady and not floppy_pending:
                        break
                else:
                    traj.steady_cycle = None
        except (SubstepUnderflowError, DegenerateTriangleError) as error:
            traj.failure = str(error)

        traj.final_state = state
        traj.regime = detect_regime(traj)
        if traj.regime is not Regime.OK:
            Logger.info(f"Run ended in regime {traj.regime.value}")
        return traj

    def run(self) -> Trajectory:
        return self.run_segment(self.initial_state(), self.config.n_cycles_max)


@lru_cache(maxsize=4)
def simulation(config: SimConfig) -> Simulation:
    return Simulation(config)


def step(state: SimState, config: SimConfig) -> SimState:
    """One outer step of the configured field program at time state.t."""
    return simulation(config).step(state, config.field, state.t)


def run(config: SimConfig) -> Trajectory:
    """Integrates until steady swimming or the cycle cap."""
    return Simulation(config).run()
