from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.geometry.model import TiltSpec

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from soft_swim.core.elastica.model import MaterialParams
    from soft_swim.core.geometry.model import SwimmerDesign
    from soft_swim.core.hydrodynamics.model import FluidParams
    from soft_swim.core.magnetics.model import FieldProgram

# Time resolution floor: dt <= T / MIN_STEPS_PER_CYCLE
MIN_STEPS_PER_CYCLE = 500
FLOPPY_BLPC = 0.005
FLOPPY_MIN_CYCLES = 5
COILING_TWIST = 2.0 * math.pi


class Regime(str, Enum):
    OK = "OK"
    SELF_CONTACT = "SelfContact"
    COILING = "Coiling"
    FLOPPY = "Floppy"
    NOT_CONVERGED = "NotConverged"


@dataclass(frozen=True)
class ProbeSpec:
    """Uniform probe box around the center of mass.

    Attributes:
        box_factor: Box side in characteristic lengths.
        resolution: Probes per box side.
        exclusion_factor: Probes closer than this many regularization
            radii to the body are discarded.
    """

    box_factor: float = 2.0
    resolution: int = 16
    exclusion_factor: float = 2.0


@dataclass(frozen=True)
class SimConfig:
    """Complete, deterministic description of one run.

    Attributes:
        design: Swimmer planform and magnetization layout.
        material: Elastic parameters.
        fluid: Viscosity and regularization radius.
        field: Actuation program.
        dt: Outer time step [s], rounded down to a whole number of steps
            per field period.
        n_cycles_max: Cycle cap.
        tilt: Initial rigid tilt of the swimmer.
        n_cycles_min: Cycles run before steady state may be declared.
        stop_at_steady: Whether to stop once swimming is steady.
        steady_tolerance: Relative change of consecutive cycle
            displacements below which swimming is steady.
        mobility_refresh: Outer steps sharing one mobility operator, 1
            rebuilds it from the current nodes at every step.
        max_substep_level: Deepest halving level of the outer step.
        displacement_limit: Largest nodal displacement per substep in
            mean edge lengths.
        samples_per_cycle: Recorded samples per cycle.
        contact_every: Outer steps between self-contact checks.
        probes: Probe box for flowrates, None to skip them.
        snapshots: Whether to keep the mesh at every cycle end.
        mobility_cap: Largest number of collocation points.
    """

    design: SwimmerDesign
    material: MaterialParams
    fluid: FluidParams
    field: FieldProgram
    dt: float
    n_cycles_max: int = 50
    tilt: TiltSpec = field(default_factory=TiltSpec)
    n_cycles_min: int = 2
    stop_at_steady: bool = True
    steady_tolerance: float = 0.01
    mobility_refresh: int = 1
    max_substep_level: int = 10
    displacement_limit: float = 0.1
    samples_per_cycle: int = 20
    contact_every: int = 10
    probes: ProbeSpec | None = None
    snapshots: bool = False
    mobility_cap: int = 5000

    def __post_init__(self) -> None:
        period = self.field.period
        if not 0 < self.dt <= period / MIN_STEPS_PER_CYCLE:
            msg = (
                f"dt={self.dt:g} must lie in (0, T/{MIN_STEPS_PER_CYCLE}] "
                f"with T={period:g}"
            )
            raise ValueError(msg)
        if self.n_cycles_max < 2:
            msg = f"n_cycles_max={self.n_cycles_max} must be at least 2"
            raise ValueError(msg)
        if min(
            self.n_cycles_min,
            self.mobility_refresh,
            self.samples_per_cycle,
            self.contact_every,
        ) < 1:
            msg = f"Counters must be positive in {self}"
            raise ValueError(msg)

    @property
    def period(self) -> float:
        return self.field.period

    @property
    def characteristic_length(self) -> float:
        return self.design.characteristic_length


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    nodes: NDArray[np.float64]
    step: int = 0
    level: int = 0


@dataclass(frozen=True)
class FlowRates:
    """Normalized flowrates Q_k = <|u_k|> Lbar^2 / (Lbar^3 / T)."""

    Qx: float
    Qy: float
    Qz: float

    @property
    def Qtotal(self) -> float:
        return self.Qx + self.Qy + self.Qz

    @classmethod
    def zero(cls) -> FlowRates:
        return cls(0.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class Sample:
    """State recorded at a sampling instant.

    Attributes:
        t: Time since the run started [s].
        t_local: Field time of the segment the sample belongs to [s].
        com: Center of mass [m].
        nodes: Nodal positions [m].
        level: Substep level used by the preceding step.
        net_force: Norm of the summed non-hydrodynamic nodal forces [N].
        flow: Flowrates, if probes were requested.
    """

    t: float
    t_local: float
    com: NDArray[np.float64]
    nodes: NDArray[np.float64]
    level: int
    net_force: float
    flow: FlowRates | None = None


@dataclass(frozen=True)
class CycleDiagnostics:
    index: int
    displacement: NDArray[np.float64]
    blpc: float
    Qx: float = math.nan
    Qy: float = math.nan
    Qz: float = math.nan
    max_twist: float = 0.0
    min_self_distance: float = math.inf

    @property
    def Qtotal(self) -> float:
        return self.Qx + self.Qy + self.Qz


@dataclass
class Trajectory:
    """Sampled history of a run with its per-cycle diagnostics."""

    characteristic_length: float
    period: float
    thickness: float
    actuated: bool
    samples: list[Sample] = field(default_factory=list)
    cycles: list[CycleDiagnostics] = field(default_factory=list)
    snapshots: list[NDArray[np.float64]] = field(default_factory=list)
    regime: Regime = Regime.OK
    steady_cycle: int | None = None
    min_self_distance: float = math.inf
    failure: str | None = None
    final_state: SimState | None = None

    @property
    def times(self) -> NDArray[np.float64]:
        return np.array([sample.t for sample in self.samples])

    @property
    def com(self) -> NDArray[np.float64]:
        return np.array([sample.com for sample in self.samples]).reshape(
            -1, 3
        )

    @property
    def blpc_per_cycle(self) -> NDArray[np.float64]:
        return np.array([c.blpc for c in self.cycles])

    @property
    def is_steady(self) -> bool:
        return self.steady_cycle is not None

    @property
    def cycles_to_steady(self) -> int | None:
        if self.steady_cycle is None:
            return None
        return self.steady_cycle + 1
