from __future__ import annotations

import math
import os
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Literal

import toml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from soft_swim.core.dynamics.model import (
    MIN_STEPS_PER_CYCLE,
    ProbeSpec,
    SimConfig,
)
from soft_swim.core.geometry.model import (
    DESIGN_DEFAULTS,
    DesignKind,
    SwimmerDesign,
    TiltSpec,
)
from soft_swim.core.magnetics.model import (
    FieldKind,
    FieldProgram,
    FieldStrength,
    PhysicalParams,
)

CONFIG_PATH_ENV = "SOFTSWIM_CONFIG"


def config_path() -> Path:
    """Default configuration: $SOFTSWIM_CONFIG, ./config.toml, bundled."""
    if maybe_path := os.environ.get(CONFIG_PATH_ENV):
        return Path(maybe_path)
    if (local := Path("config.toml")).is_file():
        return local
    return Path(__file__).resolve().parents[2] / "config.toml"


config = toml.loads(config_path().read_text())


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_default=True)


class DesignSection(Section):
    kind: Annotated[
        DesignKind,
        Field(description="Swimmer family"),
    ] = config["design"]["kind"]
    characteristic_length: Annotated[
        float,
        Field(gt=0, description="Lbar = sqrt(L W) [m]"),
    ] = config["design"]["characteristic_length"]
    L_over_W: Annotated[
        float | None,
        Field(gt=0, description="Aspect ratio, family default if unset"),
    ] = config["design"].get("L_over_W")
    L0_over_L: Annotated[
        float | None,
        Field(
            ge=0, le=1, description="Magnetized fraction, family default"
        ),
    ] = config["design"].get("L0_over_L")
    mesh_resolution: Annotated[
        float | None,
        Field(gt=0, description="Mesh edge length [m], default if unset"),
    ] = config["design"].get("mesh_resolution")
    magnetization_turns: Annotated[
        float,
        Field(description="Magnetization turns along undulatory bodies"),
    ] = config["design"]["magnetization_turns"]

    @property
    def resolved_L_over_W(self) -> float:
        if self.L_over_W is None:
            return DESIGN_DEFAULTS[self.kind].L_over_W
        return self.L_over_W

    @property
    def resolved_L0_over_L(self) -> float:
        if self.L0_over_L is None:
            return DESIGN_DEFAULTS[self.kind].L0_over_L
        return self.L0_over_L


class MaterialSection(Section):
    youngs_modulus: Annotated[
        float,
        Field(gt=0, description="Young's modulus E [Pa]"),
    ] = config["material"]["youngs_modulus"]
    thickness: Annotated[
        float,
        Field(gt=0, description="Sheet thickness h [m]"),
    ] = config["material"]["thickness"]
    bending_prefactor: Annotated[
        float,
        Field(gt=0, description="Discrete bending stiffness prefactor"),
    ] = config["material"]["bending_prefactor"]
    stretch_prefactor: Annotated[
        float,
        Field(gt=0, description="Discrete stretching stiffness prefactor"),
    ] = config["material"]["stretch_prefactor"]
    calibrate_bending: Annotated[
        bool,
        Field(description="Replace bending_prefactor by the calibrated one"),
    ] = config["material"]["calibrate_bending"]


class MagnetSection(Section):
    magnetization: Annotated[
        float,
        Field(ge=0, description="Remnant magnetization M [A/m]"),
    ] = config["magnet"]["magnetization"]


class FieldSection(Section):
    kind: Annotated[
        FieldKind | None,
        Field(description="Field law, family default if unset"),
    ] = config["field"].get("kind")
    Mn: Annotated[
        float,
        Field(ge=0, description="Magneto-elastic number"),
    ] = config["field"]["Mn"]
    amplitude: Annotated[
        float | None,
        Field(ge=0, description="Field amplitude B [T], overrides Mn"),
    ] = config["field"].get("amplitude")
    frequency: Annotated[
        float,
        Field(gt=0, description="Actuation frequency f_m [Hz]"),
    ] = config["field"]["frequency"]
    sense: Annotated[
        Literal[1, -1],
        Field(description="Rotation sense of rotating fields"),
    ] = config["field"]["sense"]
    half_angle: Annotated[
        float,
        Field(gt=0, lt=90, description="Oscillation half-angle [deg]"),
    ] = config["field"]["half_angle"]
    direction: Annotated[
        tuple[float, float, float] | None,
        Field(description="Mean field direction, family default if unset"),
    ] = config["field"].get("direction")

    def program(
        self,
        design: DesignKind,
        amplitude: float,
        orientation: TiltSpec | None = None,
    ) -> FieldProgram:
        """Field program of a design family at a given amplitude."""
        match self.kind, design:
            case None, _ if design.is_helical:
                kind = FieldKind.ROTATING
            case None, DesignKind.ANGUILLIFORM:
                kind = FieldKind.OSCILLATING_AXIAL
            case None, _:
                kind = FieldKind.OSCILLATING
            case kind, _:
                pass

        direction = self.direction
        if direction is None:
            direction = (
                (0.0, 0.0, 1.0)
                if kind is FieldKind.OSCILLATING_AXIAL
                else (1.0, 0.0, 0.0)
            )
        return FieldProgram(
            kind=kind,
            amplitude=amplitude,
            frequency=self.frequency,
            sense=self.sense,
            direction=direction,
            half_angle=self.half_angle,
            orientation=orientation or TiltSpec(),
        )


class FluidSection(Section):
    Fn: Annotated[
        float,
        Field(gt=0, description="Fluid number"),
    ] = config["fluid"]["Fn"]
    epsilon_factor: Annotated[
        float,
        Field(gt=0, description="Regularization radius in mesh spacings"),
    ] = config["fluid"]["epsilon_factor"]


class SimSection(Section):
    dt: Annotated[
        float,
        Field(gt=0, description="Outer time step [s]"),
    ] = config["sim"]["dt"]
    n_cycles_max: Annotated[
        int,
        Field(ge=2, description="Cycle cap"),
    ] = config["sim"]["n_cycles_max"]
    n_cycles_min: Annotated[
        int,
        Field(ge=1, description="Cycles before steadiness is tested"),
    ] = config["sim"]["n_cycles_min"]
    stop_at_steady: Annotated[
        bool,
        Field(description="Stop once swimming is steady"),
    ] = config["sim"]["stop_at_steady"]
    steady_tolerance: Annotated[
        float,
        Field(gt=0, description="Relative steady-state tolerance"),
    ] = config["sim"]["steady_tolerance"]
    mobility_refresh: Annotated[
        int,
        Field(ge=1, description="Outer steps sharing one mobility operator"),
    ] = config["sim"]["mobility_refresh"]
    max_substep_level: Annotated[
        int,
        Field(ge=0, description="Deepest substep halving level"),
    ] = config["sim"]["max_substep_level"]
    displacement_limit: Annotated[
        float,
        Field(gt=0, description="Substep displacement cap in spacings"),
    ] = config["sim"]["displacement_limit"]
    samples_per_cycle: Annotated[
        int,
        Field(ge=1, description="Trajectory samples per cycle"),
    ] = config["sim"]["samples_per_cycle"]
    contact_every: Annotated[
        int,
        Field(ge=1, description="Outer steps between contact checks"),
    ] = config["sim"]["contact_every"]
    snapshots: Annotated[
        bool,
        Field(description="Write the mesh at every cycle end"),
    ] = config["sim"]["snapshots"]


class TiltSection(Section):
    roll: Annotated[
        float,
        Field(ge=0, le=90, description="Initial roll about x [deg]"),
    ] = config["tilt"]["roll"]
    pitch: Annotated[
        float,
        Field(ge=0, le=90, description="Initial pitch about y [deg]"),
    ] = config["tilt"]["pitch"]
    yaw: Annotated[
        float,
        Field(ge=0, le=90, description="Initial yaw about z [deg]"),
    ] = config["tilt"]["yaw"]

    def spec(self) -> TiltSpec:
        return TiltSpec(self.roll, self.pitch, self.yaw)


class Plane(str, Enum):
    XY = "xy"
    XZ = "xz"
    YZ = "yz"

    @property
    def axes(self) -> tuple[int, int]:
        first, second = self.value
        return "xyz".index(first), "xyz".index(second)

    @property
    def normal(self) -> int:
        return 3 - sum(self.axes)


class FlowSection(Section):
    enabled: Annotated[
        bool,
        Field(description="Sample flowrates during runs"),
    ] = config["flow"]["enabled"]
    box_factor: Annotated[
        float,
        Field(gt=0, description="Probe box side in Lbar"),
    ] = config["flow"]["box_factor"]
    resolution: Annotated[
        int,
        Field(ge=2, description="Probes per box side"),
    ] = config["flow"]["resolution"]
    exclusion_factor: Annotated[
        float,
        Field(ge=0, description="Probe exclusion radius in epsilon"),
    ] = config["flow"]["exclusion_factor"]
    samples_per_cycle: Annotated[
        int,
        Field(ge=2, description="Flow-field frames per cycle"),
    ] = config["flow"]["samples_per_cycle"]
    plane: Annotated[
        Plane,
        Field(description="Plane of the flow-field frames"),
    ] = config["flow"]["plane"]
    plane_resolution: Annotated[
        int,
        Field(ge=2, description="Frame grid points per side"),
    ] = config["flow"]["plane_resolution"]

    def spec(self) -> ProbeSpec:
        return ProbeSpec(
            box_factor=self.box_factor,
            resolution=self.resolution,
            exclusion_factor=self.exclusion_factor,
        )


class SweepParameter(str, Enum):
    MN = "Mn"
    FN = "Fn"
    L0_OVER_L = "L0_over_L"
    L_OVER_W = "L_over_W"
    TILT_ROLL = "tilt_roll"
    TILT_PITCH = "tilt_pitch"
    TILT_YAW = "tilt_yaw"
    CYCLE_INDEX = "cycle_index"


class SweepAxis(Section):
    name: Annotated[
        SweepParameter,
        Field(description="Swept parameter"),
    ]
    start: Annotated[float, Field(description="First value")] = 0.0
    stop: Annotated[float, Field(description="Last value")] = 0.0
    num: Annotated[int, Field(ge=1, description="Number of values")] = 1
    points: Annotated[
        list[float] | None,
        Field(min_length=1, description="Explicit values, override range"),
    ] = None

    @property
    def values(self) -> list[float]:
        if self.points is not None:
            return list(self.points)
        if self.num == 1:
            return [self.start]
        step = (self.stop - self.start) / (self.num - 1)
        return [self.start + i * step for i in range(self.num)]

    @model_validator(mode="after")
    def check_values(self) -> SweepAxis:
        values = self.values
        if self.name is SweepParameter.CYCLE_INDEX and not all(
            v >= 1 and float(v).is_integer() for v in values
        ):
            msg = f"cycle_index values must be integers >= 1: {values}"
            raise ValueError(msg)
        if len(set(values)) != len(values):
            msg = f"Repeated values along {self.name.value}: {values}"
            raise ValueError(msg)
        return self


class SweepSection(Section):
    axis1: Annotated[
        SweepAxis,
        Field(description="Row axis"),
    ] = SweepAxis.model_validate(config["sweep"]["axis1"])
    axis2: Annotated[
        SweepAxis,
        Field(description="Column axis"),
    ] = SweepAxis.model_validate(config["sweep"]["axis2"])
    workers: Annotated[
        int,
        Field(ge=1, description="Worker processes"),
    ] = config["sweep"]["workers"]

    @model_validator(mode="after")
    def check_axes(self) -> SweepSection:
        if self.axis1.name == self.axis2.name:
            msg = f"Both sweep axes vary {self.axis1.name.value}"
            raise ValueError(msg)
        return self


class TiltAxis(str, Enum):
    ROLL = "roll"
    PITCH = "pitch"
    YAW = "yaw"


class ScenarioSection(Section):
    forward_cycles: Annotated[
        int,
        Field(ge=2, description="Cycles of the forward program"),
    ] = config["scenario"]["forward_cycles"]
    reverse_cycles: Annotated[
        int,
        Field(ge=2, description="Cycles of the reversed program"),
    ] = config["scenario"]["reverse_cycles"]
    reorient_cycles: Annotated[
        float,
        Field(gt=0, description="Periods of the reorientation sweep"),
    ] = config["scenario"]["reorient_cycles"]
    stability_axis: Annotated[
        TiltAxis,
        Field(description="Tilt axis of the stability battery"),
    ] = config["scenario"]["stability_axis"]
    stability_angles: Annotated[
        list[float],
        Field(min_length=1, description="Tilt angles [deg]"),
    ] = config["scenario"]["stability_angles"]
    stability_cycles: Annotated[
        int,
        Field(ge=2, description="Cycles per tilt angle"),
    ] = config["scenario"]["stability_cycles"]


class RunConfig(Section):
    """A run, sweep or scenario file."""

    design: DesignSection = DesignSection()
    material: MaterialSection = MaterialSection()
    magnet: MagnetSection = MagnetSection()
    field: FieldSection = FieldSection()
    fluid: FluidSection = FluidSection()
    sim: SimSection = SimSection()
    tilt: TiltSection = TiltSection()
    flow: FlowSection = FlowSection()
    sweep: SweepSection = SweepSection()
    scenario: ScenarioSection = ScenarioSection()

    @model_validator(mode="after")
    def check_dt(self) -> RunConfig:
        floor = 1.0 / (self.field.frequency * MIN_STEPS_PER_CYCLE)
        if self.sim.dt > floor:
            msg = (
                f"sim.dt={self.sim.dt:g} exceeds T/{MIN_STEPS_PER_CYCLE}"
                f"={floor:g}"
            )
            raise ValueError(msg)
        return self

    @classmethod
    def load(cls, path: Path | None = None) -> RunConfig:
        if path is None:
            return cls()
        with path.open() as file:
            return cls.model_validate(toml.load(file))

    def with_value(self, parameter: SweepParameter, value: float) -> RunConfig:
        """Copy with one swept parameter replaced."""
        section, key = {
            SweepParameter.MN: ("field", "Mn"),
            SweepParameter.FN: ("fluid", "Fn"),
            SweepParameter.L0_OVER_L: ("design", "L0_over_L"),
            SweepParameter.L_OVER_W: ("design", "L_over_W"),
            SweepParameter.TILT_ROLL: ("tilt", "roll"),
            SweepParameter.TILT_PITCH: ("tilt", "pitch"),
            SweepParameter.TILT_YAW: ("tilt", "yaw"),
        }[parameter]
        data = self.model_dump()
        data[section][key] = value
        match parameter:
            case SweepParameter.MN:
                data["field"]["amplitude"] = None
            case SweepParameter.L0_OVER_L if self.field.amplitude is None:
                # B stays at its configured value, Mn follows L0
                data["field"]["amplitude"] = self.field_strength().amplitude
        return RunConfig.model_validate(data)

    def design_spec(self) -> SwimmerDesign:
        return SwimmerDesign.from_aspect(
            self.design.kind,
            self.design.resolved_L_over_W,
            self.design.characteristic_length,
            self.material.thickness,
            self.design.resolved_L0_over_L,
            mesh_resolution=self.design.mesh_resolution,
            magnetization=self.magnet.magnetization,
            magnetization_turns=self.design.magnetization_turns,
        )

    def anchors(self) -> PhysicalParams:
        """Physical anchors of Mn and Fn for this design."""
        design = self.design_spec()
        return PhysicalParams(
            youngs_modulus=self.material.youngs_modulus,
            thickness=self.material.thickness,
            characteristic_length=design.characteristic_length,
            magnetic_length=design.magnetic_length,
            magnetization=design.magnetization,
            frequency=self.field.frequency,
        )

    def field_strength(self) -> FieldStrength:
        """Field amplitude and viscosity, B from [field].amplitude if set."""
        from soft_swim.core.magnetics.core import nondim_to_physical

        amplitude = self.field.amplitude
        Mn = self.field.Mn if amplitude is None else 0.0
        strength = nondim_to_physical(Mn, self.fluid.Fn, self.anchors())
        if amplitude is not None:
            strength = strength._replace(amplitude=amplitude)
        return strength

    @property
    def realized_Mn(self) -> float:
        """Magneto-elastic number of the field actually applied."""
        from soft_swim.core.magnetics.core import magnetoelastic_number

        if self.field.amplitude is None:
            return self.field.Mn
        return magnetoelastic_number(self.field.amplitude, self.anchors())

    def to_sim_config(
        self, probes: bool | None = None, rotate_field: bool = False
    ) -> SimConfig:
        """Physical simulation parameters realizing this configuration.

        The tilt only turns the swimmer: a tilted body still meets the
        untilted field program.

        Args:
            probes: Whether flowrates are sampled, [flow].enabled if None.
            rotate_field: Turn the field program with the tilt as well, so
                that the whole problem is rigidly rotated.

        Returns:
            The simulation configuration.
        """
        from soft_swim.core.elastica.calibration import (
            calibrate_bending_prefactor,
        )
        from soft_swim.core.elastica.model import MaterialParams
        from soft_swim.core.geometry.core import build_swimmer
        from soft_swim.core.hydrodynamics.model import FluidParams

        design = self.design_spec()
        E, h = self.material.youngs_modulus, self.material.thickness
        strength = self.field_strength()

        bending = self.material.bending_prefactor
        if self.material.calibrate_bending:
            bending = calibrate_bending_prefactor()
        material = MaterialParams(
            E, h, bending, self.material.stretch_prefactor
        )

        spacing = build_swimmer(design).mean_edge_length
        fluid = FluidParams(
            strength.viscosity, self.fluid.epsilon_factor * spacing
        )

        tilt = self.tilt.spec()
        if probes is None:
            probes = self.flow.enabled
        return SimConfig(
            design=design,
            material=material,
            fluid=fluid,
            field=self.field.program(
                design.kind,
                strength.amplitude,
                tilt if rotate_field else None,
            ),
            dt=self.sim.dt,
            n_cycles_max=self.sim.n_cycles_max,
            tilt=tilt,
            n_cycles_min=self.sim.n_cycles_min,
            stop_at_steady=self.sim.stop_at_steady,
            steady_tolerance=self.sim.steady_tolerance,
            mobility_refresh=self.sim.mobility_refresh,
            max_substep_level=self.sim.max_substep_level,
            displacement_limit=self.sim.displacement_limit,
            samples_per_cycle=self.sim.samples_per_cycle,
            contact_every=self.sim.contact_every,
            probes=self.flow.spec() if probes else None,
            snapshots=self.sim.snapshots,
        )


# Reports
class RunSummary(BaseModel):
    design: DesignKind
    regime: str
    blpc: float | None
    final_blpc: float
    steady: bool
    cycles_to_steady: int | None
    n_cycles: int
    Mn: float
    Fn: float
    amplitude: Annotated[float, Field(description="Field amplitude [T]")]
    viscosity: Annotated[float, Field(description="Viscosity [Pa s]")]
    mean_Qtotal: float | None = None
    failure: str | None = None


class PhaseReport(BaseModel):
    name: str
    field: FieldKind
    cycles: int
    blpc: float
    sign: Literal[-1, 0, 1]
    regime: str


class BidirectionalityReport(BaseModel):
    design: DesignKind
    phases: list[PhaseReport]
    reverses_on_the_fly: bool
    reverses_after_reorientation: bool | None
    bidirectional: bool


class OracleResult(BaseModel):
    name: str
    value: float
    expected: float
    tolerance: float
    passed: bool

    @classmethod
    def relative(
        cls, name: str, value: float, expected: float, tolerance: float
    ) -> OracleResult:
        error = abs(value - expected) / abs(expected)
        passed = math.isfinite(error) and error <= tolerance
        return cls(
            name=name,
            value=value,
            expected=expected,
            tolerance=tolerance,
            passed=passed,
        )


class ValidationReport(BaseModel):
    oracles: list[OracleResult]

    @property
    def passed(self) -> bool:
        return all(oracle.passed for oracle in self.oracles)

    def summary(self) -> dict[str, Any]:
        return {oracle.name: oracle.passed for oracle in self.oracles}
