from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from soft_swim.core.geometry.model import TiltSpec
from soft_swim.utils.errors import InvalidDesignError

if TYPE_CHECKING:
    from numpy.typing import NDArray


class FieldKind(str, Enum):
    ROTATING = "RotatingAboutX"
    OSCILLATING = "OscillatingDirectional"
    # Field flipping along a fixed axis, without directionality
    OSCILLATING_AXIAL = "OscillatingAxial"
    # Constant magnitude, direction swept about an axis then held
    REORIENT = "Reorient"


@dataclass(frozen=True)
class FieldProgram:
    """Uniform external field B(t).

    Attributes:
        kind: Time law of the field.
        amplitude: Flux density magnitude B [T].
        frequency: Actuation frequency f_m [Hz].
        sense: Rotation sense of RotatingAboutX, sign of the oscillation
            phase of oscillating fields, +1 or -1.
        direction: Mean direction of oscillating fields, start direction
            of Reorient.
        half_angle: Oscillation half-angle of OscillatingDirectional [deg].
        sweep_axis: Rotation axis of Reorient.
        sweep_angle: Total angle swept by Reorient [deg].
        sweep_cycles: Duration of the Reorient sweep in periods.
        orientation: Rigid rotation applied on top of the field law.
    """

    kind: FieldKind
    amplitude: float
    frequency: float
    sense: int = 1
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    half_angle: float = 45.0
    sweep_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    sweep_angle: float = 180.0
    sweep_cycles: float = 2.0
    orientation: TiltSpec = field(default_factory=TiltSpec)

    def __post_init__(self) -> None:
        if self.amplitude < 0 or not math.isfinite(self.amplitude):
            msg = f"Field amplitude must be finite and >= 0: {self.amplitude}"
            raise InvalidDesignError(msg)
        if self.frequency <= 0:
            msg = f"Field frequency must be positive: {self.frequency}"
            raise InvalidDesignError(msg)
        if self.sense not in (1, -1):
            msg = f"Rotation sense must be +1 or -1: {self.sense}"
            raise InvalidDesignError(msg)
        if self.sweep_cycles <= 0:
            msg = f"Reorientation needs a positive duration: {self}"
            raise InvalidDesignError(msg)

        for name in ("direction", "sweep_axis"):
            vector = np.asarray(getattr(self, name), dtype=float)
            norm = np.linalg.norm(vector)
            if not norm > 0:
                msg = f"Field {name} must be a non-zero vector"
                raise InvalidDesignError(msg)
            object.__setattr__(self, name, tuple((vector / norm).tolist()))

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    @property
    def is_null(self) -> bool:
        return self.amplitude == 0.0


class MagneticLoad(NamedTuple):
    forces: NDArray[np.float64]
    couples: NDArray[np.float64]


@dataclass(frozen=True)
class PhysicalParams:
    """Anchors of the non-dimensional groups.

    Attributes:
        youngs_modulus: E [Pa].
        thickness: h [m].
        characteristic_length: sqrt(L W) [m].
        magnetic_length: L0 [m].
        magnetization: M [A/m].
        frequency: f_m [Hz].
    """

    youngs_modulus: float
    thickness: float
    characteristic_length: float
    magnetic_length: float
    magnetization: float
    frequency: float


class FieldStrength(NamedTuple):
    amplitude: float
    viscosity: float
