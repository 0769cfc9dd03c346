from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.utils.errors import DimensionMismatchError, InvalidDesignError

if TYPE_CHECKING:
    from numpy.typing import NDArray

# Largest collocation set assembled densely
DEFAULT_MOBILITY_CAP = 5000


@dataclass(frozen=True)
class FluidParams:
    viscosity: float
    epsilon: float

    def __post_init__(self) -> None:
        if self.viscosity <= 0 or self.epsilon <= 0:
            msg = f"Viscosity and regularization must be positive: {self}"
            raise InvalidDesignError(msg)


@dataclass(frozen=True, eq=False)
class MobilityOperator:
    """Dense symmetric map from stacked point forces to point velocities."""

    points: NDArray[np.float64]
    matrix: NDArray[np.float64]
    fluid: FluidParams

    @property
    def n_points(self) -> int:
        return len(self.points)

    def apply(self, forces: NDArray[np.float64]) -> NDArray[np.float64]:
        forces = np.asarray(forces, dtype=float)
        if forces.size != 3 * self.n_points:
            msg = (
                f"{forces.shape} forces do not match a mobility over "
                f"{self.n_points} points"
            )
            raise DimensionMismatchError(msg)
        return (self.matrix @ forces.reshape(-1)).reshape(-1, 3)
