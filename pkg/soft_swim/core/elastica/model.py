from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.utils.errors import InvalidDesignError

if TYPE_CHECKING:
    from numpy.typing import NDArray


@dataclass(frozen=True)
class MaterialParams:
    youngs_modulus: float
    thickness: float
    bending_prefactor: float = 1.0
    stretch_prefactor: float = 1.0

    def __post_init__(self) -> None:
        if self.youngs_modulus <= 0 or self.thickness <= 0:
            msg = f"E and h must be positive in {self}"
            raise InvalidDesignError(msg)
        if self.bending_prefactor <= 0 or self.stretch_prefactor <= 0:
            msg = f"Stiffness prefactors must be positive in {self}"
            raise InvalidDesignError(msg)

    @property
    def bending_stiffness(self) -> float:
        """k_b = prefactor * E * h^3 / 12."""
        return (
            self.bending_prefactor * self.youngs_modulus * self.thickness**3
        ) / 12.0

    @property
    def membrane_stiffness(self) -> float:
        """Stretch prefactor * E * h."""
        return self.stretch_prefactor * self.youngs_modulus * self.thickness


@dataclass(frozen=True)
class ElasticForces:
    forces: NDArray[np.float64]
    stretch_energy: float
    bend_energy: float

    @property
    def energy(self) -> float:
        return self.stretch_energy + self.bend_energy
