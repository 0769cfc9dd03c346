from __future__ import annotations

import math
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.elastica.core import scatter
from soft_swim.core.magnetics.model import (
    FieldKind,
    FieldProgram,
    FieldStrength,
    MagneticLoad,
    PhysicalParams,
)
from soft_swim.utils.errors import UndefinedFieldError

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from soft_swim.core.geometry.model import SwimmerMesh


def _perpendicular(direction: NDArray[np.float64]) -> NDArray[np.float64]:
    """Unit vector in the plane of a direction and the z axis."""
    for axis in (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])):
        normal = axis - axis.dot(direction) * direction
        if (norm := np.linalg.norm(normal)) > 1e-12:
            return normal / norm
    raise AssertionError("unreachable")


def field_at(program: FieldProgram, t: float) -> NDArray[np.float64]:
    """Evaluates the uniform field at time t.

    Args:
        program: Field program.
        t: Time since the program started [s].

    Returns:
        B(t) [T].
    """
    B = program.amplitude
    phase = 2.0 * math.pi * program.frequency * t
    direction = np.asarray(program.direction)

    match program.kind:
        case FieldKind.ROTATING:
            angle = phase * program.sense
            value = B * np.array([0.0, math.cos(angle), math.sin(angle)])
        case FieldKind.OSCILLATING:
            swing = program.sense * math.sin(phase)
            alpha = math.radians(program.half_angle) * swing
            value = B * (
                math.cos(alpha) * direction
                + math.sin(alpha) * _perpendicular(direction)
            )
        case FieldKind.OSCILLATING_AXIAL:
            value = B * program.sense * math.sin(phase) * direction
        case FieldKind.REORIENT:
            from scipy.spatial.transform import Rotation

            progress = min(t / (program.sweep_cycles * program.period), 1.0)
            angle = math.radians(program.sweep_angle) * progress
            axis = np.asarray(program.sweep_axis)
            sweep = Rotation.from_rotvec(angle * axis)
            value = B * sweep.apply(direction)

    if not program.orientation.is_identity:
        value = program.orientation.rotation().apply(value)
    return value


def element_frames(
    nodes: NDArray[np.float64], triangles: NDArray[np.int64]
) -> NDArray[np.float64]:
    """Orthonormal element triads as matrix columns (edge, in-plane, normal).

    Returns:
        Frames (F, 3, 3).
    """
    x0, x1, x2 = (nodes[triangles[:, k]] for k in range(3))
    edge = x1 - x0
    t1 = edge / np.linalg.norm(edge, axis=1, keepdims=True)
    normal = np.cross(edge, x2 - x0)
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    t2 = np.cross(normal, t1)
    return np.stack([t1, t2, normal], axis=2)


def couple_to_forces(
    corners: NDArray[np.float64], couples: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Minimal-norm corner forces with zero sum and a prescribed moment.

    Forces f_k = a x r_k about the element centroid, where a solves
    sum_k (|r_k|^2 I - r_k r_k^T) a = couple.

    Args:
        corners: Corner positions (F, 3, 3).
        couples: Element couples (F, 3).

    Returns:
        Corner forces (F, 3, 3).
    """
    arms = corners - corners.mean(axis=1, keepdims=True)
    squared = np.einsum("fki,fki->f", arms, arms)
    inertia = squared[:, None, None] * np.eye(3) - np.einsum(
        "fki,fkj->fij", arms, arms
    )
    a = np.linalg.solve(inertia, couples[..., None])[..., 0]
    return np.cross(a[:, None, :], arms)


class MagneticBody:
    """Active elements of a mesh with their convected magnetization."""

    def __init__(self, mesh: SwimmerMesh) -> None:
        """Stores magnetization in the reference element frames.

        Args:
            mesh: Magnetized mesh.
        """
        self.mesh = mesh
        self.elements = np.flatnonzero(mesh.active)
        self.triangles = mesh.triangles[self.elements]
        frames = element_frames(mesh.reference_nodes, self.triangles)
        self.local_magnetization = np.einsum(
            "fji,fj->fi", frames, mesh.magnetization[self.elements]
        )
        self.volumes = mesh.reference_areas[self.elements] * mesh.thickness

    def magnetization(self, nodes: NDArray[np.float64]) -> NDArray[np.float64]:
        """Current magnetization of the active elements."""
        frames = element_frames(nodes, self.triangles)
        return np.einsum("fij,fj->fi", frames, self.local_magnetization)

    def load(
        self, nodes: NDArray[np.float64], B: NDArray[np.float64]
    ) -> MagneticLoad:
        forces = np.zeros((self.mesh.n_nodes, 3))
        couples = np.zeros((self.mesh.n_elements, 3))
        if not self.elements.size or not np.any(B):
            return MagneticLoad(forces, couples)

        active = np.cross(self.magnetization(nodes), B) * self.volumes[:, None]
        corner_forces = couple_to_forces(nodes[self.triangles], active)
        forces = scatter(
            self.triangles.ravel(),
            corner_forces.reshape(-1, 3),
            self.mesh.n_nodes,
        )
        couples[self.elements] = active
        return MagneticLoad(forces, couples)


@lru_cache(maxsize=8)
def magnetic_body(mesh: SwimmerMesh) -> MagneticBody:
    return MagneticBody(mesh)


def magnetic_load(
    mesh: SwimmerMesh,
    current_nodes: NDArray[np.float64],
    B: NDArray[np.float64],
) -> MagneticLoad:
    """Nodal forces equivalent to the magnetic body couples m x B V.

    Args:
        mesh: Magnetized mesh.
        current_nodes: Deformed positions (N, 3).
        B: Uniform field [T].

    Returns:
        Nodal forces (N, 3) and element couples (F, 3).
    """
    return magnetic_body(mesh).load(current_nodes, np.asarray(B, dtype=float))


def _check_anchors(fixed: PhysicalParams) -> None:
    anchors = {
        "youngs_modulus": fixed.youngs_modulus,
        "thickness": fixed.thickness,
        "characteristic_length": fixed.characteristic_length,
        "frequency": fixed.frequency,
    }
    if invalid := [name for name, value in anchors.items() if value <= 0]:
        msg = f"Non-positive non-dimensional anchors: {invalid}"
        raise ValueError(msg)


def nondim_to_physical(
    Mn: float, Fn: float, fixed: PhysicalParams
) -> FieldStrength:
    """Field amplitude and viscosity realizing (Mn, Fn).

    B = Mn E h^2 / (12 M Lbar L0) and mu = Fn E h^3 / (12 Lbar^3 f_m).

    Raises:
        UndefinedFieldError: If Mn > 0 with no magnetic length or
            magnetization.
    """
    _check_anchors(fixed)
    E, h = fixed.youngs_modulus, fixed.thickness
    Lbar = fixed.characteristic_length

    if Mn == 0:
        amplitude = 0.0
    elif fixed.magnetic_length <= 0 or fixed.magnetization <= 0:
        msg = (
            f"Mn={Mn} needs a magnetized segment, got L0="
            f"{fixed.magnetic_length} and M={fixed.magnetization}"
        )
        raise UndefinedFieldError(msg)
    else:
        M, L0 = fixed.magnetization, fixed.magnetic_length
        amplitude = Mn * E * h**2 / (12.0 * M * Lbar * L0)

    viscosity = Fn * E * h**3 / (12.0 * Lbar**3 * fixed.frequency)
    return FieldStrength(amplitude=amplitude, viscosity=viscosity)


def magnetoelastic_number(B: float, fixed: PhysicalParams) -> float:
    return (
        12.0
        * B
        * fixed.magnetization
        * fixed.characteristic_length
        * fixed.magnetic_length
        / (fixed.youngs_modulus * fixed.thickness**2)
    )


def fluid_number(viscosity: float, fixed: PhysicalParams) -> float:
    return (
        12.0
        * viscosity
        * fixed.characteristic_length**3
        * fixed.frequency
        / (fixed.youngs_modulus * fixed.thickness**3)
    )
