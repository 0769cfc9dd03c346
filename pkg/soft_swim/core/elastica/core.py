from __future__ import annotations

from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.elastica.model import ElasticForces, MaterialParams
from soft_swim.core.geometry.model import triangle_areas
from soft_swim.utils.errors import (
    DegenerateTriangleError,
    DimensionMismatchError,
)

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from soft_swim.core.geometry.model import SwimmerMesh

DEGENERATE_AREA_RATIO = 1e-6


def scatter(
    indices: NDArray[np.int64], vectors: NDArray[np.float64], n: int
) -> NDArray[np.float64]:
    """Sums per-entry 3-vectors into n nodes in a fixed order."""
    return np.stack(
        [
            np.bincount(indices, weights=vectors[:, k], minlength=n)
            for k in range(3)
        ],
        axis=1,
    )


def dihedral_angles(
    nodes: NDArray[np.float64], hinges: NDArray[np.int64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Signed hinge angles and their gradients.

    Args:
        nodes: Positions (N, 3).
        hinges: Hinges (H, 4) as built by SwimmerMesh.hinges.

    Returns:
        Angles (H,) in (-pi, pi], zero for a flat hinge, and their gradient
        with respect to the four hinge nodes (H, 4, 3).
    """
    x0, x1, x2, x3 = (nodes[hinges[:, k]] for k in range(4))
    e = x1 - x0
    e_sq = np.einsum("ij,ij->i", e, e)
    e_len = np.sqrt(e_sq)
    n1 = np.cross(e, x2 - x0)
    n2 = np.cross(x3 - x0, e)
    n1_sq = np.einsum("ij,ij->i", n1, n1)
    n2_sq = np.einsum("ij,ij->i", n2, n2)
    n1_hat = n1 / np.sqrt(n1_sq)[:, None]
    n2_hat = n2 / np.sqrt(n2_sq)[:, None]

    sine = np.einsum("ij,ij->i", np.cross(n1_hat, n2_hat), e / e_len[:, None])
    cosine = np.einsum("ij,ij->i", n1_hat, n2_hat)
    theta = np.arctan2(sine, cosine)

    # Apex gradients are -n_hat / (apex height)
    g2 = -n1 * (e_len / n1_sq)[:, None]
    g3 = -n2 * (e_len / n2_sq)[:, None]
    alpha = (np.einsum("ij,ij->i", x2 - x0, e) / e_sq)[:, None]
    beta = (np.einsum("ij,ij->i", x3 - x0, e) / e_sq)[:, None]
    g0 = -(1.0 - alpha) * g2 - (1.0 - beta) * g3
    g1 = -alpha * g2 - beta * g3
    return theta, np.stack([g0, g1, g2, g3], axis=1)


class ShellEnergy:
    """Discrete shell: edge springs plus dihedral hinges.

    U_stretch = sum_e k_s (|e| - |e0|)^2 / 2 with
    k_s = stretch_prefactor * E * h * (A1 + A2) / |e0|^2, and
    U_bend = sum_hinges k_b (theta - theta0)^2 |e0|^2 / (A1 + A2) with
    k_b = bending_prefactor * E * h^3 / 12.
    """

    def __init__(self, mesh: SwimmerMesh, material: MaterialParams) -> None:
        """Precomputes reference quantities.

        Args:
            mesh: Mesh with its reference configuration.
            material: Elastic parameters.
        """
        self.mesh = mesh
        self.material = material
        self.n_nodes = mesh.n_nodes
        reference = mesh.reference_nodes

        self.edges = mesh.edges
        i, j = self.edges.T
        self.rest_lengths = np.linalg.norm(reference[j] - reference[i], axis=1)
        self.stretch_stiffness = (
            material.membrane_stiffness
            * mesh.edge_areas
            / self.rest_lengths**2
        )

        self.hinges = mesh.hinges
        x0, x1, x2, x3 = (reference[self.hinges[:, k]] for k in range(4))
        e = x1 - x0
        areas = 0.5 * (
            np.linalg.norm(np.cross(e, x2 - x0), axis=1)
            + np.linalg.norm(np.cross(x3 - x0, e), axis=1)
        )
        self.hinge_stiffness = (
            material.bending_stiffness * np.einsum("ij,ij->i", e, e) / areas
        )
        self.rest_angles, _ = dihedral_angles(reference, self.hinges)
        self.min_areas = DEGENERATE_AREA_RATIO * mesh.reference_areas

    def check(self, nodes: NDArray[np.float64]) -> None:
        if nodes.shape != (self.n_nodes, 3):
            msg = f"Expected ({self.n_nodes}, 3) positions, got {nodes.shape}"
            raise DimensionMismatchError(msg)

        areas = triangle_areas(nodes, self.mesh.triangles)
        if (collapsed := np.flatnonzero(areas <= self.min_areas)).size:
            element = int(collapsed[0])
            ratio = areas[element] / self.mesh.reference_areas[element]
            raise DegenerateTriangleError(element, float(ratio))

    def _stretch(
        self, nodes: NDArray[np.float64]
    ) -> tuple[NDArray[np.float64], float]:
        i, j = self.edges.T
        d = nodes[j] - nodes[i]
        lengths = np.linalg.norm(d, axis=1)
        strain = lengths - self.rest_lengths
        energy = 0.5 * float(np.sum(self.stretch_stiffness * strain**2))

        pull = (self.stretch_stiffness * strain / lengths)[:, None] * d
        forces = scatter(
            np.concatenate([i, j]),
            np.concatenate([pull, -pull]),
            self.n_nodes,
        )
        return forces, energy

    def _bend(
        self, nodes: NDArray[np.float64]
    ) -> tuple[NDArray[np.float64], float]:
        theta, gradient = dihedral_angles(nodes, self.hinges)
        delta = np.mod(theta - self.rest_angles + np.pi, 2 * np.pi) - np.pi
        energy = float(np.sum(self.hinge_stiffness * delta**2))

        weight = -2.0 * self.hinge_stiffness * delta
        contributions = weight[:, None, None] * gradient
        forces = scatter(
            self.hinges.T.ravel(),
            contributions.transpose(1, 0, 2).reshape(-1, 3),
            self.n_nodes,
        )
        return forces, energy

    def forces(self, nodes: NDArray[np.float64]) -> NDArray[np.float64]:
        self.check(nodes)
        stretch, _ = self._stretch(nodes)
        bend, _ = self._bend(nodes)
        return stretch + bend

    def evaluate(self, nodes: NDArray[np.float64]) -> ElasticForces:
        self.check(nodes)
        stretch, stretch_energy = self._stretch(nodes)
        bend, bend_energy = self._bend(nodes)
        return ElasticForces(
            forces=stretch + bend,
            stretch_energy=stretch_energy,
            bend_energy=bend_energy,
        )


@lru_cache(maxsize=8)
def shell_energy(mesh: SwimmerMesh, material: MaterialParams) -> ShellEnergy:
    return ShellEnergy(mesh, material)


def elastic_forces(
    mesh: SwimmerMesh,
    current_nodes: NDArray[np.float64],
    material: MaterialParams,
) -> ElasticForces:
    """Elastic restoring forces -dU/dx of the shell at given positions.

    Args:
        mesh: Mesh and reference configuration.
        current_nodes: Deformed positions (N, 3).
        material: Elastic parameters.

    Returns:
        Nodal forces with the stretching and bending energies.

    Raises:
        DegenerateTriangleError: If an element collapsed.
        DimensionMismatchError: If positions do not match the mesh.
    """
    return shell_energy(mesh, material).evaluate(current_nodes)


def elastic_energy(
    mesh: SwimmerMesh,
    current_nodes: NDArray[np.float64],
    material: MaterialParams,
) -> tuple[float, float]:
    result = elastic_forces(mesh, current_nodes, material)
    return result.stretch_energy, result.bend_energy
