from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.hydrodynamics.model import (
    DEFAULT_MOBILITY_CAP,
    FluidParams,
    MobilityOperator,
)
from soft_swim.utils.errors import MobilityCapacityError
from soft_swim.utils.logging import Logger

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from soft_swim.core.geometry.model import SwimmerMesh

# Rows assembled at once
_CHUNK = 256


def stokeslet_regularized(
    r: NDArray[np.float64],
    f: NDArray[np.float64],
    mu: float,
    epsilon: float,
) -> NDArray[np.float64]:
    """Velocity of a regularized point force.

    u = [(|r|^2 + 2 eps^2) f + (f . r) r] / (8 pi mu (|r|^2 + eps^2)^1.5)

    Args:
        r: Offsets from the force (..., 3).
        f: Point forces (..., 3).
        mu: Viscosity.
        epsilon: Blob radius.

    Returns:
        Velocities (..., 3).
    """
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    r_sq = np.sum(r * r, axis=-1, keepdims=True)
    eps_sq = epsilon * epsilon
    denominator = 8.0 * math.pi * mu * (r_sq + eps_sq) ** 1.5
    projection = np.sum(f * r, axis=-1, keepdims=True)
    return ((r_sq + 2.0 * eps_sq) * f + projection * r) / denominator


def _blocks(
    targets: NDArray[np.float64],
    sources: NDArray[np.float64],
    fluid: FluidParams,
) -> NDArray[np.float64]:
    """Stokeslet blocks (T, S, 3, 3) between targets and sources."""
    d = targets[:, None, :] - sources[None, :, :]
    r_sq = np.einsum("tsk,tsk->ts", d, d)
    eps_sq = fluid.epsilon**2
    denominator = 8.0 * math.pi * fluid.viscosity * (r_sq + eps_sq) ** 1.5
    isotropic = (r_sq + 2.0 * eps_sq) / denominator
    blocks = (1.0 / denominator)[..., None, None] * (
        d[..., :, None] * d[..., None, :]
    )
    blocks += isotropic[..., None, None] * np.eye(3)
    return blocks


@Logger.func()
def build_mobility(
    points: NDArray[np.float64],
    fluid: FluidParams,
    cap: int = DEFAULT_MOBILITY_CAP,
) -> MobilityOperator:
    """Assembles the regularized Stokeslet mobility over collocation points.

    Blocks (i, j) and (j, i) are built from negated offsets, so the matrix
    is exactly symmetric.

    Raises:
        MobilityCapacityError: If the points exceed the cap.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n > cap:
        msg = f"{n} collocation points exceed the mobility cap of {cap}"
        Logger.error(msg)
        raise MobilityCapacityError(msg)

    matrix = np.empty((3 * n, 3 * n))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        blocks = _blocks(points[start:stop], points, fluid)
        matrix[3 * start : 3 * stop] = blocks.transpose(0, 2, 1, 3).reshape(
            3 * (stop - start), 3 * n
        )
    return MobilityOperator(points=points, matrix=matrix, fluid=fluid)


def velocities_from_forces(
    op: MobilityOperator, nodal_forces: NDArray[np.float64]
) -> NDArray[np.float64]:
    """u = M f; the fluid exerts -f on the body at every point."""
    return op.apply(nodal_forces)


def flow_at_probes(
    points: NDArray[np.float64],
    forces: NDArray[np.float64],
    probes: NDArray[np.float64],
    fluid: FluidParams,
) -> NDArray[np.float64]:
    """Superposed regularized Stokeslet flow at arbitrary probe points."""
    points = np.asarray(points, dtype=float)
    forces = np.asarray(forces, dtype=float).reshape(-1, 3)
    probes = np.asarray(probes, dtype=float).reshape(-1, 3)
    velocities = np.zeros_like(probes)
    if not np.any(forces):
        return velocities

    eps_sq = fluid.epsilon**2
    scale = 8.0 * math.pi * fluid.viscosity
    for start in range(0, len(probes), _CHUNK):
        stop = min(start + _CHUNK, len(probes))
        d = probes[start:stop, None, :] - points[None, :, :]
        r_sq = np.einsum("psk,psk->ps", d, d)
        inverse = 1.0 / (scale * (r_sq + eps_sq) ** 1.5)
        projection = np.einsum("psk,sk->ps", d, forces)
        velocities[start:stop] = np.einsum(
            "ps,sk->pk", (r_sq + 2.0 * eps_sq) * inverse, forces
        ) + np.einsum("ps,psk->pk", projection * inverse, d)
    return velocities


def rigid_drag(
    points: NDArray[np.float64],
    fluid: FluidParams,
    velocity: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Total force needed to translate rigid collocation points.

    Solves M f = U with a Cholesky factorization of the mobility.

    Returns:
        Sum of the point forces, i.e. minus the hydrodynamic drag.
    """
    from scipy.linalg import cho_factor, cho_solve

    op = build_mobility(points, fluid)
    target = np.tile(np.asarray(velocity, dtype=float), op.n_points)
    forces = cho_solve(cho_factor(op.matrix), target)
    return forces.reshape(-1, 3).sum(axis=0)


def mean_spacing(mesh: SwimmerMesh) -> float:
    return mesh.mean_edge_length
