from __future__ import annotations

import math
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.dynamics.model import (
    COILING_TWIST,
    FLOPPY_BLPC,
    FLOPPY_MIN_CYCLES,
    FlowRates,
    ProbeSpec,
    Regime,
)
from soft_swim.core.hydrodynamics.core import flow_at_probes
from soft_swim.utils.errors import EmptyProbeSetError, NotConvergedError
from soft_swim.utils.logging import Logger

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from soft_swim.core.dynamics.model import Trajectory
    from soft_swim.core.geometry.model import SwimmerMesh
    from soft_swim.core.hydrodynamics.model import FluidParams

# Cycles averaged into the steady swimming speed
STEADY_WINDOW = 2
# Contact geometry: squared-length floor and parallelism threshold
TINY = 1e-300
PARALLEL = 1e-12


def steady_blpc(traj: Trajectory) -> float:
    """Mean blpc over the last cycles of the run, steady or not."""
    if not traj.cycles:
        return 0.0
    window = traj.cycles[-STEADY_WINDOW:]
    return float(np.mean([cycle.blpc for cycle in window]))


def compute_blpc(traj: Trajectory) -> float:
    """Steady body lengths per cycle along +x.

    Raises:
        NotConvergedError: If swimming never became steady.
    """
    if traj.steady_cycle is None:
        msg = f"No steady state within {len(traj.cycles)} cycles"
        raise NotConvergedError(msg)
    return steady_blpc(traj)


def detect_regime(traj: Trajectory) -> Regime:
    """Classifies a finished run.

    SelfContact takes precedence over Coiling, Coiling over Floppy.
    """
    if traj.min_self_distance < traj.thickness:
        return Regime.SELF_CONTACT

    if any(abs(cycle.max_twist) > COILING_TWIST for cycle in traj.cycles):
        return Regime.COILING

    if traj.failure is not None:
        return Regime.NOT_CONVERGED

    if not traj.actuated:
        return Regime.FLOPPY

    speed = abs(steady_blpc(traj))
    if traj.is_steady:
        if speed < FLOPPY_BLPC and len(traj.cycles) >= FLOPPY_MIN_CYCLES:
            return Regime.FLOPPY
        return Regime.OK

    return Regime.FLOPPY if speed < FLOPPY_BLPC else Regime.NOT_CONVERGED


def probe_grid(
    center: NDArray[np.float64],
    characteristic_length: float,
    points: NDArray[np.float64],
    epsilon: float,
    spec: ProbeSpec,
) -> NDArray[np.float64]:
    """Box probes around a center, without those close to the body."""
    from scipy.spatial import cKDTree

    half = 0.5 * spec.box_factor * characteristic_length
    axis = np.linspace(-half, half, spec.resolution)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    probes = grid.reshape(-1, 3) + np.asarray(center)

    distance, _ = cKDTree(points).query(probes, k=1)
    return probes[distance >= spec.exclusion_factor * epsilon]


def compute_flowrates(
    points: NDArray[np.float64],
    forces: NDArray[np.float64],
    fluid: FluidParams,
    characteristic_length: float,
    period: float,
    spec: ProbeSpec | None = None,
    center: NDArray[np.float64] | None = None,
) -> FlowRates:
    """Normalized flowrates induced by the body forces.

    Q_k = <|u_k|>_probes Lbar^2 / (Lbar^3 / T).

    Args:
        points: Collocation points (N, 3).
        forces: Forces exerted on the fluid (N, 3).
        fluid: Fluid parameters.
        characteristic_length: Lbar [m].
        period: Actuation period T [s].
        spec: Probe box.
        center: Box center, the point centroid by default.

    Returns:
        Flowrates along x, y and z.

    Raises:
        EmptyProbeSetError: If every probe lies too close to the body.
    """
    spec = spec or ProbeSpec()
    points = np.asarray(points, dtype=float)
    if center is None:
        center = points.mean(axis=0)

    probes = probe_grid(
        center, characteristic_length, points, fluid.epsilon, spec
    )
    if not len(probes):
        msg = f"No probe survives the body exclusion of {spec}"
        Logger.error(msg)
        raise EmptyProbeSetError(msg)

    velocities = flow_at_probes(points, forces, probes, fluid)
    mean = np.abs(velocities).mean(axis=0) * period / characteristic_length
    return FlowRates(*map(float, mean))


@lru_cache(maxsize=8)
def _stations(
    mesh: SwimmerMesh,
) -> tuple[list[NDArray[np.int64]], NDArray[np.int64], NDArray[np.int64]]:
    """Node columns along the body length, with their width-wise ends."""
    u, v = mesh.material_coordinates.T
    _, column = np.unique(u, return_inverse=True)
    members = [
        np.flatnonzero(column == index) for index in range(column.max() + 1)
    ]
    first = np.array([nodes[np.argmin(v[nodes])] for nodes in members])
    last = np.array([nodes[np.argmax(v[nodes])] for nodes in members])
    return members, first, last


def centerline_twist(
    mesh: SwimmerMesh, nodes: NDArray[np.float64]
) -> float:
    """Accumulated signed rotation of the width-wise material director.

    Directors of consecutive length-wise stations are projected onto the
    plane normal to the local centerline tangent and the signed angles
    between them are summed from the trailing to the leading end.
    """
    members, first, last = _stations(mesh)
    if len(members) < 2:
        return 0.0

    centers = np.array([nodes[m].mean(axis=0) for m in members])
    directors = nodes[last] - nodes[first]

    tangents = np.gradient(centers, axis=0)
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    mid = tangents[:-1] + tangents[1:]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)

    def project(d: NDArray[np.float64]) -> NDArray[np.float64]:
        return d - np.einsum("ij,ij->i", d, mid)[:, None] * mid

    a, b = project(directors[:-1]), project(directors[1:])
    sine = np.einsum("ij,ij->i", np.cross(a, b), mid)
    cosine = np.einsum("ij,ij->i", a, b)
    return float(np.arctan2(sine, cosine).sum())


def _dot(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray:
    return np.einsum("...i,...i->...", a, b)


def _segment_distances(
    p1: NDArray[np.float64],
    q1: NDArray[np.float64],
    p2: NDArray[np.float64],
    q2: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Closest distances between segments p1-q1 and p2-q2, row by row.

    Zero-length segments are allowed, so this also measures point to
    segment distances.
    """
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a = np.maximum(_dot(d1, d1), TINY)
    e = np.maximum(_dot(d2, d2), TINY)
    b, c, f = _dot(d1, d2), _dot(d1, r), _dot(d2, r)
    denom = a * e - b * b

    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(
            denom > PARALLEL * a * e,
            np.clip((b * f - c * e) / denom, 0.0, 1.0),
            0.0,
        )
    t = (b * s + f) / e
    s = np.where(
        t < 0.0,
        np.clip(-c / a, 0.0, 1.0),
        np.where(t > 1.0, np.clip((b - c) / a, 0.0, 1.0), s),
    )
    t = np.clip(t, 0.0, 1.0)
    gap = p1 + d1 * s[:, None] - p2 - d2 * t[:, None]
    return np.linalg.norm(gap, axis=1)


def _point_triangle_distances(
    p: NDArray[np.float64],
    a: NDArray[np.float64],
    b: NDArray[np.float64],
    c: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Distances from points to triangles, row by row."""
    ab, ac, ap = b - a, c - a, p - a
    normal = np.cross(ab, ac)
    d00, d01, d11 = _dot(ab, ab), _dot(ab, ac), _dot(ac, ac)
    d20, d21 = _dot(ap, ab), _dot(ap, ac)
    denom = d00 * d11 - d01 * d01

    with np.errstate(divide="ignore", invalid="ignore"):
        v = (d11 * d20 - d01 * d21) / denom
        w = (d00 * d21 - d01 * d20) / denom
        height = np.abs(_dot(ap, normal)) / np.linalg.norm(normal, axis=1)
    inside = (denom > 0) & (v >= 0) & (w >= 0) & (v + w <= 1)

    rim = np.minimum.reduce([
        _segment_distances(p, p, a, b),
        _segment_distances(p, p, b, c),
        _segment_distances(p, p, c, a),
    ])
    return np.where(inside, height, rim)


def _segment_crosses(
    p: NDArray[np.float64],
    q: NDArray[np.float64],
    a: NDArray[np.float64],
    b: NDArray[np.float64],
    c: NDArray[np.float64],
) -> NDArray[np.bool_]:
    """Whether segments p-q pierce triangles a-b-c, row by row."""
    direction, e1, e2 = q - p, b - a, c - a
    pvec = np.cross(direction, e2)
    det = _dot(e1, pvec)
    scale = (
        np.linalg.norm(direction, axis=1)
        * np.linalg.norm(e1, axis=1)
        * np.linalg.norm(e2, axis=1)
    )
    tvec = p - a
    qvec = np.cross(tvec, e1)

    with np.errstate(divide="ignore", invalid="ignore"):
        u = _dot(tvec, pvec) / det
        v = _dot(direction, qvec) / det
        t = _dot(e2, qvec) / det
    return (
        (np.abs(det) > PARALLEL * scale)
        & (u >= 0)
        & (v >= 0)
        & (u + v <= 1)
        & (t >= 0)
        & (t <= 1)
    )


def triangle_distances(
    first: NDArray[np.float64], second: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Distances between paired triangles.

    Corners against the opposite triangle both ways, edges against edges,
    and zero where an edge pierces the opposite triangle.

    Args:
        first: Corners of the first triangles (K, 3, 3).
        second: Corners of the second triangles (K, 3, 3).

    Returns:
        Distances (K,).
    """
    candidates = []
    for one, other in ((first, second), (second, first)):
        a, b, c = other[:, 0], other[:, 1], other[:, 2]
        for k in range(3):
            p, q = one[:, k], one[:, (k + 1) % 3]
            candidates.append(_point_triangle_distances(p, a, b, c))
            crossing = _segment_crosses(p, q, a, b, c)
            candidates.append(np.where(crossing, 0.0, np.inf))

    for k in range(3):
        for m in range(3):
            candidates.append(
                _segment_distances(
                    first[:, k],
                    first[:, (k + 1) % 3],
                    second[:, m],
                    second[:, (m + 1) % 3],
                )
            )
    return np.minimum.reduce(candidates)


def min_self_distance(
    mesh: SwimmerMesh,
    nodes: NDArray[np.float64],
    cutoff: float | None = None,
) -> float:
    """Smallest distance between two non-adjacent triangles.

    Triangles are adjacent when some node of one lies within two edges of
    some node of the other. Candidate pairs come from a centroid tree.

    Args:
        mesh: Mesh providing the connectivity.
        nodes: Positions (N, 3).
        cutoff: Search radius, twice the mean edge length by default.

    Returns:
        The distance, inf if no such pair lies within the cutoff.
    """
    from scipy.spatial import cKDTree

    if cutoff is None:
        cutoff = 2.0 * mesh.mean_edge_length

    corners = nodes[mesh.triangles]
    centroids = corners.mean(axis=1)
    reach = np.linalg.norm(corners - centroids[:, None], axis=2).max()
    pairs = cKDTree(centroids).query_pairs(
        cutoff + 2.0 * reach, output_type="ndarray"
    )
    if not len(pairs):
        return math.inf

    first = mesh.triangles[pairs[:, 0]]
    second = mesh.triangles[pairs[:, 1]]
    near = np.zeros(len(pairs), dtype=bool)
    for k in range(3):
        for m in range(3):
            ring = mesh.two_ring[first[:, k], second[:, m]]
            near |= np.asarray(ring).ravel() != 0
    first, second = first[~near], second[~near]
    if not len(first):
        return math.inf

    distances = triangle_distances(nodes[first], nodes[second])
    distances = distances[distances <= cutoff]
    return float(distances.min()) if len(distances) else math.inf
