from __future__ import annotations

import math
from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.geometry.model import (
    DesignKind,
    SwimmerDesign,
    SwimmerMesh,
    TiltSpec,
)
from soft_swim.utils.errors import InvalidDesignError
from soft_swim.utils.logging import Logger

if TYPE_CHECKING:
    from numpy.typing import NDArray

# 0.23 mm edges on a 5 mm body
DEFAULT_RESOLUTION_RATIO = 0.046
MIN_CELLS_ACROSS = 4

# Finger-shaped planform
BASE_FRACTION = 0.4
SLIT_FRACTION = 0.05


def characteristic_length(design: SwimmerDesign) -> float:
    return math.sqrt(design.length * design.width)


def default_resolution(design: SwimmerDesign) -> float:
    return min(
        DEFAULT_RESOLUTION_RATIO * characteristic_length(design),
        min(design.length, design.width) / MIN_CELLS_ACROSS,
    )


def _leading_columns(weights: NDArray, fraction: float) -> int:
    """Number of leading columns whose weight best matches a fraction."""
    cumulative = np.concatenate([[0.0], np.cumsum(weights[::-1])])
    return int(np.argmin(np.abs(cumulative / cumulative[-1] - fraction)))


def _finger_rows(ny: int) -> tuple[NDArray[np.bool_], NDArray[np.bool_]]:
    """Transverse cell classes of the flap region: (slit, central flap)."""
    gap = max(1, round(SLIT_FRACTION * ny))
    flap = (ny - 2 * gap) // 3
    if flap < 1:
        msg = f"{ny} cells across cannot hold three flaps and two slits"
        raise InvalidDesignError(msg)

    central = flap + (ny - 2 * gap - 3 * flap)
    bounds = np.cumsum([flap, gap, central, gap])
    j = np.arange(ny)
    slit = ((j >= bounds[0]) & (j < bounds[1])) | (
        (j >= bounds[2]) & (j < bounds[3])
    )
    middle = (j >= bounds[1]) & (j < bounds[2])
    return slit, middle


def _grid_triangles(
    nx: int, ny: int, keep: NDArray[np.bool_]
) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.int64]]:
    """Two triangles per kept cell, diagonals alternating like a chessboard.

    Returns:
        Triangles (counter-clockwise seen from +z), their cell column and
        their cell row.
    """
    i, j = np.nonzero(keep)
    a = i * (ny + 1) + j
    b = (i + 1) * (ny + 1) + j
    c = b + 1
    d = a + 1

    even = (i + j) % 2 == 0
    first = np.where(
        even[:, None], np.stack([a, b, c], 1), np.stack([a, b, d], 1)
    )
    second = np.where(
        even[:, None], np.stack([a, c, d], 1), np.stack([b, c, d], 1)
    )
    triangles = np.stack([first, second], axis=1).reshape(-1, 3)
    return triangles, np.repeat(i, 2), np.repeat(j, 2)


def _magnetize(
    design: SwimmerDesign,
    columns: NDArray[np.int64],
    centroids_x: NDArray[np.float64],
    magnetizable: NDArray[np.bool_],
    nx: int,
    column_weights: NDArray,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    M = design.magnetization
    fraction = design.L0_over_L
    n_elements = len(columns)
    magnetization = np.zeros((n_elements, 3))

    if design.kind is DesignKind.FIELD_INDUCED:
        # Two equal end strips sharing the magnetized fraction
        half = column_weights[nx - nx // 2 :]
        target = fraction * column_weights.sum() / (2 * half.sum())
        strip = _leading_columns(half, target)
        if strip < 1:
            msg = f"L0_over_L={fraction} is thinner than one mesh strip"
            raise InvalidDesignError(msg)
        leading = columns >= nx - strip
        trailing = columns < strip
        active = (leading | trailing) & magnetizable
        magnetization[leading & active] = (0.0, M, 0.0)
        magnetization[trailing & active] = (0.0, -M, 0.0)
        return magnetization, active

    count = _leading_columns(column_weights, fraction)
    active = (columns >= nx - count) & magnetizable

    if design.kind is DesignKind.FINGER_SHAPED:
        # Outer flaps along the flap axis, like cantilevers
        magnetization[active] = (M, 0.0, 0.0)
        return magnetization, active

    if design.kind.is_helical:
        magnetization[active] = (0.0, M, 0.0)
        return magnetization, active

    # Undulatory designs: in-plane along +x, optionally turning in x-z
    front = design.length / 2
    active_length = max(count, 1) * design.length / nx
    phase = (
        2 * np.pi * design.magnetization_turns * (front - centroids_x[active])
        / active_length
    )
    magnetization[active] = M * np.stack(
        [np.cos(phase), np.zeros_like(phase), np.sin(phase)], axis=1
    )
    return magnetization, active


@Logger.func()
def build_swimmer(design: SwimmerDesign) -> SwimmerMesh:
    """Meshes a swimmer in the z = 0 plane, leading end towards +x.

    Args:
        design: Planform and magnetization layout.

    Returns:
        The mesh, centered at the origin, in its reference configuration.

    Raises:
        InvalidDesignError: If the resolution is too coarse or the design
            lacks the active region it needs.
    """
    kind = design.kind
    if kind.requires_active_region and design.L0_over_L == 0:
        msg = f"{kind.value} needs a magnetized region, got L0_over_L=0"
        raise InvalidDesignError(msg)
    if kind is DesignKind.ANGUILLIFORM and design.L0_over_L != 1.0:
        msg = f"{kind.value} is fully active, got {design.L0_over_L=}"
        raise InvalidDesignError(msg)

    ds = design.mesh_resolution or default_resolution(design)
    nx = round(design.length / ds)
    ny = round(design.width / ds)
    if min(nx, ny) < MIN_CELLS_ACROSS:
        msg = (
            f"Resolution {ds:g} gives {nx}x{ny} cells, "
            f"at least {MIN_CELLS_ACROSS} are needed across"
        )
        raise InvalidDesignError(msg)

    keep = np.ones((nx, ny), dtype=bool)
    passive = np.zeros((nx, ny), dtype=bool)
    if kind is DesignKind.FINGER_SHAPED:
        slit, middle = _finger_rows(ny)
        flaps = np.arange(nx) < nx - round(BASE_FRACTION * nx)
        keep[np.ix_(flaps, slit)] = False
        # Only the outer flaps carry magnetic filler
        passive[~flaps, :] = True
        passive[np.ix_(flaps, middle)] = True

    triangles, columns, rows = _grid_triangles(nx, ny, keep)

    x = np.linspace(-design.length / 2, design.length / 2, nx + 1)
    y = np.linspace(-design.width / 2, design.width / 2, ny + 1)
    grid = np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1).reshape(-1, 2)

    # Drop nodes that only touched removed slit cells
    used = np.unique(triangles)
    index = np.full(len(grid), -1, dtype=np.int64)
    index[used] = np.arange(len(used))
    triangles = index[triangles]
    planar = grid[used]

    magnetizable = ~passive[columns, rows]
    column_weights = np.bincount(
        columns, weights=magnetizable.astype(float), minlength=nx
    )
    centroids_x = planar[triangles, 0].mean(axis=1)
    magnetization, active = _magnetize(
        design, columns, centroids_x, magnetizable, nx, column_weights
    )

    nodes = np.column_stack([planar, np.zeros(len(planar))])
    Logger.debug(
        f"Meshed {kind.value}: {len(nodes)} nodes, {len(triangles)} "
        f"elements, {int(active.sum())} active"
    )
    return SwimmerMesh(
        nodes=nodes,
        triangles=triangles,
        reference_nodes=nodes.copy(),
        magnetization=magnetization,
        active=active,
        thickness=design.thickness,
        material_coordinates=planar,
        magnetizable=magnetizable,
        design=design,
    )


def apply_tilt(mesh: SwimmerMesh, tilt: TiltSpec) -> SwimmerMesh:
    """Rotates a mesh rigidly about its nodal centroid.

    Reference nodes and magnetization co-rotate so that the tilted mesh is
    still at rest.
    """
    if tilt.is_identity:
        return mesh

    rotation = tilt.rotation()
    center = mesh.nodes.mean(axis=0)
    return replace(
        mesh,
        nodes=rotation.apply(mesh.nodes - center) + center,
        reference_nodes=rotation.apply(mesh.reference_nodes - center) + center,
        magnetization=rotation.apply(mesh.magnetization),
    )


def _icosahedron() -> tuple[list[NDArray], list[tuple[int, int, int]]]:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    vertices = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]  # fmt: skip
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]  # fmt: skip
    scale = math.sqrt(1 + t * t)
    unit = [np.asarray(v, dtype=float) / scale for v in vertices]
    return unit, faces


def _subdivide(
    vertices: list[NDArray], faces: list[tuple[int, int, int]]
) -> list[tuple[int, int, int]]:
    cache: dict[tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            middle = vertices[a] + vertices[b]
            vertices.append(middle / np.linalg.norm(middle))
            cache[key] = len(vertices) - 1
        return cache[key]

    refined = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return refined


def icosphere_level(n_points: int) -> int:
    level = 0
    while 10 * 4**level + 2 < n_points:
        level += 1
    return level


def build_sphere_shell(
    radius: float, n_points: int, thickness: float | None = None
) -> SwimmerMesh:
    """Quasi-uniform sphere from a subdivided icosahedron.

    Args:
        radius: Sphere radius.
        n_points: Minimal number of nodes; the mesh has 10 * 4**s + 2.
        thickness: Shell thickness, 1% of the radius by default.

    Returns:
        Unmagnetized, outward-oriented sphere centered at the origin.
    """
    if n_points < 100:
        msg = f"Sphere shells need at least 100 points, got {n_points}"
        raise InvalidDesignError(msg)

    vertices, faces = _icosahedron()
    for _ in range(icosphere_level(n_points)):
        faces = _subdivide(vertices, faces)

    unit = np.asarray(vertices)
    unit /= np.linalg.norm(unit, axis=1, keepdims=True)
    nodes = radius * unit
    triangles = np.asarray(faces, dtype=np.int64)
    return SwimmerMesh(
        nodes=nodes,
        triangles=triangles,
        reference_nodes=nodes.copy(),
        magnetization=np.zeros((len(triangles), 3)),
        active=np.zeros(len(triangles), dtype=bool),
        thickness=thickness or 0.01 * radius,
        material_coordinates=np.zeros((len(nodes), 2)),
    )
