from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.utils.errors import InvalidDesignError

if TYPE_CHECKING:
    from numpy.typing import NDArray
    from scipy.sparse import csr_matrix
    from scipy.spatial.transform import Rotation

# Thin-sheet assumption: h < THIN_SHEET_RATIO * min(L, W)
THIN_SHEET_RATIO = 0.2


class DesignKind(str, Enum):
    FINGER_SHAPED = "FingerShaped"
    FIELD_INDUCED = "FieldInduced"
    DRAG_INDUCED = "DragInduced"
    CARANGIFORM = "CarangiformLike"
    ANGUILLIFORM = "AnguilliformLike"

    @property
    def is_helical(self) -> bool:
        return self in (
            DesignKind.FINGER_SHAPED,
            DesignKind.FIELD_INDUCED,
            DesignKind.DRAG_INDUCED,
        )

    @property
    def is_undulatory(self) -> bool:
        return not self.is_helical

    @property
    def requires_active_region(self) -> bool:
        return self is not DesignKind.CARANGIFORM


@dataclass(frozen=True)
class DesignDefaults:
    L_over_W: float
    L0_over_L: float


# Reference planforms of the comparison study
DESIGN_DEFAULTS = {
    DesignKind.ANGUILLIFORM: DesignDefaults(L_over_W=8.0, L0_over_L=1.0),
    DesignKind.CARANGIFORM: DesignDefaults(L_over_W=1.0, L0_over_L=0.55),
    DesignKind.DRAG_INDUCED: DesignDefaults(L_over_W=5.77, L0_over_L=0.33),
    DesignKind.FIELD_INDUCED: DesignDefaults(L_over_W=5.77, L0_over_L=0.33),
    DesignKind.FINGER_SHAPED: DesignDefaults(L_over_W=1.0, L0_over_L=1.0),
}


@dataclass(frozen=True)
class SwimmerDesign:
    """Planform, thickness and magnetization layout of a swimmer.

    Attributes:
        kind: Swimmer family.
        length: Body length L [m] along the propulsion axis.
        width: Body width W [m].
        thickness: Sheet thickness h [m].
        L0_over_L: Magnetized fraction of the body length.
        mesh_resolution: Target edge length ds [m], None for the default.
        magnetization: Remnant magnetization magnitude M [A/m].
        magnetization_turns: Turns of the magnetization direction in the
            x-z plane along the active length of undulatory designs, 0 for
            a uniform layout.
    """

    kind: DesignKind
    length: float
    width: float
    thickness: float
    L0_over_L: float
    mesh_resolution: float | None = None
    magnetization: float = 1.0
    magnetization_turns: float = 0.0

    def __post_init__(self) -> None:
        if min(self.length, self.width, self.thickness) <= 0:
            msg = f"Non-positive dimensions in {self}"
            raise InvalidDesignError(msg)

        if self.thickness >= THIN_SHEET_RATIO * min(self.length, self.width):
            msg = (
                f"Thickness {self.thickness:g} breaks the thin-sheet "
                f"assumption for a {self.length:g}x{self.width:g} planform"
            )
            raise InvalidDesignError(msg)

        if not 0.0 <= self.L0_over_L <= 1.0:
            msg = f"L0_over_L={self.L0_over_L} lies outside [0, 1]"
            raise InvalidDesignError(msg)

        if self.magnetization < 0:
            msg = f"Negative magnetization {self.magnetization}"
            raise InvalidDesignError(msg)

        if self.mesh_resolution is not None and not (
            math.isfinite(self.mesh_resolution) and self.mesh_resolution > 0
        ):
            msg = f"Degenerate mesh resolution {self.mesh_resolution}"
            raise InvalidDesignError(msg)

    @property
    def characteristic_length(self) -> float:
        return math.sqrt(self.length * self.width)

    @property
    def aspect_ratio(self) -> float:
        return self.length / self.width

    @property
    def magnetic_length(self) -> float:
        return self.L0_over_L * self.length

    @classmethod
    def from_aspect(
        cls,
        kind: DesignKind,
        L_over_W: float,
        characteristic_length: float,
        thickness: float,
        L0_over_L: float,
        **kwargs: float | None,
    ) -> SwimmerDesign:
        """Builds a design of fixed area sqrt(LW) and given aspect ratio.

        Args:
            kind: Swimmer family.
            L_over_W: Aspect ratio L/W.
            characteristic_length: sqrt(L*W) [m].
            thickness: Sheet thickness [m].
            L0_over_L: Magnetized fraction of the body length.
            **kwargs: Remaining SwimmerDesign fields.

        Returns:
            The design.
        """
        if L_over_W <= 0:
            msg = f"Non-positive aspect ratio {L_over_W}"
            raise InvalidDesignError(msg)

        root = math.sqrt(L_over_W)
        return cls(
            kind=kind,
            length=characteristic_length * root,
            width=characteristic_length / root,
            thickness=thickness,
            L0_over_L=L0_over_L,
            **kwargs,  # pyright: ignore[reportArgumentType]
        )


@dataclass(frozen=True)
class TiltSpec:
    """Initial rigid tilt: roll about x, pitch about y, yaw about z.

    Rotations are applied in the order roll, pitch, yaw about the fixed
    global axes.
    """

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self) -> None:
        for name, value in self.angles.items():
            if not 0.0 <= value <= 90.0:
                msg = f"Tilt {name}={value} lies outside [0, 90] degrees"
                raise InvalidDesignError(msg)

    @property
    def angles(self) -> dict[str, float]:
        return {"roll": self.roll, "pitch": self.pitch, "yaw": self.yaw}

    @property
    def is_identity(self) -> bool:
        return self.roll == self.pitch == self.yaw == 0.0

    def rotation(self) -> Rotation:
        from scipy.spatial.transform import Rotation

        # Lower-case axes are extrinsic
        return Rotation.from_euler(
            "xyz", [self.roll, self.pitch, self.yaw], degrees=True
        )


@dataclass(frozen=True, eq=False)
class SwimmerMesh:
    """Triangulated thin shell with remnant magnetization.

    Attributes:
        nodes: Initial nodal positions, (N, 3) [m].
        triangles: Node indices of every element, (F, 3).
        reference_nodes: Undeformed nodal positions, (N, 3) [m].
        magnetization: Remnant magnetization of every element as it sits
            in the reference configuration, (F, 3) [A/m].
        active: Whether an element is magnetized, (F,).
        thickness: Sheet thickness h [m].
        material_coordinates: Planar (length, width) coordinates of the
            nodes before any tilt, (N, 2) [m].
        magnetizable: Elements eligible for magnetization, (F,).
        design: Design the mesh was built from, if any.
    """

    nodes: NDArray[np.float64]
    triangles: NDArray[np.int64]
    reference_nodes: NDArray[np.float64]
    magnetization: NDArray[np.float64]
    active: NDArray[np.bool_]
    thickness: float
    material_coordinates: NDArray[np.float64]
    magnetizable: NDArray[np.bool_] = field(
        default_factory=lambda: np.zeros(0, dtype=bool)
    )
    design: SwimmerDesign | None = None

    def __post_init__(self) -> None:
        if not len(self.magnetizable):
            object.__setattr__(
                self, "magnetizable", np.ones(self.n_elements, dtype=bool)
            )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def characteristic_length(self) -> float:
        if self.design is not None:
            return self.design.characteristic_length
        return math.sqrt(self.total_area)

    @property
    def total_area(self) -> float:
        return float(self.reference_areas.sum())

    @cached_property
    def reference_areas(self) -> NDArray[np.float64]:
        return triangle_areas(self.reference_nodes, self.triangles)

    @cached_property
    def node_weights(self) -> NDArray[np.float64]:
        """Lumped area of every node, normalized to unit sum."""
        weights = np.bincount(
            self.triangles.ravel(),
            weights=np.repeat(self.reference_areas / 3.0, 3),
            minlength=self.n_nodes,
        )
        return weights / weights.sum()

    @cached_property
    def _half_edges(self) -> tuple[NDArray, NDArray, NDArray]:
        tri = self.triangles
        src = tri.ravel()
        dst = tri[:, [1, 2, 0]].ravel()
        apex = tri[:, [2, 0, 1]].ravel()
        return src, dst, apex

    @cached_property
    def _edge_index(self) -> tuple[NDArray, NDArray]:
        src, dst, _ = self._half_edges
        keys = np.sort(np.stack([src, dst], axis=1), axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        return edges, inverse.ravel()

    @cached_property
    def edges(self) -> NDArray[np.int64]:
        """Unique undirected edges (E, 2), sorted lexicographically."""
        edges, inverse = self._edge_index
        counts = np.bincount(inverse, minlength=len(edges))
        if (counts > 2).any():
            msg = "Mesh is not a 2-manifold: an edge has > 2 triangles"
            raise InvalidDesignError(msg)
        return edges

    @cached_property
    def edge_areas(self) -> NDArray[np.float64]:
        """Reference area of the triangles incident to every edge."""
        edges, inverse = self._edge_index
        return np.bincount(
            inverse,
            weights=np.repeat(self.reference_areas, 3),
            minlength=len(edges),
        )

    @cached_property
    def hinges(self) -> NDArray[np.int64]:
        """Interior edges as (x0, x1, x2, x3) with x0-x1 the shared edge.

        x2 closes the first triangle in its winding order (x0, x1, x2),
        x3 closes the second one (x1, x0, x3).
        """
        _ = self.edges
        src, dst, apex = self._half_edges
        _, inverse = self._edge_index

        order = np.argsort(inverse, kind="stable")
        counts = np.bincount(inverse)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        interior = np.flatnonzero(counts == 2)
        first = order[starts[interior]]
        second = order[starts[interior] + 1]
        return np.stack(
            [src[first], dst[first], apex[first], apex[second]], axis=1
        )

    @cached_property
    def adjacency(self) -> csr_matrix:
        from scipy.sparse import coo_matrix

        i, j = self.edges.T
        n = self.n_nodes
        data = np.ones(2 * len(i), dtype=np.int8)
        return coo_matrix(
            (data, (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n),
        ).tocsr()

    @cached_property
    def two_ring(self) -> csr_matrix:
        """Sparse pattern of node pairs at most two edges apart."""
        from scipy.sparse import identity

        step = (self.adjacency + identity(self.n_nodes, format="csr")).astype(
            np.int32
        )
        return (step @ step).tocsr()

    @cached_property
    def mean_edge_length(self) -> float:
        i, j = self.edges.T
        lengths = np.linalg.norm(
            self.reference_nodes[i] - self.reference_nodes[j], axis=1
        )
        return float(lengths.mean())

    @property
    def active_area_fraction(self) -> float:
        areas = self.reference_areas
        return float(areas[self.active].sum() / areas[self.magnetizable].sum())


def triangle_areas(
    nodes: NDArray[np.float64], triangles: NDArray[np.int64]
) -> NDArray[np.float64]:
    x0, x1, x2 = (nodes[triangles[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(x1 - x0, x2 - x0), axis=1)
