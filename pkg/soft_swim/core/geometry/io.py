from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from pathlib import Path

    from numpy.typing import NDArray

    from soft_swim.core.geometry.model import SwimmerMesh

MAGNETIZATION_COLUMNS = ["element_index", "mx", "my", "mz", "active"]


def write_mesh(
    path: Path,
    mesh: SwimmerMesh,
    nodes: NDArray[np.float64] | None = None,
) -> None:
    """Writes an indexed-triangle mesh.

    The first line holds "V F", then V lines "v x y z" and F lines
    "f i j k" with 0-based indices.

    Args:
        path: Target file.
        mesh: Mesh providing the connectivity.
        nodes: Positions to write instead of the mesh's own nodes.
    """
    nodes = mesh.nodes if nodes is None else nodes
    lines = [f"{len(nodes)} {mesh.n_elements}"]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in nodes.tolist()]
    lines += [f"f {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    path.write_text("\n".join(lines) + "\n")


def read_mesh(path: Path) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    header, *body = path.read_text().splitlines()
    n_nodes, n_elements = map(int, header.split())
    vertices = [line.split()[1:] for line in body if line.startswith("v ")]
    faces = [line.split()[1:] for line in body if line.startswith("f ")]
    if len(vertices) != n_nodes or len(faces) != n_elements:
        msg = (
            f"{path} announces {n_nodes} vertices and {n_elements} faces, "
            f"holds {len(vertices)} and {len(faces)}"
        )
        raise ValueError(msg)
    return np.asarray(vertices, dtype=float), np.asarray(faces, dtype=np.int64)


def write_magnetization(path: Path, mesh: SwimmerMesh) -> None:
    import pandas as pd

    data = pd.DataFrame(
        {
            "element_index": np.arange(mesh.n_elements),
            "mx": mesh.magnetization[:, 0],
            "my": mesh.magnetization[:, 1],
            "mz": mesh.magnetization[:, 2],
            "active": mesh.active.astype(int),
        },
        columns=MAGNETIZATION_COLUMNS,
    )
    data.to_csv(path, index=False)
