from __future__ import annotations

from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from soft_swim.core.elastica.core import ShellEnergy
from soft_swim.core.elastica.model import MaterialParams
from soft_swim.core.geometry.core import MIN_CELLS_ACROSS, build_swimmer
from soft_swim.core.geometry.model import DesignKind, SwimmerDesign
from soft_swim.utils.errors import StaticSolveError
from soft_swim.utils.logging import Logger

if TYPE_CHECKING:
    from numpy.typing import NDArray

CLAMPED_COLUMNS = 2
# Loads above this deflection-to-length ratio leave the linear regime
SMALL_DEFLECTION = 0.05
CALIBRATION_DEFLECTION = 0.01


def beam_deflection(
    length: float, width: float, h: float, E: float, tip_load: float
) -> float:
    """Euler-Bernoulli tip deflection P len^3 / (3 E I)."""
    inertia = width * h**3 / 12.0
    return tip_load * length**3 / (3.0 * E * inertia)


def _jacobian(
    shell: ShellEnergy,
    nodes: NDArray[np.float64],
    free: NDArray[np.int64],
    step: float,
) -> NDArray[np.float64]:
    """Central-difference Jacobian of the free force components."""
    flat = nodes.ravel()
    jacobian = np.empty((free.size, free.size))
    for column, dof in enumerate(free):
        forward, backward = flat.copy(), flat.copy()
        forward[dof] += step
        backward[dof] -= step
        jacobian[:, column] = (
            shell.forces(forward.reshape(-1, 3)).ravel()[free]
            - shell.forces(backward.reshape(-1, 3)).ravel()[free]
        ) / (2.0 * step)
    return jacobian


def cantilever_tip_deflection_check(
    length: float,
    width: float,
    h: float,
    E: float,
    tip_load: float,
    resolution: float | None = None,
    bending_prefactor: float = 1.0,
    stretch_prefactor: float = 1.0,
    tolerance: float = 1e-6,
    max_iterations: int = 20,
) -> float:
    """Static tip deflection of a clamped strip under a transverse tip load.

    The two trailing node columns are clamped and the load is shared by
    the leading column, along +z.

    Args:
        length: Strip length.
        width: Strip width.
        h: Strip thickness.
        E: Young's modulus.
        tip_load: Total transverse load.
        resolution: Mesh edge length, width / 4 by default.
        bending_prefactor: Bending stiffness prefactor.
        stretch_prefactor: Stretching stiffness prefactor.
        tolerance: Residual force tolerance relative to the load.
        max_iterations: Newton iteration cap.

    Returns:
        Mean z displacement of the loaded column.

    Raises:
        ValueError: If the load leaves the small-deflection regime.
        StaticSolveError: If Newton iterations do not converge.
    """
    expected = beam_deflection(length, width, h, E, tip_load)
    if abs(expected) >= SMALL_DEFLECTION * length:
        msg = (
            f"Tip load {tip_load:g} bends the strip by ~{expected:g}, "
            f"beyond {SMALL_DEFLECTION} of its length"
        )
        raise ValueError(msg)

    design = SwimmerDesign(
        kind=DesignKind.CARANGIFORM,
        length=length,
        width=width,
        thickness=h,
        L0_over_L=0.0,
        mesh_resolution=resolution or width / MIN_CELLS_ACROSS,
    )
    mesh = build_swimmer(design)
    material = MaterialParams(E, h, bending_prefactor, stretch_prefactor)
    shell = ShellEnergy(mesh, material)

    u = mesh.material_coordinates[:, 0]
    stations = np.unique(u)
    clamped = u <= stations[CLAMPED_COLUMNS - 1]
    tip = u == stations[-1]

    load = np.zeros((mesh.n_nodes, 3))
    load[tip, 2] = tip_load / tip.sum()
    free = np.flatnonzero(np.repeat(~clamped, 3))

    nodes = mesh.reference_nodes.copy()
    for iteration in range(max_iterations):
        residual = (shell.forces(nodes) + load).ravel()[free]
        if np.linalg.norm(residual) <= tolerance * abs(tip_load):
            break
        jacobian = _jacobian(shell, nodes, free, 1e-6 * length)
        flat = nodes.ravel()
        flat[free] -= np.linalg.solve(jacobian, residual)
        nodes = flat.reshape(-1, 3)
        Logger.debug(f"Cantilever iteration {iteration}: {residual.max()=}")
    else:
        msg = f"Static solve did not converge in {max_iterations} iterations"
        Logger.error(msg)
        raise StaticSolveError(msg)

    return float(nodes[tip, 2].mean() - mesh.reference_nodes[tip, 2].mean())


@lru_cache
def calibrate_bending_prefactor(
    length: float = 10.0,
    width: float = 1.0,
    h: float = 0.1,
    E: float = 1.0,
    resolution: float | None = None,
) -> float:
    """Bending prefactor matching the discrete strip to beam theory.

    Returns:
        Factor such that a strip with this bending prefactor deflects
        like P len^3 / (3 E I).
    """
    inertia = width * h**3 / 12.0
    tip_load = CALIBRATION_DEFLECTION * length * 3.0 * E * inertia / length**3
    simulated = cantilever_tip_deflection_check(
        length, width, h, E, tip_load, resolution=resolution
    )
    factor = simulated / beam_deflection(length, width, h, E, tip_load)
    Logger.info(f"Calibrated bending prefactor: {factor:.4f}")
    return factor
