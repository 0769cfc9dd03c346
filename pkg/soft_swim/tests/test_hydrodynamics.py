import math

import numpy as np
import pytest

from soft_swim.core.geometry.core import build_sphere_shell
from soft_swim.core.hydrodynamics.core import (
    build_mobility,
    flow_at_probes,
    mean_spacing,
    rigid_drag,
    stokeslet_regularized,
    velocities_from_forces,
)
from soft_swim.core.hydrodynamics.model import FluidParams
from soft_swim.utils.errors import (
    DimensionMismatchError,
    InvalidDesignError,
    MobilityCapacityError,
)

MU = 2.0
EPSILON = 1e-2
FLUID = FluidParams(viscosity=MU, epsilon=EPSILON)


def oseen(r: np.ndarray) -> np.ndarray:
    distance = np.linalg.norm(r)
    unit = r / distance
    return (np.eye(3) + np.outer(unit, unit)) / (8 * math.pi * MU * distance)


def test_blob_center() -> None:
    f = np.array([0.3, -1.0, 2.0])
    u = stokeslet_regularized(np.zeros(3), f, MU, EPSILON)
    assert np.allclose(u, f / (4 * math.pi * MU * EPSILON), rtol=1e-12)


def test_far_field_perpendicular() -> None:
    r = np.array([100 * EPSILON, 0.0, 0.0])
    f = np.array([0.0, 1.0, 0.0])
    u = stokeslet_regularized(r, f, MU, EPSILON)
    expected = 1.0 / (8 * math.pi * MU * np.linalg.norm(r))
    assert np.linalg.norm(u) == pytest.approx(expected, rel=0.01)


def test_on_axis_probe() -> None:
    f = np.array([0.0, 0.0, 1.5])
    d = 100 * EPSILON
    u = flow_at_probes(
        np.zeros((1, 3)), f[None, :], np.array([[0.0, 0.0, d]]), FLUID
    )
    expected = 1.5 / (4 * math.pi * MU * d)
    assert np.linalg.norm(u) == pytest.approx(expected, rel=0.01)


def test_single_point_block() -> None:
    op = build_mobility(np.zeros((1, 3)), FLUID)
    expected = np.eye(3) / (4 * math.pi * MU * EPSILON)
    assert np.allclose(op.matrix, expected, rtol=1e-12)


def test_far_pair_block() -> None:
    r = np.array([60.0, 80.0, 0.0]) * EPSILON
    op = build_mobility(np.stack([np.zeros(3), r]), FLUID)
    block = op.matrix[0:3, 3:6]
    expected = oseen(r)
    assert np.abs(block - expected).max() < 0.01 * np.abs(expected).max()


def test_mobility_symmetric_positive_definite() -> None:
    sphere = build_sphere_shell(1.0, 162)
    fluid = FluidParams(1.0, 0.75 * mean_spacing(sphere))
    matrix = build_mobility(sphere.nodes, fluid).matrix
    assert np.abs(matrix - matrix.T).max() < 1e-12 * np.abs(matrix).max()
    assert np.linalg.eigvalsh(matrix).min() > 0


def test_chunked_assembly_matches_pairwise() -> None:
    rng = np.random.default_rng(5)
    points = rng.uniform(-1.0, 1.0, (300, 3))
    op = build_mobility(points, FLUID)
    forces = rng.standard_normal((300, 3))
    direct = flow_at_probes(points, forces, points, FLUID)
    assert np.allclose(op.apply(forces), direct, rtol=1e-10, atol=1e-14)


def test_zero_forces() -> None:
    sphere = build_sphere_shell(1.0, 162)
    op = build_mobility(sphere.nodes, FLUID)
    assert not velocities_from_forces(op, np.zeros((162, 3))).any()
    probes = np.array([[3.0, 0.0, 0.0], [0.0, 0.0, 5.0]])
    flow = flow_at_probes(sphere.nodes, np.zeros((162, 3)), probes, FLUID)
    assert not flow.any()


def test_uniform_push_on_sphere() -> None:
    sphere = build_sphere_shell(1.0, 162)
    fluid = FluidParams(1.0, 0.75 * mean_spacing(sphere))
    op = build_mobility(sphere.nodes, fluid)
    f = np.array([1.0, 2.0, -0.5])
    velocity = velocities_from_forces(op, np.tile(f, (162, 1))).mean(axis=0)
    parallel = velocity.dot(f) / np.linalg.norm(f) ** 2 * f
    assert velocity.dot(f) > 0
    drift = np.linalg.norm(velocity - parallel)
    assert drift < 1e-6 * np.linalg.norm(velocity)


def test_coarse_sphere_drag() -> None:
    sphere = build_sphere_shell(1.0, 162)
    fluid = FluidParams(viscosity=1.0, epsilon=0.75 * mean_spacing(sphere))
    force = rigid_drag(sphere.nodes, fluid, np.array([1.0, 0.0, 0.0]))
    assert force[0] == pytest.approx(6 * math.pi, rel=0.3)
    assert np.abs(force[1:]).max() < 1e-6 * force[0]


@pytest.mark.slow
def test_sphere_drag() -> None:
    sphere = build_sphere_shell(1.0, 642)
    fluid = FluidParams(viscosity=1.0, epsilon=0.75 * mean_spacing(sphere))
    force = rigid_drag(sphere.nodes, fluid, np.array([1.0, 0.0, 0.0]))
    assert force[0] == pytest.approx(6 * math.pi, rel=0.05)


@pytest.mark.slow
def test_sphere_drag_refinement() -> None:
    errors = []
    for n_points in (162, 642, 2562):
        sphere = build_sphere_shell(1.0, n_points)
        fluid = FluidParams(1.0, 0.75 * mean_spacing(sphere))
        force = rigid_drag(sphere.nodes, fluid, np.array([1.0, 0.0, 0.0]))
        errors.append(abs(force[0] - 6 * math.pi))
    assert errors[0] > errors[1] > errors[2]


@pytest.mark.slow
def test_sphere_drag_regularization() -> None:
    sphere = build_sphere_shell(1.0, 642)
    spacing = mean_spacing(sphere)
    drags = [
        rigid_drag(
            sphere.nodes,
            FluidParams(1.0, factor * spacing),
            np.array([1.0, 0.0, 0.0]),
        )[0]
        for factor in (0.75, 0.375)
    ]
    assert drags[1] == pytest.approx(drags[0], rel=0.05)


def test_capacity() -> None:
    with pytest.raises(MobilityCapacityError):
        build_mobility(np.zeros((11, 3)), FLUID, cap=10)


def test_force_shape_mismatch() -> None:
    op = build_mobility(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), FLUID)
    with pytest.raises(DimensionMismatchError):
        op.apply(np.zeros((3, 3)))


@pytest.mark.parametrize(("mu", "epsilon"), [(0.0, 1.0), (1.0, -1.0)])
def test_invalid_fluid(mu: float, epsilon: float) -> None:
    with pytest.raises(InvalidDesignError):
        FluidParams(mu, epsilon)
