import numpy as np
import pytest

from nnmg.fespace import (
    Shape1D,
    build_space,
    dirichlet_constraints,
    eval_shape_1d,
    evaluate_field,
    gauss_lobatto,
    interpolate,
)
from nnmg.mesh import generate_hypercube, generate_perturbed, invert_mapping


def test_gauss_lobatto_nodes():
    assert np.allclose(gauss_lobatto(2), [0, 1])
    assert np.allclose(gauss_lobatto(3), [0, 0.5, 1])
    n4 = gauss_lobatto(4)
    assert np.allclose(n4, [0, (1 - 1 / np.sqrt(5)) / 2, (1 + 1 / np.sqrt(5)) / 2, 1])


def test_shape1d_nodal_and_partition_of_unity():
    vals, _ = eval_shape_1d(1, [0.5])
    assert np.allclose(vals[0], [0.5, 0.5])
    vals, _ = eval_shape_1d(2, [0.0])
    assert np.allclose(vals[0], [1, 0, 0])
    rng = np.random.default_rng(0)
    for p in range(1, 6):
        s = Shape1D(p)
        t = rng.uniform(-0.2, 1.2, 40)
        v = s.values(t)
        assert np.abs(v.sum(axis=1) - 1).max() <= 1e-13
        # delta property at the nodes, exactly
        vn = s.values(s.nodes)
        assert np.array_equal(vn, np.eye(p + 1))
        # derivative by finite differences
        h = 1e-6
        fd = (s.values(t + h) - s.values(t - h)) / (2 * h)
        assert np.abs(s.derivatives(t) - fd).max() <= 1e-6


# hierarchy row l of the sanity tables has a finest mesh with l-1 refinements
@pytest.mark.parametrize(
    "dim,refs,p,expect",
    [(2, 4, 4, 4225), (3, 4, 2, 35937), (2, 5, 1, 1089)],
)
def test_dof_counts_structured(dim, refs, p, expect):
    mesh = generate_hypercube(dim, (-1.0, 1.0), refs)
    space = build_space(mesh, p)
    assert space.n_dofs == expect
    assert space.n_dofs == (2**refs * p + 1) ** dim


def test_vector_space_counts():
    mesh = generate_hypercube(3, (-1.0, 1.0), 0)
    space = build_space(mesh, 1, n_components=3)
    assert space.n_dofs == 24  # 8 vertices x 3 components


def test_shared_dofs_have_unique_index():
    mesh = generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 2), 0.1, seed=1)
    space = build_space(mesh, 3)
    # total assignments minus duplicates equals the DoF count
    assert space.n_scalar_dofs == len(np.unique(space.cell_dofs))
    # shared entity: support points coming from different cells agree
    pts = mesh.map_points(space.reference_nodes)
    for cell in range(mesh.n_cells):
        assert np.abs(pts[cell] - space.support_points[space.cell_dofs[cell]]).max() <= 1e-12


def test_dirichlet_counts():
    mesh = generate_hypercube(2, (-1.0, 1.0), 1)
    space = build_space(mesh, 1)
    c = dirichlet_constraints(space, "all", 0.0)
    assert len(c) == 8 and space.n_dofs - len(c) == 1

    assert len(dirichlet_constraints(space, [])) == 0

    for l, p in [(2, 1), (2, 2), (3, 2)]:
        mesh = generate_hypercube(2, (-1.0, 1.0), l)
        space = build_space(mesh, p)
        c = dirichlet_constraints(space, "all")
        assert space.n_dofs - len(c) == (2**l * p - 1) ** 2


def test_dirichlet_unknown_id():
    mesh = generate_hypercube(2, (-1.0, 1.0), 1)
    space = build_space(mesh, 1)
    with pytest.raises(ValueError):
        dirichlet_constraints(space, [17])


def test_dirichlet_idempotent():
    mesh = generate_hypercube(2, (-1.0, 1.0), 2)
    space = build_space(mesh, 2)
    c = dirichlet_constraints(space, "all", lambda x: x[:, 0])
    u = np.random.default_rng(0).standard_normal(space.n_dofs)
    once = c.apply(u.copy())
    twice = c.apply(c.apply(u.copy()))
    assert np.array_equal(once, twice)


def test_interpolate_constant_and_linear():
    mesh = generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 2), 0.1, seed=3)
    space = build_space(mesh, 2)
    assert np.array_equal(interpolate(space, 1.0), np.ones(space.n_dofs))

    f = lambda x: 2.0 * x[:, 0] - 0.5 * x[:, 1] + 0.25
    u = interpolate(space, f)
    rng = np.random.default_rng(5)
    cells = rng.integers(0, mesh.n_cells, 50)
    xhat = rng.uniform(0, 1, (50, 2))
    vals = evaluate_field(space, u, cells, xhat)
    x = mesh.map_points(xhat[: len(cells)], cells) if False else np.einsum(
        "pv,pvd->pd",
        __import__("nnmg.mesh", fromlist=["corner_weights"]).corner_weights(2, xhat),
        mesh.vertices[mesh.cells[cells]],
    )
    assert np.abs(vals - f(x)).max() <= 1e-12


def test_interpolate_quadratic_not_captured_by_p1():
    mesh = generate_hypercube(1 + 1, (0.0, 1.0), 1)
    space = build_space(mesh, 1)
    f = lambda x: x[:, 0] ** 2
    u = interpolate(space, f)
    assert np.abs(u - f(space.support_points)).max() == 0.0
    mid = evaluate_field(space, u, [0], [[0.5, 0.5]])
    x = mesh.map_points(np.array([[0.5, 0.5]]), np.array([0]))
    assert abs(mid[0] - f(x)[0]) > 1e-3  # interpolation error is visible


def test_partition_of_unity_full_basis():
    mesh = generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 2), 0.08, seed=2)
    space = build_space(mesh, 3)
    u = np.ones(space.n_dofs)
    rng = np.random.default_rng(1)
    cells = rng.integers(0, mesh.n_cells, 100)
    xhat = rng.uniform(0, 1, (100, 2))
    vals = evaluate_field(space, u, cells, xhat)
    assert np.abs(vals - 1).max() <= 1e-12


def test_continuity_across_shared_faces():
    mesh = generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 2), 0.1, seed=8)
    space = build_space(mesh, 3)
    u = np.random.default_rng(2).standard_normal(space.n_dofs)
    rng = np.random.default_rng(3)
    # interior vertical faces between lexicographic neighbors (cells c, c+1)
    n = 4
    for row in range(n):
        for col in range(n - 1):
            ca, cb = row * n + col, row * n + col + 1
            t = rng.uniform(0, 1)
            xa = np.array([[1.0, t]])  # right face of ca
            x_phys = mesh.map_points(xa, np.array([ca]))[0]
            xb = invert_mapping(mesh.mapping(cb), x_phys)
            va = evaluate_field(space, u, [ca], xa)[0]
            vb = evaluate_field(space, u, [cb], [xb])[0]
            assert abs(va - vb) <= 1e-11 * max(1, np.abs(u).max())
