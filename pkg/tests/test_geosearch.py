import numpy as np
import pytest

from nnmg.fespace import build_space
from nnmg.geosearch import (
    GeosearchError,
    build_tree,
    locate_points,
    project_to_reference,
    resolve_owner_ranks,
)
from nnmg.mesh import PartitionLabels, generate_hypercube, generate_lshape, generate_perturbed


def brute_force_candidates(mesh, eps, point):
    lo, hi = mesh.cell_bounding_boxes()
    hit = np.all((point >= lo - eps) & (point <= hi + eps), axis=1)
    return np.where(hit)[0]


def test_single_cell_tree_is_leaf():
    mesh = generate_hypercube(2, (0.0, 1.0), 0)
    tree = build_tree(mesh)
    assert tree.n_nodes == 1
    assert np.array_equal(tree.query([0.5, 0.5]), [0])


def test_query_contains_own_centroid():
    mesh = generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 3), 0.1, seed=4)
    tree = build_tree(mesh)
    for cell, c in enumerate(mesh.cell_centroids()):
        assert cell in tree.query(c)


def test_query_equals_brute_force_scan():
    mesh = generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 3), 0.09, seed=1)
    eps = 1e-3
    tree = build_tree(mesh, eps_box=eps, leaf_size=4)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1.1, 1.1, size=(500, 2))
    pt_idx, cells = tree.query_batch(pts)
    for i, p in enumerate(pts):
        got = np.sort(cells[pt_idx == i])
        want = brute_force_candidates(mesh, eps, p)
        assert np.array_equal(got, want)


def test_project_to_reference():
    assert np.allclose(project_to_reference(np.array([1.2, 0.5])), [1.0, 0.5])
    assert np.allclose(project_to_reference(np.array([-0.1, 1.3, 0.4])), [0.0, 1.0, 0.4])
    x = np.array([0.3, 0.8])
    assert np.array_equal(project_to_reference(x), x)


def test_locate_mesh_vertices_tie_break():
    mesh = generate_hypercube(2, (0.0, 1.0), 2)
    tree = build_tree(mesh)
    loc = locate_points(tree, mesh, mesh.vertices)
    assert not loc.projected.any()
    # every vertex resolves to the lowest-indexed cell touching it
    for i, v in enumerate(mesh.vertices):
        touching = [
            c for c in range(mesh.n_cells) if np.any(np.all(np.isclose(mesh.vertices[mesh.cells[c]], v), axis=1))
        ]
        assert loc.cells[i] == min(touching)
        corner = loc.xhat[i]
        assert np.all((np.isclose(corner, 0)) | (np.isclose(corner, 1)))


def test_locate_nested_support_points_on_lattice():
    coarse = generate_hypercube(2, (-1.0, 1.0), 2)
    fine = generate_hypercube(2, (-1.0, 1.0), 3)
    p = 2
    space = build_space(fine, p)
    tree = build_tree(coarse)
    loc = locate_points(tree, coarse, space.support_points)
    assert not loc.projected.any()
    # fine support points sit on the {0, 1/(2p), ..., 1} lattice of the coarse cells
    lattice = np.linspace(0, 1, 2 * p + 1)
    dist = np.abs(loc.xhat[:, :, None] - lattice[None, None, :]).min(axis=2)
    assert dist.max() <= 1e-10


def test_locate_perturbed_points_interior():
    base_c = generate_hypercube(2, (-1.0, 1.0), 2)
    base_f = generate_hypercube(2, (-1.0, 1.0), 3)
    coarse = generate_perturbed(base_c, 0.12, seed=11)
    fine = generate_perturbed(base_f, 0.06, seed=12)
    space = build_space(fine, 1)
    tree = build_tree(coarse)
    loc = locate_points(tree, coarse, space.support_points)
    # non-nested: interior fine vertices are not coarse lattice points
    lattice = np.array([0.0, 0.5, 1.0])
    dist = np.abs(loc.xhat[:, :, None] - lattice[None, None, :]).min(axis=2)
    interior = np.abs(np.abs(space.support_points).max(axis=1) - 1) > 1e-12
    assert (dist[interior].max(axis=1) > 1e-3).sum() > 0.5 * interior.sum()


def test_locate_outside_point_projected():
    coarse = generate_hypercube(2, (0.0, 1.0), 1)
    tree = build_tree(coarse, eps_box=1e-2)
    loc = locate_points(tree, coarse, np.array([[0.5, 1.001], [0.5, 0.5]]))
    assert loc.projected[0] and not loc.projected[1]
    assert np.isclose(loc.xhat[0, 1], 1.0)  # clamped onto the box face


def test_locate_far_outside_errors():
    coarse = generate_hypercube(2, (0.0, 1.0), 1)
    tree = build_tree(coarse, eps_box=1e-2)
    with pytest.raises(GeosearchError, match="outside padded domain"):
        locate_points(tree, coarse, np.array([[5.0, 5.0]]))


def test_locate_determinism():
    mesh = generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 3), 0.1, seed=2)
    tree = build_tree(mesh)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.98, 0.98, size=(200, 2))
    a = locate_points(tree, mesh, pts)
    b = locate_points(tree, mesh, pts)
    assert np.array_equal(a.cells, b.cells)
    assert np.array_equal(a.xhat, b.xhat)
    assert np.array_equal(a.projected, b.projected)


def test_locate_soundness_residual():
    mesh = generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 3), 0.1, seed=5)
    tree = build_tree(mesh)
    rng = np.random.default_rng(6)
    pts = rng.uniform(-0.95, 0.95, size=(300, 2))
    eps_geo = 1e-8 * mesh.diameter()
    loc = locate_points(tree, mesh, pts, eps_geo=eps_geo)
    back = mesh.map_points(loc.xhat, loc.cells)
    ok = ~loc.projected
    assert np.linalg.norm(back[ok] - pts[ok], axis=1).max() <= eps_geo


def test_locate_completeness_inside_domain():
    shapely = pytest.importorskip("shapely")
    from shapely.geometry import Point, Polygon

    mesh = generate_lshape(2, 2, 1)
    poly = Polygon([(-1, -1), (1, -1), (1, 0), (0, 0), (0, 1), (-1, 1)])
    tree = build_tree(mesh)
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1, 1, size=(500, 2))
    inside = np.array([poly.contains(Point(*p)) for p in pts])
    loc = locate_points(tree, mesh, pts[inside])
    assert not loc.projected.any()
    assert (loc.cells >= 0).all()


def test_resolve_owner_ranks_and_recount():
    mesh = generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 3), 0.1, seed=8)
    tree = build_tree(mesh)
    rng = np.random.default_rng(9)
    pts = rng.uniform(-0.9, 0.9, size=(400, 2))
    loc = locate_points(tree, mesh, pts)

    single = PartitionLabels(mesh, np.zeros(mesh.n_cells, dtype=int), 1)
    stats = resolve_owner_ranks(loc, single, requester_ranks=np.zeros(len(loc), dtype=int))
    assert stats.n_remote == 0 and np.all(loc.owner_rank == 0)

    labels = PartitionLabels(mesh, rng.integers(0, 12, mesh.n_cells), 12)
    req = rng.integers(0, 12, len(loc))
    stats = resolve_owner_ranks(loc, labels, requester_ranks=req)
    # brute-force recount
    want = sum(int(req[i] != labels.owner_rank[loc.cells[i]]) for i in range(len(loc)))
    assert stats.n_remote == want
    assert np.array_equal(loc.owner_rank, labels.owner_rank[loc.cells])
