import numpy as np
import pytest

from nnmg.mesh import (
    MappingInversionError,
    Mesh,
    MeshError,
    generate_hypercube,
    generate_lshape,
    generate_perturbed,
    invert_mapping,
    map_to_real,
    read_msh,
    write_msh,
)


def test_hypercube_counts():
    m = generate_hypercube(2, (-1.0, 1.0), 0)
    assert m.n_cells == 1 and m.n_vertices == 4

    m = generate_hypercube(3, (-1.0, 1.0), 2)
    assert m.n_cells == 64

    m = generate_hypercube(2, (-1.0, 1.0), 5)
    assert m.n_vertices == 33**2  # Q1 space on it has 1089 DoFs


def test_hypercube_deterministic_ordering():
    a = generate_hypercube(2, (-1.0, 1.0), 3)
    b = generate_hypercube(2, (-1.0, 1.0), 3)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.cells, b.cells)


def test_hypercube_boundary_ids():
    m = generate_hypercube(2, (0.0, 1.0), 2)
    ids = set(m.boundary_faces[:, 2].tolist())
    assert ids == {0, 1, 2, 3}
    # four faces per side on a 4x4 grid
    assert np.all(np.bincount(m.boundary_faces[:, 2]) == 4)


def test_hypercube_affine_jacobians():
    m = generate_hypercube(2, (-1.0, 1.0), 3)
    pts = np.random.default_rng(0).uniform(0, 1, size=(5, 2))
    J = m.jacobians(pts)
    # constant per cell up to roundoff of the multilinear evaluation
    assert np.abs(J - J[:, :1]).max() <= 1e-14 * np.abs(J).max()


def test_lshape_counts():
    m = generate_lshape(2, 1, 0)
    assert m.n_cells == 12

    m = generate_lshape(2, 3, 0)
    assert m.n_cells == 192  # structured coarsest level

    m3 = generate_lshape(3, 1, 0)
    assert m3.n_cells == 7 * 8


def test_lshape_corner_refinement_is_local_and_conforming():
    base = generate_lshape(2, 2, 0)
    ref = generate_lshape(2, 2, corner_refine_rounds=2, corner_band=2)
    assert ref.n_cells > base.n_cells
    # smallest cells are near the origin and 4x smaller than the base size
    d = ref.cell_diameters()
    cent = ref.cell_centroids()
    near = np.linalg.norm(cent, axis=1) < 0.3
    assert d[near].min() < d.max() / 4 + 1e-12
    ref.validate()  # conforming, no inverted cells


def test_map_to_real_identity_and_affine():
    m = Mesh(2, [[0, 0], [1, 0], [0, 1], [1, 1]], [[0, 1, 2, 3]])
    assert np.allclose(map_to_real(m.mapping(0), [0.3, 0.7]), [0.3, 0.7])

    m2 = Mesh(2, [[0, 0], [2, 0], [0, 2], [2, 2]], [[0, 1, 2, 3]])
    assert np.allclose(map_to_real(m2.mapping(0), [0.5, 0.5]), [1.0, 1.0])


def test_invert_mapping_affine_closed_form():
    m = Mesh(2, [[0, 0], [2, 0], [0, 2], [2, 2]], [[0, 1, 2, 3]])
    xhat = invert_mapping(m.mapping(0), [1.0, 1.0])
    assert np.allclose(xhat, [0.5, 0.5], atol=1e-14)


def test_invert_mapping_composition_oracle():
    # random bilinear cell: invert(map(xhat)) == xhat
    rng = np.random.default_rng(3)
    verts = np.array([[0, 0], [1.1, 0.1], [-0.2, 1.3], [1.4, 1.2]])
    m = Mesh(2, verts, [[0, 1, 2, 3]])
    mp = m.mapping(0)
    for _ in range(100):
        xhat = rng.uniform(0, 1, 2)
        x = map_to_real(mp, xhat)
        back = invert_mapping(mp, x, tol=1e-13)
        assert np.linalg.norm(back - xhat) <= 1e-10
        assert np.linalg.norm(map_to_real(mp, back) - x) <= 1e-12


def test_invert_mapping_composition_3d():
    rng = np.random.default_rng(4)
    base = generate_hypercube(3, (0.0, 1.0), 1)
    m = generate_perturbed(base, 0.1, seed=9)
    for cell in range(0, m.n_cells, 3):
        mp = m.mapping(cell)
        for _ in range(10):
            xhat = rng.uniform(0, 1, 3)
            back = invert_mapping(mp, mp.map_to_real(xhat))
            assert np.linalg.norm(back - xhat) <= 1e-10


def test_invert_mapping_outside_point():
    verts = np.array([[0, 0], [1.1, 0.1], [-0.2, 1.3], [1.4, 1.2]])
    m = Mesh(2, verts, [[0, 1, 2, 3]])
    mp = m.mapping(0)
    x = mp.map_to_real(np.array([1.2, 0.5]))  # outside but near
    xhat = invert_mapping(mp, x)
    assert not np.all((xhat >= 0) & (xhat <= 1))
    assert np.linalg.norm(mp.map_to_real(xhat) - x) <= 1e-12


def test_invert_mapping_divergence():
    # strongly warped quad: points beyond the bilinear fold have no preimage
    m = Mesh(2, [[0, 0], [1, 0], [0, 1], [0.55, 0.55]], [[0, 1, 2, 3]])
    with pytest.raises(MappingInversionError):
        invert_mapping(m.mapping(0), [5.0, 5.0])


def test_perturbed_identity_amplitude_zero():
    base = generate_hypercube(2, (-1.0, 1.0), 3)
    m = generate_perturbed(base, 0.0, seed=1)
    assert np.array_equal(m.vertices, base.vertices)
    assert np.array_equal(m.cells, base.cells)


def test_perturbed_keeps_topology_and_boundary():
    base = generate_hypercube(2, (-1.0, 1.0), 3)
    m = generate_perturbed(base, 0.08, seed=2)
    assert np.array_equal(m.cells, base.cells)
    assert np.array_equal(m.boundary_faces, base.boundary_faces)
    moved = np.linalg.norm(m.vertices - base.vertices, axis=1)
    on_boundary = np.abs(np.abs(base.vertices).max(axis=1) - 1.0) < 1e-12
    assert moved[on_boundary].max() == 0.0
    assert moved[~on_boundary].max() > 0.0
    m.validate()


def test_perturbed_rejects_large_amplitude():
    base = generate_hypercube(2, (-1.0, 1.0), 2)
    with pytest.raises(ValueError):
        generate_perturbed(base, 0.3, seed=1)  # >= half min edge (0.25)


def test_invalid_mesh_inverted_cell():
    with pytest.raises(MeshError):
        Mesh(2, [[0, 0], [1, 0], [0, 1], [1, 1]], [[1, 0, 3, 2]])


def test_msh_roundtrip_identity(tmp_path):
    for mesh in [
        generate_hypercube(2, (-1.0, 1.0), 1),
        generate_perturbed(generate_hypercube(2, (-1.0, 1.0), 2), 0.1, seed=5),
        generate_hypercube(3, (0.0, 2.0), 1),
    ]:
        path = tmp_path / "m.msh"
        write_msh(mesh, path)
        back = read_msh(path)
        assert np.array_equal(back.vertices, mesh.vertices)  # bit-exact coordinates
        assert np.array_equal(back.cells, mesh.cells)
        assert sorted(map(tuple, back.boundary_faces.tolist())) == sorted(
            map(tuple, mesh.boundary_faces.tolist())
        )


def test_msh_single_quad(tmp_path):
    path = tmp_path / "one.msh"
    path.write_text(
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
        "$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n"
        "$Elements\n1\n1 3 2 0 1 1 2 3 4\n$EndElements\n"
    )
    m = read_msh(path)
    assert m.n_cells == 1 and m.n_vertices == 4 and m.dim == 2


def test_msh_rejects_triangle(tmp_path):
    path = tmp_path / "tri.msh"
    path.write_text(
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
        "$Nodes\n3\n1 0 0 0\n2 1 0 0\n3 0 1 0\n$EndNodes\n"
        "$Elements\n1\n1 2 2 0 1 1 2 3\n$EndElements\n"
    )
    with pytest.raises(MeshError, match="unsupported element type"):
        read_msh(path)


def test_msh_malformed_section(tmp_path):
    path = tmp_path / "bad.msh"
    path.write_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\nnot-a-number\n$EndNodes\n")
    with pytest.raises(MeshError):
        read_msh(path)


def test_dump_csv(tmp_path):
    m = generate_hypercube(2, (-1.0, 1.0), 1)
    vp, cp = __import__("nnmg.mesh", fromlist=["dump_csv"]).dump_csv(m, tmp_path)
    rows = open(vp).read().strip().split("\n")
    assert len(rows) == m.n_vertices + 1
    rows = open(cp).read().strip().split("\n")
    assert len(rows) == m.n_cells + 1
