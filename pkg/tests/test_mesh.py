import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blendforge import (
    TriMesh,
    arap_precompute,
    cotangent_laplacian,
    geodesic_ball,
    load_mesh,
    save_mesh,
    vertex_normals,
)
from blendforge.mesh import MeshError, MeshFormatError
from blendforge import synthetic

# hand computation: equilateral triangle, unit edges; every angle is 60 deg,
# each edge sees one opposite angle, weight = cot(60)/2 = 1/(2*sqrt(3))
W_EQUILATERAL = 0.2886751345948129
# unit-edge regular tetrahedron: two equilateral triangles per edge
W_TETRA = 0.5773502691896258


def triangle_mesh():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, np.sqrt(3) / 2, 0.0]])
    return TriMesh(v, np.array([[0, 1, 2]]))


# ---------------------------------------------------------------------------
# I/O


def test_load_off_tetrahedron(tmp_path, tetra):
    p = tmp_path / "tet.off"
    save_mesh(tetra, p)
    m = load_mesh(p)
    assert m.n_vertices == 4 and m.n_faces == 4


def test_load_off_icosahedron(tmp_path, icosa):
    p = tmp_path / "ico.off"
    save_mesh(icosa, p)
    m = load_mesh(p)
    assert m.n_vertices == 12 and m.n_faces == 20


def test_obj_zero_index_rejected(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")
    with pytest.raises(MeshFormatError, match="1-based"):
        load_mesh(p)


def test_off_roundtrip_exact(tmp_path, tetra):
    p = tmp_path / "t.off"
    save_mesh(tetra, p)
    back = load_mesh(p)
    assert np.array_equal(back.faces, tetra.faces)
    assert np.abs(back.vertices - tetra.vertices).max() <= 1e-6


def test_obj_roundtrip_exact(tmp_path, icosa):
    p = tmp_path / "i.obj"
    save_mesh(icosa, p)
    back = load_mesh(p)
    assert np.array_equal(back.faces, icosa.faces)
    assert np.abs(back.vertices - icosa.vertices).max() <= 1e-6


def test_save_unwritable_path(tetra):
    with pytest.raises(OSError):
        save_mesh(tetra, "/nonexistent-dir/out.off")


def test_parse_error_names_line(tmp_path):
    p = tmp_path / "bad.off"
    p.write_text("OFF\n2 1 0\n0 0 0\n1 oops 0\n3 0 1 1\n")
    with pytest.raises(MeshFormatError, match=r":4"):
        load_mesh(p)


def test_degenerate_face_rejected(tmp_path):
    p = tmp_path / "dg.off"
    p.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 1\n")
    with pytest.raises(MeshError, match="degenerate"):
        load_mesh(p)


def test_face_index_out_of_range():
    with pytest.raises(MeshError, match="outside"):
        TriMesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))


# ---------------------------------------------------------------------------
# cotangent Laplacian


def test_equilateral_triangle_weights():
    lap = cotangent_laplacian(triangle_mesh())
    L = lap.L.toarray()
    for i, j in [(0, 1), (1, 2), (0, 2)]:
        assert L[i, j] == pytest.approx(-W_EQUILATERAL, abs=1e-12)


def test_row_sums_zero(cross_gen, sphere):
    for mesh in (sphere, cross_gen.mesh):
        lap = cotangent_laplacian(mesh)
        rowsum = np.asarray(lap.L.sum(axis=1)).ravel()
        scale = np.abs(lap.L.diagonal()).max()
        assert np.abs(rowsum).max() <= 1e-9 * scale


def test_tetra_edge_weights(tetra):
    L = cotangent_laplacian(tetra).L.toarray()
    off = L[np.triu_indices(4, k=1)]
    assert np.allclose(off, -W_TETRA, atol=1e-12)


def test_zero_area_triangle_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
    with pytest.raises(MeshError, match="zero-area"):
        cotangent_laplacian(TriMesh(v, np.array([[0, 1, 2]])))


def test_laplacian_psd(sphere):
    L = cotangent_laplacian(sphere).L
    rng = np.random.default_rng(0)
    for _ in range(1000):
        x = rng.standard_normal(sphere.n_vertices)
        assert x @ (L @ x) >= -1e-9 * (x @ x)


def test_voronoi_areas_sum_to_surface(sphere, tetra):
    for mesh in (sphere, tetra):
        lap = cotangent_laplacian(mesh)
        assert lap.area_weights.sum() == pytest.approx(mesh.area(), rel=1e-9)
        assert (lap.area_weights > 0).all()


# ---------------------------------------------------------------------------
# normals


def test_flat_grid_normals():
    grid = synthetic.grid_sheet(5, 5)
    normals, valid = vertex_normals(grid)
    assert valid.all()
    assert np.allclose(np.abs(normals[:, 2]), 1.0, atol=1e-12)
    assert len(np.unique(np.sign(normals[:, 2]))) == 1  # consistent orientation


def test_sphere_normals_match_analytic(sphere_fine):
    normals, valid = vertex_normals(sphere_fine)
    assert valid.all()
    unit = sphere_fine.vertices / np.linalg.norm(sphere_fine.vertices, axis=1)[:, None]
    angles = np.degrees(np.arccos(np.clip(np.einsum("ij,ij->i", normals, unit), -1, 1)))
    assert angles.max() <= 5.0


def test_tetra_normals_outward(tetra):
    normals, valid = vertex_normals(tetra)
    assert valid.all()
    centroid = tetra.vertices.mean(axis=0)
    outward = tetra.vertices - centroid
    assert (np.einsum("ij,ij->i", normals, outward) > 0).all()


def test_normals_unit_length(cross_gen):
    normals, valid = vertex_normals(cross_gen.mesh)
    lens = np.linalg.norm(normals[valid], axis=1)
    assert np.abs(lens - 1.0).max() <= 1e-9


def test_isolated_vertex_flagged():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5.0]])
    m = TriMesh(v, np.array([[0, 1, 2]]))
    normals, valid = vertex_normals(m)
    assert not valid[3] and np.all(normals[3] == 0)


# ---------------------------------------------------------------------------
# geodesic balls


def fan_path():
    """Four collinear unit-spaced vertices fanned to a distant apex."""
    v = np.array(
        [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [1.5, 9.0, 0]], dtype=float
    )
    f = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4]])
    return TriMesh(v, f)


def brute_force_distances(mesh, seed):
    """Floyd-Warshall oracle over the edge-length graph."""
    n = mesh.n_vertices
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for i, j in mesh.edges():
        w = np.linalg.norm(mesh.vertices[i] - mesh.vertices[j])
        d[i, j] = d[j, i] = min(d[i, j], w)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d[seed]


def test_ball_radius_zero(sphere):
    assert list(geodesic_ball(sphere, 7, 0.0)) == [7]


def test_ball_covers_component(sphere):
    ball = geodesic_ball(sphere, 0, 1e9)
    assert len(ball) == sphere.n_vertices


def test_ball_on_path_matches_brute_force():
    mesh = fan_path()
    # oracle: distances from vertex 0 are 0, 1, 2, 3 along the path
    oracle = brute_force_distances(mesh, 0)
    expected = set(np.flatnonzero(oracle <= 1.5))
    assert expected == {0, 1}
    assert set(geodesic_ball(mesh, 0, 1.5)) == expected


@settings(max_examples=40, deadline=None)
@given(
    r1=st.floats(min_value=0, max_value=2.5),
    r2=st.floats(min_value=0, max_value=2.5),
    seed=st.integers(min_value=0, max_value=161),
)
def test_ball_monotone_in_radius(sphere, r1, r2, seed):
    if r1 > r2:
        r1, r2 = r2, r1
    small = set(geodesic_ball(sphere, seed, r1))
    large = set(geodesic_ball(sphere, seed, r2))
    assert small <= large


# ---------------------------------------------------------------------------
# ARAP precomputation


def single_cluster(mesh):
    from blendforge.mesh import _triangle_half_cotangents

    f = mesh.faces
    w = _triangle_half_cotangents(mesh)
    edges = np.concatenate([f[:, [1, 2]], f[:, [2, 0]], f[:, [0, 1]]])
    return [(edges, w.T.reshape(-1))]


def test_single_cluster_matches_laplacian(tetra, sphere):
    for mesh in (tetra, sphere):
        L_arap, _ = arap_precompute(mesh, single_cluster(mesh))
        L_cot = cotangent_laplacian(mesh).L
        assert abs(L_arap - L_cot).max() <= 1e-12


def test_trace_kv_nonnegative(sphere):
    L, K = arap_precompute(sphere, single_cluster(sphere))
    V = sphere.vertices
    KV = K @ V  # (3, 3) here: single cluster
    assert np.trace(KV) >= 0
    assert np.trace(KV) == pytest.approx(np.sum((L @ V) * V), rel=1e-12)


def dense_arap_oracle(V, edges, weights):
    """Dense single-cluster assembly: A C A^T from explicit incidence."""
    n = len(V)
    A = np.zeros((n, len(edges)))
    for e, (i, j) in enumerate(edges):
        A[i, e] = 1.0
        A[j, e] = -1.0
    G = A @ np.diag(weights) @ A.T
    return G, V.T @ G


def test_tetra_block_against_dense_oracle(tetra):
    (edges, weights), = single_cluster(tetra)
    G_dense, K_dense = dense_arap_oracle(tetra.vertices, edges, weights)
    L, K = arap_precompute(tetra, [(edges, weights)])
    assert K.shape == (3, 4)
    assert np.abs(L.toarray() - G_dense).max() <= 1e-12
    assert np.abs(K.toarray() - K_dense).max() <= 1e-12


def test_multi_cluster_brute_force_small(tetra):
    # split the edge set across two clusters; naive double-loop oracle
    (edges, weights), = single_cluster(tetra)
    half = len(edges) // 2
    sets = [(edges[:half], weights[:half]), (edges[half:], weights[half:])]
    L, K = arap_precompute(tetra, sets)
    V = tetra.vertices
    n = tetra.n_vertices
    L_naive = np.zeros((n, n))
    K_naive = np.zeros((6, n))
    for k, (es, ws) in enumerate(sets):
        for (i, j), c in zip(es, ws):
            for a, b, s in [(i, i, 1), (j, j, 1), (i, j, -1), (j, i, -1)]:
                L_naive[a, b] += s * c
        G = np.zeros((n, n))
        for (i, j), c in zip(es, ws):
            G[i, i] += c
            G[j, j] += c
            G[i, j] -= c
            G[j, i] -= c
        K_naive[3 * k : 3 * k + 3] = V.T @ G
    assert np.abs(L.toarray() - L_naive).max() <= 1e-12
    assert np.abs(K.toarray() - K_naive).max() <= 1e-12


def test_empty_cluster_rejected(tetra):
    with pytest.raises(ValueError, match="no edges"):
        arap_precompute(tetra, [(np.zeros((0, 2), dtype=int), np.zeros(0))])
    with pytest.raises(ValueError, match="at least one"):
        arap_precompute(tetra, [])
