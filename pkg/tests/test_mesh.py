import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from relightkit.errors import MeshStructureError, NumericalError, ObjParseError, PreconditionError
from relightkit.mesh import (
    SmoothingConfig,
    TriangleMesh,
    boundary_vertices,
    compute_vertex_normals,
    laplacian_smooth,
    load_obj,
    save_obj,
)
from relightkit.primitives import grid_plane, icosphere


def reference_smooth_step(positions, triangles, cotangent=True):
    """Loop-by-loop Laplacian step; angles from arccos, no vectorization."""
    n = len(positions)
    weights = {}
    for tri in triangles:
        for k in range(3):
            a, i, j = int(tri[k]), int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])
            if cotangent:
                u = [positions[i][c] - positions[a][c] for c in range(3)]
                v = [positions[j][c] - positions[a][c] for c in range(3)]
                nu = math.sqrt(sum(x * x for x in u))
                nv = math.sqrt(sum(x * x for x in v))
                cosang = sum(x * y for x, y in zip(u, v)) / (nu * nv)
                w = 0.5 / math.tan(math.acos(max(-1.0, min(1.0, cosang))))
            else:
                w = 1.0
            key = (min(i, j), max(i, j))
            if cotangent:
                weights[key] = weights.get(key, 0.0) + w
            else:
                weights[key] = 1.0
    acc = [[0.0, 0.0, 0.0] for _ in range(n)]
    total = [0.0] * n
    for (i, j), w in weights.items():
        w = max(w, 0.0)
        for c in range(3):
            acc[i][c] += w * positions[j][c]
            acc[j][c] += w * positions[i][c]
        total[i] += w
        total[j] += w
    out = []
    for v in range(n):
        if total[v] > 0:
            out.append([acc[v][c] / total[v] for c in range(3)])
        else:
            out.append(list(positions[v]))
    return out


def write(tmp_path, text, name="m.obj"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------------------
# OBJ


def test_single_triangle_obj(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert m.n_vertices == 3 and m.n_triangles == 1


def test_quad_face_fans(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"))
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_index_out_of_range(tmp_path):
    with pytest.raises(MeshStructureError):
        load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"))


def test_malformed_line_reports_line_number(tmp_path):
    with pytest.raises(ObjParseError, match="line 2"):
        load_obj(write(tmp_path, "v 0 0 0\nv 1 zero 0\n"))


def test_slash_forms_negative_indices_and_ignored_records(tmp_path):
    text = (
        "# comment\no thing\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\n"
        "usemtl x\ns off\nf 1/1/1 2//1 -1/1/1\n"
    )
    m = load_obj(write(tmp_path, text))
    assert m.triangles.tolist() == [[0, 1, 2]]
    assert np.allclose(m.vertex_normals, [[0, 0, 1]] * 3)


def test_vertex_colors_and_round_trip(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 0 1 0 0 0 1\nf 1 2 3\n"))
    assert np.array_equal(m.colors, np.eye(3))
    save_obj(m, tmp_path / "out.obj")
    again = load_obj(tmp_path / "out.obj")
    assert np.allclose(again.positions, m.positions)
    assert np.allclose(again.colors, m.colors)
    assert np.array_equal(again.triangles, m.triangles)


def test_empty_obj_is_structural_error(tmp_path):
    with pytest.raises(MeshStructureError):
        load_obj(write(tmp_path, "# nothing\n"))


def test_mesh_invariants_enforced():
    with pytest.raises(MeshStructureError):
        TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])
    with pytest.raises(MeshStructureError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, np.nan, 0]], [[0, 1, 2]])
    with pytest.raises(MeshStructureError):
        TriangleMesh(np.eye(3), [[0, 1, 2]], vertex_normals=np.ones((3, 3)))


# ---------------------------------------------------------------------------
# normals


def test_planar_quad_normals():
    m = TriangleMesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])
    assert np.allclose(compute_vertex_normals(m).vertex_normals, [0, 0, 1])


def test_icosphere_normals_match_positions():
    m = compute_vertex_normals(icosphere(2))
    p = m.positions / np.linalg.norm(m.positions, axis=1, keepdims=True)
    cosang = np.clip(np.sum(p * m.vertex_normals, axis=1), -1, 1)
    assert np.degrees(np.arccos(cosang)).max() < 2.0


def test_mirrored_winding_flips_normals():
    m = compute_vertex_normals(icosphere(1))
    flipped = compute_vertex_normals(m.replace(triangles=m.triangles[:, ::-1], vertex_normals=None))
    assert np.allclose(flipped.vertex_normals, -m.vertex_normals)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_normals_rotate_with_mesh(seed):
    R = Rotation.random(random_state=seed).as_matrix()
    m = icosphere(1, center=(0.3, -0.2, 0.1))
    n0 = compute_vertex_normals(m).vertex_normals
    n1 = compute_vertex_normals(m.transformed(R)).vertex_normals
    assert np.abs(n1 - n0 @ R.T).max() < 1e-6


# ---------------------------------------------------------------------------
# smoothing


def test_steps_zero_is_identity():
    m = icosphere(2)
    out = laplacian_smooth(m, SmoothingConfig(steps=0))
    assert np.array_equal(out.positions, m.positions)


def test_config_validation():
    with pytest.raises(PreconditionError):
        SmoothingConfig(steps=-1)
    with pytest.raises(PreconditionError):
        SmoothingConfig(lam=0.0)
    with pytest.raises(PreconditionError):
        SmoothingConfig(lam=1.5)
    with pytest.raises(ValueError):
        SmoothingConfig(scheme="bilateral")


def test_plane_interior_is_fixed_point():
    plane = grid_plane(n=32, size=2.0)
    out = laplacian_smooth(plane, SmoothingConfig(steps=10))
    disp = out.positions - plane.positions
    # nothing leaves the plane
    assert np.abs(disp[:, 1]).max() < 1e-12
    # boundary drift reaches one ring per step; farther vertices do not move
    ij = np.round((plane.positions[:, [0, 2]] + 1.0) / (2.0 / 32)).astype(int)
    rings = np.minimum(ij, 32 - ij).min(axis=1)
    assert np.abs(disp[rings > 10]).max() < 1e-6


def test_plane_with_pinned_boundary_is_exact_fixed_point():
    plane = grid_plane(n=16, size=2.0)
    out = laplacian_smooth(plane, SmoothingConfig(steps=10, pin_boundary=True))
    assert np.abs(out.positions - plane.positions).max() < 1e-6


def test_boundary_detection():
    plane = grid_plane(n=4)
    assert boundary_vertices(plane.triangles, plane.n_vertices).sum() == 16
    sphere = icosphere(1)
    assert not boundary_vertices(sphere.triangles, sphere.n_vertices).any()


@pytest.mark.parametrize("scheme", ["cotangent", "uniform"])
def test_matches_reference_smoother(scheme):
    m = icosphere(2)
    ref = [list(p) for p in m.positions]
    cur = m
    for _ in range(10):
        ref = reference_smooth_step(ref, m.triangles, cotangent=scheme == "cotangent")
        cur = laplacian_smooth(cur, SmoothingConfig(steps=1, scheme=scheme))
        assert np.abs(cur.positions - np.array(ref)).max() < 1e-9


def test_icosphere_radius_decreases_every_step():
    m = icosphere(2)
    radii = [np.linalg.norm(m.positions, axis=1).mean()]
    for _ in range(10):
        m = laplacian_smooth(m, SmoothingConfig(steps=1))
        radii.append(np.linalg.norm(m.positions, axis=1).mean())
    assert all(b < a for a, b in zip(radii, radii[1:]))


def test_connectivity_preserved_and_normals_refreshed():
    m = compute_vertex_normals(icosphere(2))
    out = laplacian_smooth(m, SmoothingConfig(steps=3))
    assert out.n_vertices == m.n_vertices
    assert np.array_equal(out.triangles, m.triangles)
    assert np.allclose(np.linalg.norm(out.vertex_normals, axis=1), 1.0)


def test_uniform_smoothing_stays_in_one_ring_hull():
    rng = np.random.default_rng(3)
    plane = grid_plane(n=8, size=2.0)
    pos = plane.positions + rng.normal(scale=0.03, size=plane.positions.shape)
    m = plane.replace(positions=pos, vertex_normals=None)
    out = laplacian_smooth(m, SmoothingConfig(steps=1, scheme="uniform"))
    interior = ~boundary_vertices(m.triangles, m.n_vertices)
    for v in np.flatnonzero(interior):
        ring = np.unique(m.triangles[(m.triangles == v).any(axis=1)])
        ring = ring[ring != v]
        # uniform step lands exactly on the ring centroid, inside the hull
        assert np.allclose(out.positions[v], pos[ring].mean(axis=0), atol=1e-12)


def test_uniform_centroid_nearly_conserved():
    m = icosphere(2, center=(0.5, 0.2, -0.1))
    out = laplacian_smooth(m, SmoothingConfig(steps=1, scheme="uniform"))
    shift = np.linalg.norm(out.positions.mean(axis=0) - m.positions.mean(axis=0))
    assert shift < 1e-3 * m.diagonal


def test_exploding_weights_raise_numerical_error():
    # coordinates near the float limit overflow the cotangent computation
    m = TriangleMesh([[0, 0, 0], [1e308, 0, 0], [0, 1e308, 0], [1e308, 1e308, 0]], [[0, 1, 2], [1, 3, 2]])
    with pytest.raises(NumericalError, match="vertex"):
        laplacian_smooth(m, SmoothingConfig(steps=1))
