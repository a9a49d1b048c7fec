"""Procedural test geometry.

All primitives are built with outward-facing (counter-clockwise) winding and
analytic vertex normals where one exists.
"""
import numpy as np

from .mesh import TriangleMesh, compute_vertex_normals, merge_meshes


def icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    t = (1.0 + 5.0 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.asarray(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    unit = np.asarray(verts)
    return TriangleMesh(unit * radius + np.asarray(center, dtype=np.float64), faces, unit)


def uv_sphere(n_lat=64, n_lon=128, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Latitude/longitude sphere with +Y poles; 2 * n_lon * (n_lat - 1) triangles."""
    theta = np.linspace(0.0, np.pi, n_lat + 1)[1:-1]
    phi = np.linspace(0.0, 2.0 * np.pi, n_lon, endpoint=False)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    ring = np.stack([np.sin(th) * np.cos(ph), np.cos(th), np.sin(th) * np.sin(ph)], -1).reshape(-1, 3)
    unit = np.concatenate([[(0.0, 1.0, 0.0)], ring, [(0.0, -1.0, 0.0)]])
    north, south = 0, len(unit) - 1

    def vid(i, j):
        return 1 + i * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((north, vid(0, j + 1), vid(0, j)))
        faces.append((south, vid(n_lat - 2, j), vid(n_lat - 2, j + 1)))
    for i in range(n_lat - 2):
        for j in range(n_lon):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j), vid(i + 1, j + 1)
            faces += [(a, b, d), (a, d, c)]
    return TriangleMesh(unit * radius + np.asarray(center, dtype=np.float64), faces, unit)


def grid_plane(n=16, size=2.0, center=(0.0, 0.0, 0.0), axis="y"):
    """Regular n x n grid of squares, each split along the same diagonal.

    ``axis`` names the plane normal; the grid spans ``size`` along the other
    two axes.
    """
    s = np.linspace(-size / 2, size / 2, n + 1)
    a, b = np.meshgrid(s, s, indexing="ij")
    zeros = np.zeros_like(a)
    if axis == "y":
        pts = np.stack([b, zeros, a], -1)
        normal = (0.0, 1.0, 0.0)
    elif axis == "z":
        pts = np.stack([b, a, zeros], -1)
        normal = (0.0, 0.0, 1.0)
    elif axis == "x":
        pts = np.stack([zeros, b, a], -1)
        normal = (1.0, 0.0, 0.0)
    else:
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    pts = pts.reshape(-1, 3) + np.asarray(center, dtype=np.float64)
    faces = []
    for i in range(n):
        for j in range(n):
            v00 = i * (n + 1) + j
            v01, v10, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            faces += [(v00, v10, v11), (v00, v11, v01)]
    faces = np.asarray(faces)
    # orient so the face normal matches `normal`
    probe = np.cross(pts[faces[0, 1]] - pts[faces[0, 0]], pts[faces[0, 2]] - pts[faces[0, 0]])
    if np.dot(probe, normal) < 0:
        faces = faces[:, ::-1]
    normals = np.tile(normal, (len(pts), 1))
    return TriangleMesh(pts, faces, normals)


def quad(corners, normal=None):
    """Two-triangle quad from four corners given in loop order."""
    c = np.asarray(corners, dtype=np.float64)
    faces = np.array([(0, 1, 2), (0, 2, 3)])
    if normal is not None:
        probe = np.cross(c[1] - c[0], c[2] - c[0])
        if np.dot(probe, normal) < 0:
            faces = faces[:, ::-1]
    return compute_vertex_normals(TriangleMesh(c, faces))


def box(lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    # indices: bit2 = x, bit1 = y, bit0 = z
    faces = [
        (0, 1, 3), (0, 3, 2),  # -x
        (4, 6, 7), (4, 7, 5),  # +x
        (0, 4, 5), (0, 5, 1),  # -y
        (2, 3, 7), (2, 7, 6),  # +y
        (0, 2, 6), (0, 6, 4),  # -z
        (1, 5, 7), (1, 7, 3),  # +z
    ]
    # flat-shaded boxes need split vertices; keep it simple and unshared
    pos = corners[np.asarray(faces).ravel()]
    tri = np.arange(len(pos)).reshape(-1, 3)
    return compute_vertex_normals(TriangleMesh(pos, tri))


def capsule_figure(subdivisions=3, albedo=(0.7, 0.55, 0.45)):
    """A crude standing figure about 1.8 units tall, made of overlapping spheres.

    Stands on y = 0 and faces +Z.  Useful as a stand-in for a reconstructed
    human body when exercising the dataset and relighting pipelines.
    """
    parts = []

    def ellipsoid(center, radii):
        s = icosphere(subdivisions)
        return s.transformed(np.diag(radii), center)

    parts.append(ellipsoid((0.0, 1.62, 0.0), (0.11, 0.13, 0.12)))   # head
    parts.append(ellipsoid((0.0, 1.18, 0.0), (0.22, 0.30, 0.13)))   # torso
    parts.append(ellipsoid((0.0, 0.86, 0.0), (0.19, 0.14, 0.12)))   # hips
    for side in (-1.0, 1.0):
        parts.append(ellipsoid((0.30 * side, 1.15, 0.0), (0.06, 0.30, 0.06)))  # arm
        parts.append(ellipsoid((0.10 * side, 0.42, 0.0), (0.08, 0.40, 0.08)))  # leg
    body = merge_meshes(parts)
    colors = np.tile(np.asarray(albedo, dtype=np.float64), (body.n_vertices, 1))
    # darker "clothing" below the waist gives the albedo plane some structure
    colors[body.positions[:, 1] < 0.95] *= 0.5
    return body.replace(colors=colors)
