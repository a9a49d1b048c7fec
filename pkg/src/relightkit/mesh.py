"""Triangle meshes: OBJ ingestion, vertex normals and Laplacian smoothing.

Meshes are immutable value objects.  Every operation returns a new
:class:`TriangleMesh`; the arrays of an existing mesh are flagged read-only so
they can be shared between render workers without copies.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import MeshStructureError, NumericalError, ObjParseError, PreconditionError

logger = logging.getLogger(__name__)

_UNIT_TOL = 1e-6


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle geometry.

    ``positions`` is (N, 3) float64, ``triangles`` is (M, 3) int64.
    ``vertex_normals`` (N, 3) unit vectors and ``colors`` (N, 3) linear RGB
    per-vertex albedo are optional.
    """

    positions: np.ndarray
    triangles: np.ndarray
    vertex_normals: np.ndarray | None = None
    colors: np.ndarray | None = None

    def __post_init__(self):
        pos = _frozen(self.positions, np.float64).reshape(-1, 3)
        tri = _frozen(self.triangles, np.int64).reshape(-1, 3)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "triangles", tri)
        if not np.all(np.isfinite(pos)):
            raise MeshStructureError("mesh positions contain non-finite values")
        if tri.size and (tri.min() < 0 or tri.max() >= len(pos)):
            raise MeshStructureError(
                f"triangle index out of range [0, {len(pos)}): "
                f"min={tri.min()}, max={tri.max()}"
            )
        if self.vertex_normals is not None:
            nrm = _frozen(self.vertex_normals, np.float64).reshape(-1, 3)
            if nrm.shape != pos.shape:
                raise MeshStructureError(
                    f"vertex_normals shape {nrm.shape} != positions shape {pos.shape}"
                )
            length = np.linalg.norm(nrm, axis=1)
            if not np.all(np.abs(length - 1.0) <= _UNIT_TOL):
                raise MeshStructureError("vertex_normals must be unit length")
            object.__setattr__(self, "vertex_normals", nrm)
        if self.colors is not None:
            col = _frozen(self.colors, np.float64).reshape(-1, 3)
            if col.shape != pos.shape:
                raise MeshStructureError("colors must have one RGB triple per vertex")
            object.__setattr__(self, "colors", col)

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box as ``(min_corner, max_corner)``."""
        return self.positions.min(axis=0), self.positions.max(axis=0)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    def replace(self, **changes) -> "TriangleMesh":
        return dataclasses.replace(self, **changes)

    def transformed(self, matrix, offset=(0.0, 0.0, 0.0)) -> "TriangleMesh":
        """Apply ``x -> matrix @ x + offset``; normals follow the inverse transpose."""
        m = np.asarray(matrix, dtype=np.float64)
        pos = self.positions @ m.T + np.asarray(offset, dtype=np.float64)
        nrm = None
        if self.vertex_normals is not None:
            nrm = self.vertex_normals @ np.linalg.inv(m)
            nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        tri = self.triangles if np.linalg.det(m) > 0 else self.triangles[:, ::-1]
        return TriangleMesh(pos, tri, nrm, self.colors)


def merge_meshes(meshes) -> TriangleMesh:
    """Concatenate meshes into one (no vertex welding).

    Normals and colors survive only if every input carries them.
    """
    meshes = list(meshes)
    if not meshes:
        raise MeshStructureError("nothing to merge")
    offsets = np.cumsum([0] + [m.n_vertices for m in meshes[:-1]])
    pos = np.concatenate([m.positions for m in meshes])
    tri = np.concatenate([m.triangles + o for m, o in zip(meshes, offsets)])
    nrm = None
    if all(m.vertex_normals is not None for m in meshes):
        nrm = np.concatenate([m.vertex_normals for m in meshes])
    col = None
    if all(m.colors is not None for m in meshes):
        col = np.concatenate([m.colors for m in meshes])
    return TriangleMesh(pos, tri, nrm, col)


# ---------------------------------------------------------------------------
# OBJ I/O


def _obj_index(token, count, lineno):
    try:
        idx = int(token)
    except ValueError:
        raise ObjParseError(f"bad index {token!r}", lineno) from None
    if idx == 0:
        raise ObjParseError("OBJ indices are 1-based; got 0", lineno)
    return idx - 1 if idx > 0 else count + idx


def load_obj(path) -> TriangleMesh:
    """Read a Wavefront OBJ file.

    Only ``v``, ``vn`` and ``f`` records are interpreted; everything else is
    skipped.  Polygons are fan-triangulated from their first corner.  A ``v``
    record with six numbers carries a per-vertex RGB color.  Vertex normals
    are kept only when every vertex gets one through the face corners.
    """
    positions, colors, normals = [], [], []
    faces, corner_normals = [], []
    has_color = True
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            toks = line.split("#", 1)[0].split()
            if not toks:
                continue
            tag = toks[0]
            if tag == "v":
                if len(toks) not in (4, 5, 7):
                    raise ObjParseError(f"vertex record needs 3 or 6 numbers: {line.strip()!r}", lineno)
                try:
                    vals = [float(t) for t in toks[1:]]
                except ValueError:
                    raise ObjParseError(f"non-numeric vertex record: {line.strip()!r}", lineno) from None
                positions.append(vals[:3])
                if len(vals) == 6:
                    colors.append(vals[3:])
                else:
                    has_color = False
            elif tag == "vn":
                if len(toks) != 4:
                    raise ObjParseError(f"normal record needs 3 numbers: {line.strip()!r}", lineno)
                try:
                    normals.append([float(t) for t in toks[1:]])
                except ValueError:
                    raise ObjParseError(f"non-numeric normal record: {line.strip()!r}", lineno) from None
            elif tag == "f":
                if len(toks) < 4:
                    raise ObjParseError("face needs at least 3 corners", lineno)
                vids, nids = [], []
                for corner in toks[1:]:
                    parts = corner.split("/")
                    vids.append(_obj_index(parts[0], len(positions), lineno))
                    if len(parts) == 3 and parts[2]:
                        nids.append(_obj_index(parts[2], len(normals), lineno))
                    else:
                        nids.append(-1)
                for k in range(1, len(vids) - 1):
                    faces.append((vids[0], vids[k], vids[k + 1]))
                    corner_normals.append((nids[0], nids[k], nids[k + 1]))

    if not positions or not faces:
        raise MeshStructureError(f"{path}: mesh has no vertices or no faces")
    pos = np.asarray(positions, dtype=np.float64)
    tri = np.asarray(faces, dtype=np.int64)
    if tri.min() < 0 or tri.max() >= len(pos):
        bad = int(np.argmax((tri < 0).any(axis=1) | (tri >= len(pos)).any(axis=1)))
        raise MeshStructureError(
            f"{path}: face {bad} references vertex outside [1, {len(pos)}]"
        )

    vertex_normals = None
    cn = np.asarray(corner_normals, dtype=np.int64)
    if normals and (cn >= 0).all():
        vn = np.asarray(normals, dtype=np.float64)
        if cn.max() >= len(vn):
            raise MeshStructureError(f"{path}: face references normal outside [1, {len(vn)}]")
        acc = np.zeros_like(pos)
        np.add.at(acc, tri.ravel(), vn[cn.ravel()])
        length = np.linalg.norm(acc, axis=1)
        if np.all(length > 0):
            vertex_normals = acc / length[:, None]

    col = np.asarray(colors, dtype=np.float64) if has_color and colors else None
    return TriangleMesh(pos, tri, vertex_normals, col)


def save_obj(mesh: TriangleMesh, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        if mesh.colors is not None:
            for p, c in zip(mesh.positions, mesh.colors):
                fh.write("v %.9g %.9g %.9g %.6g %.6g %.6g\n" % (*p, *c))
        else:
            for p in mesh.positions:
                fh.write("v %.9g %.9g %.9g\n" % tuple(p))
        if mesh.vertex_normals is not None:
            for n in mesh.vertex_normals:
                fh.write("vn %.9g %.9g %.9g\n" % tuple(n))
            for a, b, c in mesh.triangles + 1:
                fh.write(f"f {a}//{a} {b}//{b} {c}//{c}\n")
        else:
            for a, b, c in mesh.triangles + 1:
                fh.write(f"f {a} {b} {c}\n")


# ---------------------------------------------------------------------------
# Normals


def face_normals(positions, triangles, normalize=True):
    """Per-face normals; unnormalized vectors have length 2 * area."""
    p0, p1, p2 = (positions[triangles[:, k]] for k in range(3))
    n = np.cross(p1 - p0, p2 - p0)
    if normalize:
        length = np.linalg.norm(n, axis=1, keepdims=True)
        n = np.divide(n, length, out=np.zeros_like(n), where=length > 0)
    return n


def compute_vertex_normals(mesh: TriangleMesh) -> TriangleMesh:
    """Area-weighted vertex normals.

    Vertices touched only by degenerate triangles (or by none) get +Z; their
    count is logged as a warning.
    """
    fn = face_normals(mesh.positions, mesh.triangles, normalize=False)
    acc = np.zeros_like(mesh.positions)
    for k in range(3):
        np.add.at(acc, mesh.triangles[:, k], fn)
    length = np.linalg.norm(acc, axis=1)
    # area-weighted sums of unit-scale geometry can be tiny but not zero
    scale = max(mesh.diagonal, 1e-300) ** 2
    bad = length <= 1e-14 * scale
    nrm = np.empty_like(acc)
    nrm[~bad] = acc[~bad] / length[~bad, None]
    nrm[bad] = (0.0, 0.0, 1.0)
    if bad.any():
        logger.warning("%d vertices have no non-degenerate incident triangle; normal set to +Z", int(bad.sum()))
    return mesh.replace(vertex_normals=nrm)


# ---------------------------------------------------------------------------
# Laplacian smoothing


class SmoothingScheme(str, Enum):
    UNIFORM = "uniform"
    COTANGENT = "cotangent"


@dataclass(frozen=True)
class SmoothingConfig:
    steps: int = 10
    scheme: SmoothingScheme = SmoothingScheme.COTANGENT
    lam: float = 1.0
    pin_boundary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scheme", SmoothingScheme(self.scheme))
        if int(self.steps) != self.steps or self.steps < 0:
            raise PreconditionError(f"steps must be a non-negative integer, got {self.steps}")
        if not 0.0 < self.lam <= 1.0:
            raise PreconditionError(f"lambda must lie in (0, 1], got {self.lam}")


def edge_weights(positions, triangles, scheme="cotangent"):
    """Symmetric sparse edge-weight matrix W (zero diagonal).

    Cotangent weights are 0.5 * (cot a + cot b) over the angles opposite
    each edge, clamped to be non-negative.  Uniform weights are 1 for every
    edge.
    """
    n = len(positions)
    scheme = SmoothingScheme(scheme)
    rows, cols, vals = [], [], []
    for k in range(3):
        i = triangles[:, (k + 1) % 3]
        j = triangles[:, (k + 2) % 3]
        if scheme is SmoothingScheme.COTANGENT:
            apex = positions[triangles[:, k]]
            u = positions[i] - apex
            v = positions[j] - apex
            with np.errstate(over="ignore", invalid="ignore"):
                cross = np.linalg.norm(np.cross(u, v), axis=1)
                dot = np.einsum("ij,ij->i", u, v)
                w = 0.5 * np.divide(dot, cross, out=np.zeros_like(dot), where=cross > 0)
        else:
            w = np.ones(len(triangles))
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    W = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    if scheme is SmoothingScheme.UNIFORM:
        # an edge shared by two triangles was counted twice
        W.data[:] = 1.0
    else:
        W.data = np.maximum(W.data, 0.0)
    return W


def boundary_vertices(triangles, n_vertices):
    """Boolean mask of vertices on an edge used by exactly one triangle."""
    edges = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    out = np.zeros(n_vertices, dtype=bool)
    out[uniq[counts == 1].ravel()] = True
    return out


def laplacian_step(positions, triangles, scheme, lam):
    W = edge_weights(positions, triangles, scheme)
    total = np.asarray(W.sum(axis=1)).ravel()
    avg = W @ positions
    delta = np.zeros_like(positions)
    ok = total > 0
    delta[ok] = avg[ok] / total[ok, None] - positions[ok]
    # non-finite weights must surface as non-finite positions, not be skipped
    delta[~np.isfinite(total)] = np.nan
    return positions + lam * delta


def laplacian_smooth(mesh: TriangleMesh, cfg: SmoothingConfig = SmoothingConfig()) -> TriangleMesh:
    """Explicit Laplacian smoothing ``p <- p + lam * L(p)``, ``cfg.steps`` times.

    Weights are recomputed from the current positions at every step and
    normalized per vertex.  Boundary vertices use whatever one-ring they have.
    With ``cfg.pin_boundary`` they stay fixed instead, which makes any flat
    open mesh an exact fixed point.  Connectivity is never changed.  Stored
    normals are stale after smoothing, so vertex normals are always
    recomputed.
    """
    if cfg.steps == 0:
        return mesh
    pos = np.array(mesh.positions)
    pinned = boundary_vertices(mesh.triangles, mesh.n_vertices) if cfg.pin_boundary else None
    for step in range(cfg.steps):
        new = laplacian_step(pos, mesh.triangles, cfg.scheme, cfg.lam)
        if pinned is not None:
            new[pinned] = pos[pinned]
        pos = new
        finite = np.isfinite(pos).all(axis=1)
        if not finite.all():
            v = int(np.argmin(finite))
            raise NumericalError(f"smoothing step {step + 1} produced a non-finite position at vertex {v}")
    return compute_vertex_normals(TriangleMesh(pos, mesh.triangles, None, mesh.colors))
