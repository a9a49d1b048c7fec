"""Synthetic relighting dataset generation over a pose x lighting grid.

Each model is rendered for every (pitch, yaw, scale) camera pose under
``lightings_per_pose`` environment maps drawn without replacement from the
pool.  Every set holds six pixel-aligned planes::

    image.pfm    albedo * shading (linear)
    albedo.pfm   per-vertex color of the model, interpolated
    shading.pfm  direct environment shading of a white surface
    ao.pfm       ambient occlusion
    mask.png     8-bit foreground mask
    normal.png   16-bit normals encoded as (n + 1) / 2

A ``manifest.json`` at the output root lists every set and file.  Outputs
depend only on the models, the grid (including its seed) and the render
settings, never on the number of workers.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import imgio
from .envlight import EnvSampler, yaw_matrix
from .errors import ConfigError, MeshStructureError
from .mesh import TriangleMesh, load_obj
from .tracer.camera import OrthoCamera, RenderConfig
from .tracer.render import Scene, render_ao, render_geometry, render_shading

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PLANES = ("image", "mask", "albedo", "shading", "normal", "ao")


@dataclass
class DatasetGrid:
    pitches: list = field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0])
    yaws: list = field(default_factory=lambda: [-32.0, -24.0, -16.0, -8.0, 0.0, 8.0, 16.0, 24.0, 32.0])
    scales: list = field(default_factory=lambda: [0.8, 1.0, 1.1])
    lightings_per_pose: int = 2
    env_pool: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        for name in ("pitches", "yaws", "scales"):
            values = [float(v) for v in getattr(self, name)]
            if not values:
                raise ConfigError(f"grid field {name!r} must not be empty")
            setattr(self, name, values)
        if self.lightings_per_pose < 1:
            raise ConfigError("lightings_per_pose must be >= 1")
        if any(s <= 0 for s in self.scales):
            raise ConfigError("scales must be positive")
        self.env_pool = [str(p) for p in self.env_pool]

    @property
    def poses(self):
        return list(itertools.product(self.pitches, self.yaws, self.scales))

    @property
    def sets_per_model(self):
        return len(self.pitches) * len(self.yaws) * len(self.scales) * self.lightings_per_pose

    @classmethod
    def from_mapping(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


@dataclass
class RenderSet:
    """File paths (relative to the dataset root) of one rendered set."""

    image: str
    mask: str
    albedo: str
    shading: str
    normal: str
    ao: str


def camera_from_pose(pitch, yaw, scale, bounds, image_w=512, image_h=None) -> OrthoCamera:
    """Orthographic camera orbiting the center of ``bounds``.

    At pitch = yaw = 0 the camera looks along -Z with +Y up.  Positive pitch
    raises the camera so it looks down; yaw then turns the orbit about +Y.
    The view rectangle's half extent is the bounding-sphere radius divided by
    ``scale``, so larger scales frame the subject larger.
    """
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    radius = 0.5 * float(np.linalg.norm(hi - lo))
    if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)) or not radius > 0:
        raise MeshStructureError(f"degenerate mesh bounds {lo} .. {hi}")
    p = math.radians(pitch)
    base = np.array([0.0, -math.sin(p), -math.cos(p)])
    forward = yaw_matrix(yaw) @ base
    half = radius / scale
    return OrthoCamera.looking_at((lo + hi) * 0.5, forward, half, image_w=image_w, image_h=image_h,
                                  distance=2.0 * radius)


@dataclass
class ModelSpec:
    """A model to render: an OBJ path or an in-memory mesh.

    Albedo comes from the mesh's per-vertex colors, else ``albedo``.
    """

    name: str
    path: str | None = None
    mesh: TriangleMesh | None = None
    albedo: tuple = (0.8, 0.8, 0.8)

    def load(self) -> TriangleMesh:
        if self.mesh is not None:
            return self.mesh
        if self.path is None:
            raise ConfigError(f"model {self.name!r} has neither a path nor a mesh")
        return load_obj(self.path)


def derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


def _pose_dir(pitch, yaw, scale):
    return f"p{pitch:+05.1f}_y{yaw:+05.1f}_s{scale:.2f}"


def _select_lightings(grid, model_idx, pose_idx):
    if grid.lightings_per_pose > len(grid.env_pool):
        raise ConfigError(
            f"lightings_per_pose={grid.lightings_per_pose} exceeds env pool size {len(grid.env_pool)}"
        )
    rng = np.random.default_rng([grid.seed, model_idx, pose_idx])
    return [int(i) for i in rng.choice(len(grid.env_pool), grid.lightings_per_pose, replace=False)]


def _write_set(root, rel_dir, gbuf, shading):
    d = root / rel_dir
    d.mkdir(parents=True, exist_ok=True)
    mask = gbuf.mask
    albedo = (gbuf.albedo * mask[..., None]).astype(np.float32)
    shade = (shading * mask[..., None]).astype(np.float32)
    files = RenderSet(
        image=f"{rel_dir}/image.pfm", mask=f"{rel_dir}/mask.png", albedo=f"{rel_dir}/albedo.pfm",
        shading=f"{rel_dir}/shading.pfm", normal=f"{rel_dir}/normal.png", ao=f"{rel_dir}/ao.pfm",
    )
    imgio.write_pfm(root / files.image, albedo * shade)
    imgio.write_pfm(root / files.albedo, albedo)
    imgio.write_pfm(root / files.shading, shade)
    imgio.write_pfm(root / files.ao, gbuf.ao)
    imgio.write_mask_png(root / files.mask, mask)
    imgio.write_normal_png(root / files.normal, gbuf.normal)
    return files


def generate_dataset(models, grid: DatasetGrid, out_dir, size=(512, 512),
                     cfg: RenderConfig = RenderConfig(spp=64), jobs=1):
    """Render the full grid for every model and write ``manifest.json``.

    Returns the manifest dictionary.  Failed models and sets are recorded
    with ``status: "failed"`` and an error message; rendering continues.
    """
    if not grid.env_pool:
        raise ConfigError("env_pool is empty")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    width, height = size
    envs: dict[int, EnvSampler] = {}

    def sampler(i):
        if i not in envs:
            envs[i] = EnvSampler(imgio.load_environment(grid.env_pool[i]))
        return envs[i]

    model_entries = []
    tasks = []
    for mi, model in enumerate(models):
        try:
            mesh = model.load()
            if mesh.colors is None:
                mesh = mesh.replace(colors=np.tile(np.asarray(model.albedo, dtype=np.float64), (mesh.n_vertices, 1)))
            scene = Scene(mesh)
        except Exception as exc:  # unreadable model: skip, keep going
            logger.error("model %s skipped: %s", model.name, exc)
            model_entries.append({"name": model.name, "source": model.path, "status": "failed", "error": str(exc)})
            continue
        model_entries.append({"name": model.name, "source": model.path, "status": "ok"})
        for pi, pose in enumerate(grid.poses):
            tasks.append((mi, model.name, scene, pi, pose, _select_lightings(grid, mi, pi)))

    # environment maps are loaded serially so worker threads only read them
    try:
        for task in tasks:
            for li in task[5]:
                sampler(li)
    except Exception as exc:
        raise ConfigError(f"cannot load environment map: {exc}") from exc

    def run_pose(task):
        mi, name, scene, pi, (pitch, yaw, scale), env_ids = task
        entries = []
        pose_cfg = replace(cfg, jobs=1 if jobs > 1 else cfg.jobs)
        try:
            camera = camera_from_pose(pitch, yaw, scale, scene.mesh.bounds, width, height)
            geo = render_geometry(scene, camera, pose_cfg)
            geo = render_ao(scene, camera, replace(pose_cfg, seed=derive_seed(grid.seed, mi, pi, 0xA0)), geo)
        except Exception as exc:
            geo, pose_error = None, str(exc)
        for li, env_id in enumerate(env_ids):
            set_seed = derive_seed(grid.seed, mi, pi, li)
            rel_dir = f"{name}/{_pose_dir(pitch, yaw, scale)}_l{li}"
            entry = {"id": rel_dir, "model": name, "pitch": pitch, "yaw": yaw, "scale": scale,
                     "lighting": li, "env": grid.env_pool[env_id], "seed": set_seed}
            try:
                if geo is None:
                    raise RuntimeError(pose_error)
                shaded = render_shading(scene, camera, sampler(env_id), replace(pose_cfg, seed=set_seed), geo)
                files = _write_set(root, rel_dir, geo, shaded.shading)
                entry.update(status="ok", files=asdict(files))
            except Exception as exc:
                logger.error("set %s failed: %s", rel_dir, exc)
                entry.update(status="failed", error=str(exc))
            entries.append(entry)
        return entries

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_pose, tasks))
    else:
        results = [run_pose(t) for t in tasks]

    sets = [e for chunk in results for e in chunk]
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "grid": grid.to_dict(),
        "size": [width, height],
        "render": {"spp": cfg.spp, "ao_max_distance": None if math.isinf(cfg.ao_max_distance)
                   else cfg.ao_max_distance, "clamp_radiance": cfg.clamp_radiance},
        "planes": list(PLANES),
        "models": model_entries,
        "sets": sets,
        "counts": {"ok": sum(e["status"] == "ok" for e in sets),
                   "failed": sum(e["status"] != "ok" for e in sets)},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(out_dir):
    return json.loads((Path(out_dir) / "manifest.json").read_text())
