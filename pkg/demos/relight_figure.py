"""Relight a synthetic figure under a sky map, then compare against SH lighting.

Run:  python3 demos/relight_figure.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from relightkit.dataset import camera_from_pose
from relightkit.envlight import rotate_yaw, sh_irradiance_shading, sh_project, synthetic_sky
from relightkit.mesh import SmoothingConfig, merge_meshes
from relightkit.metrics import evaluate
from relightkit.pipeline import relight, write_relight_outputs
from relightkit.primitives import capsule_figure, grid_plane
from relightkit.tracer import RenderConfig

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/relight")

# A body made of ellipsoids standing on a floor, so it casts a shadow.
figure = capsule_figure(subdivisions=3)
lo, hi = figure.bounds
floor = grid_plane(n=2, size=3.0, center=(0.5 * (lo[0] + hi[0]), lo[1], 0.5 * (lo[2] + hi[2])))
scene = merge_meshes([figure, floor])
print("triangles:", len(scene.triangles))

# Albedo is normally the output of a de-lighting step. Here it is a simple
# vertical color ramp over the raster.
H = W = 256
ramp = np.linspace(0.3, 0.9, H)[:, None, None]
albedo = np.broadcast_to(ramp * np.array([0.9, 0.7, 0.6]), (H, W, 3)).copy()

# A low sun off to the side gives a long, sharp cast shadow.
env = synthetic_sky(256, 128, sun_direction=(0.8, 0.35, 0.4), sun_radiance=60.0)
# Frame the figure, not the floor, looking down 20 degrees so the floor shows.
# The pipeline smooths the mesh first. The floor is open, so pin its boundary
# or it shrinks toward its center; the closed figure has no boundary to pin.
cam = camera_from_pose(20.0, 0.0, 1.0, figure.bounds, W)
smooth = SmoothingConfig(pin_boundary=True)
res = relight(scene, albedo, env, cfg=RenderConfig(spp=64, jobs=2), camera=cam, smoothing=smooth, ao=True,
              background={"azimuth": 30.0, "fov": 60.0})
files = write_relight_outputs(res, out)
print("wrote", sorted(files.values()), "to", out)

# The relit image is exactly albedo times shading inside the mask.
m = res.relit.mask > 0
print("identity error:", np.abs(res.relit.pixels - albedo * res.shading)[m].max())

# Order-4 SH lighting on the same normals: smooth, and no cast shadows.
normals = res.body.normal[m]
sh = np.zeros_like(res.shading)
sh[m] = sh_irradiance_shading(sh_project(env, 4), normals / np.linalg.norm(normals, axis=1, keepdims=True))
ratio = 1.0 / max(res.shading[m].max(), sh[m].max())
rep = evaluate(np.clip(albedo * sh * ratio, 0, 1), np.clip(res.relit.pixels * ratio, 0, 1), m,
               metrics=("mse", "psnr", "ssim"))
print("SH vs ray-traced relit:", rep.to_dict())

# Turning the sky by 90 degrees moves the shadow with it.
turned = relight(scene, albedo, rotate_yaw(env, 90.0), cfg=RenderConfig(spp=32), camera=cam,
                 smoothing=smooth)
delta = np.abs(turned.shading - res.shading)[m].mean()
print("mean shading change after a 90 degree turn:", round(float(delta), 4))
