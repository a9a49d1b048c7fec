"""Why ray tracing: a hard shadow that low-order SH lighting cannot produce.

Run:  python3 demos/shadow_study.py
"""
import numpy as np

from relightkit.envlight import direction_from_pixel, sh_irradiance_shading, sh_project, single_texel_map
from relightkit.mesh import merge_meshes
from relightkit.primitives import grid_plane, quad
from relightkit.tracer import OrthoCamera, RenderConfig, Scene, render_shading

# One bright texel is a tiny area light: the sun at 45 degrees elevation,
# bright enough that the lit floor shades to about 1.
W, H = 1024, 512
env = single_texel_map(W, H, 128, 100, radiance=1.6e5)
light = direction_from_pixel(W, H, 128, 100)
print("light direction:", light.round(3))

# A square card floating over a floor.
card = quad([[-0.4, 1.0, -0.4], [0.4, 1.0, -0.4], [0.4, 1.0, 0.4], [-0.4, 1.0, 0.4]], normal=(0, -1, 0))
scene = Scene(merge_meshes([grid_plane(n=2, size=8.0), card]))
# The shadow lands away from the light; center the view between card and shadow.
cam = OrthoCamera.looking_at((-0.4, 0, -0.3), (0, -1, 0), 1.2, image_w=128)
g = render_shading(scene, cam, env, RenderConfig(spp=32))

floor = g.mask.astype(bool) & (np.abs(g.position[..., 1]) < 1e-6)
lum = g.shading.mean(axis=-1)
lit = np.median(lum[floor])
umbra = floor & (lum < 0.5 * lit)
print("floor pixels in umbra:", int(umbra.sum()))

# The same floor under SH lighting: every floor normal is +Y, so it is flat.
for order in (2, 4):
    s = sh_irradiance_shading(sh_project(env, order), np.array([[0.0, 1.0, 0.0]]))
    print(f"order {order} SH floor shading: {s.mean():.3f} everywhere (ray traced: {lit:.3f} lit, {np.median(lum[umbra]):.3f} in umbra)")

# Print a coarse ASCII view of the shadow.
view = np.where(floor, lum / lit, 1.0)[::8, ::4]
for row in view:
    print("".join("#" if v < 0.5 else "." for v in row))
