"""Orthographic ray tracing of mask, depth, normal, AO and shading planes."""
from .bvh import BVHAccel, brute_force_intersect, build_bvh
from .camera import OrthoCamera, RenderConfig
from .render import (
    GBuffer,
    Scene,
    ao_at_points,
    render_all,
    render_ao,
    render_face_pass,
    render_geometry,
    render_shading,
    shading_at_points,
)

__all__ = [
    "BVHAccel", "brute_force_intersect", "build_bvh", "OrthoCamera", "RenderConfig", "GBuffer", "Scene",
    "ao_at_points", "render_all", "render_ao", "render_face_pass", "render_geometry", "render_shading",
    "shading_at_points",
]
