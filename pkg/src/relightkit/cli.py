"""Command line front end: ``dataset``, ``relight``, ``trace``, ``envtool``, ``compare``.

Every command accepts ``--config FILE`` (JSON or TOML).  Keys in the file
use the long flag names with dashes or underscores; explicit flags on the
command line win over the file.  Exit codes: 0 success, 1 partial failure
(some dataset sets failed), 2 fatal configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__, imgio
from .compose import RegionSpec
from .dataset import DatasetGrid, ModelSpec, camera_from_pose, generate_dataset
from .envlight import EnvSampler, downsample_pyramid, rotate_yaw, sh_project
from .errors import ConfigError, DegenerateInputError, RelightError
from .mesh import SmoothingConfig, SmoothingScheme, laplacian_smooth, load_obj
from .metrics import evaluate
from .pipeline import relight, write_relight_outputs
from .tracer.camera import RenderConfig
from .tracer.render import Scene, render_ao, render_geometry, render_shading

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger("relightkit")

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2
TRACE_PASSES = ("mask", "normal", "depth", "ao", "shading")


def parse_size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 512x512, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def parse_list(text):
    return [p.strip() for p in text.split(",") if p.strip()]


def load_config(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a table of settings")
    flat = {}
    for key, value in data.items():
        if key == "grid" and isinstance(value, dict):
            flat.update({k.replace("-", "_"): v for k, v in value.items()})
        else:
            flat[key.replace("-", "_")] = value
    return flat


# ---------------------------------------------------------------------------
# parser


def _common(p, spp=256):
    p.add_argument("--config", help="JSON or TOML file with default settings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spp", type=int, default=spp, help="samples per pixel")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--size", type=parse_size, default=(512, 512), help="raster size WxH")
    p.add_argument("--jobs", type=int, default=1, help="worker threads; results do not depend on it")


def _smoothing(p, steps=10):
    p.add_argument("--smooth-steps", type=int, default=steps)
    p.add_argument("--smooth-scheme", choices=[s.value for s in SmoothingScheme], default="cotangent")
    p.add_argument("--smooth-lambda", type=float, default=1.0)


def _pose(p):
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="relightkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = sub.choices

    p = sub.add_parser("dataset", help="render the pose x lighting grid for one or more meshes")
    _common(p, spp=64)
    p.add_argument("--models", type=parse_list, default=[], help="comma-separated OBJ paths")
    p.add_argument("--env-pool", type=parse_list, default=None, help="comma-separated environment maps")
    p.add_argument("--pitches", type=parse_list, default=None)
    p.add_argument("--yaws", type=parse_list, default=None)
    p.add_argument("--scales", type=parse_list, default=None)
    p.add_argument("--lightings-per-pose", type=int, default=None)
    p.add_argument("--albedo", type=parse_list, default=None, help="r,g,b for meshes without vertex colors")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("relight", help="smooth, trace and composite a relit image")
    _common(p)
    _smoothing(p)
    _pose(p)
    p.add_argument("--mesh", required=False)
    p.add_argument("--env", required=False)
    p.add_argument("--albedo", help="pixel-aligned albedo image (.pfm/.png); white if omitted")
    p.add_argument("--face-mesh")
    p.add_argument("--region", help="r0,c0,h,w on the body raster")
    p.add_argument("--feather", type=int, default=4)
    p.add_argument("--bg-azimuth", type=float, default=None, help="composite over the env seen at this azimuth")
    p.add_argument("--bg-fov", type=float, default=45.0)
    p.add_argument("--ao", action="store_true", help="also write an ambient occlusion plane")
    p.set_defaults(func=cmd_relight)

    p = sub.add_parser("trace", help="render G-buffer planes for a mesh")
    _common(p)
    _smoothing(p, steps=0)
    _pose(p)
    p.add_argument("--mesh", required=False)
    p.add_argument("--env")
    p.add_argument("--passes", type=parse_list, default=list(TRACE_PASSES))
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("envtool", help="rotate, downsample or SH-project an environment map")
    p.add_argument("action", choices=["rotate", "downsample", "sh-project"])
    p.add_argument("--config")
    p.add_argument("--input", "-i", required=False)
    p.add_argument("--output", "-o", required=False)
    p.add_argument("--degrees", type=float, default=36.0)
    p.add_argument("--size", type=parse_size, default=(32, 16))
    p.add_argument("--order", type=int, default=4)
    p.set_defaults(func=cmd_envtool)

    p = sub.add_parser("compare", help="image metrics as one line of JSON")
    p.add_argument("--config")
    p.add_argument("--a", required=False)
    p.add_argument("--b", required=False)
    p.add_argument("--mask")
    p.add_argument("--metrics", type=parse_list, default=["mse", "psnr", "ssim"])
    p.set_defaults(func=cmd_compare)
    return parser


def _glue_negative_values(argv):
    """Turn ``--yaws -8,8`` into ``--yaws=-8,8``.

    argparse reads a value starting with ``-`` as an option unless it is a
    single plain number, which rules out negative comma lists.
    """
    out = list(argv)
    i = 0
    while i < len(out) - 1:
        nxt = out[i + 1]
        if out[i].startswith("--") and "=" not in out[i] and re.fullmatch(r"-[\d.][\d.,eE+-]*", nxt):
            out[i:i + 2] = [f"{out[i]}={nxt}"]
        i += 1
    return out


def parse_args(argv=None):
    """Parse ``argv`` with config-file values as defaults under explicit flags."""
    argv = _glue_negative_values(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        settings = load_config(args.config)
        sub = parser.commands[args.command]
        dests = {a.dest: a for a in sub._actions}
        unknown = sorted(set(settings) - set(dests))
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {unknown}")
        converted = {}
        for key, value in settings.items():
            action = dests[key]
            if isinstance(value, str) and action.type is not None:
                value = action.type(value)
            elif key == "size" and isinstance(value, list):
                value = tuple(int(v) for v in value)
            converted[key] = value
        sub.set_defaults(**converted)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# commands


def _require(args, *names):
    missing = [n for n in names if not getattr(args, n, None)]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _render_cfg(args):
    return RenderConfig(spp=args.spp, seed=args.seed, jobs=args.jobs)


def _smoothing_cfg(args):
    return SmoothingConfig(steps=args.smooth_steps, scheme=SmoothingScheme(args.smooth_scheme),
                           lam=args.smooth_lambda)


def cmd_dataset(args):
    _require(args, "models", "env_pool")
    grid_kwargs = {"env_pool": args.env_pool, "seed": args.seed}
    for key in ("pitches", "yaws", "scales", "lightings_per_pose"):
        value = getattr(args, key)
        if value is not None:
            grid_kwargs[key] = value
    try:
        grid = DatasetGrid(**grid_kwargs)
        albedo = tuple(float(v) for v in args.albedo) if args.albedo else (0.8, 0.8, 0.8)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    models = [ModelSpec(name=Path(p).stem, path=str(p), albedo=albedo) for p in args.models]
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigError("model file names must be unique")
    manifest = generate_dataset(models, grid, args.out_dir, size=args.size, cfg=_render_cfg(args), jobs=args.jobs)
    failed = manifest["counts"]["failed"] + sum(m["status"] != "ok" for m in manifest["models"])
    print(json.dumps({"out_dir": str(args.out_dir), **manifest["counts"]}))
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_relight(args):
    _require(args, "mesh", "env")
    mesh = load_obj(args.mesh)
    env = imgio.load_environment(args.env)
    w, h = args.size
    if args.albedo:
        albedo = imgio.read_image(args.albedo)
        if albedo.ndim == 2:
            albedo = np.repeat(albedo[..., None], 3, axis=2)
        h, w = albedo.shape[:2]
    else:
        albedo = np.ones((h, w, 3))
    face = load_obj(args.face_mesh) if args.face_mesh else None
    region = RegionSpec.parse(args.region, args.feather) if args.region else None
    camera = camera_from_pose(args.pitch, args.yaw, args.scale, mesh.bounds, w, h)
    background = None if args.bg_azimuth is None else {"azimuth": args.bg_azimuth, "fov": args.bg_fov}
    result = relight(mesh, albedo, env, face_mesh=face, region=region, cfg=_render_cfg(args),
                     smoothing=_smoothing_cfg(args), camera=camera, background=background, ao=args.ao)
    files = write_relight_outputs(result, args.out_dir)
    print(json.dumps({"out_dir": str(args.out_dir), "files": files}))
    return EXIT_OK


def cmd_trace(args):
    _require(args, "mesh")
    unknown = sorted(set(args.passes) - set(TRACE_PASSES))
    if unknown:
        raise ConfigError(f"unknown passes {unknown}; choose from {', '.join(TRACE_PASSES)}")
    if "shading" in args.passes and not args.env:
        raise ConfigError("the shading pass needs --env")
    mesh = laplacian_smooth(load_obj(args.mesh), _smoothing_cfg(args))
    w, h = args.size
    camera = camera_from_pose(args.pitch, args.yaw, args.scale, mesh.bounds, w, h)
    cfg = _render_cfg(args)
    scene = Scene(mesh)
    gbuf = render_geometry(scene, camera, cfg)
    if "ao" in args.passes:
        gbuf = render_ao(scene, camera, cfg, gbuf)
    if "shading" in args.passes:
        env = imgio.load_environment(args.env)
        gbuf = render_shading(scene, camera, env if not env.radiance.any() else EnvSampler(env), cfg, gbuf)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in args.passes:
        if name == "mask":
            files[name] = "mask.png"
            imgio.write_mask_png(out / files[name], gbuf.mask)
        elif name == "normal":
            files[name] = "normal.png"
            imgio.write_normal_png(out / files[name], gbuf.normal)
        elif name == "depth":
            files[name] = "depth.pfm"
            imgio.write_pfm(out / files[name], np.where(gbuf.mask > 0, gbuf.depth, 0.0))
        elif name == "ao":
            files[name] = "ao.pfm"
            imgio.write_pfm(out / files[name], gbuf.ao)
        elif name == "shading":
            files[name] = "shading.pfm"
            imgio.write_pfm(out / files[name], gbuf.shading)
    print(json.dumps({"out_dir": str(out), "files": files}))
    return EXIT_OK


def cmd_envtool(args):
    _require(args, "input", "output")
    env = imgio.load_environment(args.input)
    if args.action == "rotate":
        imgio.save_environment(args.output, rotate_yaw(env, args.degrees))
    elif args.action == "downsample":
        imgio.save_environment(args.output, downsample_pyramid(env, *args.size))
    else:
        Path(args.output).write_text(sh_project(env, args.order).to_json() + "\n")
    return EXIT_OK


def cmd_compare(args):
    _require(args, "a", "b")
    a = imgio.read_image(args.a)
    b = imgio.read_image(args.b)
    mask = imgio.read_mask(args.mask) if args.mask else None
    metrics = set(args.metrics)
    unknown = metrics - {"mse", "psnr", "ssim", "fft", "light"}
    if unknown:
        raise ConfigError(f"unknown metrics {sorted(unknown)}")
    report = evaluate(a, b, mask, metrics)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.INFO)
        return args.func(args)
    except DegenerateInputError as exc:
        print(f"error: degenerate input: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (RelightError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
