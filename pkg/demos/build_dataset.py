"""Generate a small training set of render sets and inspect the manifest.

Run:  python3 demos/build_dataset.py [out_dir]
"""
import json
import sys
from pathlib import Path

import numpy as np

from relightkit import imgio
from relightkit.dataset import DatasetGrid, ModelSpec, generate_dataset
from relightkit.envlight import synthetic_sky
from relightkit.primitives import capsule_figure
from relightkit.tracer import RenderConfig

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/dataset")
out.mkdir(parents=True, exist_ok=True)

# An environment pool: four skies with the sun in different places.
pool = []
for i, sun in enumerate([(0.4, 0.6, 0.3), (-0.5, 0.5, 0.2), (0.1, 0.9, -0.4), (0.7, 0.2, -0.6)]):
    p = out / f"sky{i}.hdr"
    imgio.save_environment(p, synthetic_sky(128, 64, sun_direction=sun))
    pool.append(str(p))

# The default grid is 4 pitches x 9 yaws x 3 scales x 2 lightings = 216 sets.
print("default grid sets per model:", DatasetGrid(env_pool=pool).sets_per_model)

# A trimmed grid keeps the demo quick.
grid = DatasetGrid(pitches=[0, 20], yaws=[-16, 0, 16], scales=[1.0], lightings_per_pose=2, env_pool=pool, seed=1)
man = generate_dataset([ModelSpec("figure", mesh=capsule_figure())], grid, out / "sets", size=(128, 128),
                       cfg=RenderConfig(spp=32), jobs=2)
print("counts:", man["counts"])
print("first set:", json.dumps(man["sets"][0], indent=1))

# Each set holds image = albedo * shading, plus mask, normal and AO planes.
s = man["sets"][0]
files = {k: out / "sets" / v for k, v in s["files"].items()}
mask = imgio.read_mask(files["mask"]) > 0.5
image, albedo, shading = (imgio.read_pfm(files[k]) for k in ("image", "albedo", "shading"))
print("coverage:", round(float(mask.mean()), 3))
print("identity error:", float(np.abs(image - albedo * shading)[mask].max()))
print("mean AO on the figure:", round(float(imgio.read_pfm(files["ao"])[mask].mean()), 3))
