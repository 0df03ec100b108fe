#!/usr/bin/env python3
"""End-to-end walkthrough on synthetic data.

Generates a small dataset, trains briefly, predicts one held-out scene,
vectorizes the mask, and diffs it against the simulated historical map —
all through the same command-line entry points an operator would use.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from srunet.cli import entrypoint
from srunet.dataio.store import load_dataset


def run(argv):
    print("$ srunet " + " ".join(argv))
    rc = entrypoint(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--work-dir", default="demo_out")
    ap.add_argument("--tiles", type=int, default=12)
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--epochs", type=int, default=8)
    args = ap.parse_args()

    work = Path(args.work_dir)
    data, run_dir = work / "data", work / "run"

    run(["gen-synth", "--out", str(data), "--tiles", str(args.tiles),
         "--size", str(args.size), "--seed", "0", "--force"])
    run(["train", "--data-dir", str(data), "--out-dir", str(run_dir),
         "--width-preset", "tiny", "--epochs", str(args.epochs),
         "--lab-ratio", "0.5", "--ema-decay", "0.9",
         "--reco-num-queries", "32", "--reco-num-keys", "64", "--seed", "0"])
    run(["eval", "--data", str(data), "--split", "val",
         "--ckpt", str(run_dir / "best.pt")])

    scene = load_dataset(data, split="val")[0]
    img_path = work / "scene_image.png"
    map_path = work / "scene_map.png"
    Image.fromarray(scene.image).save(img_path)
    Image.fromarray(scene.map).save(map_path)
    hist_path = work / "historical_mask.png"
    hist = np.all(scene.map == 255, axis=2).astype(np.uint8)  # map road fill
    Image.fromarray(hist * 255).save(hist_path)

    pred = work / "pred"
    run(["predict", "--ckpt", str(run_dir / "best.pt"),
         "--image", str(img_path), "--map", str(map_path),
         "--out", str(pred), "--tile-size", str(args.size), "--overlap", "16"])
    run(["vectorize", "--mask", str(pred / "mask.png"),
         "--out", str(work / "roads.geojson"), "--min-area", "32"])
    run(["diff", "--new", str(pred / "mask.png"), "--hist", str(hist_path),
         "--out", str(work / "changes.geojson")])
    print(f"artifacts under {work}/")


if __name__ == "__main__":
    main()
