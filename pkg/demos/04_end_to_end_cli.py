"""Generate a synthetic world and run infer -> detect -> eval through the CLI."""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from barnscan import cli
from barnscan.synthetic import make_world, write_world

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    write_world(make_world(n_tiles=6, seed=11), root / "in")
    common = ["--input", str(root / "in"), "--output", str(root / "out"), "--workers", "2"]
    for command in ("infer", "detect", "eval"):
        code = cli.main([command, *common])
        print(f"barnscan {command}: exit {code}")
    for name in ("eval_unfiltered", "eval"):
        rep = json.loads((root / "out" / "reports" / f"{name}.json").read_text())
        print(f"{name:16s} TP {rep['tp']:3d}  FP {rep['fp']:3d}  FN {rep['fn']:3d}  "
              f"P {rep['precision']:.3f}  R {rep['recall']:.3f}  F2 {rep['f2']:.3f}")
    reasons = {}
    for path in sorted((root / "out" / "objects").glob("*.geojson")):
        for feat in json.loads(path.read_text())["features"]:
            r = feat["properties"]["reason"]
            if r:
                reasons[r] = reasons.get(r, 0) + 1
    print("rejections by rule:", reasons)
