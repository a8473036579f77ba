"""Command line entry point: ``barnscan <command> --config cfg.json [overrides]``.

Exit codes: 0 success, 1 partial failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .raster import RasterError

log = logging.getLogger("barnscan")

COMMANDS = ("infer", "detect", "eval", "ucb", "census", "roads-index", "sample")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--input", dest="input_dir")
    common.add_argument("--output", dest="output_dir")
    common.add_argument("--workers", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--tau", type=float, help="probability threshold (default 0.5)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="barnscan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", parents=[common], help="tiled scoring into probability rasters")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--overlap", type=int)
    p.add_argument("--scorer", choices=["oracle", "heuristic"])
    p.add_argument("--noise", type=float, help="oracle noise eps")
    p.add_argument("--flip-rate", type=float, help="oracle flip probability")

    p = sub.add_parser("detect", parents=[common], help="objects, road distances and filtering")
    p.add_argument("--split-length", type=float)
    p.add_argument("--rules", help="RuleSet JSON file")

    p = sub.add_parser("eval", parents=[common], help="IoU matching and facility validation")
    p.add_argument("--iou", dest="iou_threshold", type=float)
    p.add_argument("--radius", type=float)

    p = sub.add_parser("ucb", parents=[common], help="UCB active-validation campaign")
    p.add_argument("--m", dest="ucb_m", type=int, help="images per round")
    p.add_argument("--ucb-alpha", type=float)
    p.add_argument("--buckets", dest="ucb_buckets", type=int)
    p.add_argument("--estimator", dest="ucb_estimator", choices=["mu", "pi"])

    sub.add_parser("census", parents=[common], help="Spearman comparison with census counts")

    p = sub.add_parser("roads-index", parents=[common], help="split road edges and write node files")
    p.add_argument("--split-length", type=float)

    p = sub.add_parser("sample", parents=[common], help="training patch manifest")
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--rotation-step", type=int, choices=[45, 90])
    p.add_argument("--temporal", choices=["single", "all", "augmented"])
    return parser


def _overrides(args: argparse.Namespace, base: dict | None) -> dict:
    skip = {"command", "config", "verbose", "scorer", "noise", "flip_rate"}
    out = {k: v for k, v in vars(args).items() if k not in skip}
    scorer_flags = {
        "kind": getattr(args, "scorer", None),
        "oracle_noise": getattr(args, "noise", None),
        "oracle_flip_rate": getattr(args, "flip_rate", None),
    }
    if any(v is not None for v in scorer_flags.values()):
        merged = dict((base or {}).get("scorer", {"kind": "oracle"}))
        merged.update({k: v for k, v in scorer_flags.items() if v is not None})
        out["scorer"] = merged
    return out


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        base = None
        if args.config:
            with open(args.config) as fh:
                base = json.load(fh)
        cfg = pipeline.PipelineConfig.load(args.config, **_overrides(args, base))
    except (OSError, json.JSONDecodeError, pipeline.ConfigError) as exc:
        print(f"barnscan: invalid config: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "infer":
            return pipeline.run_infer(cfg).exit_code
        if args.command == "detect":
            return pipeline.run_detect(cfg).exit_code
        if args.command == "roads-index":
            return pipeline.run_roads_index(cfg).exit_code
        if args.command == "eval":
            pipeline.run_eval(cfg)
        elif args.command == "ucb":
            pipeline.run_ucb(cfg)
        elif args.command == "census":
            pipeline.run_census(cfg)
        elif args.command == "sample":
            pipeline.run_sample(cfg)
    except (OSError, KeyError, ValueError, RasterError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
