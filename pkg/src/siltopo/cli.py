"""Command-line front end: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
Machine output goes to files or to stdout as JSON; diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .distance import EROSION_RULES, STRICT, inwards, outwards, render_distance

log = logging.getLogger("siltopo")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _dump(obj, path=None) -> None:
    text = json.dumps(obj, indent=1) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _read_json(path) -> dict:
    with open(path) as f:
        d = json.load(f)
    if not isinstance(d, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return d


def _overrides(pairs) -> dict:
    """``KEY=VALUE`` pairs; values parse as JSON, else stay strings."""
    out = {}
    for p in pairs or ():
        key, sep, val = p.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects KEY=VALUE, got {p!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _config(args, extra=None) -> dict:
    """Config file merged with ``--set`` overrides and explicit flags (flags win)."""
    d = _read_json(args.config) if getattr(args, "config", None) else {}
    d.update(_overrides(getattr(args, "set", None)))
    d.update({k: v for k, v in (extra or {}).items() if v is not None})
    return d


def _strict_only(args) -> None:
    if args.erosion != STRICT:
        raise UsageError(f"{args.command} supports only the {STRICT!r} erosion rule")


# --- subcommands -------------------------------------------------------------

GEN_KEYS = ("n", "seed", "shift", "canvas")


def cmd_gen(args) -> None:
    from .bench import DomainShift, gen_dataset, save_dataset

    d = {"n": 100, "seed": 0, "shift": "clean", "canvas": [128, 128]}
    cfg = _config(args, {"n": args.n, "seed": args.seed, "shift": args.shift,
                         "canvas": args.canvas})
    unknown = set(cfg) - set(GEN_KEYS)
    if unknown:
        raise ValueError(f"unknown gen keys: {sorted(unknown)}")
    d.update(cfg)
    shift = DomainShift.parse(d["shift"])
    canvas = tuple(int(c) for c in d["canvas"])
    samples = gen_dataset(int(d["n"]), int(d["seed"]), shift, canvas)
    save_dataset(args.out, samples, {"seed": int(d["seed"]), "shift": shift.to_json(),
                                     "canvas": list(canvas), "lowres_upsample": "nearest"})


def cmd_render(args) -> None:
    from .body import BodyParams, rasterize, render_image
    from .mask import save_pgm

    params = BodyParams.from_json(_read_json(args.params))
    canvas = tuple(args.canvas)
    save_pgm(rasterize(params, canvas), args.out)
    if args.image:
        save_pgm(render_image(params, canvas), args.image)


def cmd_distmap(args) -> None:
    from .mask import load_mask, save_pgm

    m = load_mask(args.inp)
    dist = inwards(m, args.erosion) if args.direction == "in" else outwards(m, args.erosion)
    gray, top = render_distance(dist)
    save_pgm(gray, args.out)
    _dump({"raw_max": top, "direction": args.direction, "erosion": args.erosion},
          os.path.splitext(args.out)[0] + ".json")


def cmd_skeletonize(args) -> None:
    from .mask import load_mask, save_pgm
    from .topology import overlay, skeletonize

    m = load_mask(args.inp)
    t = skeletonize(m, args.erosion)
    save_pgm(t, args.out)
    if args.overlay:
        save_pgm(overlay(m, t), args.overlay)


def cmd_loss(args) -> None:
    from .losses import chamfer_pointset, pixel_l2, spatial_chamfer
    from .mask import active_points, load_mask
    from .topology import skeletonize

    a, b = load_mask(args.a), load_mask(args.b)
    if args.kind == "topo":
        _strict_only(args)
        v = spatial_chamfer(skeletonize(a), skeletonize(b))
    elif args.kind == "sil":
        _strict_only(args)
        v = spatial_chamfer(a, b)
    elif args.kind == "l2":
        v = pixel_l2(a, b)
    else:
        v = chamfer_pointset(active_points(a), active_points(b))
    _dump({"raw": v.raw, "normalized": v.normalized if args.normalized else None})


def cmd_fit(args) -> None:
    from .body import BodyParams
    from .fitting import FitConfig, fit
    from .mask import load_mask

    _strict_only(args)
    cfg = FitConfig.from_dict(_config(args, {"max_iters": args.iters}))
    res = fit(load_mask(args.target), BodyParams.from_json(_read_json(args.init)), cfg)
    _dump(res.params.to_json(), args.out)
    if args.trace:
        res.write_trace(args.trace)


def cmd_train(args) -> None:
    from .adaptation import TrainConfig, train_source
    from .bench import load_dataset

    _strict_only(args)
    cfg = TrainConfig.from_dict(_config(args))
    w, tlog = train_source(load_dataset(args.data), epochs=cfg.epochs, lr=cfg.lr,
                           seed=cfg.seed, batch_size=cfg.batch_size, w_keypoint=cfg.w_keypoint)
    w.save(args.out)
    if args.log:
        tlog.write_csv(args.log)


def cmd_adapt(args) -> None:
    from .adaptation import AdaptConfig, adapt
    from .bench import load_dataset
    from .regressor import RegressorWeights

    _strict_only(args)
    cfg = AdaptConfig.from_dict(_config(args))
    # labels=False: the params files are never read on this path
    items = load_dataset(args.target, labels=False)
    w, tlog = adapt(RegressorWeights.load(args.weights), items, cfg, jobs=args.jobs)
    w.save(args.out)
    if args.log:
        tlog.write_csv(args.log)


def cmd_eval(args) -> None:
    from .bench import evaluate_regressor, load_dataset
    from .regressor import RegressorWeights

    rep = evaluate_regressor(RegressorWeights.load(args.weights), load_dataset(args.data))
    summary = {"mpjpe": rep.mpjpe, "pa_mpjpe": rep.pa_mpjpe, "n": rep.n}
    _dump(summary)
    if args.out:
        _dump(rep.as_dict(), args.out)


def cmd_ablate(args) -> None:
    from .adaptation import AdaptConfig
    from .bench import ABLATION_ROWS, load_dataset, load_manifest, run_ablation, write_report
    from .regressor import RegressorWeights

    _strict_only(args)
    cfg = AdaptConfig.from_dict(_config(args))
    methods = args.methods or list(ABLATION_ROWS)
    bad = [m for m in methods if m not in ABLATION_ROWS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {list(ABLATION_ROWS)}")
    rows = run_ablation(RegressorWeights.load(args.weights),
                        load_dataset(args.target, labels=False), load_dataset(args.eval),
                        cfg, methods, jobs=args.jobs)
    meta = {"adapt": cfg.to_dict(), "target": load_manifest(args.target),
            "eval": load_manifest(args.eval)}
    write_report(rows, args.out, meta)
    _dump(rows)


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="siltopo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="store_true", help="print version and erosion rule")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for batch steps")
    p.add_argument("--erosion", choices=EROSION_RULES, default=STRICT,
                   help="erosion rule for distance maps (default %(default)s)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def config_flags(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")

    sp = sub.add_parser("gen", help="generate a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--shift", help="clean | lowres:F | uap:E[:SEED] (E in 1/255)")
    sp.add_argument("--canvas", type=int, nargs=2, metavar=("W", "H"))
    config_flags(sp)
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("render", help="rasterize body parameters")
    sp.add_argument("--params", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--image", help="also write the soft grayscale rendering")
    sp.add_argument("--canvas", type=int, nargs=2, default=(128, 128), metavar=("W", "H"))
    sp.set_defaults(fn=cmd_render)

    sp = sub.add_parser("distmap", help="inwards or outwards distance map")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--direction", choices=("in", "out"), default="in")
    sp.set_defaults(fn=cmd_distmap)

    sp = sub.add_parser("skeletonize", help="ridge skeleton of a mask")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--overlay", help="write mask (gray 96) with skeleton (255)")
    sp.set_defaults(fn=cmd_skeletonize)

    sp = sub.add_parser("loss", help="alignment loss between two masks")
    sp.add_argument("--kind", choices=("topo", "sil", "l2", "chamfer"), required=True)
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--normalized", action="store_true", help="also report the normalized value")
    sp.set_defaults(fn=cmd_loss)

    sp = sub.add_parser("fit", help="fit body parameters to a silhouette")
    sp.add_argument("--target", required=True)
    sp.add_argument("--init", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace")
    sp.add_argument("--iters", type=int)
    config_flags(sp)
    sp.set_defaults(fn=cmd_fit)

    sp = sub.add_parser("train", help="supervised source training")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log")
    config_flags(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("adapt", help="silhouette-only target adaptation")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log")
    config_flags(sp)
    sp.set_defaults(fn=cmd_adapt)

    sp = sub.add_parser("eval", help="MPJPE / PA-MPJPE of a regressor on a dataset")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", help="full report with per-sample values")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("ablate", help="adaptation ablation over loss variants")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--eval", required=True)
    sp.add_argument("--out", required=True, help="directory for report.json / report.csv")
    sp.add_argument("--methods", nargs="+")
    config_flags(sp)
    sp.set_defaults(fn=cmd_ablate)
    return p


def main(argv=None) -> int:
    p = build_parser()
    try:
        args = p.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.version:
        print(f"siltopo {__version__} (erosion: {args.erosion})")
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command is None:
        p.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("siltopo: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.fn(args)
    except UsageError as e:
        print(f"siltopo {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, TypeError, OSError) as e:
        print(f"siltopo {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
