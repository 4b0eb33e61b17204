"""Command-line front end.

Subcommands: synth, gen-gt, postprocess, eval, netcheck, render, loss-eval.

Exit codes: 0 ok, 2 unreadable input, 3 malformed PNG/F32R, 4 missing paired
file, 5 raster dimension mismatch. Every subcommand is deterministic given
its flags and seed; --threads changes wall time only.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import fileio, losses, metrics, netspec, synth
from .fileio import MalformedFileError
from .postprocess import PostprocessConfig, postprocess_pipeline
from .raster import StructuringElement
from .topo import (DistanceMetric, contour_map, distance_map, marker_gt,
                   skeletonize)

EXIT_UNREADABLE = 2
EXIT_MALFORMED = 3
EXIT_MISSING_PAIR = 4
EXIT_DIM_MISMATCH = 5


class MissingPairError(Exception):
    pass


class DimMismatchError(Exception):
    pass


def _stems(directory, suffix):
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"not a readable directory: {directory}")
    names = sorted(os.listdir(directory))
    return [n[:-len(suffix)] for n in names if n.endswith(suffix)]


def _echo_config(out_dir, cmd, args):
    os.makedirs(out_dir, exist_ok=True)
    payload = {"command": cmd,
               "flags": {k: v for k, v in sorted(vars(args).items())
                         if k not in ("func", "threads")}}
    with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cmd_synth(args):
    spec = synth.SynthCorpusSpec(
        n_images=args.n_images, image_size=args.image_size,
        glands_min=args.glands_min, glands_max=args.glands_max,
        families=tuple(args.families.split(",")), seed=args.seed,
        tau_m=args.tau_m, min_marker_area=args.min_marker_area)
    synth.synth_corpus(spec, args.out)
    _echo_config(args.out, "synth", args)
    return 0


def cmd_gen_gt(args):
    stems = _stems(args.labels, ".png")
    metric = DistanceMetric(args.metric)
    se = StructuringElement(args.se)
    for sub in ("ma", "skeletons", "contours", "markers"):
        os.makedirs(os.path.join(args.out, sub), exist_ok=True)

    def work(stem):
        labels = fileio.read_labels_png(os.path.join(args.labels, stem + ".png"))
        dmap = distance_map(labels, metric, se)
        skel = skeletonize(labels, se)
        cont = contour_map(labels, args.contour_thickness, se)
        markers = marker_gt(dmap, args.tau_m, args.min_marker_area)
        fileio.write_f32r(os.path.join(args.out, "ma", stem + ".f32r"), dmap)
        fileio.write_mask_png(os.path.join(args.out, "skeletons", stem + ".png"), skel)
        fileio.write_mask_png(os.path.join(args.out, "contours", stem + ".png"), cont)
        fileio.write_labels_png(os.path.join(args.out, "markers", stem + ".png"), markers)

    _pmap(work, stems, args.threads)
    _echo_config(args.out, "gen-gt", args)
    return 0


def cmd_postprocess(args):
    stems = _stems(args.prob, ".f32r")
    cfg = PostprocessConfig(tau_b=args.tau_b, tau_m=args.tau_m,
                            min_gland_area=args.min_gland_area,
                            min_marker_area=args.min_marker_area)
    os.makedirs(os.path.join(args.out, "labels"), exist_ok=True)

    def work(stem):
        ma_path = os.path.join(args.ma, stem + ".f32r")
        if not os.path.exists(ma_path):
            raise MissingPairError(f"no MA map for {stem}")
        prob = fileio.read_f32r(os.path.join(args.prob, stem + ".f32r"))
        ma = fileio.read_f32r(ma_path)
        if prob.shape != ma.shape:
            raise DimMismatchError(
                f"{stem}: prob {prob.shape} vs ma {ma.shape}")
        labels = postprocess_pipeline(prob, ma, cfg)
        fileio.write_labels_png(os.path.join(args.out, "labels", stem + ".png"), labels)
        return stem, int(labels.max())

    counts = dict(_pmap(work, stems, args.threads))
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump({"object_counts": counts}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _echo_config(args.out, "postprocess", args)
    return 0


def cmd_eval(args):
    gt_stems = _stems(args.gt, ".png")
    pred_stems = set(_stems(args.pred, ".png"))
    extra = pred_stems - set(gt_stems)
    if extra:
        raise MissingPairError(f"predictions without ground truth: {sorted(extra)}")

    def work(stem):
        gt = fileio.read_labels_png(os.path.join(args.gt, stem + ".png"))
        pred_path = os.path.join(args.pred, stem + ".png")
        if os.path.exists(pred_path):
            pred = fileio.read_labels_png(pred_path)
        else:
            pred = np.zeros_like(gt)  # absent prediction scores as empty
        if pred.shape != gt.shape:
            raise DimMismatchError(f"{stem}: pred {pred.shape} vs gt {gt.shape}")
        return stem, metrics.evaluate(pred, gt, criterion=args.criterion)

    rows = _pmap(work, gt_stems, args.threads)
    os.makedirs(os.path.dirname(os.path.abspath(args.report)), exist_ok=True)
    with open(args.report + ".csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["image", "f1", "precision", "recall", "obj_dice",
                     "obj_h", "tp", "fp", "fn"])
        for stem, rep in rows:
            wr.writerow([stem, f"{rep.f1:.6f}", f"{rep.precision:.6f}",
                         f"{rep.recall:.6f}", f"{rep.obj_dice:.6f}",
                         f"{rep.obj_hausdorff:.6f}", rep.tp, rep.fp, rep.fn])
    reports = [rep for _, rep in rows]
    summary = {"n_images": len(reports)}
    for name in ("f1", "precision", "recall", "obj_dice", "obj_hausdorff"):
        vals = [getattr(r, name) for r in reports]
        summary["mean_" + name] = float(np.mean(vals)) if vals else None
    for name in ("tp", "fp", "fn"):
        summary["total_" + name] = int(sum(getattr(r, name) for r in reports))
    with open(args.report + ".json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_netcheck(args):
    graph = netspec.build_tanet(growth=args.growth,
                                inst_head_kernel=args.inst_head_kernel)
    shape = netspec.TensorShape(3, args.input_size, args.input_size)
    inst, top = netspec.propagate_shapes(graph, shape)
    rows = netspec.layer_table(graph, shape)
    cols = list(rows[0])
    widths = {k: max(len(k), max(len(str(r[k])) for r in rows)) for k in cols}
    print("  ".join(k.ljust(widths[k]) for k in cols))
    for r in rows:
        print("  ".join(str(r[k]).ljust(widths[k]) for k in cols))
    payload = {"layers": rows,
               "inst_output": asdict(inst), "top_output": asdict(top),
               "param_count": netspec.param_count(graph)}
    print(json.dumps({"inst_output": asdict(inst), "top_output": asdict(top),
                      "param_count": payload["param_count"]}, sort_keys=True))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=list)
            fh.write("\n")
    return 0


def _palette(n=64):
    rng = np.random.default_rng(1234)  # fixed: palette is part of the contract
    cols = rng.integers(40, 256, size=(n, 3))
    return cols.astype(np.uint8)


def cmd_render(args):
    image = fileio.read_image_png(args.image)
    labels = fileio.read_labels_png(args.labels)
    if image.shape != labels.shape:
        raise DimMismatchError(f"image {image.shape} vs labels {labels.shape}")
    base = np.clip(np.round(image * 255), 0, 255).astype(np.uint8)
    rgb = np.stack([base] * 3, axis=-1)
    pal = _palette()
    for lab in range(1, int(labels.max()) + 1):
        color = pal[(lab - 1) % len(pal)]
        mask = labels == lab
        rgb[mask] = (0.5 * rgb[mask] + 0.5 * color).astype(np.uint8)
    fileio.write_rgb_png(args.out, rgb)
    return 0


def cmd_loss_eval(args):
    pred_fg = fileio.read_f32r(args.pred_fg)
    gt_fg = fileio.read_mask_png(args.gt_fg).astype(np.float64)
    pred_ma = fileio.read_f32r(args.pred_ma)
    gt_ma = fileio.read_f32r(args.gt_ma)
    gt_mc = (fileio.read_labels_png(args.gt_markers) > 0).astype(np.float64)
    pred_mc = losses.soft_markers(pred_ma, args.tau_m)
    linst = losses.ce_instance_loss(pred_fg, gt_fg)
    lma = losses.ma_loss(pred_ma, gt_ma)
    lmc = losses.marker_loss(pred_mc, gt_mc)
    ltop = losses.topology_loss(pred_ma, gt_ma, pred_mc, gt_mc)
    total = losses.total_loss(pred_fg, gt_fg, pred_ma, gt_ma, pred_mc, gt_mc,
                              losses.LossWeights(alpha=args.alpha))
    print(json.dumps({"l_inst": linst.value, "l_ma": lma.value,
                      "l_mc": lmc.value, "l_top": ltop.value,
                      "total": total.value}, sort_keys=True))
    return 0


def _apply_config_file(args):
    if getattr(args, "config", None):
        with open(args.config) as fh:
            overrides = json.load(fh)
        for key, value in overrides.items():
            setattr(args, key.replace("-", "_"), value)
    return args


def build_parser():
    p = argparse.ArgumentParser(prog="glandtopo")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--config", help="JSON file overriding flags")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-images", type=int, default=10)
    sp.add_argument("--image-size", type=int, default=128)
    sp.add_argument("--glands-min", type=int, default=3)
    sp.add_argument("--glands-max", type=int, default=6)
    sp.add_argument("--families", default=",".join(synth.FAMILIES))
    sp.add_argument("--tau-m", type=float, default=0.7)
    sp.add_argument("--min-marker-area", type=int, default=16)
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("gen-gt", help="ground-truth maps from label maps")
    sp.add_argument("--labels", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--metric", default="ma",
                    choices=[m.value for m in DistanceMetric])
    sp.add_argument("--se", default="square3",
                    choices=[s.value for s in StructuringElement])
    sp.add_argument("--tau-m", type=float, default=0.7)
    sp.add_argument("--min-marker-area", type=int, default=16)
    sp.add_argument("--contour-thickness", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_gen_gt)

    sp = sub.add_parser("postprocess", help="probability maps to label maps")
    sp.add_argument("--prob", required=True)
    sp.add_argument("--ma", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--tau-b", type=float, default=0.5)
    sp.add_argument("--tau-m", type=float, default=0.7)
    sp.add_argument("--min-gland-area", type=int, default=100)
    sp.add_argument("--min-marker-area", type=int, default=16)
    common(sp)
    sp.set_defaults(func=cmd_postprocess)

    sp = sub.add_parser("eval", help="object-level metrics pred vs gt")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--report", required=True,
                    help="base path; writes <report>.csv and <report>.json")
    sp.add_argument("--criterion", default="gt-fraction",
                    choices=["gt-fraction", "iou"])
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("netcheck", help="architecture shape/parameter check")
    sp.add_argument("--input-size", type=int, default=512)
    sp.add_argument("--growth", type=int, default=netspec.DEFAULT_GROWTH)
    sp.add_argument("--inst-head-kernel", type=int, default=1, choices=[1, 2])
    sp.add_argument("--json", help="also write the full table as JSON")
    common(sp)
    sp.set_defaults(func=cmd_netcheck)

    sp = sub.add_parser("render", help="colorized label overlay")
    sp.add_argument("--image", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("loss-eval", help="evaluate losses on stored maps")
    sp.add_argument("--pred-fg", required=True)
    sp.add_argument("--gt-fg", required=True)
    sp.add_argument("--pred-ma", required=True)
    sp.add_argument("--gt-ma", required=True)
    sp.add_argument("--gt-markers", required=True)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--tau-m", type=float, default=0.7)
    common(sp)
    sp.set_defaults(func=cmd_loss_eval)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _apply_config_file(args)
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREADABLE
    except MalformedFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except MissingPairError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_PAIR
    except DimMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIM_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
