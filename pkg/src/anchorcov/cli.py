"""Command line interface: ``anchorcov <subcommand> ...``.

Exit status is 0 on success, 1 for bad input or usage, 2 when an internal
consistency check fails. Results go to stdout or ``--out``; diagnostics go
to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .anchors import (
    DEFAULT_ASPECTS,
    DEFAULT_BOUNDARIES,
    PRESETS,
    assign_level,
    format_scales,
    parse_anchor_set,
    synthesize_anchor_set,
)
from .coverage import evaluate_boxes, evaluate_grid, size_sweep
from .dataset import (
    TEST_SIZES,
    Dataset,
    make_test_variants,
    make_train_variant,
    ordered_map,
    partition_dataset,
)
from .geometry import min_detectable_size, worst_case_displaced_iou
from .io import (
    parse_annotations,
    parse_proposals,
    parse_voc_xml,
    write_annotations,
    write_curves,
    write_proposals,
    write_report,
    write_scalar,
)
from .proposals import DEFAULT_NMS_THRESHOLD, DEFAULT_TOP_N, group_by_level, hierarchical_merge, nms

log = logging.getLogger("anchorcov")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class InvariantError(RuntimeError):
    """An internal cross-check disagreed; the result cannot be trusted."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return vals[0], vals[1]


def _level_strides(text: str) -> dict[str, float]:
    vals = _floats(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three strides conv3,conv4,conv5, got {text!r}")
    return dict(zip(("conv3", "conv4", "conv5"), vals))


def _emit(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _load_dataset(path: str) -> Dataset:
    return parse_annotations(Path(path).read_bytes(), source=path)


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


# --- subcommands -----------------------------------------------------------


def cmd_min_size(args) -> int:
    _emit(write_scalar(min_detectable_size(args.stride, args.iou)), args.out)
    return EXIT_OK


def cmd_anchor_set(args) -> int:
    aset = synthesize_anchor_set(args.min, args.max, args.iou, args.scheme)
    _emit((aset.format() + "\n").encode(), args.out)
    return EXIT_OK


def cmd_assign_levels(args) -> int:
    aset = parse_anchor_set(args.anchors)
    lines = ["scale,level,stride"]
    for s in aset.scales:
        lvl = assign_level(s, args.boundaries, args.level_strides)
        lines.append(f"{format_scales([s])},{lvl.name},{lvl.stride:.6f}")
    _emit(("\r\n".join(lines) + "\r\n").encode(), args.out)
    return EXIT_OK


def brute_force_worst_case(size: float, stride: float, step: float = 0.01) -> float:
    """Minimum IoU of two equal squares over offsets in ``[0, stride/2]^2`` on a ``step`` lattice."""
    n = int(round(stride / 2 / step))
    offs = np.linspace(0.0, stride / 2, n + 1)
    ov = np.clip(size - offs, 0.0, None)
    inter = np.outer(ov, ov)
    iou = inter / (2 * size * size - inter)
    return float(iou.min())


def cmd_worst_case(args) -> int:
    analytic = worst_case_displaced_iou(args.size, args.stride)
    if not args.verify:
        _emit(write_scalar(analytic), args.out)
        return EXIT_OK
    brute = brute_force_worst_case(args.size, args.stride, args.step)
    diff = abs(analytic - brute)
    text = f"analytic,brute_force,abs_diff\r\n{analytic:.6f},{brute:.6f},{diff:.6f}\r\n"
    _emit(text.encode(), args.out)
    if diff > args.tolerance:
        raise InvariantError(f"closed form {analytic:.9f} disagrees with brute force {brute:.9f}")
    return EXIT_OK


def _anchor_set(args):
    return parse_anchor_set(args.anchors, args.aspects)


def cmd_grid_coverage(args) -> int:
    ds = _load_dataset(args.annotations)
    rep = evaluate_grid(
        ds,
        _anchor_set(args),
        strides=args.level_strides,
        boundaries=args.boundaries,
        flat_stride=args.stride,
        t=args.iou,
        clip_to_image=args.clip,
        threads=_threads(args),
    )
    _emit(write_report(rep, args.format), args.out)
    return EXIT_OK


def cmd_eval_proposals(args) -> int:
    ds = _load_dataset(args.annotations)
    sets = parse_proposals(Path(args.proposals).read_bytes(), source=args.proposals)
    rep = evaluate_boxes(ds, {k: v.boxes() for k, v in sets.items()}, t=args.iou, threads=_threads(args))
    _emit(write_report(rep, args.format), args.out)
    return EXIT_OK


def cmd_nms(args) -> int:
    sets = parse_proposals(Path(args.proposals).read_bytes(), source=args.proposals)
    ids = list(sets)

    def run(image_id):
        items = sets[image_id].items
        if args.hierarchical:
            return hierarchical_merge(group_by_level(items), args.threshold, args.top_n, args.merge_threshold)
        return nms(items, args.threshold)[: args.top_n]

    kept = ordered_map(run, ids, _threads(args))
    _emit(write_proposals(dict(zip(ids, kept))), args.out)
    return EXIT_OK


def cmd_partition(args) -> int:
    ds = _load_dataset(args.annotations)
    parts, summary = partition_dataset(ds, _threads(args))
    print(json.dumps(summary.as_dict(), sort_keys=True), file=sys.stderr)
    _emit(write_annotations(parts), args.out)
    return EXIT_OK


def cmd_variants(args) -> int:
    ds = _load_dataset(args.annotations)
    parts, summary = partition_dataset(ds, _threads(args))
    print(json.dumps(summary.as_dict(), sort_keys=True), file=sys.stderr)
    if args.kind == "test":
        if not args.out_dir:
            raise ValueError("--out-dir is required for --kind test")
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        variants = make_test_variants(parts, args.sizes, _threads(args), partitioned=True)
        for x, vds in variants.items():
            (out_dir / f"F_test_{format_scales([x])}.json").write_bytes(write_annotations(vds))
        names = "\n".join(f"F_test_{format_scales([x])}.json" for x in variants)
        _emit((names + "\n").encode(), args.out)
    else:
        a, b = args.range
        vds = make_train_variant(parts, a, b, args.seed, _threads(args), partitioned=True)
        _emit(write_annotations(vds), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    ds = _load_dataset(args.annotations)
    variants = make_test_variants(ds, args.sizes, _threads(args), partitioned=args.partitioned)
    curves = size_sweep(
        variants,
        _anchor_set(args),
        mode=args.mode,
        strides=args.level_strides,
        boundaries=args.boundaries,
        flat_stride=args.stride,
        t=args.iou,
        threads=_threads(args),
    )
    _emit(write_curves(curves), args.out)
    return EXIT_OK


def cmd_convert_voc(args) -> int:
    images = [parse_voc_xml(Path(p).read_bytes(), source=p) for p in args.xml]
    _emit(write_annotations(Dataset(args.name, images)), args.out)
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="anchorcov", description="Anchor geometry and proposal coverage analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, fn, help, description):
        sp = sub.add_parser(name, help=help, description=description,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(fn=fn)
        return sp

    def out(sp):
        sp.add_argument("--out", help="write result here instead of stdout")

    def threads(sp):
        sp.add_argument("--threads", type=int, default=0,
                        help="worker threads (default: all cores); output does not depend on it")

    def anchors(sp, default="A_prop"):
        sp.add_argument("--anchors", default=default,
                        help=f"preset ({', '.join(PRESETS)}) or comma-separated scales (default {default})")
        sp.add_argument("--aspects", type=_floats, default=list(DEFAULT_ASPECTS),
                        help="comma-separated aspect ratios w/h (default 0.5,1,2)")

    def levels(sp, with_flat=True):
        if with_flat:
            sp.add_argument("--stride", type=float, default=None,
                            help="one stride for every scale; omit to assign scales to conv3/4/5 levels")
        sp.add_argument("--level-strides", type=_level_strides, default=None,
                        help="strides of conv3,conv4,conv5 (default 4,8,16)")
        sp.add_argument("--boundaries", type=_pair, default=DEFAULT_BOUNDARIES,
                        help="level boundaries lo,hi: scale<=lo -> conv3, lo<scale<hi -> conv4, "
                             "scale>=hi -> conv5 (default 45,90)")

    sp = add("min-size", cmd_min_size, "minimum detectable object size for a stride",
             "Smallest square object side s_g whose worst-case displaced, scale-matched anchor\n"
             "still reaches IoU t on a grid of stride d:\n"
             "    s_g >= (d(t+1) + d*sqrt(2t(t+1))) / (2 - 2t)")
    sp.add_argument("--stride", type=float, required=True, help="anchor grid stride d in pixels")
    sp.add_argument("--iou", type=float, default=0.5, help="IoU threshold t, 0<t<1 (default 0.5)")
    out(sp)

    sp = add("anchor-set", cmd_anchor_set, "synthesize an anchor scale set",
             "Anchor scales from --min to --max. The geometric scheme relates neighbouring\n"
             "scales by s2 = s1 / sqrt(t), so an object matching either scale reaches IoU t\n"
             "(aligned nested boxes have IoU (s_small/s_large)^2). Scales are floored.\n"
             "powers_of_two doubles instead.")
    sp.add_argument("--min", type=float, required=True, help="smallest scale (px)")
    sp.add_argument("--max", type=float, required=True, help="largest allowed scale (px)")
    sp.add_argument("--iou", type=float, default=0.5, help="IoU threshold t (default 0.5)")
    sp.add_argument("--scheme", choices=("geometric", "powers_of_two"), default="geometric")
    out(sp)

    sp = add("assign-levels", cmd_assign_levels, "map anchor scales to feature levels",
             "Assign each scale to a feature level: <= lo px -> conv3, between -> conv4,\n"
             ">= hi px -> conv5 (first match wins at the shared endpoints).")
    sp.add_argument("--anchors", default="A_paper", help="preset or comma-separated scales")
    levels(sp, with_flat=False)
    out(sp)

    sp = add("worst-case", cmd_worst_case, "worst-case IoU of a scale-matched anchor",
             "IoU of two equal squares of side s offset by d/2 along both axes:\n"
             "    (s - d/2)^2 / (s^2 + d*s - d^2/4)     (0 when s <= d/2)\n"
             "--verify also minimizes IoU over a lattice of offsets and fails (exit 2) on mismatch.")
    sp.add_argument("--size", type=float, required=True, help="object side s (px)")
    sp.add_argument("--stride", type=float, required=True, help="grid stride d (px)")
    sp.add_argument("--verify", action="store_true", help="cross-check against brute-force minimization")
    sp.add_argument("--step", type=float, default=0.01, help="brute-force lattice step in px (default 0.01)")
    sp.add_argument("--tolerance", type=float, default=1e-3, help="allowed |analytic - brute| (default 1e-3)")
    out(sp)

    sp = add("grid-coverage", cmd_grid_coverage, "MABO upper bound of an anchor grid",
             "Treat every anchor as a proposal and report per-class average best overlap\n"
             "ABO(c) = mean over gt g of class c of max_l IoU(g, l), MABO = mean of ABO over\n"
             "classes, and recall at --iou. Without regression this bounds RPN coverage.")
    sp.add_argument("--annotations", required=True, help="annotation JSON")
    anchors(sp)
    levels(sp)
    sp.add_argument("--iou", type=float, default=0.5, help="recall threshold (default 0.5)")
    sp.add_argument("--clip", action="store_true", help="clip anchors to the image")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    threads(sp)
    out(sp)

    sp = add("eval-proposals", cmd_eval_proposals, "ABO/MABO/recall of proposal boxes",
             "ABO(c) = mean over gt g of class c of max_l IoU(g, l); MABO is the unweighted\n"
             "mean of ABO over classes present in the groundtruth. Proposals are class-agnostic.")
    sp.add_argument("--annotations", required=True, help="annotation JSON")
    sp.add_argument("--proposals", required=True, help="proposal CSV")
    sp.add_argument("--iou", type=float, default=0.5, help="recall threshold (default 0.5)")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    threads(sp)
    out(sp)

    sp = add("nms", cmd_nms, "greedy or per-level non-maximum suppression",
             "Greedy NMS per image: keep the best-scoring box and drop boxes with IoU >= threshold.\n"
             "--hierarchical runs NMS within each level tag, merges the survivors and runs NMS again.")
    sp.add_argument("--proposals", required=True, help="proposal CSV")
    sp.add_argument("--threshold", type=float, default=DEFAULT_NMS_THRESHOLD, help="IoU threshold (default 0.7)")
    sp.add_argument("--merge-threshold", type=float, default=None, help="threshold of the merge stage")
    sp.add_argument("--top-n", type=int, default=DEFAULT_TOP_N, help="proposals kept per image (default 2000)")
    sp.add_argument("--hierarchical", action="store_true", help="per-level NMS then merge NMS")
    threads(sp)
    out(sp)

    sp = add("partition", cmd_partition, "split images into single-object images",
             "Recursively split each image along the two axes through the midpoint of the\n"
             "widest gap between non-overlapping objects, provided the axes touch no object.\n"
             "Regions that cannot be split are discarded; a summary goes to stderr.")
    sp.add_argument("--annotations", required=True, help="annotation JSON")
    threads(sp)
    out(sp)

    sp = add("variants", cmd_variants, "size-normalized test/train dataset variants",
             "Partition, then rescale every single-object image so sqrt(object area) equals x\n"
             "(--kind test, one file per x in --sizes) or a value drawn uniformly from --range\n"
             "(--kind train, seeded).")
    sp.add_argument("--annotations", required=True, help="annotation JSON")
    sp.add_argument("--kind", choices=("test", "train"), required=True)
    sp.add_argument("--sizes", type=_floats, default=list(TEST_SIZES), help="test sizes (default 20,30,...,120)")
    sp.add_argument("--range", type=_pair, default=(20.0, 120.0), help="train size interval a,b (default 20,120)")
    sp.add_argument("--seed", type=int, default=0, help="train sampling seed (default 0)")
    sp.add_argument("--out-dir", help="directory for the test variant files")
    threads(sp)
    out(sp)

    sp = add("sweep", cmd_sweep, "per-anchor MABO as a function of object size",
             "For each anchor scale alone, MABO on each size variant. --mode ideal places the\n"
             "anchor concentric with the object; --mode grid uses the scale's level stride.")
    sp.add_argument("--annotations", required=True, help="annotation JSON (partitioned unless --partitioned)")
    sp.add_argument("--partitioned", action="store_true", help="input images already hold one object each")
    sp.add_argument("--mode", choices=("ideal", "grid"), default="ideal")
    sp.add_argument("--sizes", type=_floats, default=list(TEST_SIZES), help="object sizes (default 20,...,120)")
    sp.add_argument("--iou", type=float, default=0.5, help="recall threshold (default 0.5)")
    anchors(sp, default="A_paper")
    levels(sp)
    threads(sp)
    out(sp)

    sp = add("convert-voc", cmd_convert_voc, "convert VOC-style XML files to annotation JSON",
             "Read per-image VOC XML (size, object/name, bndbox xmin..ymax) into one annotation JSON.")
    sp.add_argument("xml", nargs="+", help="VOC XML files")
    sp.add_argument("--name", default="voc", help="dataset name")
    out(sp)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except InvariantError as e:
        print(f"anchorcov: internal check failed: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ValueError, OSError) as e:
        print(f"anchorcov: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        print(f"anchorcov: internal error: {e!r}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())
