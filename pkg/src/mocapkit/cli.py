"""Command line surface: stats, augment, clean, solve, train, eval.

Each invocation writes exactly one JSON document to stdout (the machine
readable result, or a structured error with a nonzero exit code); progress
notes go to stderr. All outputs are deterministic for fixed inputs, and
commands that draw random numbers refuse to run without an explicit
``--seed``.
"""

import argparse
import csv
import os
import sys

import numpy as np

from .align import (
    from_local,
    motion_to_local,
    reference_frames,
    reference_marker_names,
    to_local,
)
from .augment import OcclusionStats, corrupt_sequence, estimate_stats
from .config import load_config
from .datagen import default_target_stats, load_rig
from .errors import MocapError, ValidationError
from .gapfill import fill_sequence
from .graph import (
    DEFAULT_THRESHOLD_SCALE,
    build_hetero_graph,
    marker_edges_from_table,
)
from .locality import (
    load_neighbor_table,
    pairwise_distance_stats,
    pooled_distance_stats,
    save_neighbor_table,
    select_neighbors,
)
from .metrics import (
    frame_joe,
    frame_jpe,
    frame_ompe,
    metric_joe,
    metric_jpe,
    metric_ompe,
)
from .outliers import ThresholdPolicy, detect_outliers, repair_outliers
from .refine import RefinerNet, load_refiner, refine, save_refiner, train_refiner
from .sequence import (
    STREAMS,
    MarkerLayout,
    load_sequence,
    save_sequence,
    sequence_from_dict,
)
from .serialize import canonical_dumps, dump_json, load_json
from .skeleton import export_bvh, load_motion, motion_from_dict, save_motion
from .solver import SolverNet, load_solver, save_solver, solve_sequence, train_solver


def _say(msg):
    print(msg, file=sys.stderr)


def _require_seed(args):
    if args.seed is None:
        raise ValidationError(
            f"'{args.command}' draws random numbers; pass an explicit --seed"
        )


def _stream_refs(cfg, seq, stream):
    if cfg.reference_markers and stream in cfg.reference_markers:
        return list(cfg.reference_markers[stream])
    return reference_marker_names(seq, stream)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v):
    return f"{float(v):.10g}"


# -- stats -----------------------------------------------------------------


def cmd_stats(args):
    cfg = load_config(args.config)
    seqs = [load_sequence(p) for p in args.inputs]
    _say(f"loaded {len(seqs)} sequence(s)")
    out = {"sequences": len(seqs)}
    if args.what in ("all", "occlusion"):
        stats = estimate_stats(seqs)
        out["stats"] = stats.to_dict()
        if args.out:
            dump_json(out["stats"], args.out)
            out["stats_file"] = args.out
    if args.what in ("all", "neighbors"):
        k = args.k if args.k is not None else cfg.k_fill
        table = select_neighbors(
            pooled_distance_stats(seqs), seqs[0].part_labels, k, seqs[0].marker_names
        )
        out["k"] = k
        out["short_markers"] = [seqs[0].marker_names[i] for i in table.short]
        if args.neighbors_out:
            save_neighbor_table(table, args.neighbors_out)
            out["neighbors_file"] = args.neighbors_out
    return out


# -- augment ---------------------------------------------------------------


def cmd_augment(args):
    _require_seed(args)
    cfg = load_config(args.config)
    seq = load_sequence(args.input)
    if args.stats:
        stats = OcclusionStats.from_dict(load_json(args.stats))
    else:
        stats = default_target_stats(seq.n_markers)
        _say("no stats file given; using the default corruption profile")
    budget = args.budget
    if budget is None:
        budget = min(1.0, 0.05 * seq.n_markers)
    p_shift = cfg.p_shift if args.p_shift is None else args.p_shift
    sigma = cfg.sigma_shift if args.sigma_shift is None else args.sigma_shift
    result = corrupt_sequence(seq, stats, budget, p_shift, sigma, seed=args.seed)
    save_sequence(result.sequence, args.out)
    dump_json(
        {
            "mask": result.occlusion_mask.astype(int).tolist(),
            "shift_mask": result.shift_mask.astype(int).tolist(),
        },
        args.mask_out,
    )
    occluded = int(result.occlusion_mask.sum())
    return {
        "out": args.out,
        "mask_out": args.mask_out,
        "occluded_entries": occluded,
        "occluded_fraction": occluded / (seq.n_frames * seq.n_markers),
        "shifted_entries": int(result.shift_mask.sum()),
    }


# -- clean -----------------------------------------------------------------


def _outlier_report_dict(report):
    return {
        "policy": {"kind": report.policy.kind, "value": report.policy.value},
        "thresholds": [float(t) for t in report.thresholds],
        "events": [
            {"marker": e.marker, "frame": e.frame, "value": e.value, "threshold": e.threshold}
            for e in report.events
        ],
        "repair_windows": [
            {"marker": w.marker, "first": w.first, "last": w.last, "method": w.method}
            for w in report.repair_windows
        ],
    }


def _gap_fill_dicts(seq, fills):
    out = []
    for f in fills:
        out.append(
            {
                "marker": seq.marker_names[f.gap.marker],
                "first": f.gap.first,
                "last": f.gap.last,
                "methods": list(f.methods),
                "residuals": [float(r) for r in f.residuals],
                "filled": f.filled,
            }
        )
    return out


def _apply_refiner(seq, net, manifest, cfg):
    names = manifest.get("marker_names")
    stream = manifest.get("stream", "body")
    if names is None:
        idx = seq.stream_indices(stream)
    else:
        idx = [seq.marker_index(n) for n in names]
    if len(idx) != net.n_markers:
        raise ValidationError(
            f"refiner expects {net.n_markers} markers, matched {len(idx)}"
        )
    sub = seq.select_markers(idx)
    series = reference_frames(sub, _stream_refs(cfg, sub, stream))
    refined = from_local(refine(net, to_local(sub, series)), series)
    # copy back only occluded entries so measured samples stay bit-identical
    mask = (sub.visibility == 0) & np.isfinite(refined.positions).all(axis=2)
    pos = np.array(seq.positions)
    sub_pos = np.array(sub.positions)
    sub_pos[mask] = refined.positions[mask]
    pos[:, idx] = sub_pos
    return seq.with_positions(pos), int(mask.sum())


def cmd_clean(args):
    cfg = load_config(args.config)
    seq = load_sequence(args.input)
    report = {}
    out = {}
    if args.stage in ("all", "outliers"):
        policy = ThresholdPolicy(cfg.outlier_kind, cfg.outlier_value)
        found = detect_outliers(seq, policy)
        seq, found = repair_outliers(seq, found, cfg.repair_half_window)
        report["outliers"] = _outlier_report_dict(found)
        out["outlier_events"] = len(found.events)
        _say(
            f"outliers: {len(found.events)} event(s), "
            f"{len(found.repair_windows)} repair window(s)"
        )
    if args.stage in ("all", "fill"):
        if args.neighbors:
            table = load_neighbor_table(args.neighbors)
            if tuple(table.marker_names) != tuple(seq.marker_names):
                raise ValidationError("neighbor table markers do not match sequence")
        else:
            table = select_neighbors(
                pairwise_distance_stats(seq),
                seq.part_labels,
                cfg.k_fill,
                seq.marker_names,
            )
        seq, fills = fill_sequence(seq, table)
        report["gaps"] = _gap_fill_dicts(seq, fills)
        out["gaps"] = len(fills)
        out["gaps_filled"] = sum(1 for f in fills if f.filled)
        _say(f"gaps: {out['gaps_filled']}/{out['gaps']} filled")
        if args.refiner:
            net, manifest = load_refiner(args.refiner)
            seq, touched = _apply_refiner(seq, net, manifest, cfg)
            out["refined_entries"] = touched
    save_sequence(seq, args.out)
    out["out"] = args.out
    if args.report:
        dump_json(report, args.report)
        out["report"] = args.report
    return out


# -- solve -----------------------------------------------------------------


def cmd_solve(args):
    cfg = load_config(args.config)
    seq = load_sequence(args.input)
    net, manifest = load_solver(args.model)
    stream = args.stream or manifest.get("stream", "body")
    names = manifest.get("marker_names")
    if names is None:
        idx = seq.stream_indices(stream)
    else:
        idx = [seq.marker_index(n) for n in names]
    if len(idx) != net.graph.n_markers:
        raise ValidationError(
            f"model expects {net.graph.n_markers} markers, matched {len(idx)}"
        )
    sub = seq.select_markers(idx)
    series = reference_frames(sub, _stream_refs(cfg, sub, stream))
    motion, skeleton = solve_sequence(net, to_local(sub, series), series)
    save_motion(motion, skeleton, args.out)
    out = {
        "out": args.out,
        "stream": stream,
        "frames": motion.n_frames,
        "joints": motion.n_joints,
    }
    if args.bvh:
        export_bvh(motion, skeleton, args.bvh, frame_rate=seq.frame_rate)
        out["bvh"] = args.bvh
    return out


# -- train -----------------------------------------------------------------


def _stream_layout(layout, stream):
    idx = [i for i, lab in enumerate(layout.part_labels) if lab in STREAMS[stream]]
    if not idx:
        raise ValidationError(f"stream {stream!r} has no markers in this rig")
    sub = MarkerLayout(
        marker_names=[layout.marker_names[i] for i in idx],
        part_labels=[layout.part_labels[i] for i in idx],
        parent_joints=layout.parent_joints[idx],
        local_offsets=layout.local_offsets[idx],
    )
    return sub, idx


def _write_loss_csv(path, losses):
    _write_csv(path, ["step", "loss"], [(i, _fmt(v)) for i, v in enumerate(losses)])


def _progress(steps):
    every = max(1, steps // 10)

    def log(step, loss):
        _say(f"step {step}/{steps}: loss {loss:.6f}")

    return every, log


def _train_solver(args, cfg, skel, sub_layout, dataset_dir, entries, stream):
    triples = []
    world_subs = []
    for e in entries:
        clean = load_sequence(os.path.join(dataset_dir, e["clean"]))
        motion, mskel = load_motion(os.path.join(dataset_dir, e["motion"]))
        idx = [clean.marker_index(n) for n in sub_layout.marker_names]
        sub = clean.select_markers(idx)
        series = reference_frames(sub, _stream_refs(cfg, sub, stream))
        triples.append((to_local(sub, series), motion_to_local(motion, series), mskel))
        world_subs.append(sub)
    table = select_neighbors(
        pooled_distance_stats(world_subs),
        sub_layout.part_labels,
        cfg.k_solve,
        sub_layout.marker_names,
    )
    threshold = None
    if cfg.graph_threshold_scale != DEFAULT_THRESHOLD_SCALE:
        threshold = cfg.graph_threshold_scale * skel.mean_bone_length()
    graph = build_hetero_graph(sub_layout, skel, table, threshold)
    net = SolverNet(graph, cfg.solver, np.random.default_rng([args.seed, 0]))
    steps = args.steps if args.steps is not None else cfg.solver_steps
    _say(f"training solver for {steps} steps on {len(triples)} sequence(s)")
    every, log = _progress(steps)
    result = train_solver(
        net, triples, steps, lr=cfg.lr, weights=cfg.loss_weights,
        log_every=every, log_fn=log,
    )
    save_solver(
        args.out,
        net,
        extra={
            "marker_names": list(sub_layout.marker_names),
            "stream": stream,
            "seed": args.seed,
            "steps": steps,
        },
    )
    return steps, result


def _train_refiner(args, cfg, sub_layout, dataset_dir, entries, stream):
    loaded = []
    corrupted_subs = []
    for e in entries:
        corr = load_sequence(os.path.join(dataset_dir, e["corrupted"]))
        clean = load_sequence(os.path.join(dataset_dir, e["clean"]))
        mask = np.asarray(load_json(os.path.join(dataset_dir, e["mask"]))["mask"], bool)
        idx = [corr.marker_index(n) for n in sub_layout.marker_names]
        loaded.append((corr.select_markers(idx), clean.select_markers(idx), mask[:, idx]))
        corrupted_subs.append(loaded[-1][0])
    table = select_neighbors(
        pooled_distance_stats(corrupted_subs),
        sub_layout.part_labels,
        cfg.k_fill,
        sub_layout.marker_names,
    )
    items = []
    for csub, clsub, mask in loaded:
        filled, _ = fill_sequence(csub, table)
        series = reference_frames(filled, _stream_refs(cfg, filled, stream))
        items.append((to_local(filled, series), to_local(clsub, series), mask))
    net = RefinerNet(
        sub_layout.n_markers,
        marker_edges_from_table(table),
        cfg.refiner_conv_width,
        cfg.refiner_rnn_width,
        np.random.default_rng([args.seed, 1]),
    )
    steps = args.steps if args.steps is not None else cfg.refiner_steps
    _say(f"training refiner for {steps} steps on {len(items)} sequence(s)")
    every, log = _progress(steps)
    result = train_refiner(net, items, steps, lr=cfg.lr, log_every=every, log_fn=log)
    save_refiner(
        args.out,
        net,
        extra={
            "marker_names": list(sub_layout.marker_names),
            "stream": stream,
            "seed": args.seed,
            "steps": steps,
        },
    )
    return steps, result


def cmd_train(args):
    _require_seed(args)
    cfg = load_config(args.config)
    manifest = load_json(os.path.join(args.dataset, "manifest.json"))
    rig_file = manifest.get("rig", "rig.json")
    skel, layout = load_rig(os.path.join(args.dataset, rig_file))
    sub_layout, _ = _stream_layout(layout, args.stream)
    entries = manifest["sequences"]
    if not entries:
        raise ValidationError("dataset manifest lists no sequences")
    _say(
        f"dataset: {len(entries)} sequence(s), stream {args.stream!r} "
        f"({sub_layout.n_markers} markers)"
    )
    if args.which == "solver":
        steps, result = _train_solver(
            args, cfg, skel, sub_layout, args.dataset, entries, args.stream
        )
    else:
        steps, result = _train_refiner(
            args, cfg, sub_layout, args.dataset, entries, args.stream
        )
    out = {
        "which": args.which,
        "out": args.out,
        "steps": steps,
        "final_loss": result.final_loss,
    }
    if args.loss_log:
        _write_loss_csv(args.loss_log, result.losses)
        out["loss_log"] = args.loss_log
    return out


# -- eval ------------------------------------------------------------------


def _doc_kind(doc, path):
    if isinstance(doc, dict) and "marker_names" in doc:
        return "sequence"
    if isinstance(doc, dict) and "joints" in doc:
        return "motion"
    raise ValidationError(f"{path} is neither a sequence nor a motion file")


def cmd_eval(args):
    pred_doc = load_json(args.pred)
    truth_doc = load_json(args.truth)
    kind = _doc_kind(pred_doc, args.pred)
    if kind != _doc_kind(truth_doc, args.truth):
        raise ValidationError("pred and truth are different kinds of file")
    out = {"kind": kind}
    if kind == "sequence":
        pred = sequence_from_dict(pred_doc)
        truth = sequence_from_dict(truth_doc)
        if pred.marker_names != truth.marker_names:
            raise ValidationError("pred and truth marker names differ")
        if args.mask:
            mask = np.asarray(load_json(args.mask)["mask"], bool)
        else:
            mask = pred.visibility == 0
            _say("no mask given; scoring entries the estimate flags as occluded")
        out["ompe"] = metric_ompe(pred.positions, truth.positions, mask)
        per = frame_ompe(pred.positions, truth.positions, mask)
        header = ["frame", "ompe"]
        rows = [(t, _fmt(v)) for t, v in enumerate(per)]
    else:
        pm, ps = motion_from_dict(pred_doc)
        tm, ts = motion_from_dict(truth_doc)
        out["joe"] = metric_joe(pm, tm)
        out["jpe"] = metric_jpe(pm, ps, tm, ts)
        per_joe = frame_joe(pm, tm)
        per_jpe = frame_jpe(pm, ps, tm, ts)
        header = ["frame", "joe", "jpe"]
        rows = [(t, _fmt(a), _fmt(b)) for t, (a, b) in enumerate(zip(per_joe, per_jpe))]
    if args.csv:
        _write_csv(args.csv, header, rows)
        out["csv"] = args.csv
    if args.out:
        dump_json({k: v for k, v in out.items() if k != "csv"}, args.out)
        out["out"] = args.out
    return out


# -- parser ----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mocapkit",
        description="Marker data cleaning and skeletal solving toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="pipeline config JSON")
        sp.add_argument("--seed", type=int, help="random seed (required when random)")

    sp = sub.add_parser("stats", help="occlusion statistics and neighbor tables")
    sp.add_argument("what", nargs="?", default="all",
                    choices=("all", "occlusion", "neighbors"))
    sp.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="SEQ")
    sp.add_argument("--out", help="occlusion stats output file")
    sp.add_argument("--neighbors-out", help="neighbor table output file")
    sp.add_argument("--k", type=int, help="neighbor count (default from config)")
    common(sp)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("augment", help="corrupt a clean sequence")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mask-out", required=True)
    sp.add_argument("--stats", help="occlusion stats JSON (default profile if absent)")
    sp.add_argument("--budget", type=float,
                    help="total gap budget as a fraction of one marker track")
    sp.add_argument("--p-shift", type=float)
    sp.add_argument("--sigma-shift", type=float)
    common(sp)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("clean", help="repair outliers and fill gaps")
    sp.add_argument("stage", nargs="?", default="all",
                    choices=("all", "outliers", "fill"))
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--neighbors", help="precomputed neighbor table")
    sp.add_argument("--refiner", help="trained refiner model")
    sp.add_argument("--report", help="write outlier/gap reports here")
    common(sp)
    sp.set_defaults(func=cmd_clean)

    sp = sub.add_parser("solve", help="solve markers into joint motion")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--bvh", help="also export BVH here")
    sp.add_argument("--stream", choices=tuple(STREAMS))
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("train", help="train the solver or the refiner")
    sp.add_argument("which", choices=("solver", "refiner"))
    sp.add_argument("--dataset", required=True, help="dataset directory")
    sp.add_argument("--out", required=True, help="model output file")
    sp.add_argument("--loss-log", help="loss curve CSV")
    sp.add_argument("--stream", default="body", choices=tuple(STREAMS))
    sp.add_argument("--steps", type=int)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="compare an estimate against ground truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--mask", help="occlusion mask JSON (sequence eval)")
    sp.add_argument("--out", help="metrics JSON output")
    sp.add_argument("--csv", help="per-frame metrics CSV")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except MocapError as exc:
        sys.stdout.write(canonical_dumps({"ok": False, **exc.payload()}))
        return 2
    except FileNotFoundError as exc:
        sys.stdout.write(
            canonical_dumps(
                {"ok": False, "error": "missing_file", "message": str(exc)}
            )
        )
        return 2
    sys.stdout.write(canonical_dumps({"ok": True, "command": args.command, **result}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
