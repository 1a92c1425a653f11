"""Command-line entry point: stats, bank, score, segment, eval, synth.

Every run prints an effective-config header (all defaults resolved) so
experiment logs are self-documenting. Exit codes: 0 success, 1 any hard
per-sample failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import baseline, metrics, plots, preproc, scorer, synth, tensor_io, ttt
from .pseudolabel import PseudoLabelConfig


def _print_config(args: argparse.Namespace) -> None:
    print("# effective config")
    for key in sorted(vars(args)):
        if key == "func":
            continue
        print(f"#   {key} = {getattr(args, key)}")


def _resolve(root: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(root, path)


def _load_dense_features(
    root: str, rec: tensor_io.SampleRecord, h: int, w: int
) -> np.ndarray:
    maps = []
    for fp in rec.feature_paths:
        f = tensor_io.read_tensor(_resolve(root, fp))
        if f.ndim != 3:
            raise ValueError(f"{fp}: feature tensor must be 3-D, got {f.ndim}-D")
        maps.append(preproc.upsample_bilinear(f, h, w))
    return preproc.concat_channels(maps)


def _load_exclude(
    root: str, rec: tensor_io.SampleRecord, args: argparse.Namespace
) -> np.ndarray | None:
    if not rec.point_map_path:
        return None
    points = tensor_io.read_tensor(_resolve(root, rec.point_map_path))
    return preproc.ransac_background(
        points,
        dist_threshold=args.ransac_dist,
        iterations=args.ransac_iters,
        seed=args.seed,
    )


def _for_each_sample(records, fn, jobs: int) -> list[str]:
    """Run fn(record) per sample; collect error strings, never abort the batch."""
    errors: list[str] = []
    def safe(rec):
        try:
            fn(rec)
            return None
        except Exception as exc:  # noqa: BLE001 - soft per-sample failure
            return f"{rec.sample_id}: {exc}"
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(safe, records))
    else:
        results = [safe(rec) for rec in records]
    errors = [r for r in results if r]
    for e in errors:
        print(f"ERROR {e}", file=sys.stderr)
    if errors:
        print(f"# {len(errors)}/{len(records)} samples failed", file=sys.stderr)
    return errors


def cmd_stats(args) -> int:
    records = tensor_io.read_manifest(args.manifest)
    maps = [
        tensor_io.read_tensor(_resolve(args.root, r.score_path)) for r in records
    ]
    mu, sigma = scorer.validation_stats(maps)
    os.makedirs(args.out, exist_ok=True)
    tensor_io.write_tensor(mu, os.path.join(args.out, "mu.tt"))
    tensor_io.write_tensor(sigma, os.path.join(args.out, "sigma.tt"))
    print(f"# wrote stats for {len(maps)} maps to {args.out}")
    return 0


def cmd_bank(args) -> int:
    records = tensor_io.read_manifest(args.manifest)
    feats = []
    for rec in records:
        for fp in rec.feature_paths:
            feats.append(tensor_io.read_tensor(_resolve(args.root, fp)))
    bank = scorer.build_bank(
        feats,
        coreset_ratio=args.coreset_ratio,
        projection_dim_scale=args.projection_scale,
        seed=args.seed,
        provenance=tuple(r.sample_id for r in records),
    )
    os.makedirs(args.out, exist_ok=True)
    scorer.save_bank(
        bank,
        os.path.join(args.out, "bank.tt"),
        os.path.join(args.out, "bank.meta"),
    )
    print(f"# bank: {bank.entries.shape[0]} entries of dim {bank.entries.shape[1]}")
    return 0


def cmd_score(args) -> int:
    bank = scorer.load_bank(
        os.path.join(args.bank, "bank.tt"), os.path.join(args.bank, "bank.meta")
    )
    records = tensor_io.read_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)

    def one(rec):
        feats = [
            tensor_io.read_tensor(_resolve(args.root, fp))
            for fp in rec.feature_paths
        ]
        dense = preproc.concat_channels(feats) if len(feats) > 1 else feats[0]
        s = scorer.score_map(bank, dense)
        out_path = os.path.join(args.out, f"{rec.sample_id}.tt")
        os.makedirs(os.path.dirname(out_path), exist_ok=True)
        tensor_io.write_tensor(s, out_path)

    errors = _for_each_sample(records, one, args.jobs)
    return 1 if errors else 0


def _segment_config(args) -> ttt.TTTConfig:
    return ttt.TTTConfig(
        pseudo=PseudoLabelConfig(
            percentile=args.percentile,
            enrich_radius=args.enrich_radius,
            nominal_stride=args.nominal_stride,
            nominal_guard=args.nominal_guard,
        ),
        svm_c=args.svm_c,
        loss_mode=args.svm_loss,
        max_iters=args.svm_iters,
        tol=args.svm_tol,
        standardize=args.standardize,
        seed=args.seed,
    )


def cmd_segment(args) -> int:
    records = tensor_io.read_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    config = _segment_config(args)
    mu = sigma = None
    if args.mode == "thr":
        if not args.stats_dir:
            print("segment --mode thr requires --stats-dir", file=sys.stderr)
            return 2
        mu = tensor_io.read_tensor(os.path.join(args.stats_dir, "mu.tt"))
        sigma = tensor_io.read_tensor(os.path.join(args.stats_dir, "sigma.tt"))

    diagnostics: dict[str, ttt.Diagnostics] = {}

    def one(rec):
        s = tensor_io.read_tensor(_resolve(args.root, rec.score_path))
        exclude = _load_exclude(args.root, rec, args)
        if args.mode == "thr":
            mask = baseline.binarize_threshold(s, mu, sigma, args.c)
            if exclude is not None:
                mask[exclude != 0] = tensor_io.NOMINAL
            diag = ttt.Diagnostics()
        elif args.mode == "ablation":
            mask, diag = ttt.run_score_feature_ablation(s, config, exclude)
        else:
            h, w = s.shape
            dense = _load_dense_features(args.root, rec, h, w)
            mask, diag = ttt.run_ttt4as(s, dense, config, exclude)
        out_path = os.path.join(args.out, f"{rec.sample_id}.pgm")
        os.makedirs(os.path.dirname(out_path), exist_ok=True)
        tensor_io.write_mask(mask, out_path)
        diagnostics[rec.sample_id] = diag

    errors = _for_each_sample(records, one, args.jobs)

    diag_path = os.path.join(args.out, "diagnostics.tsv")
    with open(diag_path, "w", encoding="ascii") as fh:
        fh.write(
            "sample_id\tn_anomalous\tn_nominal\tthreshold\tobjective\t"
            "iterations\tloss_mode\tsvm_c\tfallback\n"
        )
        for rec in records:
            d = diagnostics.get(rec.sample_id)
            if d is None:
                continue
            fh.write(
                f"{rec.sample_id}\t{d.n_anomalous}\t{d.n_nominal}\t"
                f"{d.threshold:.9g}\t{d.objective:.9g}\t{d.iterations}\t"
                f"{d.loss_mode}\t{d.svm_c}\t{d.fallback}\n"
            )
    print(f"# wrote {len(diagnostics)} masks to {args.out}")
    return 1 if errors else 0


def cmd_eval(args) -> int:
    records = tensor_io.read_manifest(args.manifest)
    class_of: dict[str, str] = {}
    if args.classes:
        with open(args.classes, "r", encoding="ascii") as fh:
            for line in fh:
                if line.strip():
                    sid, _, cls = line.rstrip("\n").partition("\t")
                    class_of[sid] = cls

    image_records = []
    pixel_scores: list[np.ndarray] = []
    pixel_labels: list[np.ndarray] = []
    img_scores: list[float] = []
    img_labels: list[int] = []
    failures = []
    for rec in records:
        try:
            if not rec.ground_truth_mask_path:
                raise ValueError("missing ground-truth mask")
            gt = tensor_io.read_mask(
                _resolve(args.root, rec.ground_truth_mask_path)
            )
            if args.with_auroc:
                s = tensor_io.read_tensor(_resolve(args.root, rec.score_path))
                pixel_scores.append(s.ravel())
                pixel_labels.append((gt.ravel() != 0).astype(np.uint8))
                img_scores.append(scorer.image_score(s))
                img_labels.append(int((gt != 0).any()))
            if not (gt != 0).any():
                continue  # P/R/F1 only on anomalous images
            mask = tensor_io.read_mask(
                os.path.join(args.masks, f"{rec.sample_id}.pgm")
            )
            p, r, f1 = metrics.prf1_image(mask, gt)
            tp, fp, fn = metrics.confusion_counts(mask, gt)
            image_records.append(
                metrics.ImageRecord(rec.sample_id, tp, fp, fn, p, r, f1)
            )
        except Exception as exc:  # noqa: BLE001 - soft per-sample failure
            failures.append(f"{rec.sample_id}: {exc}")
    for e in failures:
        print(f"ERROR {e}", file=sys.stderr)
    if not image_records:
        print("no evaluable images", file=sys.stderr)
        return 1

    report = metrics.aggregate(image_records, class_of or None)
    if args.with_auroc and pixel_scores:
        labels = np.concatenate(pixel_labels)
        if labels.min() != labels.max():
            report.p_auroc = metrics.auroc(np.concatenate(pixel_scores), labels)
        if min(img_labels) != max(img_labels):
            report.i_auroc = metrics.auroc(img_scores, img_labels)

    os.makedirs(args.out, exist_ok=True)
    write_report(report, args.out)
    plots.render_report_figure(
        report, os.path.join(args.out, "report.png"), title="per-class metrics"
    )
    print_report(report)
    return 1 if failures else 0


def write_report(report: metrics.EvalReport, out_dir: str) -> None:
    with open(os.path.join(out_dir, "per_image.tsv"), "w", encoding="ascii") as fh:
        fh.write("sample_id\ttp\tfp\tfn\tprecision\trecall\tf1\n")
        for r in report.records:
            fh.write(
                f"{r.sample_id}\t{r.tp}\t{r.fp}\t{r.fn}\t"
                f"{r.precision:.6f}\t{r.recall:.6f}\t{r.f1:.6f}\n"
            )
    with open(os.path.join(out_dir, "report.tsv"), "w", encoding="ascii") as fh:
        fh.write("class\tprecision\trecall\tf1\n")
        for cls, cm in report.class_means.items():
            fh.write(
                f"{cls}\t{cm['precision']:.6f}\t{cm['recall']:.6f}\t"
                f"{cm['f1']:.6f}\n"
            )
        m = report.mean
        fh.write(f"mean\t{m['precision']:.6f}\t{m['recall']:.6f}\t{m['f1']:.6f}\n")
        if report.p_auroc is not None:
            fh.write(f"p_auroc\t{report.p_auroc:.6f}\t\t\n")
        if report.i_auroc is not None:
            fh.write(f"i_auroc\t{report.i_auroc:.6f}\t\t\n")


def print_report(report: metrics.EvalReport) -> None:
    print("class\tprecision\trecall\tf1")
    for cls, cm in report.class_means.items():
        print(f"{cls}\t{cm['precision']:.4f}\t{cm['recall']:.4f}\t{cm['f1']:.4f}")
    m = report.mean
    print(f"mean\t{m['precision']:.4f}\t{m['recall']:.4f}\t{m['f1']:.4f}")
    if report.p_auroc is not None:
        print(f"# P-AUROC {report.p_auroc:.4f}")
    if report.i_auroc is not None:
        print(f"# I-AUROC {report.i_auroc:.4f}")


def _knobs_from_args(args) -> synth.SynthKnobs:
    return synth.SynthKnobs(
        height=args.size,
        width=args.size,
        channels=args.channels,
        feature_shift=args.feature_shift,
        feature_noise=args.feature_noise,
        score_noise=args.score_noise,
        calibrated=args.calibrated,
    )


def cmd_synth_gen(args) -> int:
    synth.generate_split(
        args.out,
        n_val_nominal=args.n_val,
        n_test_anomalous=args.n_test,
        knobs=_knobs_from_args(args),
        seed=args.seed,
    )
    print(f"# generated {args.n_val} validation + {args.n_test} test scenes")
    return 0


def cmd_synth_run(args) -> int:
    reports = synth.run_experiment(args.dataset, methods=tuple(args.methods))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "comparison.tsv"), "w", encoding="ascii") as fh:
        fh.write("method\tprecision\trecall\tf1\n")
        for method, rep in reports.items():
            m = rep.mean
            fh.write(
                f"{method}\t{m['precision']:.6f}\t{m['recall']:.6f}\t"
                f"{m['f1']:.6f}\n"
            )
    plots.render_comparison_figure(
        reports,
        os.path.join(args.out, "comparison.png"),
        title="method comparison (synthetic benchmark)",
    )
    print("method\tprecision\trecall\tf1")
    for method, rep in reports.items():
        m = rep.mean
        print(f"{method}\t{m['precision']:.4f}\t{m['recall']:.4f}\t{m['f1']:.4f}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--root", default=".", help="base directory for manifest paths")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--jobs",
        type=int,
        default=int(os.environ.get("TTTA_JOBS", "1")),
        help="parallel sample workers (default from TTTA_JOBS)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttta",
        description="Anomaly segmentation via per-sample test-time training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="per-pixel mean/std over validation scores")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bank", help="build a coreset memory bank from features")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--coreset-ratio", type=float, default=0.10)
    p.add_argument("--projection-scale", type=float, default=0.9)
    p.set_defaults(func=cmd_bank)

    p = sub.add_parser("score", help="score samples against a memory bank")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("segment", help="binarize score maps into masks")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("thr", "ttt4as", "ablation"),
                   default="ttt4as")
    p.add_argument("--stats-dir", default="", help="mu/sigma dir for thr mode")
    p.add_argument("--c", type=float, default=3.0, help="thr mode: mu + c*sigma")
    p.add_argument("--percentile", type=float, default=99.0)
    p.add_argument("--enrich-radius", type=int, default=2)
    p.add_argument("--nominal-stride", type=int, default=8)
    p.add_argument("--nominal-guard", type=int, default=4)
    p.add_argument("--svm-c", type=float, default=0.001)
    p.add_argument("--svm-loss", choices=("sum", "mean"), default="sum")
    p.add_argument("--svm-iters", type=int, default=2000)
    p.add_argument("--svm-tol", type=float, default=1e-6)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--ransac-dist", type=float, default=0.005)
    p.add_argument("--ransac-iters", type=int, default=1000)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="evaluate masks against ground truth")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default="", help="TSV sample_id -> class")
    p.add_argument("--with-auroc", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="synthetic benchmark")
    synth_sub = p.add_subparsers(dest="synth_command", required=True)

    g = synth_sub.add_parser("gen", help="generate a synthetic dataset")
    _add_common(g)
    g.add_argument("--out", required=True)
    g.add_argument("--n-val", type=int, default=20)
    g.add_argument("--n-test", type=int, default=20)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--channels", type=int, default=16)
    g.add_argument("--feature-shift", type=float, default=6.0)
    g.add_argument("--feature-noise", type=float, default=0.5)
    g.add_argument("--score-noise", type=float, default=0.08)
    g.add_argument("--calibrated", action="store_true")
    g.set_defaults(func=cmd_synth_gen)

    r = synth_sub.add_parser("run", help="run the method comparison")
    _add_common(r)
    r.add_argument("--dataset", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--methods", nargs="+", default=list(synth.DEFAULT_METHODS))
    r.set_defaults(func=cmd_synth_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_config(args)
    try:
        return args.func(args)
    except (OSError, ValueError, tensor_io.TensorFormatError) as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
