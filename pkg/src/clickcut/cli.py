"""Command line interface.

    clickcut bench run      --dataset manifest.tsv --encoder sp+spbox ...
    clickcut bench ablation --dataset manifest.tsv --encoders sp,sp+bbox,sp+spbox ...
    clickcut bench refine   --dataset manifest.tsv --budgets 1,4,10 ...
    clickcut bench synth    --n 50 --seed 0 --out corpus/
    clickcut serve          --host 127.0.0.1 --port 8008 [--ui-dir frontend]
    clickcut info
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from clickcut import bench, segmenter


def _add_run_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="manifest file (tab separated)")
    p.add_argument("--threshold", type=float, default=0.90)
    p.add_argument("--max-clicks", type=int, default=20)
    p.add_argument("--superpixels", type=int, default=1000)
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--backend", default="graphcut")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box-mode", choices=["center_corner", "corner_pair"],
                   default="center_corner")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="segmenter param override, repeatable")


def _config_from_args(args, encoder: str) -> bench.RunConfig:
    overrides = {}
    for item in args.param:
        key, _, value = item.partition("=")
        if not _:
            raise SystemExit(f"bad --param {item!r}, expected KEY=VALUE")
        overrides[key] = value
    return bench.RunConfig(
        encoder=encoder,
        superpixels=args.superpixels,
        compactness=args.compactness,
        iou_threshold=args.threshold,
        max_clicks=args.max_clicks,
        backend=args.backend,
        seed=args.seed,
        box_mode=args.box_mode,
        params=segmenter.SegmenterParams.from_dict(overrides),
    )


def _write_report(report: bench.RunReport, out: str | None) -> None:
    if out:
        out_path = Path(out)
        out_path.write_text(report.to_json())
        out_path.with_suffix(".csv").write_text(report.to_csv())
        print(f"wrote {out_path} and {out_path.with_suffix('.csv')}")


def cmd_bench_run(args) -> int:
    manifest = bench.load_manifest(args.dataset)
    config = _config_from_args(args, args.encoder)
    report = bench.run_benchmark(manifest, config)
    skipped = [r for r in report.records if r.skipped]
    print(f"dataset {manifest.name}: {len(report.evaluated)} instances "
          f"({len(skipped)} skipped)")
    print(f"encoder {config.encoder}: mean clicks @ {config.iou_threshold:.0%} = "
          f"{report.mean_clicks:.2f}")
    for r in skipped:
        print(f"  skipped {r.instance_id}: {r.skip_reason}")
    _write_report(report, args.out)
    return 0


def cmd_bench_ablation(args) -> int:
    manifest = bench.load_manifest(args.dataset)
    encoders = [e.strip() for e in args.encoders.split(",") if e.strip()]
    configs = [_config_from_args(args, e) for e in encoders]
    rows = bench.run_ablation(manifest, configs)
    width = max(len(r.encoder) for r in rows)
    print(f"{'encoder'.ljust(width)}  mean clicks  mean final IoU")
    for r in rows:
        print(f"{r.encoder.ljust(width)}  {r.mean_clicks:11.2f}  {r.mean_final_iou:14.4f}")
    if args.out:
        Path(args.out).write_text(bench.ablation_json(rows))
        print(f"wrote {args.out}")
    return 0


def cmd_bench_refine(args) -> int:
    manifest = bench.load_manifest(args.dataset)
    config = _config_from_args(args, args.encoder)
    budgets = tuple(int(b) for b in args.budgets.split(","))
    table = bench.run_refinement(manifest, config, budgets)
    print(f"backend {table['backend']}: initial mIoU {table['initial_miou']:.4f}")
    for b in budgets:
        print(f"  mIoU @ {b:>2} clicks: {table['miou_at_budget'][str(b)]:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(table, indent=2))
        print(f"wrote {args.out}")
    return 0


def cmd_bench_synth(args) -> int:
    manifest = bench.synth_corpus(args.out, args.n, args.seed, size=args.size,
                                  with_initial_masks=args.initial_masks)
    print(f"wrote {len(manifest.entries)} instances to {args.out} "
          f"(manifest.tsv included)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from clickcut.service import create_app

    ui_dir = args.ui_dir
    if ui_dir is None and Path("frontend/index.html").exists():
        ui_dir = "frontend"
    app = create_app(ui_dir=ui_dir)
    if ui_dir:
        print(f"serving UI from {ui_dir} at /ui/")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_info(args) -> int:
    from clickcut import _kernels

    print(f"clickcut 0.1.0; kernel backend: {_kernels.BACKEND}")
    print(f"encoders: {', '.join(segmenter.ENCODERS)}")
    print("backends: graphcut, oracle:<k>")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clickcut", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    bench_p = sub.add_parser("bench", help="benchmark harness")
    bench_sub = bench_p.add_subparsers(dest="bench_command", required=True)

    run_p = bench_sub.add_parser("run", help="clicks@mIoU on one encoder")
    _add_run_config_args(run_p)
    run_p.add_argument("--encoder", choices=segmenter.ENCODERS, default="sp+spbox")
    run_p.add_argument("--out", help="report path (.json; .csv written alongside)")
    run_p.set_defaults(fn=cmd_bench_run)

    abl_p = bench_sub.add_parser("ablation", help="compare encoder variants")
    _add_run_config_args(abl_p)
    abl_p.add_argument("--encoders", default="sp,sp+bbox,sp+spbox",
                       help="comma separated encoder list")
    abl_p.add_argument("--out", help="table path (.json)")
    abl_p.set_defaults(fn=cmd_bench_ablation)

    ref_p = bench_sub.add_parser("refine", help="improve provided initial masks")
    _add_run_config_args(ref_p)
    ref_p.add_argument("--encoder", choices=segmenter.ENCODERS, default="sp+spbox")
    ref_p.add_argument("--budgets", default="1,4,10")
    ref_p.add_argument("--out", help="table path (.json)")
    ref_p.set_defaults(fn=cmd_bench_refine)

    synth_p = bench_sub.add_parser("synth", help="generate a synthetic corpus")
    synth_p.add_argument("--n", type=int, default=50)
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--size", type=int, default=112)
    synth_p.add_argument("--out", required=True)
    synth_p.add_argument("--initial-masks", action="store_true",
                         help="also write degraded masks for refinement runs")
    synth_p.set_defaults(fn=cmd_bench_synth)

    serve_p = sub.add_parser("serve", help="run the click session service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8008)
    serve_p.add_argument("--ui-dir", help="static directory mounted at /ui")
    serve_p.set_defaults(fn=cmd_serve)

    info_p = sub.add_parser("info", help="print build and backend info")
    info_p.set_defaults(fn=cmd_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
