"""
Command-line interface for densecheck.

Provides commands for generating synthetic ground truth, evaluating depth,
normal and temporal-consistency metrics, scoring losses and checking the
channel-attention gradients.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence, Tuple

import click
from dotenv import find_dotenv, load_dotenv

from . import __version__
from .align import (
    AlignmentParams,
    apply_alignment,
    fit_scale_shift,
    fit_scale_shift_sequence,
    normalize_depth,
)
from .config import atomic_write, dump_json, parallel_map
from .errors import DenseCheckError, ManifestError
from .features import run_cwa_gradcheck
from .grids import FrameSample, SequenceManifest
from .losses import PRESETS, LossConfig, stage1_loss, stage2_loss
from .metrics import (
    DEFAULT_THRESHOLDS,
    acc_key,
    aggregate,
    depth_metrics,
    normal_metrics,
    pair_metrics,
)
from .reports import (
    DEPTH_COLUMNS,
    NORMAL_COLUMNS,
    TEMPORAL_COLUMNS,
    format_table,
    merge_summaries,
    write_csv,
    write_summary,
)
from .runlog import Command, RunLog
from .synth import FRAMINGS, MAX_FRAMES, WalkerConfig, generate_sequence, make_walker

logger = logging.getLogger(__name__)

_LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

workers_option = click.option(
    "--workers",
    type=click.IntRange(min=1),
    envvar="DENSECHECK_WORKERS",
    default=1,
    show_default=True,
    help="Thread-pool size for per-frame work",
)
pred_option = click.option(
    "--pred",
    "pred_path",
    required=True,
    type=click.Path(exists=True),
    help="Prediction manifest (or its directory)",
)
gt_option = click.option(
    "--gt",
    "gt_path",
    required=True,
    type=click.Path(exists=True),
    help="Ground-truth manifest (or its directory)",
)
report_dir_option = click.option(
    "--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Report directory"
)


def _fail(ctx: click.Context, command: Command, message: str) -> NoReturn:
    ctx.obj["run_log"].log(command, success=False, error=message)
    click.echo(f"❌ {message}", err=True)
    sys.exit(1)


def _parse_thresholds(
    ctx: click.Context, param: click.Parameter, value: Optional[str]
) -> Tuple[float, ...]:
    if value is None:
        return DEFAULT_THRESHOLDS
    try:
        thresholds = tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got '{value}'")
    if not thresholds or any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise click.BadParameter(f"thresholds must be strictly increasing, got '{value}'")
    return thresholds


def _load_pair(pred_path: str, gt_path: str) -> Tuple[SequenceManifest, SequenceManifest]:
    """Load prediction and ground-truth manifests and check they describe the same frames."""
    preds = SequenceManifest.load(pred_path)
    gts = SequenceManifest.load(gt_path)
    if preds.frame_count != gts.frame_count:
        raise ManifestError(
            f"Prediction has {preds.frame_count} frames, ground truth has {gts.frame_count}"
        )
    if (preds.width, preds.height) != (gts.width, gts.height):
        raise ManifestError(
            f"Prediction is {preds.width}x{preds.height}, "
            f"ground truth is {gts.width}x{gts.height}"
        )
    return preds, gts


def _load_frames(manifest: SequenceManifest, workers: int) -> List[FrameSample]:
    return parallel_map(manifest.load_frame, range(manifest.frame_count), workers)


# Global options
@click.group()
@click.version_option(version=__version__)
@click.option("-v", "--verbose", count=True, help="Repeat for more log output (-v info, -vv debug)")
@click.option(
    "--run-log",
    type=click.Path(dir_okay=False),
    help="JSON-lines journal of command runs [env: DENSECHECK_RUN_LOG]",
)
@click.pass_context
def cli(ctx: click.Context, verbose: int, run_log: Optional[str]) -> None:
    """
    densecheck - Losses, metrics and ground truth for dense prediction.

    Score depth, surface-normal and mask predictions frame by frame and over
    time, and render exact ground truth to check them against.
    """
    load_dotenv(find_dotenv(usecwd=True))
    logging.basicConfig(
        level=_LOG_LEVELS[min(verbose, len(_LOG_LEVELS) - 1)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    run_log = run_log or os.environ.get("DENSECHECK_RUN_LOG")

    ctx.ensure_object(dict)
    ctx.obj["run_log"] = RunLog(Path(run_log)) if run_log else RunLog(in_memory=True)


@cli.command("gen-synth")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed")
@click.option(
    "--frames",
    type=click.IntRange(1, MAX_FRAMES),
    default=16,
    show_default=True,
    help="Number of frames",
)
@click.option(
    "--size", type=click.IntRange(min=3), default=128, show_default=True, help="Image side"
)
@click.option(
    "--framing",
    type=click.Choice(sorted(FRAMINGS)),
    default="full",
    show_default=True,
    help="Camera framing of the figure",
)
@click.option(
    "--motion-scale",
    type=click.FloatRange(min=0.0),
    default=1.0,
    show_default=True,
    help="Scale of figure and camera motion (0 = static)",
)
@click.option(
    "--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory"
)
@workers_option
@click.pass_context
def gen_synth(
    ctx: click.Context,
    seed: int,
    frames: int,
    size: int,
    framing: str,
    motion_scale: float,
    out_dir: str,
    workers: int,
) -> None:
    """Render a walker sequence with depth, normals, masks and flows."""
    try:
        config = WalkerConfig(width=size, height=size, framing=framing, motion_scale=motion_scale)
        scene = make_walker(seed, frames, config)
        manifest = generate_sequence(scene, out_dir, workers=workers)
    except (DenseCheckError, OSError) as e:
        _fail(ctx, Command.GEN_SYNTH, f"Failed to generate sequence: {e}")

    manifest_path = manifest.root / "manifest.json"
    ctx.obj["run_log"].log(
        Command.GEN_SYNTH, out=str(manifest_path), frames=frames, seed=seed, size=size
    )
    click.echo(f"✅ Generated {frames} frames ({len(manifest.flows_forward)} flow pairs)")
    click.echo(str(manifest_path))


@cli.command("eval-images")
@pred_option
@gt_option
@report_dir_option
@click.option("--no-align", is_flag=True, help="Measure depth without scale/shift alignment")
@click.option("--normalize-gt", is_flag=True, help="Min-max normalize ground-truth depth first")
@click.option(
    "--thresholds",
    callback=_parse_thresholds,
    help="Comma-separated angular thresholds in degrees [default: 11.25,22.5,30]",
)
@click.option("--pooled", is_flag=True, help="Weight the aggregate by pixel count")
@workers_option
@click.pass_context
def eval_images(
    ctx: click.Context,
    pred_path: str,
    gt_path: str,
    out_dir: str,
    no_align: bool,
    normalize_gt: bool,
    thresholds: Tuple[float, ...],
    pooled: bool,
    workers: int,
) -> None:
    """Per-image depth and normal metrics (images.csv + images.json)."""
    try:
        preds, gts = _load_pair(pred_path, gt_path)

        def evaluate(k: int) -> Tuple[Dict[str, Any], Dict[str, Any]]:
            pred = preds.load_frame(k)
            gt = gts.load_frame(k)
            gt_depth = normalize_depth(gt.depth)[0] if normalize_gt else gt.depth
            depth = depth_metrics(pred.depth, gt_depth, gt.mask, aligned=not no_align)
            normal = normal_metrics(pred.normal, gt.normal, gt.mask, thresholds)
            return depth.to_dict(), normal.to_dict()

        results = parallel_map(evaluate, range(gts.frame_count), workers)

        records = []
        for k, (depth, normal) in enumerate(results):
            row = {"frame": k, **depth}
            row.update({f: v for f, v in normal.items() if f != "pixel_count"})
            row["normal_pixel_count"] = normal["pixel_count"]
            records.append(row)

        out = Path(out_dir)
        acc_columns = tuple(acc_key(t) for t in thresholds)
        columns = ("frame",) + DEPTH_COLUMNS + NORMAL_COLUMNS + acc_columns
        write_csv(out / "images.csv", records, columns)
        summary = {
            "command": Command.EVAL_IMAGES.value,
            "pred": pred_path,
            "gt": gt_path,
            "settings": {
                "aligned": not no_align,
                "normalize_gt": normalize_gt,
                "thresholds": list(thresholds),
                "pooled": pooled,
            },
            "frame_count": gts.frame_count,
            "aggregate": {
                "depth": aggregate([d for d, _ in results], pooled),
                "normal": aggregate([n for _, n in results], pooled),
            },
        }
        write_summary(out / "images.json", summary)
    except (DenseCheckError, OSError) as e:
        _fail(ctx, Command.EVAL_IMAGES, f"Image evaluation failed: {e}")

    ctx.obj["run_log"].log(Command.EVAL_IMAGES, out=str(out), frames=gts.frame_count)
    depth_agg = summary["aggregate"]["depth"]
    normal_agg = summary["aggregate"]["normal"]
    click.echo(f"✅ Evaluated {gts.frame_count} images")
    click.echo(f"   RMSE {depth_agg['rmse']:.6g}  AbsRel {depth_agg['absrel']}")
    click.echo(f"   Mean {normal_agg['mean_deg']:.4g}°  Median {normal_agg['median_deg']:.4g}°")


def _align_sequence(
    preds: Sequence[FrameSample], gts: Sequence[FrameSample], mode: str
) -> List[AlignmentParams]:
    if mode == "sequence":
        params = fit_scale_shift_sequence(
            [p.depth for p in preds], [g.depth for g in gts], [g.mask for g in gts]
        )
        return [params] * len(preds)
    if mode == "frame":
        return [fit_scale_shift(p.depth, g.depth, g.mask) for p, g in zip(preds, gts)]
    return [AlignmentParams.identity()] * len(preds)


@cli.command("eval-video")
@pred_option
@gt_option
@report_dir_option
@click.option(
    "--flows",
    "flows_path",
    type=click.Path(exists=True),
    help="Manifest supplying the flows (default: the ground truth's)",
)
@click.option(
    "--align-mode",
    type=click.Choice(["sequence", "frame", "none"]),
    default="sequence",
    show_default=True,
    help="Depth scale/shift alignment before temporal metrics",
)
@click.option(
    "--all-pixels", is_flag=True, help="Evaluate every warp-valid pixel, not only the foreground"
)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Loss config supplying tau_c and the edge-mask thresholds",
)
@click.option(
    "--no-temporal-mask",
    is_flag=True,
    help="Skip the cycle and edge masks the temporal losses use",
)
@click.option("--pooled", is_flag=True, help="Weight the aggregate by pixel count")
@workers_option
@click.pass_context
def eval_video(
    ctx: click.Context,
    pred_path: str,
    gt_path: str,
    out_dir: str,
    flows_path: Optional[str],
    align_mode: str,
    all_pixels: bool,
    config_path: Optional[str],
    no_temporal_mask: bool,
    pooled: bool,
    workers: int,
) -> None:
    """Per-pair temporal-consistency metrics (pairs.csv + video.json)."""
    try:
        preds_manifest, gts_manifest = _load_pair(pred_path, gt_path)
        n = gts_manifest.frame_count
        if n < 2:
            raise click.UsageError("Temporal metrics need at least 2 frames")
        cfg = LossConfig.from_file(config_path) if config_path else LossConfig()
        flow_source = SequenceManifest.load(flows_path) if flows_path else gts_manifest
        if not flow_source.has_flows or flow_source.frame_count != n:
            raise ManifestError(f"Need {n - 1} flow pairs per direction in {flow_source.root}")

        preds = _load_frames(preds_manifest, workers)
        gts = _load_frames(gts_manifest, workers)
        params = _align_sequence(preds, gts, align_mode)
        aligned = [
            FrameSample(apply_alignment(p.depth, a), p.normal, p.mask)
            for p, a in zip(preds, params)
        ]

        def evaluate(k: int) -> Dict[str, Any]:
            fwd, bwd = flow_source.load_flows(k)
            metrics = pair_metrics(
                aligned[k],
                aligned[k + 1],
                gts[k],
                gts[k + 1],
                fwd,
                foreground=not all_pixels,
                bwd_flow=None if no_temporal_mask else bwd,
                cfg=cfg,
            )
            return {"pair": k, **metrics.to_dict()}

        records = parallel_map(evaluate, range(n - 1), workers)

        out = Path(out_dir)
        write_csv(out / "pairs.csv", records, ("pair",) + TEMPORAL_COLUMNS)
        summary = {
            "command": Command.EVAL_VIDEO.value,
            "pred": pred_path,
            "gt": gt_path,
            "flows": flows_path or gt_path,
            "settings": {
                "align_mode": align_mode,
                "all_pixels": all_pixels,
                "temporal_mask": not no_temporal_mask,
                "pooled": pooled,
            },
            "config": cfg.to_dict(),
            "alignment": (
                [a.to_dict() for a in params] if align_mode == "frame" else params[0].to_dict()
            ),
            "frame_count": n,
            "aggregate": aggregate(records, pooled),
        }
        write_summary(out / "video.json", summary)
    except (DenseCheckError, OSError) as e:
        _fail(ctx, Command.EVAL_VIDEO, f"Video evaluation failed: {e}")

    ctx.obj["run_log"].log(Command.EVAL_VIDEO, out=str(out), pairs=n - 1)
    agg = summary["aggregate"]
    click.echo(f"✅ Evaluated {n - 1} frame pairs")
    click.echo(f"   OPW {agg['opw']:.6g}  TC-RMSE {agg['tc_rmse']:.6g}")
    click.echo(f"   TC-Mean {agg['tc_mean_deg']:.4g}°  TC-Abs {agg['tc_abs_deg']:.4g}°")


@cli.command()
@pred_option
@gt_option
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    envvar="DENSECHECK_CONFIG",
    help="Loss config document (JSON, YAML or TOML)",
)
@click.option("--preset", type=click.Choice(list(PRESETS)), help="Named loss weighting")
@click.option(
    "--stage",
    type=click.Choice(["1", "2", "both"]),
    default="both",
    show_default=True,
    help="Objective(s) to evaluate",
)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="Also write the JSON here")
@workers_option
@click.pass_context
def loss(
    ctx: click.Context,
    pred_path: str,
    gt_path: str,
    config_path: Optional[str],
    preset: Optional[str],
    stage: str,
    out_path: Optional[str],
    workers: int,
) -> None:
    """Evaluate the Stage-1 and Stage-2 objectives and print their breakdown as JSON."""
    if config_path and preset:
        raise click.UsageError("--config and --preset are mutually exclusive")

    try:
        if config_path:
            cfg = LossConfig.from_file(config_path)
        else:
            cfg = LossConfig.preset(preset or "default")
        preds_manifest, gts_manifest = _load_pair(pred_path, gt_path)
        preds = _load_frames(preds_manifest, workers)
        gts = _load_frames(gts_manifest, workers)
        n = len(gts)

        result: Dict[str, Any] = {"config": cfg.to_dict(), "stage1": None, "stage2": None}
        if stage in ("1", "both"):
            breakdowns = parallel_map(
                lambda k: stage1_loss(preds[k], gts[k], cfg), range(n), workers
            )
            result["stage1"] = [{"frame": k, **b.to_dict()} for k, b in enumerate(breakdowns)]

        sequence_ready = n >= 2 and gts_manifest.has_flows
        if stage == "2" and not sequence_ready:
            raise ManifestError("Stage 2 needs at least 2 frames and ground-truth flows")
        if stage in ("2", "both") and sequence_ready:
            flows = [gts_manifest.load_flows(k) for k in range(n - 1)]
            result["stage2"] = stage2_loss(preds, gts, flows, cfg, workers).to_dict()
        elif stage == "both":
            logger.info("Skipping Stage 2: %d frame(s), flows=%s", n, gts_manifest.has_flows)

        payload = dump_json(result)
        if out_path:
            atomic_write(out_path, payload)
    except (DenseCheckError, OSError) as e:
        _fail(ctx, Command.LOSS, f"Loss evaluation failed: {e}")

    ctx.obj["run_log"].log(Command.LOSS, stage=stage, frames=n, out=out_path)
    click.echo(payload.decode("utf-8"), nl=False)


@cli.command()
@click.option(
    "--trials", type=click.IntRange(min=1), default=10, show_default=True, help="Seeded instances"
)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the first instance")
@click.option(
    "--channels", type=click.IntRange(min=1), default=3, show_default=True, help="Channels C"
)
@click.option("--hidden", type=click.IntRange(min=1), help="Hidden width [default: ceil(C/4)]")
@click.option(
    "--size", type=click.IntRange(min=1), default=2, show_default=True, help="Spatial side H = W"
)
@click.option(
    "--step",
    type=click.FloatRange(min=0.0, min_open=True),
    default=1e-4,
    show_default=True,
    help="Central-difference step",
)
@click.option(
    "--tolerance",
    type=click.FloatRange(min=0.0),
    default=1e-3,
    show_default=True,
    help="Largest accepted relative error",
)
@click.option("--corrupt", is_flag=True, help="Scale the analytic gradient to exercise failure")
@click.option("--zero-upstream", is_flag=True, help="Use a zero upstream gradient")
@click.pass_context
def gradcheck(
    ctx: click.Context,
    trials: int,
    seed: int,
    channels: int,
    hidden: Optional[int],
    size: int,
    step: float,
    tolerance: float,
    corrupt: bool,
    zero_upstream: bool,
) -> None:
    """Check channel-attention gradients against central finite differences."""
    results = [
        run_cwa_gradcheck(
            seed + i, channels, hidden, size, step, corrupt=corrupt, zero_upstream=zero_upstream
        )
        for i in range(trials)
    ]
    worst = max(results, key=lambda r: r.max_error)
    max_error = worst.max_error
    for r in results:
        logger.info("seed %d: %s", r.seed, r.errors)

    if not max_error < tolerance:
        _fail(
            ctx,
            Command.GRADCHECK,
            f"Gradient check failed: max relative error {max_error:.3e} "
            f"(seed {worst.seed}) >= {tolerance:g}",
        )

    ctx.obj["run_log"].log(Command.GRADCHECK, trials=trials, max_error=max_error)
    click.echo(f"✅ Gradient check passed over {trials} instances")
    click.echo(f"   max relative error: {max_error!r}")


@cli.command()
@click.argument("summaries", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--label", "labels", multiple=True, help="Row label per summary (default: file stem)")
@click.option(
    "--out", "out_path", type=click.Path(dir_okay=False), help="Write the merged table as JSON"
)
@click.pass_context
def report(
    ctx: click.Context, summaries: Tuple[str, ...], labels: Tuple[str, ...], out_path: Optional[str]
) -> None:
    """Merge JSON summaries into one table."""
    try:
        table = merge_summaries(summaries, labels or None)
        if out_path:
            write_summary(out_path, table)
    except (DenseCheckError, OSError) as e:
        _fail(ctx, Command.REPORT, f"Failed to merge summaries: {e}")

    ctx.obj["run_log"].log(Command.REPORT, rows=len(table["rows"]), out=out_path)
    click.echo(format_table(table))


if __name__ == "__main__":
    cli()
