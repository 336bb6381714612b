"""Command-line surface: synth, train, eval, probe, export-mask, gradcheck.

Exit codes: 0 success, 1 domain/config error, 2 I/O or format error,
3 verification failure.  EVCLIP_THREADS caps torch worker threads
(0 = single-threaded deterministic mode, the default).
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from . import archive as archive_mod
from . import checkpoint as ckpt_mod
from . import domain_shift as ds_mod
from . import synthetic
from .config import parse_run_config
from .encoders import make_toy_encoders
from .exceptions import ConfigurationError, DomainError, FormatError, VerificationError
from .mask import apply_mask
from .ppm import write_ppm
from .sampling import preprocess, sample_frames
from .training import (
    PromptModel,
    TrainingDiverged,
    evaluate,
    grad_check,
    make_episode,
    train,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2
EXIT_VERIFY = 3


def configure_threads() -> int:
    """Apply EVCLIP_THREADS; 0 (default) pins torch to one thread."""
    raw = os.environ.get("EVCLIP_THREADS", "0")
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"EVCLIP_THREADS must be an integer, got {raw!r}") from exc
    if count < 0:
        raise ConfigurationError(f"EVCLIP_THREADS must be >= 0, got {count}")
    torch.set_num_threads(1 if count == 0 else count)
    return count


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evclip",
        description="Mask/context prompt adaptation and domain-shift analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic video dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=8)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--darkness", type=float, default=1.0)

    p = sub.add_parser("train", help="train the prompt generators")
    p.add_argument("--config", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="metrics file (default from config)")
    p.add_argument("--ablate-mask", action="store_true")
    p.add_argument("--ablate-context", action="store_true")
    p.add_argument("--allow-digest-mismatch", action="store_true")

    p = sub.add_parser("probe", help="domain-shift metrics over embedding archives")
    p.add_argument("archives", nargs="+", help="EVCA archive files")
    p.add_argument("--accuracy-table", default=None, help="`id = top1` lines")
    p.add_argument("--out", required=True, help="report file")

    p = sub.add_parser("export-mask", help="write original/mask/reweighted frames")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--video", required=True, help="directory of frame_*.ppm files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--allow-digest-mismatch", action="store_true")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    return parser


def cmd_synth(args) -> int:
    spec = synthetic.SynthSpec(
        classes=args.classes,
        per_class=args.per_class,
        frames=args.frames,
        height=args.height,
        width=args.width,
        darkness=args.darkness,
    )
    synthetic.write_dataset(args.out, spec, args.seed)
    print(f"wrote {spec.classes * spec.per_class} videos to {args.out}")
    return EXIT_OK


def _load_episode(run):
    if not Path(run.data_dir).exists():
        raise FormatError(f"dataset directory not found: {run.data_dir}")
    videos, class_names, _ = synthetic.load_dataset(run.data_dir)
    return make_episode(videos, class_names, run.train.shots, run.train.seed)


def _write_log(path, lines: list[str]) -> None:
    stamp = datetime.now(timezone.utc).isoformat()
    body = [f"# evclip train log {stamp}"] + lines
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(body) + "\n", encoding="utf-8")


def cmd_train(args) -> int:
    run, notices = parse_run_config(args.config)
    for notice in notices:
        print(f"notice: {notice}", file=sys.stderr)
    episode = _load_episode(run)
    encoders = make_toy_encoders(run.train.encoder_seed, run.train.encoder_dims())
    n_params = sum(p.numel() for p in PromptModel(run.train).parameters())
    print(f"trainable parameters: {n_params}")
    try:
        result = train(run.train, episode, encoders)
    except TrainingDiverged as exc:
        state = ckpt_mod.checkpoint_from_model(
            exc.result.model, run.train, epoch=len(exc.result.log_lines)
        )
        Path(run.checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
        ckpt_mod.save_checkpoint(run.checkpoint_path, state)
        _write_log(run.log_path, exc.result.log_lines)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    state = ckpt_mod.checkpoint_from_model(
        result.model, run.train, epoch=run.train.epochs, optimizer_state=result.optimizer_state
    )
    Path(run.checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
    ckpt_mod.save_checkpoint(run.checkpoint_path, state)
    _write_log(run.log_path, result.log_lines)
    print(f"wrote checkpoint {run.checkpoint_path}")
    return EXIT_OK


def _load_model(run, checkpoint_path, allow_mismatch) -> PromptModel:
    if not Path(checkpoint_path).exists():
        raise FormatError(f"checkpoint not found: {checkpoint_path}")
    state = ckpt_mod.load_checkpoint(checkpoint_path)
    ckpt_mod.check_digest(state, run.train, allow_mismatch)
    model = PromptModel(run.train)
    ckpt_mod.load_into_model(state, model)
    return model


def write_metrics(path, result, ablate_mask: bool, ablate_context: bool) -> None:
    lines = [
        f"top1 = {result.top1!r}",
        f"top5 = {result.top5!r}",
        f"videos = {len(result.video_ids)}",
        f"classes = {len(result.per_class)}",
        f"ablate_mask = {'true' if ablate_mask else 'false'}",
        f"ablate_context = {'true' if ablate_context else 'false'}",
    ]
    for c, acc in enumerate(result.per_class):
        value = "null" if np.isnan(acc) else repr(float(acc))
        lines.append(f"class_{c}_top1 = {value}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_metrics(path) -> dict:
    out: dict = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if value == "null":
            out[key] = None
        elif value in ("true", "false"):
            out[key] = value == "true"
        else:
            out[key] = float(value) if "." in value or "e" in value else int(value)
    return out


def cmd_eval(args) -> int:
    run, notices = parse_run_config(args.config)
    for notice in notices:
        print(f"notice: {notice}", file=sys.stderr)
    ablate_mask = args.ablate_mask or run.train.ablate_mask
    ablate_context = args.ablate_context or run.train.ablate_context
    episode = _load_episode(run)
    encoders = make_toy_encoders(run.train.encoder_seed, run.train.encoder_dims())
    model = _load_model(run, args.checkpoint, args.allow_digest_mismatch)
    result = evaluate(
        model,
        encoders,
        episode.eval_videos,
        episode.class_names,
        run.train,
        ablate_mask=ablate_mask,
        ablate_context=ablate_context,
    )
    out_path = args.out or run.metrics_path
    write_metrics(out_path, result, ablate_mask, ablate_context)
    print(f"top1={result.top1:.4f} top5={result.top5:.4f} -> {out_path}")
    return EXIT_OK


def _parse_accuracy_table(path) -> dict[str, float]:
    table: dict[str, float] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{line_no}: expected `id = accuracy`, got {line!r}")
        key, _, value = line.partition("=")
        try:
            table[key.strip()] = float(value.strip())
        except ValueError as exc:
            raise FormatError(f"{path}:{line_no}: bad accuracy {value.strip()!r}") from exc
    return table


def write_probe_report(
    path, reports: list[ds_mod.DomainShiftReport], correlations: dict[str, float | None] | None
) -> None:
    lines = ["# evclip domain-shift report", f"datasets = {len(reports)}"]
    for report in reports:
        lines.append("")
        lines.extend(report.to_lines())
    if correlations is not None:
        lines.append("")
        for name in ds_mod.METRIC_NAMES:
            value = correlations.get(name)
            lines.append(
                f"correlation_{name} = {'null' if value is None else repr(value)}"
            )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_probe_report(path) -> tuple[list[ds_mod.DomainShiftReport], dict[str, float | None]]:
    text = Path(path).read_text(encoding="utf-8")
    blocks: list[list[str]] = []
    correlations: dict[str, float | None] = {}
    current: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("datasets ="):
            continue
        if line.startswith("correlation_"):
            key, _, value = line.partition("=")
            name = key.strip()[len("correlation_") :]
            value = value.strip()
            correlations[name] = None if value == "null" else float(value)
            continue
        if line.startswith("dataset =") and current:
            blocks.append(current)
            current = []
        current.append(line)
    if current:
        blocks.append(current)
    return [ds_mod.parse_report_lines(block) for block in blocks], correlations


def cmd_probe(args) -> int:
    reports = []
    for archive_path in args.archives:
        if not Path(archive_path).exists():
            raise FormatError(f"archive not found: {archive_path}")
        archive = archive_mod.load_embedding_archive(archive_path)
        dataset = ds_mod.EmbeddedDataset.from_archive(archive, Path(archive_path).stem)
        reports.append(ds_mod.probe(dataset))
    correlations = None
    if args.accuracy_table:
        table = _parse_accuracy_table(args.accuracy_table)
        correlations = ds_mod.rank_correlations(reports, table)
    write_probe_report(args.out, reports, correlations)
    print(f"probed {len(reports)} dataset(s) -> {args.out}")
    return EXIT_OK


def cmd_export_mask(args) -> int:
    run, notices = parse_run_config(args.config)
    for notice in notices:
        print(f"notice: {notice}", file=sys.stderr)
    model = _load_model(run, args.checkpoint, args.allow_digest_mismatch)
    encoders = make_toy_encoders(run.train.encoder_seed, run.train.encoder_dims())

    video_dir = Path(args.video)
    frame_files = sorted(video_dir.glob("frame_*.ppm"))
    if not frame_files:
        raise FormatError(f"no frame_*.ppm files in {video_dir}")
    from .ppm import read_ppm

    raw = np.stack([read_ppm(f) for f in frame_files], axis=0)
    cfg = run.train
    sampled, _ = sample_frames(raw, cfg.frames, cfg.clip_window, "test", None)
    frames = preprocess(
        sampled,
        (cfg.resize_height, cfg.resize_width),
        (cfg.crop_height, cfg.crop_width),
        "test",
        None,
    )
    clip = torch.as_tensor(frames, dtype=torch.float64)
    with torch.no_grad():
        z = encoders.encode_video_latent(clip)
        mask = model.mask_generator(z)
        reweighted = apply_mask(clip, mask)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mask_np = mask.numpy()
    for t in range(frames.shape[0]):
        write_ppm(out / f"frame_{t:04d}_original.ppm", frames[t])
        write_ppm(out / f"frame_{t:04d}_mask.ppm", mask_np)
        write_ppm(out / f"frame_{t:04d}_reweighted.ppm", reweighted[t].numpy())
    print(f"wrote {frames.shape[0]} frame triplets to {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = grad_check(args.seed)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_VERIFY


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "synth": cmd_synth,
        "train": cmd_train,
        "eval": cmd_eval,
        "probe": cmd_probe,
        "export-mask": cmd_export_mask,
        "gradcheck": cmd_gradcheck,
    }
    try:
        configure_threads()
        return handlers[args.command](args)
    except (DomainError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VerificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
