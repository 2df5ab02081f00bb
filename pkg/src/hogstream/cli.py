"""Command-line front end: detect, compare, train, bench, dump.

Outputs are deterministic for identical inputs, configuration, and seed; the
detection files in particular are byte-identical across pixels-per-clock
settings. Errors print one diagnostic line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .detector import (
    detect_frame,
    detections_from_scores,
    detections_to_text,
    nms,
    run_pipeline,
)
from .fixedpoint import DEFAULT_PROFILE, SaturationStats
from .histogram import dump_cells
from .normalize import dump_blocks
from .oracle import compare_paths
from .pnm import PnmError, load_image  # noqa: F401  (load_image is this module's API)
from .stream import GeometryError, StreamProtocolError, VALID_PPC
from .svm import (
    FLOAT_MAGIC,
    ModelFormatError,
    SvmModel,
    load_float_model,
    load_model,
    save_float_model,
    save_model,
    sniff_model_format,
)
from .trainer import (
    FloatModel,
    TrainingError,
    load_manifest,
    make_synthetic_set,
    quantize_model,
    samples_from_frames,
    train,
)

USER_ERRORS = (
    GeometryError,
    StreamProtocolError,
    PnmError,
    ModelFormatError,
    TrainingError,
    OSError,
)


@dataclass
class RunConfig:
    """Resolved settings of one CLI invocation."""

    command: str
    image: str | None = None
    model: str | None = None
    ppc: int = 4
    threshold: float = 0.0
    iou: float = 0.5
    out: str | None = None
    dump: str | None = None
    reps: int = 1
    seed: int = 0
    manifest: str | None = None
    synthetic: int = 0
    lam: float = 1e-4
    epochs: int = 10


def _load_any_model(path: str) -> SvmModel:
    """Accept either model format; float models are quantized on load."""
    if sniff_model_format(path) == FLOAT_MAGIC:
        weights, bias = load_float_model(path)
        return quantize_model(FloatModel(weights=weights, bias=bias))
    return load_model(path)


def _write_out(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_detect(cfg: RunConfig) -> int:
    frame = load_image(cfg.image)
    model = _load_any_model(cfg.model)
    dets = detect_frame(frame, model, ppc=cfg.ppc, threshold=cfg.threshold)
    kept = nms(dets, iou_threshold=cfg.iou)
    _write_out(detections_to_text(kept), cfg.out)
    return 0


def _cmd_compare(cfg: RunConfig) -> int:
    frame = load_image(cfg.image)
    if sniff_model_format(cfg.model) != FLOAT_MAGIC:
        raise ModelFormatError(
            "compare needs the float model (HOGSVMF1) so both paths share one source"
        )
    weights, bias = load_float_model(cfg.model)
    fm = FloatModel(weights=weights, bias=bias)
    qm = quantize_model(fm)
    # the quantized model carries the rescale; give the float path the same
    # scaled source so score gaps measure the datapath, not the rescale
    report = compare_paths(
        frame,
        qm,
        weights * qm.scale_applied,
        bias * qm.scale_applied,
        threshold=cfg.threshold,
    )
    _write_out(report.to_text(), cfg.out)
    return 0


def _cmd_train(cfg: RunConfig) -> int:
    if cfg.manifest:
        samples = load_manifest(cfg.manifest)
    elif cfg.synthetic > 0:
        frames, labels = make_synthetic_set(cfg.synthetic, seed=cfg.seed)
        samples = samples_from_frames(frames, labels)
    else:
        raise TrainingError("train needs --manifest or --synthetic N")
    fm = train(samples, lam=cfg.lam, epochs=cfg.epochs, seed=cfg.seed)
    qm = quantize_model(fm)
    if not cfg.out:
        raise TrainingError("train needs --out to place the model files")
    save_model(qm, cfg.out)
    save_float_model(fm.weights, fm.bias, cfg.out + ".float")
    correct = sum(1 for s in samples if (fm.score(s.features) > 0) == (s.label > 0))
    print(f"trained on {len(samples)} samples, training accuracy "
          f"{correct / len(samples):.4f}")
    print(f"quantized scale {qm.scale_applied!r}, "
          f"max weight quantization error {qm.max_weight_quant_error!r}")
    print(f"wrote {cfg.out} and {cfg.out}.float")
    return 0


def _cmd_bench(cfg: RunConfig) -> int:
    frame = load_image(cfg.image)
    model = _load_any_model(cfg.model)
    reps = max(cfg.reps, 1)
    stage_totals: dict[str, float] = {}
    seconds = []
    detections = 0
    windows = 0
    for _ in range(reps):
        stats = SaturationStats()
        t0 = time.perf_counter()
        run = run_pipeline(frame, model, DEFAULT_PROFILE, stats)
        dets = nms(detections_from_scores(run.score_map, cfg.threshold), cfg.iou)
        t1 = time.perf_counter()
        seconds.append(t1 - t0)
        detections = len(dets)
        windows = run.score_map.scores_raw.size
        for k, v in run.stage_seconds.items():
            stage_totals[k] = stage_totals.get(k, 0.0) + v
    mean_s = sum(seconds) / reps
    mpix = frame.width * frame.height / 1e6
    lines = [
        f"image {cfg.image}",
        f"width {frame.width}",
        f"height {frame.height}",
        f"reps {reps}",
        f"windows_per_frame {windows}",
        f"detections {detections}",
        f"seconds_per_frame {mean_s:.6f}",
        f"frames_per_second {1.0 / mean_s:.6f}",
        f"megapixels_per_second {mpix / mean_s:.6f}",
    ]
    for k, v in stage_totals.items():
        lines.append(f"stage_seconds {k} {v / reps:.6f}")
    _write_out("\n".join(lines) + "\n", cfg.out)
    return 0


def _cmd_dump(cfg: RunConfig) -> int:
    frame = load_image(cfg.image)
    if not cfg.out:
        raise GeometryError("dump needs --out for the binary blob")
    from .gradient import gradient_field, magnitude_field, orient_field
    from .histogram import cell_histogram_grid
    from .normalize import block_feature_grid

    gx, gy = gradient_field(frame.pixels)
    mag = magnitude_field(gx, gy)
    lo, hi = orient_field(gx, gy)
    hist = cell_histogram_grid(mag, lo, hi)
    if cfg.dump == "cells":
        blob = dump_cells(hist)
    else:
        blob = dump_blocks(block_feature_grid(hist))
    Path(cfg.out).write_bytes(blob)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hogstream",
        description="Fixed-point streaming HOG+SVM pedestrian detector model",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, image=True, model=False):
        if image:
            sp.add_argument("image", help="input PGM (P5) or PPM (P6), maxval 255")
        if model:
            sp.add_argument("--model", required=True, help="model file (HOGSVM1 or HOGSVMF1)")
        sp.add_argument("--out", help="output path (default: stdout)")

    sp = sub.add_parser("detect", help="run the fixed-point detector on one frame")
    add_common(sp, model=True)
    sp.add_argument("--ppc", type=int, default=4, choices=VALID_PPC,
                    help="pixels per clock (detections are invariant)")
    sp.add_argument("--threshold", type=float, default=0.0)
    sp.add_argument("--iou", type=float, default=0.5, help="NMS IoU threshold")

    sp = sub.add_parser("compare", help="error report of fixed path vs float oracle")
    add_common(sp, model=True)
    sp.add_argument("--threshold", type=float, default=0.0)

    sp = sub.add_parser("train", help="train a float model and quantize it")
    sp.add_argument("--manifest", help="text file of '<+1|-1> <image path>' lines")
    sp.add_argument("--synthetic", type=int, default=0, metavar="N",
                    help="use N synthetic samples per class instead of a manifest")
    sp.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="output model path (HOGSVM1; float copy at <out>.float)")

    sp = sub.add_parser("bench", help="timing run on one frame")
    add_common(sp, model=True)
    sp.add_argument("--ppc", type=int, default=4, choices=VALID_PPC)
    sp.add_argument("--threshold", type=float, default=0.0)
    sp.add_argument("--iou", type=float, default=0.5)
    sp.add_argument("--reps", type=int, default=1)

    sp = sub.add_parser("dump", help="binary dump of an intermediate stage")
    add_common(sp)
    sp.add_argument("--dump", required=True, choices=("cells", "blocks"),
                    help="which stage to serialize")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        command=args.command,
        image=getattr(args, "image", None),
        model=getattr(args, "model", None),
        ppc=getattr(args, "ppc", 4),
        threshold=getattr(args, "threshold", 0.0),
        iou=getattr(args, "iou", 0.5),
        out=getattr(args, "out", None),
        dump=getattr(args, "dump", None),
        reps=getattr(args, "reps", 1),
        seed=getattr(args, "seed", 0),
        manifest=getattr(args, "manifest", None),
        synthetic=getattr(args, "synthetic", 0),
        lam=getattr(args, "lam", 1e-4),
        epochs=getattr(args, "epochs", 10),
    )
    handlers = {
        "detect": _cmd_detect,
        "compare": _cmd_compare,
        "train": _cmd_train,
        "bench": _cmd_bench,
        "dump": _cmd_dump,
    }
    try:
        return handlers[cfg.command](cfg)
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
