"""Command-line front end: ``llgs synth|init|train|render|decompose|eval``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Callable, Dict, List, Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError, UsageError
from .exporters import read_anchor_set, write_anchor_set, write_eval_report, write_render_sidecar
from .geometry import Camera, Image, load_cameras
from .images import write_png, write_scalar_map
from .llgim import AnchorSet, PruneConfig, build_anchor_candidates, stochastic_prune_report
from .metrics import evaluate_directories
from .ply import load_ply
from .recording import TrainingRecorder
from .renderers import compose_enhanced, compose_low, render_components
from .scene import SceneModel, load_checkpoint
from .synth import SynthSpec, generate, load_synth_spec, write_bundle
from .training import RunConfig, load_config, load_dataset, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
RENDER_MODES = (
    "enhanced",
    "low",
    "reflectance",
    "illumination",
    "enhanced_illumination",
    "residual",
    "depth",
    "alpha",
)
SCALAR_MODES = {"illumination", "residual", "depth", "alpha"}


class Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so ``main`` controls the exit code."""

    def __init__(self, *args, **kwargs) -> None:
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _package_version() -> str:
    try:
        return version("llgs")
    except PackageNotFoundError:
        return "0.1.0"


def build_parser() -> Parser:
    parser = Parser(prog="llgs", description="Low-light Gaussian splatting pipeline.")
    parser.add_argument("--version", action="version", version=f"llgs {_package_version()} (numpy {np.__version__})")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="Advisory thread cap; the pipeline always runs single-threaded and results do not depend on it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Generate a synthetic low-light scene.")
    synth.add_argument("--spec", type=str, default=None, help="Scene TOML (defaults to the built-in scene).")
    synth.add_argument("--out", type=str, required=True, help="Output directory.")
    synth.add_argument("--seed", type=int, default=0)

    init = sub.add_parser("init", help="Voxelize a point cloud into anchors and prune them.")
    init.add_argument("--config", type=str, default=None, help="Run TOML; its [data] table supplies defaults.")
    init.add_argument("--cloud", type=str, default=None, help="Input PLY point cloud.")
    init.add_argument("--r", "--voxel", dest="voxel", type=float, default=None, help="Voxel resolution r.")
    init.add_argument("--tau0", type=float, default=None)
    init.add_argument("--beta", type=float, default=None)
    init.add_argument("--epsilon", type=float, default=None)
    init.add_argument("--rounds", type=int, default=None)
    init.add_argument("--no-prune", action="store_true", help="Keep every voxel anchor (ablation).")
    init.add_argument("--out", type=str, required=True, help="Destination anchors JSON.")
    init.add_argument("--seed", type=int, default=None)

    trainer = sub.add_parser("train", help="Optimise a scene from a run configuration.")
    trainer.add_argument("--config", type=str, required=True)
    trainer.add_argument("--seed", type=int, default=None)
    trainer.add_argument("--iterations", type=int, default=None, help="Override train.iterations.")
    trainer.add_argument("--progress", action="store_true", help="Show progress bars.")

    for name, helptext in (("render", "Render one map for a camera."), ("decompose", "Write every component map.")):
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--checkpoint", "--scene", dest="checkpoint", type=str, required=True, help="Trained scene file.")
        cmd.add_argument("--camera", type=str, default=None, help="Camera JSON file.")
        cmd.add_argument("--dataset", type=str, default=None, help="Scene directory with cameras.json.")
        cmd.add_argument("--view", type=str, default=None, help="View name inside --dataset.")
        cmd.add_argument("--view-index", type=int, default=None, help="Training embedding to render the transient branch with.")
        cmd.add_argument("--out", type=str, required=True)
        if name == "render":
            cmd.add_argument("--mode", choices=RENDER_MODES, default="enhanced")

    evaluate = sub.add_parser("eval", help="Score predictions against references.")
    evaluate.add_argument("--pred", type=str, required=True)
    evaluate.add_argument("--ref", type=str, required=True)
    evaluate.add_argument("--align", action="store_true", help="Affine-align luminance before scoring.")
    evaluate.add_argument("--out", type=str, default=None, help="Report JSON (printed when omitted).")
    return parser


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        raise UsageError("--threads must be at least 1.")
    if getattr(args, "mode", None) == "residual" and args.view_index is None:
        raise UsageError("--mode residual needs --view-index: the residual is bound to a training embedding.")
    return args


def configure_logging() -> None:
    level_name = os.environ.get("LLGS_LOG", "info").lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(level_name, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if level_name not in LOG_LEVELS:
        logger.warning("Unknown LLGS_LOG value '%s'; using info", level_name)


def _run_synth(args: argparse.Namespace) -> int:
    spec = load_synth_spec(args.spec) if args.spec else SynthSpec()
    bundle = generate(spec, args.seed)
    root = write_bundle(bundle, args.out)
    print(f"Synthetic scene with {len(bundle.views)} views written to {root}")
    return EXIT_OK


def _run_init(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    data = cfg.data
    cloud_path = args.cloud or data.cloud
    if not cloud_path:
        raise UsageError("init needs --cloud or a config with data.cloud.")
    overrides = {
        key: getattr(args, key)
        for key in ("tau0", "beta", "epsilon", "rounds", "seed")
        if getattr(args, key) is not None
    }
    if args.no_prune:
        overrides["enabled"] = False
    prune = replace(data.prune, **overrides)
    voxel = data.voxel if args.voxel is None else args.voxel
    anchors, thresholds = initialize_anchors(cloud_path, voxel, prune)
    path = write_anchor_set(args.out, anchors, thresholds=thresholds)
    print(f"{len(anchors)} anchors written to {path}")
    return EXIT_OK


def initialize_anchors(cloud_path: str | Path, voxel: float, prune: PruneConfig) -> tuple[AnchorSet, List[float]]:
    candidates = build_anchor_candidates(load_ply(cloud_path), voxel)
    report = stochastic_prune_report(candidates, prune)
    return report.anchors, report.thresholds


def _run_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.iterations is not None:
        cfg = replace(cfg, train=replace(cfg.train, iterations=args.iterations))
    if not cfg.data.dataset:
        raise ConfigError("[data] dataset is required for training.")
    dataset = load_dataset(cfg.data.dataset, gamma=cfg.train.gamma)
    out = Path(cfg.output.directory)
    if cfg.data.anchors:
        anchors = read_anchor_set(cfg.data.anchors)
    else:
        cloud = cfg.data.cloud or str(Path(cfg.data.dataset) / "cloud.ply")
        anchors, thresholds = initialize_anchors(cloud, cfg.data.voxel, cfg.data.prune)
        write_anchor_set(out / "anchors.json", anchors, thresholds=thresholds)
    model = SceneModel.from_anchors(anchors, len(dataset.train_views), cfg.model, seed=cfg.train.seed)
    recorder = TrainingRecorder(out / cfg.output.log)
    result = train(
        model,
        dataset,
        cfg.train,
        recorder=recorder,
        preview_dir=out / "previews",
        checkpoint=out / cfg.output.checkpoint,
        run_config=cfg.to_dict(),
        progress=args.progress,
    )
    for stage in result.stages:
        stats = stage.stats
        print(
            f"  {stats.stage:>13}  iters={stats.iterations:5d}  "
            f"loss={stats.initial_loss:.6f}->{stats.final_loss:.6f}  "
            f"rollbacks={stats.rollbacks}  time={stats.runtime_ms:9.1f}ms"
        )
    print(f"Checkpoint saved to {out / cfg.output.checkpoint}")
    return EXIT_OK


def _camera(args: argparse.Namespace) -> tuple[Camera, str]:
    if args.camera:
        entries = load_cameras(args.camera)
        if len(entries) != 1:
            raise UsageError("--camera must hold exactly one camera; use --dataset/--view for scene files.")
        return entries[0]["camera"], entries[0]["name"]
    if args.dataset and args.view:
        for entry in load_cameras(Path(args.dataset) / "cameras.json"):
            if entry["name"] == args.view:
                return entry["camera"], entry["name"]
        raise DataError(f"No view named '{args.view}' in {args.dataset}.")
    raise UsageError("Give --camera, or --dataset together with --view.")


def _mode_image(maps, mode: str) -> np.ndarray:
    if mode == "enhanced":
        return compose_enhanced(maps)
    if mode == "low":
        return compose_low(maps)
    return maps.get(mode)


def _write_mode(path: Path, data: np.ndarray, mode: str) -> Dict[str, float] | None:
    if mode in SCALAR_MODES:
        write_scalar_map(path, Image(data))
        return json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    write_png(path, Image(np.clip(data, 0.0, 1.0)))
    return None


def _run_render(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    cam, _ = _camera(args)
    maps = render_components(model, cam, args.view_index)
    out = Path(args.out)
    scale = _write_mode(out, _mode_image(maps, args.mode), args.mode)
    write_render_sidecar(
        out.with_suffix(".render.json"),
        cam,
        mode=args.mode,
        view_index=args.view_index,
        checkpoint=args.checkpoint,
        outputs={args.mode: out.name},
        scales={args.mode: scale} if scale else None,
    )
    print(f"Rendered {args.mode} to {out}")
    return EXIT_OK


def _run_decompose(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    cam, name = _camera(args)
    maps = render_components(model, cam, args.view_index)
    out = Path(args.out)
    modes = ["reflectance", "illumination", "enhanced_illumination", "enhanced", "low", "depth", "alpha"]
    if args.view_index is not None:
        modes.append("residual")
    outputs, scales = {}, {}
    for mode in modes:
        path = out / f"{name}_{mode}.png"
        scale = _write_mode(path, _mode_image(maps, mode), mode)
        outputs[mode] = path.name
        if scale:
            scales[mode] = scale
    write_render_sidecar(
        out / f"{name}.render.json",
        cam,
        mode="decompose",
        view_index=args.view_index,
        checkpoint=args.checkpoint,
        outputs=outputs,
        scales=scales,
    )
    print(f"{len(outputs)} maps written to {out}")
    return EXIT_OK


def _run_eval(args: argparse.Namespace) -> int:
    report = evaluate_directories(args.pred, args.ref, align=args.align)
    if args.out:
        path = write_eval_report(args.out, report, align=args.align)
        print(f"Report saved to {path}")
    else:
        print(json.dumps({"aligned": args.align, **report}, indent=2, sort_keys=True))
    mean = report["mean"]
    print(f"mean PSNR={mean['psnr']:.3f} dB  SSIM={mean['ssim']:.4f}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "synth": _run_synth,
    "init": _run_init,
    "train": _run_train,
    "render": _run_render,
    "decompose": _run_decompose,
    "eval": _run_eval,
}


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    try:
        args = parse_args(argv)
        if args.threads > 1:
            logger.info("--threads %d requested; the pipeline runs on the single-threaded reference path", args.threads)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        # argparse --version / --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
