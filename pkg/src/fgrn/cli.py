"""Command-line entry point: ``fgrn <command> [flags]``.

Every failure prints a single ``error: <Kind>: <message>`` line on stderr
and exits non-zero.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import pipeline
from .checkpoint import checkpoint_load, checkpoint_save
from .errors import BadConfig, FGRNError, ImageTooSmall, NotDivisible
from .imageops import from_uint8
from .metrics import MetricReport, psnr_y, ssim_y
from .pngio import list_pngs, load_png, save_png
from .training import TrainConfig, train

logger = logging.getLogger("fgrn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path: str | None) -> TrainConfig:
    if path is None:
        return TrainConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            return TrainConfig.from_text(fh.read())
    except OSError as exc:
        raise BadConfig(f"cannot read config {path}: {exc}") from exc


def _load_hr(path: str, scale: int) -> np.ndarray:
    img = load_png(path)
    if img.shape[1] % scale or img.shape[2] % scale:
        raise NotDivisible(f"{path}: {img.shape[1]}x{img.shape[2]} not divisible by scale {scale}")
    return img


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    changes = {}
    if args.mode is not None:
        changes["guidance_mode"] = args.mode
    if args.seed is not None:
        changes["seed"] = args.seed
    cfg = cfg.replace(**changes)
    if not os.path.isdir(args.data):
        raise FileNotFoundError(f"data directory not found: {args.data}")
    names = list_pngs(args.data)
    if not names:
        raise ImageTooSmall(f"no PNG images in {args.data}")
    images = [from_uint8(load_png(os.path.join(args.data, n)), np.float64) for n in names]
    log_path = args.log or f"{args.out}.log.csv"
    with open(log_path, "a", encoding="utf-8") as log:
        def on_step(rec):
            log.write(f"{rec['iter']},{rec['lr']:.6e},{rec['l_rec']:.8f},{rec['l_guide']:.8f}\n")

        trainer = train(cfg, images, on_step)
    checkpoint_save(trainer.model, trainer.state, cfg, args.out)
    print(f"wrote {args.out} after {trainer.iteration} iterations; loss log {log_path}")
    return 0


def cmd_downscale(args) -> int:
    model = checkpoint_load(args.ckpt)
    hr = _load_hr(args.inp, model.scale)
    save_png(args.out, pipeline.downscale(model, from_uint8(hr, model.dtype)))
    return 0


def cmd_upscale(args) -> int:
    model = checkpoint_load(args.ckpt)
    save_png(args.out, pipeline.upscale(model, load_png(args.inp)))
    return 0


def cmd_roundtrip(args) -> int:
    model = checkpoint_load(args.ckpt)
    hr = _load_hr(args.inp, model.scale)
    lr = pipeline.downscale(model, from_uint8(hr, model.dtype))
    if args.lr_out:
        save_png(args.lr_out, lr)
    out = pipeline.upscale(model, lr)
    save_png(args.out, out)
    print(f"psnr_db={psnr_y(hr, out, model.scale):.4f}")
    return 0


def evaluate_dir(hr_dir: str, model=None, scale: int | None = None, crop: int | None = None) -> MetricReport:
    """Downscale+upscale every PNG in ``hr_dir`` (bicubic both ways when no model)."""
    scale = model.scale if model is not None else scale
    crop = scale if crop is None else crop
    report = MetricReport()
    for name in list_pngs(hr_dir):
        hr = _load_hr(os.path.join(hr_dir, name), scale)
        if model is None:
            _, out = pipeline.bicubic_roundtrip(from_uint8(hr, np.float64), scale)
        else:
            out = pipeline.roundtrip(model, from_uint8(hr, model.dtype))
        report.add(name, psnr_y(hr, out, crop), ssim_y(hr, out, crop))
    return report


def cmd_eval(args) -> int:
    if args.bicubic:
        report = evaluate_dir(args.hr_dir, None, args.scale, args.crop)
    else:
        if not args.ckpt:
            raise UsageError("eval needs --ckpt or --bicubic")
        report = evaluate_dir(args.hr_dir, checkpoint_load(args.ckpt), crop=args.crop)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    print(f"mean psnr_db={report.mean_psnr:.4f} ssim={report.mean_ssim:.4f} over {len(report.files)} images")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    model = checkpoint_load(args.ckpt) if args.ckpt else None
    results = run_all(args.trials, model)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_metrics(args) -> int:
    a, b = load_png(args.ref), load_png(args.test)
    print(f"psnr_db={psnr_y(a, b, args.crop):.4f}")
    print(f"ssim={ssim_y(a, b, args.crop):.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fgrn", description="Flow-guided image rescaling")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model on a directory of PNGs")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["none", "bic", "flow"])
    p.add_argument("--seed", type=int)
    p.add_argument("--log", help="loss log CSV (default: <out>.log.csv)")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("downscale", cmd_downscale, "HR PNG -> LR PNG"),
        ("upscale", cmd_upscale, "LR PNG -> HR PNG"),
        ("roundtrip", cmd_roundtrip, "HR PNG -> LR -> HR PNG"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--in", dest="inp", required=True)
        p.add_argument("--out", required=True)
        if name == "roundtrip":
            p.add_argument("--lr-out")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="PSNR/SSIM report over a directory of HR PNGs")
    p.add_argument("--ckpt")
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--bicubic", action="store_true", help="bicubic down + bicubic up baseline")
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--crop", type=int, help="border crop (default: scale)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--ckpt")
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("metrics", help="PSNR/SSIM between two PNGs")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--crop", type=int, default=0)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"error: UsageError: {exc}", file=sys.stderr)
        return 2
    except FGRNError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IOError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
