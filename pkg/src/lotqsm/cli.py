"""Command-line interface.

Every subcommand takes ``--config`` (a pipeline JSON file) and any number of
``--set key.path=value`` overrides, where values are parsed as JSON when
possible. Exit codes: 0 success, 1 invalid input, configuration or file content,
2 runtime failure, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from lotqsm.errors import (ConvergenceError, CorruptionError, DomainError, LoadError, StructuralError,
                           UnsupportedFeatureError)

log = logging.getLogger("lotqsm")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_CONVERGENCE = 0, 1, 2, 3


def _parse_sets(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise StructuralError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _config(args):
    from lotqsm.config import load_config

    return load_config(args.config, _parse_sets(args.set))


def _read(path):
    from lotqsm.nifti import nifti_read

    return nifti_read(path)[0]


def _read_mask(path):
    from lotqsm.volume import Mask

    return Mask(_read(path).data != 0)


def _write(vol, path):
    from lotqsm.nifti import nifti_write

    nifti_write(vol, path, "float32")
    print(path)


def cmd_simulate(args, cfg):
    from lotqsm.datagen import build_dataset

    sources = [_read(p) for p in args.healthy] if args.healthy else None
    manifest = build_dataset(args.out, cfg.dataset_config(args.n), sources)
    print(json.dumps(manifest.counts))


def cmd_lot(args, cfg):
    from lotqsm.phase import lot

    _write(lot(_read(args.phase), args.b0 or cfg.dataset.b0, args.te), args.out)


def cmd_unwrap(args, cfg):
    from lotqsm.phase import laplacian_unwrap

    _write(laplacian_unwrap(_read(args.phase)), args.out)


def cmd_bgremove(args, cfg):
    from lotqsm.background import resharp
    from lotqsm.nifti import nifti_write
    from lotqsm.volume import Unit

    field = _read(args.field)
    local, eroded = resharp(field.like(field.data, Unit.PPM), _read_mask(args.mask), cfg.resharp)
    _write(local, args.out)
    if args.eroded_out:
        nifti_write(eroded.data, args.eroded_out, "uint8", field.spacing)


def cmd_invert_tkd(args, cfg):
    from lotqsm.dipole import tkd_invert

    threshold = args.threshold if args.threshold is not None else cfg.tkd_threshold
    _write(tkd_invert(_read(args.field), threshold=threshold), args.out)


def cmd_echofit(args, cfg):
    from lotqsm.dipole import echo_fit

    values = [_read(p) for p in args.values]
    mags = [_read(p) for p in args.mag] if args.mag else [v.like(np.ones(v.dims)) for v in values]
    _write(echo_fit(values, mags, args.te), args.out)


def cmd_train(args, cfg):
    from lotqsm.datagen import load_dataset
    from lotqsm.nn.train import train

    _, samples = load_dataset(args.data)
    tcfg = cfg.train
    if args.epochs:
        from dataclasses import replace

        tcfg = replace(tcfg, epochs=args.epochs)
    result = train(samples, args.target, tcfg, cfg.unet)
    result.params.provenance["pipeline_config_hash"] = cfg.hash()
    result.params.save(args.out)
    Path(str(args.out) + ".losses.json").write_text(json.dumps(result.losses))
    print(json.dumps({"checkpoint": str(args.out), "first_loss": result.losses[0], "final_loss": result.losses[-1]}))


def cmd_infer(args, cfg):
    from lotqsm.dipole import AcquisitionParams, EchoSeries
    from lotqsm.nn.checkpoint import NetParams
    from lotqsm.nn.infer import infer

    phases = [_read(p) for p in args.phase]
    mags = [_read(p) for p in args.mag] if args.mag else ()
    echoes = EchoSeries(AcquisitionParams(args.b0 or cfg.dataset.b0, tuple(args.te)), phases, mags)
    start = time.perf_counter()
    out = infer(echoes, NetParams.load(args.checkpoint), args.target)
    log.info("inference took %.3f s", time.perf_counter() - start)
    _write(out, args.out)


def cmd_metrics(args, cfg):
    from lotqsm.metrics import evaluate

    mask = _read_mask(args.mask) if args.mask else None
    rois = {}
    for item in args.roi or ():
        label, _, path = item.partition("=")
        rois[label] = _read_mask(path)
    report = evaluate(_read(args.recon), _read(args.truth), mask, rois, cfg.ssim)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    print(text)


def cmd_ablate(args, cfg):
    from dataclasses import replace

    from lotqsm.ablate import ablate
    from lotqsm.nn.checkpoint import NetParams

    phantom = replace(cfg.phantom, seed=args.seed if args.seed is not None else cfg.phantom.seed)
    ckpts = {}
    if args.checkpoint_iqsm:
        ckpts["iqsm"] = NetParams.load(args.checkpoint_iqsm)
    if args.checkpoint_iqfm:
        ckpts["iqfm"] = NetParams.load(args.checkpoint_iqfm)
    report = ablate(phantom, args.out, cfg.resharp, cfg.tkd_threshold, ckpts or None)
    print(report.to_json())


def cmd_render(args, cfg):
    from lotqsm.render import render_slices

    vol = _read(args.vol)
    out = Path(args.out)
    paths = [out / f"{Path(args.vol).name.split('.')[0]}_axis{args.axis}_{i:03d}.png" for i in args.index]
    for p in render_slices(vol, args.axis, args.index, tuple(args.window), paths):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline configuration (JSON)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (dotted path)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lotqsm", description="Phase-to-susceptibility toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "generate a synthetic training dataset")
    p.add_argument("--n", type=int, help="number of samples (default from config)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--healthy", nargs="+", help="healthy susceptibility volumes to crop patches from")

    p = add("lot", cmd_lot, "LoT map of a raw phase image")
    p.add_argument("--phase", required=True)
    p.add_argument("--te", required=True, type=float)
    p.add_argument("--b0", type=float)
    p.add_argument("--out", required=True)

    p = add("unwrap", cmd_unwrap, "Laplacian phase unwrapping")
    p.add_argument("--phase", required=True)
    p.add_argument("--out", required=True)

    p = add("bgremove", cmd_bgremove, "RESHARP background field removal")
    p.add_argument("--field", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eroded-out")

    p = add("invert-tkd", cmd_invert_tkd, "truncated k-space division")
    p.add_argument("--field", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)

    p = add("echofit", cmd_echofit, "magnitude-weighted echo combination")
    p.add_argument("--values", nargs="+", required=True, help="TE-scaled per-echo volumes")
    p.add_argument("--mag", nargs="+")
    p.add_argument("--te", nargs="+", type=float, required=True)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train an iQFM or iQSM network")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--target", choices=("iqfm", "iqsm"), required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True, type=Path)

    p = add("infer", cmd_infer, "apply a trained network to phase images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--phase", nargs="+", required=True)
    p.add_argument("--mag", nargs="+")
    p.add_argument("--te", nargs="+", type=float, required=True)
    p.add_argument("--b0", type=float)
    p.add_argument("--target", choices=("iqfm", "iqsm"), required=True)
    p.add_argument("--out", required=True)

    p = add("metrics", cmd_metrics, "PSNR / SSIM / NRMSE and ROI statistics")
    p.add_argument("--recon", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--mask")
    p.add_argument("--roi", action="append", metavar="LABEL=MASK")
    p.add_argument("--out")

    p = add("ablate", cmd_ablate, "step-wise error decomposition on a hemorrhage phantom")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint-iqsm")
    p.add_argument("--checkpoint-iqfm")

    p = add("render", cmd_render, "write PNG slices")
    p.add_argument("--vol", required=True)
    p.add_argument("--axis", type=int, default=2)
    p.add_argument("--index", type=int, nargs="+", required=True)
    p.add_argument("--window", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    p.add_argument("--out", required=True)
    return parser


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, (StructuralError, DomainError, UnsupportedFeatureError, CorruptionError, LoadError)):
        return EXIT_INVALID
    return EXIT_RUNTIME


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        args.func(args, cfg)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an exit code
        print(f"lotqsm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
