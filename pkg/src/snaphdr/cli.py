"""Command-line entry point: ``snaphdr <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 selftest failure.
Errors are also reported as one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import hdrio, selftest
from .autonet import UNet, UNetConfig, load_checkpoint, save_checkpoint
from .imgcore import PERIOD, parse_pattern
from .metrics import evaluate
from .pipeline import (
    TrainConfig,
    prepare_dataset,
    reconstruct,
    seed_from_env,
    train_ldr_i_net,
    train_ln_net,
    wrap_network,
    write_loss_csv,
    write_manifest,
)
from .scenes import generate_dataset
from .sim import SimConfig, simulate_mecfa


class UsageError(Exception):
    pass


# -- config -----------------------------------------------------------------

def _coerce(default, text: str):
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {text!r}")
    if isinstance(default, tuple):
        return tuple(float(v) for v in text.replace(",", " ").split())
    return type(default)(text)


def load_config(path: str | None) -> tuple[SimConfig, TrainConfig]:
    """INI with ``[sim]`` (pattern, exposure_scales, bit_depth) and ``[train]``."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not Path(path).is_file():
            raise UsageError(f"config file not found: {path}")
        parser.read(path)
    sim_kw, train_kw = {}, {}
    try:
        if parser.has_section("sim"):
            for key, val in parser.items("sim"):
                if key == "pattern":
                    sim_kw["pattern"] = parse_pattern(val)
                elif key == "exposure_scales":
                    sim_kw[key] = _coerce((), val)
                elif key == "bit_depth":
                    sim_kw[key] = int(val)
                else:
                    raise UsageError(f"unknown [sim] key {key!r}")
        defaults = TrainConfig().to_dict()
        if parser.has_section("train"):
            for key, val in parser.items("train"):
                if key not in defaults:
                    raise UsageError(f"unknown [train] key {key!r}")
                train_kw[key] = _coerce(defaults[key], val)
        return SimConfig(**sim_kw), seed_from_env(TrainConfig(**train_kw))
    except ValueError as exc:
        raise UsageError(f"bad config: {exc}") from exc


def sim_to_dict(cfg: SimConfig) -> dict:
    return {"pattern": cfg.pattern.to_spec(), "exposure_scales": list(cfg.exposure_scales),
            "bit_depth": cfg.bit_depth}


def sim_from_dict(d: dict) -> SimConfig:
    return SimConfig(tuple(d["exposure_scales"]), int(d["bit_depth"]), parse_pattern(d["pattern"]))


# -- file helpers -------------------------------------------------------------

def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input not found: {path}")
    return p


def _claim(path, force: bool) -> Path:
    p = Path(path)
    if p.exists() and not force:
        raise UsageError(f"refusing to overwrite {path} (use --force)")
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def read_image(path) -> np.ndarray:
    p = _need_file(path)
    suffix = p.suffix.lower()
    if suffix == ".hdr":
        return hdrio.read_hdr(p)
    if suffix == ".pfm":
        return hdrio.read_pfm(p).astype(np.float64)
    raise UsageError(f"unsupported image type {suffix!r}")


def write_image(img, path) -> None:
    if Path(path).suffix.lower() == ".pfm":
        hdrio.write_pfm(img, path)
    else:
        hdrio.write_hdr(img, path)


def crop_to_mosaic(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    return img[:h - h % PERIOD, :w - w % PERIOD]


def list_dataset(data_dir, list_file=None) -> list[Path]:
    """``.hdr`` files of a directory, or those named in ``list_file``."""
    root = Path(data_dir)
    if not root.is_dir():
        raise UsageError(f"dataset directory not found: {data_dir}")
    if list_file is not None:
        names = [ln.strip() for ln in _need_file(list_file).read_text().splitlines()]
        files = [root / n for n in names if n and not n.startswith("#")]
        for f in files:
            _need_file(f)
    else:
        files = sorted(root.glob("*.hdr"))
    if not files:
        raise UsageError(f"no .hdr files in {data_dir}")
    return files


def load_net(path, role: str | None = None):
    """Network from a checkpoint, wrapped with its prior when trained residually."""
    params, config = load_checkpoint(_need_file(path))
    net = UNet(UNetConfig(**config["unet"]), params)
    if role is None:
        return net, config
    if config.get("role") != role:
        raise UsageError(f"{path} is not an {role.upper()} checkpoint")
    residual = bool(config.get("train", {}).get("residual", False))
    return wrap_network(net, role, residual, sim_from_dict(config["sim"])), config


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    sim, _ = load_config(args.config)
    if args.pattern is not None:
        sim = dataclasses.replace(sim, pattern=parse_pattern(args.pattern))
    hdr = crop_to_mosaic(read_image(args.inp))
    raw, ldr, gt = simulate_mecfa(hdr, sim)
    out = Path(args.out)
    names = ["raw.pfm", "gt.hdr", "gt.pfm"]
    for k in range(len(sim.exposure_scales)):
        names += [f"ldr_{k}.ppm", f"ldr_{k}.pfm"]
    paths = {n: _claim(out / n, args.force) for n in names}
    hdrio.write_pfm(raw, paths["raw.pfm"])
    hdrio.write_hdr(gt, paths["gt.hdr"])
    hdrio.write_pfm(gt, paths["gt.pfm"])
    for k in range(len(sim.exposure_scales)):
        img = ldr[:, :, 3 * k:3 * k + 3]
        hdrio.write_ppm(img, paths[f"ldr_{k}.ppm"])
        hdrio.write_pfm(img, paths[f"ldr_{k}.pfm"])
    print(f"wrote {len(names)} files to {out}")
    return 0


def _train_common(args):
    sim, train = load_config(args.config)
    if args.iterations is not None:
        train = dataclasses.replace(train, iterations=args.iterations)
    if args.seed is not None:
        train = dataclasses.replace(train, seed=args.seed)
    files = list_dataset(args.data, args.list)
    out = _claim(args.out, args.force)
    stem = out.with_suffix("")
    loss_csv = _claim(args.loss_csv or f"{stem}_loss.csv", args.force)
    manifest = _claim(f"{stem}_manifest.txt", args.force)
    dataset = prepare_dataset([crop_to_mosaic(hdrio.read_hdr(f)) for f in files], sim,
                              train.augment)
    log = (lambda i, l: print(f"iter {i} loss {l:.6g}", flush=True)) if args.verbose else None
    return sim, train, dataset, out, loss_csv, manifest, log


def _finish(result, role, sim, train, out, loss_csv, manifest, extra=None):
    config = {"role": role, "unet": result.net.cfg.to_dict(), "sim": sim_to_dict(sim),
              "train": train.to_dict(), **(extra or {})}
    save_checkpoint(out, result.net.params, config)
    write_loss_csv(loss_csv, result.trace)
    write_manifest(manifest, config, result.trace, result.seconds)
    print(f"loss {result.trace[0]:.6g} -> {result.trace[-1]:.6g}; saved {out}")
    return 0


def cmd_train_ldr(args) -> int:
    sim, train, dataset, out, loss_csv, manifest, log = _train_common(args)
    result = train_ldr_i_net(dataset, train, sim, log)
    return _finish(result, "ldr", sim, train, out, loss_csv, manifest)


def cmd_train_ln(args) -> int:
    ldr_net, ldr_cfg = load_net(args.ldr, "ldr")
    sim, train, dataset, out, loss_csv, manifest, log = _train_common(args)
    if sim_to_dict(sim) != ldr_cfg["sim"]:
        raise UsageError("simulation settings differ from the LDR checkpoint")
    if args.loss_domain is not None:
        train = dataclasses.replace(train, loss_domain=args.loss_domain)
    result = train_ln_net(dataset, ldr_net, train, sim, log)
    return _finish(result, "ln", sim, train, out, loss_csv, manifest,
                   {"ldr_checkpoint": str(args.ldr)})


def cmd_reconstruct(args) -> int:
    ldr_net, ldr_cfg = load_net(args.ldr, "ldr")
    ln_net, ln_cfg = load_net(args.ln, "ln")
    raw = read_image(args.raw)
    if raw.ndim == 3:
        raw = raw[:, :, 0]
    sim = sim_from_dict(ldr_cfg["sim"])
    out = _claim(args.out, args.force)
    hdr = reconstruct(raw, ldr_net, ln_net, sim, ln_cfg["train"]["epsilon_l"])
    write_image(hdr, out)
    print(f"wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    pred, truth = read_image(args.pred), read_image(args.truth)
    out = Path(args.out)
    paths = [_claim(out / n, args.force) for n in ("report.csv", "report.txt", "curve.csv")]
    report = evaluate(pred, truth, mu=args.mu)
    report.write_csv(paths[0])
    paths[1].write_text(report.table())
    report.write_curve_csv(paths[2])
    print(report.table(), end="")
    return 0


def cmd_selftest(args) -> int:
    return 0 if selftest.run() else 3


def cmd_synth(args) -> int:
    out = Path(args.out)
    scenes = generate_dataset(args.count, args.size, args.seed)
    paths = [_claim(out / f"scene_{i:03d}.hdr", args.force) for i in range(args.count)]
    for img, p in zip(scenes, paths):
        hdrio.write_hdr(img, p)
    print(f"wrote {args.count} scenes to {out}")
    return 0


# -- argument parsing ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="snaphdr", description="Snapshot HDR reconstruction from ME-CFA RAW data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="HDR scene -> RAW mosaic, LDR exposures, ground truth")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--pattern")
    s.add_argument("--config")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_simulate)

    for name, func in (("train-ldr", cmd_train_ldr), ("train-ln", cmd_train_ln)):
        t = sub.add_parser(name, help="train a network on a directory of .hdr scenes")
        t.add_argument("--data", required=True)
        t.add_argument("--list", help="file naming the scenes to use, one per line")
        t.add_argument("--config")
        t.add_argument("--out", required=True, help="checkpoint path")
        t.add_argument("--loss-csv")
        t.add_argument("--iterations", type=int)
        t.add_argument("--seed", type=int)
        t.add_argument("--verbose", action="store_true")
        t.add_argument("--force", action="store_true")
        if name == "train-ln":
            t.add_argument("--ldr", required=True, help="trained LDR checkpoint")
            t.add_argument("--loss-domain", choices=("ln", "linear"))
        t.set_defaults(func=func)

    r = sub.add_parser("reconstruct", help="RAW mosaic + two checkpoints -> HDR")
    r.add_argument("--raw", required=True)
    r.add_argument("--ldr", required=True)
    r.add_argument("--ln", required=True)
    r.add_argument("--out", required=True, help=".hdr or .pfm")
    r.add_argument("--force", action="store_true")
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("evaluate", help="metrics of a prediction against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out", required=True, help="report directory")
    e.add_argument("--mu", type=float, default=5000.0)
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    st = sub.add_parser("selftest", help="gradient checks and radiometric identities")
    st.set_defaults(func=cmd_selftest)

    sy = sub.add_parser("synth", help="write procedural HDR scenes")
    sy.add_argument("--out", required=True)
    sy.add_argument("--count", type=int, default=32)
    sy.add_argument("--size", type=int, default=64)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--force", action="store_true")
    sy.set_defaults(func=cmd_synth)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail(2, "usage", str(exc))
    except Exception as exc:  # runtime failure: report, never traceback
        return _fail(1, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
