"""``gshade`` command line.

Machine-readable JSON goes to stdout, human-readable notes to stderr.
``detect`` exits 0 when the watermark is found, 1 when not, 2 on error;
every other command exits 0 on success and 2 on error.
"""
from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import load_config, run_experiment
from .cipher import keygen
from .codec import CapacityLayout, WatermarkMessage, message_from_text
from .detector import detect, extract
from .diffusion import (MODES, POLICIES, ChannelSpec, LinearDenoiser, ZeroDenoiser,
                        apply_channel, build_schedule, ddim_inverse, ddim_sample)
from .exceptions import ConfigError, GaussianShadingError
from .io import LatentFile, read_key, read_latent, write_key, write_latent
from .pipeline import embed
from .sampler import UniformSource, reverse_sample, sample_latent

EXIT_OK, EXIT_NOT_DETECTED, EXIT_ERROR = 0, 1, 2


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _note(text: str) -> None:
    sys.stderr.write(text + "\n")


def _message(args) -> WatermarkMessage:
    if args.message_hex is not None:
        return WatermarkMessage.from_hex(args.message_hex)
    return message_from_text(args.message)


def _check_new_file(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists (use --force to overwrite)")


def cmd_keygen(args) -> int:
    key = keygen(seed=args.seed)
    if args.label is not None:
        key = type(key)(key.key, key.nonce, args.label)
    path = write_key(args.out, key, force=args.force)
    _emit({"key_file": str(path), "nonce": key.nonce.hex()})
    return EXIT_OK


def cmd_embed(args) -> int:
    message = _message(args)
    key = read_key(args.key)
    n_bits = args.n_dims * args.window
    layout = CapacityLayout(n_bits, message.m_bits)
    out = Path(args.out)
    _check_new_file(out, args.force)
    # Unseeded runs still record the seed they used so the embedding can be replayed.
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    latent = embed(message, key, args.n_dims, args.window, UniformSource(seed))
    manifest = {"uniform_seed": seed, "n_bits": n_bits, "m_bits": message.m_bits}
    write_latent(out, LatentFile(latent, args.window, manifest))
    _emit({"out": str(out), "n_dims": args.n_dims, "window": args.window,
           "m_bits": message.m_bits, "replicas": layout.replicas, "pad_bits": layout.pad_bits})
    _note(f"embedded {message.m_bits}-bit message x{layout.replicas} into {out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    lf = read_latent(args.latent)
    report = detect(lf.values, read_key(args.key), _message(args), lf.window, args.tfpr, lf.n_bits)
    _emit(report.to_dict())
    _note(f"hamming={report.hamming} threshold={report.threshold} p={report.p_value:.3g} "
          f"-> {'detected' if report.detected else 'not detected'}")
    return EXIT_OK if report.detected else EXIT_NOT_DETECTED


def cmd_extract(args) -> int:
    lf = read_latent(args.latent)
    result = extract(lf.values, read_key(args.key), args.message_bits, lf.window, n_bits=lf.n_bits)
    _emit(result.to_dict())
    return EXIT_OK


def _denoiser(text: str, schedule):
    kind, _, arg = text.partition(":")
    if kind == "zero" and not arg:
        return ZeroDenoiser()
    if kind == "linear":
        return LinearDenoiser.gaussian_optimal(schedule, float(arg) if arg else 0.5)
    raise ValueError(f"unknown denoiser {text!r}; use 'zero' or 'linear[:data_std]'")


def cmd_simulate(args) -> int:
    lf = read_latent(args.latent_in)
    z = lf.values
    manifest = dict(lf.manifest)
    summary = {}
    if args.steps:
        schedule = build_schedule(args.schedule, args.schedule_steps)
        denoiser = _denoiser(args.denoiser, schedule)
        z0 = ddim_sample(z, schedule, denoiser, args.mode, args.steps)
        rec = ddim_inverse(z0, schedule, denoiser, args.mode, args.steps)
        summary["roundtrip_mse"] = float(np.mean((rec - z) ** 2))
        manifest["schedule"] = {**schedule.describe(), "num_steps": args.steps,
                                "denoiser": args.denoiser, "mode": args.mode}
        z = rec

    spec = ChannelSpec.parse(args.channel, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    if spec.acts_on_bits:
        bits = apply_channel(reverse_sample(z, lf.window, lf.n_bits), spec, rng)
        z = sample_latent(bits, lf.window, UniformSource(rng))
    else:
        z = apply_channel(z, spec, rng)
    if spec.kind != "identity":
        manifest["channel"] = spec.to_string()

    out = Path(args.out)
    _check_new_file(out, args.force)
    write_latent(out, LatentFile(z, lf.window, manifest))
    summary.update({"out": str(out), "channel": spec.to_string()})
    _emit(summary)
    return EXIT_OK


def cmd_bench(args) -> int:
    files = run_experiment(load_config(args.config), args.out_dir)
    _emit({name: str(path) for name, path in files.items()})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gshade", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="write a fresh key/nonce file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--label")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_keygen)

    def message_args(p):
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--message", help="UTF-8 text")
        g.add_argument("--message-hex", help="raw message bytes as hex")

    p = sub.add_parser("embed", help="write a watermarked latent")
    message_args(p)
    p.add_argument("--key", required=True)
    p.add_argument("--n-dims", type=int, default=500)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--seed", type=int, help="uniform-noise seed (recorded in the manifest)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("detect", help="test a latent for a known message")
    message_args(p)
    p.add_argument("--latent", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--tfpr", type=float, default=0.01)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("extract", help="recover message bits from a latent")
    p.add_argument("--latent", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--message-bits", type=int, required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("simulate", help="run a latent through DDIM roundtrip and/or a channel")
    p.add_argument("--latent-in", required=True)
    p.add_argument("--channel", default="identity")
    p.add_argument("--schedule", choices=POLICIES, default="linear")
    p.add_argument("--schedule-steps", type=int, default=1000)
    p.add_argument("--denoiser", default="linear")
    p.add_argument("--mode", choices=MODES, default="standard")
    p.add_argument("--steps", type=int, default=0, help="DDIM sampling steps; 0 skips diffusion")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="run a benchmark config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except ConfigError as exc:
        _note(f"config error: {exc}")
    except (GaussianShadingError, ValueError, OSError, FloatingPointError) as exc:
        _note(f"error: {exc}")
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
