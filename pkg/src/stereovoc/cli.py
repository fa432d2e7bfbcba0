"""Command-line entry point.

Exit codes: 0 on success, 1 on usage errors, 2 on data or format errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, cascade, dsp
from .audio import ENCODINGS, AudioBuffer, read_wav, write_wav
from .errors import StereoVocError
from .nets import DiscriminatorConfig, load_checkpoint, read_header
from .spectral import load_matrix, log_mel
from .stages import HIGH_RATE, LOW_RATE, STAGES, VOCODER, get_stage

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("stereovoc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _existing_file(flag):
    def check(value):
        if not Path(value).is_file():
            raise argparse.ArgumentTypeError(f"{flag}: no such file: {value}")
        return Path(value)
    return check


def _existing_dir(flag):
    def check(value):
        if not Path(value).is_dir():
            raise argparse.ArgumentTypeError(f"{flag}: no such directory: {value}")
        return Path(value)
    return check


def _out_file(flag):
    def check(value):
        parent = Path(value).resolve().parent
        if not parent.is_dir():
            raise argparse.ArgumentTypeError(f"{flag}: output directory does not exist: {parent}")
        return Path(value)
    return check


def _finite(flag):
    def check(value):
        try:
            v = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: not a number: {value!r}") from None
        if not math.isfinite(v):
            raise argparse.ArgumentTypeError(f"{flag}: must be finite, got {value!r}")
        return v
    return check


def _positive_int(flag):
    def check(value):
        try:
            v = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: not an integer: {value!r}") from None
        if v < 1:
            raise argparse.ArgumentTypeError(f"{flag}: must be >= 1, got {v}")
        return v
    return check


def _encoding(parser, default):
    parser.add_argument("--encoding", choices=ENCODINGS, default=default,
                        help=f"output sample encoding (default {default})")


def _read(path, flag) -> AudioBuffer:
    try:
        return read_wav(path)
    except StereoVocError as exc:
        raise type(exc)(f"{flag} {path}: {exc}") from exc


def _read_mono(path, flag, rate) -> AudioBuffer:
    x = _read(path, flag)
    if x.channels != 1:
        raise StereoVocError(f"{flag} {path}: expected mono audio, got {x.channels} channels")
    if x.sample_rate != rate:
        raise StereoVocError(f"{flag} {path}: expected {rate} Hz, got {x.sample_rate} Hz")
    return x


def _load_mel(args) -> np.ndarray:
    """Mel matrix from a ``.npy`` file, or computed from a WAV with ``--from-wav``."""
    if not args.from_wav:
        try:
            return load_matrix(args.mel)
        except StereoVocError as exc:
            raise type(exc)(f"--mel {exc}") from exc
    x = _read(args.mel, "--mel")
    if x.channels == 2:
        x = dsp.downmix(x)
    if x.sample_rate == HIGH_RATE:
        x = dsp.sinc_resample(x, "down2")
    if x.sample_rate != LOW_RATE:
        raise StereoVocError(f"--mel {args.mel}: --from-wav needs {LOW_RATE} or {HIGH_RATE} Hz audio, "
                             f"got {x.sample_rate} Hz")
    return log_mel(x, VOCODER.stft, VOCODER.mel).values[:, :-(-len(x) // VOCODER.stft.hop_size)]


def _load(path, flag, stage):
    try:
        return cascade.load_stage(path, stage)
    except StereoVocError as exc:
        raise type(exc)(f"{flag} {exc}") from exc


def cmd_vocode(args):
    model = _load(args.ckpt, "--ckpt", "vocoder")
    out = cascade.vocode(model, _load_mel(args))
    write_wav(out, args.out, args.encoding)


def cmd_bwe(args):
    model = _load(args.ckpt, "--ckpt", "bwe")
    low = _read_mono(args.inp, "--in", LOW_RATE)
    write_wav(cascade.bwe(model, low), args.out, args.encoding)


def cmd_m2s(args):
    model = _load(args.ckpt, "--ckpt", "m2s")
    mono = _read_mono(args.inp, "--in", HIGH_RATE)
    write_wav(cascade.m2s(model, mono, args.gamma_db), args.out, args.encoding)


def cmd_cascade(args):
    models = cascade.CascadeModels(_load(args.vocoder, "--vocoder", "vocoder"),
                                   _load(args.bwe, "--bwe", "bwe"),
                                   _load(args.m2s, "--m2s", "m2s"))
    out = cascade.full_cascade(models, _load_mel(args), args.gamma_db)
    write_wav(out, args.out, args.encoding)


def _train_config(path):
    from .trainer import CROP_LENGTH, TrainConfig

    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise StereoVocError(f"--config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise StereoVocError(f"--config {path}: expected a JSON object")
        unknown = set(raw) - {"train", "generator", "discriminator", "crop_length"}
        if unknown:
            raise StereoVocError(f"--config {path}: unknown section(s) {sorted(unknown)}")
    try:
        train = TrainConfig(**raw.get("train", {}))
        gen = raw.get("generator", {})
        disc = DiscriminatorConfig.from_dict(raw["discriminator"]) if "discriminator" in raw else None
        crop = int(raw.get("crop_length", CROP_LENGTH))
    except (TypeError, ValueError, StereoVocError) as exc:
        raise StereoVocError(f"--config {path}: {exc}") from exc
    return train, gen, disc, crop


def _wav_dir(path, flag) -> list[AudioBuffer]:
    files = sorted(Path(path).glob("*.wav"))
    if not files:
        raise StereoVocError(f"{flag} {path}: no .wav files")
    return [_read(f, flag) for f in files]


def cmd_train(args):
    from dataclasses import replace

    from .trainer import train

    train_cfg, gen_overrides, disc_cfg, crop = _train_config(args.config)
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    if args.steps is not None:
        train_cfg = replace(train_cfg, steps=args.steps)
    stage = get_stage(args.stage)
    try:
        gen_cfg = stage.generator_config(**gen_overrides)
    except TypeError as exc:
        raise StereoVocError(f"--config {args.config}: generator section: {exc}") from exc
    data = _wav_dir(args.data, "--data")
    val = _wav_dir(args.val, "--val") if args.val else None
    try:
        result = train(args.stage, data, gen_cfg, train_cfg, args.out, disc_cfg, val, crop)
    except StereoVocError as exc:
        raise type(exc)(f"--data {args.data}: {exc}") from exc
    print(json.dumps({"best": result.best.name, "checkpoints": len(result.checkpoints),
                      "final_rc": result.history[-1]["rc"]}, sort_keys=True))


def cmd_eval(args):
    from .metrics import evaluate_dirs, write_report

    workers = args.workers
    if workers is None:
        env = os.environ.get("MUSICHIFI_THREADS", "1")
        try:
            workers = max(1, int(env))
        except ValueError:
            raise UsageError(f"MUSICHIFI_THREADS must be an integer, got {env!r}") from None
    records, summary = evaluate_dirs(args.ref, args.est, args.band_split, workers)
    write_report(args.report, records, summary)
    print(json.dumps(summary, sort_keys=True))


def cmd_encode_ms(args):
    x = _read(args.inp, "--in")
    mid, side = dsp.mid_side_encode(x)
    write_wav(mid, args.mid, args.encoding)
    write_wav(side, args.side, args.encoding)


def cmd_decode_ms(args):
    mid, side = _read(args.mid, "--mid"), _read(args.side, "--side")
    write_wav(dsp.mid_side_decode(mid, side), args.out, args.encoding)


def cmd_resample(args):
    x = _read(args.inp, "--in")
    if x.channels != 1:
        raise StereoVocError(f"--in {args.inp}: resample takes mono audio, got {x.channels} channels")
    write_wav(dsp.sinc_resample(x, args.factor, args.taps), args.out, args.encoding)


def cmd_info(args):
    try:
        header = read_header(args.ckpt)
        net, _ = load_checkpoint(args.ckpt)
    except StereoVocError as exc:
        raise type(exc)(f"--ckpt {exc}") from exc
    header["parameters"] = sum(p.numel() for p in net.parameters())
    print(json.dumps(header, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stereovoc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def mel_input(sp):
        sp.add_argument("--mel", required=True, type=_existing_file("--mel"),
                        help=".npy mel matrix (n_mels x frames), or a WAV with --from-wav")
        sp.add_argument("--from-wav", action="store_true", help="compute the vocoder mel from a WAV file")

    sp = sub.add_parser("vocode", help="mel -> mono 22.05 kHz")
    mel_input(sp)
    sp.add_argument("--ckpt", required=True, type=_existing_file("--ckpt"))
    sp.add_argument("--out", required=True, type=_out_file("--out"))
    _encoding(sp, "float32")
    sp.set_defaults(fn=cmd_vocode)

    sp = sub.add_parser("bwe", help="mono 22.05 kHz -> mono 44.1 kHz")
    sp.add_argument("--in", dest="inp", required=True, type=_existing_file("--in"))
    sp.add_argument("--ckpt", required=True, type=_existing_file("--ckpt"))
    sp.add_argument("--out", required=True, type=_out_file("--out"))
    _encoding(sp, "float32")
    sp.set_defaults(fn=cmd_bwe)

    sp = sub.add_parser("m2s", help="mono 44.1 kHz -> stereo 44.1 kHz")
    sp.add_argument("--in", dest="inp", required=True, type=_existing_file("--in"))
    sp.add_argument("--ckpt", required=True, type=_existing_file("--ckpt"))
    sp.add_argument("--gamma-db", type=_finite("--gamma-db"), default=0.0)
    sp.add_argument("--out", required=True, type=_out_file("--out"))
    _encoding(sp, "float64")
    sp.set_defaults(fn=cmd_m2s)

    sp = sub.add_parser("cascade", help="mel -> stereo 44.1 kHz through all three stages")
    mel_input(sp)
    sp.add_argument("--vocoder", required=True, type=_existing_file("--vocoder"))
    sp.add_argument("--bwe", required=True, type=_existing_file("--bwe"))
    sp.add_argument("--m2s", required=True, type=_existing_file("--m2s"))
    sp.add_argument("--gamma-db", type=_finite("--gamma-db"), default=0.0)
    sp.add_argument("--out", required=True, type=_out_file("--out"))
    _encoding(sp, "float64")
    sp.set_defaults(fn=cmd_cascade)

    sp = sub.add_parser("train", help="train one stage on a directory of 44.1 kHz WAV clips")
    sp.add_argument("--stage", required=True, choices=sorted(STAGES))
    sp.add_argument("--data", required=True, type=_existing_dir("--data"))
    sp.add_argument("--val", type=_existing_dir("--val"), help="held-out clips (default: the training clips)")
    sp.add_argument("--config", type=_existing_file("--config"),
                    help="JSON with optional train/generator/discriminator/crop_length sections")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=_positive_int("--steps"))
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="score estimate WAVs against same-named references")
    sp.add_argument("--ref", required=True, type=_existing_dir("--ref"))
    sp.add_argument("--est", required=True, type=_existing_dir("--est"))
    sp.add_argument("--report", required=True, type=_out_file("--report"))
    sp.add_argument("--band-split", action="store_true", help="add low/high band scores split at 11.025 kHz")
    sp.add_argument("--workers", type=_positive_int("--workers"))
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("encode-ms", help="stereo WAV -> mid and side WAVs")
    sp.add_argument("--in", dest="inp", required=True, type=_existing_file("--in"))
    sp.add_argument("--mid", required=True, type=_out_file("--mid"))
    sp.add_argument("--side", required=True, type=_out_file("--side"))
    _encoding(sp, "float64")
    sp.set_defaults(fn=cmd_encode_ms)

    sp = sub.add_parser("decode-ms", help="mid and side WAVs -> stereo WAV")
    sp.add_argument("--mid", required=True, type=_existing_file("--mid"))
    sp.add_argument("--side", required=True, type=_existing_file("--side"))
    sp.add_argument("--out", required=True, type=_out_file("--out"))
    _encoding(sp, "float64")
    sp.set_defaults(fn=cmd_decode_ms)

    sp = sub.add_parser("resample", help="2x windowed-sinc up- or downsampling")
    sp.add_argument("--in", dest="inp", required=True, type=_existing_file("--in"))
    sp.add_argument("--factor", required=True, choices=("up2", "down2"))
    sp.add_argument("--taps", type=_positive_int("--taps"), default=dsp.DEFAULT_TAPS)
    sp.add_argument("--out", required=True, type=_out_file("--out"))
    _encoding(sp, "float32")
    sp.set_defaults(fn=cmd_resample)

    sp = sub.add_parser("info", help="print a checkpoint's config block and parameter count")
    sp.add_argument("--ckpt", required=True, type=_existing_file("--ckpt"))
    sp.set_defaults(fn=cmd_info)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StereoVocError as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {args.command}: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
