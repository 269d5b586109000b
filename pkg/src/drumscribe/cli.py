"""Command-line entry point: ``drumscribe <command> ...``.

Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import functools
import logging
import sys
from pathlib import Path

import numpy as np

from .audio_io import WavFormatError, read_wav, resample_linear
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config
from .data import CLASS_NAMES, DatasetError, DrumClass, generate_dataset, load_examples, split, stack
from .dsp import DspConfigError, SpectrogramFileError, featurize, mel_spectrogram, write_mspc, write_pgm
from .train import DivergedTrainingError, bench, evaluate, format_log_csv, train

log = logging.getLogger("drumscribe")

RUNTIME_ERRORS = (
    DatasetError, WavFormatError, CheckpointError, ConfigError, DivergedTrainingError,
    DspConfigError, SpectrogramFileError, OSError,
)


def _overrides(args) -> dict[str, str]:
    pairs = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        pairs[key.strip()] = value.strip()
    for flag, key in (("arch", "train.arch"), ("epochs", "train.epochs"), ("seed", "train.seed")):
        value = getattr(args, flag, None)
        if value is not None:
            pairs[key] = str(value)
    return pairs


def _featurizer(cfg):
    return functools.partial(featurize, cfg=cfg.dsp, width=cfg.vit.image_size)


def cmd_synth(args) -> int:
    counts = generate_dataset(args.per_class, args.seed, args.out)
    for cls, n in counts.items():
        print(f"{cls.dirname}: {n} files")
    return 0


def cmd_featurize(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    src, dst = Path(args.input), Path(args.out)
    files = sorted(src.rglob("*.wav"))
    if not files:
        raise DatasetError(f"no WAV files under {src}")
    fz = _featurizer(cfg)
    for f in files:
        target = dst / f.relative_to(src).with_suffix(".mspc")
        target.parent.mkdir(parents=True, exist_ok=True)
        write_mspc(fz(read_wav(f)), target)
    print(f"featurized {len(files)} files into {dst}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    tc = cfg.train
    examples = load_examples(args.data, _featurizer(cfg))
    tr, va = split(examples, tc.val_fraction, tc.seed)
    log.info("training %s on %d examples, validating on %d", tc.arch, len(tr), len(va))
    result = train(stack(tr), stack(va) if va else None, tc, model_cfg=cfg.model_config(tc.arch))
    out = Path(args.out)
    save_checkpoint(result.model, out, cfg)
    log_path = Path(args.log) if args.log else out.with_suffix(".loss.csv")
    log_path.write_text(result.log_csv())
    best = result.log[result.best_epoch]
    print(f"{tc.arch}: best epoch {result.best_epoch}, val accuracy {best.val_acc:.2f}%")
    print(f"checkpoint: {out}\nloss log: {log_path}")
    return 0


def cmd_eval(args) -> int:
    model, cfg = load_checkpoint(args.model)
    examples = load_examples(args.data, _featurizer(cfg))
    if args.split != "all":
        tr, va = split(examples, cfg.train.val_fraction, cfg.train.seed)
        examples = tr if args.split == "train" else va
    if not examples:
        raise DatasetError(f"the {args.split} split is empty")
    report = evaluate(model, *stack(examples))
    print(report.format())
    if args.csv:
        prefix = args.csv
        Path(f"{prefix}_classes.csv").write_text(report.class_csv())
        Path(f"{prefix}_confusion.csv").write_text(report.confusion_csv())
        Path(f"{prefix}_report.txt").write_text(report.format() + "\n")
    return 0


def cmd_classify(args) -> int:
    model, cfg = load_checkpoint(args.model)
    x = _featurizer(cfg)(read_wav(args.wav))
    z = model.predict_logits(x[None])[0].astype(np.float64)
    p = np.exp(z - z.max())
    p /= p.sum()
    best = int(np.argmax(z))
    print(f"prediction: {DrumClass(best).name}")
    for name, prob in zip(CLASS_NAMES, p):
        print(f"{name:<10} {prob:.4f}")
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    examples = load_examples(args.data, _featurizer(cfg))
    tr, va = split(examples, cfg.train.val_fraction, cfg.train.seed)
    if not va:
        raise DatasetError("bench needs a non-empty validation split")
    result = bench(stack(tr), stack(va), cfg.train, {a: cfg.model_config(a) for a in ("vit", "cnn", "rnn")})
    print(result.table())
    if args.csv:
        Path(args.csv).write_text(result.csv())
    if args.log_dir:
        d = Path(args.log_dir)
        d.mkdir(parents=True, exist_ok=True)
        for arch, entries in result.logs.items():
            (d / f"{arch}.loss.csv").write_text(format_log_csv(entries))
    return 0


def cmd_plot(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    clip = read_wav(args.input)
    if clip.sample_rate_hz != cfg.dsp.sample_rate:
        clip = resample_linear(clip, cfg.dsp.sample_rate)
    write_pgm(mel_spectrogram(clip, cfg.dsp), args.out)
    print(f"wrote {args.out}")
    return 0


def _add_config_flags(p):
    p.add_argument("--config", metavar="FILE", help="config file of 'section.key = value' lines")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drumscribe", description="Drum-hit classification from Mel spectrograms.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic drum dataset")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--per-class", type=int, required=True, metavar="N")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="WAV tree -> MSPC1 network inputs")
    p.add_argument("--in", dest="input", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flags(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train one architecture")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--arch", choices=("vit", "cnn", "rnn"))
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--log", metavar="CSV", help="loss log path (default: <out>.loss.csv)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--split", choices=("all", "train", "val"), default="all",
                   help="re-derive the checkpoint's train/val split (default: whole directory)")
    p.add_argument("--csv", metavar="PREFIX", help="write PREFIX_classes.csv, PREFIX_confusion.csv, PREFIX_report.txt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", help="classify one WAV file")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("wav")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bench", help="train and compare RNN, CNN and ViT")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--csv", metavar="FILE")
    p.add_argument("--log-dir", metavar="DIR", help="write per-architecture loss logs here")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render a Mel spectrogram as a PGM image")
    p.add_argument("--in", dest="input", required=True, metavar="WAV")
    p.add_argument("--out", required=True, metavar="PGM")
    _add_config_flags(p)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except RUNTIME_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
