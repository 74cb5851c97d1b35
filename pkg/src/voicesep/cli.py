"""Command-line entry point: train, separate, evaluate.

Exit codes: 0 success, 2 usage/path errors, 3 numeric failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report
from .checkpoint import CheckpointFormatError, load_checkpoint, model_from_checkpoint
from .config import PROFILES, VARIANTS, RunConfig, parse_key_values
from .evaluate import EvalConfig, median_report, sdr_sir
from .signal import AudioClip, AudioFormatError, read_wav, write_wav
from .training import TrainingDiverged, discover_tracks, load_track_pair, \
    separate, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _add_config_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--profile", choices=sorted(PROFILES), default="paper",
                     help="named hyperparameter profile (default: paper)")
    sub.add_argument("--config", type=Path, default=None,
                     help="key = value config file layered over the profile")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a single config key (repeatable)")


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = PROFILES[args.profile]()
    if args.config is not None:
        cfg = RunConfig.from_text(Path(args.config).read_text(), base=cfg)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if overrides:
        cfg = RunConfig.from_mapping(overrides, base=cfg)
    if getattr(args, "variant", None):
        cfg.apply_variant(args.variant)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    track_dirs = discover_tracks(args.corpus)
    if not track_dirs:
        print(f"error: no tracks with vocals.wav under {args.corpus}",
              file=sys.stderr)
        return EXIT_USAGE
    pairs = [load_track_pair(d) for d in track_dirs]
    log_path = Path(str(args.out) + ".log")
    config_text = cfg.to_text()
    log_path.write_text(report.metrics_header(config_text))

    def on_epoch(stats):
        line = report.metrics_line(stats)
        with open(log_path, "a") as fh:
            fh.write(line)
        print(line, end="")

    _, history = train(pairs, cfg, out_path=args.out, resume=args.resume,
                       on_epoch=on_epoch)
    if history:
        report.save_training_figure(history, Path(str(args.out) + ".png"))
    print(f"wrote {args.out} ({len(history)} epochs this run)")
    return EXIT_OK


def cmd_separate(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.model)
    cfg = ckpt.run_config()
    params = model_from_checkpoint(ckpt, cfg)
    mixture = read_wav(args.input)
    result = separate(mixture, params, cfg)
    write_wav(result.voice, args.output)
    iters = result.ri_iterations
    if cfg.variant == "nri":
        print(f"wrote {args.output}; recurrent inference disabled "
              f"({len(iters)} subsequences)")
    else:
        print(f"wrote {args.output}; recurrent inference over {len(iters)} "
              f"subsequences: mean {np.mean(iters):.2f} iterations "
              f"(min {min(iters)}, max {max(iters)})")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.model)
    cfg = ckpt.run_config()
    if args.set:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        cfg = RunConfig.from_mapping(overrides, base=cfg)
    params = model_from_checkpoint(ckpt, cfg)
    track_dirs = discover_tracks(args.corpus)
    if not track_dirs:
        print(f"error: no tracks with vocals.wav under {args.corpus}",
              file=sys.stderr)
        return EXIT_USAGE
    eval_cfg = EvalConfig(proj_filter_len=cfg.eval_filter_len)
    scores = []
    for track_dir in track_dirs:
        voice, accomp = load_track_pair(track_dir)
        n = min(len(voice), len(accomp))
        voice = AudioClip(voice.samples[:n], voice.sample_rate)
        accomp = AudioClip(accomp.samples[:n], accomp.sample_rate)
        mixture = AudioClip(voice.samples + accomp.samples, voice.sample_rate)
        if args.oracle:
            estimate = voice
        else:
            estimate = separate(mixture, params, cfg).voice
        scores.append(sdr_sir(estimate, [voice, accomp], 0, eval_cfg,
                              track_id=track_dir.name))
    summary = median_report(scores)
    config_text = cfg.to_text()
    report.write_eval_report(summary, args.report, config_text)
    report.save_eval_figure(summary, Path(str(args.report) + ".png"))
    print(report.format_eval_table(summary))
    print(f"wrote {args.report} and {args.report}.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voicesep",
        description="Monaural singing-voice separation: train, separate, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model on a stem corpus")
    p_train.add_argument("--corpus", type=Path, required=True,
                         help="directory of track folders with vocals.wav + accompaniment")
    p_train.add_argument("--out", type=Path, required=True,
                         help="checkpoint output path (refreshed every epoch)")
    p_train.add_argument("--variant", choices=VARIANTS, default=None,
                         help="nri, ris-s (iter=3, tau=1e-2) or ris-l (iter=10, tau=1e-3)")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--resume", type=Path, default=None,
                         help="checkpoint to continue from")
    _add_config_args(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sep = sub.add_parser("separate", help="extract the singing voice from a mixture")
    p_sep.add_argument("--model", type=Path, required=True)
    p_sep.add_argument("--input", type=Path, required=True, help="44.1 kHz WAV mixture")
    p_sep.add_argument("--output", type=Path, required=True, help="float32 WAV to write")
    p_sep.set_defaults(func=cmd_separate)

    p_eval = sub.add_parser("evaluate", help="score a model over a stem corpus")
    p_eval.add_argument("--model", type=Path, required=True)
    p_eval.add_argument("--corpus", type=Path, required=True)
    p_eval.add_argument("--report", type=Path, required=True,
                        help="delimited report path (figure written alongside)")
    p_eval.add_argument("--oracle", action="store_true",
                        help="score the true vocals as the estimate (sanity check)")
    p_eval.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key from the checkpoint (repeatable)")
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AudioFormatError, CheckpointFormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
