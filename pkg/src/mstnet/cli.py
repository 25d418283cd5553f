"""Command line driver.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import checkpoint as ckpt_io
from . import report
from .config import ModelConfig, load_config
from .errors import ConfigError, DataError, InfeasibleTargetError, NumericError
from .synth import ToyGrammar, generate, read_corpus, write_corpus
from .trainer import ABLATION_AXES, ablate, decode, evaluate, gradcheck, model_from_checkpoint, tiny_config, train

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _add_config_flags(p):
    p.add_argument("--config", help="file of 'key = value' lines naming ModelConfig fields")
    group = p.add_argument_group("model/training overrides")
    for f in fields(ModelConfig):
        names = [f"--{f.name}"]
        if "_" in f.name:
            names.append(f"--{f.name.replace('_', '-')}")
        group.add_argument(*names, dest=f"cfg_{f.name}", default=None, metavar="V")


def _build_config(args, base=None) -> ModelConfig:
    cfg = base or ModelConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {f.name: getattr(args, f"cfg_{f.name}") for f in fields(ModelConfig)}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return cfg.updated(overrides).validate()


def _corpus_paths(args, *splits):
    data = Path(args.data)
    if data.is_file():
        return [data] * len(splits)
    return [data / f"{s}.mstc" for s in splits]


def cmd_synth(args):
    cfg = _build_config(args)
    grammar = ToyGrammar(
        vocab_size=cfg.vocab_size,
        d_in=cfg.d_in,
        noise_sigma=args.sigma,
        sentence_len_range=(args.min_len, args.max_len),
        seed=args.grammar_seed,
        pad_multiple=cfg.downsample,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split, count in (("train", args.train), ("dev", args.dev), ("test", args.test)):
        if count:
            path = out / f"{split}.mstc"
            write_corpus(path, generate(grammar, count, split))
            print(f"{split}\t{count}\t{path}")


def cmd_train(args):
    resume = ckpt_io.load(args.resume) if args.resume else None
    cfg = resume.config if resume is not None else _build_config(args)
    train_path, dev_path = _corpus_paths(args, "train", "dev")
    corpus = read_corpus(train_path, cfg.downsample)
    dev = read_corpus(dev_path, cfg.downsample) if dev_path.exists() else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(report.METRICS_HEADER)
    result = train(cfg, corpus, dev, resume=resume, stop_epoch=args.stop_epoch,
                   on_epoch=lambda rec, _m: print(rec.line(), flush=True))
    ckpt_io.save(result.checkpoint, out / "last.ckpt")
    if result.best is not None:
        ckpt_io.save(result.best, out / "best.ckpt")
    full_log = result.checkpoint.extra["log"]
    report.write_lines(out / "metrics.tsv", report.METRICS_HEADER, full_log)
    if result.log:
        report.plot_training_curves(result.log, out / "curves.png")
    if result.skipped:
        print(f"# skipped {result.skipped} infeasible samples", file=sys.stderr)


def cmd_eval(args):
    ck = ckpt_io.load(args.checkpoint)
    (path,) = _corpus_paths(args, "test")
    corpus = read_corpus(path, ck.config.downsample)
    rep = evaluate(ck, corpus, args.beam_width)
    lines = list(rep.lines())
    if args.out:
        report.write_lines(args.out, lines[0], lines[1:])
    else:
        print("\n".join(lines))
    print("ins\tdel\tsub\tref_words\twer")
    print(rep.breakdown.record())


def cmd_decode(args):
    ck = ckpt_io.load(args.checkpoint)
    (path,) = _corpus_paths(args, "test")
    corpus = read_corpus(path, ck.config.downsample)
    if not 0 <= args.index < len(corpus):
        raise DataError(f"index {args.index} outside corpus of {len(corpus)} samples")
    sample = corpus[args.index]
    hyp = decode(ck, sample.features, args.beam_width)
    print(" ".join(map(str, hyp)))
    if args.figure:
        model = model_from_checkpoint(ck)
        lp = model.decode_logits(sample.features).log_probs()
        report.plot_posteriors(lp, args.figure, title=f"{sample.features.sample_id}: {' '.join(map(str, hyp))}")


def cmd_gradcheck(args):
    cfg = _build_config(args, base=tiny_config())
    rep = gradcheck(cfg, args.tolerance, length=args.length, max_entries=args.max_entries)
    print("group\tmax_rel_err\tchecked\tstatus")
    print("\n".join(rep.lines()))
    print(f"# {'PASS' if rep.passed else 'FAIL'} max_rel_err={rep.max_rel_err:.3e} tolerance={args.tolerance:g}")
    return 0 if rep.passed else EXIT_NUMERIC


def cmd_ablate(args):
    cfg = _build_config(args)
    train_path, dev_path, test_path = _corpus_paths(args, "train", "dev", "test")
    tr = read_corpus(train_path, cfg.downsample)
    dev = read_corpus(dev_path, cfg.downsample)
    te = read_corpus(test_path, cfg.downsample)
    values = None
    if args.values:
        raw = [v.strip() for v in args.values.split(",")]
        values = raw if args.axis == "encoder" else [int(v) for v in raw]
    rows = ablate(cfg, args.axis, values, tr, dev, te)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [r.line() for r in rows]
    report.write_lines(out / f"ablation_{args.axis}.tsv", report.ABLATION_HEADER, lines)
    report.plot_ablation(rows, args.axis, out / f"ablation_{args.axis}.png")
    print(report.ABLATION_HEADER)
    print("\n".join(lines))


def build_parser():
    parser = argparse.ArgumentParser(prog="mstnet", description="Multi-scale temporal network toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a toy corpus (train/dev/test files)")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--dev", type=int, default=50)
    p.add_argument("--test", type=int, default=50)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--max-len", type=int, default=5)
    p.add_argument("--grammar-seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    _add_config_flags(p)
    p.add_argument("--data", required=True, help="corpus directory (train.mstc, dev.mstc) or a single file")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--stop-epoch", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="decode a corpus and report WER")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="corpus file, or directory holding test.mstc")
    p.add_argument("--beam-width", type=int, default=None)
    p.add_argument("--out", help="per-sample report file (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decode", help="decode one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--beam-width", type=int, default=None)
    p.add_argument("--figure", help="write a posterior heat map here")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("gradcheck", help="finite-difference check of the whole network")
    _add_config_flags(p)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--length", type=int, default=8)
    p.add_argument("--max-entries", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="sweep one ablation axis")
    _add_config_flags(p)
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES))
    p.add_argument("--values", help="comma-separated values (default: the full axis)")
    p.add_argument("--data", required=True, help="corpus directory with train/dev/test files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, InfeasibleTargetError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
