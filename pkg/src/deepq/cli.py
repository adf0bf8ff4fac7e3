"""Batch command-line front end: train, eval, ablate, dump-config.

Every config field is exposed as a kebab-case flag; ``--priorityAlpha`` is
kept as an alias of ``--priority-alpha`` for compatibility with the
benchmark's model-setting notation. Exit codes: 0 success, 1 usage error,
2 runtime fault.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .agent import (STREAM_EVAL_AGENT, STREAM_EVAL_ENV, Trainer, evaluate,
                    substream)
from .checkpoint import load_checkpoint, load_params_into
from .config import (RunConfig, coerce_value, dump_config, parse_config_text,
                     resolve_config)
from .envs import make_env
from .errors import ConfigError, DeepQError
from .metrics import COLUMNS, MetricsWriter
from .network import build_network

# The four benchmark model settings: (label, dueling, priority alpha).
ABLATION_VARIANTS = [
    ("double DQN", False, 0.0),
    ("dueling double DQN", True, 0.0),
    ("double DQN with prioritized replay", False, 0.6),
    ("dueling double DQN with prioritized replay", True, 0.6),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems must exit 1, not argparse's 2
        raise ConfigError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        names = [flag]
        if f.name == "priority_alpha":
            names.append("--priorityAlpha")
        parser.add_argument(*names, dest=f.name, default=None, metavar="V")


def _cli_overrides(args: argparse.Namespace) -> dict:
    out = {}
    for f in dataclasses.fields(RunConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            out[f.name] = coerce_value(f.name, raw)
    return out


def _file_overrides(args: argparse.Namespace) -> dict | None:
    path = getattr(args, "config", None)
    if path is None:
        return None
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    return parse_config_text(text)


def parse_config(argv: list[str], config_file: str | None = None) -> RunConfig:
    """Resolve a RunConfig from raw flag strings plus an optional file."""
    parser = _Parser(prog="deepq", add_help=False)
    _add_config_flags(parser)
    args = parser.parse_args(argv)
    file_overrides = None
    if config_file is not None:
        file_overrides = parse_config_text(Path(config_file).read_text())
    return resolve_config(_cli_overrides(args), file_overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train an agent")
    p_train.add_argument("--config", metavar="FILE", help="key=value config file")
    p_train.add_argument("--resume", metavar="CKPT",
                         help="continue from a checkpoint")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("checkpoint", metavar="CKPT")
    p_eval.add_argument("--out", metavar="CSV", help="per-episode results CSV")
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate",
                              help="run the four model settings with one seed")
    p_ablate.add_argument("--config", metavar="FILE")
    _add_config_flags(p_ablate)
    p_ablate.set_defaults(func=cmd_ablate)

    p_dump = sub.add_parser("dump-config", help="print the resolved config")
    p_dump.add_argument("--config", metavar="FILE")
    _add_config_flags(p_dump)
    p_dump.set_defaults(func=cmd_dump_config)

    return parser


def cmd_train(args: argparse.Namespace) -> int:
    overrides = _cli_overrides(args)
    if args.resume is not None:
        ckpt = load_checkpoint(args.resume)
        if overrides:
            ckpt.config = dataclasses.replace(ckpt.config, **overrides).resolved()
            ckpt.config.validate()
        cfg = ckpt.config
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        sink = MetricsWriter(out / "metrics.csv", append=True)
        trainer = Trainer.from_checkpoint(ckpt, sink=sink, out_dir=out)
    else:
        cfg = resolve_config(overrides, _file_overrides(args))
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(dump_config(cfg))
        sink = MetricsWriter(out / "metrics.csv")
        trainer = Trainer(cfg, sink=sink, out_dir=out)
    try:
        final = trainer.run()
    finally:
        sink.close()
    print(f"training finished at step {trainer.step}; checkpoint: {final}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    overrides = _cli_overrides(args)
    cfg = dataclasses.replace(ckpt.config, **overrides).resolved()
    cfg.validate()

    probe = make_env(cfg.env)
    shape = (cfg.frame_size, cfg.frame_size, cfg.input_frames)
    net = build_network(cfg.preset, shape, probe.spec.n_actions, cfg.dueling,
                        dtype=np.dtype(cfg.dtype))
    load_params_into(net, ckpt.params)

    env = make_env(cfg.env, rng=substream(cfg.seed, STREAM_EVAL_ENV, 0))
    rng = substream(cfg.seed, STREAM_EVAL_AGENT, 0)
    mean, returns = evaluate(net, env, cfg.test_episodes, cfg.test_eps, rng,
                             cfg.max_episode_steps)
    std = float(np.std(returns))
    for i, r in enumerate(returns):
        print(f"episode {i}: return {r}")
    print(f"mean {mean} +- {std} over {len(returns)} episodes")

    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "eval.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "return"])
        for i, r in enumerate(returns):
            writer.writerow([i, repr(float(r))])
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = resolve_config(_cli_overrides(args), _file_overrides(args))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    merged_path = out / "ablation.csv"
    with open(merged_path, "w", newline="") as merged:
        writer = csv.writer(merged)
        writer.writerow(["variant"] + COLUMNS)
        for label, dueling, alpha in ABLATION_VARIANTS:
            slug = label.replace(" ", "_")
            sub_dir = out / slug
            sub_dir.mkdir(parents=True, exist_ok=True)
            variant_cfg = dataclasses.replace(
                cfg, dueling=dueling, priority_alpha=alpha,
                out_dir=str(sub_dir))
            (sub_dir / "config.txt").write_text(dump_config(variant_cfg))
            print(f"=== {label} ===")
            with MetricsWriter(sub_dir / "metrics.csv") as sink:
                Trainer(variant_cfg, sink=sink, out_dir=sub_dir).run()
            with open(sub_dir / "metrics.csv", newline="") as fh:
                rows = list(csv.reader(fh))
            for row in rows[1:]:
                writer.writerow([label] + row)
    print(f"ablation results: {merged_path}")
    return 0


def cmd_dump_config(args: argparse.Namespace) -> int:
    cfg = resolve_config(_cli_overrides(args), _file_overrides(args))
    sys.stdout.write(dump_config(cfg))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DeepQError, OSError, RuntimeError, ValueError) as e:
        print(f"fault: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
