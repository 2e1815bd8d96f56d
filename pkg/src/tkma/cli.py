"""``fp`` command line: ``denoise``, ``complete`` and ``verify``."""

from __future__ import annotations

import argparse
import sys
import warnings

from .bench import cmd_complete, cmd_denoise, cmd_verify, load_experiment
from .io import ConfigError, PgmError, pgm_read


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fp", description="Fixed-point solver races and theory checks.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("denoise", help="TV denoising race")
    d.add_argument("--config", required=True)
    d.add_argument("--image", help="8-bit binary PGM; defaults to the block fixture")
    d.add_argument("--out", help="output directory (overrides the config)")

    c = sub.add_parser("complete", help="matrix completion race")
    c.add_argument("--config", required=True)
    c.add_argument("--out", help="output directory (overrides the config)")

    v = sub.add_parser("verify", help="run the invariant and oracle suites")
    v.add_argument("--trials", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--build-alpha", type=float, default=None,
                   help="build operators with this constant instead of the declared one")
    v.add_argument("--alpha", type=float, action="append", default=None,
                   help="declared constant(s); repeatable")
    return p


def _summary(res) -> str:
    lines = []
    for label, tr in res.traces.items():
        last = tr.records[-1] if tr.records else None
        if last is None:
            lines.append(f"{label:<16} no steps")
            continue
        lines.append(f"{label:<16} t={last.t_applies:<5} residual={last.residual:.4g} "
                     f"ofv={last.objective:.10g} quality={last.quality:.6g} [{tr.status}]")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "verify":
            report, code = cmd_verify(args.trials, args.seed, args.build_alpha,
                                      tuple(args.alpha) if args.alpha else (0.1, 0.25, 0.4, 0.5))
            print(report.format())
            return code
        cfg = load_experiment(args.config)
        if cfg.task != args.command:
            raise ConfigError(f"config task is {cfg.task!r}, command is {args.command!r}")
        if args.out:
            cfg = type(cfg)(**{**cfg.__dict__, "out": args.out})
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "denoise":
                image = pgm_read(args.image).astype(float) if args.image else None
                res = cmd_denoise(cfg, image)
            else:
                res = cmd_complete(cfg)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        print(_summary(res))
        return 0
    except (ConfigError, PgmError, OSError, ValueError) as exc:
        print(f"fp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
