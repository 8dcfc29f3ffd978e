"""Command line: ``ctxgreedy run|sweep|validate <config> --out <dir> [--seed N]``.

Exit status is 0 on success, 1 for configuration/validation errors and 2 for
runtime failures such as unwritable output directories.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_run_config
from .policies import PolicyKind
from .simulator import (best_threshold, compare_policies, generate_environment,
                        sweep_to_csv, threshold_sweep)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("ctxgreedy")


def _load(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _environment(cfg: RunConfig):
    return generate_environment(cfg.environment, cfg.taxonomies, cfg.critical_seeds)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
        env = _environment(cfg)
    except ConfigError as exc:
        for issue in exc.issues:
            print(issue)
        print(f"{len(exc.issues)} error{'s' if len(exc.issues) != 1 else ''}")
        return EXIT_INVALID
    except ValueError as exc:
        print(f"{args.config}: [environment]: {exc}")
        print("1 error")
        return EXIT_INVALID
    print(f"{cfg.path}: {len(cfg.policies)} policies, {len(env.clusters)} clusters, "
          f"{len(env.situations)} situations, {len(env.critical_seeds())} critical seeds")
    print("0 errors")
    return EXIT_OK


def render_summary(cfg: RunConfig, comparison) -> str:
    lines = [f"config: {cfg.path}",
             f"environment seed: {cfg.environment.seed}",
             f"iterations: {cfg.iterations}  list size: {cfg.list_size}  "
             f"seeds: {','.join(str(s) for s in comparison.seeds)}",
             "",
             "final average CTR (mean over seeds):"]
    names = list(cfg.policies)
    finals = {n: comparison.mean_final(n) for n in names}
    width = max(len(n) for n in names)
    for n in names:
        lines.append(f"  {n:<{width}}  {finals[n]:.4f}")
    best = max(names, key=lambda n: (finals[n], n))
    lines.append(f"best policy: {best}")
    for n, pc in cfg.policies.items():
        if pc.kind is PolicyKind.CONTEXTUAL:
            growth = [comparison.runs[(n, s)].critical_growth for s in comparison.seeds]
            lines.append(f"critical situations added ({n}): "
                         + ", ".join(str(g) for g in growth)
                         + f" (mean {np.mean(growth):.1f})")
    exploit = [n for n, pc in cfg.policies.items()
               if pc.kind is PolicyKind.EXPLOIT
               or (pc.kind is PolicyKind.EPS_GREEDY and pc.epsilon == 0.0)]
    contextual = [n for n, pc in cfg.policies.items() if pc.kind is PolicyKind.CONTEXTUAL]
    if exploit and contextual and finals[exploit[0]] > 0:
        factor = finals[contextual[0]] / finals[exploit[0]]
        lines.append(f"contextual / exploitation CTR factor: {factor:.3f}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
        env = _environment(cfg)
    except ConfigError as exc:
        for issue in exc.issues:
            print(issue, file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        out = _out_dir(args.out)
        comparison = compare_policies(env, cfg.policies, cfg.iterations, cfg.list_size, cfg.seeds,
                                      cfg.checkpoint_interval, cfg.weights, cfg.critical_seeds)
        summary = render_summary(cfg, comparison)
        (out / "comparison.csv").write_text(comparison.to_csv(), encoding="utf-8")
        (out / "summary.txt").write_text(summary, encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args)
        env = _environment(cfg)
    except ConfigError as exc:
        for issue in exc.issues:
            print(issue, file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if cfg.sweep is None:
        print(f"{cfg.path}: missing [sweep] section", file=sys.stderr)
        return EXIT_INVALID
    gold = env.gold_clustering(cfg.sweep.gold_size, np.random.default_rng(cfg.sweep.gold_seed))
    if not gold.situations:
        print(f"{cfg.path}: [sweep]: gold sample is empty", file=sys.stderr)
        return EXIT_INVALID
    try:
        points = threshold_sweep(gold, cfg.weights, env.taxonomies, cfg.sweep.b_values)
        out = _out_dir(args.out)
        (out / "sweep.csv").write_text(sweep_to_csv(points), encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    best = best_threshold(points)
    print(f"gold sample: {len(gold.situations)} situations in {len(set(gold.labels))} groups")
    print(f"optimal threshold B = {best.threshold_b:g} (precision {best.precision:.4f}, "
          f"{best.predicted_pairs} predicted pairs)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxgreedy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, needs_out in (("run", cmd_run, True), ("sweep", cmd_sweep, True),
                                  ("validate", cmd_validate, False)):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--out", default="out", required=False,
                       help="output directory (created if absent)" if needs_out else argparse.SUPPRESS)
        p.add_argument("--seed", type=int, default=None,
                       help="override the [environment] seed")
        p.set_defaults(func=func)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("--seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
