"""Command line entry points: run one experiment, run a preset, inspect a bundle."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, ExperimentConfig, parse_config
from .presets import PRESETS, run_preset
from .protocol import run_experiment


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--dataset", help="path to the interactions file")
    p.add_argument("--dataset-format", choices=("movielens-100k", "csv"))
    p.add_argument("--protocol", choices=("ptf", "fcf"))
    p.add_argument("--client-model", choices=("neumf", "ngcf", "lightgcn"))
    p.add_argument("--server-model", choices=("neumf", "ngcf", "lightgcn"))
    p.add_argument("--rounds", type=int)
    p.add_argument("--participation", type=float)
    p.add_argument("--client-epochs", type=int)
    p.add_argument("--server-epochs", type=int)
    p.add_argument("--client-batch", type=int)
    p.add_argument("--server-batch", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--gcn-layers", type=int)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--negative-ratio", type=int)
    p.add_argument("--alpha", dest="hint_size", type=int, help="hint dataset size")
    p.add_argument("--mu", dest="hint_mix", type=float,
                   help="confidence share of the hint")
    p.add_argument("--hint-strategy", choices=("full", "no-hard", "no-confidence", "random"))
    p.add_argument("--defense", choices=("none", "ldp", "sampling", "sampling+swapping"))
    p.add_argument("--beta-min", dest="pos_fraction_min", type=float,
                   help="lower bound of the per-round positive upload share")
    p.add_argument("--beta-max", dest="pos_fraction_max", type=float)
    p.add_argument("--gamma-min", dest="neg_multiplier_min", type=int,
                   help="lower bound of the per-round negative multiplier")
    p.add_argument("--gamma-max", dest="neg_multiplier_max", type=int)
    p.add_argument("--lambda", dest="swap_fraction", type=float,
                   help="fraction of positives whose scores are swapped")
    p.add_argument("--ldp-scale", type=float)
    p.add_argument("--attack-fraction", type=float)
    p.add_argument("--eval-k", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--workers", type=int,
                   help="client worker processes (0 = one per cpu, max 4)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="out_dir",
                   help="output directory (default: $PTFREC_OUT)")


_CONFIG_KEYS = [f.name for f in ExperimentConfig.__dataclass_fields__.values()]


def _resolve(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS
                 if getattr(args, k, None) is not None}
    if not overrides.get("out_dir") and os.environ.get("PTFREC_OUT"):
        overrides["out_dir"] = os.environ["PTFREC_OUT"]
    return parse_config(args.config, overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ptfrec",
        description="Federated recommendation via prediction-score exchange")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single experiment")
    _add_config_flags(p_run)

    p_preset = sub.add_parser("preset", help="run a named experiment matrix")
    p_preset.add_argument("name", choices=sorted(PRESETS))
    p_preset.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    _add_config_flags(p_preset)

    p_inspect = sub.add_parser("inspect", help="summarize a report bundle")
    p_inspect.add_argument("bundle", help="bundle directory")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")

    try:
        if args.command == "run":
            cfg = _resolve(args)
            report = run_experiment(cfg)
            print(report.to_json())
            return 0
        if args.command == "preset":
            cfg = _resolve(args)
            out_dir = cfg.out_dir or "."
            summary = run_preset(args.name, cfg, out_dir, seeds=tuple(args.seeds))
            from .presets import render_table
            print(render_table(args.name, summary), end="")
            return 0
        if args.command == "inspect":
            return _inspect(args.bundle)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    return 1


def _inspect(bundle: str) -> int:
    path = os.path.join(bundle, "summary.json")
    if not os.path.exists(path):
        print(f"no summary.json under {bundle}", file=sys.stderr)
        return 2
    with open(path) as f:
        doc = json.load(f)
    cfg = doc["config"]
    print(f"bundle: {bundle}")
    print(f"protocol={cfg['protocol']} client={cfg['client_model']} "
          f"server={cfg['server_model']} rounds={cfg['rounds']} seed={cfg['seed']}")
    final = doc["final"]
    print(f"final: recall={final['recall']} ndcg={final['ndcg']} "
          f"attack_f1={final['attack_f1']}")
    comm = doc["communication"]
    print(f"communication: mean_bytes_per_client_round={comm['mean_bytes_per_client_round']:.1f} "
          f"total={comm['total_bytes']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
