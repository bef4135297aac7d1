"""``poselift`` command-line entry point.

Settings are resolved in this order, later wins: built-in defaults, the
``--config`` file, then command-line flags. Every config key has a flag of
the same name with dashes, e.g. ``train_size`` and ``--train-size``.

On failure a single JSON line ``{"error": <type>, "message": <text>}`` is
written to stderr and the exit code is nonzero.
"""

import argparse
import json
import sys
from dataclasses import fields

from . import harness
from .errors import DatasetParseError, NumericalError, ValidationError

COMMANDS = {
    "gen-data": harness.cmd_gen_data,
    "train": harness.cmd_train,
    "eval": harness.cmd_eval,
    "audit": harness.cmd_audit,
    "bench": harness.cmd_bench,
    "report": harness.cmd_report,
}

EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_OTHER = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="poselift", description="Synthetic 2D-to-3D pose lifting experiments.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key = value settings file")
    parser.add_argument("--seed", type=int, help="data seed for gen-data, otherwise a single training seed")
    parser.add_argument("--model", choices=sorted(harness.MODEL_ALIASES))
    parser.add_argument("--hybrid-mode", choices=sorted(harness.HYBRID_MODE_ALIASES))
    parser.add_argument("--aug", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--force-zero", action=argparse.BooleanOptionalAction, default=None)
    handled = {"model", "hybrid_mode", "aug", "force_zero"}
    for f in fields(harness.ExperimentConfig):
        if f.name not in handled:
            parser.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar=f.name.upper())
    return parser


def resolve_config(args):
    """Merge defaults, the optional config file and explicit flags."""
    values = {}
    if args.config:
        values.update(harness.load_config_file(args.config))
    for f in fields(harness.ExperimentConfig):
        given = getattr(args, f.name, None)
        if given is None:
            continue
        values[f.name] = given if isinstance(given, bool) else harness.parse_value(f.name, str(given))
    if args.seed is not None:
        if args.command == "gen-data":
            values["data_seed"] = args.seed
        else:
            values["seeds"] = (args.seed,)
    return harness.ExperimentConfig(**values)


def _summary(command, result):
    if command == "gen-data":
        return {k: str(v) for k, v in result.items()}
    if command == "train":
        return {"checkpoints": [str(p) for p in result]}
    if command == "eval":
        return {split: {"protocol1_mean": r.protocol1_mean, "protocol2_mean": r.protocol2_mean} for split, r in result.items()}
    if command == "audit":
        return result["summary"]
    if command == "bench":
        return result
    return None


def _fail(kind, message, code):
    line = json.dumps({"error": kind, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        result = COMMANDS[args.command](cfg)
    except UsageError as exc:
        return _fail("UsageError", exc, EXIT_USAGE)
    except (ValidationError, DatasetParseError) as exc:
        return _fail(type(exc).__name__, exc, EXIT_USAGE)
    except NumericalError as exc:
        return _fail("NumericalError", exc, EXIT_NUMERICAL)
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, exc, EXIT_OTHER)
    if args.command == "report":
        sys.stdout.write(result)
    else:
        print(json.dumps(_summary(args.command, result), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
