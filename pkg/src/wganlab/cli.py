"""Command-line entry point: ``wganlab run ...`` and ``wganlab list-presets``.

Settings resolve as flags > config file > preset > built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .data import DATASETS
from .penalty import KINDS, SAMPLINGS
from .presets import FIGURE_PRESETS, ROW_PRESETS, describe_config, get_preset, with_overrides
from .trainer import DEFAULT_SNAPSHOTS, TrainConfig, train

log = logging.getLogger("wganlab")

_DEFAULTS = TrainConfig()


class UsageError(ValueError):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _snapshot_list(text):
    text = text.strip()
    if not text:
        return ()
    try:
        its = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated iterations, got {text!r}") from None
    if any(i < 1 for i in its):
        raise argparse.ArgumentTypeError("snapshot iterations must be >= 1")
    return its


def _choice(options):
    def parse(text):
        if text not in options:
            raise argparse.ArgumentTypeError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    parse.metavar = "{" + "|".join(options) + "}"
    return parse


# (flag, dest, TrainConfig field or None, parser, default shown in --help, help)
_OPTIONS = (
    ("--dataset", "dataset", "dataset", _choice(DATASETS), _DEFAULTS.dataset, "target distribution"),
    ("--penalty", "penalty", "kind", _choice(KINDS), _DEFAULTS.penalty.kind, "Lipschitz enforcement"),
    ("--sampling", "sampling", "sampling", _choice(SAMPLINGS), _DEFAULTS.penalty.sampling, "penalty-point sampling (gp/lp)"),
    ("--lambda", "lam", "lam", _nonneg_float, _DEFAULTS.penalty.lam, "penalty coefficient (gp/lp)"),
    ("--clip-c", "clip_c", "clip_c", _positive_float, _DEFAULTS.penalty.clip_c, "weight clipping bound (clip)"),
    ("--dragan-C", "dragan_c", "dragan_c", _positive_float, _DEFAULTS.penalty.dragan_c, "local perturbation scale"),
    ("--batch-size", "batch_size", "batch_size", _positive_int, _DEFAULTS.batch_size, "minibatch size"),
    ("--n-critic", "n_critic", "n_critic", _positive_int, _DEFAULTS.n_critic, "critic updates per generator update"),
    ("--iterations", "iterations", "iterations", _positive_int, _DEFAULTS.iterations, "generator iterations"),
    ("--lr", "learning_rate", "learning_rate", _positive_float, _DEFAULTS.learning_rate, "RMSProp learning rate"),
    ("--seed", "seed", "seed", _nonneg_int, _DEFAULTS.seed, "random seed"),
    ("--emd-every", "emd_every", "emd_every", _nonneg_int, _DEFAULTS.emd_every, "EMD evaluation period, 0 disables"),
    ("--emd-batch", "emd_batch", "emd_batch", _positive_int, _DEFAULTS.emd_batch, "points per EMD evaluation"),
    (
        "--snapshots",
        "snapshot_iters",
        "snapshot_iters",
        _snapshot_list,
        ",".join(map(str, DEFAULT_SNAPSHOTS)),
        "comma-separated iterations for level-set figures and checkpoints",
    ),
    ("--hidden-width", "hidden_width", "hidden_width", _positive_int, _DEFAULTS.hidden_width, "hidden layer width"),
)

_BY_KEY = {}
for _flag, _dest, _field, _parse, _default, _help in _OPTIONS:
    _BY_KEY[_flag.lstrip("-").lower()] = (_dest, _field, _parse)
    _BY_KEY[_dest] = (_dest, _field, _parse)
_BY_KEY["wall-time"] = ("wall_time", "record_wall_time", lambda t: _parse_bool(t))


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wganlab",
        description="Train 2-D WGANs under weight clipping, GP, LP or local-perturbation penalties.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser(
        "run",
        help="train one configuration or a figure preset",
        description="Train one configuration or a figure preset. "
        "Precedence: flags > --config file > --preset > defaults.",
    )
    run.add_argument("--preset", help="figure preset, e.g. fig3 or fig1-top (see list-presets)")
    run.add_argument("--config", help="flat key=value file; keys are flag names without dashes")
    for flag, dest, _, parse, default, text in _OPTIONS:
        run.add_argument(
            flag,
            dest=dest,
            type=parse,
            default=None,
            metavar=getattr(parse, "metavar", None),
            help=f"{text} (default: {default})",
        )
    run.add_argument("--out", default="out", help="output root (default: ./out)")
    run.add_argument("--jobs", type=_positive_int, default=1, help="parallel processes for multi-run presets (default: 1)")
    run.add_argument(
        "--wall-time",
        dest="wall_time",
        action="store_const",
        const=True,
        default=None,
        help="log wall-clock ms per iteration; logs then differ between reruns (default: off)",
    )
    run.add_argument("-v", "--verbose", action="store_true", help="log progress every 100 iterations")

    sub.add_parser("list-presets", help="print every figure preset")
    return parser


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines into override values; ``#`` starts a comment."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, text = (s.strip() for s in line.split("=", 1))
        norm = key.lower().replace("_", "-")
        if norm == "preset":
            values["preset"] = text
            continue
        entry = _BY_KEY.get(norm) or _BY_KEY.get(key)
        if entry is None:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        dest, _, parse = entry
        try:
            values[dest] = parse(text)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


@dataclass(frozen=True)
class Invocation:
    """A resolved ``run``: one or more (name, config) pairs and where they go."""

    preset: str | None
    runs: tuple[tuple[str, TrainConfig], ...]
    out: str
    jobs: int = 1

    def run_dir(self, row: str, config: TrainConfig) -> str:
        base = os.path.join(self.out, self.preset or "custom", str(config.seed))
        return base if len(self.runs) == 1 else os.path.join(base, row)


def _check_conflicts(values: dict, kind: str):
    given = set(values)
    if kind == "clip" and given & {"lam", "sampling", "dragan_c"}:
        raise UsageError("--penalty clip takes --clip-c only; --lambda, --sampling and --dragan-C do not apply")
    if kind in ("gp", "lp") and "clip_c" in given:
        raise UsageError(f"--clip-c does not apply to --penalty {kind}")
    if kind == "none" and given & {"lam", "sampling", "dragan_c", "clip_c"}:
        raise UsageError("--penalty none takes no penalty settings")


def resolve(args: argparse.Namespace) -> Invocation:
    values = read_config_file(args.config) if args.config else {}
    flags = {dest: getattr(args, dest) for _, dest, *_ in _OPTIONS if getattr(args, dest) is not None}
    if args.wall_time is not None:
        flags["wall_time"] = args.wall_time
    values.update(flags)

    config_preset = values.pop("preset", None)
    preset_name = args.preset or config_preset
    if preset_name is not None:
        try:
            base = get_preset(preset_name).runs
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    else:
        base = (("run", _DEFAULTS),)

    field_of = {dest: fld for dest, fld, _ in _BY_KEY.values()}
    overrides = {field_of[dest]: v for dest, v in values.items()}
    runs = []
    for row, cfg in base:
        kind = overrides.get("kind", cfg.penalty.kind)
        _check_conflicts(values, kind)
        try:
            runs.append((row, with_overrides(cfg, overrides)))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return Invocation(preset_name, tuple(runs), args.out, args.jobs)


def parse_args(argv=None):
    """Return ``("list-presets", None)`` or ``("run", Invocation)``; usage errors exit with status 2."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list-presets":
        return "list-presets", None
    try:
        inv = resolve(args)
    except UsageError as exc:
        parser.error(str(exc))
    if args.verbose:
        logging.getLogger("wganlab").setLevel(logging.DEBUG)
    return "run", inv


def list_presets(stream=None) -> None:
    stream = stream or sys.stdout
    for name, preset in FIGURE_PRESETS.items():
        print(f"{name}\t{preset.description}", file=stream)
        for row, cfg in preset.runs:
            label = name if preset.single else f"{name}-{row}"
            print(f"  {label}\t{describe_config(cfg)}", file=stream)


def _execute(job):
    label, config, out_dir = job
    result = train(config, out_dir=out_dir)
    return label, out_dir, result.completed, result.error


def run_invocation(inv: Invocation) -> int:
    """Train every run, write artifacts, and return 0 iff all runs completed."""
    jobs = [
        (f"{inv.preset}-{row}" if inv.preset and len(inv.runs) > 1 else (inv.preset or row), cfg, inv.run_dir(row, cfg))
        for row, cfg in inv.runs
    ]
    for label, cfg, out_dir in jobs:
        log.info("%s: %s -> %s", label, describe_config(cfg), out_dir)
    if inv.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(inv.jobs, len(jobs))) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(job) for job in jobs]
    status = 0
    for label, out_dir, completed, error in results:
        if completed:
            log.info("%s: done, artifacts in %s", label, out_dir)
        else:
            log.error("%s: %s", label, error)
            status = 1
    return status


def run_preset(name: str, seed: int = 0, out: str = "out", **overrides) -> int:
    """Run a preset by name, e.g. ``run_preset("fig3", iterations=50)``."""
    try:
        base = get_preset(name).runs
    except KeyError as exc:
        raise ValueError(exc.args[0]) from None
    overrides["seed"] = seed
    runs = tuple((row, with_overrides(cfg, overrides)) for row, cfg in base)
    return run_invocation(Invocation(name, runs, out))


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    command, inv = parse_args(argv)
    if command == "list-presets":
        list_presets()
        return 0
    return run_invocation(inv)


__all__ = [
    "FIGURE_PRESETS",
    "ROW_PRESETS",
    "Invocation",
    "build_parser",
    "list_presets",
    "main",
    "parse_args",
    "read_config_file",
    "run_invocation",
    "run_preset",
]
