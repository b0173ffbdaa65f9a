"""Command-line interface.

Exit codes: 0 ok, 1 tolerance or numeric failure, 2 usage or shape error,
3 file or format error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import _kernels, bench, bundle, io
from .errors import (
    DimensionError,
    FormatError,
    NumericError,
    ParameterError,
    RangeError,
)
from .matching import PatchSet
from .nsm import fit as nsm_fit
from .pipeline import Episode, PipelineConfig, SupportShot, generate_prior
from .tensor import BinaryMask

EXIT_OK, EXIT_TOL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")
    return text == "on"


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# Applied after flags and config file are merged; None means "not given".
DEFAULTS = {
    "patches": "1,3,5",
    "levels": "middle,high",
    "nsm": True,
    "pool_support": True,
    "pool_query": False,
    "epsilon": 1e-7,
    "threads": None,
    "d": 256,
    "seed": 0,
    "project_to": 256,
    "lr": 10.0,
    "steps": 200,
    "iters": 3,
    "impl": "both",
    "hq": 60, "wq": 60, "hs": 30, "ws": 30,
    "tol": 1e-4,
}


def _add_common(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--threads", type=int, help="kernel threads (default: all cores)")


def _add_episode_args(p):
    p.add_argument("--query", help="query features: rank-3 tensor file or per-level bundle")
    p.add_argument("--support", action="append", help="support features, once per shot")
    p.add_argument("--mask", action="append", help="support mask (h, w) tensor, once per shot")
    p.add_argument("--patches", help="comma-separated odd window sizes (default 1,3,5)")
    p.add_argument("--levels", help="comma-separated subset of middle,high (default both)")
    p.add_argument("--weights", help="weight file with NSM records")
    p.add_argument("--proj", help="weight file with projection records; omit to skip projection")
    p.add_argument("--project-to", type=int, help="projected channel count (default 256)")
    p.add_argument("--nsm", type=_on_off, help="on|off (default on)")
    p.add_argument("--pool-support", type=_on_off, help="on|off (default on)")
    p.add_argument("--pool-query", type=_on_off, help="on|off (default off)")
    p.add_argument("--epsilon", type=float, help="min-max epsilon (default 1e-7)")
    p.add_argument("--out", help="output prior stack tensor file")
    p.add_argument("--heatmap", help="directory for per-channel PGM heatmaps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="priormask", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("generate", "generate a prior stack with the optimized kernels"),
        ("oracle", "generate a prior stack with the naive reference kernels"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        _add_episode_args(p)

    p = sub.add_parser("compare", help="compare two tensor files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("init-weights", help="write freshly initialized NSM/projection weights")
    _add_common(p)
    p.add_argument("--hs", type=int, help="support height at matching resolution")
    p.add_argument("--ws", type=int, help="support width at matching resolution")
    p.add_argument("--d", type=int, help="NSM hidden width (default 256)")
    p.add_argument("--seed", type=int)
    p.add_argument("--patches")
    p.add_argument("--levels")
    p.add_argument("--in-channels", help="backbone channels: N or level=N,... (adds projections)")
    p.add_argument("--project-to", type=int)
    p.add_argument("--out")

    p = sub.add_parser("fit", help="fit one NSM record set to a target prior")
    _add_common(p)
    p.add_argument("--slice", help="(q_positions, s_positions) correlation slice tensor")
    p.add_argument("--target", help="target prior with q_positions elements")
    p.add_argument("--weights", help="input weight file")
    p.add_argument("--record", help="level/m of the NSM set to fit (default: first)")
    p.add_argument("--lr", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--out")

    p = sub.add_parser("bench", help="time naive vs optimized correlation kernels")
    _add_common(p)
    for dim in ("hq", "wq", "hs", "ws", "d"):
        p.add_argument(f"--{dim}", type=int)
    p.add_argument("--patches")
    p.add_argument("--iters", type=int)
    p.add_argument("--impl", choices=("naive", "optimized", "both"))
    p.add_argument("--seed", type=int)
    p.add_argument("--csv-out", help="also write the CSV report here")
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        return action.choices[command]


def apply_config_file(parser, args) -> None:
    """Fill unset options from ``args.config``; unknown keys are usage errors."""
    sp = _subparser(parser, args.command)
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    with open(args.config, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{args.config}:{lineno}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        dest = key.replace("-", "_")
        if dest not in actions:
            raise UsageError(f"{args.config}:{lineno}: unknown key {key!r}")
        if getattr(args, dest) is not None:
            continue
        action = actions[dest]
        try:
            if isinstance(action, argparse._AppendAction):
                parsed = [action.type(v) if action.type else v for v in _csv_list(value)]
            else:
                parsed = action.type(value) if action.type else value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{args.config}:{lineno}: bad value for {key!r}: {exc}") from None
        setattr(args, dest, parsed)


def _fill_defaults(args) -> None:
    for key, value in DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)


def _require(args, *names):
    missing = [n for n in names if not getattr(args, n, None)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _emit(obj) -> None:
    print(json.dumps(obj), flush=True)


def _load_episode(args, levels):
    supports, masks = args.support or [], args.mask or []
    if not supports or len(supports) != len(masks):
        raise UsageError(f"need matching --support/--mask pairs, got {len(supports)} and {len(masks)}")
    query = bundle.load_features(args.query, levels)
    shots = [
        SupportShot(bundle.load_features(s, levels), BinaryMask(io.load_tensor(m)))
        for s, m in zip(supports, masks)
    ]
    return Episode(query, shots)


def cmd_generate(args, impl="optimized") -> int:
    _require(args, "query", "out")
    levels = tuple(_csv_list(args.levels))
    patches = PatchSet.parse(args.patches)
    nsm_weights, projections = {}, None
    if args.nsm:
        _require(args, "weights")
        nsm_weights, _ = bundle.parse_records(io.load_weights(args.weights))
    project_to = None
    if args.proj:
        _, projections = bundle.parse_records(io.load_weights(args.proj))
        project_to = args.project_to
    config = PipelineConfig(
        patches=patches,
        levels=levels,
        use_nsm=args.nsm,
        project_to=project_to,
        pool_support=args.pool_support,
        pool_query=args.pool_query,
        epsilon=args.epsilon,
        impl=impl,
    )
    episode = _load_episode(args, levels)
    stack = generate_prior(episode, config, nsm_weights, projections)
    io.save_tensor(args.out, stack.data)
    if args.heatmap:
        os.makedirs(args.heatmap, exist_ok=True)
    for k, (level, m) in enumerate(stack.labels):
        ch = stack.data[:, :, k]
        _emit({
            "channel": k, "level": level, "patch": m,
            "min": float(ch.min()), "max": float(ch.max()), "mean": float(ch.mean(dtype=np.float64)),
        })
        if args.heatmap:
            io.export_pgm(ch, os.path.join(args.heatmap, f"channels_{k}.pgm"))
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = io.load_tensor(args.a), io.load_tensor(args.b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = np.abs(a.astype(np.float64) - b.astype(np.float64))
    max_diff = float(diff.max()) if diff.size else 0.0
    mean_diff = float(diff.mean()) if diff.size else 0.0
    ok = max_diff <= args.tol
    _emit({"max_abs_diff": max_diff, "mean_abs_diff": mean_diff, "tol": args.tol, "ok": ok})
    return EXIT_OK if ok else EXIT_TOL


def _parse_in_channels(text, levels):
    if text is None:
        return None
    if "=" not in text:
        return {lv: int(text) for lv in levels}
    out = {}
    for item in _csv_list(text):
        level, _, value = item.partition("=")
        out[level.strip()] = int(value)
    return out


def cmd_init_weights(args) -> int:
    _require(args, "hs", "ws", "out")
    levels = _csv_list(args.levels)
    PipelineConfig(levels=tuple(levels))
    records = bundle.init_bundle(
        (args.hs, args.ws),
        args.d,
        args.seed,
        PatchSet.parse(args.patches),
        levels,
        in_channels=_parse_in_channels(args.in_channels, levels),
        project_to=args.project_to,
    )
    io.save_weights(args.out, records)
    _emit({"out": args.out, "records": len(records)})
    return EXIT_OK


def cmd_fit(args) -> int:
    _require(args, "slice", "target", "weights", "out")
    corr = io.load_tensor(args.slice)
    target = io.load_tensor(args.target).ravel()
    records = io.load_weights(args.weights)
    nsm_weights, _ = bundle.parse_records(records)
    if not nsm_weights:
        raise FormatError(f"{args.weights} has no NSM records")
    if args.record:
        level, _, m = args.record.partition("/")
        key = (level, int(m.lstrip("m")))
        if key not in nsm_weights:
            raise UsageError(f"no NSM record set {args.record!r} in {args.weights}")
    else:
        key = next(iter(nsm_weights))
    if corr.ndim != 2:
        raise DimensionError(f"slice must be 2-D, got {corr.shape}")

    def report(step, loss, lr):
        _emit({"step": step, "loss": loss, "lr": lr})

    fitted, losses = nsm_fit(corr, nsm_weights[key], target, args.lr, args.steps, report)
    records = dict(records)
    records.update(bundle.nsm_records(key[0], key[1], fitted))
    io.save_weights(args.out, records)
    _emit({"initial_loss": losses[0], "final_loss": losses[-1], "steps": args.steps})
    return EXIT_OK


def cmd_bench(args) -> int:
    patches = PatchSet.parse(args.patches).sizes
    impls = ("naive", "optimized") if args.impl == "both" else (args.impl,)
    results, diff = bench.run(
        args.hq, args.wq, args.hs, args.ws, args.d, patches, args.iters, impls, args.seed
    )
    report = bench.to_csv(
        results, args.hq, args.wq, args.hs, args.ws, args.d, patches, args.iters, _kernels.get_threads()
    )
    sys.stdout.write(report)
    if args.csv_out:
        with open(args.csv_out, "w", encoding="utf-8") as fh:
            fh.write(report)
    if diff is not None and diff > 1e-4:
        print(f"kernel outputs disagree: max-abs-diff {diff:.3e}", file=sys.stderr)
        return EXIT_TOL
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "oracle": lambda a: cmd_generate(a, impl="naive"),
    "compare": cmd_compare,
    "init-weights": cmd_init_weights,
    "fit": cmd_fit,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None):
            apply_config_file(parser, args)
        _fill_defaults(args)
        if getattr(args, "threads", None):
            _kernels.set_threads(args.threads)
        return COMMANDS[args.command](args)
    except (UsageError, DimensionError, ParameterError) as exc:
        print(f"priormask {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"priormask {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, RangeError) as exc:
        print(f"priormask {args.command}: {exc}", file=sys.stderr)
        return EXIT_TOL


if __name__ == "__main__":
    sys.exit(main())
