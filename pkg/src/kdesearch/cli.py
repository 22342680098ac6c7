"""Command-line entry points.

Subcommands: ``generate`` (synthetic annotations), ``evaluate`` (cross-validated
comparison of the four methods), ``run`` (single-episode replay with a trace),
``density`` (dump one conditioned size distribution), ``bench`` (brute-force
versus expansion timings).  Exit codes: 0 success, 1 bad arguments or bad
input data, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from typing import Optional, Sequence

from .dataset import (
    CATEGORIES,
    Dataset,
    SyntheticParams,
    generate_synthetic,
    load_annotations,
    save_annotations,
)
from .errors import DataFormatError, KdeSearchError
from .experiment import ExperimentReport, bench_density, cross_validate, write_raw
from .geometry import BoundingBox
from .search import FINAL, ObjectProposal, SearchConfig, Workspace, run_episode
from .seeding import derived_rng, derived_seed
from .situation import METHODS, condition_size_distributions, learn_model

__all__ = ["main", "load_config"]

# config-file keys, all optional, all overridable by command-line flags
CONFIG_KEYS = {
    "provisional_threshold": float,
    "final_threshold": float,
    "max_iterations": int,
    "grid_size": int,
    "expansion_order": int,
    "smooth_sigma_cells": float,
    "k_min": int,
    "k_max": int,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; this artifact reserves 2
    # for runtime failures, so remap argument problems to 1
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def load_config(path: str) -> dict:
    """Flat ``key = value`` text; '#' comments and blank lines allowed."""
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise DataFormatError(f"{path}:{line_no}: unknown key {key!r}")
            try:
                out[key] = CONFIG_KEYS[key](value.strip())
            except ValueError as exc:
                raise DataFormatError(f"{path}:{line_no}: bad value for {key!r}") from exc
    return out


def _search_config(args, method: Optional[str] = None) -> SearchConfig:
    values = load_config(args.config) if getattr(args, "config", None) else {}
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if method is not None:
        values["method"] = method
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    names = {f.name for f in fields(SearchConfig)}
    return replace(SearchConfig(), **{k: v for k, v in values.items() if k in names})


def _add_config_flags(sub) -> None:
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--provisional-threshold", dest="provisional_threshold", type=float)
    sub.add_argument("--final-threshold", dest="final_threshold", type=float)
    sub.add_argument("--max-iterations", dest="max_iterations", type=int)
    sub.add_argument("--grid-size", dest="grid_size", type=int)
    sub.add_argument("--expansion-order", dest="expansion_order", type=int)
    sub.add_argument("--smooth-sigma-cells", dest="smooth_sigma_cells", type=float)
    sub.add_argument("--k-min", dest="k_min", type=int)
    sub.add_argument("--k-max", dest="k_max", type=int)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _method_list(text: str) -> list[str]:
    methods = [part.strip() for part in text.split(",") if part.strip()]
    for m in methods:
        if m not in METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}; choose from {METHODS}")
    return methods


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kdesearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic annotation dataset")
    gen.add_argument("--n", type=int, required=True, help="number of images")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--params-file", help="key=value overrides for the generator")
    gen.add_argument("--out", required=True, help="output JSON-lines path")

    ev = sub.add_parser("evaluate", help="cross-validated method comparison")
    ev.add_argument("--data", required=True, help="JSON-lines annotations")
    ev.add_argument("--methods", type=_method_list, default=list(METHODS))
    ev.add_argument("--folds", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out-report", help="CSV report path")
    ev.add_argument("--out-raw", help="JSON-lines per-episode records path")
    _add_config_flags(ev)

    run = sub.add_parser("run", help="replay a single search episode")
    run.add_argument("--data", required=True)
    run.add_argument("--image-id", required=True)
    run.add_argument("--method", choices=METHODS, default="MultipoleIC")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--trace-out", help="JSON-lines iteration trace path")
    _add_config_flags(run)

    den = sub.add_parser("density", help="dump one conditioned size distribution")
    den.add_argument("--data", required=True)
    den.add_argument("--category", required=True)
    den.add_argument(
        "--condition",
        default="",
        help="observed sizes as 'cat=w,h;cat2=w,h' fractions of image size",
    )
    den.add_argument("--method", choices=METHODS, default="MultipoleIC")
    den.add_argument("--seed", type=int, default=0)
    den.add_argument("--out-csv")
    den.add_argument("--out-pgm")
    _add_config_flags(den)

    bench = sub.add_parser("bench", help="time brute-force vs expansion grids")
    bench.add_argument("--grid-sizes", type=_int_list, default=[32, 64, 128])
    bench.add_argument("--cluster-sizes", type=_int_list, default=[25, 100, 400])
    bench.add_argument("--order", type=int, default=4)
    bench.add_argument("--repetitions", type=int, default=3)
    bench.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_generate(args) -> int:
    if args.n < 1:
        raise DataFormatError("--n must be at least 1")
    params = SyntheticParams.from_file(args.params_file) if args.params_file else SyntheticParams()
    dataset = generate_synthetic(params, args.n, derived_rng(args.seed, "synthetic"))
    save_annotations(dataset, args.out)
    print(f"wrote {len(dataset.images)} images to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    dataset = load_annotations(args.data)
    config = _search_config(args)
    report = cross_validate(
        dataset, config, args.methods, folds=args.folds, master_seed=args.seed
    )
    if args.out_report:
        report.to_csv(args.out_report)
    if args.out_raw:
        write_raw(report, args.out_raw)
    sys.stdout.write(report.to_text())
    return 0


def _learn_for(args, dataset: Dataset, config: SearchConfig, exclude: Optional[str] = None):
    training = [img for img in dataset.images if img.image_id != exclude]
    return learn_model(
        training,
        config.method,
        grid_size=config.grid_size,
        order=config.expansion_order,
        smooth_sigma_cells=config.smooth_sigma_cells,
        k_range=config.k_range,
        seed=derived_seed(args.seed, "learn", config.method),
    )


def _cmd_run(args) -> int:
    dataset = load_annotations(args.data)
    try:
        truth = dataset.image(args.image_id)
    except KeyError:
        raise DataFormatError(f"image {args.image_id!r} not in {args.data}")
    config = _search_config(args, method=args.method)
    model = _learn_for(args, dataset, config, exclude=args.image_id)
    result = run_episode(model, truth, config, derived_rng(args.seed, truth.image_id))
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            for entry in result.trace:
                fh.write(json.dumps(entry, separators=(",", ":")) + "\n")
    status = "completed" if result.completed else "failed"
    done = sorted(c for c, it in result.localized_at.items() if it is not None)
    print(
        f"{truth.image_id}: {status} after {result.iterations_to_completion} iterations; "
        f"localized {done}"
    )
    return 0


def _parse_condition(text: str, categories: Sequence[str], target: str) -> dict[str, tuple[float, float]]:
    observed: dict[str, tuple[float, float]] = {}
    for clause in text.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        key, sep, value = clause.partition("=")
        cat = key.strip()
        parts = value.split(",")
        if not sep or len(parts) != 2:
            raise DataFormatError(f"bad condition clause {clause!r}; expected 'cat=w,h'")
        if cat not in categories:
            raise DataFormatError(f"unknown category {cat!r} in condition")
        if cat == target:
            raise DataFormatError(f"cannot condition {target!r} on itself")
        try:
            w, h = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise DataFormatError(f"bad condition clause {clause!r}") from exc
        if not (0.0 < w and 0.0 < h):
            raise DataFormatError(f"condition sizes must be positive in {clause!r}")
        observed[cat] = (w, h)
    return observed


def _cmd_density(args) -> int:
    dataset = load_annotations(args.data)
    if args.category not in dataset.categories:
        raise DataFormatError(f"unknown category {args.category!r}")
    config = _search_config(args, method=args.method)
    model = _learn_for(args, dataset, config)
    observed = _parse_condition(args.condition, dataset.categories, args.category)

    # sizes are fractions of a unit image; centers default to the middle
    ws = Workspace(width=1.0, height=1.0)
    for cat, (w, h) in observed.items():
        ws.proposals[cat] = ObjectProposal(
            category=cat, box=BoundingBox(0.5, 0.5, w, h), score=1.0, status=FINAL
        )
    outcome = condition_size_distributions(model, ws, derived_rng(args.seed, "density"))
    grid = outcome.size_grids[args.category]
    if args.out_csv:
        grid.to_csv(args.out_csv)
    if args.out_pgm:
        grid.to_pgm(args.out_pgm)
    peak = grid.values.max()
    print(
        f"{args.category} given {sorted(observed) if observed else 'nothing'}: "
        f"grid {grid.spec.size}x{grid.spec.size}, peak cell mass {peak:.6g}, "
        f"prior fallbacks {outcome.prior_fallbacks}"
    )
    return 0


def _cmd_bench(args) -> int:
    result = bench_density(
        grid_sizes=args.grid_sizes,
        cluster_sizes=args.cluster_sizes,
        order=args.order,
        repetitions=args.repetitions,
        seed=args.seed,
    )
    sys.stdout.write(result.to_text())
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "run": _cmd_run,
    "density": _cmd_density,
    "bench": _cmd_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KdeSearchError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
