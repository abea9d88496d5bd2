"""Command line entry point: generate, fit, ablate, bench.

Exit codes: 0 success, 1 a fitting stage failed, 2 bad input or IO error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import DatasetError, HRMPError
from ..geometry import ModelKind
from ..hypothesis import IkoseConfig, SamplerConfig
from ..pipeline import VARIANTS, FitConfig, ablate
from . import dataset_io
from .metrics import misclassification_error
from .plot import emit_plot
from .runner import run_benchmark
from .synthetic import PRESETS, SyntheticSpec, generate_synthetic

EXIT_OK, EXIT_STAGE, EXIT_IO = 0, 1, 2

log = logging.getLogger("hrmp")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: line {exc.lineno}: {exc.msg}") from exc


def _load_spec(doc, source) -> SyntheticSpec:
    """A spec document is either {"preset": name, "seed": s, ...} or a full SyntheticSpec dict."""
    try:
        if "preset" in doc:
            args = {k: v for k, v in doc.items() if k != "preset"}
            return PRESETS[doc["preset"]](**args)
        return SyntheticSpec.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{source}: invalid synthetic spec: {exc!r}") from exc


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def _fit_config(args) -> FitConfig:
    return FitConfig(
        kind=ModelKind.parse(args.kind),
        sampler=SamplerConfig(hypothesis_count=args.hypotheses, proximity_sigma=args.proximity_sigma),
        ikose=IkoseConfig(k=args.k_ikose),
        propagation_iters=args.iters,
        tau=args.tau,
        damping=args.damping,
        seed=args.seed,
    )


def cmd_generate(args) -> int:
    spec = _load_spec(_read_json(args.spec), args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    points = generate_synthetic(spec)
    dataset_io.write_points(points, args.out)
    log.info("wrote %d points (outlier rate %.2f%%) to %s", len(points), points.meta["outlier_rate"], args.out)
    return EXIT_OK


def _run_fit(args, variant) -> int:
    points = dataset_io.read_points(args.input)
    report = ablate(points, _fit_config(args), variant)
    out = report.to_dict()
    if points.labels is not None:
        out["misclassification_error"] = misclassification_error(report.labels, points.labels)
    if args.out:
        _write_json(out, args.out)
    else:
        json.dump({"counts": out["counts"], "timings": out["timings"],
                   "misclassification_error": out.get("misclassification_error")}, sys.stdout, indent=1)
        sys.stdout.write("\n")
    if args.plot:
        emit_plot(points, report.labels, args.plot)
    return EXIT_OK


def cmd_fit(args) -> int:
    return _run_fit(args, "HMP+IAP")


def cmd_ablate(args) -> int:
    return _run_fit(args, args.variant)


def cmd_bench(args) -> int:
    suite = _read_json(args.suite)
    if not isinstance(suite, dict) or "datasets" not in suite:
        raise DatasetError(f"{args.suite}: suite must be an object with a 'datasets' list")
    specs = [_load_spec(d, args.suite) for d in suite["datasets"]]
    kind = args.kind or suite.get("kind") or specs[0].kind.value
    args.kind = kind
    stats = run_benchmark(specs, _fit_config(args), args.repeats, args.variant)
    _write_json(stats.to_dict(), args.out)
    for d in stats.datasets:
        print(f"{d.name}: mean {d.mean:.2f}  std {d.std:.2f}  median {d.median:.2f}  time {d.mean_time:.3f}s"
              f"  failures {d.failures}/{d.runs}")
    print(f"total average {stats.total_average:.2f}  total median {stats.total_median:.2f}")
    return EXIT_OK


def _add_fit_flags(p, kind_required=True):
    p.add_argument("--kind", required=kind_required, choices=[k.value for k in ModelKind])
    p.add_argument("--hypotheses", type=int, default=5000, help="number of hypotheses M")
    p.add_argument("--k-ikose", type=int, default=None, help="K for the scale estimator (default 10%% of N)")
    p.add_argument("--tau", type=int, default=None, help="neighbours per vertex (default min(30, N'-1))")
    p.add_argument("--iters", type=int, default=3, help="propagation rounds")
    p.add_argument("--damping", type=float, default=0.9)
    p.add_argument("--proximity-sigma", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrmp", description="Robust multi-model fitting.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--spec", required=True, help="JSON spec: a preset name or a full structure list")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.set_defaults(func=cmd_generate)

    for name, func in (("fit", cmd_fit), ("ablate", cmd_ablate)):
        p = sub.add_parser(name, help="fit model instances to a dataset" if name == "fit"
                           else "fit with pipeline components switched off")
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--out", default=None, help="report JSON (default: summary on stdout)")
        p.add_argument("--plot", default=None, help="SVG scatter of the labels")
        if name == "ablate":
            p.add_argument("--variant", required=True, choices=VARIANTS)
        _add_fit_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("bench", help="repeated runs over a suite of synthetic specs")
    p.add_argument("--suite", required=True, help='JSON object {"datasets": [spec, ...]}')
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="HMP+IAP", choices=VARIANTS)
    _add_fit_flags(p, kind_required=False)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HRMPError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
