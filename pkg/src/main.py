"""
bartvs - command-line entry point.

Sub-commands:
    fit     fit a sum-of-trees model to a CSV and report every importance measure
    select  run one variable-selection method on a CSV
    bench   replicate a synthetic scenario and tabulate selection metrics
"""
import argparse
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

try:
    from .config import constants as C
    from .config.settings import Settings
    from .core.importance import IMPORTANCE_FUNCTIONS, lemma_bound_check
    from .core.loo import elpd_loo
    from .core.sampler import SamplerConfig, fit, probabilities
    from .core.selection import parse_method, run_selection
    from .core.simbench import make_scenario, run_benchmark
    from .utils.dataset import load_csv
    from .utils.log import configure_logging
    from .utils.validators import parse_type_overrides, validate_output_format, validate_positive_int
except ImportError:
    # Fallback for direct execution
    from src.config import constants as C
    from src.config.settings import Settings
    from src.core.importance import IMPORTANCE_FUNCTIONS, lemma_bound_check
    from src.core.loo import elpd_loo
    from src.core.sampler import SamplerConfig, fit, probabilities
    from src.core.selection import parse_method, run_selection
    from src.core.simbench import make_scenario, run_benchmark
    from src.utils.dataset import load_csv
    from src.utils.log import configure_logging
    from src.utils.validators import parse_type_overrides, validate_output_format, validate_positive_int


def _error_payload(kind: str, message: str) -> str:
    return json.dumps({"error": {"type": kind, "message": message}}, sort_keys=True)


class JsonArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors are machine-readable."""

    def error(self, message: str) -> None:
        sys.stderr.write(_error_payload("UsageError", message) + "\n")
        self.exit(2)


def _clean(obj: Any) -> Any:
    """Plain JSON values: numpy scalars and arrays unwrapped, non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(payload: Dict[str, Any]) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"


def _frame_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue()


def _write(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {path}")


def _sampler_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    names = {"trees": "n_trees", "burn": "n_burn", "keep": "n_keep", "thin": "thin"}
    return {
        field: getattr(args, flag)
        for flag, field in names.items()
        if getattr(args, flag, None) is not None
    }


def _load(args: argparse.Namespace):
    overrides = parse_type_overrides(args.types) if args.types else None
    return load_csv(Path(args.dataset), args.response, overrides)


# -- commands ----------------------------------------------------------------------


def cmd_fit(args: argparse.Namespace, settings: Settings) -> Dict[str, Any]:
    """Fit one chain and report the sigma trace and all importance measures."""
    data = _load(args)
    cfg = SamplerConfig.from_settings(settings, seed=args.seed, dart=args.dart, **_sampler_overrides(args))
    chain = fit(data, cfg)

    importance: Dict[str, Any] = {}
    for kind, func in IMPORTANCE_FUNCTIONS.items():
        try:
            importance[kind] = func(chain).to_dict()
        except ValueError as e:
            logger.warning(f"Skipping {kind}: {e}")
            importance[kind] = {"kind": kind, "error": str(e)}

    payload: Dict[str, Any] = {
        "command": "fit",
        "dataset": {
            "path": str(args.dataset),
            "response": data.response_name,
            "n": data.n,
            "p": data.p,
            "columns": list(data.columns),
            "types": list(data.types),
            "fingerprint": data.fingerprint(),
        },
        "config": cfg.to_dict(),
        "response_kind": chain.kind,
        "n_draws": len(chain),
        "importance": importance,
    }
    if chain.is_probit:
        fitted = probabilities(np.mean([d.fit for d in chain.draws], axis=0))
        payload["fitted_probability"] = {
            "min": float(fitted.min()),
            "max": float(fitted.max()),
            "mean": float(fitted.mean()),
        }
    else:
        sigma = chain.sigma_trace()
        payload["sigma"] = {
            "mean": float(sigma.mean()),
            "sd": float(sigma.std(ddof=1)) if sigma.size > 1 else 0.0,
            "quantiles": dict(zip(("q025", "q500", "q975"), np.quantile(sigma, [0.025, 0.5, 0.975]).tolist())),
            "trace": sigma.tolist(),
        }
    try:
        reff = settings.loo_defaults()["reff"]
        payload["loo"] = {**elpd_loo(chain, data, reff).to_dict(), "reff": reff}
    except ValueError as e:
        payload["loo"] = {"error": str(e)}
    try:
        check = lemma_bound_check(chain)
        payload["vip_approximation_bound"] = {
            "bound": check.bound.tolist(),
            "difference": check.difference.tolist(),
            "holds": check.all_hold,
        }
    except ValueError as e:
        payload["vip_approximation_bound"] = {"error": str(e)}
    return payload


def _fit_csv(payload: Dict[str, Any]) -> str:
    dataset = payload["dataset"]
    frame = pd.DataFrame({"name": dataset["columns"], "type": dataset["types"]})
    for kind, report in payload["importance"].items():
        scores = report.get("scores")
        frame[kind] = [scores[name] for name in dataset["columns"]] if scores else np.nan
    return _frame_csv(frame)


_METHOD_OPTIONS = {
    "alpha": ("alpha", C.PERMUTATION_METHOD_KINDS.keys()),
    "L": ("L", C.PERMUTATION_METHOD_KINDS.keys()),
    "L_rep": ("L_rep", C.PERMUTATION_METHOD_KINDS.keys()),
    "split": ("split_ratio", (C.METHOD_BACKWARD, C.METHOD_ABC)),
    "threshold": ("threshold", (C.METHOD_DART, C.METHOD_ABC)),
    "n_abc": ("n_abc", (C.METHOD_ABC,)),
}


def cmd_select(args: argparse.Namespace, settings: Settings) -> Dict[str, Any]:
    """Run one selection method and return its report."""
    base, _ = parse_method(args.method)
    options: Dict[str, Any] = {}
    for flag, (option, methods) in _METHOD_OPTIONS.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if base not in methods:
            raise ValueError(f"--{flag.replace('_', '-')} does not apply to method {args.method}")
        options[option] = value
    if args.trees is not None:
        options["trees"] = args.trees
    overrides = {k: v for k, v in _sampler_overrides(args).items() if k != "n_trees"}

    data = _load(args)
    report = run_selection(
        args.method,
        data,
        seed=args.seed,
        n_jobs=args.threads,
        settings=settings,
        sampler_overrides=overrides,
        **options,
    )
    payload = report.to_dict()
    payload["command"] = "select"
    payload["dataset"] = {"path": str(args.dataset), "n": data.n, "p": data.p, "fingerprint": data.fingerprint()}
    return payload


def _select_csv(payload: Dict[str, Any]) -> str:
    frame = pd.DataFrame(payload["predictors"], columns=["name", "index", "score", "threshold", "selected"])
    return _frame_csv(frame)


def cmd_bench(args: argparse.Namespace, settings: Settings) -> Dict[str, Any]:
    """Run a replicated benchmark; returns the JSON payload and the two CSV tables."""
    scenario = make_scenario(args.scenario, args.n, args.p, args.sigma2)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    result = run_benchmark(
        scenario,
        methods,
        args.reps,
        seed=args.seed,
        n_jobs=args.threads,
        settings=settings,
        sampler_overrides=_sampler_overrides(args),
    )
    payload = result.to_dict(timings=args.timings)
    payload["command"] = "bench"
    payload["_tables"] = {
        "table": _frame_csv(result.table_frame(timings=args.timings)),
        "long": _frame_csv(result.long_frame()),
    }
    return payload


# -- parser ------------------------------------------------------------------------


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    ok, error = validate_positive_int(value, "value")
    if not ok:
        raise argparse.ArgumentTypeError(error)
    return value


def _output_format(text: str) -> str:
    ok, error = validate_output_format(text)
    if not ok:
        raise argparse.ArgumentTypeError(error)
    return text


def build_parser() -> JsonArgumentParser:
    common = JsonArgumentParser(add_help=False)
    common.add_argument("--seed", type=_non_negative_int, default=C.DEFAULT_SEED, help="Master seed")
    common.add_argument("--threads", type=_positive_int, default=1, help="Worker processes")
    common.add_argument("--out", default=None, help="Output path (prefix for bench)")
    common.add_argument("--format", type=_output_format, default="json", help="json or csv")
    common.add_argument("--config", default=None, help="JSON settings file")
    common.add_argument("--timings", action="store_true", help="Include wall-clock timings")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")

    sampler = JsonArgumentParser(add_help=False)
    sampler.add_argument("--trees", type=_positive_int, default=None)
    sampler.add_argument("--burn", type=_non_negative_int, default=None)
    sampler.add_argument("--keep", type=_positive_int, default=None)

    data = JsonArgumentParser(add_help=False)
    data.add_argument("dataset", help="CSV file with a header row")
    data.add_argument("--response", default="y", help="Response column name")
    data.add_argument("--types", default=None, help="Type overrides: name=binary,name=continuous")

    parser = JsonArgumentParser(prog=C.APP_NAME, description="BART variable selection")
    parser.add_argument("--version", action="version", version=f"{C.APP_NAME} {C.APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit_parser = sub.add_parser("fit", parents=[common, sampler, data], help="Fit and report importance")
    fit_parser.add_argument("--thin", type=_positive_int, default=None)
    fit_parser.add_argument("--dart", action="store_true", help="Dirichlet split probabilities")

    select_parser = sub.add_parser("select", parents=[common, sampler, data], help="Select predictors")
    select_parser.add_argument("--method", required=True, help=", ".join(C.SELECTION_METHODS))
    select_parser.add_argument("--alpha", type=float, default=None)
    select_parser.add_argument("--L", dest="L", type=_positive_int, default=None)
    select_parser.add_argument("--L-rep", dest="L_rep", type=_positive_int, default=None)
    select_parser.add_argument("--split", type=float, default=None)
    select_parser.add_argument("--threshold", type=float, default=None)
    select_parser.add_argument("--n-abc", dest="n_abc", type=_positive_int, default=None)

    bench_parser = sub.add_parser("bench", parents=[common], help="Replicated scenario benchmark")
    bench_parser.add_argument("--scenario", required=True, help=", ".join(C.SCENARIO_IDS))
    bench_parser.add_argument("--n", type=_positive_int, default=500)
    bench_parser.add_argument("--p", type=_positive_int, default=None)
    bench_parser.add_argument("--sigma2", type=float, default=1.0)
    bench_parser.add_argument("--reps", type=_positive_int, default=1)
    bench_parser.add_argument("--methods", default=C.METHOD_PERMUTE_VIP, help="Comma-separated methods")
    bench_parser.add_argument("--burn", type=_non_negative_int, default=None)
    bench_parser.add_argument("--keep", type=_positive_int, default=None)
    return parser


COMMANDS: Dict[str, Callable[[argparse.Namespace, Settings], Dict[str, Any]]] = {
    "fit": cmd_fit,
    "select": cmd_select,
    "bench": cmd_bench,
}


def _emit(args: argparse.Namespace, payload: Dict[str, Any]) -> None:
    if args.command == "bench":
        tables = payload.pop("_tables")
        if args.out is None:
            sys.stdout.write(tables["table"] if args.format == "csv" else dumps(payload))
            return
        _write(dumps(payload), f"{args.out}.json")
        _write(tables["table"], f"{args.out}_table.csv")
        _write(tables["long"], f"{args.out}_long.csv")
        return
    if args.format == "csv":
        text = _fit_csv(payload) if args.command == "fit" else _select_csv(payload)
    else:
        text = dumps(payload)
    _write(text, args.out)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and write its report."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        settings = Settings(Path(args.config)) if args.config else Settings()
        started = time.perf_counter()
        payload = COMMANDS[args.command](args, settings)
        if args.timings:
            payload["timings"] = {"total_seconds": time.perf_counter() - started}
        _emit(args, payload)
    except (ValueError, OSError, KeyError) as e:
        logger.debug(f"{args.command} failed: {e!r}")
        sys.stderr.write(_error_payload(type(e).__name__, str(e)) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
