"""Command-line front end: estimator dispatch, comparison tables, sweeps,
the cumulative-sum visual-tool data, and synthetic-sample generation.

Exit codes: 0 success, 1 usage or input-parsing error, 2 estimation
failure.  JSON outputs carry full-precision values; the human-readable
comparison table rounds to 2 decimals (1 on request) because the
estimators only approximate the target to begin with.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .io import PsaFormatError, read_psa_csv, write_psa_csv, write_provenance
from .models import (
    DEFAULT_WTP,
    LinearGaussianSpec,
    NonlinearToySpec,
    generate_psa,
    model_for,
    spec_from_dict,
    spec_to_dict,
)
from .nested_mc import nested_mc_evppi
from .psa import EstimationError, EvppiEstimate, ParamSubset, PsaSample, evpi
from .regression import BootstrapConfig, bootstrap_estimates, gam_evppi, gp_evppi
from .single_param import cumsum_curve, sad_evppi, so_choose_bins, so_evppi

METHOD_ORDER = ("SO", "SAD", "GP", "GAM", "MC")


class _UsageError(Exception):
    """Bad flags or bad input files; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _emit_json(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _load_sample(path: str, k: float) -> PsaSample:
    return read_psa_csv(path, k=k)


def _load_spec(token: str):
    if token == "linear-gaussian":
        return LinearGaussianSpec()
    if token == "toy":
        return NonlinearToySpec()
    path = Path(token)
    if not path.exists():
        raise _UsageError(
            f"unknown model {token!r}: expected 'linear-gaussian', 'toy' or a JSON file"
        )
    try:
        return spec_from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise _UsageError(f"cannot parse model spec {token}: {exc}") from exc


def _subset_from_names(sample: PsaSample, names: list[str]) -> ParamSubset:
    return ParamSubset.from_names(names, sample.param_names)


def _split_params(raw: str) -> list[str]:
    names = [n.strip() for n in raw.split(",") if n.strip()]
    if not names:
        raise _UsageError("no parameter names given")
    return names


def _interactions_flag(choice: str) -> bool | None:
    return {"auto": None, "none": False, "pairwise": True}[choice]


def _parse_changes(raw: str | None, names: list[str]) -> dict[str, int]:
    """--changes accepts a single count or name=count pairs."""
    if raw is None:
        return {}
    raw = raw.strip()
    if "=" not in raw:
        try:
            d = int(raw)
        except ValueError:
            raise _UsageError(f"--changes expects an integer or name=int pairs, got {raw!r}")
        return {n: d for n in names}
    out = {}
    for item in raw.split(","):
        name, _, val = item.partition("=")
        name = name.strip()
        try:
            out[name] = int(val)
        except ValueError:
            raise _UsageError(f"bad --changes entry {item!r}")
    return out


def _with_bootstrap(estimate: EvppiEstimate, closure, sample, args) -> EvppiEstimate:
    if not args.bootstrap:
        return estimate
    config = BootstrapConfig(n_replicates=args.bootstrap, seed=args.seed)
    values, failures = bootstrap_estimates(
        closure, sample, config, n_threads=args.threads
    )
    diag = dict(estimate.diagnostics)
    diag["bootstrap_failures"] = failures
    return EvppiEstimate(
        value=estimate.value,
        method=estimate.method,
        std_error=float(np.std(values, ddof=1)),
        diagnostics=diag,
    )


def _single_param_index(sample: PsaSample, names: list[str], method: str) -> int:
    if len(names) != 1:
        raise _UsageError(
            f"method {method} handles a single parameter only, got {len(names)}"
        )
    return sample.param_index(names[0])


def _estimate_for_method(sample: PsaSample, method: str, names: list[str], args):
    """Run one estimator; returns (estimate, extra-warnings list)."""
    warnings_out: list[str] = []
    if method == "so":
        p = _single_param_index(sample, names, "so")
        if args.bins is not None:
            n_bins = args.bins
            chosen_bias = None
        else:
            threshold = args.bias_threshold
            if args.bias_threshold_relative is not None:
                threshold = args.bias_threshold_relative * evpi(sample.nb)
            n_bins, chosen_bias = so_choose_bins(
                sample, p, threshold=threshold, seed=args.seed
            )
        estimate = so_evppi(sample, p, n_bins)
        if chosen_bias is not None:
            diag = dict(estimate.diagnostics)
            diag["chosen_bias"] = chosen_bias
            diag["bin_selection"] = "bias-threshold"
            estimate = EvppiEstimate(
                value=estimate.value, method=estimate.method,
                std_error=estimate.std_error, diagnostics=diag,
            )
        return _with_bootstrap(
            estimate, lambda s: so_evppi(s, p, n_bins), sample, args
        ), warnings_out

    if method == "sad":
        if args.changes is None:
            raise _UsageError(
                "method sad needs --changes: the number of decision changes is a "
                "judgment call read off the visual tool and is never defaulted"
            )
        p = _single_param_index(sample, names, "sad")
        changes = _parse_changes(args.changes, names).get(names[0])
        if changes is None:
            raise _UsageError(f"--changes does not cover parameter {names[0]!r}")
        if changes == 0:
            warnings_out.append("parameter declared non-influential: estimate is 0")
        estimate = sad_evppi(sample, p, changes)
        return _with_bootstrap(
            estimate, lambda s: sad_evppi(s, p, changes), sample, args
        ), warnings_out

    subset = _subset_from_names(sample, names)
    bootstrap = (
        BootstrapConfig(n_replicates=args.bootstrap, seed=args.seed)
        if args.bootstrap
        else None
    )
    if method == "gam":
        return gam_evppi(
            sample,
            subset,
            interactions=_interactions_flag(args.interactions),
            bootstrap=bootstrap,
            n_threads=args.threads,
        ), warnings_out
    if method == "gp":
        return gp_evppi(
            sample, subset, seed=args.seed, bootstrap=bootstrap, n_threads=args.threads
        ), warnings_out
    raise _UsageError(f"unknown method {method!r}")


def cmd_evppi(args) -> int:
    sample = _load_sample(args.file, k=args.k)
    names = _split_params(args.params)
    estimate, notes = _estimate_for_method(sample, args.method, names, args)
    payload = {
        "subset": names,
        "k": args.k,
        **estimate.to_dict(),
    }
    if notes:
        payload["warnings"] = notes
    _emit_json(payload)
    return 0


def _compare_cell(sample, method, names, args, model=None):
    try:
        if method == "MC":
            if model is None:
                return {"error": "nested MC needs a model spec (--model)"}
            gen = model_for(model)
            subset = ParamSubset.from_names(names, gen.param_names)
            est = nested_mc_evppi(
                gen, subset, k=args.k,
                n_outer=args.mc_outer, n_inner=args.mc_inner, seed=args.seed,
            )
            return est.to_dict()
        if method in ("SO", "SAD") and len(names) != 1:
            return {"error": "single-parameter method"}
        if method == "SAD":
            changes = _parse_changes(args.changes, names)
            if names[0] not in changes:
                return {"error": "changes not provided"}
        est, _ = _estimate_for_method(sample, method.lower(), names, args)
        return est.to_dict()
    except (_UsageError, ValueError, EstimationError) as exc:
        return {"error": str(exc)}


def _format_cell(cell: dict, decimals: int) -> str:
    if "error" in cell:
        return "-"
    value = round(cell["value"], decimals)
    if cell.get("std_error") is not None:
        return f"{value:.{decimals}f} ({round(cell['std_error'], decimals):.{decimals}f})"
    return f"{value:.{decimals}f}"


def cmd_compare(args) -> int:
    sample = _load_sample(args.file, k=args.k)
    model = _load_spec(args.model) if args.model else None
    subsets = [_split_params(chunk) for chunk in args.params.split(";")]
    for names in subsets:
        _subset_from_names(sample, names)  # fail fast on unknown names

    methods = list(METHOD_ORDER) if model is not None else [
        m for m in METHOD_ORDER if m != "MC"
    ]
    rows = []
    for names in subsets:
        cells = {m: _compare_cell(sample, m, names, args, model=model) for m in methods}
        rows.append({"subset": names, "cells": cells})

    report = {
        "k": args.k,
        "n_sims": sample.n_sims,
        "seed": args.seed,
        "bootstrap": args.bootstrap,
        "methods": methods,
        "rows": rows,
    }
    if args.format == "json":
        _emit_json(report)
        return 0

    label_width = max(len(",".join(r["subset"])) for r in rows) + 2
    header = "parameter".ljust(label_width) + "".join(m.rjust(16) for m in methods)
    print(header)
    for row in rows:
        line = ",".join(row["subset"]).ljust(label_width)
        line += "".join(
            _format_cell(row["cells"][m], args.decimals).rjust(16) for m in methods
        )
        print(line)
    return 0


def _k_grid(args) -> np.ndarray:
    if args.k_list:
        grid = np.array([float(x) for x in args.k_list.split(",")])
    else:
        try:
            lo, hi, step = (float(x) for x in args.k_grid.split(":"))
        except ValueError:
            raise _UsageError("--k-grid expects min:max:step")
        if step <= 0 or hi < lo:
            raise _UsageError("--k-grid expects min <= max and step > 0")
        grid = np.arange(lo, hi + 0.5 * step, step)
    if grid.size < 1 or np.any(~np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
        raise _UsageError("willingness-to-pay grid must be finite and strictly increasing")
    if np.any(grid < 0):
        raise _UsageError("willingness-to-pay values must be >= 0")
    return grid


def cmd_sweep(args) -> int:
    if args.model:
        spec = _load_spec(args.model)
        sample = generate_psa(spec, args.sims, seed=args.seed, k=float(args.k))
    else:
        sample = _load_sample(args.file, k=args.k)
    if sample.effects is None:
        raise _UsageError(
            "sweep needs the effect/cost decomposition: an nb-only input fixes k, "
            "so net benefit cannot be rebuilt across the grid"
        )
    subsets = [_split_params(chunk) for chunk in args.params.split(";")]
    grid = _k_grid(args)

    evpi_curve = []
    evppi_curves: dict[str, list[float]] = {",".join(n): [] for n in subsets}
    for k in grid:
        at_k = sample.at_wtp(float(k))
        evpi_curve.append(evpi(at_k.nb))
        for names in subsets:
            est, _ = _estimate_for_method(at_k, args.method, names, args)
            evppi_curves[",".join(names)].append(est.value)

    payload = {
        "k_grid": grid.tolist(),
        "method": args.method,
        "evpi": evpi_curve,
        "evppi": evppi_curves,
    }
    if args.model:
        mean_e = sample.effects.mean(axis=0)
        mean_c = sample.costs.mean(axis=0)
        delta_e = mean_e[1] - mean_e[0]
        payload["k_star"] = float((mean_c[1] - mean_c[0]) / delta_e) if delta_e != 0 else None
    _emit_json(payload)
    return 0


def cmd_vistool(args) -> int:
    sample = _load_sample(args.file, k=args.k)
    p = sample.param_index(args.param)
    t, t_prime = args.treatments
    curve = cumsum_curve(sample, p, t, t_prime)
    lines = ["phi,cumsum"]
    lines += [f"{repr(float(x))},{repr(float(c))}" for x, c in zip(curve.phi, curve.values)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args) -> int:
    spec = _load_spec(args.model)
    sample = generate_psa(spec, args.sims, seed=args.seed, k=float(args.k))
    out = Path(args.out)
    try:
        write_psa_csv(out, sample)
        write_provenance(
            out.with_suffix(out.suffix + ".provenance.json"),
            {
                "spec": spec_to_dict(spec),
                "n_sims": args.sims,
                "seed": args.seed,
                "k": args.k,
            },
        )
    except OSError as exc:
        raise _UsageError(f"cannot write {out}: {exc}") from exc
    return 0


def _add_common(p, bootstrap_default=0):
    p.add_argument("--k", type=float, default=DEFAULT_WTP,
                   help="willingness to pay (default 20000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for bootstrap replicates; results are "
                        "identical at any setting")
    p.add_argument("--bootstrap", type=int, default=bootstrap_default,
                   help="bootstrap replicates for standard errors (0 = skip)")
    p.add_argument("--bins", type=int, default=None,
                   help="bin count for the bin-averaging method (default: bias-guided)")
    p.add_argument("--bias-threshold", type=float, default=0.1,
                   help="upward-bias cap, in currency units, for automatic bin choice")
    p.add_argument("--bias-threshold-relative", type=float, default=None,
                   help="bias cap as a fraction of EVPI (overrides --bias-threshold)")
    p.add_argument("--changes", default=None,
                   help="decision changes for the segmentation method: a count, "
                        "or name=count pairs")
    p.add_argument("--interactions", choices=("auto", "none", "pairwise"),
                   default="auto", help="spline interaction structure")


def build_parser() -> _Parser:
    parser = _Parser(prog="voikit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evppi", help="estimate EVPPI for one parameter subset")
    p.add_argument("--file", required=True, help="PSA CSV file")
    p.add_argument("--method", required=True, choices=("so", "sad", "gam", "gp"))
    p.add_argument("--params", required=True,
                   help="comma-separated parameter names (single name for so/sad)")
    _add_common(p)
    p.set_defaults(func=cmd_evppi)

    p = sub.add_parser("compare", help="run all applicable methods side by side")
    p.add_argument("--file", required=True)
    p.add_argument("--params", required=True,
                   help="semicolon-separated subsets, each a comma-separated name list")
    p.add_argument("--model", default=None,
                   help="model spec (name or JSON path); enables the nested-MC column")
    p.add_argument("--mc-outer", type=int, default=1000)
    p.add_argument("--mc-inner", type=int, default=1000)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--decimals", type=int, choices=(1, 2), default=2)
    _add_common(p, bootstrap_default=200)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="EVPI/EVPPI across willingness-to-pay values")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--file")
    group.add_argument("--model")
    p.add_argument("--params", required=True)
    p.add_argument("--method", choices=("so", "sad", "gam", "gp"), default="gam")
    p.add_argument("--k-grid", default="0:50000:2500", help="min:max:step")
    p.add_argument("--k-list", default=None, help="explicit comma-separated grid")
    p.add_argument("--sims", type=int, default=10_000,
                   help="simulations when generating from a model spec")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("vistool", help="cumulative-sum curve data for one parameter")
    p.add_argument("--file", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--treatments", type=int, nargs=2, default=(1, 0),
                   metavar=("T", "T_PRIME"))
    p.add_argument("--k", type=float, default=DEFAULT_WTP)
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_vistool)

    p = sub.add_parser("simulate", help="generate a synthetic PSA CSV")
    p.add_argument("--model", required=True,
                   help="'linear-gaussian', 'toy', or a model-spec JSON path")
    p.add_argument("--sims", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=float, default=DEFAULT_WTP)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (_UsageError, PsaFormatError) as exc:
        print(f"voikit: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"voikit: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"voikit: error: {exc}", file=sys.stderr)
        return 1
    except EstimationError as exc:
        print(f"voikit: estimation failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
