"""Command-line interface.

Three commands wrap the library: ``estimate`` (block-structure and covariance
estimation from a data CSV), ``shapley`` (variance shares, either fitted from
an (X, y) sample or computed from known covariance and coefficients), and
``experiment`` (the Monte Carlo harnesses, rendering figures beside their CSV
outputs). Every command writes a JSON manifest that records the full
configuration, seeds, and input digests needed to reproduce the run.

Exit codes: 0 success, 2 usage, 3 data error, 4 numeric error. All numeric
logic lives in the library modules; this module only adapts files and flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import (
    StructureConfig,
    empirical_moments,
    project_block,
    structure_scan,
)
from .dataio import (
    read_matrix_csv,
    read_partition_file,
    read_vector_csv,
    sha256_file,
    write_manifest,
    write_matrix_csv,
    write_partition_file,
    write_table_csv,
)
from .errors import NumericalError
from .experiments import (
    CrbCheckConfig,
    ExperimentConfig,
    run_crb_check,
    run_fig1,
    run_fig2,
    run_recovery,
)
from .partition import Partition, components_of_threshold
from .shapley import GaussianLinearModel, shapley_block, shapley_plugin

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

METHOD_FLAGS = {
    "tot": "tot",
    "cgrid": "cgrid",
    "threshold": "single_threshold",
    "sgrid": "sgrid",
    "fixed": "fixed_threshold",
}

EXPERIMENT_RUNNERS = {
    "fig1": run_fig1,
    "fig2": run_fig2,
    "recovery": run_recovery,
}

_EXPERIMENT_FIELDS = {
    "k_groups": list,
    "samples_per_dim": list,
    "replications": int,
    "block_size_min": int,
    "block_size_max": int,
    "factor_count": int,
    "epsilon": float,
    "method": str,
    "delta": float,
    "max_block": int,
    "noise_sd": float,
    "beta_low": float,
    "beta_high": float,
}

_CRB_FIELDS = {
    "sigma": list,
    "partition": str,
    "n": int,
    "replications": int,
    "known_structure": bool,
    "delta": float,
}


class _DataError(Exception):
    pass


class _UsageError(Exception):
    pass


def _default_threads() -> int:
    raw = os.environ.get("BLOCKSHAP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _structure_config(args) -> StructureConfig:
    try:
        return StructureConfig(
            method=METHOD_FLAGS[args.method],
            delta=args.delta,
            max_block=args.max_block,
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_matrix(path, stage: str) -> np.ndarray:
    try:
        return read_matrix_csv(path)
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        raise _DataError(f"[{stage}] {path}: {exc}") from exc


def _digests(paths: dict[str, str | None]) -> dict:
    return {name: sha256_file(p) for name, p in paths.items() if p}


def _cmd_estimate(args) -> int:
    try:
        data = _load_matrix(args.data, "load-data")
        moments = empirical_moments(data)
    except ValueError as exc:
        raise _DataError(f"[load-data] {exc}") from exc
    cfg = _structure_config(args)
    scan = structure_scan(moments, cfg)
    blocks = project_block(moments.cov_mle, scan.partition)
    out = _out_dir(args)
    part_path = out / "partition.txt"
    cov_path = out / "covariance.csv"
    write_partition_file(part_path, scan.partition)
    write_matrix_csv(cov_path, blocks.reconstruct())
    write_manifest(
        out / "manifest.json",
        {
            "command": "estimate",
            "version": __version__,
            "config": {
                "method": cfg.method,
                "delta": cfg.delta,
                "max_block": cfg.max_block,
                "kappa": scan.kappa,
                "threshold": scan.threshold,
            },
            "inputs": _digests({"data": args.data}),
            "outputs": [part_path.name, cov_path.name],
            "n": moments.n,
            "p": moments.p,
        },
    )
    sizes = scan.partition.group_sizes()
    score = "n/a" if scan.score is None else repr(scan.score)
    print(f"groups: {scan.partition.n_groups}")
    print(f"sizes:  {','.join(str(s) for s in sizes)}")
    print(f"score:  {score}")
    print(f"wrote {part_path} and {cov_path}")
    return EXIT_OK


def _infer_partition(sigma: np.ndarray) -> Partition:
    scale = max(np.abs(sigma).max(), 1.0)
    normalized = sigma / scale
    return components_of_threshold(normalized, 0.0, strict=True)


def _write_eta(out: Path, part: Partition, eta: np.ndarray, render: bool) -> list[str]:
    labels = part.labels
    rows = [(i + 1, int(labels[i]) + 1, float(eta[i])) for i in range(part.p)]
    eta_csv = out / "eta.csv"
    write_table_csv(eta_csv, ("index", "group_id", "eta"), rows)
    eta_json = out / "eta.json"
    eta_json.write_text(
        json.dumps(
            {"eta": [float(v) for v in eta], "partition": part.to_line()}, indent=2
        )
        + "\n",
        encoding="utf-8",
    )
    outputs = [eta_csv.name, eta_json.name]
    if render:
        from .figures import render_eta

        render_eta(eta, labels, out / "eta.png")
        outputs.append("eta.png")
    return outputs


def _cmd_shapley(args) -> int:
    out = _out_dir(args)
    if args.known:
        if not args.cov or not args.beta:
            raise _UsageError("--known mode requires --cov and --beta")
        sigma = _load_matrix(args.cov, "load-cov")
        try:
            beta = read_vector_csv(args.beta)
        except (OSError, ValueError) as exc:
            raise _DataError(f"[load-beta] {args.beta}: {exc}") from exc
        if args.partition:
            try:
                part = read_partition_file(args.partition)
            except (OSError, ValueError) as exc:
                raise _DataError(f"[load-partition] {args.partition}: {exc}") from exc
        else:
            part = _infer_partition(sigma)
        try:
            blocks = project_block(sigma, part)
            off = np.abs(sigma - blocks.reconstruct()).max()
            if off > 1e-12 * max(np.abs(sigma).max(), 1.0):
                raise _DataError(
                    "[validate-cov] covariance has entries outside the partition pattern"
                )
            blocks.logdet  # positive-definiteness check, names the offending group
            model = GaussianLinearModel(0.0, beta, blocks)
        except ValueError as exc:
            raise _DataError(f"[validate-cov] {exc}") from exc
        effects = shapley_block(model)
        config = {"mode": "known", "partition": part.to_line()}
        inputs = _digests({"cov": args.cov, "beta": args.beta, "partition": args.partition})
        fitted: dict = {}
    else:
        if not args.data or not args.output:
            raise _UsageError("fitted mode requires --data and --output")
        x = _load_matrix(args.data, "load-data")
        try:
            y = read_vector_csv(args.output)
        except (OSError, ValueError) as exc:
            raise _DataError(f"[load-output] {args.output}: {exc}") from exc
        cfg = _structure_config(args)
        try:
            part, effects, model = shapley_plugin(x, y, cfg)
        except ValueError as exc:
            raise _DataError(f"[estimate] {exc}") from exc
        config = {
            "mode": "fitted",
            "method": cfg.method,
            "delta": cfg.delta,
            "max_block": cfg.max_block,
            "partition": part.to_line(),
        }
        inputs = _digests({"data": args.data, "output": args.output})
        fitted = {"beta0_hat": model.beta0, "beta_hat": [float(b) for b in model.beta]}
    total = float(effects.eta.sum())
    if abs(total - 1.0) > 1e-10:
        raise NumericalError(f"effects sum to {total!r}; refusing to write outputs")
    outputs = _write_eta(out, part, effects.eta, render=not args.no_figures)
    manifest = {
        "command": "shapley",
        "version": __version__,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    }
    if fitted:
        manifest["fit"] = fitted
    write_manifest(out / "manifest.json", manifest)
    print(f"groups: {part.n_groups}")
    print(f"eta sum: {total!r}")
    print(f"wrote {out / 'eta.csv'}")
    return EXIT_OK


def _validate_config_payload(payload: dict, fields: dict) -> list[str]:
    problems = []
    for key, value in payload.items():
        if key not in fields:
            problems.append(f"unknown field {key!r}")
            continue
        want = fields[key]
        if want is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif want is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif want is bool:
            ok = isinstance(value, bool)
        elif want is list:
            ok = isinstance(value, list)
        else:
            ok = isinstance(value, str)
        if not ok:
            problems.append(f"field {key!r} should be {want.__name__}")
    return problems


def _experiment_config(args) -> ExperimentConfig | CrbCheckConfig:
    payload: dict = {}
    if args.config:
        try:
            payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise _DataError(f"[load-config] {args.config}: {exc}") from exc
        if not isinstance(payload, dict):
            raise _DataError("[load-config] configuration must be a JSON object")
    fields = _CRB_FIELDS if args.kind == "crb" else _EXPERIMENT_FIELDS
    problems = _validate_config_payload(payload, fields)
    if problems:
        raise _DataError("[load-config] invalid configuration: " + "; ".join(problems))

    def override(key, value):
        if value is not None:
            payload[key] = value

    if args.kind == "crb":
        override("n", args.n)
        override("replications", args.reps)
        override("delta", args.delta)
        if args.estimate_structure:
            payload["known_structure"] = False
        sigma = payload.pop("sigma", None)
        kwargs = dict(payload)
        if sigma is not None:
            kwargs["sigma"] = np.asarray(sigma, dtype=float)
        if "partition" in kwargs:
            kwargs["partition_line"] = kwargs.pop("partition")
        try:
            return CrbCheckConfig(seed=args.seed, **kwargs)
        except ValueError as exc:
            raise _DataError(f"[load-config] {exc}") from exc
    override("k_groups", _parse_int_list(args.k_groups))
    override("samples_per_dim", _parse_int_list(args.n_per_dim))
    override("replications", args.reps)
    override("method", METHOD_FLAGS[args.method] if args.method else None)
    override("delta", args.delta)
    override("max_block", args.max_block)
    override("noise_sd", args.noise_sd)
    override("block_size_min", args.block_min)
    override("block_size_max", args.block_max)
    override("factor_count", args.factors)
    override("epsilon", args.epsilon)
    try:
        return ExperimentConfig(seed=args.seed, **payload)
    except (TypeError, ValueError) as exc:
        raise _DataError(f"[load-config] {exc}") from exc


def _parse_int_list(raw: str | None) -> list[int] | None:
    if raw is None:
        return None
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise _DataError(f"[parse-flags] expected comma-separated integers: {exc}") from exc


def _cmd_experiment(args) -> int:
    cfg = _experiment_config(args)
    out = _out_dir(args)
    if args.kind == "crb":
        result = run_crb_check(cfg)
    else:
        result = EXPERIMENT_RUNNERS[args.kind](cfg, threads=args.threads)
    tidy = out / "results.csv"
    write_table_csv(tidy, result.columns, result.table())
    agg_cols, agg_rows = result.aggregated()
    agg = out / "aggregated.csv"
    write_table_csv(agg, agg_cols, agg_rows)
    outputs = [tidy.name, agg.name]
    if not args.no_figures:
        from .figures import RENDERERS

        figure = out / f"{args.kind}.png"
        if args.kind == "crb":  # the scatter wants the per-entry rows
            RENDERERS[args.kind](result.columns, result.table(), figure)
        else:
            RENDERERS[args.kind](agg_cols, agg_rows, figure)
        outputs.append(figure.name)
    write_manifest(
        out / "manifest.json",
        {
            "command": f"experiment {args.kind}",
            "version": __version__,
            "numpy": np.__version__,
            "config": result.config,
            "seed": args.seed,
            "threads": args.threads,
            "inputs": _digests({"config": args.config}),
            "outputs": outputs,
            "elapsed_s": result.elapsed_s,
        },
    )
    print(f"rows: {len(result.rows)}")
    print(f"wrote {tidy} and {agg}")
    return EXIT_OK


def _add_structure_flags(parser, required_method=True):
    parser.add_argument(
        "--method",
        choices=sorted(METHOD_FLAGS),
        required=required_method,
        help="structure selection strategy",
    )
    parser.add_argument("--delta", type=float, default=0.75, help="penalty/threshold exponent in (0, 1)")
    parser.add_argument("--max-block", type=int, default=None, help="largest admissible group (required by sgrid)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockshap",
        description="Block-diagonal covariance selection and Shapley variance shares.",
    )
    parser.add_argument("--version", action="version", version=f"blockshap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate a block structure and covariance from data")
    est.add_argument("--data", required=True, help="CSV of observations (rows) by variables (columns)")
    _add_structure_flags(est)
    est.add_argument("--out", required=True, help="output directory")

    shp = sub.add_parser("shapley", help="compute Shapley variance shares")
    shp.add_argument("--data", help="input sample CSV (fitted mode)")
    shp.add_argument("--output", help="output sample CSV, one column (fitted mode)")
    shp.add_argument("--known", action="store_true", help="use a known covariance and coefficients")
    shp.add_argument("--cov", help="covariance CSV (known mode)")
    shp.add_argument("--beta", help="coefficient CSV (known mode)")
    shp.add_argument("--partition", help="partition file (known mode; inferred from zeros if omitted)")
    _add_structure_flags(shp, required_method=False)
    shp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    shp.add_argument("--out", required=True, help="output directory")

    exp = sub.add_parser("experiment", help="run a seeded Monte Carlo harness")
    exp.add_argument("kind", choices=("fig1", "fig2", "recovery", "crb"))
    exp.add_argument("--seed", type=int, required=True, help="master seed (mandatory; no silent clock seeding)")
    exp.add_argument("--config", help="JSON configuration file (flags override it)")
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--threads", type=int, default=_default_threads(), help="worker cap (or BLOCKSHAP_THREADS)")
    exp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    exp.add_argument("--k-groups", help="comma-separated block counts")
    exp.add_argument("--n-per-dim", help="comma-separated sample-size factors N (n = N*p)")
    exp.add_argument("--reps", type=int, help="replications per cell")
    exp.add_argument("--method", choices=sorted(METHOD_FLAGS), help="structure selection strategy")
    exp.add_argument("--delta", type=float, help="penalty/threshold exponent")
    exp.add_argument("--max-block", type=int, help="largest admissible group")
    exp.add_argument("--noise-sd", type=float, help="output noise level (fig2)")
    exp.add_argument("--block-min", type=int, help="smallest generated block")
    exp.add_argument("--block-max", type=int, help="largest generated block")
    exp.add_argument("--factors", type=int, help="factor count of the block generator")
    exp.add_argument("--epsilon", type=float, help="ridge of the block generator")
    exp.add_argument("--n", type=int, help="sample size per replication (crb)")
    exp.add_argument("--estimate-structure", action="store_true", help="re-estimate the structure per replication (crb)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "shapley" and args.method is None and not args.known:
        args.method = "sgrid" if args.max_block else "cgrid"
    handlers = {
        "estimate": _cmd_estimate,
        "shapley": _cmd_shapley,
        "experiment": _cmd_experiment,
    }
    try:
        return handlers[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: [load] {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"error: [numeric] {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
