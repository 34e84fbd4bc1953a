"""Command-line surface: ingestion, fitting, intervals, tests, simulations.

Design rules: every subcommand validates its inputs before computing,
output files are written only after all computation succeeds, and any
two identical invocations produce byte-identical outputs (no timestamps,
no machine-dependent fields; worker counts never change results).

Exit codes: 0 success, 1 usage error, 2 computation error (with a
machine-readable JSON error description when --error-json is given).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np
from scipy import stats

from .analytic import (
    TubeConstants,
    bonferroni_cv,
    ridge_interval_scales,
    tube_cv,
)
from .bootstrap import (
    beran_critical_values,
    critical_value_bs,
    critical_value_contrast,
    parametric_bootstrap,
    stepdown_quantile_provider,
)
from .errors import (
    EmptyFile,
    EmptyGrid,
    NonPositiveShift,
    ParseError,
    ShapeMismatch,
    SpimaxError,
)
from .estimation import cholesky_residuals, eb_random_effects, eblup
from .maxstat import SCALE_FLOOR, build_spi, single_step_test, step_down_test
from .mc import build_joint_normal, critical_value_mc, loading_matrix
from .model import (
    FHM,
    NERM,
    BlockLmmData,
    ClusterBlock,
    cluster_mean_spec,
    validate,
)
from .simulate import (
    ScenarioConfig,
    run_fwer_experiment,
    run_power_experiment,
    run_spi_experiment,
)
from .util import derive_seed

MODEL_TAGS = {"nerm": NERM, "fhm": FHM}
TUBE_KEYS = ("kappa0", "zeta0", "kappa2", "zeta1", "m0", "euler", "xi0", "eta0", "nu")
SIM_PRESETS = ("table1-row", "table2-row", "power", "fwer")


# ----------------------------------------------------------------------
# file formats
# ----------------------------------------------------------------------

def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise EmptyFile(f"{path} has no content")
    return rows


def _float_cell(text: str, row: int, col: str, path) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(
            f"{path}: row {row}, column {col!r}: {text!r} is not a number"
        ) from exc


def _check_header(header: list[str], expected: list[str], path) -> None:
    if [h.strip() for h in header] != expected:
        raise ParseError(
            f"{path}: header must be {','.join(expected)!r}, got {','.join(header)!r}"
        )


def _covariate_names(header: list[str], tail: int) -> list[str]:
    p = len(header) - 2 - tail
    if p < 1:
        raise ParseError("need at least one covariate column x1")
    return [f"x{i + 1}" for i in range(p)]


def ingest_unit_csv(path) -> BlockLmmData:
    """Unit-level CSV (header cluster,y,x1,...,xp), grouped by cluster.

    Clusters keep first-appearance order; an intercept column is
    prepended to the covariates.
    """
    rows = _read_rows(path)
    names = _covariate_names(rows[0], 0)
    _check_header(rows[0], ["cluster", "y"] + names, path)
    if len(rows) == 1:
        raise EmptyFile(f"{path} has a header but no data rows")
    groups: dict[str, list[list[float]]] = {}
    order: list[str] = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(rows[0]):
            raise ParseError(f"{path}: row {r} has {len(row)} fields, expected {len(rows[0])}")
        cid = row[0].strip()
        rec = [_float_cell(row[1], r, "y", path)] + [
            _float_cell(cell, r, name, path) for cell, name in zip(row[2:], names)
        ]
        if cid not in groups:
            groups[cid] = []
            order.append(cid)
        groups[cid].append(rec)
    blocks = []
    for cid in order:
        arr = np.array(groups[cid])
        X = np.column_stack([np.ones(arr.shape[0]), arr[:, 1:]])
        blocks.append(ClusterBlock(cluster_id=cid, y=arr[:, 0], X=X))
    data = BlockLmmData(model_tag=NERM, clusters=tuple(blocks))
    validate(data)
    return data


def ingest_area_csv(path) -> BlockLmmData:
    """Area-level CSV (header area,y,x1,...,xp,error_var), one row per area."""
    rows = _read_rows(path)
    names = _covariate_names(rows[0], 1)
    _check_header(rows[0], ["area", "y"] + names + ["error_var"], path)
    if len(rows) == 1:
        raise EmptyFile(f"{path} has a header but no data rows")
    blocks = []
    seen = set()
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(rows[0]):
            raise ParseError(f"{path}: row {r} has {len(row)} fields, expected {len(rows[0])}")
        cid = row[0].strip()
        if cid in seen:
            raise ParseError(f"{path}: row {r}: duplicate area {cid!r}")
        seen.add(cid)
        y = _float_cell(row[1], r, "y", path)
        covs = [_float_cell(cell, r, nm, path) for cell, nm in zip(row[2:-1], names)]
        ev = _float_cell(row[-1], r, "error_var", path)
        X = np.array([[1.0] + covs])
        blocks.append(ClusterBlock(cluster_id=cid, y=[y], X=X, known_error_var=ev))
    data = BlockLmmData(model_tag=FHM, clusters=tuple(blocks))
    validate(data)
    return data


def export_unit_csv(data: BlockLmmData) -> str:
    """Full-precision unit CSV text that re-ingests to the same dataset."""
    names = [f"x{i + 1}" for i in range(data.p)]
    buf = io.StringIO()
    buf.write(",".join(["cluster", "y"] + names) + "\n")
    for c in data.clusters:
        for j in range(c.n):
            covs = [repr(float(v)) for v in c.X[j, 1:]]
            buf.write(",".join([str(c.cluster_id), repr(float(c.y[j]))] + covs) + "\n")
    return buf.getvalue()


def export_area_csv(data: BlockLmmData) -> str:
    names = [f"x{i + 1}" for i in range(data.p)]
    buf = io.StringIO()
    buf.write(",".join(["area", "y"] + names + ["error_var"]) + "\n")
    for c in data.clusters:
        covs = [repr(float(v)) for v in c.X[0, 1:]]
        buf.write(
            ",".join(
                [str(c.cluster_id), repr(float(c.y[0]))]
                + covs
                + [repr(float(c.known_error_var))]
            )
            + "\n"
        )
    return buf.getvalue()


def ingest_data(model: str, path) -> BlockLmmData:
    if model not in MODEL_TAGS:
        raise ParseError(f"model must be one of {sorted(MODEL_TAGS)}, got {model!r}")
    return ingest_unit_csv(path) if model == "nerm" else ingest_area_csv(path)


def read_matrix_csv(path) -> np.ndarray:
    """Headerless numeric CSV as a 2-d array."""
    rows = _read_rows(path)
    width = len(rows[0])
    out = []
    for r, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ParseError(f"{path}: row {r} has {len(row)} fields, expected {width}")
        out.append([_float_cell(cell, r, f"col{i + 1}", path) for i, cell in enumerate(row)])
    return np.array(out)


def read_tube_constants(path) -> TubeConstants:
    """Flat key=value file with exactly the nine geometric constants."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    values: dict[str, float] = {}
    for ln, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ParseError(f"{path}: line {ln}: expected key=value, got {text!r}")
        key, _, val = text.partition("=")
        key = key.strip()
        if key not in TUBE_KEYS:
            raise ParseError(f"{path}: line {ln}: unknown key {key!r}")
        if key in values:
            raise ParseError(f"{path}: line {ln}: duplicate key {key!r}")
        values[key] = _float_cell(val.strip(), ln, key, path)
    missing = [k for k in TUBE_KEYS if k not in values]
    if missing:
        raise ParseError(f"{path}: missing keys: {', '.join(missing)}")
    return TubeConstants(**values)


# ----------------------------------------------------------------------
# response transformation
# ----------------------------------------------------------------------

def replace_response(data: BlockLmmData, y: np.ndarray) -> BlockLmmData:
    """Same design and metadata with a new stacked response vector."""
    y = np.asarray(y, dtype=float)
    if y.shape != (data.n_total,):
        raise ShapeMismatch(f"y must have shape {(data.n_total,)}, got {y.shape}")
    blocks = [
        ClusterBlock(
            cluster_id=c.cluster_id,
            y=y[sl],
            X=c.X,
            known_error_var=c.known_error_var,
        )
        for c, sl in zip(data.clusters, data.cluster_slices())
    ]
    return BlockLmmData(model_tag=data.model_tag, clusters=tuple(blocks))


def _skew_profile(data: BlockLmmData, grid: np.ndarray) -> np.ndarray:
    """Fisher skewness of the decorrelated residuals at each shift."""
    y = data.y
    skews = np.empty(grid.size)
    for i, c in enumerate(grid):
        shifted = replace_response(data, np.log(y + c))
        fit = eblup(shifted)
        skews[i] = float(stats.skew(cholesky_residuals(shifted, fit)))
    return skews


def log_shift_transform(data: BlockLmmData, grid) -> tuple[float, np.ndarray]:
    """Shift c minimizing |skewness| of residuals under y -> log(y + c).

    The model is refitted at every candidate; ties go to the first grid
    point attaining the minimum.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise EmptyGrid("transform grid is empty")
    if np.any(data.y + grid.min() <= 0):
        raise NonPositiveShift(
            f"y + c must stay positive; smallest candidate {grid.min():g} fails"
        )
    skews = _skew_profile(data, grid)
    best = int(np.argmin(np.abs(skews)))
    c_star = float(grid[best])
    return c_star, np.log(data.y + c_star)


# ----------------------------------------------------------------------
# output encoding
# ----------------------------------------------------------------------

def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv6(value: float) -> str:
    return f"{value:.6g}"


def sim_csv_text(rows: list[tuple]) -> str:
    lines = ["scenario,method,criterion,value,mc_halfwidth"]
    for scenario, method, criterion, value, hw in rows:
        lines.append(f"{scenario},{method},{criterion},{_csv6(value)},{_csv6(hw)}")
    return "\n".join(lines) + "\n"


def _write_output(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# ----------------------------------------------------------------------
# subcommand implementations (return text to write *after* success)
# ----------------------------------------------------------------------

def _fit_payload(args) -> str:
    data = ingest_data(args.model, args.data)
    fit = eblup(data)
    out = {
        "model": args.model,
        "D": data.D,
        "n_total": data.n_total,
        "p": data.p,
        "beta": [float(b) for b in fit.beta_hat],
        "sigma2_u": float(fit.theta.sigma2_u),
        "sigma2_e": None if fit.theta.sigma2_e is None else float(fit.theta.sigma2_e),
        "loglik_restricted": float(fit.loglik_restricted),
        "clusters": [
            {
                "cluster": str(cid),
                "n": int(n),
                "mu_hat": float(mu),
                "u_hat": float(u),
                "scale": float(s),
            }
            for cid, n, mu, u, s in zip(
                data.cluster_ids, data.sizes, fit.mu_hat, fit.u_hat, fit.scale
            )
        ],
    }
    return _json_text(out)


def _method_critical(args, data, spec, fit):
    """Critical value plus the band scales the method calibrates against."""
    method = args.method
    scales = np.maximum(fit.scale, SCALE_FLOOR)
    seed = args.seed
    if method == "bs":
        draws = parametric_bootstrap(
            data, spec, fit, args.B, seed, threads=args.threads
        )
        return critical_value_bs(draws, args.alpha), scales, draws
    if method == "be":
        draws = parametric_bootstrap(
            data, spec, fit, args.B, seed, threads=args.threads
        )
        return beran_critical_values(draws, args.alpha), scales, draws
    if method == "mc":
        joint = build_joint_normal(data, fit.theta)
        L = loading_matrix(joint, spec)
        mc_scales = np.sqrt(np.einsum("di,ij,dj->d", L, joint.covariance, L))
        cv = critical_value_mc(
            joint, spec, args.K, args.alpha, seed,
            scales=mc_scales, threads=args.threads,
        )
        return cv, np.maximum(mc_scales, SCALE_FLOOR), None
    if method == "bo":
        return bonferroni_cv(data.D, args.alpha), scales, None
    if method == "vt":
        if args.tube_constants is None:
            raise ParseError("--method vt requires --tube-constants")
        constants = read_tube_constants(args.tube_constants)
        p = data.p if args.p is None else args.p
        if p < 1:
            raise ShapeMismatch(
                "tube bound needs manifold dimension p >= 1; pass --p explicitly"
            )
        cv = tube_cv(p, constants, args.alpha)
        vt_scales = ridge_interval_scales(data, fit.theta, spec)
        return cv, np.maximum(vt_scales, SCALE_FLOOR), None
    raise ParseError(f"unknown method {method!r}")


def _spi_payload(args) -> str:
    data = ingest_data(args.model, args.data)
    spec = cluster_mean_spec(data)
    fit = eblup(data, spec)
    cv, scales, _ = _method_critical(args, data, spec, fit)
    intervals = build_spi(fit, cv, scales=scales, cluster_ids=data.cluster_ids)
    uses_boot = args.method in ("bs", "be")
    out = {
        "model": args.model,
        "method": args.method,
        "alpha": args.alpha,
        "critical_value": float(cv.value),
        "seed": args.seed if args.method in ("bs", "be", "mc") else None,
        "B": args.B if uses_boot else None,
        "intervals": [
            {
                "cluster": str(cid),
                "center": float(c),
                "lower": float(lo),
                "upper": float(hi),
            }
            for cid, c, lo, hi in zip(
                data.cluster_ids, intervals.center, intervals.lower, intervals.upper
            )
        ],
    }
    if args.method == "mc":
        out["K"] = args.K
    if cv.per_cluster is not None:
        out["per_cluster_critical"] = [float(v) for v in cv.per_cluster]
    return _json_text(out)


def _test_payload(args) -> str:
    data = ingest_data(args.model, args.data)
    spec = cluster_mean_spec(data)
    fit = eblup(data, spec)
    alpha = args.alpha

    if args.contrasts is not None:
        A = read_matrix_csv(args.contrasts)
        if A.ndim != 2 or A.shape[1] != data.D:
            raise ShapeMismatch(f"contrast matrix must have {data.D} columns")
        if args.h is not None:
            h = read_matrix_csv(args.h).ravel()
        else:
            h = np.zeros(A.shape[0])
        if h.shape != (A.shape[0],):
            raise ShapeMismatch(f"h must have one value per contrast row ({A.shape[0]})")
        if args.method == "bs":
            draws = parametric_bootstrap(
                data, spec, fit, args.B, args.seed, threads=args.threads
            )
            cv = critical_value_contrast(draws, A, alpha)
            scales = np.sqrt(
                np.maximum(np.maximum(fit.scale, SCALE_FLOOR) ** 2 @ (A.T**2), SCALE_FLOOR**2)
            )
        elif args.method == "mc":
            joint = build_joint_normal(data, fit.theta)
            L = A @ loading_matrix(joint, spec)
            scales = np.sqrt(np.einsum("di,ij,dj->d", L, joint.covariance, L))
            cv = critical_value_mc(
                joint, spec, args.K, alpha, args.seed,
                scales=scales, contrast=A, threads=args.threads,
            )
        elif args.method == "bo":
            cv = bonferroni_cv(A.shape[0], alpha)
            scales = np.sqrt(
                np.maximum(np.maximum(fit.scale, SCALE_FLOOR) ** 2 @ (A.T**2), SCALE_FLOOR**2)
            )
        else:
            raise ParseError("test supports methods bs, mc and bo")
        test = single_step_test(A @ fit.mu_hat, scales, h, cv, A=A)
        if args.stepdown:
            t = np.abs(A @ fit.mu_hat - h) / np.maximum(scales, SCALE_FLOOR)
            provider = stepdown_quantile_provider(draws, alpha, A=A)
            rejected = [int(i) for i in step_down_test(t, provider, alpha)]
        else:
            rejected = [int(i) for i in np.flatnonzero(test.decisions)]
        labels = [f"contrast{i}" for i in rejected]
    else:
        if args.h is None:
            raise ParseError("per-cluster tests require --h")
        h = read_matrix_csv(args.h).ravel()
        if h.shape != (data.D,):
            raise ShapeMismatch(f"h must have {data.D} values, got {h.shape[0]}")
        cv, scales, draws = _method_critical(args, data, spec, fit)
        if args.stepdown:
            if args.method != "bs":
                raise ParseError("--stepdown requires --method bs")
            t = np.abs(fit.mu_hat - h) / np.maximum(scales, SCALE_FLOOR)
            provider = stepdown_quantile_provider(draws, alpha)
            idx = step_down_test(t, provider, alpha)
            rejected = [int(i) for i in idx]
            test = single_step_test(fit.mu_hat, scales, h, cv)
        else:
            test = single_step_test(fit.mu_hat, scales, h, cv)
            rejected = [int(i) for i in np.flatnonzero(test.decisions)]
        labels = [str(data.cluster_ids[i]) for i in rejected]

    uses_boot = args.method in ("bs", "be")
    out = {
        "model": args.model,
        "method": args.method,
        "alpha": alpha,
        "stepdown": bool(args.stepdown),
        "statistic": float(test.statistic),
        "critical_value": float(cv.value),
        "seed": args.seed if args.method in ("bs", "be", "mc") else None,
        "B": args.B if uses_boot else None,
        "n_rejected": len(rejected),
        "rejected_indices": rejected,
        "rejected": labels,
    }
    if args.method == "mc":
        out["K"] = args.K
    return _json_text(out)


def _build_config(args) -> ScenarioConfig:
    preset = args.preset
    defaults = {
        "table1-row": dict(model_tag=NERM, D=30, sigma2_e=0.5, sigma2_u=1.0),
        "table2-row": dict(model_tag=FHM, D=60, sigma2_u=1.0),
        "power": dict(model_tag=NERM, D=30, sigma2_e=0.5, sigma2_u=1.0),
        "fwer": dict(model_tag=NERM, D=15, sigma2_e=1.0, sigma2_u=1.0),
    }[preset]
    if args.D is not None:
        defaults["D"] = args.D
    if args.sigma_e2 is not None:
        defaults["sigma2_e"] = args.sigma_e2
    if args.sigma_u2 is not None:
        defaults["sigma2_u"] = args.sigma_u2
    if args.pattern is not None:
        try:
            pattern = tuple(float(v) for v in args.pattern.split(","))
        except ValueError as exc:
            raise ParseError(f"--pattern must be comma-separated numbers: {exc}") from exc
        defaults["fhm_sigma_pattern"] = pattern
    label = f"{preset}-D{defaults['D']}"
    return ScenarioConfig(
        n_d=args.n_d,
        n_sim=args.I,
        n_boot=args.B,
        n_mc=args.K,
        alpha=args.alpha,
        master_seed=args.seed,
        label=label,
        **defaults,
    )


def _simulate_payload(args) -> str:
    config = _build_config(args)
    if args.preset in ("table1-row", "table2-row"):
        methods = tuple(m.strip().upper() for m in args.methods.split(","))
        result = run_spi_experiment(config, methods=methods, threads=args.threads)
    elif args.preset == "power":
        try:
            deltas = tuple(float(v) for v in args.deltas.split(","))
        except ValueError as exc:
            raise ParseError(f"--deltas must be comma-separated numbers: {exc}") from exc
        result = run_power_experiment(config, delta_grid=deltas, threads=args.threads)
    else:
        result = run_fwer_experiment(config, shift=args.shift, threads=args.threads)
    return sim_csv_text(result.rows())


def _transform_payload(args) -> tuple[str, str | None]:
    data = ingest_data(args.model, args.data)
    y = data.y
    if args.grid is None:
        grid = np.linspace(y.min(), y.max(), 25)
    else:
        try:
            count = int(args.grid)
        except ValueError:
            try:
                grid = np.array([float(v) for v in args.grid.split(",")])
            except ValueError as exc:
                raise ParseError(
                    f"--grid must be a point count or comma-separated shifts: {exc}"
                ) from exc
        else:
            if count < 1:
                raise EmptyGrid("grid needs at least one point")
            grid = np.linspace(y.min(), y.max(), count)
    if np.any(y + grid.min() <= 0):
        raise NonPositiveShift(
            f"y + c must stay positive; smallest candidate {grid.min():g} fails"
        )
    skews = _skew_profile(data, grid)
    best = int(np.argmin(np.abs(skews)))
    c_star = float(grid[best])
    report = _json_text(
        {
            "model": args.model,
            "c_star": c_star,
            "skewness_at_c_star": float(skews[best]),
            "grid": [float(g) for g in grid],
            "skewness": [float(s) for s in skews],
        }
    )
    data_text = None
    if args.out_data is not None:
        shifted = replace_response(data, np.log(y + c_star))
        data_text = (
            export_unit_csv(shifted) if args.model == "nerm" else export_area_csv(shifted)
        )
    return report, data_text


def _plot_positions(values: np.ndarray) -> np.ndarray:
    """Normal quantiles at the (rank - 0.5)/N plotting positions."""
    n = values.shape[0]
    ranks = np.empty(n, dtype=float)
    ranks[np.argsort(values, kind="stable")] = np.arange(1, n + 1)
    return stats.norm.ppf((ranks - 0.5) / n)


def _residuals_payload(args) -> str:
    data = ingest_data(args.model, args.data)
    fit = eblup(data)
    resid = cholesky_residuals(data, fit)
    effects = eb_random_effects(data, fit)
    rq = _plot_positions(resid)
    eq = _plot_positions(effects)
    lines = ["kind,cluster,unit,value,normal_quantile"]
    pos = 0
    for cid, n in zip(data.cluster_ids, data.sizes):
        for j in range(int(n)):
            lines.append(
                f"cholesky,{cid},{j},{_csv6(resid[pos])},{_csv6(rq[pos])}"
            )
            pos += 1
    for d, cid in enumerate(data.cluster_ids):
        lines.append(
            f"random_effect,{cid},,{_csv6(effects[d])},{_csv6(eq[d])}"
        )
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting."""

    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _add_common(sub, seed_default=1):
    sub.add_argument("--model", required=True, choices=sorted(MODEL_TAGS))
    sub.add_argument("--data", required=True)
    sub.add_argument("--out", default=None, help="output path (default stdout)")
    sub.add_argument("--threads", type=int, default=None)
    sub.add_argument("--error-json", default=None, dest="error_json")
    return sub


def _add_method(sub):
    sub.add_argument("--method", required=True, choices=["bs", "mc", "bo", "be", "vt"])
    sub.add_argument("--alpha", type=float, default=0.05)
    sub.add_argument("--B", type=int, default=1000)
    sub.add_argument("--K", type=int, default=100_000)
    sub.add_argument("--seed", type=int, default=1)
    sub.add_argument("--tube-constants", default=None, dest="tube_constants")
    sub.add_argument("--p", type=int, default=None, help="manifold dimension for vt")


def build_parser() -> _Parser:
    parser = _Parser(prog="spimax", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    _add_common(subs.add_parser("fit", help="REML fit and predictions as JSON"))

    spi = _add_common(subs.add_parser("spi", help="simultaneous intervals as JSON"))
    _add_method(spi)

    test = _add_common(subs.add_parser("test", help="max-type multiple testing"))
    _add_method(test)
    test.add_argument("--h", default=None, help="CSV of null values")
    test.add_argument("--contrasts", default=None, help="CSV contrast matrix (rows)")
    test.add_argument("--stepdown", action="store_true")

    sim = subs.add_parser("simulate", help="simulation experiments as CSV")
    sim.add_argument("--preset", required=True, choices=SIM_PRESETS)
    sim.add_argument("--D", type=int, default=None)
    sim.add_argument("--n-d", type=int, default=5, dest="n_d")
    sim.add_argument("--sigma-e2", type=float, default=None, dest="sigma_e2")
    sim.add_argument("--sigma-u2", type=float, default=None, dest="sigma_u2")
    sim.add_argument("--pattern", default=None, help="FHM error variances, comma list")
    sim.add_argument("--I", type=int, default=500)
    sim.add_argument("--B", type=int, default=500)
    sim.add_argument("--K", type=int, default=2000)
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--seed", type=int, default=20260819)
    sim.add_argument("--methods", default="BS,MC,BO,BE")
    sim.add_argument("--deltas", default="-2,-1,-0.5,0,0.5,1,2")
    sim.add_argument("--shift", type=float, default=1.0)
    sim.add_argument("--out", default=None)
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--error-json", default=None, dest="error_json")

    tr = _add_common(subs.add_parser("transform", help="log-shift response transform"))
    tr.add_argument("--grid", default=None, help="point count or comma list of shifts")
    tr.add_argument("--out-data", default=None, dest="out_data")

    _add_common(subs.add_parser("residuals", help="decorrelated residual CSV"))
    return parser


def _emit_error(args, exc: Exception) -> None:
    sys.stderr.write(f"error: {exc}\n")
    path = getattr(args, "error_json", None)
    if path is not None:
        text = _json_text({"error": type(exc).__name__, "message": str(exc)})
        _write_output(text, path)


def _validate_flag_combinations(args) -> None:
    for attr in ("out", "out_data", "error_json"):
        path = getattr(args, attr, None)
        if path is not None:
            parent = os.path.dirname(path) or "."
            if not os.path.isdir(parent):
                raise _UsageError(f"output directory does not exist: {parent}")
    if getattr(args, "method", None) == "vt" and args.tube_constants is None:
        raise _UsageError("--method vt requires --tube-constants")
    if args.command == "test":
        if args.h is None and args.contrasts is None:
            raise _UsageError("test needs --h, --contrasts, or both")
        if args.stepdown and args.method != "bs":
            raise _UsageError("--stepdown requires --method bs")
        if args.contrasts is not None and args.method not in ("bs", "mc", "bo"):
            raise _UsageError("contrast tests support methods bs, mc and bo")


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate_flag_combinations(args)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    try:
        if args.command == "fit":
            writes = [(args.out, _fit_payload(args))]
        elif args.command == "spi":
            writes = [(args.out, _spi_payload(args))]
        elif args.command == "test":
            writes = [(args.out, _test_payload(args))]
        elif args.command == "simulate":
            writes = [(args.out, _simulate_payload(args))]
        elif args.command == "transform":
            report, data_text = _transform_payload(args)
            writes = [(args.out, report)]
            if data_text is not None:
                writes.append((args.out_data, data_text))
        else:
            writes = [(args.out, _residuals_payload(args))]
    except SpimaxError as exc:
        _emit_error(args, exc)
        return 2
    try:
        for path, text in writes:
            _write_output(text, path)
    except OSError as exc:
        # directories are pre-checked, so only races/permissions land here
        _emit_error(args, exc)
        return 2
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
