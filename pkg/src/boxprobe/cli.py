"""Command-line surface.

Loads a CSV dataset and a fitted model file, runs one analysis method, and
writes a single output document (JSON with the full stage trace, or bare
CSV data).  Runs are deterministic: the same configuration and seed yield
byte-identical output, whatever ``--threads`` says.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric or capacity
error.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Any

import click

from .core import default_step, loss_by_name
from .data import Dataset
from .dataio import emit_json, emit_points_csv, emit_score_csv, load_csv
from .effects import (
    ale_first_order,
    average_marginal_effect,
    equidistant_grid,
    ice_curves,
    lime_explain,
    marginal_effect,
    observed_grid,
    pd_curve,
)
from .errors import (
    BoxprobeError,
    CapacityError,
    DataFormatError,
    DegenerateBinningError,
    InvalidArgumentError,
    InvalidLevelError,
    MissingTargetError,
    ShapeError,
    SingularFitError,
    UndefinedVarianceError,
    UnsupportedKindError,
)
from .importance import (
    firm,
    ici_curve,
    pd_importance,
    pfi_exhaustive,
    pfi_permutation,
    pi_curve,
    sfimp,
)
from .refmodels import fit_knn, fit_linear, fit_stump, load_model, save_model
from .shapley import shapley_exact, shapley_mc
from .trace import AGGREGATION, INTERVENTION, PREDICTION, StageRecord, assemble_trace

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_USAGE_ERRORS = (InvalidArgumentError, UnsupportedKindError, InvalidLevelError)
_DATA_ERRORS = (DataFormatError, MissingTargetError, ShapeError)
_NUMERIC_ERRORS = (
    CapacityError,
    DegenerateBinningError,
    SingularFitError,
    UndefinedVarianceError,
)

_METHOD_PARAM_KEYS = {
    "ice": {"row", "grid_points"},
    "pd": {"grid_points"},
    "ale": {"intervals"},
    "me": {"row", "h"},
    "ame": {"h"},
    "shapley": {"row", "samples"},
    "lime": {"row", "samples", "kernel_width"},
    "pd-importance": set(),
    "firm": set(),
    "pfi": {"loss", "mode", "repeats", "threshold"},
    "ici": {"row", "loss", "threshold"},
    "pi": {"loss", "threshold"},
    "sfimp": {"loss", "mode", "threshold"},
    "fit": {"kind", "k"},
}


@dataclass
class RunConfig:
    """One fully specified analysis run; unknown methods/params are rejected."""

    method: str
    data_path: str
    model_path: str | None = None
    target: str | None = None
    feature: str | None = None
    seed: int = 0
    out_path: str | None = None
    fmt: str = "json"
    threads: int = 1
    kind_overrides: dict[str, str] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.method not in _METHOD_PARAM_KEYS:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        unknown = set(self.params) - _METHOD_PARAM_KEYS[self.method]
        if unknown:
            raise InvalidArgumentError(
                f"unknown parameters for {self.method}: {sorted(unknown)}"
            )
        if self.threads < 1:
            raise InvalidArgumentError("threads must be at least 1")
        if self.fmt not in ("json", "csv"):
            raise InvalidArgumentError(f"unknown output format {self.fmt!r}")


def _exit_code(exc: BoxprobeError) -> int:
    if isinstance(exc, _NUMERIC_ERRORS):
        return EXIT_NUMERIC
    if isinstance(exc, _DATA_ERRORS):
        return EXIT_DATA
    if isinstance(exc, _USAGE_ERRORS):
        return EXIT_USAGE
    return EXIT_NUMERIC


def _resolve_feature(data: Dataset, spec: str) -> int:
    spec = spec.strip()
    try:
        return data.feature_index(int(spec))
    except ValueError:
        return data.feature_index(spec)


def _fd_records(predictor, feature_name: str, h: float, batches: int, rows: int, averaged: bool):
    return (
        StageRecord(
            INTERVENTION,
            "shift the feature by plus and minus h",
            {"feature": feature_name, "h": h},
        ),
        StageRecord(
            PREDICTION,
            "batch predictions from the black-box model",
            {"predictor": predictor.name, "batches": batches, "rows": rows},
        ),
        StageRecord(
            AGGREGATION,
            "symmetric difference quotient"
            + (", averaged over observed rows" if averaged else ""),
            {"h": h},
        ),
    )


def _execute(config: RunConfig, data: Dataset, predictor) -> dict[str, Any]:
    """Dispatch one method and return the output document."""
    method = config.method
    params = config.params
    threads = config.threads
    # pd accepts a comma-separated feature set and resolves inside its branch
    j = (
        _resolve_feature(data, config.feature)
        if config.feature is not None and method != "pd"
        else None
    )
    feature_name: Any = data.meta[j].name if j is not None else None
    seed_used: int | None = None
    doc_params: dict[str, Any] = {}

    if method == "ice":
        row = int(params["row"])
        k = params.get("grid_points")
        grid = equidistant_grid(data, j, int(k)) if k is not None else observed_grid(data, j)
        curves = ice_curves(predictor, data, j, grid=grid, threads=threads)
        if not 0 <= row < len(curves):
            raise InvalidArgumentError(f"row {row} out of range for {len(curves)} observations")
        curve = curves[row]
        doc_params = {"row": row, "grid": grid.source, "grid_points": len(grid)}
        payload = ("points", curve.xs, curve.ys, curve.trace)

    elif method == "pd":
        specs = [s for s in str(config.feature).split(",") if s.strip()]
        features = [_resolve_feature(data, s) for s in specs]
        k = params.get("grid_points")
        if len(features) == 1:
            grid = (
                equidistant_grid(data, features[0], int(k))
                if k is not None
                else observed_grid(data, features[0])
            )
            curve = pd_curve(predictor, data, features[0], grid=grid, threads=threads)
            doc_params = {"grid": grid.source, "grid_points": len(grid)}
            feature_name = data.meta[features[0]].name
        else:
            if k is not None:
                raise InvalidArgumentError("--grid-points applies to single-feature runs")
            curve = pd_curve(predictor, data, features, threads=threads)
            doc_params = {"grid": "observed_values", "grid_points": len(curve.xs)}
            feature_name = [data.meta[f].name for f in features]
        payload = ("points", curve.xs, curve.ys, curve.trace)

    elif method == "ale":
        intervals = int(params.get("intervals", 10))
        curve = ale_first_order(predictor, data, j, intervals, threads=threads)
        doc_params = {"intervals": intervals}
        payload = ("points", curve.xs, curve.ys, curve.trace)

    elif method == "me":
        row = int(params["row"])
        x = data.row(row)
        h = params.get("h")
        h = float(h) if h is not None else default_step(data, j)
        value = marginal_effect(predictor, x, j, h)
        trace = assemble_trace(
            data.provenance, _fd_records(predictor, feature_name, h, 1, 2, averaged=False)
        )
        doc_params = {"row": row, "h": h}
        payload = ("score", value, trace)

    elif method == "ame":
        h = params.get("h")
        h = float(h) if h is not None else default_step(data, j)
        value = average_marginal_effect(predictor, data, j, h=h, threads=threads)
        trace = assemble_trace(
            data.provenance,
            _fd_records(predictor, feature_name, h, 2, 2 * data.n_rows, averaged=True),
        )
        doc_params = {"h": h}
        payload = ("score", value, trace)

    elif method == "shapley":
        row = int(params["row"])
        x = data.row(row)
        samples = params.get("samples")
        if samples is not None:
            result = shapley_mc(predictor, data, x, j, int(samples), config.seed, threads=threads)
            seed_used = config.seed
        else:
            result = shapley_exact(predictor, data, x, j, threads=threads)
        doc_params = {
            "row": row,
            "mode": result.mode,
            "iterations": result.iterations,
            "full_coalition_payout": result.full_coalition_payout,
            "standard_error": result.standard_error,
        }
        payload = ("score", result.value, result.trace)

    elif method == "lime":
        row = int(params["row"])
        x = data.row(row)
        result = lime_explain(
            predictor,
            data,
            x,
            j,
            num_samples=int(params.get("samples", 100)),
            kernel_width=params.get("kernel_width"),
            seed=config.seed,
            threads=threads,
        )
        seed_used = config.seed
        doc_params = {
            "row": row,
            "num_samples": result.num_samples,
            "kernel_width": result.kernel_width,
            "perturbation_sd": result.perturbation_sd,
            "intercept": result.intercept,
        }
        payload = ("score", result.slope, result.trace)

    elif method == "pd-importance":
        score = pd_importance(predictor, data, j, threads=threads)
        payload = ("score", score.value, score.trace)

    elif method == "firm":
        score = firm(predictor, data, j, threads=threads)
        payload = ("score", score.value, score.trace)

    elif method == "pfi":
        loss = loss_by_name(params.get("loss", "squared"), float(params.get("threshold", 0.5)))
        mode = params.get("mode", "permutation")
        if mode == "permutation":
            repeats = int(params.get("repeats", 5))
            score = pfi_permutation(
                predictor, data, j, loss, repeats=repeats, seed=config.seed, threads=threads
            )
            seed_used = config.seed
            doc_params = {"loss": loss.tag, "mode": mode, "repeats": repeats}
        elif mode == "exhaustive":
            score = pfi_exhaustive(predictor, data, j, loss, threads=threads)
            doc_params = {"loss": loss.tag, "mode": mode, "repeats": None}
        else:
            raise InvalidArgumentError(f"unknown pfi mode {mode!r}")
        payload = ("score", score.value, score.trace)

    elif method == "ici":
        loss = loss_by_name(params.get("loss", "squared"), float(params.get("threshold", 0.5)))
        row = int(params["row"])
        curve = ici_curve(predictor, data, row, j, loss, threads=threads)
        doc_params = {"row": row, "loss": loss.tag}
        payload = ("points", curve.xs, curve.ys, curve.trace)

    elif method == "pi":
        loss = loss_by_name(params.get("loss", "squared"), float(params.get("threshold", 0.5)))
        curve = pi_curve(predictor, data, j, loss, threads=threads)
        doc_params = {"loss": loss.tag}
        payload = ("points", curve.xs, curve.ys, curve.trace)

    elif method == "sfimp":
        loss = loss_by_name(params.get("loss", "squared"), float(params.get("threshold", 0.5)))
        mode = params.get("mode", "exhaustive")
        seed = config.seed if mode == "permutation" else None
        score = sfimp(predictor, data, j, loss, mode=mode, seed=seed, threads=threads)
        seed_used = seed
        doc_params = {"loss": loss.tag, "mode": mode}
        payload = ("score", score.value, score.trace)

    else:  # pragma: no cover - guarded by RunConfig
        raise InvalidArgumentError(f"unknown method {method!r}")

    if params.get("loss") == "zero_one":
        doc_params["threshold"] = float(params.get("threshold", 0.5))

    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "feature": feature_name,
        "params": doc_params,
        "seed": seed_used,
    }
    if payload[0] == "points":
        _, xs, ys, trace = payload
        doc["stage_trace"] = trace.to_json_obj()
        doc["points"] = [
            {"x": list(x) if isinstance(x, tuple) else x, "y": y} for x, y in zip(xs, ys)
        ]
    else:
        _, value, trace = payload
        doc["stage_trace"] = trace.to_json_obj()
        doc["score"] = value
    return doc


def _render(doc: dict[str, Any], fmt: str, feature_label: Any) -> str:
    if fmt == "json":
        return emit_json(doc)
    if "points" in doc:
        names = feature_label if isinstance(feature_label, list) else [feature_label or "x"]
        xs = [p["x"] for p in doc["points"]]
        ys = [p["y"] for p in doc["points"]]
        return emit_points_csv(xs, ys, names)
    return emit_score_csv(doc["method"], str(feature_label), doc["score"])


def _write(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
        return
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def run(config: RunConfig) -> int:
    """Execute one configured run; returns the process exit code."""
    try:
        if config.method == "fit":
            return _run_fit(config)
        if config.model_path is None:
            raise InvalidArgumentError(f"{config.method} needs a model file")
        data = load_csv(config.data_path, target=config.target, kinds=config.kind_overrides)
        predictor = load_model(config.model_path)
        doc = _execute(config, data, predictor)
        _write(_render(doc, config.fmt, doc["feature"]), config.out_path)
        return EXIT_OK
    except BoxprobeError as exc:
        click.echo(f"error: {exc}", err=True)
        return _exit_code(exc)


def _run_fit(config: RunConfig) -> int:
    data = load_csv(config.data_path, target=config.target, kinds=config.kind_overrides)
    kind = config.params.get("kind", "linear")
    if kind == "linear":
        model = fit_linear(data)
    elif kind == "knn":
        model = fit_knn(data, int(config.params.get("k", 3)))
    elif kind == "stump":
        model = fit_stump(data)
    else:
        raise InvalidArgumentError(f"unknown model kind {kind!r}")
    if config.out_path is None:
        raise InvalidArgumentError("fit needs --out to store the model file")
    save_model(model, config.out_path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Click wiring
# ---------------------------------------------------------------------------


def _apply(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return wrap


_COMMON = [
    click.option("--data", "data_path", required=True, metavar="CSV", help="Input data file."),
    click.option("--model", "model_path", required=True, metavar="FILE", help="Model file from `boxprobe fit`."),
    click.option("--target", default=None, help="Name of the target column."),
    click.option("--seed", type=int, default=0, show_default=True, help="Seed for randomized stages."),
    click.option("--out", "out_path", default=None, metavar="FILE", help="Output file (default: stdout)."),
    click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True),
    click.option("--threads", type=int, default=1, show_default=True, help="Prediction worker threads; never changes results."),
    click.option("--kind", "kind_spec", multiple=True, metavar="NAME=KIND", help="Feature kind override (continuous|categorical)."),
]
_FEATURE = click.option("--feature", required=True, help="Feature name or zero-based index.")
_ROW = click.option("--row", type=int, required=True, help="Zero-based observation index.")
_LOSS = [
    click.option("--loss", type=click.Choice(["squared", "absolute", "zero_one"]), default="squared", show_default=True),
    click.option("--threshold", type=float, default=0.5, show_default=True, help="Classification threshold for zero_one loss."),
]


def _overrides(kind_spec) -> dict[str, str]:
    out = {}
    for item in kind_spec:
        name, sep, kind = item.partition("=")
        if not sep or not name or not kind:
            raise click.UsageError(f"--kind expects NAME=KIND, got {item!r}")
        out[name] = kind
    return out


def _config(method, data_path, model_path, target, seed, out_path, fmt, threads, kind_spec, **params):
    return RunConfig(
        method=method,
        data_path=data_path,
        model_path=model_path,
        target=target,
        feature=params.pop("feature", None),
        seed=seed,
        out_path=out_path,
        fmt=fmt,
        threads=threads,
        kind_overrides=_overrides(kind_spec),
        params={k: v for k, v in params.items() if v is not None},
    )


@click.group()
def cli() -> None:
    """Model-agnostic effect and importance analysis for black-box models."""


@cli.command("fit")
@click.option("--data", "data_path", required=True, metavar="CSV")
@click.option("--target", required=True, help="Name of the target column.")
@click.option("--kind", "model_kind", type=click.Choice(["linear", "knn", "stump"]), default="linear", show_default=True)
@click.option("--k", type=int, default=3, show_default=True, help="Neighbour count for knn.")
@click.option("--out", "out_path", required=True, metavar="FILE", help="Where to write the model file.")
def fit_command(data_path, target, model_kind, k, out_path):
    """Fit a reference model on a CSV file and save it."""
    config = RunConfig(
        method="fit",
        data_path=data_path,
        target=target,
        out_path=out_path,
        params={"kind": model_kind, "k": k},
    )
    try:
        return run(config)
    except BoxprobeError as exc:
        click.echo(f"error: {exc}", err=True)
        return _exit_code(exc)


def _method_command(name, help_text, extra_options):
    def decorator(builder):
        @cli.command(name, help=help_text)
        @_apply(_COMMON + extra_options)
        def command(**kwargs):
            return run(builder(**kwargs))

        command.__name__ = name.replace("-", "_")
        return command

    return decorator


@_method_command("ice", "Individual conditional expectation curve for one observation.", [_FEATURE, _ROW, click.option("--grid-points", "grid_points", type=int, default=None, help="Equidistant grid size (default: observed values).")])
def _ice(row, grid_points, **kw):
    return _config("ice", row=row, grid_points=grid_points, **kw)


@_method_command("pd", "Partial dependence curve (comma-separate features for a set).", [_FEATURE, click.option("--grid-points", "grid_points", type=int, default=None, help="Equidistant grid size (default: observed values).")])
def _pd(grid_points, **kw):
    return _config("pd", grid_points=grid_points, **kw)


@_method_command("ale", "First-order accumulated local effects curve.", [_FEATURE, click.option("--intervals", type=int, default=10, show_default=True)])
def _ale(intervals, **kw):
    return _config("ale", intervals=intervals, **kw)


@_method_command("me", "Marginal effect (difference quotient) at one observation.", [_FEATURE, _ROW, click.option("--h", type=float, default=None, help="Step size (default: 1e-4 of the observed range).")])
def _me(row, h, **kw):
    return _config("me", row=row, h=h, **kw)


@_method_command("ame", "Average marginal effect over all observations.", [_FEATURE, click.option("--h", type=float, default=None, help="Step size (default: 1e-4 of the observed range).")])
def _ame(h, **kw):
    return _config("ame", h=h, **kw)


@_method_command("shapley", "Shapley value of one feature (exact, or Monte Carlo with --samples).", [_FEATURE, _ROW, click.option("--samples", type=int, default=None, help="Monte Carlo iterations (default: exact enumeration).")])
def _shapley(row, samples, **kw):
    return _config("shapley", row=row, samples=samples, **kw)


@_method_command("lime", "Local surrogate line around one observation.", [_FEATURE, _ROW, click.option("--samples", type=int, default=100, show_default=True), click.option("--kernel-width", "kernel_width", type=float, default=None, help="Proximity kernel width (default: 0.75 sd).")])
def _lime(row, samples, kernel_width, **kw):
    return _config("lime", row=row, samples=samples, kernel_width=kernel_width, **kw)


@_method_command("pd-importance", "Spread of the partial dependence (sd, or range/4 for levels).", [_FEATURE])
def _pd_importance(**kw):
    return _config("pd-importance", **kw)


@_method_command("firm", "Importance as the spread of the conditional expected score.", [_FEATURE])
def _firm(**kw):
    return _config("firm", **kw)


@_method_command("pfi", "Permutation feature importance.", [_FEATURE, *_LOSS, click.option("--mode", type=click.Choice(["permutation", "exhaustive"]), default="permutation", show_default=True), click.option("--repeats", type=int, default=5, show_default=True)])
def _pfi(loss, threshold, mode, repeats, **kw):
    return _config("pfi", loss=loss, threshold=threshold, mode=mode, repeats=repeats, **kw)


@_method_command("ici", "Individual conditional importance curve for one observation.", [_FEATURE, _ROW, *_LOSS])
def _ici(row, loss, threshold, **kw):
    return _config("ici", row=row, loss=loss, threshold=threshold, **kw)


@_method_command("pi", "Partial importance curve (mean of all ICI curves).", [_FEATURE, *_LOSS])
def _pi(loss, threshold, **kw):
    return _config("pi", loss=loss, threshold=threshold, **kw)


@_method_command("sfimp", "Shapley feature importance with a loss-based payout.", [_FEATURE, *_LOSS, click.option("--mode", type=click.Choice(["exhaustive", "permutation"]), default="exhaustive", show_default=True)])
def _sfimp(loss, threshold, mode, **kw):
    return _config("sfimp", loss=loss, threshold=threshold, mode=mode, **kw)


def main(argv=None) -> int:
    """Entry point: parse arguments, run, and map errors to exit codes."""
    try:
        rv = cli.main(args=argv, prog_name="boxprobe", standalone_mode=False)
        return int(rv) if isinstance(rv, int) else EXIT_OK
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except BoxprobeError as exc:
        click.echo(f"error: {exc}", err=True)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
