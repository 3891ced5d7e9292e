"""Command-line entry point.

Every command reads a JSON experiment config (``--config``), lets a few
flags override it, writes its artifacts plus a resolved ``config.json`` into
the output directory and exits 0. Failures exit non-zero with a JSON error
object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from priorgp import bench, dataset, plots
from priorgp.basis import ParisLawConfig, basis_from_descriptor
from priorgp.errors import PriorGPError
from priorgp.gp import PolynomialKernel, PolynomialMean, SquaredExponential, ZeroMean, GpModel, ConstantNoise
from priorgp.igpm import ERROR_ESTIMATORS, IgpmModel, infer_model
from priorgp.train import ModelFamily, fit_previous, order_selection_errors, select_order

OUTPUT_ROOT_ENV = "PRIORGP_OUTPUT_ROOT"
COMMANDS = ("ingest", "synthesize", "select-order", "fit", "predict", "benchmark", "calibrate", "variance-forecast", "diagnose", "validate")
TIMING_COMMANDS = ("benchmark",)


class UsageError(Exception):
    def __init__(self, message: str, details=None):
        super().__init__(message)
        self.details = details


# ---------------------------------------------------------------------------
# Config validation
# ---------------------------------------------------------------------------


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_method(m, ptr: str, manifest_paris: bool, out: list) -> None:
    if not isinstance(m, dict):
        out.append({"pointer": ptr, "message": "method must be an object"})
        return
    label = m.get("label")
    if label not in bench.METHOD_LABELS:
        out.append({"pointer": f"{ptr}/label", "message": f"unknown method {label!r}; expected one of {list(bench.METHOD_LABELS)}"})
    basis = m.get("basis", "paris" if label == "IGPM-paris" else "poly")
    if basis not in ("poly", "paris"):
        out.append({"pointer": f"{ptr}/basis", "message": f"unknown basis {basis!r}"})
    if (basis == "paris") != (label == "IGPM-paris"):
        out.append({"pointer": f"{ptr}/basis", "message": "the paris basis is only available for IGPM-paris"})
    if basis == "paris" and not m.get("paris") and not manifest_paris:
        out.append({"pointer": f"{ptr}/basis", "message": "paris basis needs a Paris-law configuration (method.paris or dataset manifest)"})
    if m.get("paris"):
        try:
            ParisLawConfig.from_dict({**m["paris"], **({"alphas": m["alphas"]} if "alphas" in m else {})})
        except (KeyError, TypeError, ValueError) as exc:
            out.append({"pointer": f"{ptr}/paris", "message": str(exc)})
    if "name" in m and not (isinstance(m["name"], str) and m["name"]):
        out.append({"pointer": f"{ptr}/name", "message": "name must be a non-empty string"})
    if "q" in m and not (_is_int(m["q"]) and m["q"] >= 1):
        out.append({"pointer": f"{ptr}/q", "message": "q must be an integer >= 1"})
    if "alphas" in m and not (isinstance(m["alphas"], list) and m["alphas"] and all(isinstance(a, (int, float)) and a >= 0 for a in m["alphas"])):
        out.append({"pointer": f"{ptr}/alphas", "message": "alphas must be a non-empty list of non-negative numbers"})


def validate_config_dict(cfg, base_dir=".", command: str | None = None) -> list[dict]:
    """Violations as ``{"pointer", "message"}`` dicts; never computes anything."""
    out: list[dict] = []
    if not isinstance(cfg, dict):
        return [{"pointer": "", "message": "config must be a JSON object"}]
    manifest_paris = False
    ds = cfg.get("dataset")
    if ds is not None:
        if not isinstance(ds, str):
            out.append({"pointer": "/dataset", "message": "dataset must be a path string"})
        else:
            p = Path(base_dir) / ds
            if not p.is_file():
                out.append({"pointer": "/dataset", "message": f"manifest not found: {p}"})
            else:
                try:
                    raw = json.loads(p.read_text(encoding="utf-8"))
                    manifest = dataset.DatasetManifest.from_dict(raw, p.parent)
                    manifest_paris = manifest.paris is not None
                    for f in manifest.files:
                        if not (manifest.base_dir / f).is_file():
                            out.append({"pointer": "/dataset", "message": f"trajectory file not found: {manifest.base_dir / f}"})
                except (ValueError, PriorGPError, KeyError) as exc:
                    out.append({"pointer": "/dataset", "message": f"unreadable manifest: {exc}"})
    elif command not in (None, "synthesize", "variance-forecast", "validate"):
        out.append({"pointer": "/dataset", "message": f"command {command!r} needs a dataset manifest"})
    if "method" in cfg:
        _check_method(cfg["method"], "/method", manifest_paris, out)
    if "methods" in cfg:
        if not isinstance(cfg["methods"], list) or not cfg["methods"]:
            out.append({"pointer": "/methods", "message": "methods must be a non-empty list"})
        else:
            for i, m in enumerate(cfg["methods"]):
                _check_method(m, f"/methods/{i}", manifest_paris, out)
    if "q_candidates" in cfg or command == "select-order":
        qs = cfg.get("q_candidates")
        if not (isinstance(qs, list) and qs and all(_is_int(q) and q >= 0 for q in qs)):
            out.append({"pointer": "/q_candidates", "message": "q_candidates must be a non-empty list of integers >= 0"})
    if "error_estimator" in cfg and cfg["error_estimator"] not in ERROR_ESTIMATORS:
        out.append({"pointer": "/error_estimator", "message": f"expected one of {list(ERROR_ESTIMATORS)}"})
    for key, lo in (("seed", 0), ("starts", 1), ("threads", 1), ("repeats", 1)):
        if key in cfg and not (_is_int(cfg[key]) and cfg[key] >= lo):
            out.append({"pointer": f"/{key}", "message": f"{key} must be an integer >= {lo}"})
    for key in ("predictive_noise", "quadrature_direct", "cold_start"):
        if key in cfg and not isinstance(cfg[key], bool):
            out.append({"pointer": f"/{key}", "message": f"{key} must be a boolean"})
    if "levels" in cfg:
        lv = cfg["levels"]
        if not (isinstance(lv, list) and lv and all(isinstance(v, (int, float)) and 0 < v < 1 for v in lv)):
            out.append({"pointer": "/levels", "message": "levels must be a non-empty list of numbers in (0, 1)"})
    if command == "variance-forecast":
        if "schedule" not in cfg:
            out.append({"pointer": "/schedule", "message": "variance-forecast needs a schedule"})
        if "model" not in cfg and "dataset" not in cfg:
            out.append({"pointer": "/model", "message": "variance-forecast needs a saved model or a dataset to infer one"})
    if command == "synthesize" and "generator" not in cfg:
        out.append({"pointer": "/generator", "message": "synthesize needs a generator spec"})
    return out


def validate_config(path, command: str | None = None) -> list[dict]:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        return [{"pointer": "", "message": f"invalid JSON: {exc}"}]
    return validate_config_dict(cfg, path.parent, command)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    return np.asarray(spec, float)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def _fmt(v) -> str:
    return repr(float(v))


def _matrix_csv(path: Path, grid, m) -> None:
    _write_csv(path, ["x", *(_fmt(g) for g in grid)], [[_fmt(g), *(_fmt(v) for v in row)] for g, row in zip(grid, m)])


def _label_slug(label: str) -> str:
    return re.sub(r"[^a-z0-9.-]+", "_", label.lower()).strip("_")


class Context:
    def __init__(self, command: str, cfg: dict, base_dir: Path, out_dir: Path):
        self.command = command
        self.cfg = cfg
        self.base_dir = base_dir
        self.out = out_dir
        self._dataset = None

    @property
    def dataset(self) -> dataset.Dataset:
        if self._dataset is None:
            self._dataset = dataset.load(self.base_dir / self.cfg["dataset"])
        return self._dataset

    def method(self, m: dict) -> bench.MethodSpec:
        label = m.get("label")
        if label not in bench.METHOD_LABELS:
            raise UsageError(f"unknown method {label!r}", {"labels": list(bench.METHOD_LABELS)})
        paris = None
        if label == "IGPM-paris":
            d = m.get("paris") or (self.dataset.manifest.paris.to_dict() if self.cfg.get("dataset") and self.dataset.manifest.paris else None)
            if d is None:
                raise UsageError("IGPM-paris needs a Paris-law configuration", {"pointer": "/method/basis"})
            if "alphas" in m:
                d = {**d, "alphas": m["alphas"]}
            paris = ParisLawConfig.from_dict(d)
        return bench.MethodSpec(
            label,
            order=int(m.get("q", 1)),
            paris=paris,
            error_estimator=m.get("error_estimator", self.cfg.get("error_estimator")),
            starts=int(self.cfg.get("starts", bench.DEFAULT_STARTS)),
            seed=int(self.cfg.get("seed", 0)),
            cold_start=bool(m.get("cold_start", self.cfg.get("cold_start", False))),
            quadrature_direct=bool(self.cfg.get("quadrature_direct", False)),
        )

    def method_entries(self) -> list[tuple[str, bench.MethodSpec]]:
        """``(row name, spec)`` pairs; ``name`` defaults to the method label."""
        if "methods" in self.cfg:
            raw = self.cfg["methods"]
        elif "method" in self.cfg:
            raw = [self.cfg["method"]]
        else:
            q = int(self.cfg.get("q", 1))
            raw = [{"label": lbl, "q": q} for lbl in bench.METHOD_LABELS if lbl != "IGPM-paris" or self.dataset.manifest.paris]
        return [(str(m.get("name", m.get("label"))), self.method(m)) for m in raw]

    def methods(self) -> list[bench.MethodSpec]:
        return [spec for _, spec in self.method_entries()]

    def series(self, method: bench.MethodSpec, threads: int):
        ds = self.dataset
        repeats = int(self.cfg.get("repeats", 1))
        if ds.manifest.inference_ids is not None:
            return bench.holdout_series(method, ds.inference_set(), ds.evaluation_set(), repeats=repeats, threads=threads)
        return bench.loo_series(method, ds.trajectories, repeats=repeats, threads=threads)

    @property
    def predictive_noise(self) -> bool:
        return bool(self.cfg.get("predictive_noise", self.command == "calibrate"))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(ctx: Context) -> None:
    ds = ctx.dataset
    dataset.write_trajectories(ctx.out / "trajectories.csv", ds.trajectories)
    (ctx.out / "manifest_echo.json").write_text(json.dumps(ds.echo(), indent=2) + "\n", encoding="utf-8")
    rows = [[t.id, len(t), _fmt(t.xs[0]), _fmt(t.xs[-1]), _fmt(t.ys[0]), _fmt(t.ys[-1])] for t in ds.trajectories]
    _write_csv(ctx.out / "summary.csv", ["trajectory_id", "n", "x_first", "x_last", "y_first", "y_last"], rows)


def _generator_model(g: dict) -> GpModel:
    kernel = SquaredExponential(float(g["sigma_f"]), float(g["length"])) if g.get("kernel", "poly") == "se" else PolynomialKernel(float(g["sigma_f"]), float(g.get("offset", 1.0)), int(g.get("order", 1)))
    mean = PolynomialMean(tuple(g["coeffs"])) if g.get("coeffs") else ZeroMean()
    return GpModel(mean, kernel, ConstantNoise(float(g.get("sigma_y", 0.0))))


def cmd_synthesize(ctx: Context) -> None:
    g = ctx.cfg["generator"]
    seed = int(g.get("seed", ctx.cfg.get("seed", 0)))
    grid = _grid(g["grid"])
    if g.get("kind", "basis") == "gp":
        trajs = dataset.synthesize_gp(_generator_model(g), grid, int(g["count"]), seed)
    else:
        spec = dataset.GeneratorSpec(
            basis=basis_from_descriptor(g["basis"]),
            mean=np.asarray(g["mean"], float),
            cov=np.asarray(g["cov"], float),
            grid=grid,
            count=int(g["count"]),
            noise=float(g.get("noise", 0.0)),
            seed=seed,
        )
        trajs = dataset.synthesize(spec)
    dataset.write_trajectories(ctx.out / "trajectories.csv", trajs)
    manifest = {"name": g.get("name", "synthetic"), "files": ["trajectories.csv"], "x": {"role": "x"}, "y": {"role": "y"}}
    if g.get("paris"):
        manifest["paris"] = g["paris"]
    (ctx.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def cmd_select_order(ctx: Context) -> None:
    trajs = ctx.dataset.inference_set()
    qs = ctx.cfg.get("q_candidates")
    seed = int(ctx.cfg.get("seed", 0))
    errors = order_selection_errors(trajs, qs, seed)
    _write_csv(ctx.out / "order_selection.csv", ["q", "test_mse"], [[q, _fmt(e)] for q, e in sorted(errors.items())])
    (ctx.out / "selected_order.json").write_text(json.dumps({"q": select_order(trajs, qs, seed)}) + "\n", encoding="utf-8")


def cmd_fit(ctx: Context) -> None:
    spec = ctx.methods()[0]
    previous = ctx.dataset.inference_set()
    st = spec.standardizer(previous)
    if spec.label.startswith("IGPM"):
        infer_model(previous, spec.basis(), spec.estimator, standardizer=st).save(ctx.out / "model.json")
        return
    family = {
        "GPM-curr": ModelFamily("poly", spec.order, "zero"),
        "GPM-prev-ZM-SE": ModelFamily("se", 0, "zero"),
        "GPM-prev-POLY": ModelFamily("poly", spec.order, "poly"),
    }[spec.label]
    report = fit_previous(family, previous, spec.starts, spec.seed, standardizer=st)
    d = report.to_dict()
    d.pop("elapsed_s")
    d["standardizer"] = st.to_dict()
    (ctx.out / "optimization_report.json").write_text(json.dumps(d, indent=2) + "\n", encoding="utf-8")


def cmd_predict(ctx: Context) -> None:
    spec = ctx.methods()[0]
    ds = ctx.dataset
    tid = ctx.cfg.get("trajectory") or ds.evaluation_set()[0].id
    target = ds.by_id(str(tid))
    previous = [t for t in ds.inference_set() if t.id != target.id]
    if "model" in ctx.cfg:
        predictor = bench.FixedPredictor(IgpmModel.load(ctx.base_dir / ctx.cfg["model"]).gp)
    else:
        predictor = spec.prepare(previous)
    s = bench.sequential_predict(spec, target, predictor=predictor)
    z = bench.Z95
    sd = s.std(ctx.predictive_noise)
    rows = [[int(i), _fmt(m), _fmt(v), _fmt(nv), _fmt(m - z * d), _fmt(m + z * d)] for i, m, v, nv, d in zip(s.n_observed, s.mean, s.var, s.noise_var, sd)]
    _write_csv(ctx.out / "prediction_series.csv", ["n_observed", "mean", "var", "noise_var", "lower95", "upper95"], rows)
    grid = np.linspace(target.xs[0], target.xs[-1], 200)
    n = len(target)
    fan_steps = sorted({max(1, n // 4), max(1, (3 * n) // 4)})
    preds = {i: predictor.predict(target.xs[:i], target.ys[:i], grid) for i in fan_steps}
    plots.prediction_fan(ctx.out / "prediction_fan.svg", target, grid, preds, title=spec.label)


def cmd_benchmark(ctx: Context) -> None:
    rows = []
    for name, spec in ctx.method_entries():
        rows.append(bench.metrics_row(name, ctx.series(spec, threads=1)))
    _write_csv(ctx.out / "table3.csv", bench.METRICS_HEADER, [r.csv_fields() for r in rows])
    _write_csv(ctx.out / "pred_step_time.csv", ["model", "pred_step_time_s", "mape_skipped"], [[r.label, _fmt(r.pred_step_time_s), r.mape_skipped] for r in rows])


def cmd_calibrate(ctx: Context) -> None:
    levels = tuple(ctx.cfg.get("levels", bench.DEFAULT_LEVELS))
    threads = int(ctx.cfg.get("threads", 1))
    results = {}
    for name, spec in ctx.method_entries():
        res = bench.calibration(ctx.series(spec, threads), levels, predictive_noise=ctx.predictive_noise)
        results[name] = res
        _write_csv(ctx.out / f"calibration_{_label_slug(name)}.csv", ["level", "empirical_frequency"], [[_fmt(lv), _fmt(f)] for lv, f in zip(res.levels, res.frequencies)])
    plots.calibration_curve(ctx.out / "calibration.svg", results)


def _fixed_model(ctx: Context):
    if "model" in ctx.cfg:
        return IgpmModel.load(ctx.base_dir / ctx.cfg["model"])
    spec = ctx.methods()[0]
    if not spec.label.startswith("IGPM"):
        predictor = spec.prepare(ctx.dataset.inference_set())
        if not isinstance(predictor, bench.FixedPredictor):
            raise UsageError(f"{spec.label} re-optimizes at every step and has no fixed model")
        return predictor.gp
    previous = ctx.dataset.inference_set()
    return infer_model(previous, spec.basis(), spec.estimator, standardizer=spec.standardizer(previous))


def cmd_variance_forecast(ctx: Context) -> None:
    model = _fixed_model(ctx)
    gp = model.gp if isinstance(model, IgpmModel) else model
    schedule = _grid(ctx.cfg["schedule"])
    target = float(ctx.cfg.get("target", schedule[-1]))
    widths = bench.variance_forecast(gp, schedule, target, predictive_noise=bool(ctx.cfg.get("predictive_noise", False)))
    steps = np.arange(widths.size)
    _write_csv(ctx.out / "variance_forecast.csv", ["step", "ci_halfwidth"], [[int(s), _fmt(w)] for s, w in zip(steps, widths)])
    plots.variance_forecast(ctx.out / "variance_forecast.svg", steps, widths)


def cmd_diagnose(ctx: Context) -> None:
    model = _fixed_model(ctx)
    trajs = ctx.dataset.inference_set() if ctx.cfg.get("dataset") else None
    if "grid" in ctx.cfg:
        grid = _grid(ctx.cfg["grid"])
    elif trajs:
        grid = np.linspace(max(t.xs[0] for t in trajs), min(t.xs[-1] for t in trajs), 50)
    else:
        raise UsageError("diagnose needs a grid or a dataset")
    basis = model.basis if isinstance(model, IgpmModel) else basis_from_descriptor({"kind": "poly", "q": int(ctx.cfg.get("q", 2))})
    diag = bench.covariance_diagnostics(model, grid, trajs, basis)
    _matrix_csv(ctx.out / "model_cov.csv", grid, diag.model_cov)
    plots.heatmap(ctx.out / "model_cov.svg", diag.model_cov, grid, title="model covariance")
    if diag.empirical_cov is not None:
        _matrix_csv(ctx.out / "empirical_cov.csv", grid, diag.empirical_cov)
        plots.heatmap(ctx.out / "empirical_cov.svg", diag.empirical_cov, grid, title="computed covariance")
        (ctx.out / "diagnostics.json").write_text(json.dumps({"relative_frobenius_difference": diag.relative_difference}) + "\n", encoding="utf-8")


HANDLERS = {
    "ingest": cmd_ingest,
    "synthesize": cmd_synthesize,
    "select-order": cmd_select_order,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "calibrate": cmd_calibrate,
    "variance-forecast": cmd_variance_forecast,
    "diagnose": cmd_diagnose,
}

HELP = {
    "ingest": "load a dataset manifest and write normalized trajectories",
    "synthesize": "draw a synthetic dataset from a generator spec",
    "select-order": "choose the polynomial order by a 70/30 split test error",
    "fit": "fit or infer a model on the inference trajectories",
    "predict": "sequential last-point prediction for one trajectory",
    "benchmark": "leave-one-out error and timing table for several methods",
    "calibrate": "credible-interval calibration of the prediction series",
    "variance-forecast": "95%% interval half-widths at a target before any value is measured",
    "diagnose": "model vs. empirical covariance matrices on a grid",
    "validate": "check a config file without running anything",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="priorgp", description="GP prognostics with priors inferred from previous trajectories.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        if name == "validate":
            p.add_argument("--for-command", choices=[c for c in COMMANDS if c != "validate"], help="also check fields this command requires")
            continue
        p.add_argument("--out", help=f"output directory (default: config output_dir, else ${OUTPUT_ROOT_ENV}/<command>, else ./priorgp-out/<command>)")
        p.add_argument("--seed", type=int, help="random seed for splits, starts and generators")
        p.add_argument("--threads", type=int, help="worker threads for leave-one-out (timing commands always use 1)")
        p.add_argument("--starts", type=int, help="multi-start count for hyperparameter optimization")
        p.add_argument("--predictive-noise", dest="predictive_noise", action="store_true", default=None, help="add observation noise to predicted intervals")
        p.add_argument("--no-predictive-noise", dest="predictive_noise", action="store_false", help="intervals for the latent function only")
        p.add_argument("--quadrature-direct", dest="quadrature_direct", action="store_true", default=None, help="evaluate Paris bases by direct quadrature instead of the table")
    return parser


def _resolve(args) -> tuple[dict, Path, Path]:
    cfg_path = Path(args.config)
    try:
        cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config not found: {cfg_path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    base = cfg_path.parent.resolve()
    for key in ("seed", "threads", "starts", "predictive_noise", "quadrature_direct"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if args.out:
        out = Path(args.out)
    elif cfg.get("output_dir"):
        out = base / cfg["output_dir"]
    else:
        out = Path(os.environ.get(OUTPUT_ROOT_ENV, "priorgp-out")) / args.command
    if args.command in TIMING_COMMANDS:
        cfg["threads"] = 1
    # the echo must be runnable from anywhere
    for key in ("dataset", "model"):
        if isinstance(cfg.get(key), str):
            cfg[key] = str((base / cfg[key]).resolve())
    return cfg, base, out


def _fail(kind: str, message: str, code: int, details=None) -> int:
    err = {"error": kind, "message": message}
    if details is not None:
        err["details"] = details
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        violations = validate_config(args.config, args.for_command)
        sys.stdout.write(json.dumps({"violations": violations}, indent=2) + "\n")
        return 0 if not violations else 3
    try:
        cfg, base, out = _resolve(args)
        violations = validate_config_dict(cfg, base, args.command)
        if any(v["pointer"].endswith("/label") for v in violations):
            return _fail("usage", "unknown method label", 2, {"labels": list(bench.METHOD_LABELS), "violations": violations})
        if violations:
            return _fail("invalid-config", "config has violations", 3, violations)
        out.mkdir(parents=True, exist_ok=True)
        echo = {"command": args.command, **{k: v for k, v in cfg.items() if k != "output_dir"}}
        (out / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        HANDLERS[args.command](Context(args.command, cfg, base, out))
    except UsageError as exc:
        return _fail("usage", str(exc), 2, exc.details)
    except PriorGPError as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except (OSError, KeyError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
