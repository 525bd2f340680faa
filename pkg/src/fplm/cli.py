"""Command-line front end.

Subcommands: simulate, fit, predict, select-semimetric, bench. Every
command is deterministic given its inputs and seed, and the fixed
output names are summary.json, chain.csv, density.csv,
predictions.csv and report.csv inside the --out directory. A JSON
config file can preload any option; explicit flags win.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import click
import numpy as np

from .bayes import (
    FnpSamplerModel,
    FplmSamplerModel,
    InverseGammaPrior,
    McmcConfig,
    chib_marginal_likelihood,
    diagnostics,
    posterior_error_density,
    run_sampler,
    select_semimetric,
)
from .datasets import find_tecator, parse_tecator
from .error_density import (
    GlobalKernelDensity,
    LocalizedKernelDensity,
    density_curve,
    prediction_interval,
)
from .estimators import derive_first_derivative, predict_fnp, predict_fplm
from .functional import FunctionalSample
from .simulation import (
    ERROR_KINDS,
    StudyArm,
    attach_errors,
    bootstrap_study,
    run_replication_study,
    simulate_rough,
    simulate_smooth,
    simulation_grid,
)

__all__ = [
    "RunConfig",
    "main",
    "cmd_fit",
    "cmd_predict",
    "cmd_select_semimetric",
    "cmd_bench",
    "read_csv_columns",
    "read_report_csv",
]

_GLOBAL = "global"


@dataclass(frozen=True)
class RunConfig:
    """Resolved command parameters; paths checked at construction."""

    command: str
    out: Path
    input: Path | None = None
    model: str = "fplm"
    semimetrics: tuple[str, ...] = ("deriv:2",)
    bandwidth_mode: str = _GLOBAL
    prior: tuple[float, float] = (1.0, 0.05)
    iters: int = 10_000
    burnin: int = 1_000
    seed: int = 0
    level: float | None = None
    fit_dir: Path | None = None
    dgp: str | None = None
    density: str | None = None
    n: int = 100
    B: int = 20
    bootstrap: int | None = None
    n_train: int = 160

    def __post_init__(self):
        if self.input is not None and not Path(self.input).exists():
            raise click.UsageError(f"input path not found: {self.input}")
        if self.fit_dir is not None and not Path(self.fit_dir).exists():
            raise click.UsageError(f"fit artifact not found: {self.fit_dir}")

    def mcmc(self) -> McmcConfig:
        prior = InverseGammaPrior(*self.prior)
        return McmcConfig(n_burnin=self.burnin, n_iter=self.iters,
                          seed=self.seed, bandwidth_mode=self.bandwidth_mode,
                          prior_h=prior, prior_b=prior)


# ---------------------------------------------------------------------------
# serialization helpers


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _write_columns(path: Path, columns: dict[str, np.ndarray]) -> Path:
    names = list(columns)
    length = len(next(iter(columns.values())))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(length):
            writer.writerow([_fmt(columns[c][i]) for c in names])
    return path


def read_csv_columns(path) -> dict[str, np.ndarray]:
    """Read back any numeric CSV this module emitted."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def read_report_csv(path) -> list[dict]:
    """Rows of a bench/selection report with value parsed as float."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("value", "lml", "log_bayes_factor"):
            if key in row and row[key] != "":
                row[key] = float(row[key])
    return rows


def _chain_csv(path: Path, chain) -> Path:
    cols = {"iter": np.arange(1, chain.n_draws + 1, dtype=float),
            "h2": chain.h2, "b2_or_tau2": chain.b2}
    if chain.tau_eps is not None:
        cols["tau_eps"] = chain.tau_eps
    cols["accepted_h"] = chain.accept_h.astype(float)
    cols["accepted_b"] = chain.accept_b.astype(float)
    cols["log_post"] = chain.log_post
    return _write_columns(path, cols)


def _density_csv(path: Path, density) -> Path:
    eps, f = density_curve(density)
    return _write_columns(path, {"eps": eps, "density": f})


def _summary_parameters(summary) -> dict:
    return {
        p.name: {"mean": p.mean, "ci_lower": p.ci_lower,
                 "ci_upper": p.ci_upper, "naive_se": p.naive_se,
                 "batch_se": p.batch_se, "sif": p.sif}
        for p in summary.parameters
    }


# ---------------------------------------------------------------------------
# input handling


def _read_input(path: Path):
    """Sniff and load one of the accepted input layouts.

    Returns (X, Z or None, y or None, g or None). Tecator files map the
    fat response to y; simulated CSVs carry x_*, optional z_*, and
    optional g/y columns.
    """
    head = ""
    with Path(path).open() as fh:
        head = fh.readline().strip()
    if head.startswith("spectrum_0"):
        ds = parse_tecator(path)
        return ds.spectra, ds.derivative(), ds.fat, None
    if head.startswith("x_0"):
        cols = read_csv_columns(path)
        m = sum(1 for c in cols if c.startswith("x_"))
        X = np.column_stack([cols[f"x_{j}"] for j in range(m)])
        grid = simulation_grid(m)
        Xs = FunctionalSample(grid, X)
        Zs = None
        if "z_0" in cols:
            Z = np.column_stack([cols[f"z_{j}"] for j in range(m)])
            Zs = FunctionalSample(grid, Z)
        y = cols.get("y")
        g = cols.get("g")
        return Xs, Zs, y, g
    ds = parse_tecator(path)
    return ds.spectra, ds.derivative(), ds.fat, None


def _require_response(y, path: Path) -> np.ndarray:
    if y is None:
        raise click.UsageError(f"input has no response column: {path}")
    return np.asarray(y, dtype=float)


# ---------------------------------------------------------------------------
# command cores (thin click wrappers below)


def cmd_simulate(config: RunConfig) -> dict[str, Path]:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    simulate = simulate_smooth if config.dgp != "rough" else simulate_rough
    draw = simulate(config.n, seed=config.seed)
    kind = config.density or "t5"
    draw = attach_errors(draw, kind, seed=config.seed + 1)
    m = draw.X.grid.m
    cols: dict[str, np.ndarray] = {}
    for j in range(m):
        cols[f"x_{j}"] = draw.X.values[:, j]
    for j in range(m):
        cols[f"z_{j}"] = draw.Z.values[:, j]
    cols["g"] = draw.g
    cols["y"] = draw.y
    data = _write_columns(out / "simulated.csv", cols)
    summary = _write_json(out / "summary.json", {
        "command": "simulate", "dgp": config.dgp or "smooth",
        "density": kind, "n": config.n, "seed": config.seed,
    })
    return {"data": data, "summary": summary}


def cmd_fit(config: RunConfig) -> dict[str, Path]:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    X, Z, y, _ = _read_input(config.input)
    y = _require_response(y, config.input)
    spec = config.semimetrics[0]
    if config.model == "fplm":
        model = FplmSamplerModel(X, y, Z=Z, spec=spec)
    elif config.model == "fnp":
        model = FnpSamplerModel(X, y, spec=spec)
    else:
        raise click.UsageError(f"unknown model {config.model!r}")
    mcmc = config.mcmc()
    chain = run_sampler(model, mcmc)
    summary = diagnostics(chain)
    h = summary.parameter("h").mean
    fit = model.refit(h)
    density = posterior_error_density(chain, fit.residuals)
    lml = chib_marginal_likelihood(chain, model, mcmc)
    bandwidth = {"h": h}
    if chain.mode == _GLOBAL:
        bandwidth["b"] = summary.parameter("b").mean
    else:
        bandwidth["tau"] = summary.parameter("tau").mean
        bandwidth["tau_eps"] = summary.parameter("tau_eps").mean
    rmse = float(np.sqrt(np.mean(fit.residuals ** 2)))
    payload = {
        "command": "fit",
        "model": config.model,
        "semimetric": spec,
        "bandwidth_mode": config.bandwidth_mode,
        "prior": {"shape": config.prior[0], "scale": config.prior[1]},
        "iterations": config.iters,
        "burnin": config.burnin,
        "seed": config.seed,
        "n": int(y.size),
        "parameters": _summary_parameters(summary),
        "acceptance": summary.acceptance,
        "bandwidth": bandwidth,
        "lml": lml,
        "rmse": rmse,
        "beta": (None if config.model != "fplm"
                 else [float(v) for v in fit.beta_hat]),
        "n_pc_beta": (None if config.model != "fplm"
                      else int(fit.n_pc_beta)),
        "fitted": [float(v) for v in fit.fitted],
        "residuals": [float(v) for v in fit.residuals],
    }
    paths = {
        "summary": _write_json(out / "summary.json", payload),
        "chain": _chain_csv(out / "chain.csv", chain),
        "density": _density_csv(out / "density.csv", density),
    }
    train_cols: dict[str, np.ndarray] = {}
    m = X.grid.m
    for j in range(m):
        train_cols[f"x_{j}"] = X.values[:, j]
    Z_used = Z if Z is not None else (
        derive_first_derivative(X) if config.model == "fplm" else None)
    if Z_used is not None:
        for j in range(m):
            train_cols[f"z_{j}"] = Z_used.values[:, j]
    train_cols["y"] = y
    paths["train"] = _write_columns(out / "train.csv", train_cols)
    return paths


def _rebuild_fit(fit_dir: Path):
    summary = json.loads((fit_dir / "summary.json").read_text())
    X, Z, y, _ = _read_input(fit_dir / "train.csv")
    y = _require_response(y, fit_dir / "train.csv")
    if summary["model"] == "fplm":
        model = FplmSamplerModel(X, y, Z=Z, spec=summary["semimetric"],
                                 n_pc_beta=summary["n_pc_beta"])
    else:
        model = FnpSamplerModel(X, y, spec=summary["semimetric"])
    fit = model.refit(summary["bandwidth"]["h"])
    residuals = np.asarray(summary["residuals"], dtype=float)
    if summary["bandwidth_mode"] == _GLOBAL:
        density = GlobalKernelDensity(residuals, b=summary["bandwidth"]["b"])
    else:
        density = LocalizedKernelDensity(
            residuals, tau=summary["bandwidth"]["tau"],
            tau_eps=summary["bandwidth"]["tau_eps"])
    return summary, model, fit, density


def cmd_predict(config: RunConfig) -> dict[str, Path]:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    summary, model, fit, density = _rebuild_fit(config.fit_dir)
    X_new, Z_new, _, _ = _read_input(config.input)
    train_sample = model.X if summary["model"] == "fplm" else \
        model.curves_sample
    if X_new.grid.m != train_sample.grid.m:
        raise ValueError(
            f"grid mismatch: fit has {train_sample.grid.m} points, "
            f"input has {X_new.grid.m}")
    if summary["model"] == "fplm":
        Z_eff = Z_new if Z_new is not None else derive_first_derivative(X_new)
        pred = predict_fplm(fit, X_new, Z_eff)
    else:
        pred = predict_fnp(fit, X_new)
    cols = {"unit": np.arange(1, pred.size + 1, dtype=float),
            "prediction": pred}
    if config.level is not None:
        lows, highs = [], []
        for p in pred:
            interval = prediction_interval(density, float(p), config.level)
            lows.append(interval.lower)
            highs.append(interval.upper)
        cols["lower"] = np.asarray(lows)
        cols["upper"] = np.asarray(highs)
    paths = {"predictions": _write_columns(out / "predictions.csv", cols)}
    paths["summary"] = _write_json(out / "summary.json", {
        "command": "predict", "fit_dir": str(config.fit_dir),
        "n": int(pred.size),
        "level": config.level,
    })
    return paths


def cmd_select_semimetric(config: RunConfig) -> dict[str, Path]:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    if len(config.semimetrics) < 2:
        raise click.UsageError("need at least 2 --semimetric candidates")
    X, Z, y, _ = _read_input(config.input)
    y = _require_response(y, config.input)

    def builder(spec):
        return FplmSamplerModel(X, y, Z=Z, spec=spec)

    results = select_semimetric(builder, list(config.semimetrics),
                                config.mcmc())
    results = sorted(results, key=lambda r: r.rank)
    with (out / "report.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "semimetric", "lml", "log_bayes_factor",
                         "error"])
        for r in results:
            writer.writerow([
                r.rank, r.spec.token(),
                "" if r.lml is None else _fmt(r.lml),
                "" if r.log_bayes_factor is None else _fmt(r.log_bayes_factor),
                r.error or ""])
    payload = {
        "command": "select-semimetric",
        "seed": config.seed,
        "ranking": [
            {"rank": r.rank, "semimetric": r.spec.token(), "lml": r.lml,
             "log_bayes_factor": r.log_bayes_factor, "error": r.error}
            for r in results],
    }
    return {"report": out / "report.csv",
            "summary": _write_json(out / "summary.json", payload)}


def cmd_bench(config: RunConfig) -> dict[str, Path]:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    spec = config.semimetrics[0]
    arms = (
        StudyArm(name="fplm", model="fplm", semimetric=spec,
                 bandwidth_mode=config.bandwidth_mode),
        StudyArm(name="fnp", model="fnp", semimetric=spec),
        StudyArm(name="fpcr", model="fpcr", semimetric=spec),
    )
    if config.bootstrap is not None:
        ds = parse_tecator(config.input)
        report = bootstrap_study(ds.spectra, ds.fat, arms,
                                 Z=ds.derivative(), n_boot=config.bootstrap,
                                 seed=config.seed, n_train=config.n_train,
                                 mcmc=config.mcmc())
        mode = "bootstrap"
    else:
        densities = ((config.density,) if config.density else ERROR_KINDS)
        report = run_replication_study(
            arms, densities=densities, n=config.n, B=config.B,
            seed=config.seed, mcmc=config.mcmc(),
            dgp=config.dgp or "smooth")
        mode = "replication"
    with (out / "report.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "semimetric", "density", "metric", "value",
                         "replication"])
        for row in report.rows:
            writer.writerow([row.arm, row.semimetric, row.density,
                             row.metric, _fmt(row.value), row.replication])
    payload = {
        "command": "bench", "mode": mode, "seed": config.seed,
        "n_replications": report.n_replications,
        "table": report.table(),
        "n_failures": len(report.failures),
        "failures": [asdict(f) for f in report.failures],
    }
    return {"report": out / "report.csv",
            "summary": _write_json(out / "summary.json", payload)}


# ---------------------------------------------------------------------------
# click wiring


def _parse_prior(ctx, param, value):
    if value is None:
        return (1.0, 0.05)
    try:
        a, b = (float(part) for part in value.split(","))
    except ValueError:
        raise click.UsageError(
            f"--prior expects 'shape,scale', got {value!r}") from None
    if a <= 0 or b <= 0:
        raise click.UsageError("--prior parameters must be positive")
    return (a, b)


def _load_config_file(ctx, config_path):
    """Fill parameters from a JSON config; explicit flags win."""
    if config_path is None:
        return
    try:
        overrides = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"bad config file {config_path}: {exc}")
    if not isinstance(overrides, dict):
        raise click.UsageError("config file must hold a JSON object")
    from click.core import ParameterSource
    aliases = {"input": "input_path", "fit": "fit_dir",
               "B": "n_reps", "tecator": "tecator_opt"}
    for key, value in overrides.items():
        name = key.replace("-", "_")
        name = aliases.get(name, name)
        if name not in ctx.params:
            raise click.UsageError(f"unknown config key {key!r}")
        source = ctx.get_parameter_source(name)
        if source in (ParameterSource.DEFAULT, ParameterSource.DEFAULT_MAP):
            if name == "semimetric" and isinstance(value, str):
                value = [value]
            if name == "prior":
                if isinstance(value, (list, tuple)):
                    value = ",".join(str(v) for v in value)
                value = _parse_prior(ctx, None, value)
            ctx.params[name] = value


def _run(ctx, make_config, runner):
    try:
        config = make_config()
        paths = runner(config)
    except click.UsageError:
        raise
    except Exception as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(1)
    for name, path in sorted(paths.items()):
        click.echo(f"{name}: {path}")


_common = [
    click.option("--config", "config_file", type=click.Path(), default=None,
                 help="JSON file preloading any option; flags win."),
    click.option("--out", type=click.Path(), default="out",
                 help="Output directory."),
    click.option("--seed", type=int, default=0, show_default=True),
]


def _add(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return wrap


_mcmc_opts = [
    click.option("--semimetric", multiple=True,
                 help="deriv:1 | deriv:2 | fpca:K (repeatable)."),
    click.option("--bandwidth-mode",
                 type=click.Choice([_GLOBAL, "localized"]),
                 default=_GLOBAL, show_default=True),
    click.option("--prior", callback=_parse_prior, default=None,
                 help="Inverse-gamma 'shape,scale' for both bandwidths."),
    click.option("--iters", type=int, default=10_000, show_default=True),
    click.option("--burnin", type=int, default=1_000, show_default=True),
]


@click.group()
def main():
    """Semiparametric scalar-on-function regression toolkit."""


@main.command()
@click.option("--dgp", type=click.Choice(["smooth", "rough"]),
              default="smooth", show_default=True)
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--density", type=click.Choice(list(ERROR_KINDS)),
              default="t5", show_default=True)
@_add(_common)
@click.pass_context
def simulate(ctx, dgp, n, density, config_file, out, seed):
    """Write a synthetic sample as simulated.csv."""
    _load_config_file(ctx, config_file)
    p = ctx.params
    _run(ctx, lambda: RunConfig(
        command="simulate", out=Path(p["out"]), dgp=p["dgp"], n=p["n"],
        density=p["density"], seed=p["seed"]), cmd_simulate)


@main.command()
@click.option("--input", "input_path", type=click.Path(), required=True)
@click.option("--model", type=click.Choice(["fplm", "fnp"]),
              default="fplm", show_default=True)
@_add(_mcmc_opts)
@_add(_common)
@click.pass_context
def fit(ctx, input_path, model, semimetric, bandwidth_mode, prior, iters,
        burnin, config_file, out, seed):
    """Run the sampler and write fit artifacts."""
    _load_config_file(ctx, config_file)
    p = ctx.params
    sm = tuple(p["semimetric"]) or ("deriv:2",)
    if len(sm) > 1:
        raise click.UsageError("fit takes a single --semimetric")
    _run(ctx, lambda: RunConfig(
        command="fit", out=Path(p["out"]), input=Path(p["input_path"]),
        model=p["model"], semimetrics=sm,
        bandwidth_mode=p["bandwidth_mode"], prior=p["prior"],
        iters=p["iters"], burnin=p["burnin"], seed=p["seed"]), cmd_fit)


@main.command()
@click.option("--fit", "fit_dir", type=click.Path(), required=True,
              help="Directory written by the fit command.")
@click.option("--input", "input_path", type=click.Path(), required=True)
@click.option("--level", type=float, default=None,
              help="Add pointwise interval columns at this level.")
@_add(_common)
@click.pass_context
def predict(ctx, fit_dir, input_path, level, config_file, out, seed):
    """Predict new units from a saved fit; optional intervals."""
    _load_config_file(ctx, config_file)
    p = ctx.params
    if p["level"] is not None and not 0.0 < p["level"] < 1.0:
        raise click.UsageError("--level must lie strictly between 0 and 1")
    _run(ctx, lambda: RunConfig(
        command="predict", out=Path(p["out"]), input=Path(p["input_path"]),
        fit_dir=Path(p["fit_dir"]), level=p["level"], seed=p["seed"]),
        cmd_predict)


@main.command("select-semimetric")
@click.option("--input", "input_path", type=click.Path(), required=True)
@_add(_mcmc_opts)
@_add(_common)
@click.pass_context
def select_semimetric_cmd(ctx, input_path, semimetric, bandwidth_mode,
                          prior, iters, burnin, config_file, out, seed):
    """Rank semi-metric candidates by log marginal likelihood."""
    _load_config_file(ctx, config_file)
    p = ctx.params
    _run(ctx, lambda: RunConfig(
        command="select-semimetric", out=Path(p["out"]),
        input=Path(p["input_path"]), semimetrics=tuple(p["semimetric"]),
        bandwidth_mode=p["bandwidth_mode"], prior=p["prior"],
        iters=p["iters"], burnin=p["burnin"], seed=p["seed"]),
        cmd_select_semimetric)


@main.command()
@click.option("--dgp", type=click.Choice(["smooth", "rough"]), default=None)
@click.option("--density", type=click.Choice(list(ERROR_KINDS)), default=None,
              help="Restrict the replication study to one error law.")
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--B", "n_reps", type=int, default=20, show_default=True,
              help="Replications.")
@click.option("--tecator", "tecator_opt", is_flag=False, flag_value="",
              default=None,
              help="Bootstrap on the dataset at PATH (or discovered "
                   "via FPLM_TECATOR_PATH / the cache dir when bare).")
@click.option("--bootstrap", type=int, default=None,
              help="Number of bootstrap resamples.")
@click.option("--n-train", type=int, default=160, show_default=True)
@_add(_mcmc_opts)
@_add(_common)
@click.pass_context
def bench(ctx, dgp, density, n, n_reps, tecator_opt, bootstrap, n_train,
          semimetric, bandwidth_mode, prior, iters, burnin, config_file,
          out, seed):
    """Replication study on synthetic data or bootstrap on a dataset."""
    _load_config_file(ctx, config_file)
    p = ctx.params
    sm = tuple(p["semimetric"]) or ("deriv:2",)
    if (p["tecator_opt"] is None) != (p["bootstrap"] is None):
        raise click.UsageError(
            "--tecator and --bootstrap must be given together")
    if p["tecator_opt"] is not None:
        found = find_tecator(p["tecator_opt"] or None)
        if found is None:
            if p["tecator_opt"]:
                raise click.UsageError(
                    f"input path not found: {p['tecator_opt']}")
            raise click.UsageError(
                "no dataset found; pass --tecator PATH or set "
                "FPLM_TECATOR_PATH")
        input_path = found
    else:
        input_path = None
    _run(ctx, lambda: RunConfig(
        command="bench", out=Path(p["out"]), input=input_path,
        semimetrics=sm, bandwidth_mode=p["bandwidth_mode"],
        prior=p["prior"], iters=p["iters"], burnin=p["burnin"],
        seed=p["seed"], dgp=p["dgp"], density=p["density"], n=p["n"],
        B=p["n_reps"], bootstrap=p["bootstrap"], n_train=p["n_train"]),
        cmd_bench)


if __name__ == "__main__":
    main()
