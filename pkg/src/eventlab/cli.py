"""Command-line surface.

Exit codes: 0 success, 2 validation error, 3 solver infeasibility.  Artifacts
are written to the output directory with the configuration hash embedded for
provenance.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import pandas as pd

from . import pipelines
from .balance import InfeasibleError
from .io import (
    RunConfig,
    config_hash,
    load_divorce_dataset,
    parse_spec,
    read_weights_csv,
    spec_to_dict,
    write_csv,
    write_json,
)
from .panel import PanelError, load_panel

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3


@click.group()
@click.option("--seed", type=int, default=None,
              help="Default random seed for commands that resample.")
@click.pass_context
def main(ctx, seed):
    """Design and analysis of staggered-adoption event studies."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed


def _load(data: str, schema: str | None, allow_missing: bool = False):
    schema_map = json.loads(Path(schema).read_text()) if schema else None
    df = pd.read_csv(data)
    return load_panel(df, schema=schema_map, allow_missing=allow_missing), schema_map


def _spec(spec_path: str):
    doc = json.loads(Path(spec_path).read_text())
    return parse_spec(doc)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InfeasibleError as exc:
            click.echo(f"infeasible: {exc}", err=True)
            diag = {k: v for k, v in exc.diagnosis.items() if k != "residuals"}
            if diag:
                click.echo(json.dumps(diag, default=str), err=True)
            sys.exit(EXIT_INFEASIBLE)
        except (PanelError, FileNotFoundError, json.JSONDecodeError, KeyError,
                pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
    return wrapper


def _common(fn):
    fn = click.option("--data", required=True, help="Panel CSV file.")(fn)
    fn = click.option("--schema", default=None, help="JSON column-name map.")(fn)
    fn = click.option("--out", default=None, envvar="EVENTLAB_OUT",
                      help="Output directory (default ./out).")(fn)
    return fn


def _emit(out: str | None, name: str, payload: dict, run: RunConfig) -> None:
    out_dir = Path(out or "out")
    payload = {"config_hash": run.hash, **payload}
    write_json(out_dir / f"{name}.json", payload)
    click.echo(str(out_dir / f"{name}.json"))


@main.command()
@_common
@click.option("--allow-missing", is_flag=True, default=False)
@_handle_errors
def validate(data, schema, out, allow_missing):
    """Check a panel file and print its shape and cohort structure."""
    panel, schema_map = _load(data, schema, allow_missing)
    payload = pipelines.run_validate(panel)
    run = RunConfig(data=data, schema=schema_map or {})
    _emit(out, "validate", payload, run)
    click.echo(json.dumps(payload, indent=2))


@main.command()
@_common
@click.option("--spec", "spec_path", required=True, help="Estimand/assumption JSON.")
@_handle_errors
def classify(data, schema, out, spec_path):
    """Tag every observation with its validity group and role."""
    panel, schema_map = _load(data, schema)
    estimand, assumptions = _spec(spec_path)
    payload = pipelines.run_classify(panel, estimand, assumptions)
    run = RunConfig(data=data, schema=schema_map or {},
                    spec=spec_to_dict(estimand, assumptions))
    out_dir = Path(out or "out")
    write_csv(out_dir / "classification.csv", pd.DataFrame(payload["tags"]))
    _emit(out, "classify", {k: v for k, v in payload.items() if k != "tags"}, run)


def _estimator_flags(fn):
    fn = click.option("--adjust", default="", help="Comma-separated columns, "
                      '"unit-indicators"/"time-indicators" allowed; "none" for none.')(fn)
    fn = click.option("--nonneg", is_flag=True, default=False)(fn)
    fn = click.option("--delta", type=float, default=None)(fn)
    fn = click.option("--invariance", type=click.Choice(["off", "cohort", "strong"]),
                      default=None, help="Override the spec's invariance mode.")(fn)
    fn = click.option("--target", default="study",
                      help="study | treated | twfe | file:<json path>.")(fn)
    return fn


def _parse_estimator(adjust, nonneg, delta, target):
    adjustment = [] if adjust in ("", "none") else [a.strip() for a in adjust.split(",") if a.strip()]
    if target.startswith("file:"):
        target_value = json.loads(Path(target[5:]).read_text())
    elif target in ("study", "treated", "twfe"):
        target_value = target
    else:
        raise PanelError(f"unknown target {target!r}")
    return {"adjust": adjustment, "nonneg": nonneg, "delta": delta, "target": target_value}


def _apply_invariance(assumptions, invariance):
    if invariance is None:
        return assumptions
    from .panel import AssumptionSet
    mode = "per-cohort" if invariance == "cohort" else invariance
    return AssumptionSet(
        invariance=mode,
        anticipation_kappa=assumptions.anticipation_kappa,
        delay_phi=assumptions.delay_phi,
        dissipation_xi=assumptions.dissipation_xi,
        adjustment_set=assumptions.adjustment_set,
    )


@main.command()
@_common
@click.option("--spec", "spec_path", required=True)
@_estimator_flags
@_handle_errors
def estimate(data, schema, out, spec_path, adjust, nonneg, delta, invariance, target):
    """Balancing-weight (or difference-in-means) estimate of the estimand."""
    panel, schema_map = _load(data, schema)
    estimand, assumptions = _spec(spec_path)
    assumptions = _apply_invariance(assumptions, invariance)
    options = _parse_estimator(adjust, nonneg, delta, target)
    payload = pipelines.run_estimate(panel, estimand, assumptions, options)
    run = RunConfig(data=data, schema=schema_map or {},
                    spec=spec_to_dict(estimand, assumptions), estimator=options)
    out_dir = Path(out or "out")
    write_csv(out_dir / "weights.csv", pd.DataFrame(payload["weights"]))
    _emit(out, "estimate", {k: v for k, v in payload.items() if k != "weights"}, run)
    click.echo(f"estimate: {payload['estimate']!r}")


@main.command()
@_common
@click.option("--spec", "spec_path", default=None)
@click.option("--covariates", default="", help="Comma-separated covariate columns.")
@click.option("--interaction-weighted", is_flag=True, default=False)
@click.option("--decompose", "decompose_target", default=None,
              help='Coefficient to decompose, e.g. "tau=5".')
@_handle_errors
def twfe(data, schema, out, spec_path, covariates, interaction_weighted, decompose_target):
    """Fit the two-way fixed-effects regression; optionally decompose one
    coefficient into implied weights."""
    panel, schema_map = _load(data, schema)
    options = {
        "covariates": [c.strip() for c in covariates.split(",") if c.strip()],
        "interaction_weighted": interaction_weighted,
        "decompose": _tau_target(decompose_target),
    }
    payload = pipelines.run_twfe(panel, options)
    run = RunConfig(data=data, schema=schema_map or {}, estimator=options)
    out_dir = Path(out or "out")
    if "decomposition" in payload:
        write_csv(out_dir / "weights.csv",
                  pd.DataFrame(payload["decomposition"]["weights"]))
        payload["decomposition"] = {k: v for k, v in payload["decomposition"].items()
                                    if k != "weights"}
    _emit(out, "twfe", payload, run)


def _tau_target(value: str | None) -> str | None:
    if value is None:
        return None
    if value.startswith("tau="):
        return f"tau[{int(value[4:])}]"
    return value


@main.command()
@_common
@click.option("--spec", "spec_path", required=True)
@click.option("--tau", "tau_l", type=int, default=None,
              help="Relative time to decompose (default: the estimand horizon).")
@_handle_errors
def decompose(data, schema, out, spec_path, tau_l):
    """Implied-weight decomposition of a dynamic-regression coefficient,
    summarized by validity group."""
    panel, schema_map = _load(data, schema)
    estimand, assumptions = _spec(spec_path)
    options = {"decompose": f"tau[{tau_l}]" if tau_l is not None else None}
    payload = pipelines.run_decompose(panel, estimand, assumptions, options)
    run = RunConfig(data=data, schema=schema_map or {},
                    spec=spec_to_dict(estimand, assumptions), estimator=options)
    out_dir = Path(out or "out")
    write_csv(out_dir / "weights.csv", pd.DataFrame(payload["weights"]))
    _emit(out, "decompose", {k: v for k, v in payload.items() if k != "weights"}, run)


@main.command()
@_common
@click.option("--spec", "spec_path", required=True)
@click.option("--in", "weights_path", default=None,
              help="Weight CSV to diagnose (default: implied weights).")
@_handle_errors
def diagnose(data, schema, out, spec_path, weights_path):
    """ESS, information shares, balance, dispersion, influence, sign reversals."""
    panel, schema_map = _load(data, schema)
    estimand, assumptions = _spec(spec_path)
    weights = None
    if weights_path:
        weights = read_weights_csv(weights_path).to_dict(orient="records")
    payload = pipelines.run_diagnose(panel, estimand, assumptions, weights)
    run = RunConfig(data=data, schema=schema_map or {},
                    spec=spec_to_dict(estimand, assumptions))
    _emit(out, "diagnose", payload, run)


@main.command()
@_common
@click.option("--spec", "spec_path", required=True)
@click.option("--family", type=click.Choice(["estimate", "twfe"]), default="estimate")
@click.option("--reps", type=int, default=500)
@click.option("--seed", type=int, default=None)
@_estimator_flags
@click.pass_context
@_handle_errors
def bootstrap(ctx, data, schema, out, spec_path, family, reps, seed,
              adjust, nonneg, delta, invariance, target):
    """Unit-cluster bootstrap SE and percentile CI for one estimator."""
    seed = seed if seed is not None else ctx.obj.get("seed")
    panel, schema_map = _load(data, schema)
    estimand, assumptions = _spec(spec_path)
    assumptions = _apply_invariance(assumptions, invariance)
    options = _parse_estimator(adjust, nonneg, delta, target)
    options.update({"family": family,
                    "bootstrap": {"replications": reps, "seed": seed}})
    payload = pipelines.run_bootstrap(panel, estimand, assumptions, options)
    run = RunConfig(data=data, schema=schema_map or {},
                    spec=spec_to_dict(estimand, assumptions),
                    estimator=options, seed=seed)
    _emit(out, "bootstrap", payload, run)
    click.echo(json.dumps(payload, indent=2))


@main.command(name="event-study")
@_common
@click.option("--spec", "spec_path", required=True)
@click.option("--family", type=click.Choice(["twfe", "robust"]), default="twfe")
@click.option("--l-min", type=int, default=None)
@click.option("--l-max", type=int, default=None)
@click.option("--reps", type=int, default=0, help="Bootstrap replications (0 = point estimates only).")
@click.option("--seed", type=int, default=None)
@_estimator_flags
@click.pass_context
@_handle_errors
def event_study(ctx, data, schema, out, spec_path, family, l_min, l_max, reps, seed,
                adjust, nonneg, delta, invariance, target):
    """Per-relative-time estimates, exported as plot data (CSV + JSON)."""
    seed = seed if seed is not None else ctx.obj.get("seed")
    panel, schema_map = _load(data, schema)
    estimand, assumptions = _spec(spec_path)
    assumptions = _apply_invariance(assumptions, invariance)
    options = _parse_estimator(adjust, nonneg, delta, target)
    options["family"] = family
    if l_min is not None and l_max is not None:
        options["l_range"] = [l_min, l_max]
    if reps:
        options["bootstrap"] = {"replications": reps, "seed": seed}
    payload = pipelines.run_event_study(panel, estimand, assumptions, options)
    run = RunConfig(data=data, schema=schema_map or {},
                    spec=spec_to_dict(estimand, assumptions),
                    estimator=options, seed=seed)
    out_dir = Path(out or "out")
    curve = pd.DataFrame(payload["curve"], columns=["l", "estimate", "se", "lo", "hi", "flag"])
    write_csv(out_dir / "curve.csv", curve)
    _emit(out, "event-study", payload, run)


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
def serve(port, host):
    """Start the HTTP analysis service."""
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(), host=host, port=port)


@main.command(name="load-divorce")
@click.option("--data", required=True)
@_handle_errors
def load_divorce(data):
    """Validate the divorce-reform dataset and print its shape."""
    panel = load_divorce_dataset(data)
    click.echo(json.dumps(pipelines.run_validate(panel), indent=2))


if __name__ == "__main__":
    main()
