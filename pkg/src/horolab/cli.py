"""Command line runner: ``horolab run <experiment>``.

Flags override the ``--config`` JSON file, which overrides the built-in
defaults.  The effective config is echoed into report.json.
Exit codes: 0 all metrics pass, 1 a metric or the numerics failed,
2 the config is invalid (nothing is written).
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Optional

import click
import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from . import __version__
from .errors import HorolabError
from .experiments import EXPERIMENTS, RUNNERS
from .models import ManifoldModel

ExperimentName = Literal["oracle-check", "riccati", "boundary-products", "quasimetric", "ahlfors",
                         "derivative", "cocycle-growth", "holder", "symmetry-defect"]

MODEL_ALIASES = {"constant": "constant", "perturbed": "perturbed_axial",
                 "perturbed_axial": "perturbed_axial"}


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant", "perturbed_axial"]
    a: Optional[float] = None
    b: Optional[float] = None
    amplitude: Optional[float] = None
    support_radius: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def _alias(cls, data):
        if isinstance(data, str):
            data = {"kind": data}
        if isinstance(data, dict) and isinstance(data.get("kind"), str):
            data = dict(data, kind=MODEL_ALIASES.get(data["kind"], data["kind"]))
        return data

    def build(self):
        desc = {k: v for k, v in self.model_dump().items() if v is not None}
        return ManifoldModel.from_descriptor(desc)


class ExperimentConfig(BaseModel):
    """Schema for one experiment run; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    model: ModelConfig = ModelConfig(kind="constant")
    epsilon: Optional[float] = None
    p: Optional[float] = None
    seed: int = 0
    n_samples: int = 100_000
    n_triples: int = 100_000
    n_checks: int = 100
    n_instances: int = 1000
    n_centres: int = 20
    n_pairs: int = 500
    n_geodesics: int = 50
    horizon: float = 20.0
    riccati_horizon: float = 15.0
    kmax: int = 8
    translation_length: Optional[float] = None
    out: str = "horolab-out"

    @model_validator(mode="after")
    def _defaults(self):
        const = self.model.kind == "constant"
        if self.epsilon is None:
            self.epsilon = 1.0 if const else 0.25
        if self.p is None:
            self.p = 2.0 / self.epsilon
        if self.translation_length is None:
            self.translation_length = 1.0 if const else 4.0
        if self.epsilon <= 0 or self.p <= 0:
            raise ValueError("epsilon and p must be positive")
        for name in ("n_samples", "n_triples", "n_checks", "n_instances", "n_centres",
                     "n_pairs", "n_geodesics", "kmax"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.horizon <= 0 or self.riccati_horizon <= 0 or self.translation_length <= 0:
            raise ValueError("horizons and translation_length must be positive")
        return self


def _clean(obj):
    """JSON-safe copy; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def run_experiment(cfg: ExperimentConfig):
    """Run one experiment, write its outputs and return (report, passed)."""
    model = cfg.model.build()
    t0 = time.perf_counter()
    outcome = RUNNERS[cfg.experiment](model, cfg)
    wall = time.perf_counter() - t0

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, (header, rows) in outcome.series.items():
        rows = list(rows)
        write_csv(out / f"{name}.csv", header, rows)
        files.append(f"{name}.csv")
        if len(header) > 2:
            write_csv(out / f"{name}.xy.csv", header[:2], [r[:2] for r in rows])
            files.append(f"{name}.xy.csv")
    if outcome.samples is not None:
        outcome.samples.to_csv(out / "nu_samples.csv")
        files.append("nu_samples.csv")

    failing = [m["name"] for m in outcome.metrics if not m["pass"]]
    report = {
        "config": _clean(cfg.model_dump()),
        "results": _clean({
            "experiment": cfg.experiment,
            "model": model.to_descriptor(),
            "passed": not failing,
            "failing": failing,
            "metrics": outcome.metrics,
            "details": outcome.details,
            "files": files,
        }),
        "meta": {
            "version": __version__,
            "wall_time_s": wall,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "seeds": {"seed": cfg.seed},
            "threads": os.environ.get("HOROLAB_THREADS"),
        },
    }
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report, not failing


def load_config(experiment, config_file, overrides):
    data = {}
    if config_file is not None:
        try:
            data = json.loads(Path(config_file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"cannot read config {config_file}: {exc}")
        if not isinstance(data, dict):
            raise click.UsageError("config file must hold a JSON object")
    if data.get("experiment", experiment) != experiment:
        raise click.UsageError(
            f"config names experiment {data['experiment']!r}, command line {experiment!r}")
    data["experiment"] = experiment
    for key, val in overrides.items():
        if val is None:
            continue
        if key == "model":
            if val.lstrip().startswith("{"):
                try:
                    val = json.loads(val)
                except json.JSONDecodeError as exc:
                    raise click.UsageError(f"--model is not valid JSON: {exc}")
            elif isinstance(data.get("model"), dict):
                val = dict(data["model"], kind=val)
        data[key] = val
    try:
        cfg = ExperimentConfig.model_validate(data)
        cfg.model.build()
    except ValidationError as exc:
        raise click.UsageError(f"invalid config:\n{exc}")
    except HorolabError as exc:
        raise click.UsageError(f"invalid model: {exc}")
    return cfg


@click.group()
@click.version_option(__version__, prog_name="horolab")
def main():
    """Numerical experiments on horocycle curvature and boundary cocycles."""


@main.command()
@click.argument("experiment", type=click.Choice(EXPERIMENTS))
@click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None,
              help="JSON config file; flags override its values.")
@click.option("--model", default=None,
              help="constant, perturbed_axial (or perturbed) or a JSON model descriptor.")
@click.option("--epsilon", type=float, default=None)
@click.option("--p", "p", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--n-samples", type=int, default=None)
@click.option("--n-triples", type=int, default=None)
@click.option("--n-checks", type=int, default=None)
@click.option("--n-instances", type=int, default=None)
@click.option("--n-centres", type=int, default=None)
@click.option("--n-pairs", type=int, default=None)
@click.option("--n-geodesics", type=int, default=None)
@click.option("--horizon", type=float, default=None)
@click.option("--riccati-horizon", type=float, default=None)
@click.option("--kmax", type=int, default=None)
@click.option("--translation-length", type=float, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def run(experiment, config_file, **overrides):
    """Run EXPERIMENT and write report.json plus CSV series to --out."""
    cfg = load_config(experiment, config_file, overrides)
    try:
        report, passed = run_experiment(cfg)
    except HorolabError as exc:
        click.echo(f"numerical failure: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)
    res = report["results"]
    for m in res["metrics"]:
        click.echo(f"{'PASS' if m['pass'] else 'FAIL'}  {m['name']}  value={m['value']}")
    if "verdict" in res["details"]:
        click.echo(f"verdict: {res['details']['verdict']}")
    click.echo(f"report: {Path(cfg.out) / 'report.json'}")
    if not passed:
        click.echo(f"failing metric(s): {', '.join(res['failing'])}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
