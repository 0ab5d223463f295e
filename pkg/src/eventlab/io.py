"""Serialization, run configuration, and dataset loaders.

Numeric CSV output uses 17 significant digits and JSON floats use shortest
round-trip representation, so artifacts diff meaningfully across
implementations and re-load to equal values.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .panel import NEVER, AssumptionSet, EstimandSpec, Panel, PanelError, load_panel

__all__ = [
    "config_hash",
    "write_json",
    "write_csv",
    "read_weights_csv",
    "parse_spec",
    "spec_to_dict",
    "RunConfig",
    "load_divorce_dataset",
]

_CSV_FLOAT = "%.17g"


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(obj) -> str:
    """Stable content hash of any JSON-serializable configuration."""
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()[:16]


def write_json(path: str | Path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON-serializable: {type(v)}")


def write_csv(path: str | Path, df: pd.DataFrame) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=_CSV_FLOAT)


def read_weights_csv(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    required = {"unit", "time", "component", "weight"}
    missing = required - set(df.columns)
    if missing:
        raise PanelError(f"weight file missing columns {sorted(missing)}")
    return df


def parse_spec(spec: Mapping) -> tuple[EstimandSpec, AssumptionSet]:
    """Read the estimand/assumption JSON document.

    Layout: {"estimand": {"t1", "ty", "reference": {label-or-"never": p},
    "target_population"}, "assumptions": {"invariance", "anticipation_kappa",
    "delay_phi", "dissipation_xi", "adjustment_set"}}.
    """
    if "estimand" not in spec:
        raise PanelError('spec document needs an "estimand" section')
    e = spec["estimand"]
    reference = None
    if e.get("reference") is not None:
        reference = {
            (NEVER if str(k).lower() == NEVER else int(k)): float(v)
            for k, v in e["reference"].items()
        }
    estimand = EstimandSpec(
        t1=int(e["t1"]),
        ty=int(e["ty"]),
        reference=reference,
        target_population=e.get("target_population", "study-sample"),
    )
    a = spec.get("assumptions", {})
    assumptions = AssumptionSet(
        invariance=a.get("invariance", "off"),
        anticipation_kappa=a.get("anticipation_kappa"),
        delay_phi=a.get("delay_phi"),
        dissipation_xi=a.get("dissipation_xi"),
        adjustment_set=tuple(a.get("adjustment_set", ())),
    )
    return estimand, assumptions


def spec_to_dict(estimand: EstimandSpec, assumptions: AssumptionSet) -> dict:
    return {
        "estimand": {
            "t1": estimand.t1,
            "ty": estimand.ty,
            "reference": {str(k): v for k, v in estimand.resolved_reference().items()},
            "target_population": estimand.target_population,
        },
        "assumptions": {
            "invariance": assumptions.invariance,
            "anticipation_kappa": assumptions.anticipation_kappa,
            "delay_phi": assumptions.delay_phi,
            "dissipation_xi": assumptions.dissipation_xi,
            "adjustment_set": list(assumptions.adjustment_set),
        },
    }


@dataclass
class RunConfig:
    """Everything needed to reproduce a run: data + spec + estimator + seed."""

    data: str
    schema: dict = field(default_factory=dict)
    spec: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    bootstrap: dict = field(default_factory=dict)
    out: str = "out"
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "data": self.data, "schema": self.schema, "spec": self.spec,
            "estimator": self.estimator, "bootstrap": self.bootstrap,
            "out": self.out, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        return cls(
            data=d["data"], schema=dict(d.get("schema", {})),
            spec=dict(d.get("spec", {})), estimator=dict(d.get("estimator", {})),
            bootstrap=dict(d.get("bootstrap", {})), out=d.get("out", "out"),
            seed=d.get("seed"),
        )

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())


_DIVORCE_SCHEMA = {
    "unit": "state",
    "time": "year",
    "outcome": "suicide_rate",
    "g": "divorce_year",
}


def load_divorce_dataset(path: str | Path, schema: Mapping | None = None) -> Panel:
    """State-level panel of annual suicide rates with no-fault divorce
    adoption years.

    Expected columns (overridable): state, year, suicide_rate, divorce_year
    (a year or "never").  The raw file must contain the full 49-state x
    33-year grid (1,617 rows); states adopting before the observation window
    are dropped with a warning since their pre-window dynamics are
    unobservable.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    df = pd.read_csv(path)
    cols = dict(_DIVORCE_SCHEMA)
    cols.update(schema or {})
    missing = [c for c in cols.values() if c not in df.columns]
    if missing:
        raise PanelError(f"divorce file missing columns {missing}; first row: "
                         f"{df.iloc[0].to_dict() if len(df) else 'empty file'}")
    if len(df) != 1617:
        raise PanelError(f"expected 1,617 raw observations, found {len(df)}")

    first_year = int(df[cols["time"]].min())
    g = df[cols["g"]]
    pre = df.loc[g.apply(lambda v: str(v).lower() != NEVER and float(v) < first_year),
                 cols["unit"]].unique()
    if len(pre):
        warnings.warn(
            f"excluding {len(pre)} states with adoption before {first_year}: "
            f"{sorted(map(str, pre))}"
        )
        df = df[~df[cols["unit"]].isin(pre)]

    def norm_g(v):
        if str(v).lower() == NEVER:
            return NEVER
        y = int(float(v))
        return NEVER if y > int(df[cols["time"]].max()) else y

    df = df.assign(**{cols["g"]: g.loc[df.index].map(norm_g)})
    return load_panel(df, schema=cols)
