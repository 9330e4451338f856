"""Counterfactual quality metrics and the lambda sensitivity sweep."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cels import CelsConfig
from .classifier import FcnModel
from .data import LabeledDataset, TimeSeries
from .ood import OodConfig, ood_rates
from .pipeline import explain_dataset

SCHEMA_VERSION = 1
DEFAULT_EPSILON = 0.01

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "method", "dataset", "n", "epsilon", "flip_rate",
                 "mean_target_probability", "mean_l1", "mean_sparsity", "mean_segments"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "method": {"type": "string"},
        "dataset": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "epsilon": {"type": "number", "minimum": 0},
        "flip_rate": {"type": "number", "minimum": 0, "maximum": 1},
        "mean_target_probability": {"type": "number", "minimum": 0, "maximum": 1},
        "mean_l1": {"type": "number", "minimum": 0},
        "mean_sparsity": {"type": "number", "minimum": 0, "maximum": 1},
        "mean_segments": {"type": "number", "minimum": 0},
        "ood": {
            "type": "object",
            "properties": {
                "if_rate": {"type": "number", "minimum": 0, "maximum": 1},
                "lof_rate": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "config": {"type": "object"},
    },
}


def _values(x) -> np.ndarray:
    # anything carrying a ``cf`` (CounterfactualResult or a reloaded record)
    if hasattr(x, "cf"):
        return _values(x.cf)
    return x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)


def flip_rate(results) -> float:
    if len(results) == 0:
        raise ValueError("flip rate of an empty result set is undefined")
    return sum(bool(r.flipped) for r in results) / len(results)


def l1_distance(x, xp) -> float:
    return float(np.sum(np.abs(_values(x) - _values(xp))))


def _changed(x, xp, epsilon: float) -> np.ndarray:
    x, xp = _values(x), _values(xp)
    if x.shape != xp.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {xp.shape}")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return np.abs(x - xp) > epsilon


def sparsity(x, xp, epsilon: float = DEFAULT_EPSILON) -> float:
    """Fraction of time steps left unchanged (|x_t - x'_t| <= epsilon)."""
    changed = _changed(x, xp, epsilon)
    return 1.0 - changed.sum() / changed.size


def segment_count(x, xp, epsilon: float = DEFAULT_EPSILON) -> int:
    """Number of maximal runs of consecutive changed time steps."""
    changed = _changed(x, xp, epsilon).astype(np.int8)
    return int(np.sum(np.diff(np.concatenate(([0], changed))) == 1))


@dataclass
class EvalReport:
    method: str
    dataset: str
    flip_rate: float
    mean_target_probability: float
    mean_l1: float
    mean_sparsity: float
    mean_segments: float
    n: int
    epsilon: float = DEFAULT_EPSILON

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **dataclasses.asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {d.get('schema_version')!r}")
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self, **extra) -> str:
        return json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))


def evaluate(results, originals, epsilon: float = DEFAULT_EPSILON,
             method: Optional[str] = None, dataset: str = "") -> EvalReport:
    """Average per-instance metrics over a set of counterfactuals.

    Target probability is averaged over every result, flipped or not.
    """
    if len(results) == 0:
        raise ValueError("cannot evaluate an empty result set")
    if len(results) != len(originals):
        raise ValueError(f"{len(results)} results but {len(originals)} originals")
    l1 = [l1_distance(x, r) for r, x in zip(results, originals)]
    sp = [sparsity(x, r, epsilon) for r, x in zip(results, originals)]
    seg = [segment_count(x, r, epsilon) for r, x in zip(results, originals)]
    return EvalReport(
        method=method or results[0].method,
        dataset=dataset,
        flip_rate=flip_rate(results),
        mean_target_probability=float(np.mean([r.target_probability for r in results])),
        mean_l1=float(np.mean(l1)),
        mean_sparsity=float(np.mean(sp)),
        mean_segments=float(np.mean(seg)),
        n=len(results),
        epsilon=epsilon,
    )


@dataclass
class SweepPoint:
    lam: float
    report: EvalReport
    ood: Optional[dict] = None

    def to_row(self) -> dict:
        row = {"lambda": self.lam, **self.report.to_dict()}
        row.pop("schema_version")
        if self.ood:
            row.update(self.ood)
        return row


def lambda_sweep(model: FcnModel, testset: LabeledDataset, background: LabeledDataset,
                 lambdas, cfg: CelsConfig | None = None, epsilon: float = DEFAULT_EPSILON,
                 ood_cfg: OodConfig | None = None, workers: int = 1) -> list[SweepPoint]:
    """Info-CELS once per lambda, everything else (including per-instance seeds) fixed.

    OOD rates against ``background`` are added when ``ood_cfg`` is given.
    """
    lambdas = list(lambdas)
    if not lambdas:
        raise ValueError("need at least one lambda")
    if any(lam < 0 for lam in lambdas):
        raise ValueError("lambdas must be >= 0")
    cfg = cfg or CelsConfig()
    points = []
    for lam in lambdas:
        run_cfg = dataclasses.replace(cfg, lam=float(lam), mode="info-cels")
        results = explain_dataset(model, testset, background, "info-cels", run_cfg, workers)
        report = evaluate(results, testset.series, epsilon, "info-cels", testset.name)
        ood = None
        if ood_cfg is not None:
            ood = ood_rates(background, [r.cf for r in results],
                            [r.target_class for r in results], ood_cfg)
        points.append(SweepPoint(float(lam), report, ood))
    return points
