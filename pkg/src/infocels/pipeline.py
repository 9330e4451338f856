"""Explain every instance of a test set with one method, optionally in parallel."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor

from .baseline import WcfConfig, explain_wcf
from .cels import CelsConfig, CounterfactualResult, explain
from .classifier import FcnModel
from .data import LabeledDataset

METHODS = ("cels", "info-cels", "wcf")


def instance_seed(base: int, index: int) -> int:
    # seeds depend only on the instance position, never on scheduling
    return base + index


def _explain_one(args) -> CounterfactualResult:
    model, x, background, method, cfg = args
    if method == "wcf":
        return explain_wcf(model, x, background, cfg)
    return explain(model, x, background, cfg)


def explain_dataset(model: FcnModel, testset: LabeledDataset, background: LabeledDataset,
                    method: str, cfg=None, workers: int = 1) -> list[CounterfactualResult]:
    """Counterfactuals for every member of ``testset``, in dataset order.

    ``cfg`` is a CelsConfig for cels/info-cels (its mode is overridden by
    ``method``) or a WcfConfig for wcf. Instance i runs with seed cfg.seed + i.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "wcf":
        cfg = cfg or WcfConfig()
        if not isinstance(cfg, WcfConfig):
            raise TypeError("wcf needs a WcfConfig")
    else:
        cfg = cfg or CelsConfig()
        if not isinstance(cfg, CelsConfig):
            raise TypeError(f"{method} needs a CelsConfig")
        cfg = dataclasses.replace(cfg, mode=method)
    jobs = [(model, testset[i], background, method,
             dataclasses.replace(cfg, seed=instance_seed(cfg.seed, i)))
            for i in range(len(testset))]
    if workers <= 1 or len(jobs) <= 1:
        return [_explain_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_explain_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
