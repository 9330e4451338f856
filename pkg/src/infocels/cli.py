"""Command-line pipeline: train, explain, evaluate, sweep, ood, plot.

Settings resolve as: built-in defaults < ``--config`` JSON file < command-line
flags. Every JSON artifact echoes the resolved configuration.

Exit codes: 0 success, 2 usage/config error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import baseline, cels, classifier, data, evaluation, ood, plots
from .pipeline import METHODS, explain_dataset

DEFAULT_LAMBDAS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str = ""
    train: Optional[str] = None
    test: Optional[str] = None
    model: Optional[str] = None
    method: Optional[str] = None  # evaluate/ood: None means every method found
    out_dir: str = "runs"
    delimiter: Optional[str] = None
    z_normalize: bool = False
    max_test_samples: int = 0
    sample_seed: int = 0
    workers: int = 1
    # classifier
    train_learning_rate: float = 1e-3
    train_epochs: int = 500
    batch_size: int = 0
    desk_scale: bool = False
    # explainers
    lam: float = 1.0
    learning_rate: float = 0.1
    max_epochs: int = 1000
    threshold: float = 0.5
    patience: int = 100
    min_delta: float = 1e-6
    seed: int = 0
    wcf_learning_rate: float = 0.01
    l1_weight: float = 0.1
    # evaluation
    epsilon: float = evaluation.DEFAULT_EPSILON
    lambdas: list = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    # detectors
    if_trees: int = 100
    if_psi: int = 256
    if_contamination: float = 0.05
    lof_k: int = 20
    per_class: bool = False
    # plot
    index: int = 0

    def cels_config(self, method: Optional[str] = None) -> cels.CelsConfig:
        return cels.CelsConfig(lam=self.lam, learning_rate=self.learning_rate, max_epochs=self.max_epochs,
                               mode=method or self.method, threshold=self.threshold,
                               patience=self.patience, min_delta=self.min_delta, seed=self.seed)

    def wcf_config(self) -> baseline.WcfConfig:
        return baseline.WcfConfig(learning_rate=self.wcf_learning_rate, max_epochs=self.max_epochs,
                                  l1_weight=self.l1_weight, patience=self.patience,
                                  min_delta=self.min_delta, seed=self.seed)

    def ood_config(self) -> ood.OodConfig:
        return ood.OodConfig(self.if_trees, self.if_psi, self.if_contamination, self.lof_k,
                             self.per_class, self.seed)

    def train_config(self) -> classifier.TrainConfig:
        return classifier.TrainConfig(self.train_learning_rate, self.train_epochs, self.batch_size,
                                      self.seed, self.desk_scale)


CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)} - {"subcommand"}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of settings (keys as RunConfig field names)")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--delimiter", choices=["tab", "comma"])
    p.add_argument("--z-normalize", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--workers", type=int)


def _add_data(p, test=True, model=True):
    p.add_argument("--train", help="UCR training split (also the NUN background and detector data)")
    if test:
        p.add_argument("--test", help="UCR test split")
        p.add_argument("--max-test-samples", type=int, help="explain a seeded random subset of this size")
        p.add_argument("--sample-seed", type=int)
    if model:
        p.add_argument("--model", help="FCN checkpoint path")


def _add_explainer(p):
    p.add_argument("--lam", type=float, help="weight of the target-probability loss")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--threshold", type=float, help="CELS binarization threshold k")
    p.add_argument("--patience", type=int)
    p.add_argument("--min-delta", type=float)
    p.add_argument("--wcf-learning-rate", type=float)
    p.add_argument("--l1-weight", type=float)


def _add_detectors(p):
    p.add_argument("--if-trees", type=int)
    p.add_argument("--if-psi", type=int)
    p.add_argument("--if-contamination", type=float)
    p.add_argument("--lof-k", type=int)
    p.add_argument("--per-class", action=argparse.BooleanOptionalAction, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infocels", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="fit the FCN classifier on the training split")
    _add_common(p)
    _add_data(p, test=False)
    p.add_argument("--train-learning-rate", type=float)
    p.add_argument("--train-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--desk-scale", action=argparse.BooleanOptionalAction, default=None)

    p = sub.add_parser("explain", help="generate counterfactuals for the test split")
    _add_common(p)
    _add_data(p)
    p.add_argument("--method", choices=METHODS)
    _add_explainer(p)

    p = sub.add_parser("evaluate", help="validity/proximity/sparsity report for explain output")
    _add_common(p)
    p.add_argument("--method", choices=METHODS, help="default: every method found in --out-dir")
    p.add_argument("--epsilon", type=float)

    p = sub.add_parser("sweep", help="Info-CELS lambda sensitivity sweep")
    _add_common(p)
    _add_data(p)
    _add_explainer(p)
    _add_detectors(p)
    p.add_argument("--lambdas", help="comma-separated lambda values")
    p.add_argument("--epsilon", type=float)

    p = sub.add_parser("ood", help="out-of-distribution rates of explain output")
    _add_common(p)
    _add_data(p, test=False, model=False)
    p.add_argument("--method", choices=METHODS, help="default: every method found in --out-dir")
    _add_detectors(p)

    p = sub.add_parser("plot", help="SVG of one explained instance")
    _add_common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--index", type=int, help="position in the explain output")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        unknown = set(loaded) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for key, value in vars(args).items():
        if key in CONFIG_KEYS and value is not None:
            values[key] = value
    if isinstance(values.get("lambdas"), str):
        try:
            values["lambdas"] = [float(v) for v in values["lambdas"].split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad --lambdas value {values['lambdas']!r}") from None
    try:
        cfg = RunConfig(subcommand=args.subcommand, **values)
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}") from None
    if cfg.method is None and cfg.subcommand in ("explain", "sweep", "plot"):
        cfg.method = "info-cels"
    if cfg.method is not None and cfg.method not in METHODS:
        raise ConfigError(f"unknown method {cfg.method!r}; choose from {METHODS}")
    return cfg


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        value = getattr(cfg, name)
        if value is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required for {cfg.subcommand}")
        if not Path(value).exists():
            raise ConfigError(f"{name} file not found: {value}")


def _echo(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def _load(cfg: RunConfig, path: str) -> data.LabeledDataset:
    ds = data.load_ucr(path, cfg.delimiter)
    return data.z_normalize(ds) if cfg.z_normalize else ds


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _test_subset(cfg: RunConfig, test: data.LabeledDataset):
    if cfg.max_test_samples and cfg.max_test_samples > 0:
        idx = data.subsample_indices(len(test), cfg.max_test_samples, cfg.sample_seed)
    else:
        idx = np.arange(len(test))
    return test.take(idx), idx


# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> None:
    _require(cfg, "train")
    out = _out(cfg)
    ds = _load(cfg, cfg.train)
    model = classifier.train(ds, cfg.train_config())
    model_path = Path(cfg.model) if cfg.model else out / "model.fcn"
    classifier.save_model(model, model_path)
    _write_csv(out / "train_log.csv",
               [{"epoch": e, "loss": f"{loss:.9g}", "accuracy": f"{acc:.9g}"} for e, loss, acc in model.history])
    _write_json(out / "train_config.json", {"config": _echo(cfg), "model": str(model_path),
                                            "train_accuracy": classifier.accuracy(model, ds)})
    print(f"trained on {len(ds)} series; train accuracy {classifier.accuracy(model, ds):.4f}; wrote {model_path}")


def _run_methods(cfg: RunConfig) -> list[str]:
    if cfg.method is None:
        found = [m for m in METHODS if (Path(cfg.out_dir) / f"{m}_records.json").exists()]
        if not found:
            raise ConfigError(f"no explain output found in {cfg.out_dir}")
        return found
    path = Path(cfg.out_dir) / f"{cfg.method}_records.json"
    if not path.exists():
        raise ConfigError(f"explain output not found: {path}")
    return [cfg.method]


def cmd_explain(cfg: RunConfig) -> None:
    _require(cfg, "train", "test", "model")
    out = _out(cfg)
    model = classifier.load_model(cfg.model)
    train = _load(cfg, cfg.train)
    test, idx = _test_subset(cfg, _load(cfg, cfg.test))
    method_cfg = cfg.wcf_config() if cfg.method == "wcf" else cfg.cels_config()
    results = explain_dataset(model, test, train, cfg.method, method_cfg, cfg.workers)
    m = cfg.method
    data.write_series_tsv(out / f"{m}_counterfactuals.tsv", [r.cf.values for r in results],
                          [r.predicted_class for r in results])
    data.write_series_tsv(out / f"{m}_saliency.tsv", [r.saliency for r in results])
    data.write_series_tsv(out / f"{m}_originals.tsv", test.X, [int(v) for v in test.y])
    records = [{"test_index": int(i), **r.to_record()} for i, r in zip(idx, results)]
    _write_json(out / f"{m}_records.json", {"config": _echo(cfg), "dataset": test.name, "records": records})
    flips = sum(r.flipped for r in results)
    print(f"{m}: explained {len(results)} instances, {flips} flipped")


class _Stored:
    """Counterfactual results reconstructed from explain output."""

    def __init__(self, run_dir: Path, method: str):
        blob = json.loads((run_dir / f"{method}_records.json").read_text())
        self.config = blob["config"]
        self.dataset = blob.get("dataset", "")
        self.records = blob["records"]
        self.cf, _ = data.read_series_tsv(run_dir / f"{method}_counterfactuals.tsv")
        self.originals, self.labels = data.read_series_tsv(run_dir / f"{method}_originals.tsv")
        self.saliency = data.read_series_tsv(run_dir / f"{method}_saliency.tsv", labelled=False)
        if not len(self.records) == len(self.cf) == len(self.originals):
            raise ValueError(f"{method}: explain artifacts disagree in length")

    def results(self):
        return [_StoredResult(rec, data.TimeSeries(cf)) for rec, cf in zip(self.records, self.cf)]


@dataclass
class _StoredResult:
    record: dict
    cf: data.TimeSeries

    @property
    def flipped(self):
        return self.record["flipped"]

    @property
    def target_probability(self):
        return self.record["target_probability"]

    @property
    def method(self):
        return self.record["method"]


def cmd_evaluate(cfg: RunConfig) -> None:
    out = Path(cfg.out_dir)
    rows = []
    for m in _run_methods(cfg):
        stored = _Stored(out, m)
        report = evaluation.evaluate(stored.results(), stored.originals, cfg.epsilon, m, stored.dataset)
        payload = {**report.to_dict(), "config": {"evaluate": _echo(cfg), "explain": stored.config}}
        _write_json(out / f"{m}_report.json", payload)
        rows.append({"method": m, "dataset": stored.dataset, "lambda": stored.config.get("lam"),
                     **{k: v for k, v in report.to_dict().items() if k not in ("method", "dataset", "schema_version")}})
        print(f"{m}: flip_rate={report.flip_rate:.3f} target_p={report.mean_target_probability:.3f} "
              f"l1={report.mean_l1:.3f} sparsity={report.mean_sparsity:.3f} segments={report.mean_segments:.2f}")
    _write_csv(out / "report.csv", rows)


def cmd_sweep(cfg: RunConfig) -> None:
    _require(cfg, "train", "test", "model")
    if not cfg.lambdas:
        raise ConfigError("--lambdas must list at least one value")
    out = _out(cfg)
    model = classifier.load_model(cfg.model)
    train = _load(cfg, cfg.train)
    test, _ = _test_subset(cfg, _load(cfg, cfg.test))
    points = evaluation.lambda_sweep(model, test, train, cfg.lambdas, cfg.cels_config("info-cels"),
                                     cfg.epsilon, cfg.ood_config(), cfg.workers)
    rows = [p.to_row() for p in points]
    _write_csv(out / "sweep.csv", rows)
    _write_json(out / "sweep.json", {"schema_version": evaluation.SCHEMA_VERSION, "config": _echo(cfg),
                                     "points": rows})
    lams = [p.lam for p in points]
    (out / "sweep_validity.svg").write_text(plots.line_chart(
        lams, {"flip rate": [p.report.flip_rate for p in points],
               "target probability": [p.report.mean_target_probability for p in points],
               "sparsity": [p.report.mean_sparsity for p in points]},
        "Validity and sparsity vs lambda", "lambda", "value"))
    (out / "sweep_l1.svg").write_text(plots.line_chart(
        lams, {"mean L1": [p.report.mean_l1 for p in points]}, "Proximity vs lambda", "lambda", "L1"))
    (out / "sweep_ood.svg").write_text(plots.line_chart(
        lams, {"IF": [p.ood["if_rate"] for p in points], "LOF": [p.ood["lof_rate"] for p in points]},
        "OOD rate vs lambda", "lambda", "fraction flagged"))
    for p in points:
        print(f"lambda={p.lam:g}: flip={p.report.flip_rate:.3f} target_p={p.report.mean_target_probability:.3f} "
              f"l1={p.report.mean_l1:.3f} if={p.ood['if_rate']:.3f} lof={p.ood['lof_rate']:.3f}")


def cmd_ood(cfg: RunConfig) -> None:
    _require(cfg, "train")
    out = Path(cfg.out_dir)
    train = _load(cfg, cfg.train)
    rows = []
    for m in _run_methods(cfg):
        stored = _Stored(out, m)
        targets = [r["target_class"] for r in stored.records]
        rates = ood.ood_rates(train, stored.cf, targets, cfg.ood_config())
        rows.append({"method": m, "dataset": stored.dataset, **rates})
        print(f"{m}: IF={rates['if_rate']:.3f} LOF={rates['lof_rate']:.3f}")
    _write_csv(out / "ood.csv", rows)
    _write_json(out / "ood.json", {"schema_version": evaluation.SCHEMA_VERSION, "config": _echo(cfg),
                                   "ood": {r["method"]: {"if_rate": r["if_rate"], "lof_rate": r["lof_rate"]}
                                           for r in rows}})


def cmd_plot(cfg: RunConfig) -> None:
    out = Path(cfg.out_dir)
    stored = _Stored(out, _run_methods(cfg)[0])
    if not 0 <= cfg.index < len(stored.records):
        raise ConfigError(f"--index must lie in 0..{len(stored.records) - 1}")
    rec = stored.records[cfg.index]
    explain_cfg = stored.config
    train_path = explain_cfg.get("train")
    if not train_path or not Path(train_path).exists():
        raise ConfigError(f"training file recorded in explain output not found: {train_path}")
    train = data.load_ucr(train_path, explain_cfg.get("delimiter"))
    if explain_cfg.get("z_normalize"):
        train = data.z_normalize(train)
    nun = train.X[rec["nun_index"]]
    title = (f"{cfg.method} #{rec['test_index']}: class {rec['original_class']} -> "
             f"{rec['predicted_class']} (p={rec['target_probability']:.2f})")
    svg = plots.instance_plot(stored.originals[cfg.index], nun, stored.cf[cfg.index],
                              stored.saliency[cfg.index], title)
    path = out / f"{cfg.method}_instance{cfg.index}.svg"
    path.write_text(svg)
    print(f"wrote {path}")


COMMANDS = {"train": cmd_train, "explain": cmd_explain, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep, "ood": cmd_ood, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"infocels {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any module failure is a runtime error
        print(f"infocels {args.subcommand}: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
