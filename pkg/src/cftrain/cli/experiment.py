"""Train every requested objective, evaluate it and write the artifacts.

Output layout under the output directory::

    metrics.csv             dataset, objective, scenario, metric, mean, LB, UB, significant
    robustness.csv          dataset, objective, scenario, attack, eps, accuracy
    report.json             resolved config, data summary, rows, per-round values, curves
    logs/epochs_<name>.csv  per-epoch training log of each trained model
    plots/*.svg             decision boundaries (2-D data) and robust-accuracy curves
    error.json              only on failure
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import nn, training
from ..data import (
    Dataset,
    Mutability,
    apply_mutability,
    gen_gaussian_mixture,
    gen_synthetic,
    load_csv,
    train_test_split,
    with_inferred_domain,
)
from ..evaluation import EvalReport, ModelEvaluation, compare_evaluations, evaluate_model, report_model
from ..training import Objective
from .config import ExperimentConfig, dump_config
from .plots import emit_plots

METRIC_COLUMNS = ("dataset", "objective", "scenario", "metric", "mean", "LB", "UB", "significant")
ROBUST_COLUMNS = ("dataset", "objective", "scenario", "attack", "eps", "accuracy")
BASELINE = Objective.VANILLA


@dataclass
class ExperimentResult:
    report: EvalReport
    models: dict[str, nn.MlpModel]
    evaluations: dict[str, ModelEvaluation]
    train: Dataset
    test: Dataset
    notes: list[str] = field(default_factory=list)


def build_data(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset]:
    """Generate or load the data, infer the domain on the full sample, then split."""
    d = cfg.data
    data_seed = seed if d["seed"] is None else d["seed"]
    if d["kind"] == "csv":
        ds = load_csv(d["path"], d["label_column"], standardize_features=d["standardize"])
        frac = d["test_fraction"]
    else:
        n = d["n_train"] + d["n_test"]
        if d["kind"] == "gaussian":
            ds = gen_gaussian_mixture(n, d["means"], d["sigmas"] if d["sigmas"] is not None else d["sigma"], data_seed)
        else:
            ds = gen_synthetic(d["kind"], n, d["noise"], data_seed)
        frac = d["n_test"] / n
    ds = with_inferred_domain(ds, d["domain_sigma"])
    missing = sorted(set(cfg.mutability()) - set(ds.feature_names))
    if missing:
        raise ValueError(f"mutability constraints name unknown features: {missing}")
    return train_test_split(ds, frac, seed=data_seed)


def scenario_specs(cfg: ExperimentConfig, base: Dataset, scenario: str):
    if scenario == "constrained":
        return apply_mutability(base.specs, cfg.mutability())
    return base.specs


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def metrics_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(v) for v in (r.dataset, r.objective, r.scenario, r.metric, r.mean, r.lb, r.ub, r.significant)])
    return buf.getvalue()


def robustness_csv(report: EvalReport, dataset: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROBUST_COLUMNS)
    for key, per_attack in report.robust.items():
        name, _, scenario = key.partition("/")
        for attack, curve in per_attack.items():
            for eps, acc in curve:
                w.writerow([dataset, name, scenario, attack, _fmt(float(eps)), _fmt(float(acc))])
    return buf.getvalue()


def _log_csv(history: list[training.EpochLog]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fields = list(training.EpochLog.__dataclass_fields__)
    w.writerow(fields)
    for h in history:
        w.writerow([_fmt(v) for v in asdict(h).values()])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def run(cfg: ExperimentConfig, seed: int | None = None, objectives: list[str] | None = None,
        log=None) -> tuple[ExperimentResult, dict[str, str]]:
    """Run the experiment in memory. Returns the results and the text of
    every output file keyed by relative path."""
    say = log or (lambda msg: None)
    seed = cfg.resolved_seed(seed)
    wanted = cfg.objectives if objectives is None else [Objective(o) for o in objectives]
    if not wanted:
        raise ValueError("no objectives selected")
    name = cfg.dataset_name
    train, test = build_data(cfg, seed)
    ecfg = cfg.eval_config(seed)
    scenarios = list(cfg["eval"]["scenarios"])
    notes: list[str] = []
    if "constrained" in scenarios and not cfg.mutability():
        scenarios.remove("constrained")
        notes.append("constrained scenario skipped: no mutability constraints configured")

    # every variant starts from the same parameters
    init = training.init_model(train, cfg.train_config(BASELINE, seed))
    files: dict[str, str] = {}
    models: dict[str, nn.MlpModel] = {}
    evals: dict[str, ModelEvaluation] = {}
    rep = EvalReport()

    def fit(objective: Objective, data: Dataset, label: str) -> nn.MlpModel:
        say(f"training {label}")
        res = training.train(data, cfg.train_config(objective, seed), model=init)
        files[f"logs/epochs_{label}.csv"] = _log_csv(res.history)
        models[label] = res.model
        return res.model

    shared: dict[Objective, nn.MlpModel] = {}
    if BASELINE in wanted:
        shared[BASELINE] = fit(BASELINE, train, BASELINE.value)

    for scenario in scenarios:
        specs = scenario_specs(cfg, train, scenario)
        constrained = scenario == "constrained"
        protected = [i for i, s in enumerate(specs) if s.mutability is Mutability.IMMUTABLE] if constrained else []
        tau = ecfg.tau_cost if constrained else ecfg.tau
        for obj in wanted:
            label = obj.value if not constrained else f"{obj.value}_constrained"
            model = shared[obj] if obj in shared else fit(obj, train.with_specs(specs), label)
            say(f"evaluating {obj.value} ({scenario})")
            ev = evaluate_model(model, test, ecfg, obj.value, specs=specs, reference=train, protected=protected,
                                scenario=scenario, tau=tau, robustness=cfg["eval"]["robustness"])
            evals[f"{obj.value}/{scenario}"] = ev
            report_model(rep, ev, ecfg, name)
        if BASELINE in wanted:
            bl = evals[f"{BASELINE.value}/{scenario}"]
            for obj in wanted:
                if obj is not BASELINE:
                    compare_evaluations(rep, evals[f"{obj.value}/{scenario}"], bl, ecfg, name)
    if BASELINE not in wanted:
        notes.append("no baseline among the objectives: comparison rows omitted")

    files["metrics.csv"] = metrics_csv(rep)
    if rep.robust:
        files["robustness.csv"] = robustness_csv(rep, name)
    result = ExperimentResult(rep, models, evals, train, test, notes)
    return result, files


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, seed: int | None = None,
                   objectives: list[str] | None = None, log=None) -> int:
    """Run and write every artifact. Returns a process exit status; failures
    leave ``error.json`` in the output directory."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    try:
        result, files = run(cfg, seed, objectives, log)
        out.mkdir(parents=True, exist_ok=True)
        for rel, text in files.items():
            p = out / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(text, encoding="utf-8")
        boundaries = [
            (key.replace("/", "_"), result.models[_model_label(key)], result.train,
             np.vstack(ev.counterfactuals) if ev.counterfactuals else np.empty((0, result.train.dim)))
            for key, ev in result.evaluations.items()
        ]
        _, plot_notes = emit_plots(result.report.robust, out, boundaries)
        notes = result.notes + sorted(set(plot_notes))
        report = {
            "dataset": cfg.dataset_name,
            "seed": cfg.resolved_seed(seed),
            "config": dump_config(cfg),
            "data": {"n_train": result.train.n, "n_test": result.test.n, "features": result.train.feature_names,
                     "n_classes": result.train.n_classes},
            "notes": notes,
            **result.report.to_dict(),
        }
        (out / "report.json").write_text(json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
        return 0
    except (ValueError, OSError) as err:
        write_error(out, err)
        return 1


def _model_label(eval_key: str) -> str:
    obj, _, scenario = eval_key.partition("/")
    if scenario == "constrained" and obj != BASELINE.value:
        return f"{obj}_constrained"
    return obj


def write_error(out: Path | None, err: BaseException) -> dict:
    """Machine-readable failure record, printed to stderr and saved when possible."""
    record = {"error": type(err).__name__, "message": str(err)}
    line = getattr(err, "line", None)
    if line is not None:
        record["line"] = line
    print(json.dumps(record), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
        except OSError:
            pass
    return record
