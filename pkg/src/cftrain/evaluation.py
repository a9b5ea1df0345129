"""Paired bootstrap evaluation of a trained model against a baseline.

Each round draws a factual and a target class and an energy weight from the
grid; every model then explains its own sample of test points predicted as
the factual class. Quality metrics are computed over valid counterfactuals
and compared round by round.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from . import nn
from .attacks import AttackKind, AttackConfig, robust_accuracy
from .cegen import Constraints, GeneratorConfig, GeneratorKind, batch_search
from .data import Dataset, FeatureSpec, domain_arrays
from .errors import ConfigurationError, InputError
from .metrics import (
    IgScaling,
    bootstrap_percentile_ci,
    implausibility_ipstar,
    integrated_gradients,
    standardize_ig,
    validity_rate,
)

QUALITY_METRICS = ("ip", "ipstar", "cost", "validity")


@dataclass(frozen=True)
class EvalConfig:
    runs: int = 20
    individuals: int = 100
    tau: float = 0.95
    tau_cost: float = 0.5
    max_iter: int = 50
    lr: float = 0.25
    lambda_cst: float = 0.001
    lambda_egy_grid: tuple[float, ...] = (0.1, 0.5, 1.0, 5.0, 10.0)
    alpha: float = 0.01
    alpha_ig: float = 0.05
    lengthscale: float = 0.5
    eps_grid: tuple[float, ...] = (0.0, 0.025, 0.05, 0.075, 0.1)
    attacks: tuple[str, ...] = ("fgsm", "pgd")
    pgd_steps: int = 40
    pgd_step_size: float = 0.01
    ig_steps: int = 64
    ig_individuals: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lambda_egy_grid", tuple(float(v) for v in self.lambda_egy_grid))
        object.__setattr__(self, "eps_grid", tuple(float(v) for v in self.eps_grid))
        object.__setattr__(self, "attacks", tuple(AttackKind(a).value for a in self.attacks))
        if self.runs < 1 or self.individuals < 1 or self.ig_individuals < 1:
            raise ConfigurationError("runs and individuals must be positive")
        for name in ("alpha", "alpha_ig"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must lie in (0, 1)")
        for name in ("tau", "tau_cost"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must lie in (0, 1)")
        if not self.lambda_egy_grid:
            raise ConfigurationError("energy weight grid is empty")
        if self.lengthscale <= 0 or self.max_iter < 1 or self.ig_steps < 1:
            raise ConfigurationError("lengthscale, max_iter and ig_steps must be positive")
        if any(e < 0 for e in self.eps_grid):
            raise ConfigurationError("attack budgets must be non-negative")

    def generator(self, lambda_egy: float, tau: float | None = None) -> GeneratorConfig:
        return GeneratorConfig(GeneratorKind.ECCCO, self.lambda_cst, lambda_egy,
                               self.tau if tau is None else tau, self.max_iter, self.lr)


@dataclass(frozen=True)
class RoundPlan:
    factual: int
    target: int
    lambda_egy: float
    seed: int


def plan_rounds(cfg: EvalConfig, n_classes: int) -> list[RoundPlan]:
    """Class pairs, energy weights and sampling seeds for every round.

    Energy weights cycle through the grid so each value gets an equal share.
    """
    ss = np.random.SeedSequence(cfg.seed)
    rng = np.random.default_rng(ss.spawn(1)[0])
    plans = []
    for j, child in enumerate(ss.spawn(cfg.runs)):
        yf = int(rng.integers(n_classes))
        yt = int((yf + rng.integers(1, n_classes)) % n_classes)
        lam = cfg.lambda_egy_grid[j % len(cfg.lambda_egy_grid)]
        plans.append(RoundPlan(yf, yt, lam, int(child.generate_state(1)[0])))
    return plans


def round_metrics(model: nn.MlpModel, test: Dataset, plan: RoundPlan, cfg: EvalConfig,
                  constraints: Constraints, reference: Dataset, tau: float) -> tuple[dict[str, float], np.ndarray]:
    """Quality metrics for one model in one round (NaN when undefined).

    Also returns the valid counterfactuals as rows of an array.
    """
    rng = np.random.default_rng(plan.seed)
    pred = nn.predict(model, test.X)
    pool = np.flatnonzero(pred == plan.factual)
    out = dict.fromkeys(QUALITY_METRICS, np.nan)
    out["n"] = 0.0
    none = np.empty((0, test.dim))
    if pool.size == 0:
        return out, none
    take = rng.choice(pool, size=min(cfg.individuals, pool.size), replace=False)
    X0 = test.X[np.sort(take)]
    results = batch_search(model, X0, np.full(X0.shape[0], plan.target), constraints,
                           cfg.generator(plan.lambda_egy, tau))
    results = [r for r in results if not isinstance(r, InputError)]
    out["n"] = float(len(results))
    if not results:
        return out, none
    out["validity"] = validity_rate(results, tau)
    valid = [r for r in results if r.target_prob >= tau]
    if not valid:
        return out, none
    Xc = np.stack([r.x_final for r in valid])
    X_ref = reference.X[reference.y == plan.target]
    out["cost"] = float(np.mean([np.abs(r.x_final - r.x0).sum() for r in valid]))
    if X_ref.shape[0]:
        out["ip"] = float(cdist(Xc, X_ref, "cityblock").mean())
        if len(valid) >= 2 and X_ref.shape[0] >= 2:
            out["ipstar"] = implausibility_ipstar(Xc, X_ref, cfg.lengthscale)
    return out, Xc


def model_rounds(model: nn.MlpModel, test: Dataset, plans: Sequence[RoundPlan], cfg: EvalConfig,
                 constraints: Constraints, reference: Dataset, tau: float
                 ) -> tuple[dict[str, np.ndarray], list[np.ndarray]]:
    rows, ces = [], []
    for p in plans:
        r, Xc = round_metrics(model, test, p, cfg, constraints, reference, tau)
        rows.append(r)
        ces.append(Xc)
    return {k: np.array([r[k] for r in rows]) for k in (*QUALITY_METRICS, "n")}, ces


def ig_sensitivity(model: nn.MlpModel, test: Dataset, protected: Sequence[int], cfg: EvalConfig) -> np.ndarray:
    """Per-round median standardised attribution of the protected features.

    Baselines are drawn from U(-1, 1). Two-feature data is standardised by
    range ratio, wider data by min-max.
    """
    if not protected:
        raise InputError("no protected features to measure")
    mode = IgScaling.RANGE_RATIO if test.dim == 2 else IgScaling.MIN_MAX
    ss = np.random.SeedSequence([cfg.seed, 1])
    out = np.empty(cfg.runs)
    for j, child in enumerate(ss.spawn(cfg.runs)):
        rng = np.random.default_rng(child)
        idx = rng.choice(test.n, size=min(cfg.ig_individuals, test.n), replace=False)
        vals = []
        for i in idx:
            b = rng.uniform(-1.0, 1.0, size=test.dim)
            g = standardize_ig(integrated_gradients(model, test.X[i], b, steps=cfg.ig_steps), mode)
            vals.append(g[list(protected)].mean())
        out[j] = np.median(vals)
    return out


@dataclass
class MetricRow:
    dataset: str
    objective: str
    scenario: str
    metric: str
    mean: float
    lb: float
    ub: float
    significant: bool


def summarize(values, alpha: float) -> tuple[float, float, float, bool]:
    """Interval over the finite per-round values (NaN when fewer than two)."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size < 2:
        m = float(v.mean()) if v.size else float("nan")
        return m, float("nan"), float("nan"), False
    return bootstrap_percentile_ci(v, alpha)


def reduction_pct(ct, bl) -> np.ndarray:
    """Per-round percentage reduction of ``ct`` relative to ``bl``."""
    ct = np.asarray(ct, dtype=np.float64)
    bl = np.asarray(bl, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(bl != 0, 100.0 * (bl - ct) / np.abs(bl), np.nan)


def accuracy_rounds(model: nn.MlpModel, test: Dataset, cfg: EvalConfig) -> np.ndarray:
    """Test accuracy on ``cfg.runs`` bootstrap resamples of the test set."""
    correct = (nn.predict(model, test.X) == test.y).astype(np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    return np.array([correct[rng.integers(test.n, size=test.n)].mean() for _ in range(cfg.runs)])


@dataclass
class EvalReport:
    rows: list[MetricRow] = field(default_factory=list)
    rounds: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    robust: dict[str, dict[str, list[tuple[float, float]]]] = field(default_factory=dict)

    def add(self, dataset: str, objective: str, scenario: str, metric: str, values, alpha: float,
            key: str | None = None) -> MetricRow:
        row = MetricRow(dataset, objective, scenario, metric, *summarize(values, alpha))
        self.rows.append(row)
        self.rounds.setdefault(key or f"{objective}/{scenario}", {})[metric] = [float(v) for v in values]
        return row

    def get(self, objective: str, scenario: str, metric: str) -> MetricRow:
        for r in self.rows:
            if (r.objective, r.scenario, r.metric) == (objective, scenario, metric):
                return r
        raise KeyError((objective, scenario, metric))

    def extend(self, other: "EvalReport") -> None:
        self.rows += other.rows
        for k, v in other.rounds.items():
            self.rounds.setdefault(k, {}).update(v)
        for k, v in other.robust.items():
            self.robust.setdefault(k, {}).update(v)

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "rounds": self.rounds,
            "robust": {k: {a: [list(p) for p in c] for a, c in v.items()} for k, v in self.robust.items()},
        }


def robust_curves(model: nn.MlpModel, test: Dataset, cfg: EvalConfig,
                  domain: tuple[np.ndarray, np.ndarray] | None = None) -> dict[str, list[tuple[float, float]]]:
    return {
        kind: robust_accuracy(model, test, cfg.eps_grid,
                              AttackConfig(kind, 0.0, cfg.pgd_steps, cfg.pgd_step_size), domain)
        for kind in cfg.attacks
    }


@dataclass
class ModelEvaluation:
    """Per-round results for one model under one constraint scenario."""
    name: str
    scenario: str
    stats: dict[str, np.ndarray]
    accuracy: np.ndarray
    counterfactuals: list[np.ndarray]
    plans: list[RoundPlan]
    ig: np.ndarray | None = None
    robust: dict[str, list[tuple[float, float]]] | None = None


def evaluate_model(model: nn.MlpModel, test: Dataset, cfg: EvalConfig = EvalConfig(), name: str = "model",
                   specs: Sequence[FeatureSpec] | None = None, reference: Dataset | None = None,
                   protected: Sequence[int] = (), scenario: str = "unconstrained", tau: float | None = None,
                   robustness: bool = True) -> ModelEvaluation:
    """Run the round protocol for a single model.

    Rounds depend only on ``cfg`` and the number of classes, so evaluations of
    different models with the same config are paired.
    """
    if model.input_dim != test.dim:
        raise InputError("model and test set disagree on the number of features")
    specs = test.specs if specs is None else specs
    reference = test if reference is None else reference
    tau = cfg.tau if tau is None else tau
    plans = plan_rounds(cfg, test.n_classes)
    stats, ces = model_rounds(model, test, plans, cfg, Constraints.from_specs(specs), reference, tau)
    ev = ModelEvaluation(name, scenario, stats, accuracy_rounds(model, test, cfg), ces, plans)
    if protected:
        ev.ig = ig_sensitivity(model, test, protected, cfg)
    if robustness:
        ev.robust = robust_curves(model, test, cfg, domain_arrays(specs))
    return ev


def report_model(rep: EvalReport, ev: ModelEvaluation, cfg: EvalConfig, dataset: str) -> None:
    """Absolute metrics of one evaluation."""
    rep.add(dataset, ev.name, ev.scenario, "accuracy", ev.accuracy, cfg.alpha)
    for m in QUALITY_METRICS:
        rep.add(dataset, ev.name, ev.scenario, m, ev.stats[m], cfg.alpha)
    if ev.ig is not None:
        rep.add(dataset, ev.name, ev.scenario, "ig_protected", ev.ig, cfg.alpha_ig)
    if ev.robust is not None:
        rep.robust[f"{ev.name}/{ev.scenario}"] = ev.robust


def compare_evaluations(rep: EvalReport, ct: ModelEvaluation, bl: ModelEvaluation, cfg: EvalConfig,
                        dataset: str) -> None:
    """Round-by-round comparison rows of ``ct`` against the baseline ``bl``."""
    if ct.plans != bl.plans:
        raise InputError("evaluations are not paired: round plans differ")
    a = cfg.alpha
    key = f"{ct.name}_vs_{bl.name}/{ct.scenario}"
    for m in ("ip", "ipstar", "cost"):
        rep.add(dataset, ct.name, ct.scenario, f"{m}_reduction_pct", reduction_pct(ct.stats[m], bl.stats[m]), a, key)
    rep.add(dataset, ct.name, ct.scenario, "validity_diff", ct.stats["validity"] - bl.stats["validity"], a, key)
    if ct.ig is not None and bl.ig is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bl.ig > 0, ct.ig / bl.ig, np.nan)
        row = rep.add(dataset, ct.name, ct.scenario, "ig_ratio", ratio, cfg.alpha_ig, key)
        # for a ratio the null value is one, not zero
        row.significant = bool(np.isfinite(row.ub) and (row.ub < 1 or row.lb > 1))


def evaluate_models(ct_model: nn.MlpModel, bl_model: nn.MlpModel, test: Dataset, cfg: EvalConfig = EvalConfig(),
                    specs: Sequence[FeatureSpec] | None = None, reference: Dataset | None = None,
                    protected: Sequence[int] = (), dataset: str = "data", ct_name: str = "ct",
                    bl_name: str = "bl", scenario: str = "unconstrained", tau: float | None = None,
                    robustness: bool = True) -> EvalReport:
    """Compare a counterfactually trained model with a baseline.

    ``specs`` carry the mutability and domain constraints used by the search
    (default: those of ``test``). ``reference`` is the sample the
    counterfactuals should resemble, usually the training set. When
    ``protected`` lists feature indices, their attribution sensitivity is
    compared as a CT/BL ratio. Reductions are reported as percentages of the
    baseline value, positive when CT is better.
    """
    kw = dict(specs=specs, reference=reference, protected=protected, scenario=scenario, tau=tau,
              robustness=robustness)
    ct = evaluate_model(ct_model, test, cfg, ct_name, **kw)
    bl = evaluate_model(bl_model, test, cfg, bl_name, **kw)
    rep = EvalReport()
    report_model(rep, ct, cfg, dataset)
    report_model(rep, bl, cfg, dataset)
    compare_evaluations(rep, ct, bl, cfg, dataset)
    return rep
