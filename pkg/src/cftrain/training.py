"""Counterfactual training.

Each epoch (after burn-in) draws factuals, target classes and target-class
samples, searches counterfactuals against a frozen snapshot of the model,
and spreads the resulting tuples over the epoch's mini-batches. Every batch
then minimises the classification loss plus, depending on the objective, a
contrastive divergence between protected target samples and mature
counterfactuals, a ridge penalty on their energies, and the classification
loss on nascent counterfactuals (adversarial examples).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import nn
from .cegen import Constraints, CounterfactualResult, GeneratorConfig, batch_search
from .data import Dataset, FeatureSpec
from .errors import ConfigurationError
from .nn import autodiff as ad

log = logging.getLogger(__name__)


class Objective(str, enum.Enum):
    FULL = "full"
    VANILLA = "vanilla"
    AR = "ar"
    CD = "cd"


@dataclass(frozen=True)
class TrainConfig:
    objective: Objective = Objective.FULL
    lambda_clf: float = 1.0
    lambda_div: float = 0.5
    lambda_adv: float = 0.25
    lambda_reg: float = 0.1
    n_ce: int = 1000
    epochs: int = 100
    batch_size: int = 30
    burn_in: float = 0.0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    eps_adv: float = 0.1
    lr: float = 1e-3
    hidden: tuple[int, ...] = (32,)
    seed: int = 0
    protect: bool = True

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name in ("lambda_clf", "lambda_div", "lambda_adv", "lambda_reg"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.n_ce < 0 or self.epochs < 0:
            raise ConfigurationError("n_ce and epochs must be non-negative")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        if not 0.0 <= self.burn_in <= 1.0:
            raise ConfigurationError(f"burn_in must lie in [0, 1], got {self.burn_in}")
        if self.eps_adv < 0 or self.lr <= 0:
            raise ConfigurationError("eps_adv must be non-negative and lr positive")

    def effective_weights(self) -> dict[str, float]:
        """Penalty weights after gating by the objective variant."""
        obj = self.objective
        return {
            "clf": self.lambda_clf,
            "div": self.lambda_div if obj in (Objective.FULL, Objective.CD) else 0.0,
            "reg": self.lambda_reg if obj in (Objective.FULL, Objective.CD) else 0.0,
            "adv": self.lambda_adv if obj in (Objective.FULL, Objective.AR) else 0.0,
        }


@dataclass
class CeTuple:
    x_ce: np.ndarray
    y_target: int
    x_plus: np.ndarray
    mature: bool = True
    x_ae: np.ndarray | None = None
    y_ae: int | None = None


class Triples(NamedTuple):
    x0: np.ndarray
    y_factual: np.ndarray
    y_target: np.ndarray
    x_plus: np.ndarray


def sample_triples(train: Dataset, model: nn.MlpModel, n_ce: int, rng: np.random.Generator) -> Triples:
    """Factuals, target classes different from the current prediction, and
    ground-truth samples from each target class.

    Factuals are drawn without replacement while ``n_ce <= n``.
    """
    K = train.n_classes
    members = [np.flatnonzero(train.y == k) for k in range(K)]
    empty = [k for k, m in enumerate(members) if m.size == 0]
    if empty:
        raise ConfigurationError(f"classes {empty} have no training samples")
    idx = rng.choice(train.n, size=n_ce, replace=n_ce > train.n)
    x0 = train.X[idx]
    predicted = nn.predict(model, x0) if n_ce else np.zeros(0, dtype=int)
    offset = rng.integers(1, K, size=n_ce)
    y_target = (predicted + offset) % K
    plus_idx = np.array([members[k][rng.integers(members[k].size)] for k in y_target], dtype=np.intp)
    x_plus = train.X[plus_idx] if n_ce else np.zeros((0, train.dim))
    return Triples(x0, train.y[idx], y_target, x_plus)


def protect_plausibility_targets(x_plus, x_cf, specs: Sequence[FeatureSpec] | Constraints) -> np.ndarray:
    """Copy the counterfactual's value into the target sample wherever moving
    towards the target sample would break a mutability constraint."""
    c = specs if isinstance(specs, Constraints) else Constraints.from_specs(specs)
    x_plus = np.asarray(x_plus, dtype=np.float64)
    x_cf = np.asarray(x_cf, dtype=np.float64)
    if x_plus.shape != x_cf.shape:
        raise ConfigurationError(f"shape mismatch {x_plus.shape} vs {x_cf.shape}")
    overwrite = c.immutable | (c.decrease_only & (x_plus > x_cf)) | (c.increase_only & (x_plus < x_cf))
    return np.where(overwrite, x_cf, x_plus)


def _stack(rows) -> np.ndarray:
    return np.stack([np.asarray(r, dtype=np.float64) for r in rows])


def _zero() -> ad.Var:
    return ad.Var(0.0)


def _energies(net, tuples: Sequence[CeTuple]) -> tuple[ad.Var, ad.Var]:
    targets = np.array([t.y_target for t in tuples])
    e_plus = nn.class_energy(net(_stack([t.x_plus for t in tuples])), targets)
    e_cf = nn.class_energy(net(_stack([t.x_ce for t in tuples])), targets)
    return e_plus, e_cf


def contrastive_divergence(net, tuples: Sequence[CeTuple]) -> ad.Var:
    """Mean energy gap ``E(x_plus, y+) - E(x_ce, y+)``."""
    if not tuples:
        return _zero()
    e_plus, e_cf = _energies(net, tuples)
    return (e_plus - e_cf).mean()


def ridge_energy_penalty(net, tuples: Sequence[CeTuple]) -> ad.Var:
    """Mean of ``E(x_plus, y+)^2 + E(x_ce, y+)^2``."""
    if not tuples:
        return _zero()
    e_plus, e_cf = _energies(net, tuples)
    return (ad.square(e_plus) + ad.square(e_cf)).mean()


def adversarial_loss(net, tuples: Sequence[CeTuple]) -> ad.Var:
    """Mean cross-entropy of the adversarial examples under their labels."""
    tuples = [t for t in tuples if t.x_ae is not None]
    if not tuples:
        return _zero()
    logits = net(_stack([t.x_ae for t in tuples]))
    return nn.cross_entropy(logits, [t.y_ae for t in tuples]).mean()


def composite_loss(net, X, y, tuples: Sequence[CeTuple], cfg: TrainConfig) -> tuple[ad.Var, dict[str, float]]:
    """Weighted sum of the active objective terms for one mini-batch."""
    w = cfg.effective_weights()
    clf = nn.cross_entropy(net(np.asarray(X, dtype=np.float64)), y).mean()
    total = w["clf"] * clf
    parts = {"clf": float(clf), "div": 0.0, "adv": 0.0, "reg": 0.0}
    mature = [t for t in tuples if t.mature]
    if cfg.objective in (Objective.FULL, Objective.CD):
        div = contrastive_divergence(net, mature)
        reg = ridge_energy_penalty(net, mature)
        total = total + w["div"] * div + w["reg"] * reg
        parts["div"], parts["reg"] = float(div), float(reg)
    if cfg.objective in (Objective.FULL, Objective.AR):
        adv = adversarial_loss(net, [t for t in tuples if t.x_ae is not None])
        total = total + w["adv"] * adv
        parts["adv"] = float(adv)
    parts["total"] = float(total)
    return total, parts


def build_tuples(results: Sequence[CounterfactualResult], triples: Triples,
                 specs: Sequence[FeatureSpec] | Constraints, protect: bool = True) -> list[CeTuple]:
    """Pair search results with their target samples. ``protect=False``
    skips the mutability overwrite (an ablation switch)."""
    out = []
    for res, x_plus in zip(results, triples.x_plus):
        if not isinstance(res, CounterfactualResult):
            continue
        out.append(CeTuple(
            x_ce=res.x_final,
            y_target=res.y_target,
            x_plus=protect_plausibility_targets(x_plus, res.x_final, specs) if protect else x_plus,
            mature=res.mature,
            x_ae=None if res.adversarial is None else res.adversarial.x,
            y_ae=res.y_ae,
        ))
    return out


def distribute(tuples: Sequence[CeTuple], n_batches: int) -> list[list[CeTuple]]:
    """Round-robin assignment of tuples to batches."""
    buckets: list[list[CeTuple]] = [[] for _ in range(n_batches)]
    for i, t in enumerate(tuples):
        buckets[i % n_batches].append(t)
    return buckets


@dataclass
class EpochLog:
    epoch: int
    loss: float
    clf: float
    div: float
    adv: float
    reg: float
    n_ce: int
    mature_frac: float
    ae_frac: float
    accuracy: float


@dataclass
class TrainResult:
    model: nn.MlpModel
    history: list[EpochLog]


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    init, batches, ce = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(batches), np.random.default_rng(ce)


def init_model(train: Dataset, cfg: TrainConfig) -> nn.MlpModel:
    rng, _, _ = _streams(cfg.seed)
    return nn.MlpModel.init(train.dim, train.n_classes, cfg.hidden, rng)


def train(train: Dataset, cfg: TrainConfig, model: nn.MlpModel | None = None,
          on_epoch: Callable[[EpochLog, nn.MlpModel], None] | None = None) -> TrainResult:
    """Fit a classifier under ``cfg``; returns the model and a per-epoch log.

    Batch order and counterfactual sampling use independent random streams,
    so runs that differ only in the objective see identical mini-batches.
    """
    _, batch_rng, ce_rng = _streams(cfg.seed)
    if model is None:
        model = init_model(train, cfg)
    elif model.input_dim != train.dim or model.n_classes != train.n_classes:
        raise ConfigurationError("initial model does not match the dataset dimensions")
    model = model.copy()
    optimizer = nn.Adam(lr=cfg.lr)
    constraints = Constraints.from_specs(train.specs)
    n_batches = -(-train.n // cfg.batch_size)
    start_ct = cfg.burn_in * cfg.epochs
    history: list[EpochLog] = []

    for epoch in range(cfg.epochs):
        tuples: list[CeTuple] = []
        ct_on = cfg.objective is not Objective.VANILLA and epoch >= start_ct and cfg.n_ce > 0
        if ct_on:
            triples = sample_triples(train, model, cfg.n_ce, ce_rng)
            results = batch_search(model, triples.x0, triples.y_target, constraints, cfg.generator,
                                   cfg.eps_adv, y_factual=triples.y_factual)
            tuples = build_tuples(results, triples, constraints, cfg.protect)

        order = batch_rng.permutation(train.n)
        buckets = distribute(tuples, n_batches)
        sums = {"total": 0.0, "clf": 0.0, "div": 0.0, "adv": 0.0, "reg": 0.0}
        for b in range(n_batches):
            rows = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            Xb, yb = train.X[rows], train.y[rows]
            parts: dict[str, float] = {}

            def objective(net, Xb=Xb, yb=yb, batch_tuples=buckets[b]):
                total, p = composite_loss(net, Xb, yb, batch_tuples, cfg)
                parts.update(p)
                return total

            _, grads = nn.grad_params(model, objective)
            model = model.with_params(optimizer.step(model.params(), grads))
            for k in sums:
                sums[k] += parts[k]

        n_t = len(tuples)
        entry = EpochLog(
            epoch=epoch + 1,
            loss=sums["total"] / n_batches,
            clf=sums["clf"] / n_batches,
            div=sums["div"] / n_batches,
            adv=sums["adv"] / n_batches,
            reg=sums["reg"] / n_batches,
            n_ce=n_t,
            mature_frac=sum(t.mature for t in tuples) / n_t if n_t else 0.0,
            ae_frac=sum(t.x_ae is not None for t in tuples) / n_t if n_t else 0.0,
            accuracy=float(np.mean(nn.predict(model, train.X) == train.y)),
        )
        history.append(entry)
        log.debug("epoch %d: %s", entry.epoch, entry)
        if on_epoch is not None:
            on_epoch(entry, model)
    return TrainResult(model, history)

