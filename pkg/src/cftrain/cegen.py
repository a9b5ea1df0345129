"""Gradient-based counterfactual search with actionability constraints.

The search minimises a logit cross-entropy towards the target class plus an
l1 distance to the factual (*generic*), optionally with an energy penalty on
the target class (*eccco*). Iterates are masked and projected so that
mutability and domain constraints hold after every step. Iterates that stay
within an l-infinity ball around the factual are kept as adversarial examples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .data import FeatureSpec, Mutability, domain_arrays
from .errors import ConfigurationError, InputError
from .nn import autodiff as ad


class GeneratorKind(str, enum.Enum):
    GENERIC = "generic"
    ECCCO = "eccco"


@dataclass(frozen=True)
class GeneratorConfig:
    kind: GeneratorKind = GeneratorKind.ECCCO
    lambda_cst: float = 0.001
    lambda_egy: float = 5.0
    tau: float = 0.75
    max_iter: int = 30
    lr: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind(self.kind))
        if self.lambda_cst < 0 or self.lambda_egy < 0:
            raise ConfigurationError("penalty weights must be non-negative")
        if not 0.0 < self.tau < 1.0:
            raise ConfigurationError(f"decision threshold must lie in (0, 1), got {self.tau}")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        if self.lr <= 0:
            raise ConfigurationError("step size must be positive")


@dataclass
class AdversarialExample:
    x: np.ndarray
    step: int


@dataclass
class CounterfactualResult:
    x0: np.ndarray
    y_factual: int
    y_target: int
    x_final: np.ndarray
    mature: bool
    steps_taken: int
    target_prob: float
    adversarial: AdversarialExample | None
    y_ae: int
    delta_norms: list[float] = field(default_factory=list)
    trajectory: list[np.ndarray] | None = field(default=None, repr=False)


@dataclass(frozen=True)
class Constraints:
    """Array view of per-feature mutability and domain settings."""

    lb: np.ndarray
    ub: np.ndarray
    immutable: np.ndarray
    increase_only: np.ndarray
    decrease_only: np.ndarray

    @classmethod
    def from_specs(cls, specs: Sequence[FeatureSpec]) -> "Constraints":
        lb, ub = domain_arrays(specs)
        muts = [s.mutability for s in specs]
        return cls(
            lb,
            ub,
            np.array([m is Mutability.IMMUTABLE for m in muts]),
            np.array([m is Mutability.INCREASE_ONLY for m in muts]),
            np.array([m is Mutability.DECREASE_ONLY for m in muts]),
        )

    @classmethod
    def free(cls, dim: int) -> "Constraints":
        return cls.from_specs([FeatureSpec(f"x{d}") for d in range(dim)])


def _constraints(specs) -> Constraints:
    return specs if isinstance(specs, Constraints) else Constraints.from_specs(specs)


def _ce_loss_rows(logits: ad.Var, xv: ad.Var, x0: np.ndarray, targets, kind: GeneratorKind,
                  lambda_cst: float, lambda_egy: float) -> ad.Var:
    loss = nn.cross_entropy(logits, targets)
    if lambda_cst:
        loss = loss + lambda_cst * ad.vabs(xv - x0).sum(axis=1)
    if kind is GeneratorKind.ECCCO and lambda_egy:
        loss = loss + lambda_egy * nn.class_energy(logits, targets)
    return loss


def ce_loss(kind, model: nn.MlpModel, x_cf, x0, y_target, lambda_cst: float, lambda_egy: float = 0.0) -> float:
    """Counterfactual search objective at ``x_cf`` (single point)."""
    kind = GeneratorKind(kind)
    if lambda_cst < 0 or lambda_egy < 0:
        raise ConfigurationError("penalty weights must be non-negative")
    xv = ad.Var(np.asarray(x_cf, dtype=np.float64)[None, :])
    x0 = np.asarray(x0, dtype=np.float64)[None, :]
    return float(_ce_loss_rows(model(xv), xv, x0, [y_target], kind, lambda_cst, lambda_egy))


def constrained_step(x, grad, lr: float, x0, specs) -> np.ndarray:
    """One projected gradient step honouring mutability and domain constraints.

    Gradient components are zeroed for immutable features and for directional
    features whose step would move the wrong way; after the step each
    coordinate is clamped into its domain, and directional features are
    clamped against the factual value.
    """
    c = _constraints(specs)
    x = np.asarray(x, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.array(grad, dtype=np.float64)
    if g.shape != x.shape or x0.shape != x.shape:
        raise ConfigurationError(f"shape mismatch: x {x.shape}, grad {g.shape}, x0 {x0.shape}")
    # a step of -lr*g decreases the coordinate where g > 0
    g = np.where(c.immutable, 0.0, g)
    g = np.where(c.increase_only & (g > 0), 0.0, g)
    g = np.where(c.decrease_only & (g < 0), 0.0, g)
    out = x - lr * g
    out = np.clip(out, c.lb, c.ub)
    out = np.where(c.increase_only, np.maximum(out, x0), out)
    out = np.where(c.decrease_only, np.minimum(out, x0), out)
    out = np.where(c.immutable, x0, out)
    return out


def nascent_step(delta_norms: Sequence[float], eps: float) -> int | None:
    """Last step (1-based) whose cumulative l-inf displacement is below ``eps``."""
    hits = [t for t, d in enumerate(delta_norms, start=1) if d < eps]
    return hits[-1] if hits else None


def _search_rows(model: nn.MlpModel, X0: np.ndarray, targets: np.ndarray, y_factual: np.ndarray,
                 cons: Constraints, cfg: GeneratorConfig, eps_adv: float, record: bool) -> list[CounterfactualResult]:
    n = X0.shape[0]
    X = X0.copy()
    active = np.ones(n, dtype=bool)
    mature = np.zeros(n, dtype=bool)
    steps = np.zeros(n, dtype=int)
    probs = nn.softmax(nn.forward(model, X0))[np.arange(n), targets]
    ae_x = np.full_like(X0, np.nan)
    ae_t = np.zeros(n, dtype=int)
    deltas = np.full((n, cfg.max_iter), np.nan)
    traj = [[X0[i].copy()] for i in range(n)] if record else None

    for t in range(1, cfg.max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xv = ad.variable(X[idx])
        loss = _ce_loss_rows(model(xv), xv, X0[idx], targets[idx], cfg.kind, cfg.lambda_cst, cfg.lambda_egy)
        (g,) = ad.gradient(loss.sum(), [xv])
        x_new = constrained_step(X[idx], g, cfg.lr, X0[idx], cons)
        X[idx] = x_new
        steps[idx] = t
        dnorm = np.abs(x_new - X0[idx]).max(axis=1)
        deltas[idx, t - 1] = dnorm
        inside = dnorm < eps_adv
        ae_x[idx[inside]] = x_new[inside]
        ae_t[idx[inside]] = t
        if record:
            for j, i in enumerate(idx):
                traj[i].append(x_new[j].copy())
        p = nn.softmax(nn.forward(model, x_new))[np.arange(idx.size), targets[idx]]
        probs[idx] = p
        done = p >= cfg.tau
        mature[idx[done]] = True
        active[idx[done]] = False

    return [
        CounterfactualResult(
            x0=X0[i].copy(),
            y_factual=int(y_factual[i]),
            y_target=int(targets[i]),
            x_final=X[i].copy(),
            mature=bool(mature[i]),
            steps_taken=int(steps[i]),
            target_prob=float(probs[i]),
            adversarial=AdversarialExample(ae_x[i].copy(), int(ae_t[i])) if ae_t[i] else None,
            y_ae=int(y_factual[i]),
            delta_norms=[float(d) for d in deltas[i, : steps[i]]],
            trajectory=traj[i] if record else None,
        )
        for i in range(n)
    ]


def _validate(model: nn.MlpModel, x0: np.ndarray, y_target) -> int:
    if x0.shape != (model.input_dim,):
        raise InputError(f"factual has shape {x0.shape}, model expects ({model.input_dim},)")
    if not np.all(np.isfinite(x0)):
        raise InputError("factual contains non-finite values")
    if int(y_target) != y_target or not 0 <= int(y_target) < model.n_classes:
        raise InputError(f"target class {y_target!r} outside [0, {model.n_classes})")
    predicted = int(np.argmax(nn.forward(model, x0)))
    if predicted == int(y_target):
        raise InputError(f"target class {y_target} is already the predicted class")
    return predicted


def search(model: nn.MlpModel, x0, y_target: int, specs, cfg: GeneratorConfig = GeneratorConfig(),
           eps_adv: float = 0.1, y_factual: int | None = None, record_trajectory: bool = False) -> CounterfactualResult:
    """Search a counterfactual for ``x0`` towards ``y_target``.

    Stops as soon as the target-class probability reaches ``cfg.tau`` (the
    result is then *mature*) or after ``cfg.max_iter`` steps. ``y_factual`` is
    the ground-truth label of ``x0`` and becomes the label of the adversarial
    example; it defaults to the model's prediction.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    predicted = _validate(model, x0, y_target)
    yf = predicted if y_factual is None else int(y_factual)
    return _search_rows(model, x0[None, :], np.array([int(y_target)]), np.array([yf]),
                        _constraints(specs), cfg, eps_adv, record_trajectory)[0]


def batch_search(model: nn.MlpModel, X0, targets, specs, cfg: GeneratorConfig = GeneratorConfig(),
                 eps_adv: float = 0.1, y_factual=None,
                 record_trajectory: bool = False) -> list[CounterfactualResult | InputError]:
    """Vectorised :func:`search` over rows of ``X0``.

    Rows evolve independently, so each result equals the corresponding single
    search exactly. Rows failing validation get their ``InputError`` in place
    of a result; the rest of the batch still runs.
    """
    X0 = np.asarray(X0, dtype=np.float64)
    targets = np.asarray(targets)
    if X0.ndim != 2 or targets.shape != (X0.shape[0],):
        raise InputError(f"need matching factual and target lists, got {X0.shape} and {targets.shape}")
    yf_given = None if y_factual is None else np.asarray(y_factual)
    if yf_given is not None and yf_given.shape != targets.shape:
        raise InputError("y_factual must have one entry per factual")

    out: list[CounterfactualResult | InputError | None] = [None] * X0.shape[0]
    ok, yf = [], []
    for i, (x0, t) in enumerate(zip(X0, targets)):
        try:
            predicted = _validate(model, x0, t)
        except InputError as err:
            out[i] = err
            continue
        ok.append(i)
        yf.append(predicted if yf_given is None else int(yf_given[i]))
    if ok:
        ok_idx = np.array(ok)
        results = _search_rows(model, X0[ok_idx], targets[ok_idx].astype(np.intp), np.array(yf),
                               _constraints(specs), cfg, eps_adv, record_trajectory)
        for i, res in zip(ok, results):
            out[i] = res
    return out
