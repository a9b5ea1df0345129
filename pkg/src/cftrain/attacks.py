"""FGSM and PGD attacks and robust-accuracy curves."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .data import Dataset, domain_arrays
from .errors import ConfigurationError, InputError


class AttackKind(str, enum.Enum):
    FGSM = "fgsm"
    PGD = "pgd"


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind = AttackKind.FGSM
    eps: float = 0.1
    pgd_steps: int = 40
    pgd_step_size: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if self.eps < 0:
            raise ConfigurationError("eps must be non-negative")
        if self.pgd_steps < 1 or self.pgd_step_size <= 0:
            raise ConfigurationError("PGD needs at least one step and a positive step size")


def _input_gradient(model: nn.MlpModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return nn.grad_input(model, X, lambda logits, _: nn.cross_entropy(logits, y).sum())


def _bounds(X: np.ndarray, domain) -> tuple[np.ndarray, np.ndarray]:
    # the clean input is always feasible, even if it lies outside the inferred domain
    if domain is None:
        return np.full_like(X, -np.inf), np.full_like(X, np.inf)
    lb, ub = domain
    return np.minimum(lb, X), np.maximum(ub, X)


def fgsm(model: nn.MlpModel, x, y, eps: float, domain: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """One signed-gradient ascent step of size ``eps`` on the cross-entropy."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    y2 = np.atleast_1d(np.asarray(y))
    if eps == 0:
        return X.copy()
    g = _input_gradient(model, X2, y2)
    lb, ub = _bounds(X2, domain)
    out = np.clip(X2 + eps * np.sign(g), lb, ub)
    return out[0] if single else out


def pgd(model: nn.MlpModel, x, y, cfg: AttackConfig, domain: tuple[np.ndarray, np.ndarray] | None = None,
        monitor=None) -> np.ndarray:
    """Iterated signed-gradient steps, each projected onto the eps-ball around
    the clean input intersected with the domain. ``monitor`` (if given) is
    called with every iterate."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X0 = X[None, :] if single else X
    y2 = np.atleast_1d(np.asarray(y))
    lb, ub = _bounds(X0, domain)
    lo = np.maximum(lb, X0 - cfg.eps)
    hi = np.minimum(ub, X0 + cfg.eps)
    Xk = X0.copy()
    for _ in range(cfg.pgd_steps):
        if cfg.eps == 0:
            break
        g = _input_gradient(model, Xk, y2)
        Xk = np.clip(Xk + cfg.pgd_step_size * np.sign(g), lo, hi)
        if monitor is not None:
            monitor(Xk[0] if single else Xk)
    return Xk[0] if single else Xk


def attack(model: nn.MlpModel, X, y, cfg: AttackConfig, domain=None) -> np.ndarray:
    if cfg.kind is AttackKind.FGSM:
        return fgsm(model, X, y, cfg.eps, domain)
    return pgd(model, X, y, cfg, domain)


def accuracy(model: nn.MlpModel, X, y) -> float:
    return float(np.mean(nn.predict(model, X) == np.asarray(y)))


def robust_accuracy(model: nn.MlpModel, test: Dataset, eps_grid: Sequence[float],
                    attack_cfg: AttackConfig | str = AttackKind.FGSM,
                    domain: tuple[np.ndarray, np.ndarray] | None = None) -> list[tuple[float, float]]:
    """Accuracy on attacked test data for each budget in ``eps_grid``.

    ``domain`` defaults to the bounds carried by the test set's feature specs.
    """
    if test.n == 0:
        raise InputError("empty test set")
    if not isinstance(attack_cfg, AttackConfig):
        attack_cfg = AttackConfig(kind=attack_cfg)
    if domain is None:
        domain = domain_arrays(test.specs)
    rows = []
    for eps in eps_grid:
        eps = float(eps)
        X_adv = test.X if eps == 0 else attack(model, test.X, test.y, AttackConfig(
            attack_cfg.kind, eps, attack_cfg.pgd_steps, attack_cfg.pgd_step_size), domain)
        rows.append((eps, accuracy(model, X_adv, test.y)))
    return rows
