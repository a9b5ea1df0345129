import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cftrain import nn
from cftrain.data import FeatureSpec, Mutability

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def linear_model(theta, bias=None) -> nn.MlpModel:
    theta = np.asarray(theta, dtype=np.float64)
    b = np.zeros(theta.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
    return nn.MlpModel([theta], [b])


def specs(*muts, lb=-5.0, ub=5.0):
    return [FeatureSpec(f"x{i + 1}", Mutability(m), (lb, ub)) for i, m in enumerate(muts)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
VERDICTS: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    print(line)
    VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
