import math

import numpy as np
import pytest

from cftrain import cegen, data, nn, training
from cftrain.data import Dataset
from cftrain.errors import ConfigurationError
from cftrain.nn import autodiff as ad
from cftrain.training import CeTuple, TrainConfig

from conftest import linear_model, specs


def _blobs(n=60, k=2, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % k
    X = rng.normal(size=(n, 2)) * 0.3 + 2.0 * np.stack([np.cos(2 * np.pi * y / k), np.sin(2 * np.pi * y / k)], 1)
    return data.with_inferred_domain(Dataset(X, y, n_classes=k))


def test_config_validation():
    for bad in (dict(lambda_div=-1), dict(burn_in=1.5), dict(batch_size=0), dict(n_ce=-1), dict(lr=0)):
        with pytest.raises(ConfigurationError):
            TrainConfig(**bad)


@pytest.mark.parametrize("obj,active", [
    ("full", {"div", "reg", "adv"}), ("vanilla", set()), ("ar", {"adv"}), ("cd", {"div", "reg"}),
])
def test_effective_weights(obj, active):
    w = TrainConfig(objective=obj).effective_weights()
    assert {k for k in ("div", "reg", "adv") if w[k] > 0} == active


def test_triples_binary_target_is_opposite_prediction():
    ds = _blobs()
    m = nn.MlpModel.init(2, 2, (4,), seed=0)
    tr = training.sample_triples(ds, m, 200, np.random.default_rng(0))
    np.testing.assert_array_equal(tr.y_target, 1 - nn.predict(m, tr.x0))
    members = {tuple(r): int(c) for r, c in zip(ds.X, ds.y)}
    assert all(members[tuple(x)] == t for x, t in zip(tr.x_plus, tr.y_target))


def test_triples_target_frequencies_uniform():
    ds = _blobs(90, 3)
    m = nn.MlpModel.init(2, 3, (), seed=1)
    n = 100_000
    tr = training.sample_triples(ds, m, n, np.random.default_rng(2))
    pred = nn.predict(m, tr.x0)
    assert not np.any(tr.y_target == pred)
    for c in range(3):
        rows = pred == c
        others = [k for k in range(3) if k != c]
        count = np.sum(tr.y_target[rows] == others[0])
        half = rows.sum() / 2
        assert abs(count - half) <= 3 * math.sqrt(rows.sum() / 4)


def test_triples_need_every_class():
    ds = Dataset(np.zeros((4, 2)), np.zeros(4, int), n_classes=2)
    with pytest.raises(ConfigurationError):
        training.sample_triples(ds, nn.MlpModel.init(2, 2, (), seed=0), 3, np.random.default_rng(0))


def test_protect_examples():
    free = specs("free", "free")
    np.testing.assert_array_equal(training.protect_plausibility_targets([5.0, 1.0], [2.0, 3.0], free), [5.0, 1.0])
    out = training.protect_plausibility_targets([5.0, 1.0], [2.0, 3.0], specs("immutable", "increase_only"))
    np.testing.assert_array_equal(out, [2.0, 3.0])
    out = training.protect_plausibility_targets([4.0], [1.0], specs("decrease_only"))
    np.testing.assert_array_equal(out, [1.0])


def test_protect_truth_table():
    # expected overwrite per (mutability, ordering of x_plus vs x_cf)
    table = {
        ("free", "<"): False, ("free", "="): False, ("free", ">"): False,
        ("immutable", "<"): True, ("immutable", "="): True, ("immutable", ">"): True,
        ("increase_only", "<"): True, ("increase_only", "="): False, ("increase_only", ">"): False,
        ("decrease_only", "<"): False, ("decrease_only", "="): False, ("decrease_only", ">"): True,
    }
    offsets = {"<": -1.5, "=": 0.0, ">": 1.5}
    for (mut, order), overwrite in table.items():
        x_cf = np.array([0.25])
        x_plus = x_cf + offsets[order]
        out = training.protect_plausibility_targets(x_plus, x_cf, specs(mut))
        assert out[0] == (x_cf[0] if overwrite else x_plus[0]), (mut, order)


def _tuple(x_ce, x_plus, y, **kw):
    return CeTuple(np.asarray(x_ce, float), y, np.asarray(x_plus, float), **kw)


def _net(model):
    return lambda X: model(np.asarray(X, dtype=np.float64))


def test_divergence_examples():
    m = nn.MlpModel.init(2, 2, (5,), seed=0)
    assert float(training.contrastive_divergence(_net(m), [_tuple([1.0, 2.0], [1.0, 2.0], 1)])) == 0.0
    theta = np.array([[1.0, -2.0], [0.5, 3.0]])
    lin = linear_model(theta, [0.3, -0.1])
    xp, xc = np.array([1.0, 1.0]), np.array([-0.5, 2.0])
    d = float(training.contrastive_divergence(_net(lin), [_tuple(xc, xp, 1)]))
    assert d == pytest.approx(-theta[1] @ (xp - xc), abs=1e-14)
    assert float(training.contrastive_divergence(_net(lin), [])) == 0.0


def test_divergence_and_ridge_scalar_recomputation(rng):
    m = nn.MlpModel.init(3, 3, (6,), seed=4)
    tuples = [_tuple(rng.normal(size=3), rng.normal(size=3), int(rng.integers(3))) for _ in range(5)]
    e = lambda x, y: -nn.forward(m, x)[y]
    div = sum(e(t.x_plus, t.y_target) - e(t.x_ce, t.y_target) for t in tuples) / 5
    reg = sum(e(t.x_plus, t.y_target) ** 2 + e(t.x_ce, t.y_target) ** 2 for t in tuples) / 5
    assert float(training.contrastive_divergence(_net(m), tuples)) == pytest.approx(div, abs=1e-12)
    assert float(training.ridge_energy_penalty(_net(m), tuples)) == pytest.approx(reg, abs=1e-12)


def test_ridge_examples():
    zero = linear_model(np.zeros((2, 1)))
    assert float(training.ridge_energy_penalty(_net(zero), [_tuple([1.0], [2.0], 0)])) == 0.0
    lin = linear_model([[1.0], [1.0]])
    # energies: E(x_plus) = -(-2) = 2, E(x_ce) = -3
    assert float(training.ridge_energy_penalty(_net(lin), [_tuple([3.0], [-2.0], 0)])) == 13.0
    assert float(training.ridge_energy_penalty(_net(lin), [])) == 0.0


def test_adversarial_loss_examples(rng):
    sat = linear_model([[100.0], [-100.0]])
    t = _tuple([1.0], [1.0], 1, x_ae=np.array([1.0]), y_ae=0)
    assert float(training.adversarial_loss(_net(sat), [t])) < 1e-40
    zero = linear_model(np.zeros((2, 1)))
    t = _tuple([1.0], [1.0], 1, x_ae=np.array([0.3]), y_ae=0)
    assert float(training.adversarial_loss(_net(zero), [t])) == pytest.approx(math.log(2), abs=1e-15)
    m = nn.MlpModel.init(2, 3, (4,), seed=0)
    ts = [_tuple([0.0, 0.0], [0.0, 0.0], 0, x_ae=rng.normal(size=2), y_ae=int(rng.integers(3))) for _ in range(6)]
    ts.append(_tuple([0.0, 0.0], [0.0, 0.0], 0))
    ref = np.mean([nn.crossentropy_logits(nn.forward(m, t.x_ae), t.y_ae) for t in ts[:6]])
    assert float(training.adversarial_loss(_net(m), ts)) == pytest.approx(ref, abs=1e-13)


def _micro(rng):
    m = nn.MlpModel.init(2, 2, (4,), seed=9)
    X, y = rng.normal(size=(5, 2)), rng.integers(2, size=5)
    ts = [_tuple(rng.normal(size=2), rng.normal(size=2), int(rng.integers(2)), mature=bool(i % 3),
                 x_ae=rng.normal(size=2) if i % 2 else None, y_ae=int(rng.integers(2))) for i in range(6)]
    return m, X, y, ts


def test_composite_vanilla_and_degenerate(rng):
    m, X, y, ts = _micro(rng)
    ce = float(nn.cross_entropy(m(X), y).mean())
    van, _ = training.composite_loss(_net(m), X, y, ts, TrainConfig(objective="vanilla"))
    assert float(van) == ce
    cfg = TrainConfig(objective="full", lambda_div=0, lambda_adv=0, lambda_reg=0)
    full0, _ = training.composite_loss(_net(m), X, y, ts, cfg)
    assert float(full0) == pytest.approx(ce, abs=1e-15)


def test_composite_is_sum_of_terms(rng):
    m, X, y, ts = _micro(rng)
    cfg = TrainConfig(objective="full", lambda_clf=1.3, lambda_div=0.7, lambda_adv=0.4, lambda_reg=0.2)
    total, _ = training.composite_loss(_net(m), X, y, ts, cfg)
    mature = [t for t in ts if t.mature]
    parts = (1.3 * float(nn.cross_entropy(m(X), y).mean())
             + 0.7 * float(training.contrastive_divergence(_net(m), mature))
             + 0.4 * float(training.adversarial_loss(_net(m), ts))
             + 0.2 * float(training.ridge_energy_penalty(_net(m), mature)))
    assert float(total) == pytest.approx(parts, abs=1e-13)


def test_composite_gradient_matches_finite_differences(rng):
    m, X, y, ts = _micro(rng)
    cfg = TrainConfig(objective="full")
    _, grads = nn.grad_params(m, lambda net: training.composite_loss(net, X, y, ts, cfg)[0])
    params = [p.copy() for p in m.params()]

    def f(ps):
        return float(training.composite_loss(lambda Z: m(Z, [ad.Var(p) for p in ps]), X, y, ts, cfg)[0])

    h = 1e-6
    for g, p in zip(grads, params):
        for idx in np.ndindex(p.shape):
            o = p[idx]
            p[idx] = o + h
            up = f(params)
            p[idx] = o - h
            dn = f(params)
            p[idx] = o
            assert g[idx] == pytest.approx((up - dn) / (2 * h), rel=1e-4, abs=1e-7)


def test_counterfactual_inputs_are_detached(rng):
    m, X, y, ts = _micro(rng)
    snapshot = [(t.x_ce.copy(), t.x_plus.copy()) for t in ts]
    nn.grad_params(m, lambda net: training.composite_loss(net, X, y, ts, TrainConfig())[0])
    for t, (a, b) in zip(ts, snapshot):
        assert isinstance(t.x_ce, np.ndarray) and np.array_equal(t.x_ce, a) and np.array_equal(t.x_plus, b)


@pytest.mark.parametrize("obj", ["full", "vanilla", "ar", "cd"])
def test_gating_call_counters(monkeypatch, obj):
    calls = {"div": 0, "reg": 0, "adv": 0}
    for name, key in (("contrastive_divergence", "div"), ("ridge_energy_penalty", "reg"), ("adversarial_loss", "adv")):
        orig = getattr(training, name)

        def wrapped(*a, _orig=orig, _key=key, **k):
            calls[_key] += 1
            return _orig(*a, **k)

        monkeypatch.setattr(training, name, wrapped)
    ds = _blobs()
    training.train(ds, TrainConfig(objective=obj, epochs=2, n_ce=20, batch_size=20, hidden=(4,)))
    expect_div = obj in ("full", "cd")
    expect_adv = obj in ("full", "ar")
    assert (calls["div"] > 0) == expect_div and (calls["reg"] > 0) == expect_div
    assert (calls["adv"] > 0) == expect_adv


def test_zero_epochs_returns_initial_model():
    ds = _blobs()
    cfg = TrainConfig(epochs=0)
    init = training.init_model(ds, cfg)
    res = training.train(ds, cfg)
    assert res.history == []
    for a, b in zip(res.model.params(), init.params()):
        assert np.array_equal(a, b)


def test_full_burn_in_one_equals_vanilla():
    ds = _blobs()
    a = training.train(ds, TrainConfig(objective="full", burn_in=1.0, epochs=3, n_ce=30, hidden=(4,))).model
    b = training.train(ds, TrainConfig(objective="vanilla", epochs=3, n_ce=30, hidden=(4,))).model
    assert all(p.tobytes() == q.tobytes() for p, q in zip(a.params(), b.params()))


def test_training_deterministic():
    ds = _blobs()
    cfg = TrainConfig(objective="full", epochs=3, n_ce=30, hidden=(4,), seed=5)
    a, b = training.train(ds, cfg), training.train(ds, cfg)
    assert all(p.tobytes() == q.tobytes() for p, q in zip(a.model.params(), b.model.params()))
    assert a.history == b.history


def test_history_logs_components():
    ds = _blobs()
    res = training.train(ds, TrainConfig(objective="full", epochs=4, n_ce=30, hidden=(4,), burn_in=0.5))
    assert [h.epoch for h in res.history] == [1, 2, 3, 4]
    assert res.history[0].n_ce == 0 and res.history[2].n_ce == 30
    assert all(0 <= h.mature_frac <= 1 and 0 <= h.accuracy <= 1 for h in res.history)


def test_protect_switch():
    ds = _blobs().with_mutability({"x1": "immutable"})
    m = nn.MlpModel.init(2, 2, (4,), seed=0)
    tr = training.sample_triples(ds, m, 10, np.random.default_rng(0))
    res = cegen.batch_search(m, tr.x0, tr.y_target, ds.specs, cegen.GeneratorConfig())
    on = training.build_tuples(res, tr, ds.specs)
    off = training.build_tuples(res, tr, ds.specs, protect=False)
    for t_on, t_off, xp in zip(on, off, tr.x_plus):
        assert t_on.x_plus[0] == t_on.x_ce[0]
        np.testing.assert_array_equal(t_off.x_plus, xp)


def test_distribute_round_robin():
    assert training.distribute(list(range(7)), 3) == [[0, 3, 6], [1, 4], [2, 5]]


def test_vanilla_ls_accuracy():
    ds = data.gen_synthetic("ls", 1200, seed=0)
    train, test = data.train_test_split(ds, 0.25, seed=0)
    model = training.train(train, TrainConfig(objective="vanilla")).model
    assert np.mean(nn.predict(model, test.X) == test.y) >= 0.999


def test_initial_model_dimension_check():
    with pytest.raises(ConfigurationError):
        training.train(_blobs(), TrainConfig(epochs=1), model=nn.MlpModel.init(3, 2, (), seed=0))
