import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cftrain import data, nn, training
from cftrain.data import Dataset, FeatureSpec, Mutability
from cftrain.errors import InputError


@pytest.mark.parametrize("kind", ["ls", "ol", "circles", "moons"])
def test_synthetic_shape_balance_determinism(kind):
    a = data.gen_synthetic(kind, 200, seed=5)
    b = data.gen_synthetic(kind, 200, seed=5)
    assert a.X.shape == (200, 2) and a.n_classes == 2
    assert np.bincount(a.y).tolist() == [100, 100]
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert not np.array_equal(a.X, data.gen_synthetic(kind, 200, seed=6).X)


def test_synthetic_size_checks():
    with pytest.raises(InputError):
        data.gen_synthetic("ls", 2)
    with pytest.raises(InputError):
        data.gen_synthetic("ls", 7)
    with pytest.raises(InputError):
        data.gen_synthetic("spirals", 10)


def test_paper_sizes_split():
    ds = data.gen_synthetic("ls", 4200, seed=0)
    train, test = data.train_test_split(ds, 600 / 4200, seed=0)
    assert (train.n, test.n) == (3600, 600)


def test_noiseless_circles_radii():
    ds = data.gen_synthetic("circles", 100, noise=0.0, seed=1)
    r = np.hypot(ds.X[:, 0], ds.X[:, 1])
    np.testing.assert_allclose(r[ds.y == 0], data.CIRCLE_RADII[0], atol=1e-12)
    np.testing.assert_allclose(r[ds.y == 1], data.CIRCLE_RADII[1], atol=1e-12)


def test_ls_linearly_separable_by_depth0_model():
    ds = data.gen_synthetic("ls", 1200, seed=0)
    train, test = data.train_test_split(ds, 0.25, seed=0)
    cfg = training.TrainConfig(objective="vanilla", hidden=(), epochs=20, lr=0.01)
    model = training.train(train, cfg).model
    assert np.mean(nn.predict(model, test.X) == test.y) >= 0.999


def test_gaussian_mixture_per_feature_sigma():
    ds = data.gen_gaussian_mixture(20000, [1.0, 0.0, 0.0], [0.5, 0.1, 2.0], seed=0)
    X0 = ds.X[ds.y == 0]
    np.testing.assert_allclose(X0.mean(0), [-1.0, 0.0, 0.0], atol=0.05)
    np.testing.assert_allclose(X0.std(0), [0.5, 0.1, 2.0], rtol=0.03)
    with pytest.raises(InputError):
        data.gen_gaussian_mixture(10, [1.0, 1.0], [1.0, 1.0, 1.0])
    with pytest.raises(InputError):
        data.gen_gaussian_mixture(10, [1.0], -1.0)
    with pytest.raises(InputError):
        data.gen_gaussian_mixture(10, [], 1.0)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_csv_label_mapping(tmp_path):
    p = _write(tmp_path / "d.csv", "f1,f2,label\n1,2,a\n3,4,b\n5,7,a\n")
    ds = data.load_csv(p, "label")
    assert ds.n_classes == 2
    assert ds.y.tolist() == [0, 1, 0]
    assert ds.feature_names == ["f1", "f2"]


def test_csv_constant_column_zero(tmp_path):
    p = _write(tmp_path / "d.csv", "c,v,label\n2,1,0\n2,5,1\n2,9,0\n")
    ds = data.load_csv(p, "label")
    np.testing.assert_array_equal(ds.X[:, 0], 0.0)


def test_csv_standardised(tmp_path, rng):
    X = rng.normal(3.0, 7.0, size=(50, 3))
    lines = ["a,b,c,label"] + [",".join(repr(float(v)) for v in row) + f",{i % 2}" for i, row in enumerate(X)]
    ds = data.load_csv(_write(tmp_path / "d.csv", "\n".join(lines) + "\n"), "label")
    assert np.all(np.abs(ds.X.mean(0)) < 1e-10)
    assert np.all(np.abs(ds.X.std(0) - 1) < 1e-10)


def test_csv_round_trip(tmp_path):
    ds = data.gen_synthetic("moons", 60, seed=2)
    data.save_csv(ds, tmp_path / "m.csv")
    back = data.load_csv(tmp_path / "m.csv", "label", standardize_features=False)
    assert np.max(np.abs(back.X - ds.X)) <= 1e-12
    # labels are renumbered by first appearance
    first = {}
    for v in ds.y:
        first.setdefault(int(v), len(first))
    np.testing.assert_array_equal(back.y, [first[int(v)] for v in ds.y])


def test_csv_overrides(tmp_path):
    p = _write(tmp_path / "d.csv", "age,income,label\n30,1,0\n40,2,1\n")
    ds = data.load_csv(p, "label", overrides={"age": "immutable"})
    assert ds.specs[0].mutability is Mutability.IMMUTABLE
    assert ds.specs[1].mutability is Mutability.FREE


@pytest.mark.parametrize("text,needle", [
    ("", "empty"),
    ("a,label\n", "no data rows"),
    ("a,b\n1,0\n", "label column"),
    ("a,label\n1,0\nx,1\n", "row 3"),
    ("a,label\n1,0\n2\n", "row 3"),
    ("a,label\n1,0\n2,0\n", "fewer than two classes"),
])
def test_csv_errors(tmp_path, text, needle):
    p = _write(tmp_path / "d.csv", text)
    with pytest.raises(InputError, match=needle):
        data.load_csv(p, "label")


def test_csv_missing_file(tmp_path):
    with pytest.raises(InputError):
        data.load_csv(tmp_path / "nope.csv", "label")


def test_domain_bounds_examples():
    # mean 0, sample std (ddof 1) 1, range [-2, 2]
    x = np.array([-2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0])
    x = x / x.std(ddof=1)
    lb, ub = data.infer_domain_bounds(x[:, None])
    np.testing.assert_allclose([lb[0], ub[0]], [-3.0, 3.0], atol=1e-12)
    lb, ub = data.infer_domain_bounds(np.full((5, 1), 4.2))
    assert (lb[0], ub[0]) == (4.2, 4.2)
    with pytest.raises(InputError):
        data.infer_domain_bounds(np.ones((1, 2)))


def test_domain_bounds_statistics(rng):
    X = rng.standard_normal((1000, 3))
    lb, ub = data.infer_domain_bounds(X)
    mu = [sum(X[:, d]) / 1000 for d in range(3)]
    sd = [np.sqrt(sum((v - mu[d]) ** 2 for v in X[:, d]) / 999) for d in range(3)]
    for d in range(3):
        assert abs(lb[d] - min(mu[d] - 3 * sd[d], X[:, d].min())) < 1e-12
        assert abs(ub[d] - max(mu[d] + 3 * sd[d], X[:, d].max())) < 1e-12


@given(st.integers(2, 40), st.integers(1, 4), st.floats(0.0, 5.0), st.integers(0, 10**6))
def test_domain_contains_sample(n, d, n_sigma, seed):
    X = np.random.default_rng(seed).normal(size=(n, d)) * 3
    lb, ub = data.infer_domain_bounds(X, n_sigma)
    assert np.all(lb <= X.min(0)) and np.all(X.max(0) <= ub)


def test_dataset_domain_validated():
    with pytest.raises(InputError):
        Dataset(np.array([[3.0]]), np.array([0]), [FeatureSpec("a", domain=(0.0, 1.0))], 2)
    with pytest.raises(InputError):
        FeatureSpec("a", domain=(1.0, 0.0))


def test_split_examples():
    ds = Dataset(np.arange(10.0)[:, None], np.array([0, 1] * 5))
    tr, te = data.train_test_split(ds, 0.2, seed=0)
    assert (tr.n, te.n) == (8, 2)
    ds = Dataset(np.arange(100.0)[:, None], np.repeat([0, 1], 50))
    tr, te = data.train_test_split(ds, 0.5, seed=1)
    assert np.bincount(tr.y).tolist() == [25, 25] and np.bincount(te.y).tolist() == [25, 25]
    with pytest.raises(InputError):
        data.train_test_split(ds, 1.0)


@given(st.integers(4, 200), st.floats(0.05, 0.95), st.integers(2, 4), st.integers(0, 10**6))
def test_split_partition_and_stratification(n, frac, k, seed):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % k
    ds = Dataset(np.arange(n, dtype=float)[:, None], rng.permutation(y), n_classes=k)
    try:
        tr, te = data.train_test_split(ds, frac, seed=seed)
    except InputError:
        return  # one side would be empty
    a, b = set(tr.X[:, 0].astype(int)), set(te.X[:, 0].astype(int))
    assert a | b == set(range(n)) and not a & b
    for c in range(k):
        expected = np.sum(ds.y == c) * frac
        assert abs(np.sum(te.y == c) - expected) <= 1


def test_split_deterministic():
    ds = data.gen_synthetic("ls", 100, seed=0)
    a = data.train_test_split(ds, 0.3, seed=4)
    b = data.train_test_split(ds, 0.3, seed=4)
    assert np.array_equal(a[0].X, b[0].X) and np.array_equal(a[1].y, b[1].y)


def test_apply_mutability_errors():
    specs = data.default_specs(2)
    with pytest.raises(InputError):
        data.apply_mutability(specs, {"zz": "immutable"})
    with pytest.raises(InputError):
        data.apply_mutability(specs, {5: "immutable"})
    out = data.apply_mutability(specs, {1: "increase_only"})
    assert out[1].mutability is Mutability.INCREASE_ONLY
