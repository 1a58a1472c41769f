import warnings

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from polwater.features import FeatureMap, FeatureSet
from polwater.gmm import GmmError, GmmModel, classify, gmm_density, train_gmm
from tests.oracles import naive_mixture_density


def random_model(rng, m=3, d=5):
    w = rng.random(m) + 0.1
    a = rng.normal(size=(m, d, d))
    covs = a @ np.swapaxes(a, 1, 2) * 0.3 + 0.05 * np.eye(d)
    return GmmModel(w / w.sum(), rng.normal(size=(m, d)), covs)


def two_cluster_samples(n=10_000, seed=0):
    rng = np.random.default_rng(seed)
    means = np.array([[0.0, 0, 0, 0, 0], [3.0, 2, -1, 1, 2]])
    lab = rng.random(n) < 0.4
    x = rng.normal(size=(n, 5)) * 0.3 + means[lab.astype(int)]
    return x, means


def test_standard_normal_peak():
    m = GmmModel([1.0], [[0.0]], [[[1.0]]])
    assert gmm_density(m, [[0.0]])[0] == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-14)


def test_symmetric_pair():
    m = GmmModel([0.5, 0.5], [[-1.0], [1.0]], [[[1.0]], [[1.0]]])
    single = GmmModel([1.0], [[1.0]], [[[1.0]]])
    assert m.density([[0.0]])[0] == pytest.approx(single.density([[0.0]])[0], rel=1e-14)


def test_density_matches_naive():
    rng = np.random.default_rng(3)
    for _ in range(20):
        model = random_model(rng)
        x = model.means[0] + rng.normal(size=(50, 5))
        got = model.density(x)
        exp = np.array([naive_mixture_density(p, model.weights, model.means, model.covariances) for p in x])
        assert np.all(np.abs(got - exp) <= 1e-10 * exp)


def test_density_positive_far_away():
    m = GmmModel([1.0], [np.zeros(5)], [np.eye(5) * 0.01])
    x = np.zeros((1, 5))
    x[0, 0] = 40 * 0.1
    assert np.isfinite(m.log_density(x)).all()
    x[0, 0] = 35 * 0.1
    assert m.density(x)[0] > 0


def test_mixture_integrates_to_one():
    m = GmmModel([0.3, 0.7], [[0.0, 0.0], [0.5, 0.2]], [np.eye(2) * 0.01, [[0.02, 0.005], [0.005, 0.01]]])
    rng = np.random.default_rng(0)
    lo, hi = np.array([-1.0, -1.0]), np.array([1.5, 1.2])
    pts = lo + rng.random((200_000, 2)) * (hi - lo)
    mass = m.density(pts).mean() * np.prod(hi - lo)
    assert mass >= 0.99 and abs(mass - 1) < 0.02


def test_invariants_enforced():
    with pytest.raises(GmmError):
        GmmModel([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
    with pytest.raises(GmmError):
        GmmModel([1.0, 0.0], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
    with pytest.raises(GmmError):
        GmmModel([1.0], [[0.0, 0.0]], [[[1.0, 0.0], [0.0, -1.0]]])


def test_recovers_two_clusters_and_monotone():
    x, means = two_cluster_samples()
    model = train_gmm(x, m=2, seed=1)
    cost = ((model.means[:, None] - means[None]) ** 2).sum(axis=2)
    r, c = linear_sum_assignment(cost)
    assert np.abs(model.means[r] - means[c]).max() < 0.05
    ll = np.array(model.meta["log_likelihood"])
    assert np.all(np.diff(ll) >= -1e-9)
    assert model.weights[r][np.argmin(c)] == pytest.approx(0.6, abs=0.02)


@pytest.mark.parametrize("m,cov", [(1, "full"), (3, "full"), (5, "full"), (4, "diag")])
def test_monotone_log_likelihood(m, cov):
    rng = np.random.default_rng(m)
    x = np.concatenate([rng.normal(size=(800, 4)), rng.gamma(2.0, size=(700, 4)) + 3])
    model = train_gmm(x, m=m, seed=7, covariance=cov)
    assert np.all(np.diff(model.meta["log_likelihood"]) >= -1e-9)
    floor = model.meta["trainer"]["reg"]
    assert np.all(np.linalg.eigvalsh(model.covariances) >= floor * (1 - 1e-9))


def test_identical_samples_single_cluster():
    x = np.tile([0.2, 0.3, 0.4, 1.0, 0.1], (300, 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = train_gmm(x, m=5, seed=0)
    assert model.n_clusters == 1
    assert np.allclose(model.means[0], x[0])
    assert np.allclose(model.covariances[0], 1e-6 * np.eye(5))


def test_too_few_samples():
    with pytest.raises(GmmError):
        train_gmm(np.zeros((249, 5)), m=5)
    with pytest.raises(GmmError):
        train_gmm(np.zeros((100, 2)), m=0)


def test_deterministic_and_serialization(tmp_path):
    x, _ = two_cluster_samples(3000, seed=4)
    a = train_gmm(x, m=3, seed=11)
    b = train_gmm(x, m=3, seed=11)
    assert np.array_equal(a.means, b.means) and np.array_equal(a.covariances, b.covariances)
    a.save(tmp_path / "a.json")
    b.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    back = GmmModel.load(tmp_path / "a.json")
    assert np.array_equal(back.means, a.means) and np.array_equal(back.weights, a.weights)
    assert np.array_equal(back.density(x[:20]), a.density(x[:20]))


def feature_map(values):
    h, w = values.shape[:2]
    full = np.zeros((h, w, 6))
    full[..., :values.shape[2]] = values
    return FeatureMap(full, np.ones((h, w), bool))


def test_classify_identical_models_empty_mask():
    model = GmmModel([1.0], [np.zeros(4)], [np.eye(4)], "without-azimuth")
    fm = feature_map(np.random.default_rng(0).random((5, 6, 4)))
    lr, mask = classify(fm, model, model)
    assert np.all(lr.ratio == 1.0) and not mask.any()


def test_classify_boundary_1d():
    # 1-D classes through a 4-D model whose other dimensions are identical
    cov = np.eye(4)
    water = GmmModel([1.0], [[0.0, 0, 0, 0]], [cov], "without-azimuth")
    dry = GmmModel([1.0], [[2.0, 0, 0, 0]], [cov], "without-azimuth")
    xs = np.array([0.5, 0.99, 1.0, 1.01, 1.5])
    vals = np.zeros((1, 5, 4))
    vals[0, :, 0] = xs
    lr, mask = classify(feature_map(vals), water, dry)
    assert list(mask[0]) == [True, True, False, False, False]
    assert lr.ratio[0, 2] == pytest.approx(1.0)


def test_threshold_monotone_and_mismatch():
    rng = np.random.default_rng(2)
    water = random_model(rng, 2, 5)
    dry = random_model(rng, 2, 5)
    fm = feature_map(rng.normal(size=(20, 20, 5)))
    lr, _ = classify(fm, water, dry)
    prev = lr.mask(0.0)
    for t in [0.1, 0.5, 1.0, 2.0, 10.0, 1e6]:
        cur = lr.mask(t)
        assert not np.any(cur & ~prev)
        prev = cur
    assert lr.to_uint8().dtype == np.uint8
    other = GmmModel(dry.weights, dry.means[:, :4], dry.covariances[:, :4, :4], "without-azimuth")
    with pytest.raises(GmmError):
        classify(fm, water, other)
    with pytest.raises(GmmError):
        classify(fm, water, dry, feature_set=FeatureSet("without-azimuth"))
