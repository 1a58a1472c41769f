import numpy as np
import pytest

from polwater import kernels
from polwater.kernels import _fallback

try:
    from polwater.kernels import _sgm
except ImportError:  # extension not built
    _sgm = None

needs_ext = pytest.mark.skipif(_sgm is None, reason="compiled kernels not built")

DIRS_8 = [(0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)]


def naive_census(img, r):
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.uint64)
    for v in range(h):
        for u in range(w):
            code = 0
            for dv in range(-r, r + 1):
                for du in range(-r, r + 1):
                    if dv == 0 and du == 0:
                        continue
                    vv = min(max(v + dv, 0), h - 1)
                    uu = min(max(u + du, 0), w - 1)
                    code = (code << 1) | int(img[vv, uu] < img[v, u])
            out[v, u] = code
    return out


def naive_aggregate(cost, p1, p2, dv, du):
    h, w, nd = cost.shape
    L = np.zeros((h, w, nd), dtype=np.int64)
    vs = range(h) if dv >= 0 else range(h - 1, -1, -1)
    us = range(w) if du >= 0 else range(w - 1, -1, -1)
    for v in vs:
        for u in us:
            pv, pu = v - dv, u - du
            if not (0 <= pv < h and 0 <= pu < w):
                L[v, u] = cost[v, u]
                continue
            prev = L[pv, pu]
            m = prev.min()
            for d in range(nd):
                cands = [prev[d], m + p2]
                if d > 0:
                    cands.append(prev[d - 1] + p1)
                if d < nd - 1:
                    cands.append(prev[d + 1] + p1)
                L[v, u, d] = cost[v, u, d] + min(cands) - m
    return L


@pytest.fixture
def small_pair():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 256, (9, 13), dtype=np.uint8)
    b = np.roll(a, -2, axis=1)
    return a, b


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "numpy")


@pytest.mark.parametrize("r", [1, 2, 3])
def test_census_matches_naive(small_pair, r):
    a, _ = small_pair
    assert np.array_equal(_fallback.census_transform(a, r), naive_census(a, r))
    if _sgm is not None:
        assert np.array_equal(_sgm.census_transform(a, r), naive_census(a, r))


def test_cost_volume_naive(small_pair):
    a, b = small_pair
    cl, cr = naive_census(a, 1), naive_census(b, 1)
    cost = _fallback.hamming_cost_volume(cl, cr, 5, 8)
    for v in range(a.shape[0]):
        for u in range(a.shape[1]):
            for d in range(5):
                exp = 8 if u - d < 0 else bin(int(cl[v, u]) ^ int(cr[v, u - d])).count("1")
                assert cost[v, u, d] == exp


@pytest.mark.parametrize("direction", DIRS_8)
def test_aggregation_matches_naive(direction):
    rng = np.random.default_rng(11)
    cost = rng.integers(0, 40, (7, 9, 6)).astype(np.uint16)
    expected = naive_aggregate(cost, 3, 20, *direction)
    got = _fallback.aggregate_paths(cost, 3, 20, [direction])
    assert np.array_equal(got, expected)
    if _sgm is not None:
        assert np.array_equal(_sgm.aggregate_paths(cost, 3, 20, [direction]), expected)


@needs_ext
def test_backends_bit_identical():
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, (40, 64), dtype=np.uint8)
    other = np.roll(img, -4, axis=1)
    results = []
    for mod in (_sgm, _fallback):
        cl = mod.census_transform(img, 2)
        cr = mod.census_transform(other, 2)
        cost = mod.hamming_cost_volume(cl, cr, 12, 24)
        total = mod.aggregate_paths(cost, 10, 120, DIRS_8)
        results.append((cl, cost, total))
    for x, y in zip(*results):
        assert np.array_equal(x, y)
