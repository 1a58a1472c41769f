"""Pure numpy versions of the compiled kernels (same integer results)."""
import numpy as np

if hasattr(np, "bitwise_count"):
    def _popcount(x):
        return np.bitwise_count(x)
else:  # numpy < 2.0
    _LUT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)

    def _popcount(x):
        b = np.ascontiguousarray(x).view(np.uint8).reshape(x.shape + (8,))
        return _LUT[b].sum(axis=-1, dtype=np.uint16)


def census_transform(img, radius):
    img = np.ascontiguousarray(img, dtype=np.uint8)
    padded = np.pad(img, radius, mode="edge")
    h, w = img.shape
    code = np.zeros((h, w), dtype=np.uint64)
    one = np.uint64(1)
    for dv in range(-radius, radius + 1):
        for du in range(-radius, radius + 1):
            if dv == 0 and du == 0:
                continue
            nb = padded[radius + dv:radius + dv + h, radius + du:radius + du + w]
            code = (code << one) | (nb < img).astype(np.uint64)
    return code


def hamming_cost_volume(left, right, max_disp, invalid_cost):
    h, w = left.shape
    out = np.full((h, w, max_disp), invalid_cost, dtype=np.uint16)
    for d in range(max_disp):
        if d >= w:
            break
        out[:, d:, d] = _popcount(left[:, d:] ^ right[:, :w - d])
    return out


def _step(c, src, p1, p2):
    m = src.min(axis=-1, keepdims=True)
    best = src.copy()
    np.minimum(best[..., 1:], src[..., :-1] + p1, out=best[..., 1:])
    np.minimum(best[..., :-1], src[..., 1:] + p1, out=best[..., :-1])
    np.minimum(best, m + p2, out=best)
    return c + best - m


def _path(cost, total, dv, du, p1, p2):
    h, w, _ = cost.shape
    if dv == 0:
        cols = range(w) if du >= 0 else range(w - 1, -1, -1)
        prev = None
        for u in cols:
            c = cost[:, u, :].astype(np.uint32)
            cur = c if prev is None else _step(c, prev, p1, p2)
            total[:, u, :] += cur
            prev = cur
        return
    rows = range(h) if dv >= 0 else range(h - 1, -1, -1)
    prev = None
    for v in rows:
        c = cost[v].astype(np.uint32)
        if prev is None:
            cur = c
        else:
            # predecessor of column u sits at column u - du of the previous row
            cur = c.copy()
            if du == 0:
                cur = _step(c, prev, p1, p2)
            elif du > 0:
                cur[1:] = _step(c[1:], prev[:-1], p1, p2)
            else:
                cur[:-1] = _step(c[:-1], prev[1:], p1, p2)
        total[v] += cur
        prev = cur


def aggregate_paths(cost, p1, p2, directions):
    cost = np.ascontiguousarray(cost, dtype=np.uint16)
    total = np.zeros(cost.shape, dtype=np.uint32)
    p1 = np.uint32(p1)
    p2 = np.uint32(p2)
    for dv, du in directions:
        _path(cost, total, dv, du, p1, p2)
    return total
