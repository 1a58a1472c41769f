"""Independent reference implementations used only by the tests."""
import colorsys

import numpy as np

UP = np.array([0.0, 1.0, 0.0])


class RayCastCamera:
    """Pinhole camera above a flat ground (world: x right, y up, z forward).

    ``pitch`` tilts the optical axis down, ``roll`` rotates the image
    clockwise about it. Nothing here uses horizon-line algebra.
    """

    def __init__(self, f, u_c, v_c, pitch, roll, height=1.77):
        self.f, self.u_c, self.v_c, self.h = f, u_c, v_c, height
        z = np.array([0.0, -np.sin(pitch), np.cos(pitch)])
        x0 = np.array([1.0, 0.0, 0.0])
        y0 = np.array([0.0, -np.cos(pitch), -np.sin(pitch)])
        self.x = np.cos(roll) * x0 + np.sin(roll) * y0
        self.y = -np.sin(roll) * x0 + np.cos(roll) * y0
        self.z = z

    def ray(self, u, v):
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        return (u - self.u_c) / self.f * self.x + (v - self.v_c) / self.f * self.y + self.z

    def project_direction(self, d):
        return (self.u_c + self.f * d @ self.x / (d @ self.z),
                self.v_c + self.f * d @ self.y / (d @ self.z))

    def horizon(self):
        """Line through the vanishing points of two horizontal directions."""
        p1 = np.array([*self.project_direction(np.array([np.sin(0.3), 0, np.cos(0.3)])), 1.0])
        p2 = np.array([*self.project_direction(np.array([np.sin(-0.3), 0, np.cos(-0.3)])), 1.0])
        line = np.cross(p1, p2)
        ahead = np.array([0.0, -self.h, 5.0])
        g = np.array([*self.project_direction(ahead), 1.0])
        if line @ g < 0:
            line = -line
        return tuple(line)

    def hits_ground(self, u, v):
        return self.ray(u, v)[..., 1] < 0

    def incidence_angle(self, u, v):
        d = self.ray(u, v)
        t = self.h / -d[..., 1]
        point = t[..., None] * d
        to_cam = -point
        cos_t = to_cam @ UP / np.linalg.norm(to_cam, axis=-1)
        return np.arccos(np.clip(cos_t, -1, 1))

    def azimuth(self, u, v):
        d = self.ray(u, v)
        fwd = np.array([self.z[0], 0.0, self.z[2]])
        fwd /= np.linalg.norm(fwd)
        right = np.cross(UP, fwd)
        flat = d * np.array([1.0, 0.0, 1.0])
        return np.arctan2(flat @ right, flat @ fwd)


def hsv_reference(rgb):
    """Scalar HSV via the standard library, applied pixel by pixel."""
    flat = np.asarray(rgb, dtype=float).reshape(-1, 3)
    out = np.array([colorsys.rgb_to_hsv(*px) for px in flat])
    return out.reshape(np.shape(rgb))


def naive_gaussian_density(x, mean, cov):
    d = len(mean)
    diff = np.asarray(x, float) - mean
    inv = np.linalg.inv(cov)
    det = np.linalg.det(cov)
    return np.exp(-0.5 * diff @ inv @ diff) / np.sqrt((2 * np.pi) ** d * det)


def naive_mixture_density(x, weights, means, covs):
    return sum(w * naive_gaussian_density(x, m, c) for w, m, c in zip(weights, means, covs))


def naive_confusion(pred, truth, valid):
    tp = fp = tn = fn = 0
    h, w = pred.shape
    for i in range(h):
        for j in range(w):
            if not valid[i, j]:
                continue
            p, t = bool(pred[i, j]), bool(truth[i, j])
            if p and t:
                tp += 1
            elif p:
                fp += 1
            elif t:
                fn += 1
            else:
                tn += 1
    return tp, fp, tn, fn
