"""Pure numpy versions of the compiled kernels; same results bit for bit."""
import numpy as np


def fps(points, g, start):
    n = points.shape[0]
    out = np.empty(g, dtype=np.int64)
    if g == 0:
        return out
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    dist = np.full(n, np.inf)
    out[0] = start
    dist[start] = -1.0
    last = start
    for i in range(1, g):
        dx = x - points[last, 0]
        dy = y - points[last, 1]
        dz = z - points[last, 2]
        d = dx * dx + dy * dy + dz * dz
        live = dist >= 0.0
        dist[live] = np.minimum(dist[live], d[live])
        last = int(np.argmax(dist))
        out[i] = last
        dist[last] = -1.0
    return out


def knn(points, centers, k):
    out = np.empty((centers.shape[0], k), dtype=np.int64)
    for c in range(centers.shape[0]):
        dx = points[:, 0] - centers[c, 0]
        dy = points[:, 1] - centers[c, 1]
        dz = points[:, 2] - centers[c, 2]
        d = dx * dx + dy * dy + dz * dz
        out[c] = np.argsort(d, kind="stable")[:k]
    return out
