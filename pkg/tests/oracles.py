"""Independent brute-force references shared by the test modules."""
import itertools

import numpy as np


def exhaustive_minimum(s1, s2, p, radius=1):
    """Lowest discrete-flow energy over every joint labelling of a tiny grid.

    Each pixel takes an integer offset in ``[-radius, radius]^2``; all
    ``(2 radius + 1)^(2 h w)`` labellings are scored at once.
    """
    h, w, _ = s1.shape
    n = h * w
    side = 2 * radius + 1
    labels = np.array(list(itertools.product(range(side * side), repeat=n)))
    U = labels % side - radius
    V = labels // side - radius
    zz, yy = np.divmod(np.arange(n), w)
    s1 = s1.astype(np.float64)
    s2 = s2.astype(np.float64)
    E = np.zeros(len(labels))
    for i in range(n):
        ty, tz = yy[i] + U[:, i], zz[i] + V[:, i]
        inside = (ty >= 0) & (ty < w) & (tz >= 0) & (tz < h)
        d = np.abs(s1[zz[i], yy[i]][None] - s2[np.clip(tz, 0, h - 1), np.clip(ty, 0, w - 1)]).sum(-1)
        E += np.where(inside, np.minimum(d, p.d1), p.d1) + p.eta * (np.abs(U[:, i]) + np.abs(V[:, i]))
    for i in range(n):
        for j in range(i + 1, n):
            if abs(zz[i] - zz[j]) + abs(yy[i] - yy[j]) == 1:
                E += np.minimum(p.alpha * np.abs(U[:, i] - U[:, j]), p.d2)
                E += np.minimum(p.alpha * np.abs(V[:, i] - V[:, j]), p.d2)
    return float(E.min())


def random_energy_params(rng):
    from tsflow.flow import EnergyParams
    return EnergyParams(d1=float(rng.uniform(0.5, 4)), d2=float(rng.uniform(0.5, 5)),
                        eta=float(rng.uniform(0.001, 0.5)), alpha=float(rng.uniform(0.1, 3)))
