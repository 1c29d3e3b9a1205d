"""Brute-force references shared by the unit and acceptance tests."""
import math

import numpy as np

from freqtrig.surrogate import Classifier, cross_entropy


def oracle_dominates(a, b):
    no_worse = True
    strictly = False
    for x, y in zip(a, b):
        if x > y:
            no_worse = False
        if x < y:
            strictly = True
    return no_worse and strictly


def oracle_fronts(points):
    remaining = list(range(len(points)))
    fronts = []
    while remaining:
        front = [i for i in remaining
                 if not any(oracle_dominates(points[j], points[i]) for j in remaining if j != i)]
        fronts.append(front)
        remaining = [i for i in remaining if i not in front]
    return fronts


def oracle_crowding(points):
    n = len(points)
    d = [0.0] * n
    for m in range(len(points[0])):
        order = sorted(range(n), key=lambda i: points[i][m])
        fmin, fmax = points[order[0]][m], points[order[-1]][m]
        d[order[0]] = d[order[-1]] = math.inf
        for pos in range(1, n - 1):
            if fmax > fmin:
                d[order[pos]] += (points[order[pos + 1]][m] - points[order[pos - 1]][m]) / (fmax - fmin)
    return d


def oracle_box_distance(p, bounds):
    nearest = [min(max(v, 0.0), b) for v, b in zip(p, bounds)]
    return math.dist(p, nearest)


def oracle_rndsort(points, P, bounds):
    """Line-by-line transcription of the preference-based NDSort."""
    T = list(range(len(points)))
    Tr = []

    def nondom(ts):
        return [i for i in ts if not any(oracle_dominates(points[j], points[i]) for j in ts if j != i)]

    while len(Tr) <= P and T and len(Tr) + len(nondom(T)) <= P:
        front = nondom(T)
        Tr.extend(front)
        T = [i for i in T if i not in front]
    lst = []
    for i in T:
        d = oracle_box_distance(points[i], bounds)
        lst.append((d, i))
    lst.sort()
    order = 0
    while len(Tr) < P:
        Tr.append(lst[order][1])
        order += 1
    return Tr


def random_points(rng, n, integer=True):
    if integer:
        return [tuple(float(v) for v in rng.integers(0, 6, 3)) for _ in range(n)]
    return [tuple(rng.random(3)) for _ in range(n)]


def numeric_grads(model: Classifier, x, y, step=1e-5):
    out = {}
    for name, p in model.params.items():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + step
            up = np.mean(cross_entropy(model, x, y))
            p[i] = old - step
            down = np.mean(cross_entropy(model, x, y))
            p[i] = old
            g[i] = (up - down) / (2 * step)
        out[name] = g
    return out
