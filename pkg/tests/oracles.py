"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports from pedflock.
"""

import itertools
import math
from collections import deque

import numpy as np


def winding_number_inside(px, py, vertices, tol=1e-9):
    """Non-zero winding rule; points on an edge count as inside."""
    n = len(vertices)
    wn = 0
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if abs(cross) <= tol and min(x1, x2) - tol <= px <= max(x1, x2) + tol \
                and min(y1, y2) - tol <= py <= max(y1, y2) + tol:
            return True
        if y1 <= py:
            if y2 > py and cross > 0:
                wn += 1
        elif y2 <= py and cross < 0:
            wn -= 1
    return wn != 0


def dense_resample(t, values, t_query):
    """Interpolate on a 1 ms grid, then read the grid at the query instants."""
    grid = np.arange(int(t[0]), int(t[-1]) + 1)
    dense = np.interp(grid, t, values)
    idx = np.clip(np.round(np.asarray(t_query) - t[0]).astype(int), 0, len(grid) - 1)
    return dense[idx]


def dtw_table(a, b):
    """Textbook (n+1) x (m+1) DTW table with Euclidean local cost."""
    n, m = len(a), len(b)
    D = [[math.inf] * (m + 1) for _ in range(n + 1)]
    D[0][0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = math.dist(a[i - 1], b[j - 1])
            D[i][j] = cost + min(D[i - 1][j], D[i][j - 1], D[i - 1][j - 1])
    return D[n][m]


def gift_wrap_hull(points):
    """Jarvis march; collinear points on hull edges are skipped."""
    pts = sorted(set(map(tuple, points)))
    if len(pts) < 3:
        return pts
    start = pts[0]
    hull = []
    p = start
    while True:
        hull.append(p)
        q = pts[0] if pts[0] != p else pts[1]
        for r in pts:
            if r == p:
                continue
            cross = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
            if cross < 0 or (cross == 0 and math.dist(p, r) > math.dist(p, q)):
                q = r
        p = q
        if p == start or len(hull) > len(pts):
            break
    return hull


def shoelace(vertices):
    s = 0.0
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return abs(s) / 2.0


def sec_enumeration(points, tol=1e-9):
    """Smallest circle among all circles through 2 or 3 support points."""
    pts = [tuple(map(float, p)) for p in points]
    if len(set(pts)) == 1:
        return pts[0], 0.0
    candidates = []
    for p, q in itertools.combinations(pts, 2):
        candidates.append((((p[0] + q[0]) / 2, (p[1] + q[1]) / 2), math.dist(p, q) / 2))
    for a, b, c in itertools.combinations(pts, 3):
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if d == 0:
            continue
        ux = ((a[0] ** 2 + a[1] ** 2) * (b[1] - c[1]) + (b[0] ** 2 + b[1] ** 2) * (c[1] - a[1])
              + (c[0] ** 2 + c[1] ** 2) * (a[1] - b[1])) / d
        uy = ((a[0] ** 2 + a[1] ** 2) * (c[0] - b[0]) + (b[0] ** 2 + b[1] ** 2) * (a[0] - c[0])
              + (c[0] ** 2 + c[1] ** 2) * (b[0] - a[0])) / d
        candidates.append(((ux, uy), math.dist((ux, uy), a)))
    best = None
    for center, r in candidates:
        if all(math.dist(center, p) <= r * (1 + tol) + tol for p in pts):
            if best is None or r < best[1]:
                best = (center, r)
    return best


def bfs_components(nodes, edges):
    adj = {v: set() for v in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, comps = set(), []
    for v in sorted(nodes):
        if v in seen:
            continue
        comp, queue = [], deque([v])
        seen.add(v)
        while queue:
            u = queue.popleft()
            comp.append(u)
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        comps.append(sorted(comp))
    return sorted(comps)


def ols_normal_equations(x, y):
    X = np.column_stack([np.ones(len(x)), np.asarray(x, dtype=float)])
    beta = np.linalg.solve(X.T @ X, X.T @ np.asarray(y, dtype=float))
    return float(beta[1]), float(beta[0])


def ecdf_count(values, x):
    return sum(v <= x for v in values) / len(values)


def finite_difference(f, params, h=1e-5):
    g = np.zeros_like(params)
    for i in range(len(params)):
        e = np.zeros_like(params)
        e[i] = h
        g[i] = (f(params + e) - f(params - e)) / (2 * h)
    return g
