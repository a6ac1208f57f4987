"""Pure NumPy/Python fallbacks for the compiled kernels in ``_native``.

Both backends must produce bit-identical results: every floating point
expression here is written in the same operation order as its Cython twin
(and the extension is compiled with -ffp-contract=off so no FMA creeps in).
"""
from __future__ import annotations

import math

import numpy as np

RESIDUAL_EPS = 1e-12


def slic_assign_step(lab_l, lab_a, lab_b, cl, ca, cb, cx, cy, window, ratio, labels, best):
    """One SLIC assignment sweep.

    For each cluster k (ascending, so the smallest id wins exact ties via the
    strict < comparison), pixels inside the 2S window around the cluster
    centre adopt label k when the combined LAB+xy distance improves on
    ``best``. ``labels`` and ``best`` are updated in place.
    """
    h, w = lab_l.shape
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    for k in range(cl.shape[0]):
        cxi = int(math.floor(cx[k] + 0.5))
        cyi = int(math.floor(cy[k] + 0.5))
        x0 = max(cxi - window, 0)
        x1 = min(cxi + window + 1, w)
        y0 = max(cyi - window, 0)
        y1 = min(cyi + window + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        dl = lab_l[y0:y1, x0:x1] - cl[k]
        da = lab_a[y0:y1, x0:x1] - ca[k]
        db = lab_b[y0:y1, x0:x1] - cb[k]
        color = dl * dl + da * da
        color = color + db * db
        dx = xs[x0:x1] - cx[k]
        dy = ys[y0:y1] - cy[k]
        sx = dx * dx
        sy = dy * dy
        spatial = sx[None, :] + sy[:, None]
        total = color + ratio * spatial
        view_b = best[y0:y1, x0:x1]
        view_l = labels[y0:y1, x0:x1]
        upd = total < view_b
        view_b[upd] = total[upd]
        view_l[upd] = k


def dinic_maxflow(first, eto, enext, cap, s, t):
    """Dinic max-flow on a linked-list edge structure.

    Edges come in (forward, reverse) pairs, so ``e ^ 1`` is the reverse of
    ``e`` and ``eto[e ^ 1]`` the source of ``e``. ``cap`` is mutated to the
    residual capacities. Returns (flow, side) where side[u] is True when u
    stays source-reachable in the residual graph (the min-cut partition).
    """
    n = first.shape[0]
    level = np.empty(n, dtype=np.int64)
    itr = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    flow = 0.0
    while True:
        level.fill(-1)
        qt = 0
        queue[qt] = s
        qt += 1
        level[s] = 0
        qh = 0
        while qh < qt:
            u = queue[qh]
            qh += 1
            e = first[u]
            while e != -1:
                v = eto[e]
                if cap[e] > RESIDUAL_EPS and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
                e = enext[e]
        if level[t] < 0:
            break
        np.copyto(itr, first)
        while True:
            pushed = _augment(itr, level, eto, enext, cap, s, t)
            if pushed <= 0.0:
                break
            flow += pushed
    side = _residual_side(first, eto, enext, cap, s)
    return flow, side


def _augment(itr, level, eto, enext, cap, s, t):
    path: list[int] = []
    u = s
    while True:
        if u == t:
            f = float(cap[path[0]])
            for e in path:
                c = float(cap[e])
                if c < f:
                    f = c
            for e in path:
                cap[e] -= f
                cap[e ^ 1] += f
            return f
        advanced = False
        e = itr[u]
        while e != -1:
            v = eto[e]
            if cap[e] > RESIDUAL_EPS and level[v] == level[u] + 1:
                itr[u] = e
                path.append(e)
                u = v
                advanced = True
                break
            e = enext[e]
            itr[u] = e
        if not advanced:
            level[u] = -1
            if not path:
                return 0.0
            e = path.pop()
            u = eto[e ^ 1]


def _residual_side(first, eto, enext, cap, s):
    n = first.shape[0]
    side = np.zeros(n, dtype=bool)
    stack = [s]
    side[s] = True
    while stack:
        u = stack.pop()
        e = first[u]
        while e != -1:
            v = eto[e]
            if cap[e] > RESIDUAL_EPS and not side[v]:
                side[v] = True
                stack.append(v)
            e = enext[e]
    return side
