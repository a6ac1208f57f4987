# Compiled twins of the kernels in _fallback.py. Keep the floating point
# expression order in sync with the fallback: parity is bit-exact only while
# both sides round the same intermediate results.
from libc.math cimport floor

import numpy as np

cdef double RESIDUAL_EPS = 1e-12


def slic_assign_step(double[:, ::1] lab_l, double[:, ::1] lab_a, double[:, ::1] lab_b,
                     double[::1] cl, double[::1] ca, double[::1] cb,
                     double[::1] cx, double[::1] cy,
                     int window, double ratio,
                     int[:, ::1] labels, double[:, ::1] best):
    cdef Py_ssize_t h = lab_l.shape[0]
    cdef Py_ssize_t w = lab_l.shape[1]
    cdef Py_ssize_t k, x, y, x0, x1, y0, y1, cxi, cyi
    cdef double dl, da, db, dx, dy, color, spatial, total
    cdef Py_ssize_t nk = cl.shape[0]
    with nogil:
        for k in range(nk):
            cxi = <Py_ssize_t>floor(cx[k] + 0.5)
            cyi = <Py_ssize_t>floor(cy[k] + 0.5)
            x0 = cxi - window
            if x0 < 0:
                x0 = 0
            x1 = cxi + window + 1
            if x1 > w:
                x1 = w
            y0 = cyi - window
            if y0 < 0:
                y0 = 0
            y1 = cyi + window + 1
            if y1 > h:
                y1 = h
            for y in range(y0, y1):
                dy = <double>y - cy[k]
                for x in range(x0, x1):
                    dl = lab_l[y, x] - cl[k]
                    da = lab_a[y, x] - ca[k]
                    db = lab_b[y, x] - cb[k]
                    color = dl * dl + da * da
                    color = color + db * db
                    dx = <double>x - cx[k]
                    spatial = dx * dx + dy * dy
                    total = color + ratio * spatial
                    if total < best[y, x]:
                        best[y, x] = total
                        labels[y, x] = <int>k


def dinic_maxflow(long[::1] first, long[::1] eto, long[::1] enext, double[::1] cap,
                  long s, long t):
    cdef Py_ssize_t n = first.shape[0]
    level_arr = np.empty(n, dtype=np.int64)
    itr_arr = np.empty(n, dtype=np.int64)
    queue_arr = np.empty(n, dtype=np.int64)
    path_arr = np.empty(eto.shape[0] + 1, dtype=np.int64)
    side_arr = np.zeros(n, dtype=np.uint8)
    cdef long[::1] level = level_arr
    cdef long[::1] itr = itr_arr
    cdef long[::1] queue = queue_arr
    cdef long[::1] path = path_arr
    cdef unsigned char[::1] side = side_arr
    cdef double flow = 0.0
    cdef double pushed
    cdef Py_ssize_t i, qh, qt
    cdef long u, v, e
    with nogil:
        while True:
            for i in range(n):
                level[i] = -1
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
            for i in range(n):
                itr[i] = first[i]
            while True:
                pushed = _augment(itr, level, eto, enext, cap, path, s, t)
                if pushed <= 0.0:
                    break
                flow += pushed
        _residual_side(first, eto, enext, cap, queue, s, side)
    return flow, side_arr.view(bool)


cdef double _augment(long[::1] itr, long[::1] level, long[::1] eto, long[::1] enext,
                     double[::1] cap, long[::1] path, long s, long t) nogil:
    cdef Py_ssize_t plen = 0
    cdef long u = s
    cdef long e, v
    cdef double f, c
    cdef Py_ssize_t i
    cdef bint advanced
    while True:
        if u == t:
            f = cap[path[0]]
            for i in range(plen):
                c = cap[path[i]]
                if c < f:
                    f = c
            for i in range(plen):
                e = path[i]
                cap[e] -= f
                cap[e ^ 1] += f
            return f
        advanced = False
        e = itr[u]
        while e != -1:
            v = eto[e]
            if cap[e] > RESIDUAL_EPS and level[v] == level[u] + 1:
                itr[u] = e
                path[plen] = e
                plen += 1
                u = v
                advanced = True
                break
            e = enext[e]
            itr[u] = e
        if not advanced:
            level[u] = -1
            if plen == 0:
                return 0.0
            plen -= 1
            e = path[plen]
            u = eto[e ^ 1]


cdef void _residual_side(long[::1] first, long[::1] eto, long[::1] enext,
                         double[::1] cap, long[::1] stack, long s,
                         unsigned char[::1] side) nogil:
    cdef long u, v, e
    cdef Py_ssize_t top = 0
    stack[top] = s
    top += 1
    side[s] = 1
    while top > 0:
        top -= 1
        u = stack[top]
        e = first[u]
        while e != -1:
            v = eto[e]
            if cap[e] > RESIDUAL_EPS and side[v] == 0:
                side[v] = 1
                stack[top] = v
                top += 1
            e = enext[e]
