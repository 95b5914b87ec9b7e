# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``occo._pykernels``.

Floating point expressions follow the Python module term by term; the
extension is built with ``-ffp-contract=off`` so both produce identical
bits.  Exact predicate fallbacks call back into the Python module.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, floor, INFINITY
from libc.stdlib cimport malloc, realloc, free

from ._pykernels import exact_orient, exact_incircle

cnp.import_array()

DEF GHOST = -1
cdef double ORIENT_BOUND = 3.4e-16
cdef double INCIRCLE_BOUND = 1.2e-15


cdef inline int orient_sign(double ax, double ay, double bx, double by, double cx, double cy):
    cdef double l = (ax - cx) * (by - cy)
    cdef double r = (ay - cy) * (bx - cx)
    cdef double det = l - r
    cdef double bound = ORIENT_BOUND * (fabs(l) + fabs(r))
    if det > bound:
        return 1
    if -det > bound:
        return -1
    return exact_orient(ax, ay, bx, by, cx, cy)


cdef inline int incircle_sign(double ax, double ay, double bx, double by,
                              double cx, double cy, double dx, double dy):
    cdef double adx = ax - dx
    cdef double ady = ay - dy
    cdef double bdx = bx - dx
    cdef double bdy = by - dy
    cdef double cdx = cx - dx
    cdef double cdy = cy - dy
    cdef double bc = bdx * cdy - cdx * bdy
    cdef double ca = cdx * ady - adx * cdy
    cdef double ab = adx * bdy - bdx * ady
    cdef double alift = adx * adx + ady * ady
    cdef double blift = bdx * bdx + bdy * bdy
    cdef double clift = cdx * cdx + cdy * cdy
    cdef double det = alift * bc + blift * ca + clift * ab
    cdef double perm = ((fabs(bdx * cdy) + fabs(cdx * bdy)) * alift
                        + (fabs(cdx * ady) + fabs(adx * cdy)) * blift
                        + (fabs(adx * bdy) + fabs(bdx * ady)) * clift)
    cdef double bound = INCIRCLE_BOUND * perm
    if det > bound:
        return 1
    if -det > bound:
        return -1
    return exact_incircle(ax, ay, bx, by, cx, cy, dx, dy)


cdef inline double plane_depth(double* u, double* v, double* depth,
                               int i0, int i1, int i2, double pu, double pv):
    cdef double u0 = u[i0]
    cdef double v0 = v[i0]
    cdef double u1 = u[i1]
    cdef double v1 = v[i1]
    cdef double u2 = u[i2]
    cdef double v2 = v[i2]
    cdef double den = (v1 - v2) * (u0 - u2) + (u2 - u1) * (v0 - v2)
    cdef double l0 = ((v1 - v2) * (pu - u2) + (u2 - u1) * (pv - v2)) / den
    cdef double l1 = ((v2 - v0) * (pu - u2) + (u0 - u2) * (pv - v2)) / den
    cdef double l2 = 1.0 - l0 - l1
    cdef double inv = l0 / depth[i0] + l1 / depth[i1] + l2 / depth[i2]
    return 1.0 / inv


cdef inline void sort3(int* a, int* b, int* c):
    cdef int t
    if a[0] > b[0]:
        t = a[0]; a[0] = b[0]; b[0] = t
    if b[0] > c[0]:
        t = b[0]; b[0] = c[0]; c[0] = t
    if a[0] > b[0]:
        t = a[0]; a[0] = b[0]; b[0] = t


cdef class Triangulation:
    cdef double* x
    cdef double* y
    cdef int n
    cdef double tol
    cdef int* tv
    cdef int* tn
    cdef char* alive
    cdef int ntri
    cdef int cap
    cdef int* freel
    cdef int nfree
    cdef int* mark
    cdef int stamp
    cdef int* by_u
    cdef int* by_w
    cdef public int last
    cdef public int n_inserted
    cdef list pending
    cdef dict grid
    cdef object _keep

    def __cinit__(self, xs, ys, double tol=1e-9):
        cdef int i
        self.n = len(xs)
        self.tol = tol
        self.x = <double*> malloc(max(self.n, 1) * sizeof(double))
        self.y = <double*> malloc(max(self.n, 1) * sizeof(double))
        for i in range(self.n):
            self.x[i] = float(xs[i])
            self.y[i] = float(ys[i])
        self.cap = 64
        self.tv = <int*> malloc(3 * self.cap * sizeof(int))
        self.tn = <int*> malloc(3 * self.cap * sizeof(int))
        self.alive = <char*> malloc(self.cap * sizeof(char))
        self.freel = <int*> malloc(self.cap * sizeof(int))
        self.mark = <int*> malloc(self.cap * sizeof(int))
        self.by_u = <int*> malloc((self.n + 1) * sizeof(int))
        self.by_w = <int*> malloc((self.n + 1) * sizeof(int))
        self.ntri = 0
        self.nfree = 0
        self.stamp = 0
        self.last = -1
        self.n_inserted = 0
        self.pending = []
        self.grid = {}

    def __dealloc__(self):
        free(self.x); free(self.y); free(self.tv); free(self.tn); free(self.alive)
        free(self.freel); free(self.mark); free(self.by_u); free(self.by_w)

    # -- dedup -----------------------------------------------------------

    cdef tuple _cell(self, int i):
        return (<long long> floor(self.x[i] / self.tol), <long long> floor(self.y[i] / self.tol))

    cpdef int near_duplicate(self, int i):
        cdef long long cx, cy, gx, gy
        cdef int best = -1
        cdef int j
        cdef double du, dv
        cx, cy = self._cell(i)
        for gx in range(cx - 1, cx + 2):
            for gy in range(cy - 1, cy + 2):
                bucket = self.grid.get((gx, gy))
                if bucket is None:
                    continue
                for j in bucket:
                    du = self.x[i] - self.x[j]
                    dv = self.y[i] - self.y[j]
                    if du * du + dv * dv <= self.tol * self.tol:
                        if best == -1 or j < best:
                            best = j
        return best

    # -- storage ---------------------------------------------------------

    cdef void _grow(self):
        self.cap *= 2
        self.tv = <int*> realloc(self.tv, 3 * self.cap * sizeof(int))
        self.tn = <int*> realloc(self.tn, 3 * self.cap * sizeof(int))
        self.alive = <char*> realloc(self.alive, self.cap * sizeof(char))
        self.freel = <int*> realloc(self.freel, self.cap * sizeof(int))
        self.mark = <int*> realloc(self.mark, self.cap * sizeof(int))

    cdef int _new_tri(self, int a, int b, int c):
        cdef int t
        if self.nfree > 0:
            self.nfree -= 1
            t = self.freel[self.nfree]
        else:
            if self.ntri == self.cap:
                self._grow()
            t = self.ntri
            self.ntri += 1
            self.mark[t] = 0
        self.tv[3 * t] = a
        self.tv[3 * t + 1] = b
        self.tv[3 * t + 2] = c
        self.tn[3 * t] = -1
        self.tn[3 * t + 1] = -1
        self.tn[3 * t + 2] = -1
        self.alive[t] = 1
        return t

    cdef inline int _orient(self, int a, int b, int p):
        return orient_sign(self.x[a], self.y[a], self.x[b], self.y[b], self.x[p], self.y[p])

    cdef bint _conflict(self, int t, int p):
        cdef int a = self.tv[3 * t]
        cdef int b = self.tv[3 * t + 1]
        cdef int c = self.tv[3 * t + 2]
        cdef int s
        cdef double dot
        if c == GHOST:
            s = self._orient(a, b, p)
            if s > 0:
                return True
            if s < 0:
                return False
            dot = ((self.x[p] - self.x[a]) * (self.x[b] - self.x[a])
                   + (self.y[p] - self.y[a]) * (self.y[b] - self.y[a]))
            if dot <= 0:
                return False
            dot = ((self.x[p] - self.x[b]) * (self.x[a] - self.x[b])
                   + (self.y[p] - self.y[b]) * (self.y[a] - self.y[b]))
            return dot > 0
        return incircle_sign(self.x[a], self.y[a], self.x[b], self.y[b],
                             self.x[c], self.y[c], self.x[p], self.y[p]) > 0

    # -- construction ----------------------------------------------------

    cdef void _start(self, int a, int b, int c):
        cdef int tmp, t0, g0, g1, g2
        if self._orient(a, b, c) < 0:
            tmp = b; b = c; c = tmp
        t0 = self._new_tri(a, b, c)
        g0 = self._new_tri(b, a, GHOST)
        g1 = self._new_tri(c, b, GHOST)
        g2 = self._new_tri(a, c, GHOST)
        self.tn[3 * t0] = g1; self.tn[3 * t0 + 1] = g2; self.tn[3 * t0 + 2] = g0
        self.tn[3 * g0] = g2; self.tn[3 * g0 + 1] = g1; self.tn[3 * g0 + 2] = t0
        self.tn[3 * g1] = g0; self.tn[3 * g1 + 1] = g2; self.tn[3 * g1 + 2] = t0
        self.tn[3 * g2] = g1; self.tn[3 * g2 + 1] = g0; self.tn[3 * g2 + 2] = t0
        self.last = t0

    cpdef add(self, int p):
        cdef int a, b, q
        key = self._cell(p)
        bucket = self.grid.get(key)
        if bucket is None:
            self.grid[key] = [p]
        else:
            bucket.append(p)
        self.n_inserted += 1
        if self.last >= 0:
            self._insert(p)
            return
        self.pending.append(p)
        if len(self.pending) < 3:
            return
        a = self.pending[0]
        b = self.pending[1]
        if self._orient(a, b, p) == 0:
            return
        rest = self.pending[2:-1]
        self.pending = []
        self._start(a, b, p)
        for q in rest:
            self._insert(q)

    cdef int _locate(self, int p, int* signs):
        """Triangle holding p; writes orientation signs, or returns a ghost
        with signs[0] = 2 when p is strictly outside the hull."""
        cdef int t = self.last
        cdef int a, b, c, nxt, s0, s1, s2
        cdef long steps = 0
        cdef long limit = 4 * self.ntri + 16
        if not self.alive[t]:
            t = 0
            while not self.alive[t]:
                t += 1
        if self.tv[3 * t + 2] == GHOST:
            t = self.tn[3 * t + 2]
        while True:
            a = self.tv[3 * t]
            b = self.tv[3 * t + 1]
            c = self.tv[3 * t + 2]
            s0 = self._orient(b, c, p)
            if s0 < 0:
                nxt = self.tn[3 * t]
            else:
                s1 = self._orient(c, a, p)
                if s1 < 0:
                    nxt = self.tn[3 * t + 1]
                else:
                    s2 = self._orient(a, b, p)
                    if s2 < 0:
                        nxt = self.tn[3 * t + 2]
                    else:
                        signs[0] = s0
                        signs[1] = s1
                        signs[2] = s2
                        return t
            if self.tv[3 * nxt + 2] == GHOST:
                signs[0] = 2
                return nxt
            t = nxt
            steps += 1
            if steps > limit:
                return self._scan_locate(p, signs)

    cdef int _scan_locate(self, int p, int* signs):
        cdef int t, a, b, c
        for t in range(self.ntri):
            if not self.alive[t] or self.tv[3 * t + 2] == GHOST:
                continue
            a = self.tv[3 * t]
            b = self.tv[3 * t + 1]
            c = self.tv[3 * t + 2]
            signs[0] = self._orient(b, c, p)
            signs[1] = self._orient(c, a, p)
            signs[2] = self._orient(a, b, p)
            if signs[0] >= 0 and signs[1] >= 0 and signs[2] >= 0:
                return t
        for t in range(self.ntri):
            if self.alive[t] and self.tv[3 * t + 2] == GHOST and self._conflict(t, p):
                signs[0] = 2
                return t
        raise RuntimeError("point location failed")

    def locate(self, int p):
        cdef int signs[3]
        cdef int t = self._locate(p, signs)
        if signs[0] == 2:
            return t, None
        return t, (signs[0], signs[1], signs[2])

    cdef void _insert(self, int p) except *:
        cdef int signs[3]
        cdef int t0 = self._locate(p, signs)
        cdef int* tv = self.tv
        cdef int* tn
        cdef int ncav = 1, nbnd = 0, k = 0, e, t, nb, slot, u, w, i, n0, n1, n2
        cdef int* cavity
        cdef int* bnd
        cdef int* made
        cdef int cavcap = 16, bndcap = 16
        cavity = <int*> malloc(cavcap * sizeof(int))
        bnd = <int*> malloc(4 * bndcap * sizeof(int))
        self.stamp += 1
        cavity[0] = t0
        self.mark[t0] = self.stamp
        tn = self.tn
        while k < ncav:
            t = cavity[k]
            k += 1
            for e in range(3):
                nb = tn[3 * t + e]
                if self.mark[nb] == self.stamp:
                    continue
                if self._conflict(nb, p):
                    self.mark[nb] = self.stamp
                    if ncav == cavcap:
                        cavcap *= 2
                        cavity = <int*> realloc(cavity, cavcap * sizeof(int))
                    cavity[ncav] = nb
                    ncav += 1
                else:
                    slot = 3 * nb
                    while tn[slot] != t:
                        slot += 1
                    if nbnd == bndcap:
                        bndcap *= 2
                        bnd = <int*> realloc(bnd, 4 * bndcap * sizeof(int))
                    bnd[4 * nbnd] = tv[3 * t + (e + 1) % 3]
                    bnd[4 * nbnd + 1] = tv[3 * t + (e + 2) % 3]
                    bnd[4 * nbnd + 2] = nb
                    bnd[4 * nbnd + 3] = slot
                    nbnd += 1
        for i in range(ncav):
            self.alive[cavity[i]] = 0
        # same reuse order as the Python module: smallest slot first
        _sort_desc(cavity, ncav)
        for i in range(ncav):
            self.freel[self.nfree] = cavity[i]
            self.nfree += 1

        made = <int*> malloc(bndcap * sizeof(int))
        for i in range(nbnd):
            u = bnd[4 * i]
            w = bnd[4 * i + 1]
            t = self._new_tri(u, w, p)
            made[i] = t
            self.by_u[u + 1] = t
            self.by_w[w + 1] = t
        tv = self.tv
        tn = self.tn
        for i in range(nbnd):
            t = made[i]
            u = bnd[4 * i]
            w = bnd[4 * i + 1]
            nb = bnd[4 * i + 2]
            slot = bnd[4 * i + 3]
            n0 = self.by_u[w + 1]
            n1 = self.by_w[u + 1]
            n2 = nb
            tn[slot] = t
            if u == GHOST:
                tv[3 * t] = w; tv[3 * t + 1] = p; tv[3 * t + 2] = GHOST
                tn[3 * t] = n1; tn[3 * t + 1] = n2; tn[3 * t + 2] = n0
            elif w == GHOST:
                tv[3 * t] = p; tv[3 * t + 1] = u; tv[3 * t + 2] = GHOST
                tn[3 * t] = n2; tn[3 * t + 1] = n0; tn[3 * t + 2] = n1
            else:
                tn[3 * t] = n0; tn[3 * t + 1] = n1; tn[3 * t + 2] = n2
                self.last = t
        free(made)
        free(cavity)
        free(bnd)

    # -- queries ---------------------------------------------------------

    cdef int _covering(self, int p, int* out, int outcap):
        cdef int signs[3]
        cdef int t, nb, e, v, cur, k, cnt = 0, nz = 0, ze = -1
        if self.last < 0:
            return 0
        t = self._locate(p, signs)
        if signs[0] == 2:
            return 0
        for e in range(3):
            if signs[e] == 0:
                nz += 1
                ze = e
        if nz == 0:
            out[0] = t
            return 1
        if nz == 1:
            out[0] = t
            nb = self.tn[3 * t + ze]
            if self.tv[3 * nb + 2] == GHOST:
                return 1
            out[1] = nb
            return 2
        for e in range(3):
            if signs[e] != 0:
                break
        v = self.tv[3 * t + e]
        cur = t
        while True:
            if self.tv[3 * cur + 2] != GHOST and cnt < outcap:
                out[cnt] = cur
                cnt += 1
            if self.tv[3 * cur] == v:
                k = 0
            elif self.tv[3 * cur + 1] == v:
                k = 1
            else:
                k = 2
            cur = self.tn[3 * cur + (k + 1) % 3]
            if cur == t:
                break
        return cnt

    def covering(self, int p):
        cdef int buf[512]
        cdef int cnt = self._covering(p, buf, 512)
        return [buf[i] for i in range(cnt)]

    def triangles(self):
        cdef int t, a, b, c, m
        out = []
        for t in range(self.ntri):
            if not self.alive[t]:
                continue
            a = self.tv[3 * t]
            b = self.tv[3 * t + 1]
            c = self.tv[3 * t + 2]
            if c == GHOST:
                continue
            m = min(a, b, c)
            if m == b:
                a, b, c = b, c, a
            elif m == c:
                a, b, c = c, a, b
            out.append((a, b, c))
        out.sort()
        return out


cdef void _sort_desc(int* arr, int n):
    cdef int i, j, key
    for i in range(1, n):
        key = arr[i]
        j = i - 1
        while j >= 0 and arr[j] < key:
            arr[j + 1] = arr[j]
            j -= 1
        arr[j + 1] = key


def delaunay(xs, ys, double tol=1e-9):
    cdef int n = len(xs)
    cdef int i, j
    order = sorted(range(n), key=lambda i: (float(xs[i]), float(ys[i]), i))
    cdef Triangulation tri = Triangulation(xs, ys, tol)
    rep = list(range(n))
    for i in order:
        j = tri.near_duplicate(i)
        if j >= 0:
            rep[i] = j
            continue
        tri.add(i)
    return tri.triangles(), rep


def _depth_order(list dl):
    return sorted(range(len(dl)), key=lambda i: (dl[i], i))


def zbuffer_visibility(u, v, depth, double eps, double tol=1e-9):
    cdef int n = len(u)
    cdef int i, k, cnt, a, b, c, t
    cdef int buf[512]
    cdef bint hidden
    cdef cnp.ndarray[double, ndim=1] ua = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] va = np.ascontiguousarray(v, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] da = np.ascontiguousarray(depth, dtype=np.float64)
    cdef double* up = <double*> ua.data
    cdef double* vp = <double*> va.data
    cdef double* dp = <double*> da.data
    order = _depth_order(da.tolist())
    cdef Triangulation tri = Triangulation(ua, va, tol)
    mask = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[:] mv = mask.view(np.uint8)
    for i in order:
        hidden = False
        cnt = tri._covering(i, buf, 512)
        for k in range(cnt):
            t = buf[k]
            a = tri.tv[3 * t]
            b = tri.tv[3 * t + 1]
            c = tri.tv[3 * t + 2]
            sort3(&a, &b, &c)
            if plane_depth(up, vp, dp, a, b, c, up[i], vp[i]) < dp[i] - eps:
                hidden = True
                break
        if hidden:
            continue
        mv[i] = 1
        if tri.near_duplicate(i) < 0:
            tri.add(i)
    return mask


def nearest(a, b):
    cdef cnp.ndarray[double, ndim=2, mode="c"] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] B = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], i, j, jb
    cdef double ax, ay, az, dx, dy, dz, d2, best
    dist = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    cdef double[:] dv = dist
    cdef cnp.int64_t[:] iv = idx
    cdef double* bp = <double*> B.data
    for i in range(n):
        ax = A[i, 0]
        ay = A[i, 1]
        az = A[i, 2]
        best = INFINITY
        jb = 0
        for j in range(m):
            dx = ax - bp[3 * j]
            dy = ay - bp[3 * j + 1]
            dz = az - bp[3 * j + 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best:
                best = d2
                jb = j
        dv[i] = sqrt(best)
        iv[i] = jb
    return dist, idx


def auction(cost, double eps_final, double scaling=5.0):
    cdef cnp.ndarray[double, ndim=2, mode="c"] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t n = C.shape[0], i, j, jbest, prev, head, tail
    cdef double eps, target, best, second, val
    assign = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return assign
    if n == 1:
        assign[0] = 0
        return assign
    cdef double* cp = <double*> C.data
    cdef cnp.ndarray[double, ndim=1] price = np.zeros(n)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] owner = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] person = np.empty(n, dtype=np.int64)
    # ring buffer of unassigned persons; at most n queued at once
    cdef cnp.ndarray[cnp.int64_t, ndim=1] queue = np.empty(n + 1, dtype=np.int64)
    eps = float(C.max()) / 2.0
    target = eps_final / n
    if eps <= target:
        eps = target
    while True:
        for i in range(n):
            owner[i] = -1
            person[i] = -1
            queue[i] = i
        head = 0
        tail = n
        while head != tail:
            i = queue[head]
            head = (head + 1) % (n + 1)
            best = -INFINITY
            second = -INFINITY
            jbest = -1
            for j in range(n):
                val = -cp[i * n + j] - price[j]
                if val > best:
                    second = best
                    best = val
                    jbest = j
                elif val > second:
                    second = val
            price[jbest] += best - second + eps
            prev = owner[jbest]
            if prev >= 0:
                person[prev] = -1
                queue[tail] = prev
                tail = (tail + 1) % (n + 1)
            owner[jbest] = i
            person[i] = jbest
        if eps <= target:
            break
        eps = eps / scaling
        if eps < target:
            eps = target
    assign[:] = person
    return assign
