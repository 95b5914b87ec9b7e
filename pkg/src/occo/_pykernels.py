"""Pure-Python implementations of the hot kernels.

``occo._ckernels`` is a Cython port of this module with the same function
signatures and bit-identical floating point behaviour (same operation
order, no FMA contraction).  ``occo.kernels`` picks one at import time.
"""

from __future__ import annotations

import math
from collections import deque
from fractions import Fraction

import numpy as np

GHOST = -1

# static filter bounds, slightly looser than Shewchuk's ccwerrboundA/iccerrboundA
ORIENT_BOUND = 3.4e-16
INCIRCLE_BOUND = 1.2e-15


# --------------------------------------------------------------------------
# predicates
# --------------------------------------------------------------------------


def exact_orient(ax, ay, bx, by, cx, cy):
    ax, ay, bx, by, cx, cy = map(Fraction, (ax, ay, bx, by, cx, cy))
    det = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)
    return (det > 0) - (det < 0)


def exact_incircle(ax, ay, bx, by, cx, cy, dx, dy):
    ax, ay, bx, by, cx, cy, dx, dy = map(Fraction, (ax, ay, bx, by, cx, cy, dx, dy))
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    det = ((adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
           + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
           + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady))
    return (det > 0) - (det < 0)


def orient_sign(ax, ay, bx, by, cx, cy):
    """Sign of the signed area of (a, b, c); +1 when counter-clockwise."""
    l = (ax - cx) * (by - cy)
    r = (ay - cy) * (bx - cx)
    det = l - r
    bound = ORIENT_BOUND * (abs(l) + abs(r))
    if det > bound:
        return 1
    if -det > bound:
        return -1
    return exact_orient(ax, ay, bx, by, cx, cy)


def incircle_sign(ax, ay, bx, by, cx, cy, dx, dy):
    """+1 when d lies strictly inside the circumcircle of CCW (a, b, c)."""
    adx = ax - dx
    ady = ay - dy
    bdx = bx - dx
    bdy = by - dy
    cdx = cx - dx
    cdy = cy - dy
    bc = bdx * cdy - cdx * bdy
    ca = cdx * ady - adx * cdy
    ab = adx * bdy - bdx * ady
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = alift * bc + blift * ca + clift * ab
    perm = ((abs(bdx * cdy) + abs(cdx * bdy)) * alift
            + (abs(cdx * ady) + abs(adx * cdy)) * blift
            + (abs(adx * bdy) + abs(bdx * ady)) * clift)
    bound = INCIRCLE_BOUND * perm
    if det > bound:
        return 1
    if -det > bound:
        return -1
    return exact_incircle(ax, ay, bx, by, cx, cy, dx, dy)


def plane_depth(u, v, depth, i0, i1, i2, pu, pv):
    """Depth where the pixel ray through (pu, pv) meets the plane of a triangle.

    Inverse depth is affine in pixel space on a plane, so barycentric
    weights interpolate 1/depth.  Vertex indices must be passed sorted.
    """
    u0 = u[i0]
    v0 = v[i0]
    u1 = u[i1]
    v1 = v[i1]
    u2 = u[i2]
    v2 = v[i2]
    den = (v1 - v2) * (u0 - u2) + (u2 - u1) * (v0 - v2)
    l0 = ((v1 - v2) * (pu - u2) + (u2 - u1) * (pv - v2)) / den
    l1 = ((v2 - v0) * (pu - u2) + (u0 - u2) * (pv - v2)) / den
    l2 = 1.0 - l0 - l1
    inv = l0 / depth[i0] + l1 / depth[i1] + l2 / depth[i2]
    return 1.0 / inv


# --------------------------------------------------------------------------
# incremental Delaunay triangulation
# --------------------------------------------------------------------------


class Triangulation:
    """Bowyer-Watson triangulation over externally indexed 2D points.

    The convex hull is closed with ghost triangles ``(a, b, GHOST)`` whose
    directed edge ``a -> b`` has the outside on its left; a ghost's
    "circumcircle" is that open half-plane plus the open edge.  Points
    inserted while all previous ones are collinear are held back until a
    non-collinear point arrives.
    """

    def __init__(self, xs, ys, tol=1e-9):
        self.x = [float(t) for t in xs]
        self.y = [float(t) for t in ys]
        self.tol = tol
        self.tv: list[int] = []
        self.tn: list[int] = []
        self.alive: list[bool] = []
        self.free: list[int] = []
        self.pending: list[int] = []
        self.last = -1
        self.grid: dict[tuple[int, int], list[int]] = {}
        self.n_inserted = 0

    # -- dedup -----------------------------------------------------------

    def _cell(self, i):
        return (math.floor(self.x[i] / self.tol), math.floor(self.y[i] / self.tol))

    def near_duplicate(self, i):
        """Index of an inserted vertex within ``tol`` of point i, or -1."""
        cx, cy = self._cell(i)
        best = -1
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for j in self.grid.get((gx, gy), ()):
                    du = self.x[i] - self.x[j]
                    dv = self.y[i] - self.y[j]
                    if du * du + dv * dv <= self.tol * self.tol:
                        if best == -1 or j < best:
                            best = j
        return best

    # -- storage ---------------------------------------------------------

    def _new_tri(self, a, b, c):
        if self.free:
            t = self.free.pop()
            self.tv[3 * t:3 * t + 3] = [a, b, c]
            self.tn[3 * t:3 * t + 3] = [-1, -1, -1]
            self.alive[t] = True
        else:
            t = len(self.alive)
            self.tv += [a, b, c]
            self.tn += [-1, -1, -1]
            self.alive.append(True)
        return t

    def _orient(self, a, b, p):
        return orient_sign(self.x[a], self.y[a], self.x[b], self.y[b], self.x[p], self.y[p])

    def _conflict(self, t, p):
        a, b, c = self.tv[3 * t:3 * t + 3]
        if c == GHOST:
            s = self._orient(a, b, p)
            if s > 0:
                return True
            if s < 0:
                return False
            # collinear: conflict only on the open segment
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

    def _start(self, a, b, c):
        if self._orient(a, b, c) < 0:
            b, c = c, b
        t0 = self._new_tri(a, b, c)
        g0 = self._new_tri(b, a, GHOST)
        g1 = self._new_tri(c, b, GHOST)
        g2 = self._new_tri(a, c, GHOST)
        self.tn[3 * t0:3 * t0 + 3] = [g1, g2, g0]
        self.tn[3 * g0:3 * g0 + 3] = [g2, g1, t0]
        self.tn[3 * g1:3 * g1 + 3] = [g0, g2, t0]
        self.tn[3 * g2:3 * g2 + 3] = [g1, g0, t0]
        self.last = t0

    def add(self, p):
        """Insert point p (the caller has already rejected near-duplicates)."""
        cell = self._cell(p)
        self.grid.setdefault(cell, []).append(p)
        self.n_inserted += 1
        if self.last >= 0:
            self._insert(p)
            return
        self.pending.append(p)
        if len(self.pending) < 3:
            return
        a, b = self.pending[0], self.pending[1]
        if self._orient(a, b, p) == 0:
            return
        rest = self.pending[2:-1]
        self.pending = []
        self._start(a, b, p)
        for q in rest:
            self._insert(q)

    def locate(self, p):
        """Walk to the triangle holding p.

        Returns ``(t, signs)``; ``t`` is a ghost when p lies strictly
        outside the hull, otherwise p is in the closed real triangle and
        ``signs[k]`` is the orientation of p against the edge opposite k.
        """
        t = self.last
        if not self.alive[t]:
            t = self.alive.index(True)
        if self.tv[3 * t + 2] == GHOST:
            t = self.tn[3 * t + 2]
        steps = 0
        limit = 4 * len(self.alive) + 16
        while True:
            a, b, c = self.tv[3 * t:3 * t + 3]
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
                        return t, (s0, s1, s2)
            if self.tv[3 * nxt + 2] == GHOST:
                return nxt, None
            t = nxt
            steps += 1
            if steps > limit:
                return self._scan_locate(p)

    def _scan_locate(self, p):
        for t, ok in enumerate(self.alive):
            if not ok or self.tv[3 * t + 2] == GHOST:
                continue
            a, b, c = self.tv[3 * t:3 * t + 3]
            s = (self._orient(b, c, p), self._orient(c, a, p), self._orient(a, b, p))
            if min(s) >= 0:
                return t, s
        for t, ok in enumerate(self.alive):
            if ok and self.tv[3 * t + 2] == GHOST and self._conflict(t, p):
                return t, None
        raise RuntimeError("point location failed")

    def _insert(self, p):
        t0, _ = self.locate(p)
        tv, tn = self.tv, self.tn
        cavity = [t0]
        in_cavity = {t0}
        boundary = []  # (u, w, outside neighbour, its slot pointing into the cavity)
        k = 0
        while k < len(cavity):
            t = cavity[k]
            k += 1
            for e in range(3):
                nb = tn[3 * t + e]
                if nb in in_cavity:
                    continue
                if self._conflict(nb, p):
                    in_cavity.add(nb)
                    cavity.append(nb)
                else:
                    slot = 3 * nb
                    while tn[slot] != t:
                        slot += 1
                    boundary.append((tv[3 * t + (e + 1) % 3], tv[3 * t + (e + 2) % 3], nb, slot))
        for t in cavity:
            self.alive[t] = False
        # reuse freed slots in a fixed order
        for t in sorted(cavity, reverse=True):
            self.free.append(t)

        by_u: dict[int, int] = {}
        by_w: dict[int, int] = {}
        made = []
        for u, w, nb, slot in boundary:
            t = self._new_tri(u, w, p)
            made.append((t, u, w, nb, slot))
            by_u[u] = t
            by_w[w] = t
        for t, u, w, nb, slot in made:
            # neighbours of (u, w, p): opposite u -> (w, p); opposite w -> (p, u)
            n0 = by_u[w]
            n1 = by_w[u]
            n2 = nb
            tn[slot] = t
            if u == GHOST:
                tv[3 * t:3 * t + 3] = [w, p, GHOST]
                tn[3 * t:3 * t + 3] = [n1, n2, n0]
            elif w == GHOST:
                tv[3 * t:3 * t + 3] = [p, u, GHOST]
                tn[3 * t:3 * t + 3] = [n2, n0, n1]
            else:
                tn[3 * t:3 * t + 3] = [n0, n1, n2]
                self.last = t

    # -- queries ---------------------------------------------------------

    def covering(self, p):
        """Real triangles whose closed region contains point p."""
        if self.last < 0:
            return []
        t, signs = self.locate(p)
        if signs is None:
            return []
        zeros = [e for e in range(3) if signs[e] == 0]
        if not zeros:
            return [t]
        if len(zeros) == 1:
            nb = self.tn[3 * t + zeros[0]]
            if self.tv[3 * nb + 2] == GHOST:
                return [t]
            return [t, nb]
        # p coincides with a vertex: every real triangle around it
        e = next(e for e in range(3) if signs[e] != 0)
        v = self.tv[3 * t + e]
        out = []
        cur = t
        while True:
            if self.tv[3 * cur + 2] != GHOST:
                out.append(cur)
            k = self.tv[3 * cur:3 * cur + 3].index(v)
            cur = self.tn[3 * cur + (k + 1) % 3]
            if cur == t:
                break
        return out

    def triangles(self):
        """Real triangles as CCW index triples, smallest index first, sorted."""
        out = []
        for t, ok in enumerate(self.alive):
            if not ok:
                continue
            a, b, c = self.tv[3 * t:3 * t + 3]
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


def delaunay(xs, ys, tol=1e-9):
    """Delaunay triangles of the given points.

    Points are inserted in lexicographic order; a point within ``tol`` of
    an already inserted one is merged into it.  Returns ``(triangles,
    representative)`` where ``representative[i]`` is the inserted point
    that i was merged into (itself when kept).
    """
    n = len(xs)
    order = sorted(range(n), key=lambda i: (float(xs[i]), float(ys[i]), i))
    tri = Triangulation(xs, ys, tol)
    rep = list(range(n))
    for i in order:
        j = tri.near_duplicate(i)
        if j >= 0:
            rep[i] = j
            continue
        tri.add(i)
    return tri.triangles(), rep


def zbuffer_visibility(u, v, depth, eps, tol=1e-9):
    """Front-to-back visibility against the triangulated visible surface.

    Points are visited by increasing depth (ties by index).  Each one is
    hidden when a triangle of the Delaunay triangulation of the visible
    points inserted so far covers its pixel at a depth smaller than its
    own minus ``eps``; otherwise it is visible and joins the surface.
    """
    n = len(u)
    u = [float(t) for t in u]
    v = [float(t) for t in v]
    depth = [float(t) for t in depth]
    order = sorted(range(n), key=lambda i: (depth[i], i))
    tri = Triangulation(u, v, tol)
    mask = np.zeros(n, dtype=bool)
    for i in order:
        hidden = False
        for t in tri.covering(i):
            a, b, c = sorted(tri.tv[3 * t:3 * t + 3])
            if plane_depth(u, v, depth, a, b, c, u[i], v[i]) < depth[i] - eps:
                hidden = True
                break
        if hidden:
            continue
        mask[i] = True
        if tri.near_duplicate(i) < 0:
            tri.add(i)
    return mask


# --------------------------------------------------------------------------
# nearest neighbours
# --------------------------------------------------------------------------


def nearest(a, b, block=256):
    """For each row of ``a`` the Euclidean distance to and index of its
    nearest row in ``b`` (lowest index on ties)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    n = len(a)
    dist = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    for s in range(0, n, block):
        blk = a[s:s + block]
        dx = blk[:, None, 0] - b[None, :, 0]
        dy = blk[:, None, 1] - b[None, :, 1]
        dz = blk[:, None, 2] - b[None, :, 2]
        d2 = dx * dx + dy * dy + dz * dz
        j = d2.argmin(axis=1)
        idx[s:s + block] = j
        dist[s:s + block] = np.sqrt(d2[np.arange(len(blk)), j])
    return dist, idx


# --------------------------------------------------------------------------
# auction
# --------------------------------------------------------------------------


def auction(cost, eps_final, scaling=5.0):
    """Gauss-Seidel forward auction with epsilon scaling (minimises cost).

    Returns ``person -> object`` as an int array.  The final epsilon is at
    most ``eps_final / n``, so the total cost is within ``eps_final`` of
    optimal.
    """
    c = np.ascontiguousarray(cost, dtype=np.float64)
    n = c.shape[0]
    assign = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return assign
    if n == 1:
        assign[0] = 0
        return assign
    rows = [list(map(float, r)) for r in c]
    price = [0.0] * n
    eps = float(c.max()) / 2.0
    target = eps_final / n
    if eps <= target:
        eps = target
    while True:
        owner = [-1] * n
        person = [-1] * n
        queue = deque(range(n))
        while queue:
            i = queue.popleft()
            row = rows[i]
            best = -math.inf
            second = -math.inf
            jbest = -1
            for j in range(n):
                val = -row[j] - price[j]
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
                queue.append(prev)
            owner[jbest] = i
            person[i] = jbest
        if eps <= target:
            break
        eps = eps / scaling
        if eps < target:
            eps = target
    assign[:] = person
    return assign
