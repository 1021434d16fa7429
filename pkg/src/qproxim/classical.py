"""Finite pointed metric spaces, pointed Gromov-Hausdorff distance, bridges.

The classical machinery is the test bed for everything else: distances are
exact (LP / enumeration), so tunnels built here come with oracle values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

TRIANGLE_TOL = 1e-9
GH_EXACT_CAP = 5


@dataclass(frozen=True)
class FinitePointedMetricSpace:
    """Points 0..n-1 with a distance matrix and a distinguished basepoint."""

    dist: np.ndarray
    base: int = 0

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        object.__setattr__(self, "dist", d)
        n = d.shape[0]
        if d.shape != (n, n):
            raise ValueError("distance matrix must be square")
        if not np.allclose(d, d.T, atol=TRIANGLE_TOL):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.abs(np.diag(d)) > TRIANGLE_TOL):
            raise ValueError("diagonal must vanish")
        if np.any(d < -TRIANGLE_TOL):
            raise ValueError("distances must be nonnegative")
        for k in range(n):
            if np.any(d > d[:, [k]] + d[[k], :] + TRIANGLE_TOL):
                raise ValueError("triangle inequality violated")
        if not (0 <= self.base < n):
            raise ValueError("basepoint out of range")

    @property
    def n(self):
        return self.dist.shape[0]

    def diam(self):
        return float(np.max(self.dist)) if self.n else 0.0

    def ball(self, center, radius):
        return [i for i in range(self.n) if self.dist[center, i] <= radius]

    def to_json(self):
        return {"n": self.n, "dist": [float(x) for x in self.dist.reshape(-1)],
                "base": int(self.base)}

    @staticmethod
    def from_json(obj):
        n = int(obj["n"])
        d = np.array(obj["dist"], dtype=float).reshape(n, n)
        return FinitePointedMetricSpace(d, int(obj["base"]))


def random_space(n, rng, scale=3.0):
    """Euclidean point cloud in R^3 -> guaranteed exact triangle inequality."""
    pts = rng.uniform(0.0, scale, size=(n, 3))
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return FinitePointedMetricSpace(d, base=int(rng.integers(0, n)))


# ---------------------------------------------------------------------------
# pointed Gromov-Hausdorff distance
# ---------------------------------------------------------------------------


def _correspondence_feasible(dx, dy, c, base_pair):
    """Is there a correspondence containing base_pair with distortion <= c?

    DFS over rows: each x gets a nonempty subset of Y that is a clique of
    the graph {d_Y <= c} and pairwise compatible with earlier rows; all of
    Y must be covered at the end.
    """
    n, m = dx.shape[0], dy.shape[0]
    tol = 1e-12
    full = (1 << m) - 1

    cliques = []
    for mask in range(1, 1 << m):
        ys = [y for y in range(m) if mask >> y & 1]
        if all(dy[a, b] <= c + tol for a, b in combinations(ys, 2)):
            cliques.append(mask)

    # compat[x][xp][y] = mask of y' usable at row xp next to (x, y)
    compat = np.zeros((n, n, m), dtype=np.int64)
    for x in range(n):
        for xp in range(n):
            for y in range(m):
                mask = 0
                for yp in range(m):
                    if abs(dx[x, xp] - dy[y, yp]) <= c + tol:
                        mask |= 1 << yp
                compat[x, xp, y] = mask

    x0, y0 = base_pair
    order = [x0] + [x for x in range(n) if x != x0]

    def rec(idx, assigned, covered):
        if idx == n:
            return covered == full
        x = order[idx]
        allowed = full
        for xp, mask_p in assigned:
            acc = full
            for y in range(m):
                if mask_p >> y & 1:
                    acc &= int(compat[xp, x, y])
            allowed &= acc
            if allowed == 0:
                return False
        required = (1 << y0) if x == x0 else 0
        for mask in cliques:
            if mask & ~allowed:
                continue
            if required and not mask & required:
                continue
            if rec(idx + 1, assigned + [(x, mask)], covered | mask):
                return True
        return False

    return rec(0, [], 0)


def gh_pointed(X, Y, sample_cap=2000, rng=None):
    """Pointed Gromov-Hausdorff distance, exact for point counts <= 5.

    Exact value: half of the least distortion over correspondences that
    contain the basepoint pair, found by scanning candidate distortions.
    Larger spaces get a sampled upper bound tagged 'sampled-upper'.
    """
    dx, dy = X.dist, Y.dist
    if X.n <= GH_EXACT_CAP and Y.n <= GH_EXACT_CAP:
        cands = sorted({0.0} | {abs(float(a) - float(b))
                                for a in dx.reshape(-1) for b in dy.reshape(-1)})
        lo, hi = 0, len(cands) - 1
        if not _correspondence_feasible(dx, dy, cands[-1], (X.base, Y.base)):
            raise RuntimeError("no feasible correspondence at max distortion")
        while lo < hi:
            mid = (lo + hi) // 2
            if _correspondence_feasible(dx, dy, cands[mid], (X.base, Y.base)):
                hi = mid
            else:
                lo = mid + 1
        return cands[lo] / 2.0, "exact"
    rng = rng or np.random.default_rng(0)
    best = np.inf
    for _ in range(sample_cap):
        f = rng.integers(0, Y.n, size=X.n)
        g = rng.integers(0, X.n, size=Y.n)
        f[X.base], g[Y.base] = Y.base, X.base
        dis = max(
            float(np.max(np.abs(dx - dy[np.ix_(f, f)]))),
            float(np.max(np.abs(dy - dx[np.ix_(g, g)]))),
            float(np.max(np.abs(dx[:, g] - dy[f, :].T))),
        )
        best = min(best, dis)
    return best / 2.0, "sampled-upper"


def optimal_correspondence(X, Y):
    """A correspondence realizing the exact pointed GH distance (n,m <= 5)."""
    value, tag = gh_pointed(X, Y)
    if tag != "exact":
        raise ValueError("exact correspondences only for small spaces")
    c = 2 * value
    dx, dy, tol = X.dist, Y.dist, 1e-12
    n, m = X.n, Y.n
    full = (1 << m) - 1
    cliques = [mask for mask in range(1, 1 << m)
               if all(dy[a, b] <= c + tol
                      for a, b in combinations([y for y in range(m) if mask >> y & 1], 2))]
    order = [X.base] + [x for x in range(n) if x != X.base]

    def rec(idx, rows, covered):
        if idx == n:
            return rows if covered == full else None
        x = order[idx]
        for mask in cliques:
            if x == X.base and not mask >> Y.base & 1:
                continue
            ok = True
            for xp, mp in rows:
                for y in range(m):
                    if not mask >> y & 1:
                        continue
                    for yp in range(m):
                        if mp >> yp & 1 and abs(dx[x, xp] - dy[y, yp]) > c + tol:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                res = rec(idx + 1, rows + [(x, mask)], covered | mask)
                if res is not None:
                    return res
        return None

    rows = rec(0, [], 0)
    pairs = [(x, y) for x, mask in rows for y in range(m) if mask >> y & 1]
    return pairs, value


# ---------------------------------------------------------------------------
# bridges
# ---------------------------------------------------------------------------


@dataclass
class BridgeMetric:
    """A metric on the disjoint union of X and Y restricting to both factors.

    ``certificates`` maps every point index in the joint space to a point on
    the opposite side within ``eps``; built from a correspondence with gap
    parameter g >= distortion/2, which makes the glued matrix a metric.
    """

    joint: np.ndarray
    nx: int
    eps: float
    base_x: int
    base_y: int
    certificates: dict = field(default_factory=dict)

    def validate(self, X, Y):
        d = self.joint
        n, m = X.n, Y.n
        if d.shape != (n + m, n + m):
            raise ValueError("joint matrix has wrong shape")
        if not np.allclose(d[:n, :n], X.dist, atol=1e-12):
            raise ValueError("joint does not restrict to X")
        if not np.allclose(d[n:, n:], Y.dist, atol=1e-12):
            raise ValueError("joint does not restrict to Y")
        if not np.allclose(d, d.T, atol=1e-12):
            raise ValueError("joint not symmetric")
        for k in range(n + m):
            if np.any(d > d[:, [k]] + d[[k], :] + TRIANGLE_TOL):
                raise ValueError("joint violates triangle inequality")
        for z, w in self.certificates.items():
            if d[z, w] > self.eps + 1e-12:
                raise ValueError(f"certificate {z}->{w} exceeds eps")
        return True


def build_bridge(X, Y, pairs=None, eps=None):
    """Glue X and Y along a correspondence into a single metric space.

    Cross distances are min over related pairs of d_X + gap + d_Y with
    gap = max(distortion/2, floor); any eps >= gap certifies the bridge.
    """
    if pairs is None:
        pairs, value = optimal_correspondence(X, Y)
        dis_half = value
    else:
        dis_half = 0.0
        for (x, y), (xp, yp) in combinations(pairs, 2):
            dis_half = max(dis_half, abs(X.dist[x, xp] - Y.dist[y, yp]) / 2)
    gap = max(dis_half, 1e-6)
    if eps is None:
        eps = gap * (1 + 1e-9) + 1e-9
    if eps < gap - 1e-15:
        raise ValueError("eps below the correspondence gap")
    n, m = X.n, Y.n
    joint = np.zeros((n + m, n + m))
    joint[:n, :n] = X.dist
    joint[n:, n:] = Y.dist
    cross = np.full((n, m), np.inf)
    for x, y in pairs:
        cand = X.dist[:, [x]] + gap + Y.dist[[y], :]
        cross = np.minimum(cross, cand)
    joint[:n, n:] = cross
    joint[n:, :n] = cross.T
    certs = {}
    for x in range(n):
        certs[x] = n + int(np.argmin(cross[x]))
    for y in range(m):
        certs[n + y] = int(np.argmin(cross[:, y]))
    bridge = BridgeMetric(joint=joint, nx=n, eps=float(eps),
                          base_x=X.base, base_y=n + Y.base, certificates=certs)
    bridge.validate(X, Y)
    return bridge


# ---------------------------------------------------------------------------
# Lipschitz helpers
# ---------------------------------------------------------------------------


def classical_lip(values, dist):
    """max |f(x)-f(y)| / d(x,y); infinite if f separates a zero-distance pair."""
    values = np.asarray(values)
    n = len(values)
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            diff = abs(values[i] - values[j])
            if dist[i, j] <= 0:
                if diff > 1e-14:
                    return np.inf
                continue
            best = max(best, diff / dist[i, j])
    return float(best)


def mcshane_extend(f_values, subset, L, dist):
    """Largest-slope-free extension g(z) = min_{s in S} f(s) + L d(z, s).

    Extends an L-Lipschitz function from ``subset`` to every point with the
    same Lipschitz constant; raises if f is not L-Lipschitz on the subset.
    """
    subset = list(subset)
    f_values = np.asarray(f_values, dtype=float)
    for a, b in combinations(range(len(subset)), 2):
        i, j = subset[a], subset[b]
        if abs(f_values[a] - f_values[b]) > L * dist[i, j] + 1e-12:
            raise ValueError("f is not L-Lipschitz on the subset")
    n = dist.shape[0]
    out = np.empty(n)
    for z in range(n):
        out[z] = min(f_values[a] + L * dist[z, subset[a]] for a in range(len(subset)))
    return out


def proper_cutoff(X, k):
    """Tent cutoff h_k(t) = max(1 - d(base,t)/(k+1), 0); Lip <= 1/(k+1)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return np.maximum(1.0 - X.dist[X.base] / (k + 1), 0.0)


def lipd_seminorm(X):
    """The Lipschitz seminorm node of a finite space (difference quotients)."""
    from .lipschitz import ClassicalLip
    return ClassicalLip(X)
