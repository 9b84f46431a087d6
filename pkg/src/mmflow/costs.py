"""Jump costs of the two limit regimes, each with a brute-force oracle.

The viscous cost c_t(u1, u2) is the infimum over paths of the degenerate
length int |grad F(t, path)| |path'| ds; it prices jumps of the vanishing
epsilon/tau limit.  The transition cost at rate lam prices jumps of the
finite-rate limit: the minimal value of

    sum_{i<N} (lam/2) |w^i - w^{i+1}|^2 + sum_{i<=N} R_lam(t, w^i)

over discrete chains w^0 = u, ..., w^N = v, where R_lam is the Moreau-Yosida
gap.  Both endpoint gap terms are counted.
"""

from __future__ import annotations

import heapq
import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .critical import critical_points, moreau_yosida, residual_stability, stable_points
from .errors import InvalidParams, ResolutionWarning
from .quadrature import _GL_W, _GL_X
from .solver import default_scan_resolution


@dataclass
class PathWitness:
    """A polyline realizing (an upper bound for) the viscous cost."""

    t: float
    u1: np.ndarray
    u2: np.ndarray
    polyline: np.ndarray  # (k, n), starts at u1, ends at u2
    cost: float
    resolution: int | None  # grid resolution, None for the exact 1-d integral

    def as_dict(self, oracle_value=None):
        d = {
            "t": self.t,
            "kind": "c_t",
            "value": self.cost,
            "witness": [[float(v) for v in p] for p in self.polyline],
            "resolution": self.resolution,
        }
        if oracle_value is not None:
            d["oracle_value"] = float(oracle_value)
        return d


@dataclass
class ChainWitness:
    """A discrete chain realizing (an upper bound for) the transition cost."""

    t: float
    lam: float
    chain: np.ndarray  # (N+1, n), w^0 = u, w^N = v
    cost: float
    resolution: int

    @property
    def hops(self):
        return len(self.chain) - 1

    def as_dict(self, oracle_value=None):
        d = {
            "t": self.t,
            "kind": "c_lambda",
            "lambda": self.lam,
            "value": self.cost,
            "witness": [[float(v) for v in p] for p in self.chain],
            "resolution": self.resolution,
        }
        if oracle_value is not None:
            d["oracle_value"] = float(oracle_value)
        return d


# ---------------------------------------------------------------- viscous c_t


def _grad_norm_at(model, t, pts):
    return np.linalg.norm(model.gradient(t, pts), axis=1)


def _cost_1d_exact(model, t, a, b, atlas=None, quad_tol=1e-11):
    lo, hi = (a, b) if a <= b else (b, a)
    if hi - lo < 1e-15:
        return 0.0, []
    if atlas is None:
        atlas = critical_points(model, t)
    inner = sorted(
        float(p[0]) for p in atlas.points if lo + 1e-12 < p[0] < hi - 1e-12
    )

    def f(x):
        return abs(float(model.gradient(t, np.array([[x]]))[0, 0]))

    val, _ = quad(f, lo, hi, points=inner or None, limit=200,
                  epsabs=quad_tol, epsrel=1e-10)
    return float(val), inner


def _polyline_cost(model, t, pts):
    """5-node Gauss quadrature of int |grad F| ds along each segment."""
    pts = np.asarray(pts, float)
    seg = np.diff(pts, axis=0)
    lens = np.linalg.norm(seg, axis=1)
    # nodes on [0,1] per segment, all segments in one gradient call
    s = 0.5 * (_GL_X + 1.0)
    X = pts[:-1, None, :] + s[None, :, None] * seg[:, None, :]
    g = _grad_norm_at(model, t, X.reshape(-1, pts.shape[1])).reshape(len(seg), -1)
    return float(np.sum(g @ (0.5 * _GL_W) * lens))


def _smooth_polyline(model, t, pts, rounds=3):
    """Local vertex moves toward neighbor midpoints when they lower the cost."""
    pts = np.array(pts, float)
    for _ in range(rounds):
        moved = False
        for i in range(1, len(pts) - 1):
            base = _polyline_cost(model, t, pts[i - 1:i + 2])
            best = pts[i].copy()
            for blend in (0.5, 0.25, 0.75):
                cand = pts[i] + blend * (0.5 * (pts[i - 1] + pts[i + 1]) - pts[i])
                trial = np.vstack([pts[i - 1], cand, pts[i + 1]])
                c = _polyline_cost(model, t, trial)
                if c < base - 1e-14:
                    base, best, moved = c, cand, True
            pts[i] = best
        if not moved:
            break
    return pts


def _lattice_graph(model, t, box, resolution):
    n = box.dim
    shape = (resolution,) * n
    axes = [np.linspace(box.lo[i], box.hi[i], resolution) for i in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(n)])

    offsets = [np.eye(n, dtype=int)[i] for i in range(n)]
    offsets += [np.array(c) for c in itertools.product((-1, 1), repeat=n)
                if np.any(np.array(c) > 0)]
    # keep one representative per undirected direction
    uniq = []
    for d in offsets:
        if not any(np.array_equal(d, e) or np.array_equal(d, -e) for e in uniq):
            uniq.append(d)

    coords = np.stack([m.ravel() for m in np.meshgrid(
        *[np.arange(resolution)] * n, indexing="ij")], axis=1)
    srcs, dsts, wts = [], [], []
    for d in uniq:
        ok = np.all((coords + d >= 0) & (coords + d < resolution), axis=1)
        src = np.nonzero(ok)[0]
        dst = src + int(d @ strides)
        mids = 0.5 * (nodes[src] + nodes[dst])
        length = float(np.linalg.norm(nodes[dst[0]] - nodes[src[0]]))
        w = _grad_norm_at(model, t, mids) * length
        srcs.append(src)
        dsts.append(dst)
        wts.append(w)
    return nodes, np.concatenate(srcs), np.concatenate(dsts), np.concatenate(wts)


def _endpoint_links(model, t, nodes, x):
    d = np.linalg.norm(nodes - x, axis=1)
    near = np.argsort(d)[: 2 ** nodes.shape[1] + 2 * nodes.shape[1]]
    mids = 0.5 * (nodes[near] + x)
    w = _grad_norm_at(model, t, mids) * d[near]
    return near, w


def _dijkstra(n_nodes, adj_src, adj_dst, adj_w, start, goal):
    order = np.argsort(adj_src, kind="stable")
    src_sorted = adj_src[order]
    starts = np.searchsorted(src_sorted, np.arange(n_nodes + 1))
    dst_sorted = adj_dst[order]
    w_sorted = adj_w[order]

    dist = np.full(n_nodes, np.inf)
    prev = np.full(n_nodes, -1, dtype=int)
    dist[start] = 0.0
    heap = [(0.0, start)]
    done = np.zeros(n_nodes, dtype=bool)
    while heap:
        du, u = heapq.heappop(heap)
        if done[u]:
            continue
        if u == goal:
            break
        done[u] = True
        for e in range(starts[u], starts[u + 1]):
            v = dst_sorted[e]
            nd = du + w_sorted[e]
            if nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    path = []
    v = goal
    while v != -1:
        path.append(v)
        v = prev[v]
    return float(dist[goal]), path[::-1]


def _cost_graph(model, t, u1, u2, resolution, smooth_rounds):
    box = model.box
    nodes, src, dst, w = _lattice_graph(model, t, box, resolution)
    k = len(nodes)
    n1, w1 = _endpoint_links(model, t, nodes, u1)
    n2, w2 = _endpoint_links(model, t, nodes, u2)
    i1, i2 = k, k + 1
    src = np.concatenate([src, np.full(len(n1), i1), np.full(len(n2), i2)])
    dst = np.concatenate([dst, n1, n2])
    w = np.concatenate([w, w1, w2])
    # mirror for the undirected graph
    src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    w = np.concatenate([w, w])
    all_nodes = np.vstack([nodes, u1[None, :], u2[None, :]])
    value, path = _dijkstra(k + 2, src, dst, w, i1, i2)
    polyline = all_nodes[path]
    if smooth_rounds:
        polyline = _smooth_polyline(model, t, polyline, rounds=smooth_rounds)
        value = _polyline_cost(model, t, polyline)
    return value, polyline


def viscous_cost(model, t, u1, u2, *, resolution=None, smooth_rounds=3,
                 atlas=None, check_refinement=False):
    """Viscous jump cost c_t(u1, u2) with a realizing polyline.

    In one dimension the monotone segment is optimal (detours only add
    nonnegative weighted length), so the cost is the exact integral of
    |dF/dx| between the endpoints, split at interior critical points.
    Higher dimensions run Dijkstra on a lattice graph (axis plus diagonal
    stencil) and then smooth the winning polyline locally.
    """
    u1 = np.atleast_1d(np.asarray(u1, float))
    u2 = np.atleast_1d(np.asarray(u2, float))
    n = model.dim
    if not (model.box.contains(u1) and model.box.contains(u2)):
        raise InvalidParams("endpoints must lie in the working box")

    if n == 1:
        val, inner = _cost_1d_exact(model, float(t), u1[0], u2[0], atlas=atlas)
        mids = inner if u1[0] <= u2[0] else inner[::-1]
        poly = np.array([[u1[0]]] + [[x] for x in mids] + [[u2[0]]])
        return PathWitness(t=float(t), u1=u1, u2=u2, polyline=poly,
                           cost=val, resolution=None)

    resolution = resolution or default_scan_resolution(n)
    if np.linalg.norm(u1 - u2) < 1e-14:
        poly = np.vstack([u1, u2])
        return PathWitness(t=float(t), u1=u1, u2=u2, polyline=poly, cost=0.0,
                           resolution=resolution)
    value, polyline = _cost_graph(model, float(t), u1, u2, resolution, smooth_rounds)
    if check_refinement:
        fine, _ = _cost_graph(model, float(t), u1, u2, 2 * resolution - 1,
                              smooth_rounds)
        if abs(fine - value) > 0.01 * max(abs(value), 1e-12):
            warnings.warn(
                f"doubling the cost grid moved c_t from {value:.6g} to {fine:.6g}",
                ResolutionWarning,
            )
    return PathWitness(t=float(t), u1=u1, u2=u2, polyline=polyline,
                       cost=float(value), resolution=resolution)


def viscous_cost_oracle(model, t, u1, u2, fine_resolution=None):
    """Same quantity on a finer grid with no smoothing; test plumbing."""
    u1 = np.atleast_1d(np.asarray(u1, float))
    u2 = np.atleast_1d(np.asarray(u2, float))
    n = model.dim
    if n == 1:
        res = fine_resolution or 4 * 481
        lo, hi = sorted((u1[0], u2[0]))
        if hi - lo < 1e-15:
            return 0.0
        xs = np.linspace(lo, hi, res)
        mids = 0.5 * (xs[:-1] + xs[1:])
        g = np.abs(model.gradient(float(t), mids[:, None])[:, 0])
        return float(np.sum(g) * (hi - lo) / (res - 1))
    res = fine_resolution or (4 * default_scan_resolution(n) - 3)
    value, _ = _cost_graph(model, float(t), u1, u2, res, smooth_rounds=0)
    return float(value)


# ------------------------------------------------------------ transition c^λ


def chain_energy(model, t, W, lam, *, grid=None):
    """Objective of a given chain: pair penalties plus all node gaps."""
    W = np.atleast_2d(np.asarray(W, float))
    if len(W) == 0:
        raise InvalidParams("chain must be nonempty")
    quad_term = 0.5 * lam * float(np.sum(np.diff(W, axis=0) ** 2))
    gaps = sum(residual_stability(model, t, w, lam, grid=grid) for w in W)
    return quad_term + gaps


def _prox_orbit(model, t, u, lam, grid, max_len=40, tol=1e-9):
    pts = []
    z = np.asarray(u, float)
    for _ in range(max_len):
        z_next = moreau_yosida(model, t, z, lam, grid=grid).argmin
        if np.linalg.norm(z_next - z) <= tol:
            pts.append(z_next)
            break
        pts.append(z_next)
        z = z_next
    return pts


def _candidate_set(model, t, u, v, lam, atlas, grid_points, prox_grid):
    cands = [np.asarray(u, float), np.asarray(v, float)]
    cands.extend(atlas.points)
    zset = stable_points(model, t, lam, atlas=atlas, verify=False)
    cands.extend(zset.points)
    cands.extend(model.box.grid(grid_points))
    # orbits from both endpoints keep the candidate set symmetric in (u, v)
    cands.extend(_prox_orbit(model, t, u, lam, prox_grid))
    cands.extend(_prox_orbit(model, t, v, lam, prox_grid))
    uniq = []
    for c in cands:
        c = np.atleast_1d(c)
        if not any(np.linalg.norm(c - p) < 1e-9 for p in uniq):
            uniq.append(c)
    return uniq


def _min_plus_chain(points, gaps, lam, i_u, i_v, n_max):
    """Hop-bounded shortest chain in the complete graph.

    Node weight is the gap, edge weight the scaled squared distance; the DP
    is exact for chains of at most n_max hops.
    """
    P = np.asarray(points)
    r = np.asarray(gaps)
    E = 0.5 * lam * np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=-1)

    k = len(P)
    dist = np.full(k, np.inf)
    dist[i_u] = r[i_u]
    snapshots = [dist.copy()]
    parents = []
    for _ in range(n_max):
        via = dist[:, None] + E
        arg = np.argmin(via, axis=0)
        new = via[arg, np.arange(k)] + r
        parents.append(arg)
        dist = np.minimum(dist, new)
        snapshots.append(dist.copy())

    final = float(dist[i_v])
    # first hop count achieving the optimum (envelope values copy exactly)
    best_h = next(h for h in range(n_max + 1) if snapshots[h][i_v] == final)
    chain = [i_v]
    j = i_v
    for h in range(best_h, 0, -1):
        if snapshots[h][j] != snapshots[h - 1][j]:
            j = int(parents[h - 1][j])
        chain.append(j)
    chain = chain[::-1]
    dedup = [chain[0]]
    for idx in chain[1:]:
        if idx != dedup[-1]:
            dedup.append(idx)
    return final, dedup


def transition_cost(model, t, u, v, lam, *, atlas=None, grid_points=None,
                    n_max=None, resolution=None, check_refinement=None):
    """Minimal chain energy linking u to v at frozen time t and rate lam.

    Candidate nodes: the endpoints, the stable set, the critical atlas, a
    uniform grid, and the proximal orbit started from u.  A hop-bounded
    min-plus recursion over the complete candidate graph finds the best
    chain; the reported cost is the chain energy of the returned witness.
    """
    if lam <= 0:
        raise InvalidParams("lambda must be positive")
    u = np.atleast_1d(np.asarray(u, float))
    v = np.atleast_1d(np.asarray(v, float))
    if not (model.box.contains(u) and model.box.contains(v)):
        raise InvalidParams("endpoints must lie in the working box")
    n = model.dim
    t = float(t)
    if atlas is None:
        atlas = critical_points(model, t)
    if grid_points is None:
        grid_points = 61 if n == 1 else (7 if n == 2 else 5)
    if check_refinement is None:
        check_refinement = n == 1
    prox_grid = model.box.grid(resolution or default_scan_resolution(n)) \
        if n <= 3 else None
    n_max = n_max or (2 * len(atlas) + 4)

    def solve(gp):
        cands = _candidate_set(model, t, u, v, lam, atlas, gp, prox_grid)
        gaps = [residual_stability(model, t, c, lam, grid=prox_grid) for c in cands]
        i_u = next(i for i, c in enumerate(cands) if np.linalg.norm(c - u) < 1e-9)
        i_v = next(i for i, c in enumerate(cands) if np.linalg.norm(c - v) < 1e-9)
        val, chain_idx = _min_plus_chain(cands, gaps, lam, i_u, i_v, n_max)
        return val, np.array([cands[i] for i in chain_idx])

    value, chain = solve(grid_points)
    if check_refinement:
        fine_val, fine_chain = solve(2 * grid_points - 1)
        if fine_val < value - 0.01 * max(abs(value), 1e-12):
            warnings.warn(
                f"doubling the candidate grid moved the transition cost from "
                f"{value:.6g} to {fine_val:.6g}",
                ResolutionWarning,
            )
            value, chain = fine_val, fine_chain

    chain[0] = u
    chain[-1] = v
    exact = chain_energy(model, t, chain, lam, grid=prox_grid)
    return ChainWitness(t=t, lam=float(lam), chain=chain, cost=float(exact),
                        resolution=grid_points)


def transition_cost_oracle(model, t, u, v, lam, *, grid_points=41, max_hops=5):
    """Exhaustive hop-bounded DP on a coarse 1-d grid; test plumbing.

    Gaps are computed by plain grid minimization (no Newton), so the route
    is independent of the production solver.
    """
    if model.dim != 1:
        raise InvalidParams("oracle is one-dimensional only")
    t = float(t)
    u = float(np.atleast_1d(u)[0])
    v = float(np.atleast_1d(v)[0])
    box = model.box
    xs = np.unique(np.concatenate([
        np.linspace(box.lo[0], box.hi[0], grid_points), [u, v]
    ]))
    fine = np.linspace(box.lo[0], box.hi[0], 2001)
    Ff = model.energy(t, fine[:, None])
    Fx = model.energy(t, xs[:, None])
    # gap at x: F(x) - min over the fine grid of F + (lam/2)(. - x)^2
    pen = 0.5 * lam * (fine[None, :] - xs[:, None]) ** 2
    my = np.min(Ff[None, :] + pen, axis=1)
    r = np.maximum(Fx - my, 0.0)

    E = 0.5 * lam * (xs[:, None] - xs[None, :]) ** 2
    i_u = int(np.argmin(np.abs(xs - u)))
    i_v = int(np.argmin(np.abs(xs - v)))
    dist = np.full(len(xs), np.inf)
    dist[i_u] = r[i_u]
    best = dist[i_v] if i_u == i_v else np.inf
    for _ in range(max_hops):
        dist = np.min(dist[:, None] + E, axis=0) + r
        best = min(best, dist[i_v])
    return float(best)
