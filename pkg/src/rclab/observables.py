"""Estimators for the measurable quantities of the model: crossing, circuit
and arm events, the mixing rate Delta, the characteristic length L(p),
cluster statistics, ghost magnetization and covariance sums.

Infinite-volume quantities are approximated on a free-boundary box at least
four times the largest observable scale; every randomized result carries its
seed, algorithm and box factor in the Estimate metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .exact import EdgeConfig, ModelParams, UnionFind
from .lattice import BoundaryCondition, Domain, Quad, build_box, box_quad
from .sampler import chayes_machta_step, heat_bath_sweep, init_chain
from .stats import Estimate, from_batches

CHI_MIN_RADIUS = 1


# ---------------------------------------------------------------------------
# per-configuration events


def crossing_occurs(cfg: EdgeConfig, quad: Quad) -> bool:
    """Arc (ab) joined to arc (cd) inside the quad; wirings excluded and the
    path confined to the quad's own edges."""
    parent = cfg.domain
    q = quad.domain
    uf = UnionFind(q.n_vertices)
    for i, (u, v) in enumerate(q.edges):
        e = parent.edge_index.get((u, v)) if parent is not q else i
        if e is None:
            raise ValueError("quad is not contained in the configuration domain")
        if cfg.is_open(e):
            uf.union(q.vertex_index[u], q.vertex_index[v])
    ra = {uf.find(q.vertex_index[v]) for v in quad.arc("ab")}
    rb = {uf.find(q.vertex_index[v]) for v in quad.arc("cd")}
    return bool(ra & rb)


def dual_crossing_occurs(cfg: EdgeConfig, quad: Quad) -> bool:
    """Dual crossing of the rotated dual quad: a dual-open path from outside
    arc (bc) to outside arc (da), entering through the arcs and moving
    through closed edges of the quad."""
    parent = cfg.domain
    q = quad.domain
    dual = q.dual()
    faces = {f: i for i, f in enumerate(dual.faces)}
    start_id = len(faces)
    end_id = len(faces) + 1
    bc_edges = {tuple(sorted(p)) for p in zip(quad.arc("bc"), quad.arc("bc")[1:])}
    da_edges = {tuple(sorted(p)) for p in zip(quad.arc("da"), quad.arc("da")[1:])}
    ab_edges = {tuple(sorted(p)) for p in zip(quad.arc("ab"), quad.arc("ab")[1:])}
    cd_edges = {tuple(sorted(p)) for p in zip(quad.arc("cd"), quad.arc("cd")[1:])}
    uf = UnionFind(len(faces) + 2)
    for de in dual.dual_edges:
        e = parent.edge_index[de.crossing]
        if cfg.is_open(e):
            continue
        key = de.crossing
        a = faces.get(de.a)
        b = faces.get(de.b)
        if a is None or b is None:  # one side is the outer face
            inner = b if a is None else a
            if inner is None:
                continue
            if key in bc_edges:
                uf.union(inner, start_id)
            elif key in da_edges:
                uf.union(inner, end_id)
            elif key in ab_edges or key in cd_edges:
                continue  # the dual quad's side arcs are not entry points
        else:
            uf.union(a, b)
    return uf.find(start_id) == uf.find(end_id)


def circuit_occurs(cfg: EdgeConfig, n: int) -> bool:
    """An open circuit in Ann(n, 2n) surrounding the inner box: equivalent to
    the absence of a dual-open crossing of the annulus."""
    parent = cfg.domain
    faces: dict = {}

    def fid(f):
        if f not in faces:
            faces[f] = len(faces)
        return faces[f]

    def radius_face(f):
        return max(abs(f[0] + 0.5), abs(f[1] + 0.5))

    links = []
    inner_faces = []
    outer_faces = []
    lo, hi = n - 0.5, 2 * n + 0.5
    for (u, v) in parent.edges:
        ru = max(abs(u[0]), abs(u[1]))
        rv = max(abs(v[0]), abs(v[1]))
        if not (n <= ru <= 2 * n and n <= rv <= 2 * n):
            continue
        e = parent.edge_index[(u, v)]
        if cfg.is_open(e):
            continue
        (x0, y0), (x1, y1) = sorted((u, v))
        if y0 == y1:
            fa, fb = (x0, y0), (x0, y0 - 1)
        else:
            fa, fb = (x0, y0), (x0 - 1, y0)
        for f in (fa, fb):
            r = radius_face(f)
            if abs(r - lo) < 0.25:
                inner_faces.append(fid(f))
            elif abs(r - hi) < 0.25:
                outer_faces.append(fid(f))
        if lo <= radius_face(fa) <= hi and lo <= radius_face(fb) <= hi:
            links.append((fid(fa), fid(fb)))
    if not faces:
        return True
    uf = UnionFind(len(faces) + 2)
    s, t = len(faces), len(faces) + 1
    for a, b in links:
        uf.union(a, b)
    for a in inner_faces:
        uf.union(a, s)
    for b in outer_faces:
        uf.union(b, t)
    return uf.find(s) != uf.find(t)


@dataclass
class ArmSpec:
    sigma: tuple                  # over {0,1}: 1 primal arm, 0 dual arm
    r: int
    R: int
    half_plane: bool = False

    def __post_init__(self):
        self.sigma = tuple(self.sigma)
        if not self.sigma:
            raise ValueError("sigma must be non-empty")
        if any(s not in (0, 1) for s in self.sigma):
            raise ValueError("sigma entries must be 0 or 1")
        for i in range(len(self.sigma) - 1):
            if self.sigma[i] == self.sigma[i + 1]:
                raise ValueError(
                    "only alternating arm types are supported by the "
                    "interface-count decision rule"
                )
        if not (1 <= self.r < self.R):
            raise ValueError("need 1 <= r < R")


def _crossing_clusters(cfg: EdgeConfig, r: int, R: int, half_plane: bool):
    """(primal crossing clusters, dual crossing clusters) of Ann(r, R),
    each as a list ordered by angular position of its innermost contact."""
    parent = cfg.domain

    def vrad(v):
        return max(abs(v[0]), abs(v[1]))

    def keep_v(v):
        return r <= vrad(v) <= R and (not half_plane or v[1] >= 0)

    verts = [v for v in parent.vertices if keep_v(v)]
    vidx = {v: i for i, v in enumerate(verts)}
    uf = UnionFind(len(verts))
    for (u, v) in parent.edges:
        if u in vidx and v in vidx and cfg.is_open(parent.edge_index[(u, v)]):
            uf.union(vidx[u], vidx[v])
    reach: dict[int, list] = {}
    for v, i in vidx.items():
        root = uf.find(i)
        lo_hit, hi_hit, pos = reach.get(root, (False, False, None))
        if vrad(v) == r:
            lo_hit = True
            a = math.atan2(v[1], v[0])
            pos = a if pos is None else max(pos, a) if half_plane else pos
        if vrad(v) == R:
            hi_hit = True
        reach[root] = (lo_hit, hi_hit, pos)
    primal = [(p if p is not None else 0.0) for (lo, hi, p) in reach.values() if lo and hi]

    # dual clusters on the face ring [r+1/2, R-1/2]
    faces: dict = {}

    def frad(f):
        return max(abs(f[0] + 0.5), abs(f[1] + 0.5))

    def keep_f(f):
        return r + 0.25 < frad(f) < R - 0.25 and (not half_plane or f[1] >= 0)

    def fid(f):
        if f not in faces:
            faces[f] = len(faces)
        return faces[f]

    links = []
    for (u, v) in parent.edges:
        if u not in vidx or v not in vidx:
            continue
        if cfg.is_open(parent.edge_index[(u, v)]):
            continue
        (x0, y0), (x1, y1) = sorted((u, v))
        if y0 == y1:
            fa, fb = (x0, y0), (x0, y0 - 1)
        else:
            fa, fb = (x0, y0), (x0 - 1, y0)
        if keep_f(fa) and keep_f(fb):
            links.append((fid(fa), fid(fb)))
        else:
            for f in (fa, fb):
                if keep_f(f):
                    fid(f)
    ufd = UnionFind(len(faces))
    for a, b in links:
        ufd.union(a, b)
    dreach: dict[int, list] = {}
    for f, i in faces.items():
        root = ufd.find(i)
        lo_hit, hi_hit, pos = dreach.get(root, (False, False, None))
        if abs(frad(f) - (r + 0.5)) < 0.25:
            lo_hit = True
            a = math.atan2(f[1] + 0.5, f[0] + 0.5)
            pos = a if pos is None else pos
        if abs(frad(f) - (R - 0.5)) < 0.25:
            hi_hit = True
        dreach[root] = (lo_hit, hi_hit, pos)
    dual = [(p if p is not None else 0.0) for (lo, hi, p) in dreach.values() if lo and hi]
    return primal, dual


def arm_occurs(cfg: EdgeConfig, spec: ArmSpec) -> bool:
    """Existence of the prescribed alternating arms across Ann(r, R), decided
    by counting primal and dual crossing clusters (the interface-scan rule:
    crossing clusters of the two types alternate around the annulus)."""
    primal, dual = _crossing_clusters(cfg, spec.r, spec.R, spec.half_plane)
    c1 = sum(spec.sigma)
    c0 = len(spec.sigma) - c1
    n1, n0 = len(primal), len(dual)
    if n1 < c1 or n0 < c0:
        return False
    if not spec.half_plane:
        return True
    # half-plane: crossing clusters alternate along the linear order; when
    # counts are exactly tight the end types must match sigma's pattern
    if n1 + n0 > len(spec.sigma):
        return True
    first = 1 if (n1 >= n0 and spec.sigma[0] == 1) or (n0 > n1 and spec.sigma[0] == 0) else 0
    return first == spec.sigma[0]


# ---------------------------------------------------------------------------
# sampling drivers


def _connected_sets(open_: np.ndarray, domain: Domain, edge_sub: np.ndarray,
                    n_vertices: int) -> np.ndarray:
    idx = np.nonzero(open_[edge_sub[:, 0]] if edge_sub.ndim == 1 else open_)[0]
    raise NotImplementedError


class BoxSampler:
    """A single chain on a free- or wired-boundary box with helpers for the
    connectivity observables; q = 1 reduces to iid sampling through the
    cluster dynamics."""

    def __init__(self, domain: Domain, bc: BoundaryCondition, params: ModelParams,
                 seed: int, algo: str = "cm", stream: int = 0):
        self.domain = domain
        self.state = init_chain(domain, bc, params, seed, algo=algo, stream=stream)
        self.algo = algo
        self.ep = domain.edge_array()
        self._lab = None

    def sweep(self):
        if self.algo == "cm":
            chayes_machta_step(self.state)
        else:
            heat_bath_sweep(self.state)
        self._lab = None

    @property
    def open(self) -> np.ndarray:
        return self.state.open

    def labels(self) -> np.ndarray:
        """Component labels of the open subgraph, wirings excluded."""
        if self._lab is None:
            n = self.domain.n_vertices
            idx = np.nonzero(self.state.open)[0]
            g = csr_matrix(
                (np.ones(len(idx), dtype=np.int8), (self.ep[idx, 0], self.ep[idx, 1])),
                shape=(n, n),
            )
            _, self._lab = connected_components(g, directed=False)
        return self._lab

    def config(self) -> EdgeConfig:
        return self.state.config()


def sample_estimates(domain: Domain, bc: BoundaryCondition, params: ModelParams,
                     observables: dict, budget: int, burn_in: int | None,
                     seed: int, algo: str = "cm", stream: int = 0,
                     thin: int = 1) -> dict[str, Estimate]:
    """Run one chain, evaluating named observables each retained sweep.

    Each observable is a callable taking the BoxSampler; results are
    batch-means Estimates keyed like ``observables``.
    """
    if burn_in is None:
        burn_in = max(64, budget // 10) if params.q == 1.0 else max(512, budget // 10)
    sampler = BoxSampler(domain, bc, params, seed, algo=algo, stream=stream)
    for _ in range(burn_in):
        sampler.sweep()
    n = (budget - burn_in) // thin
    if n <= 0:
        raise ValueError("budget must exceed burn-in")
    series = {k: np.empty(n) for k in observables}
    for i in range(n):
        for _ in range(thin):
            sampler.sweep()
        for k, fn in observables.items():
            series[k][i] = float(fn(sampler))
    meta = {"algo": algo, "burn_in": burn_in, "thin": thin, "bc": bc.name,
            "box": domain.bounding_box()}
    return {
        k: from_batches(series[k], seed, params=params, label=k, meta=meta)
        for k in observables
    }


def _box_for_scale(scale: int, factor: int = 4) -> Domain:
    """Free-boundary proxy box for infinite-volume quantities at a scale."""
    half = max(1, (factor * scale + 1) // 2)
    return build_box(half)


def origin_cluster_reach(sampler: BoxSampler, radius: int) -> bool:
    lab = sampler.labels()
    d = sampler.domain
    o = d.vertex_index[(0, 0)]
    ring = [d.vertex_index[v] for v in d.vertices if max(abs(v[0]), abs(v[1])) == radius]
    lo = lab[o]
    return bool((lab[np.array(ring)] == lo).any())


def pi1_estimates(params: ModelParams, radii, budget: int, seed: int,
                  burn_in: int | None = None, box_factor: int = 4,
                  algo: str = "cm") -> dict[int, Estimate]:
    """P[0 <-> boundary of Lambda_R] for each R, on one shared proxy box."""
    radii = sorted(radii)
    box = _box_for_scale(radii[-1], box_factor)
    obs = {f"pi1_{R}": (lambda s, R=R: origin_cluster_reach(s, R)) for R in radii}
    est = sample_estimates(box, BoundaryCondition.free(box), params, obs,
                           budget, burn_in, seed, algo=algo)
    return {R: est[f"pi1_{R}"] for R in radii}


def arm_probability(params: ModelParams, spec: ArmSpec, budget: int, seed: int,
                    burn_in: int | None = None, box_factor: int = 4,
                    algo: str = "cm") -> Estimate:
    box = _box_for_scale(spec.R, box_factor)
    fn = lambda s: arm_occurs(s.config(), spec)
    est = sample_estimates(box, BoundaryCondition.free(box), params,
                           {"arm": fn}, budget, burn_in, seed, algo=algo)["arm"]
    est.label = f"pi_{''.join(map(str, spec.sigma))}({spec.r},{spec.R})"
    return est


def annulus_crossing_counts(sampler: BoxSampler, r: int, R: int):
    return _crossing_clusters(sampler.config(), r, R, False)


# ---------------------------------------------------------------------------
# mixing rate


def delta_hat(params: ModelParams, r: int, R: int, budget: int, seed: int,
              burn_in: int | None = None, algo: str = "cm"):
    """Estimates of Delta_p(R), Delta_p(r, R) and their difference.

    Wired and free chains on Lambda_R run on the same uniforms (common
    random numbers); differences are batched pairwise.
    """
    if not (1 <= r < R):
        raise ValueError("need 1 <= r < R")
    box = build_box(R)
    quad = box_quad(r)
    e0 = box.edge_index[((0, 0), (1, 0))]
    if burn_in is None:
        burn_in = max(256, budget // 10)
    wired = BoxSampler(box, BoundaryCondition.wired(box), params, seed, algo=algo)
    free = BoxSampler(box, BoundaryCondition.free(box), params, seed, algo=algo)
    for _ in range(burn_in):
        wired.sweep()
        free.sweep()
    n = budget - burn_in
    if n <= 0:
        raise ValueError("budget must exceed burn-in")
    d_edge = np.empty(n)
    d_cross = np.empty(n)
    for i in range(n):
        wired.sweep()
        free.sweep()
        d_edge[i] = float(wired.open[e0]) - float(free.open[e0])
        d_cross[i] = float(crossing_occurs(wired.config(), quad)) - float(
            crossing_occurs(free.config(), quad)
        )
    meta = {"algo": algo, "burn_in": burn_in, "crn": True, "r": r, "R": R}
    est_R = from_batches(d_edge, seed, params=params, label=f"Delta({R})", meta=meta)
    est_rR = from_batches(d_cross, seed, params=params, label=f"Delta({r},{R})", meta=meta)
    est_diff = from_batches(d_edge - d_cross, seed, params=params,
                            label=f"Delta({R})-Delta({r},{R})", meta=meta)
    for est in (est_R, est_rR):
        if est.mean < -3.0 * est.stderr:
            est.meta["cbc_violation"] = True
    return est_R, est_rR, est_diff


# ---------------------------------------------------------------------------
# characteristic length


@dataclass
class LengthScanResult:
    p: float
    q: float
    L_hat: object                # int or "exceeds-cap"
    delta_threshold: float
    crossing_curve: list = field(default_factory=list)  # (R, mean, stderr)
    seed: int = 0

    def finite(self) -> bool:
        return self.L_hat != "exceeds-cap"


def crossing_probability(params: ModelParams, R: int, budget: int, seed: int,
                         burn_in: int | None = None, box_factor: int = 2,
                         algo: str = "cm") -> Estimate:
    """phi_p[C(Lambda_R)] on a free proxy box of twice the scale."""
    box = build_box(max(R + 1, box_factor * R))
    quad = box_quad(R)
    fn = lambda s: crossing_occurs(s.config(), quad)
    est = sample_estimates(box, BoundaryCondition.free(box), params,
                           {"cross": fn}, budget, burn_in, seed, algo=algo)["cross"]
    est.label = f"crossing({R})"
    return est


def characteristic_length(q: float, p: float, delta: float, R_cap: int,
                          budget: int, seed: int, algo: str = "cm") -> LengthScanResult:
    """Smallest R with the square-crossing probability leaving
    [delta, 1 - delta] by more than two standard errors; scans powers of two
    and refines by bisection."""
    if not (0.0 < delta < 0.5):
        raise ValueError("delta must lie in (0, 1/2)")
    params = ModelParams(p, q)
    curve = []

    def outside(est: Estimate) -> bool:
        return (est.mean < delta - 2 * est.stderr) or (est.mean > 1 - delta + 2 * est.stderr)

    def probe(R: int) -> Estimate:
        est = crossing_probability(params, R, budget, seed + R, algo=algo)
        curve.append((R, est.mean, est.stderr))
        return est

    R = 1
    hit = None
    prev = 1
    while R <= R_cap:
        est = probe(R)
        if outside(est):
            hit = R
            break
        prev = R
        R *= 2
    if hit is None:
        return LengthScanResult(p, q, "exceeds-cap", delta, curve, seed)
    lo, hi = prev, hit
    while hi - lo > 1:
        mid = (lo + hi) // 2
        est = probe(mid)
        if outside(est):
            hi = mid
        else:
            lo = mid
    return LengthScanResult(p, q, hi, delta, curve, seed)


# ---------------------------------------------------------------------------
# cluster statistics, ghost magnetization, covariance sums


def cluster_stats(params: ModelParams, domain: Domain, bc: BoundaryCondition,
                  budget: int, seed: int, burn_in: int | None = None,
                  algo: str = "cm") -> dict:
    """theta proxy, |C| moments with the boundary-touching proxy for the
    infinite-cluster indicator, radius curve and phi(n) from it."""
    d = domain
    o = d.vertex_index[(0, 0)]
    x0, y0, x1, y1 = d.bounding_box()
    r_max = min(-x0, -y0, x1, y1)
    radii = []
    r = CHI_MIN_RADIUS
    while r <= r_max:
        radii.append(r)
        r *= 2
    vcoords = np.array(d.vertices)
    vrad = np.abs(vcoords).max(axis=1)
    boundary_mask = vrad == r_max

    def cluster_of_origin(s: BoxSampler):
        lab = s.labels()
        return lab == lab[o]

    obs = {}
    obs["theta_proxy"] = lambda s: bool(
        (cluster_of_origin(s) & boundary_mask).any()
    )
    obs["size"] = lambda s: float(cluster_of_origin(s).sum())
    obs["chi_finite"] = lambda s: (
        0.0
        if (cluster_of_origin(s) & boundary_mask).any()
        else float(cluster_of_origin(s).sum())
    )
    obs["radius"] = lambda s: float(vrad[cluster_of_origin(s)].max())
    for Rr in radii:
        obs[f"pi1_{Rr}"] = lambda s, Rr=Rr: float(vrad[cluster_of_origin(s)].max() >= Rr)
    ests = sample_estimates(d, bc, params, obs, budget, burn_in, seed, algo=algo)
    pi1_curve = [(Rr, ests[f"pi1_{Rr}"]) for Rr in radii]

    def phi_n(n: float):
        for Rr, est in pi1_curve:
            if Rr * Rr * est.mean >= n:
                return Rr
        return None

    return {
        "theta_proxy": ests["theta_proxy"],
        "mean_size": ests["size"],
        "chi": ests["chi_finite"],
        "radius": ests["radius"],
        "pi1_curve": pi1_curve,
        "phi_n": phi_n,
    }


def ghost_magnetization(params: ModelParams, domain: Domain, budget: int,
                        seed: int, burn_in: int | None = None) -> Estimate:
    """phi_{p,h}[0 <-> ghost] via heat-bath with dynamic ghost edges."""
    if params.h == 0.0:
        return Estimate(0.0, 0.0, 0, seed, params=params, label="ghost_mag",
                        meta={"exact": "h=0 means no ghost edges"})
    if burn_in is None:
        burn_in = max(128, budget // 10)
    st = init_chain(domain, BoundaryCondition.free(domain), params, seed)
    ep = domain.edge_array()
    n = domain.n_vertices
    o = domain.vertex_index[(0, 0)]
    for _ in range(burn_in):
        heat_bath_sweep(st)
    m = budget - burn_in
    vals = np.empty(m)
    for i in range(m):
        heat_bath_sweep(st)
        idx = np.nonzero(st.open)[0]
        rows = list(ep[idx, 0]) + [v for v in range(n) if st.ghost_open[v]]
        cols = list(ep[idx, 1]) + [n] * int(st.ghost_open.sum())
        g = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                       shape=(n + 1, n + 1))
        _, lab = connected_components(g, directed=False)
        vals[i] = float(lab[o] == lab[n])
    return from_batches(vals, seed, params=params, label="ghost_mag",
                        meta={"algo": "heatbath", "burn_in": burn_in})


def covariance_sum_f2(params: ModelParams, budget: int, seed: int, R_cap: int,
                      burn_in: int | None = None, algo: str = "cm") -> Estimate:
    """sum over edges f within distance R_cap of Cov(omega_e, omega_f), for
    e at the origin, on a box of side >= 4 R_cap; f''(p) is twice this sum
    (truncated at R_cap, flagged in the metadata)."""
    box = build_box(2 * R_cap)
    e0 = box.edge_index[((0, 0), (1, 0))]
    ep = box.edge_array()
    mids = np.array(
        [((u[0] + v[0]) / 2, (u[1] + v[1]) / 2) for u, v in box.edges]
    )
    center = mids[e0]
    dist = np.abs(mids - center).max(axis=1)
    near = np.nonzero(dist <= R_cap)[0]
    if burn_in is None:
        burn_in = max(256, budget // 10)
    sampler = BoxSampler(box, BoundaryCondition.free(box), params, seed, algo=algo)
    for _ in range(burn_in):
        sampler.sweep()
    n = budget - burn_in
    n_batches = max(32, int(np.sqrt(n)))
    blen = n // n_batches
    if blen < 2:
        raise ValueError("budget too small for 32 covariance batches")
    batch_vals = np.empty(n_batches)
    for b in range(n_batches):
        xs = np.empty((blen, len(near)))
        xe = np.empty(blen)
        for i in range(blen):
            sampler.sweep()
            xs[i] = sampler.open[near]
            xe[i] = sampler.open[e0]
        cov = (xs * xe[:, None]).mean(axis=0) - xs.mean(axis=0) * xe.mean()
        batch_vals[b] = cov.sum() * blen / max(blen - 1, 1)
    mean = float(batch_vals.mean())
    stderr = float(batch_vals.std(ddof=1) / np.sqrt(n_batches))
    return Estimate(mean, stderr, n_batches * blen, seed, params=params,
                    label=f"cov_sum(R<={R_cap})",
                    meta={"truncated_at": R_cap, "f_second_derivative": "2x this sum",
                          "algo": algo, "burn_in": burn_in})
