"""Exact-enumeration oracle for the random-cluster measure on small domains.

Weights follow w(omega) = (p/(1-p))^{|omega|} (e^h - 1)^{Delta(omega)}
q^{k(omega^xi)} with a ghost vertex attached to every vertex when h > 0.
Enumeration sweeps all bit masks over the edge set (plus ghost edges),
computing cluster counts with a vectorized min-label propagation; a
hand-rolled union-find provides an independent per-configuration reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import BoundaryCondition, Domain, Quad

DEFAULT_CAP = 24
_CHUNK_BITS = 16


class EnumerationCapError(ValueError):
    pass


def p_c(q: float) -> float:
    """Self-dual point sqrt(q) / (1 + sqrt(q))."""
    if q <= 0:
        raise ValueError("q must be positive")
    s = math.sqrt(q)
    return s / (1.0 + s)


@dataclass(frozen=True)
class ModelParams:
    p: float
    q: float
    h: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ValueError("p must lie in (0,1)")
        if self.q < 1.0:
            raise ValueError("q must be >= 1")
        if self.h < 0.0:
            raise ValueError("h must be >= 0")

    @property
    def log_r(self) -> float:
        return math.log(self.p) - math.log1p(-self.p)

    @property
    def ghost_weight(self) -> float:
        return math.expm1(self.h)

    def p_c(self) -> float:
        return p_c(self.q)

    def in_paper_range(self) -> bool:
        return 1.0 <= self.q <= 4.0


class EdgeConfig:
    """An edge configuration as a bit mask over the domain's edge indices."""

    __slots__ = ("domain", "mask")

    def __init__(self, domain: Domain, mask: int):
        self.domain = domain
        self.mask = int(mask)

    @staticmethod
    def empty(domain: Domain) -> "EdgeConfig":
        return EdgeConfig(domain, 0)

    @staticmethod
    def full(domain: Domain) -> "EdgeConfig":
        return EdgeConfig(domain, (1 << domain.n_edges) - 1)

    @staticmethod
    def from_open_edges(domain: Domain, edges) -> "EdgeConfig":
        m = 0
        for e in edges:
            m |= 1 << e
        return EdgeConfig(domain, m)

    def is_open(self, e: int) -> bool:
        return bool((self.mask >> e) & 1)

    def open_edges(self) -> list[int]:
        return [e for e in range(self.domain.n_edges) if self.is_open(e)]

    def n_open(self) -> int:
        return bin(self.mask).count("1")

    def leq(self, other: "EdgeConfig") -> bool:
        return (self.mask & ~other.mask) == 0

    def dual_mask(self) -> int:
        return ~self.mask & ((1 << self.domain.n_edges) - 1)

    def __eq__(self, other):
        return self.domain is other.domain and self.mask == other.mask

    def __hash__(self):
        return hash(self.mask)


# ---------------------------------------------------------------------------
# reference union-find (independent of the vectorized tables)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.count = n

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if ra > rb:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.count -= 1
        return True


def _wiring_pairs(domain: Domain, bc: BoundaryCondition, ghost_index: int | None):
    """(a, b) vertex-index pairs realizing the boundary wirings (+ ghost)."""
    pairs = []
    for cls in bc.classes():
        ids = []
        for v in cls:
            if v == BoundaryCondition.GHOST:
                if ghost_index is None:
                    continue
                ids.append(ghost_index)
            else:
                ids.append(domain.vertex_index[v])
        ids.sort()
        pairs += [(ids[0], x) for x in ids[1:]]
    return pairs


def cluster_count(cfg: EdgeConfig, bc: BoundaryCondition, ghost_mask: int = 0,
                  with_ghost: bool = False) -> int:
    """k(omega^xi): components after identifying wired vertices (and ghost)."""
    d = cfg.domain
    n = d.n_vertices
    use_ghost = with_ghost or ghost_mask != 0 or BoundaryCondition.GHOST in bc.labels
    uf = UnionFind(n + (1 if use_ghost else 0))
    for a, b in _wiring_pairs(d, bc, n if use_ghost else None):
        uf.union(a, b)
    for e in range(d.n_edges):
        if (cfg.mask >> e) & 1:
            uf.union(*d.endpoints(e))
    if use_ghost:
        for v in range(n):
            if (ghost_mask >> v) & 1:
                uf.union(v, n)
    return uf.count


# ---------------------------------------------------------------------------
# vectorized enumeration tables


def component_labels(masks: np.ndarray, n_vertices: int,
                     bit_edges: list[tuple[int, int, int]],
                     init: np.ndarray | None = None,
                     always_pairs: list[tuple[int, int]] = ()) -> np.ndarray:
    """Min-label connected components for every mask at once.

    ``bit_edges`` lists (bit, a, b); an edge acts in a row iff its bit is set
    in the row's mask.  ``always_pairs`` act in every row (wirings).  Labels
    converge monotonically, so a stable column sum detects the fixed point.
    """
    n = len(masks)
    if init is None:
        init = np.arange(n_vertices, dtype=np.uint8)
    labels = np.tile(np.asarray(init, dtype=np.uint8), (n, 1))
    sel = [
        (((masks >> np.uint64(bit)) & np.uint64(1)).astype(bool), a, b)
        for bit, a, b in bit_edges
        if a != b
    ]
    always = [(None, a, b) for a, b in always_pairs if a != b]
    work = sel + always
    if not work:
        return labels
    prev = -1
    while True:
        for passes in (work, work[::-1]):
            for s, a, b in passes:
                la = labels[:, a]
                lb = labels[:, b]
                mn = np.minimum(la, lb)
                if s is None:
                    labels[:, a] = mn
                    labels[:, b] = mn
                else:
                    labels[:, a] = np.where(s, mn, la)
                    labels[:, b] = np.where(s, mn, lb)
        tot = int(labels.sum())
        if tot == prev:
            return labels
        prev = tot


def _count_roots(labels: np.ndarray) -> np.ndarray:
    n_vertices = labels.shape[1]
    return (labels == np.arange(n_vertices, dtype=np.uint8)).sum(axis=1).astype(np.uint8)


class ExactOracle:
    """Enumerates the measure phi^xi_{G,p,q,h} on a small domain.

    Tables (cluster counts, open-edge counts) depend only on (domain, bc,
    ghost), so one oracle serves every (p, q, h) on the same wiring.
    """

    def __init__(self, domain: Domain, bc: BoundaryCondition, with_ghost: bool = False,
                 cap: int = DEFAULT_CAP):
        self.domain = domain
        self.bc = bc
        self.with_ghost = with_ghost
        self.m_edges = domain.n_edges
        self.m_ghost = domain.n_vertices if with_ghost else 0
        self.n_bits = self.m_edges + self.m_ghost
        if self.n_bits > cap:
            raise EnumerationCapError(
                f"{self.n_bits} bits exceeds enumeration cap {cap}"
            )
        self.n_masks = 1 << self.n_bits
        nv = domain.n_vertices + (1 if with_ghost else 0)
        self._nv = nv
        bit_edges = [(e, *domain.endpoints(e)) for e in range(self.m_edges)]
        if with_ghost:
            g = domain.n_vertices
            bit_edges += [(self.m_edges + v, v, g) for v in range(domain.n_vertices)]
        wire = _wiring_pairs(domain, bc, domain.n_vertices if with_ghost else None)
        k = np.empty(self.n_masks, dtype=np.uint8)
        chunk = 1 << min(_CHUNK_BITS, self.n_bits)
        for lo in range(0, self.n_masks, chunk):
            masks = np.arange(lo, lo + chunk, dtype=np.uint64)
            k[lo : lo + chunk] = _count_roots(
                component_labels(masks, nv, bit_edges, always_pairs=wire)
            )
        self.k = k
        all_masks = np.arange(self.n_masks, dtype=np.uint64)
        emask = np.uint64((1 << self.m_edges) - 1)
        self.pop_edges = np.bitwise_count(all_masks & emask).astype(np.uint8)
        if with_ghost:
            self.pop_ghost = np.bitwise_count(all_masks >> np.uint64(self.m_edges)).astype(np.uint8)
        else:
            self.pop_ghost = None

    # -- weights ---------------------------------------------------------

    def log_weights(self, params: ModelParams) -> np.ndarray:
        logw = self.pop_edges * params.log_r + self.k * math.log(params.q)
        if self.with_ghost:
            if params.h == 0.0:
                # no ghost edge may be open at h = 0
                logw = np.where(self.pop_ghost == 0, logw, -np.inf)
            else:
                logw = logw + self.pop_ghost * math.log(params.ghost_weight)
        elif params.h != 0.0:
            raise ValueError("oracle built without ghost edges but h > 0")
        return logw

    def weights(self, params: ModelParams) -> np.ndarray:
        """Weights rescaled by exp(-max log weight); use with Z from the
        same call site or normalize explicitly."""
        logw = self.log_weights(params)
        return np.exp(logw - logw.max())

    def log_partition_function(self, params: ModelParams) -> float:
        logw = self.log_weights(params)
        m = logw.max()
        return float(m + np.log(np.exp(logw - m).sum()))

    def partition_function(self, params: ModelParams) -> float:
        # direct summation is exact for small systems; fall back to
        # log-sum-exp beyond 16 bits as the weights can span huge ranges
        if self.n_bits <= 16:
            logw = self.log_weights(params)
            return float(np.exp(logw).sum())
        return math.exp(self.log_partition_function(params))

    def distribution(self, params: ModelParams) -> np.ndarray:
        w = self.weights(params)
        return w / w.sum()

    # -- events ----------------------------------------------------------

    def event_array(self, event) -> np.ndarray:
        """Evaluate an event as a boolean vector over all masks.

        ``event`` is either a callable EdgeConfig -> bool or an object with
        a ``vectorized(oracle)`` method returning the boolean vector.
        """
        if hasattr(event, "vectorized"):
            arr = np.asarray(event.vectorized(self), dtype=bool)
            if arr.shape != (self.n_masks,):
                raise ValueError("vectorized event has wrong shape")
            return arr
        out = np.empty(self.n_masks, dtype=bool)
        emask = (1 << self.m_edges) - 1
        cache: dict[int, bool] = {}
        for m in range(self.n_masks):
            em = m & emask
            v = cache.get(em)
            if v is None:
                v = bool(event(EdgeConfig(self.domain, em)))
                cache[em] = v
            out[m] = v
        return out

    def prob(self, params: ModelParams, event) -> float:
        w = self.weights(params)
        return float(w[self.event_array(event)].sum() / w.sum())

    def expectation(self, params: ModelParams, values: np.ndarray) -> float:
        w = self.weights(params)
        return float((w * values).sum() / w.sum())

    def covariance(self, params: ModelParams, ev_a, ev_b) -> float:
        w = self.weights(params)
        z = w.sum()
        a = self.event_array(ev_a)
        b = self.event_array(ev_b)
        return float(w[a & b].sum() / z - (w[a].sum() / z) * (w[b].sum() / z))

    def restricted_partition_function(self, params: ModelParams, event) -> float:
        if self.n_bits <= 16:
            logw = self.log_weights(params)
            return float(np.exp(logw[self.event_array(event)]).sum())
        logw = self.log_weights(params)[self.event_array(event)]
        m = logw.max()
        return math.exp(m + math.log(np.exp(logw - m).sum()))

    def edge_marginal(self, params: ModelParams, e: int) -> float:
        return self.prob(params, EdgeOpen(e))

    def ghost_connection_prob(self, params: ModelParams, v: int) -> float:
        """P[v is connected to the ghost vertex]."""
        if not self.with_ghost:
            raise ValueError("oracle has no ghost vertex")
        return self.prob(params, ConnectedToGhost(v))


_oracles: dict = {}


def get_oracle(domain: Domain, bc: BoundaryCondition, with_ghost: bool = False,
               cap: int = DEFAULT_CAP) -> ExactOracle:
    key = (id(domain), bc.key(), with_ghost)
    ora = _oracles.get(key)
    if ora is None:
        ora = ExactOracle(domain, bc, with_ghost=with_ghost, cap=cap)
        _oracles[key] = ora
    return ora


# -- vectorized events -------------------------------------------------------


class EdgeOpen:
    def __init__(self, e: int):
        self.e = e

    def __call__(self, cfg: EdgeConfig) -> bool:
        return cfg.is_open(self.e)

    def vectorized(self, oracle: ExactOracle) -> np.ndarray:
        masks = np.arange(oracle.n_masks, dtype=np.uint64)
        return ((masks >> np.uint64(self.e)) & np.uint64(1)).astype(bool)


class AllOpen:
    def __init__(self, edges):
        self.edges = list(edges)

    def __call__(self, cfg: EdgeConfig) -> bool:
        return all(cfg.is_open(e) for e in self.edges)

    def vectorized(self, oracle: ExactOracle) -> np.ndarray:
        need = np.uint64(sum(1 << e for e in self.edges))
        masks = np.arange(oracle.n_masks, dtype=np.uint64)
        return (masks & need) == need


class Connected:
    """u <-> v through open edges of ``within`` (wirings excluded)."""

    def __init__(self, u, v, within: list[int] | None = None):
        self.u = u
        self.v = v
        self.within = within

    def _labels(self, oracle: ExactOracle) -> np.ndarray:
        d = oracle.domain
        edges = self.within if self.within is not None else range(d.n_edges)
        bit_edges = [(e, *d.endpoints(e)) for e in edges]
        masks = np.arange(oracle.n_masks, dtype=np.uint64)
        return component_labels(masks, d.n_vertices, bit_edges)

    def vectorized(self, oracle: ExactOracle) -> np.ndarray:
        lab = self._labels(oracle)
        ui = oracle.domain.vertex_index[self.u]
        vi = oracle.domain.vertex_index[self.v]
        return lab[:, ui] == lab[:, vi]

    def __call__(self, cfg: EdgeConfig) -> bool:
        d = cfg.domain
        uf = UnionFind(d.n_vertices)
        edges = self.within if self.within is not None else range(d.n_edges)
        for e in edges:
            if cfg.is_open(e):
                uf.union(*d.endpoints(e))
        return uf.find(d.vertex_index[self.u]) == uf.find(d.vertex_index[self.v])


class SetsConnected:
    """Some vertex of A joined to some vertex of B inside the given edges."""

    def __init__(self, set_a, set_b, within: list[int] | None = None):
        self.set_a = list(set_a)
        self.set_b = list(set_b)
        self.within = within

    def vectorized(self, oracle: ExactOracle) -> np.ndarray:
        d = oracle.domain
        edges = self.within if self.within is not None else range(d.n_edges)
        bit_edges = [(e, *d.endpoints(e)) for e in edges]
        masks = np.arange(oracle.n_masks, dtype=np.uint64)
        lab = component_labels(masks, d.n_vertices, bit_edges)
        ia = [d.vertex_index[v] for v in self.set_a]
        ib = [d.vertex_index[v] for v in self.set_b]
        out = np.zeros(oracle.n_masks, dtype=bool)
        for u in ia:
            lu = lab[:, u]
            for v in ib:
                out |= lu == lab[:, v]
        return out

    def __call__(self, cfg: EdgeConfig) -> bool:
        d = cfg.domain
        uf = UnionFind(d.n_vertices)
        edges = self.within if self.within is not None else range(d.n_edges)
        for e in edges:
            if cfg.is_open(e):
                uf.union(*d.endpoints(e))
        ra = {uf.find(d.vertex_index[v]) for v in self.set_a}
        rb = {uf.find(d.vertex_index[v]) for v in self.set_b}
        return bool(ra & rb)


class CrossingEvent(SetsConnected):
    """The quad crossing event: arc (ab) joined to arc (cd) inside the quad."""

    def __init__(self, quad: Quad, parent: Domain | None = None):
        if parent is None or parent is quad.domain:
            within = None
            dom = quad.domain
        else:
            dom = parent
            within = [parent.edge_index[(u, v)] for u, v in quad.domain.edges]
        super().__init__(quad.arc("ab"), quad.arc("cd"), within=within)
        self.quad = quad


class ConnectedToGhost:
    def __init__(self, v):
        self.v = v

    def vectorized(self, oracle: ExactOracle) -> np.ndarray:
        d = oracle.domain
        g = d.n_vertices
        bit_edges = [(e, *d.endpoints(e)) for e in range(d.n_edges)]
        bit_edges += [(d.n_edges + u, u, g) for u in range(d.n_vertices)]
        masks = np.arange(oracle.n_masks, dtype=np.uint64)
        lab = component_labels(masks, g + 1, bit_edges)
        vi = d.vertex_index[self.v] if not isinstance(self.v, int) else self.v
        return lab[:, vi] == lab[:, g]


# ---------------------------------------------------------------------------
# conditionals, quotient measures, spatial Markov machinery


def conditional_edge_probability(params: ModelParams, connected_off_e: bool) -> float:
    """Single-edge heat-bath rule: p when the endpoints are already joined
    off the edge (through wirings), else p / (p + (1-p) q)."""
    if connected_off_e:
        return params.p
    return params.p / (params.p + (1.0 - params.p) * params.q)


def induced_vertex_labels(domain: Domain, bc: BoundaryCondition,
                          fixed_values: dict[int, int]) -> tuple[int, ...]:
    """Quotient labels on the vertices from wirings plus fixed open edges.

    ``fixed_values`` maps edge index -> 0/1 for the edges outside the region
    of interest.  Labels are canonical (numbered by first vertex occurrence).
    """
    n = domain.n_vertices
    uf = UnionFind(n)
    for a, b in _wiring_pairs(domain, bc, None):
        uf.union(a, b)
    for e, val in fixed_values.items():
        if val:
            uf.union(*domain.endpoints(e))
    roots = [uf.find(v) for v in range(n)]
    remap: dict[int, int] = {}
    out = []
    for r in roots:
        if r not in remap:
            remap[r] = len(remap)
        out.append(remap[r])
    return tuple(out)


class QuotientMeasure:
    """Random-cluster measure on a sub-edge-set with contracted vertices.

    This realizes the spatial-Markov conditional: the measure on the
    unrevealed edges given revealed edges and wirings, with k counted on the
    quotient graph.  Small enough for direct enumeration.
    """

    def __init__(self, domain: Domain, sub_edges: list[int],
                 vertex_labels: tuple[int, ...], cap: int = DEFAULT_CAP):
        if len(sub_edges) > cap:
            raise EnumerationCapError("sub-measure exceeds enumeration cap")
        self.domain = domain
        self.sub_edges = list(sub_edges)
        self.vertex_labels = vertex_labels
        self.n_classes = max(vertex_labels) + 1 if vertex_labels else 0
        self.n_bits = len(sub_edges)
        self.n_masks = 1 << self.n_bits
        bit_edges = []
        for i, e in enumerate(self.sub_edges):
            a, b = domain.endpoints(e)
            bit_edges.append((i, vertex_labels[a], vertex_labels[b]))
        masks = np.arange(self.n_masks, dtype=np.uint64)
        self.k = _count_roots(
            component_labels(masks, self.n_classes, bit_edges)
        )
        self.pop = np.bitwise_count(masks).astype(np.uint8)

    def weights(self, params: ModelParams) -> np.ndarray:
        logw = self.pop * params.log_r + self.k * math.log(params.q)
        return np.exp(logw - logw.max())

    def distribution(self, params: ModelParams) -> np.ndarray:
        w = self.weights(params)
        return w / w.sum()

    def edge_marginal(self, params: ModelParams, e: int) -> float:
        i = self.sub_edges.index(e)
        w = self.weights(params)
        masks = np.arange(self.n_masks, dtype=np.uint64)
        op = ((masks >> np.uint64(i)) & np.uint64(1)).astype(bool)
        return float(w[op].sum() / w.sum())


def submeasure_edge_marginal(domain: Domain, bc: BoundaryCondition,
                             fixed_values: dict[int, int], sub_edges: list[int],
                             e: int, params: ModelParams) -> float:
    """Exact P[omega_e = 1] in the measure on ``sub_edges`` induced by the
    revealed edges ``fixed_values`` and the boundary condition."""
    labels = induced_vertex_labels(domain, bc, fixed_values)
    qm = QuotientMeasure(domain, sub_edges, labels)
    return qm.edge_marginal(params, e)


# ---------------------------------------------------------------------------
# boost formula


def boost_formula_check(params: ModelParams, quad: Quad,
                        cap: int = DEFAULT_CAP) -> tuple[float, float]:
    """lhs: crossing probability with (ab) u (cd) wired into one class;
    rhs: q phi / (1 + (q-1) phi) with phi the probability when (ab), (cd)
    are wired separately.  The two agree identically."""
    d = quad.domain
    ab = quad.arc("ab")
    cd = quad.arc("cd")
    mix = BoundaryCondition(
        d, {**{v: 0 for v in ab}, **{v: 1 for v in cd}}, name="mix"
    )
    mixp = BoundaryCondition(
        d, {**{v: 0 for v in ab}, **{v: 0 for v in cd}}, name="mixp"
    )
    ev = CrossingEvent(quad)
    phi = get_oracle(d, mix, cap=cap).prob(params, ev)
    lhs = get_oracle(d, mixp, cap=cap).prob(params, ev)
    rhs = params.q * phi / (1.0 + (params.q - 1.0) * phi)
    return lhs, rhs


def oracle_csv_row(domain_id: str, params: ModelParams, bc: BoundaryCondition,
                   event_id: str, probability: float) -> str:
    return (
        f"{domain_id},{params.p!r},{params.q!r},{params.h!r},"
        f"{bc.name},{event_id},{probability!r}"
    )
