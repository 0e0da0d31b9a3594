"""Monotone couplings of two random-cluster measures via decision trees,
the three canonical exploration orders, stopping times, and flower-domain
extraction from explored interfaces.

The coupled pair (omega, omega') shares one uniform per edge.  At each step
the revealed edge takes value 1 iff its uniform exceeds the conditional
probability of being closed given the revealed history; with ordered inputs
(p <= p', xi <= xi') the thresholds are ordered, so omega <= omega' holds
after every revelation, not just at the end.

Conditional probabilities come from exact enumeration of the unexplored
subgraph with induced wirings (mode="exact", the default for small domains)
or from the closed-form single-edge heat-bath rule applied to the revealed
partial configuration (mode="heatbath", an approximation for domains beyond
the enumeration cap).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exact import (EdgeConfig, ModelParams, UnionFind, component_labels,
                    _count_roots, induced_vertex_labels)
from .lattice import BoundaryCondition, Domain, build_annulus, build_box
from .rng import edge_uniforms


# ---------------------------------------------------------------------------
# coupling state


@dataclass
class CouplingState:
    """Revealed history of a coupling run; everything a decision rule or a
    stopping predicate is allowed to look at."""

    domain: Domain
    bc_low: BoundaryCondition
    bc_high: BoundaryCondition
    p_low: float
    p_high: float
    q: float
    revealed: list[int] = field(default_factory=list)
    omega: dict[int, int] = field(default_factory=dict)
    omega_prime: dict[int, int] = field(default_factory=dict)
    uniforms: dict[int, float] = field(default_factory=dict)

    @property
    def t(self) -> int:
        return len(self.revealed)

    def revealed_set(self) -> set[int]:
        return set(self.revealed)

    def unrevealed(self) -> list[int]:
        rev = self.revealed_set()
        return [e for e in range(self.domain.n_edges) if e not in rev]

    def induced_labels(self, side: str) -> tuple[int, ...]:
        if side == "low":
            return induced_vertex_labels(self.domain, self.bc_low, self.omega)
        return induced_vertex_labels(self.domain, self.bc_high, self.omega_prime)

    def boundary_conditions_coincide(self) -> bool:
        """Induced partitions agree on the vertices of the unexplored region."""
        lo = self.induced_labels("low")
        hi = self.induced_labels("high")
        touched = sorted({v for e in self.unrevealed() for v in self.domain.endpoints(e)})
        def canon(lab):
            remap, out = {}, []
            for v in touched:
                c = lab[v]
                if c not in remap:
                    remap[c] = len(remap)
                out.append(remap[c])
            return tuple(out)
        return canon(lo) == canon(hi)

    def snapshot(self) -> "CouplingState":
        return CouplingState(
            self.domain, self.bc_low, self.bc_high, self.p_low, self.p_high,
            self.q, list(self.revealed), dict(self.omega),
            dict(self.omega_prime), dict(self.uniforms),
        )


# ---------------------------------------------------------------------------
# decision trees


class DeterministicTree:
    """Example 1: reveal the edges in a fixed order."""

    def __init__(self, domain: Domain, order):
        order = list(order)
        if sorted(order) != list(range(domain.n_edges)):
            raise ValueError("order is not a permutation of the edge indices")
        self.domain = domain
        self.order = order
        self.reset()

    def reset(self):
        self._pos = 0

    @property
    def first_edge(self) -> int:
        return self.order[0]

    def next_edge(self, state: CouplingState) -> int:
        e = self.order[self._pos]
        self._pos += 1
        return e

    def observe(self, e: int, w: int, wp: int):
        pass


class BoundaryClusterTree:
    """Example 2: grow the omega'-clusters of the boundary; when no boundary
    growth is possible, fall back to the smallest unrevealed edge."""

    def __init__(self, domain: Domain):
        self.domain = domain
        self.reset()

    def reset(self):
        d = self.domain
        self.V = {d.vertex_index[v] for v in d.boundary}
        self.stall_time: int | None = None
        self._pending: tuple[int, int] | None = None

    def next_edge(self, state: CouplingState) -> int:
        d = self.domain
        rev = state.revealed_set()
        best = None
        for e in range(d.n_edges):
            if e in rev:
                continue
            a, b = d.endpoints(e)
            ina, inb = a in self.V, b in self.V
            if ina != inb:
                best = (e, b if ina else a)
                break
        if best is not None:
            self._pending = best
            return best[0]
        if self.stall_time is None:
            self.stall_time = state.t
        self._pending = None
        for e in range(d.n_edges):
            if e not in rev:
                return e
        raise RuntimeError("no unrevealed edge left")

    def observe(self, e: int, w: int, wp: int):
        if self._pending is not None and self._pending[0] == e and wp == 1:
            self.V.add(self._pending[1])
        self._pending = None


class DualClusterTree:
    """Example 3: grow the dual clusters of the outer face in omega*; the
    judging configuration is the lower one (its dual is the larger)."""

    def __init__(self, domain: Domain):
        self.domain = domain
        dual = domain.dual()
        pairs = dual.edge_pairs()
        self.dual_pairs = pairs
        self.hub = dual.dual_vertex_index(dual.HUB)
        self.reset()

    def reset(self):
        self.W = {self.hub}
        self.stall_time: int | None = None
        self._pending: tuple[int, int] | None = None

    def next_edge(self, state: CouplingState) -> int:
        rev = state.revealed_set()
        best = None
        for e, (fa, fb) in enumerate(self.dual_pairs):
            if e in rev or fa == fb:
                continue
            ina, inb = fa in self.W, fb in self.W
            if ina != inb:
                best = (e, fb if ina else fa)
                break
        if best is not None:
            self._pending = best
            return best[0]
        if self.stall_time is None:
            self.stall_time = state.t
        self._pending = None
        for e in range(self.domain.n_edges):
            if e not in rev:
                return e
        raise RuntimeError("no unrevealed edge left")

    def observe(self, e: int, w: int, wp: int):
        if self._pending is not None and self._pending[0] == e and w == 0:
            self.W.add(self._pending[1])
        self._pending = None


def deterministic_tree(domain: Domain, order=None) -> DeterministicTree:
    if order is None:
        order = range(domain.n_edges)
    return DeterministicTree(domain, order)


def boundary_cluster_tree(domain: Domain) -> BoundaryClusterTree:
    return BoundaryClusterTree(domain)


def dual_cluster_tree(domain: Domain) -> DualClusterTree:
    return DualClusterTree(domain)


# ---------------------------------------------------------------------------
# conditional probabilities


class ExactConditional:
    """Marginal of the next edge in the measure on the unexplored subgraph
    with induced wirings, by enumeration.  Memoized on the canonical quotient,
    which collapses the overwhelming majority of revealed histories."""

    def __init__(self, cap: int = 22):
        self.cap = cap
        self._memo: dict = {}

    def prob_open(self, domain: Domain, bc: BoundaryCondition,
                  fixed: dict[int, int], remaining: list[int], e: int,
                  p: float, q: float) -> float:
        labels = induced_vertex_labels(domain, bc, fixed)
        touched = sorted({v for ee in remaining for v in domain.endpoints(ee)})
        remap: dict[int, int] = {}
        canon = []
        for v in touched:
            c = labels[v]
            if c not in remap:
                remap[c] = len(remap)
            canon.append(remap[c])
        vmap = {v: i for i, v in enumerate(touched)}
        bit_edges = []
        for i, ee in enumerate(remaining):
            a, b = domain.endpoints(ee)
            bit_edges.append((canon[vmap[a]], canon[vmap[b]]))
        key = (tuple(bit_edges), tuple(canon), remaining.index(e), p, q)
        val = self._memo.get(key)
        if val is None:
            val = self._compute(bit_edges, len(remap), remaining.index(e), p, q)
            self._memo[key] = val
        return val

    def _compute(self, bit_edges, n_classes, target, p, q) -> float:
        n = len(bit_edges)
        if n > self.cap:
            raise ValueError("unexplored region exceeds exact-conditional cap")
        masks = np.arange(1 << n, dtype=np.uint64)
        lab = component_labels(
            masks, n_classes, [(i, a, b) for i, (a, b) in enumerate(bit_edges)]
        )
        k = _count_roots(lab).astype(float)
        pop = np.bitwise_count(masks).astype(float)
        logw = pop * (math.log(p) - math.log1p(-p)) + k * math.log(q)
        w = np.exp(logw - logw.max())
        openbit = ((masks >> np.uint64(target)) & np.uint64(1)).astype(bool)
        return float(w[openbit].sum() / w.sum())


_exact_conditional = ExactConditional()


def _heatbath_conditional(domain: Domain, bc: BoundaryCondition,
                          fixed: dict[int, int], e: int, p: float, q: float) -> float:
    labels = induced_vertex_labels(domain, bc, fixed)
    a, b = domain.endpoints(e)
    if labels[a] == labels[b]:
        return p
    return p / (p + (1.0 - p) * q)


# ---------------------------------------------------------------------------
# the coupling run


def run_coupling(tree, domain: Domain, bc_low: BoundaryCondition,
                 bc_high: BoundaryCondition, p_low: float, p_high: float,
                 q: float, seed: int, stop=None, mode: str = "exact"):
    """Reveal every edge once, building omega <= omega' with the prescribed
    marginals.  Returns (omega, omega', state-at-stop) where the third item
    is the full history when no stopping predicate fires; the run always
    completes by continuing with the same rule, which preserves marginals.
    """
    if not bc_low.leq(bc_high):
        raise ValueError("boundary conditions are not ordered")
    if p_low > p_high:
        raise ValueError("edge parameters are not ordered")
    if q < 1.0:
        raise ValueError("q must be >= 1")
    m = domain.n_edges
    u = edge_uniforms(seed, 0, m)
    state = CouplingState(domain, bc_low, bc_high, p_low, p_high, q)
    tree.reset()
    stopped = None
    for _ in range(m):
        e = tree.next_edge(state)
        if e in state.omega:
            raise RuntimeError("decision tree returned a revealed edge")
        remaining = state.unrevealed()
        if mode == "exact":
            p_lo = _exact_conditional.prob_open(
                domain, bc_low, state.omega, remaining, e, p_low, q)
            p_hi = _exact_conditional.prob_open(
                domain, bc_high, state.omega_prime, remaining, e, p_high, q)
        elif mode == "heatbath":
            p_lo = _heatbath_conditional(domain, bc_low, state.omega, e, p_low, q)
            p_hi = _heatbath_conditional(domain, bc_high, state.omega_prime, e, p_high, q)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        if p_lo > p_hi + 1e-9:
            raise AssertionError("conditional monotonicity violated")
        p_hi = max(p_hi, p_lo)
        ue = float(u[e])
        w = 1 if ue >= 1.0 - p_lo else 0
        wp = 1 if ue >= 1.0 - p_hi else 0
        state.revealed.append(e)
        state.omega[e] = w
        state.omega_prime[e] = wp
        state.uniforms[e] = ue
        tree.observe(e, w, wp)
        if stopped is None and stop is not None and stop(state):
            stopped = state.snapshot()
    lo = EdgeConfig.from_open_edges(domain, [e for e, v in state.omega.items() if v])
    hi = EdgeConfig.from_open_edges(domain, [e for e, v in state.omega_prime.items() if v])
    return lo, hi, (stopped if stopped is not None else state)


class BoundaryConditionsCoincide:
    """Stopping predicate: the paper's time T."""

    def __call__(self, state: CouplingState) -> bool:
        return state.boundary_conditions_coincide()


class InnerFlowerFound:
    """Stopping predicate: the inner flower exploration is fully determined
    by the revealed edges and found a crossing interface."""

    def __call__(self, state: CouplingState) -> bool:
        cfg = PartialConfig(state.domain, state.omega_prime)
        try:
            flower = explore_inner_flower(cfg)
        except UnrevealedEdge:
            return False
        return flower is not None


# ---------------------------------------------------------------------------
# flower domains


class UnrevealedEdge(Exception):
    pass


class PartialConfig:
    """Edge-value lookup that raises when an unrevealed edge is queried."""

    def __init__(self, domain: Domain, values: dict[int, int]):
        self.domain = domain
        self.values = values

    def value(self, e: int) -> int:
        try:
            return self.values[e]
        except KeyError:
            raise UnrevealedEdge(e) from None


class FullConfig:
    def __init__(self, cfg: EdgeConfig):
        self.domain = cfg.domain
        self.mask = cfg.mask

    def value(self, e: int) -> int:
        return (self.mask >> e) & 1


@dataclass
class Petal:
    tag: str                  # "primal" | "dual"
    start: tuple              # endpoint a_j (lattice vertex on the core ring)
    end: tuple                # endpoint a_{j+1}
    vertices: list            # core-ring arc from start to end, inclusive


@dataclass
class FlowerDomain:
    kind: str                 # "inner" | "outer"
    core_scale: int
    region_vertices: set      # unexplored component, within the ambient box
    petals: list[Petal]
    explored: dict            # annulus edge index -> revealed value
    annulus: Domain

    @property
    def endpoints(self) -> list:
        return [p.start for p in self.petals]

    def n_petals(self) -> int:
        return len(self.petals)

    def region_domain(self) -> Domain:
        return Domain(self.region_vertices)


def _annulus_radii(domain: Domain) -> tuple[int, int]:
    radii = [max(abs(x), abs(y)) for x, y in domain.vertices]
    return min(radii), max(radii)


def _ring_position(v, r: int) -> int:
    """Perimeter coordinate of a vertex of the square ring of radius r,
    counterclockwise from (r, -r)."""
    x, y = v
    if x == r:
        return y + r
    if y == r:
        return 2 * r + (r - x)
    if x == -r:
        return 4 * r + (r - y)
    if y == -r:
        return 6 * r + (x + r)
    raise ValueError(f"{v} not on ring {r}")


def _ring_vertices(r: int) -> list:
    out = []
    for t in range(8 * r):
        if t <= 2 * r:
            out.append((r, t - r))
        elif t <= 4 * r:
            out.append((r - (t - 2 * r), r))
        elif t <= 6 * r:
            out.append((-r, r - (t - 4 * r)))
        else:
            out.append((t - 6 * r - r, -r))
    return out


def _explore(config, from_side: str):
    """Trace the interfaces of an annulus configuration that touch one of
    its boundaries.

    Loops are cut at every degree-2 boundary corner into excursions; an
    excursion belongs to the exploration when either endpoint lies on
    ``from_side`` ("outer" or "inner").  Returns (explored edge set,
    crossing endpoints: the corners on the opposite ring reached by
    boundary-to-boundary excursions).
    """
    domain = config.domain
    r, R = _annulus_radii(domain)
    med = domain.medial()
    inner_cut = 2 * r - 1

    def corner_kind(mv) -> str | None:
        if med.medial_vertices[mv] != -1:
            return None
        return "inner" if max(abs(mv[0]), abs(mv[1])) <= inner_cut else "outer"

    out_side_of: dict = {}
    for s in range(med.n_sides):
        t = med.side_tail[s]
        if med.medial_vertices[t] == -1:
            out_side_of[t] = s

    explored: set[int] = set()
    crossings = []
    opposite = "inner" if from_side == "outer" else "outer"
    for mv in med.medial_vertices:
        start_kind = corner_kind(mv)
        if start_kind is None:
            continue
        s = out_side_of[mv]
        visited = []
        while True:
            head = med.side_head[s]
            e = med.medial_vertices[head]
            if e == -1:
                end_kind = corner_kind(head)
                break
            visited.append(e)
            s = med.next_open[s] if config.value(e) else med.next_closed[s]
        if from_side not in (start_kind, end_kind):
            continue
        explored.update(visited)
        if {start_kind, end_kind} == {"inner", "outer"}:
            crossings.append(head if end_kind == opposite else mv)
    return explored, crossings


def _corner_ring_vertex(domain: Domain, mv, ring: int):
    """The lattice vertex of the annulus, on the given ring, whose face owns
    the degree-2 medial corner mv."""
    X, Y = mv
    if X % 2:
        cands = [((X - 1) // 2, Y // 2), ((X + 1) // 2, Y // 2)]
    else:
        cands = [(X // 2, (Y - 1) // 2), (X // 2, (Y + 1) // 2)]
    for u in cands:
        if u in domain.vertex_index and max(abs(u[0]), abs(u[1])) == ring:
            return u
    raise ValueError("corner does not touch the expected ring")


def _petals_from_endpoints(config, explored, endpoint_vertices, ring: int):
    domain = config.domain
    # keep multiplicity: two interfaces may land on the same ring vertex,
    # pinching a zero-width petal there
    pts = sorted(endpoint_vertices, key=lambda v: _ring_position(v, ring))
    if len(pts) < 2:
        return None
    ringv = _ring_vertices(ring)
    pos = {v: i for i, v in enumerate(ringv)}
    open_flag = {}
    for v in ringv:
        if v not in domain.vertex_index:
            continue
        vi = domain.vertex_index[v]
        flag = False
        for _, ei in domain.adjacency[vi]:
            if ei in explored and config.value(ei):
                flag = True
                break
        open_flag[v] = flag
    petals = []
    n = len(pts)
    for j in range(n):
        a, b = pts[j], pts[(j + 1) % n]
        ia, ib = pos[a], pos[b]
        if ia == ib and j + 1 < n:
            arc = [a]  # pinched petal between coinciding endpoints
        elif ia == ib:
            arc = ringv[ia:] + ringv[: ia + 1]  # wrap: the full ring back to a
        else:
            arc = []
            k = ia
            while True:
                arc.append(ringv[k % len(ringv)])
                if k % len(ringv) == ib:
                    break
                k += 1
        interior = arc[1:-1] if len(arc) > 2 else arc
        tag = "primal" if any(open_flag.get(v, False) for v in interior) else "dual"
        petals.append(Petal(tag, a, b, arc))
    for j in range(len(petals)):
        nxt = petals[(j + 1) % len(petals)]
        if petals[j].tag == nxt.tag:
            return None
    return petals


def explore_inner_flower(config) -> FlowerDomain | None:
    """Inner flower domain from the outer to the inner box of an annulus
    configuration; None when no interface crosses."""
    if isinstance(config, EdgeConfig):
        config = FullConfig(config)
    domain = config.domain
    r, R = _annulus_radii(domain)
    explored, crossings = _explore(config, "outer")
    if not crossings:
        return None
    endpoints = [_corner_ring_vertex(domain, mv, r) for mv in crossings]
    if len(endpoints) % 2:
        raise AssertionError("odd number of crossing interfaces")
    petals = _petals_from_endpoints(config, explored, endpoints, r)
    if petals is None:
        return None
    box = build_box(R)
    blocked = {box.edge_index[domain.edges[e]] for e in explored}
    region = _component(box, (0, 0), blocked)
    return FlowerDomain("inner", r, region, petals, {e: config.value(e) for e in explored}, domain)


def explore_outer_flower(config) -> FlowerDomain | None:
    """Outer flower domain from the inner to the outer box (mirror case)."""
    if isinstance(config, EdgeConfig):
        config = FullConfig(config)
    domain = config.domain
    r, R = _annulus_radii(domain)
    explored, crossings = _explore(config, "inner")
    if not crossings:
        return None
    endpoints = [_corner_ring_vertex(domain, mv, R) for mv in crossings]
    if len(endpoints) % 2:
        raise AssertionError("odd number of crossing interfaces")
    petals = _petals_from_endpoints(config, explored, endpoints, R)
    if petals is None:
        return None
    box = build_box(R)
    blocked = {box.edge_index[domain.edges[e]] for e in explored}
    # the exterior joins every vertex of the outermost ring
    region = _component(box, _ring_vertices(R), blocked)
    return FlowerDomain("outer", R, region, petals, {e: config.value(e) for e in explored}, domain)


def _component(box: Domain, starts, blocked_edges: set) -> set:
    if isinstance(starts, tuple):
        starts = [starts]
    seen = [False] * box.n_vertices
    stack = []
    out = set()
    for s in starts:
        si = box.vertex_index[s]
        if not seen[si]:
            seen[si] = True
            stack.append(si)
            out.add(s)
    while stack:
        u = stack.pop()
        for v, ei in box.adjacency[u]:
            if ei in blocked_edges or seen[v]:
                continue
            seen[v] = True
            out.add(box.vertices[v])
            stack.append(v)
    return out


def well_separated(flower: FlowerDomain, eta: float) -> bool:
    """Distances between distinct endpoints all exceed eta times the core
    scale (coinciding endpoints of a pinched petal are not distinct points)."""
    pts = flower.endpoints
    thresh = eta * flower.core_scale
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if pts[i] == pts[j]:
                continue
            dx = pts[i][0] - pts[j][0]
            dy = pts[i][1] - pts[j][1]
            if math.hypot(dx, dy) <= thresh:
                return False
    return True


def is_boosting_pair(flower: FlowerDomain, bc_low: BoundaryCondition,
                     bc_high: BoundaryCondition) -> bool:
    """xi <= xi', both reducible to boundary conditions coherent with the
    flower, with two primal petals wired in xi' but not in xi."""
    if not bc_low.leq(bc_high):
        return False
    primal = [p for p in flower.petals if p.tag == "primal"]
    if len(primal) < 2:
        return False
    # the low condition must not wire anything outside the primal petals,
    # otherwise no coherent condition sandwiches it from above
    petal_vs = set()
    for p in primal:
        petal_vs.update(p.vertices)
    for cls in bc_low.classes():
        if len(cls) > 1 and not all(v in petal_vs for v in cls):
            return False
    # each primal petal must sit inside one class of the high condition
    def petal_class(bc, petal):
        cs = {bc.labels.get(v, ("s", v)) for v in petal.vertices}
        return cs.pop() if len(cs) == 1 else None
    hi_cls = [petal_class(bc_high, p) for p in primal]
    # contract low classes and petals; i, j form a boosting pair when high
    # wires them and the contraction does not
    n = len(primal)
    uf = UnionFind(n)
    where = {}
    for i, p in enumerate(primal):
        for v in p.vertices:
            where[v] = i
    for cls in bc_low.classes():
        ids = sorted({where[v] for v in cls if v in where})
        for x in ids[1:]:
            uf.union(ids[0], x)
    for i in range(n):
        for j in range(i + 1, n):
            if hi_cls[i] is None or hi_cls[j] is None:
                continue
            if hi_cls[i] == hi_cls[j] and uf.find(i) != uf.find(j):
                return True
    return False


def coherent_conditions(flower: FlowerDomain, region: Domain,
                        join: tuple[int, int] | None = None) -> BoundaryCondition:
    """A boundary condition on the flower's region wiring each primal petal
    internally (optionally joining two of them)."""
    labels = {}
    cls = 0
    primal = [p for p in flower.petals if p.tag == "primal"]
    joined = {}
    for i, p in enumerate(primal):
        c = cls
        if join is not None and i in join:
            if join[0] in joined:
                c = joined[join[0]]
            joined[i] = c
        for v in p.vertices:
            if v in region.vertex_index and v in set(region.boundary):
                labels[v] = c
        cls += 1
    return BoundaryCondition(region, labels, name="coherent")


def double_four_petal(cfg: EdgeConfig) -> dict:
    """Composite query for the double four-petal flower domain between the
    annulus' inner and outer boxes, explored from the geometric-mean scale.

    Returns the pieces and the boolean verdict; no probability bound is
    attached to it.
    """
    domain = cfg.domain
    r, R = _annulus_radii(domain)
    s = int(round(math.sqrt(r * R)))
    if not (r < s < R):
        raise ValueError("annulus too thin for a double flower")
    inner_ann = build_annulus(r, s)
    outer_ann = build_annulus(s, R)

    def restrict(sub: Domain) -> EdgeConfig:
        mask = 0
        for i, e in enumerate(sub.edges):
            if cfg.is_open(domain.edge_index[e]):
                mask |= 1 << i
        return EdgeConfig(sub, mask)

    f_in = explore_inner_flower(restrict(inner_ann))
    f_out = explore_outer_flower(restrict(outer_ann))
    result = {"inner": f_in, "outer": f_out, "exists": False}
    if f_in is None or f_out is None:
        return result
    if f_in.n_petals() != 4 or f_out.n_petals() != 4:
        return result
    if not (well_separated(f_in, 0.5) and well_separated(f_out, 0.5)):
        return result
    middle = {
        v
        for v in domain.vertices
        if v not in f_in.region_vertices and v not in f_out.region_vertices
    }

    def primal_connected(arc_a, arc_b) -> bool:
        allowed = middle | set(arc_a) | set(arc_b)
        uf = UnionFind(domain.n_vertices)
        for e in range(domain.n_edges):
            if not cfg.is_open(e):
                continue
            a, b = domain.edges[e]
            if a in allowed and b in allowed:
                uf.union(domain.vertex_index[a], domain.vertex_index[b])
        ra = {uf.find(domain.vertex_index[v]) for v in arc_a if v in domain.vertex_index}
        rb = {uf.find(domain.vertex_index[v]) for v in arc_b if v in domain.vertex_index}
        return bool(ra & rb)

    def dual_connected(arc_a, arc_b) -> bool:
        # walk dual faces through closed annulus edges avoiding the flowers
        faces: dict[tuple, int] = {}

        def fid(f):
            if f not in faces:
                faces[f] = len(faces)
            return faces[f]

        links = []
        for e in range(domain.n_edges):
            if cfg.is_open(e):
                continue
            (x0, y0), (x1, y1) = sorted(domain.edges[e])
            if (x0, y0) in f_in.region_vertices and (x1, y1) in f_in.region_vertices:
                continue
            if (x0, y0) in f_out.region_vertices and (x1, y1) in f_out.region_vertices:
                continue
            if y0 == y1:
                links.append((fid((x0, y0)), fid((x0, y0 - 1))))
            else:
                links.append((fid((x0, y0)), fid((x0 - 1, y0))))

        def touching(arc):
            out = set()
            for x, y in arc:
                for f in ((x, y), (x - 1, y), (x, y - 1), (x - 1, y - 1)):
                    if f in faces:
                        out.add(faces[f])
            return out

        uf = UnionFind(len(faces))
        for a, b in links:
            uf.union(a, b)
        ra = {uf.find(i) for i in touching(arc_a)}
        rb = {uf.find(i) for i in touching(arc_b)}
        return bool(ra & rb)

    inner_petals = f_in.petals
    outer_petals = f_out.petals
    for shift in range(4):
        ok = True
        for k in range(4):
            pi = inner_petals[k]
            po = outer_petals[(k + shift) % 4]
            if pi.tag != po.tag:
                ok = False
                break
            connected = (
                primal_connected(pi.vertices, po.vertices)
                if pi.tag == "primal"
                else dual_connected(pi.vertices, po.vertices)
            )
            if not connected:
                ok = False
                break
        if ok:
            result["exists"] = True
            result["alignment"] = shift
            return result
    return result
