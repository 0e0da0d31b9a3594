"""Loop representation on the medial graph and the q=4 parafermionic
observable by exact enumeration.

Loops take +-pi/2 turns at medial vertices: a right turn bounces off an open
primal edge, a left turn avoids crossing the dual of a closed edge, and
degree-2 boundary corners force a left turn around the face.  The exploration
path is the loop through the root medial edge e_x; windings are counted in
exact quarter turns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exact import EdgeConfig, ExactOracle, ModelParams, get_oracle, p_c
from .lattice import BoundaryCondition, Domain, MedialGraph


class LoopConfig:
    """Partition of the medial sides into oriented loops."""

    def __init__(self, loops: list[list[int]]):
        self.loops = loops

    @property
    def n_loops(self) -> int:
        return len(self.loops)

    def covered_sides(self) -> list[int]:
        return [s for loop in self.loops for s in loop]

    def loop_through(self, side: int) -> list[int]:
        for loop in self.loops:
            if side in loop:
                return loop
        raise ValueError("side not covered")


def _next_side(med: MedialGraph, s: int, mask: int) -> tuple[int, int]:
    """Follow the strand across the head of side s; returns (side, turn)."""
    e = med.head_edge[s]
    if e < 0:
        return med.next_open[s], +1  # forced corner, same as next_closed
    if (mask >> e) & 1:
        return med.next_open[s], -1
    return med.next_closed[s], +1


def trace_loop(med: MedialGraph, mask: int, start: int):
    """The loop through ``start``: (sides, cumulative turns, total turning).

    ``turns[i]`` counts quarter turns taken strictly before traversing
    ``sides[i]``; the total turning is +-4 for these non-crossing loops.
    """
    sides = [start]
    turns = [0]
    s, t = start, 0
    while True:
        s, dt = _next_side(med, s, mask)
        t += dt
        if s == start:
            return sides, turns, t
        sides.append(s)
        turns.append(t)


def trace_loops(cfg: EdgeConfig, domain: Domain) -> LoopConfig:
    """Full deterministic loop decomposition; covers every side once."""
    med = domain.medial()
    seen = [False] * med.n_sides
    loops = []
    for s0 in range(med.n_sides):
        if seen[s0]:
            continue
        sides, _, _ = trace_loop(med, cfg.mask, s0)
        for s in sides:
            if seen[s]:
                raise AssertionError("side traversed twice")
            seen[s] = True
        loops.append(sides)
    return LoopConfig(loops)


# ---------------------------------------------------------------------------
# exploration path and winding


def infinite_component_exterior(domain: Domain) -> set:
    """Exterior lattice points (within a margin) in the unbounded component
    of the complement; used to pick the root's outer neighbour."""
    x0, y0, x1, y1 = domain.bounding_box()
    lo_x, lo_y, hi_x, hi_y = x0 - 2, y0 - 2, x1 + 2, y1 + 2
    inside = domain.vertex_index
    seen = set()
    start = (lo_x, lo_y)
    stack = [start]
    seen.add(start)
    while stack:
        x, y = stack.pop()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            w = (x + dx, y + dy)
            if w in seen or w in inside:
                continue
            if lo_x <= w[0] <= hi_x and lo_y <= w[1] <= hi_y:
                seen.add(w)
                stack.append(w)
    return seen


def root_side(domain: Domain, x, x_prime=None) -> int:
    """The root medial edge e_x: the ccw side of x's face whose head is the
    midpoint of x x' (x' an outer neighbour in the unbounded complement)."""
    med = domain.medial()
    xi = domain.vertex_index[x]
    if x_prime is None:
        outer = infinite_component_exterior(domain)
        cands = [w for w in domain.exterior_neighbors(x) if w in outer]
        if not cands:
            raise ValueError("x has no neighbour in the unbounded complement")
        x_prime = min(cands)
    m = (x[0] + x_prime[0], x[1] + x_prime[1])
    return med.side_of_face_into(xi, m)


@dataclass
class ExplorationPath:
    domain: Domain
    e_x: int
    sides: list[int]
    turns: list[int]
    total_turning: int

    def winding_quarter_turns(self, side: int) -> int:
        """Quarter turns of the path from ``side`` forward to e_x."""
        if side == self.e_x:
            return 0
        i = self.sides.index(side)
        return self.total_turning - self.turns[i]

    def __contains__(self, side: int) -> bool:
        return side in self.sides


def exploration_path(cfg: EdgeConfig, domain: Domain, x, x_prime=None) -> ExplorationPath:
    med = domain.medial()
    s0 = root_side(domain, x, x_prime)
    sides, turns, total = trace_loop(med, cfg.mask, s0)
    return ExplorationPath(domain, s0, sides, turns, total)


def winding(gamma: ExplorationPath, side: int, e_x: int | None = None) -> float:
    """W_gamma(e, e_x) in radians (left turns minus right turns, times pi/2)."""
    if e_x is not None and e_x != gamma.e_x:
        raise ValueError("gamma is rooted at a different edge")
    return gamma.winding_quarter_turns(side) * math.pi / 2.0


# ---------------------------------------------------------------------------
# exact observable


def _boundary_arc_side(domain: Domain, med: MedialGraph, y) -> int:
    """A representative side of the exterior arc of y's face: the ccw side
    whose head is the midpoint of y y' for the smallest exterior neighbour.
    The path visits all arc sides together, so one side decides A(x, y)."""
    ext = domain.exterior_neighbors(y)
    if not ext:
        raise ValueError(f"{y} has no exterior neighbour")
    yp = min(ext)
    yi = domain.vertex_index[y]
    return med.side_of_face_into(yi, (y[0] + yp[0], y[1] + yp[1]))


def has_opposite_exterior_pair(domain: Domain, y) -> bool:
    """True for the excluded case: y's two neighbours inside the domain are
    exactly opposite each other."""
    ins = [
        (dx, dy)
        for dx, dy in ((1, 0), (0, 1), (-1, 0), (0, -1))
        if (y[0] + dx, y[1] + dy) in domain.vertex_index
    ]
    return len(ins) == 2 and ins[0][0] == -ins[1][0] and ins[0][1] == -ins[1][1]


@dataclass
class ObservableValue:
    """Exact F(e) for every medial side, plus the quantities derived from the
    same enumeration (boundary-passage probabilities, total mass checks)."""

    domain: Domain
    x: object
    e_x: int
    p: float
    values: np.ndarray              # complex, indexed by side id
    passage_prob: dict              # boundary vertex y -> P[A(x, y)]

    def F(self, side: int) -> complex:
        return complex(self.values[side])

    def vertex_residuals(self) -> dict:
        """|sum_i eta(e_i) F(e_i)| over the four sides at each degree-4
        medial vertex, sides in clockwise order with outward eta."""
        med = self.domain.medial()
        incident: dict = {}
        for s in range(med.n_sides):
            for m in (med.side_tail[s], med.side_head[s]):
                if med.medial_vertices[m] >= 0:
                    incident.setdefault(m, set()).add(s)
        out = {}
        for m, sides in incident.items():
            total = 0j
            for s in sides:
                t, h = med.side_tail[s], med.side_head[s]
                other = h if t == m else t
                d = complex(other[0] - m[0], other[1] - m[1])
                eta = d / abs(d)
                total += eta * complex(self.values[s])
            out[m] = abs(total)
        return out

    def max_vertex_residual(self) -> float:
        res = self.vertex_residuals()
        return max(res.values()) if res else 0.0

    def boundary_identity_sum(self) -> float:
        """sum over boundary y != x of (4 - d_y) (pi/2) P[A(x, y)].

        Each passage between y and the outside contributes its winding
        deficit (4 - d_y) quarter turns; at q = 4 and the self-dual point
        the sum equals d_x pi / 2 exactly on every finite domain, hence
        3 pi / 2 for the usual degree-3 root.
        """
        d = self.domain
        total = 0.0
        for y in d.boundary:
            if y == self.x:
                continue
            dy = d.degree[d.vertex_index[y]]
            total += (4 - dy) * self.passage_prob[y]
        return total * math.pi / 2.0

    def boundary_identity_target(self) -> float:
        d = self.domain
        return d.degree[d.vertex_index[self.x]] * math.pi / 2.0


def observable_exact(domain: Domain, x, p: float | None = None,
                     x_prime=None) -> ObservableValue:
    """The q=4 parafermionic observable by full enumeration, free boundary.

    F(e) = phi^0[ W e^{iW} 1_{e in gamma} ] with W the winding of the
    exploration path from e to the root edge.
    """
    if p is None:
        p = p_c(4.0)
    for y in domain.boundary:
        if has_opposite_exterior_pair(domain, y):
            raise ValueError(
                f"boundary vertex {y} has two opposite neighbours; unsupported"
            )
    med = domain.medial()
    params = ModelParams(p, 4.0)
    oracle = get_oracle(domain, BoundaryCondition.free(domain))
    w = oracle.weights(params)
    z = w.sum()
    s0 = root_side(domain, x, x_prime)

    arc_side = {}
    for y in domain.boundary:
        if y != x:
            arc_side[y] = _boundary_arc_side(domain, med, y)

    values = np.zeros(med.n_sides, dtype=np.complex128)
    passage = {y: 0.0 for y in arc_side}
    phase = (1 + 0j, 1j, -1 + 0j, -1j)
    half_pi = math.pi / 2.0
    next_open = med.next_open
    next_closed = med.next_closed
    head_edge = med.head_edge

    for mask in range(oracle.n_masks):
        wm = float(w[mask])
        if wm == 0.0:
            continue
        sides = [s0]
        turns = [0]
        s, t = s0, 0
        while True:
            e = head_edge[s]
            if e >= 0 and (mask >> e) & 1:
                s = next_open[s]
                t -= 1
            else:
                s = next_closed[s]
                t += 1
            if s == s0:
                break
            sides.append(s)
            turns.append(t)
        total = t
        # root edge contributes zero winding; others wind forward to e_x
        for i in range(1, len(sides)):
            wq = total - turns[i]
            values[sides[i]] += wm * (wq * half_pi) * phase[wq & 3]
        on_path = set(sides)
        for y, sy in arc_side.items():
            if sy in on_path:
                passage[y] += wm

    values /= z
    for y in passage:
        passage[y] /= z
    return ObservableValue(domain, x, s0, p, values, passage)


# ---------------------------------------------------------------------------
# topological annuli and the N_Omega quantity


def topological_annulus(R: int, hole_halfwidth: int | None = None,
                        hole_shape: str = "box") -> Domain:
    """Lambda_R minus a simply connected hole H with R/8 <= hole <= R/4."""
    if R < 8:
        raise ValueError("R too small for a topological annulus")
    lo, hi = R // 8, R // 4
    if hole_halfwidth is None:
        hole_halfwidth = hi
    if not (lo <= hole_halfwidth <= hi):
        raise ValueError("hole must sit between Lambda_{R/8} and Lambda_{R/4}")
    s = hole_halfwidth
    if hole_shape == "box":
        hole = {(x, y) for x in range(-s, s + 1) for y in range(-s, s + 1)}
    elif hole_shape == "cross":
        t = max(lo, s * 3 // 4)
        hole = {(x, y) for x in range(-s, s + 1) for y in range(-t, t + 1)}
        hole |= {(x, y) for x in range(-t, t + 1) for y in range(-s, s + 1)}
    else:
        raise ValueError(f"unknown hole shape {hole_shape!r}")
    verts = [
        (x, y)
        for x in range(-R, R + 1)
        for y in range(-R, R + 1)
        if (x, y) not in hole
    ]
    return Domain(verts)


def inner_boundary(domain: Domain, R: int) -> list:
    return [v for v in domain.boundary if max(abs(v[0]), abs(v[1])) < R]


def n_omega_estimate(region: Domain, params: ModelParams, R: int,
                     budget: int, seed: int, burn_in: int | None = None):
    """Monte Carlo estimate of the expected number of inner-boundary vertices
    joined to the boundary of Lambda_{R/2}; one chain estimates the whole sum
    since a sum of connection probabilities is an expectation of a count."""
    from .sampler import mc_estimate

    inner = [region.vertex_index[v] for v in inner_boundary(region, R)]
    half = [
        region.vertex_index[v]
        for v in region.vertices
        if max(abs(v[0]), abs(v[1])) == R // 2
    ]
    if not inner or not half:
        raise ValueError("region is not a topological R-annulus")
    inner_arr = np.array(inner)
    half_arr = np.array(half)

    def count_connected(labels: np.ndarray) -> np.ndarray:
        # labels: (n_chains, n_vertices) component labels of the open graph
        tgt = labels[:, half_arr]
        out = np.zeros(labels.shape[0])
        for i in inner_arr:
            li = labels[:, i][:, None]
            out += (tgt == li).any(axis=1)
        return out

    return mc_estimate(
        region, BoundaryCondition.free(region), params,
        observable=count_connected, needs_labels=True,
        budget=budget, burn_in=burn_in, seed=seed,
    )
