"""Finite subgraphs of Z^2: boxes, annuli, quads, boundary partitions, dual and
medial graphs.

Conventions used throughout the package:

* vertices are integer pairs ``(x, y)``;
* edges are indexed densely ``0..|E|-1``, sorted row-major by their lower-left
  endpoint (key ``(y, x)``), horizontal before vertical at the same endpoint;
* medial coordinates are doubled, so the midpoint of an edge is the sum of its
  endpoints and every medial vertex has integer coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

Coord = tuple[int, int]

_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _edge_key(u: Coord, v: Coord):
    (x0, y0), (x1, y1) = sorted((u, v))
    horizontal = y0 == y1
    return (y0, x0, 0 if horizontal else 1)


class Domain:
    """A finite connected subgraph of Z^2 spanned by a vertex set.

    The boundary consists of the vertices with degree <= 3.
    """

    def __init__(self, vertices):
        vs = sorted(set(map(tuple, vertices)), key=lambda v: (v[1], v[0]))
        self.vertices: list[Coord] = vs
        self.vertex_index = {v: i for i, v in enumerate(vs)}
        edges = []
        for v in vs:
            for dx, dy in ((1, 0), (0, 1)):
                w = (v[0] + dx, v[1] + dy)
                if w in self.vertex_index:
                    edges.append((v, w))
        edges.sort(key=lambda e: _edge_key(*e))
        self.edges: list[tuple[Coord, Coord]] = edges
        self.edge_index = {}
        for i, (u, v) in enumerate(edges):
            self.edge_index[(u, v)] = i
            self.edge_index[(v, u)] = i
        self.n_vertices = len(vs)
        self.n_edges = len(edges)
        self.adjacency = [[] for _ in vs]  # (neighbour vertex idx, edge idx)
        for i, (u, v) in enumerate(edges):
            ui, vi = self.vertex_index[u], self.vertex_index[v]
            self.adjacency[ui].append((vi, i))
            self.adjacency[vi].append((ui, i))
        self.degree = [len(a) for a in self.adjacency]
        self.boundary: list[Coord] = [v for i, v in enumerate(vs) if self.degree[i] <= 3]
        self._medial = None
        self._dual = None

    # -- basic queries -------------------------------------------------

    def is_connected(self) -> bool:
        if self.n_vertices == 0:
            return False
        seen = [False] * self.n_vertices
        stack = [0]
        seen[0] = True
        n = 1
        while stack:
            u = stack.pop()
            for v, _ in self.adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    n += 1
                    stack.append(v)
        return n == self.n_vertices

    def endpoints(self, e: int) -> tuple[int, int]:
        u, v = self.edges[e]
        return self.vertex_index[u], self.vertex_index[v]

    def edge_array(self):
        """(|E|, 2) int array of endpoint vertex indices."""
        import numpy as np

        return np.array([self.endpoints(e) for e in range(self.n_edges)], dtype=np.int64)

    def bounding_box(self):
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def exterior_neighbors(self, v: Coord) -> list[Coord]:
        return [
            (v[0] + dx, v[1] + dy)
            for dx, dy in _STEPS
            if (v[0] + dx, v[1] + dy) not in self.vertex_index
        ]

    def __eq__(self, other):
        return isinstance(other, Domain) and self.vertices == other.vertices and self.edges == other.edges

    def __hash__(self):
        return hash((tuple(self.vertices), self.n_edges))

    def __repr__(self):
        return f"Domain({self.n_vertices} vertices, {self.n_edges} edges)"

    # -- serialization (plain text, bit-exact round trip) ---------------

    def serialize(self) -> str:
        lines = [f"V {self.n_vertices} E {self.n_edges}"]
        lines += [f"{x} {y}" for x, y in self.vertices]
        lines += [f"{self.vertex_index[u]} {self.vertex_index[v]}" for u, v in self.edges]
        return "\n".join(lines) + "\n"

    @staticmethod
    def deserialize(text: str) -> "Domain":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        nv, ne = int(head[1]), int(head[3])
        vs = [tuple(map(int, ln.split())) for ln in lines[1 : 1 + nv]]
        d = Domain(vs)
        if d.n_vertices != nv or d.n_edges != ne:
            raise ValueError("inconsistent serialized domain")
        # spanned subgraphs reproduce their edge list; verify indices agree
        for k, ln in enumerate(lines[1 + nv : 1 + nv + ne]):
            i, j = map(int, ln.split())
            if d.edge_index[(vs[i], vs[j])] != k:
                raise ValueError("edge order mismatch")
        return d

    # -- derived graphs --------------------------------------------------

    def medial(self) -> "MedialGraph":
        if self._medial is None:
            self._medial = MedialGraph(self)
        return self._medial

    def dual(self) -> "DualGraph":
        if self._dual is None:
            self._dual = DualGraph(self)
        return self._dual


def build_box(n: int, center: Coord = (0, 0)) -> Domain:
    """The box spanned by {-n..n}^2, optionally recentred."""
    if n < 0:
        raise ValueError("n must be >= 0")
    cx, cy = center
    return Domain([(cx + x, cy + y) for x in range(-n, n + 1) for y in range(-n, n + 1)])


def build_annulus(r: int, R: int) -> Domain:
    """Ann(r, R): the box of size R minus the box of size r-1."""
    if not (1 <= r < R):
        raise ValueError("need 1 <= r < R")
    return Domain(
        [
            (x, y)
            for x in range(-R, R + 1)
            for y in range(-R, R + 1)
            if max(abs(x), abs(y)) >= r
        ]
    )


def build_rect(w: int, h: int, corner: Coord = (0, 0)) -> Domain:
    """Rectangle [0,w] x [0,h] translated to ``corner``."""
    if w < 0 or h < 0:
        raise ValueError("negative rectangle")
    cx, cy = corner
    return Domain([(cx + x, cy + y) for x in range(w + 1) for y in range(h + 1)])


def dual_p(p: float, q: float) -> float:
    """Dual edge parameter: p* p / ((1-p*)(1-p)) = q."""
    if p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 0.0
    a = q * (1.0 - p)
    return a / (a + p)


# ---------------------------------------------------------------------------
# boundary conditions


class BoundaryCondition:
    """A partition of the boundary vertices (optionally including the ghost).

    ``labels`` maps boundary vertex -> partition class id.  Vertices absent
    from ``labels`` are singletons.  The ghost vertex is represented by the
    key ``"ghost"`` when it participates in a class.
    """

    GHOST = "ghost"

    def __init__(self, domain: Domain, labels: dict, name: str = "custom"):
        self.domain = domain
        bset = set(domain.boundary)
        for v in labels:
            if v != self.GHOST and v not in bset:
                raise ValueError(f"{v} is not a boundary vertex")
        # canonicalize class ids by first appearance in boundary order
        order = list(domain.boundary) + [self.GHOST]
        remap, canon = {}, {}
        for v in order:
            if v in labels:
                c = labels[v]
                if c not in remap:
                    remap[c] = len(remap)
                canon[v] = remap[c]
        self.labels = canon
        self.name = name

    @staticmethod
    def free(domain: Domain) -> "BoundaryCondition":
        return BoundaryCondition(domain, {}, name="free")

    @staticmethod
    def wired(domain: Domain, ghost: bool = False) -> "BoundaryCondition":
        labels = {v: 0 for v in domain.boundary}
        if ghost:
            labels[BoundaryCondition.GHOST] = 0
        return BoundaryCondition(domain, labels, name="wired")

    def classes(self) -> list[list]:
        out: dict[int, list] = {}
        for v, c in self.labels.items():
            out.setdefault(c, []).append(v)
        return [out[c] for c in sorted(out)]

    def class_of(self, v):
        return self.labels.get(v)

    def key(self):
        return (self.name, tuple(sorted((str(v), c) for v, c in self.labels.items())))

    def leq(self, other: "BoundaryCondition") -> bool:
        """True iff every class of self is contained in a class of other."""
        if self.domain is not other.domain and self.domain != other.domain:
            raise ValueError("boundary conditions on different domains")
        for cls in self.classes():
            if len(cls) < 2:
                continue
            tgt = {other.labels.get(v, ("s", str(v))) for v in cls}
            if len(tgt) != 1:
                return False
        return True

    def __repr__(self):
        return f"BoundaryCondition({self.name}, {len(self.classes())} nontrivial classes)"


# ---------------------------------------------------------------------------
# quads


def boundary_cycle(domain: Domain) -> list[Coord]:
    """Counterclockwise cycle of boundary vertices for a simple-boundary domain.

    Traces the outer face of the planar embedding; raises if the boundary is
    not a simple cycle (pinch vertices, trees, holes).
    """
    if domain.n_edges < 4:
        raise ValueError("domain too small for a boundary cycle")
    # start at the lowest-leftmost vertex; its outgoing boundary edges exist
    start = min(domain.vertices, key=lambda v: (v[1], v[0]))
    # walk keeping the exterior on the right: standard rightmost-turn rule
    # relative to the incoming direction, which traces the outer face ccw.
    def next_dir(v, incoming):
        # try turns: right, straight, left, back relative to incoming
        dirs = []
        ix, iy = incoming
        right = (iy, -ix)
        left = (-iy, ix)
        back = (-ix, -iy)
        for d in (right, (ix, iy), left, back):
            w = (v[0] + d[0], v[1] + d[1])
            if w in domain.vertex_index:
                dirs.append(d)
        if not dirs:
            raise ValueError("dead end while tracing boundary")
        return dirs[0]

    # first step: from start, go along +x if possible (start is a lower-left
    # corner so +x exists for any domain with area)
    if (start[0] + 1, start[1]) in domain.vertex_index:
        d = (1, 0)
    else:
        d = (0, 1)
    cycle = [start]
    v = (start[0] + d[0], start[1] + d[1])
    incoming = d
    guard = 0
    while v != start:
        cycle.append(v)
        incoming = next_dir(v, incoming)
        v = (v[0] + incoming[0], v[1] + incoming[1])
        guard += 1
        if guard > 8 * domain.n_vertices:
            raise ValueError("boundary trace did not close")
    # signed area check: ensure counterclockwise
    area = 0
    for i in range(len(cycle)):
        x0, y0 = cycle[i]
        x1, y1 = cycle[(i + 1) % len(cycle)]
        area += x0 * y1 - x1 * y0
    if area < 0:
        cycle = [cycle[0]] + cycle[:0:-1]
    if len(set(cycle)) != len(cycle) or set(cycle) != set(domain.boundary):
        raise ValueError("boundary is not a simple cycle")
    return cycle


class Quad:
    """A domain with simple-path boundary and four marked boundary vertices.

    Marks a, b, c, d sit on the boundary cycle in counterclockwise order and
    cut it into the arcs (ab), (bc), (cd), (da), stored half-open
    [mark, next mark).  The crossing event connects (ab) to (cd).
    """

    def __init__(self, domain: Domain, a: Coord, b: Coord, c: Coord, d: Coord):
        self.domain = domain
        self.cycle = boundary_cycle(domain)
        pos = {v: i for i, v in enumerate(self.cycle)}
        marks = (a, b, c, d)
        for m in marks:
            if m not in pos:
                raise ValueError(f"mark {m} not on boundary cycle")
        self.marks = marks
        idx = [pos[m] for m in marks]
        rel = [(idx[k] - idx[0]) % len(self.cycle) for k in range(4)]
        if not (0 < rel[1] < rel[2] < rel[3]):
            raise ValueError("marks not in counterclockwise order")
        if rel[1] == 0 or rel[2] == rel[1] or rel[3] == rel[2] or rel[3] == len(self.cycle):
            raise ValueError("degenerate quad arc")
        self._arc_bounds = (idx[0], idx[1], idx[2], idx[3])

    def arc(self, name: str) -> list[Coord]:
        i = {"ab": 0, "bc": 1, "cd": 2, "da": 3}[name]
        n = len(self.cycle)
        lo = self._arc_bounds[i]
        hi = self._arc_bounds[(i + 1) % 4]
        out = []
        k = lo
        while True:
            out.append(self.cycle[k])
            if k == hi:
                break
            k = (k + 1) % n
        return out

    def arc_edges(self, name: str) -> list[int]:
        vs = self.arc(name)
        return [self.domain.edge_index[(vs[i], vs[i + 1])] for i in range(len(vs) - 1)]


def box_quad(n: int, center: Coord = (0, 0)) -> Quad:
    """The box Lambda_n as a quad, corners marked ccw from the bottom-right."""
    cx, cy = center
    d = build_box(n, center)
    return Quad(d, (cx + n, cy - n), (cx + n, cy + n), (cx - n, cy + n), (cx - n, cy - n))


def rect_quad(w: int, h: int, corner: Coord = (0, 0)) -> Quad:
    """Rectangle quad; (ab) is the right side, so crossing is left-right."""
    cx, cy = corner
    d = build_rect(w, h, corner)
    return Quad(d, (cx + w, cy), (cx + w, cy + h), (cx, cy + h), (cx, cy))


def eta_regular(quad: Quad, eta: float, R: int) -> bool:
    """Whether the quad is a union of side-eta*R grid squares inside Lambda_R
    with all four marks on the eta*R grid."""
    if eta <= 0 or R < 1:
        raise ValueError("need eta > 0 and R >= 1")
    s = eta * R
    if abs(s - round(s)) > 1e-9:
        return False
    s = int(round(s))
    if s == 0:
        return False
    verts = set(quad.domain.vertices)
    for x, y in verts:
        if max(abs(x), abs(y)) > R:
            return False
    for m in quad.marks:
        if m[0] % s or m[1] % s:
            return False
    # collect grid tiles fully contained in the domain, then check coverage
    covered = set()
    tiles = {(x // s, y // s) for x, y in verts if x % s == 0 and y % s == 0}
    cand = set()
    for tx, ty in tiles:
        cand.update({(tx, ty), (tx - 1, ty), (tx, ty - 1), (tx - 1, ty - 1)})
    for tx, ty in cand:
        tile = {(tx * s + i, ty * s + j) for i in range(s + 1) for j in range(s + 1)}
        if tile <= verts:
            covered |= tile
    return covered == verts


# ---------------------------------------------------------------------------
# medial graph


class MedialGraph:
    """Oriented medial graph of a domain, with precomputed tracing tables.

    Each primal vertex contributes the four sides of its medial face,
    oriented counterclockwise.  Directed side ids are ``4*vi + k`` with
    ``k = 0..3`` for the sides E->N, N->W, W->S, S->E of vertex ``vi``.

    ``next_open[s]`` / ``next_closed[s]`` give the side following ``s`` when
    the primal edge under the head of ``s`` is open / closed; at degree-2
    medial vertices both agree (forced left turn around the face).
    Turn bookkeeping: left = +1, right = -1 (quarter turns).
    """

    _CORNER = ((1, 0), (0, 1), (-1, 0), (0, -1))  # E, N, W, S offsets

    def __init__(self, domain: Domain):
        self.domain = domain
        nv = domain.n_vertices
        self.n_sides = 4 * nv
        # medial vertices: midpoint (doubled coords) -> incident primal edge
        # index, or -1 when only one endpoint lies in the domain (degree 2)
        self.medial_vertices: dict[Coord, int] = {}
        deg: dict[Coord, int] = {}
        for vi, v in enumerate(domain.vertices):
            for dx, dy in self._CORNER:
                m = (2 * v[0] + dx, 2 * v[1] + dy)
                deg[m] = deg.get(m, 0) + 2
                w = (v[0] + dx, v[1] + dy)
                if (v, w) in domain.edge_index:
                    self.medial_vertices[m] = domain.edge_index[(v, w)]
                else:
                    self.medial_vertices.setdefault(m, -1)
        self.medial_degree = deg

        def corner(vi, k):
            v = domain.vertices[vi]
            dx, dy = self._CORNER[k]
            return (2 * v[0] + dx, 2 * v[1] + dy)

        # tail/head medial vertices of each directed side
        self.side_tail = [None] * self.n_sides
        self.side_head = [None] * self.n_sides
        for vi in range(nv):
            for k in range(4):
                s = 4 * vi + k
                self.side_tail[s] = corner(vi, k)
                self.side_head[s] = corner(vi, (k + 1) % 4)
        # sides arriving at each medial vertex
        in_sides: dict[Coord, list[int]] = {}
        for s in range(self.n_sides):
            in_sides.setdefault(self.side_head[s], []).append(s)
        out_sides: dict[Coord, list[int]] = {}
        for s in range(self.n_sides):
            out_sides.setdefault(self.side_tail[s], []).append(s)

        self.head_edge = [self.medial_vertices[self.side_head[s]] for s in range(self.n_sides)]
        self.next_open = [0] * self.n_sides
        self.next_closed = [0] * self.n_sides

        def direction(s):
            t, h = self.side_tail[s], self.side_head[s]
            return (h[0] - t[0], h[1] - t[1])

        def rotate(d, turn):
            dx, dy = d
            return (-dy, dx) if turn > 0 else (dy, -dx)

        for s in range(self.n_sides):
            m = self.side_head[s]
            d = direction(s)
            outs = out_sides.get(m, [])
            if self.medial_vertices[m] == -1:
                # degree-2 corner: forced left turn, stay on the same face
                nxt = [t for t in outs if t // 4 == s // 4]
                assert len(nxt) == 1
                self.next_open[s] = self.next_closed[s] = nxt[0]
            else:
                want_left = rotate(d, +1)
                want_right = rotate(d, -1)
                left = [t for t in outs if direction(t) == want_left]
                right = [t for t in outs if direction(t) == want_right]
                assert len(left) == 1 and len(right) == 1, "medial vertex not degree 4"
                self.next_closed[s] = left[0]   # avoid crossing the dual edge
                self.next_open[s] = right[0]    # bounce off the open edge

        # boundary sides C: exactly one endpoint of degree two
        self.boundary_sides = []
        self.eta = {}
        for s in range(self.n_sides):
            d2t = self.medial_vertices[self.side_tail[s]] == -1
            d2h = self.medial_vertices[self.side_head[s]] == -1
            if d2t != d2h:
                self.boundary_sides.append(s)
                t, h = self.side_tail[s], self.side_head[s]
                dx, dy = (h[0] - t[0], h[1] - t[1]) if d2h else (t[0] - h[0], t[1] - h[1])
                n = math.hypot(dx, dy)
                self.eta[s] = complex(dx / n, dy / n)

    def undirected_key(self, s: int):
        """Canonical key identifying the side geometrically."""
        t, h = self.side_tail[s], self.side_head[s]
        return (t, h) if t <= h else (h, t)

    def interior_medial_vertices(self) -> list[Coord]:
        return [m for m, e in self.medial_vertices.items() if e >= 0]

    def degree_profile(self) -> dict[int, int]:
        prof: dict[int, int] = {}
        for m in self.medial_vertices:
            dg = 4 if self.medial_vertices[m] >= 0 else 2
            prof[dg] = prof.get(dg, 0) + 1
        return prof

    def face_sides(self, vi: int) -> list[int]:
        return [4 * vi + k for k in range(4)]

    def side_of_face_into(self, vi: int, m: Coord) -> int:
        """The ccw side of vertex ``vi``'s face whose head is medial vertex m."""
        for s in self.face_sides(vi):
            if self.side_head[s] == m:
                return s
        raise ValueError("medial vertex not on this face")


# ---------------------------------------------------------------------------
# dual graph


@dataclass(frozen=True)
class DualEdge:
    a: object           # face coord or DualGraph.HUB
    b: object
    crossing: tuple     # the primal edge (u, v) this dual edge crosses


class DualGraph:
    """Planar dual of a domain: one vertex per interior face plus a hub for
    the outer face.  Dual edges are tagged with the primal edge they cross,
    which makes the primal reconstructible from the dual alone.
    """

    HUB = "outer"

    def __init__(self, domain: Domain):
        self.domain = domain
        faces = set()
        vset = domain.vertex_index
        for x, y in domain.vertices:
            # candidate face with lower-left corner (x, y)
            if (
                (x + 1, y) in vset
                and (x, y + 1) in vset
                and (x + 1, y + 1) in vset
                and ((x, y), (x + 1, y)) in domain.edge_index
                and ((x, y), (x, y + 1)) in domain.edge_index
                and ((x + 1, y), (x + 1, y + 1)) in domain.edge_index
                and ((x, y + 1), (x + 1, y + 1)) in domain.edge_index
            ):
                faces.add((x, y))
        self.faces = sorted(faces, key=lambda f: (f[1], f[0]))
        self.dual_edges: list[DualEdge] = []
        for u, v in domain.edges:
            (x0, y0), (x1, y1) = sorted((u, v))
            if y0 == y1:  # horizontal edge: faces above and below
                fa, fb = (x0, y0), (x0, y0 - 1)
            else:  # vertical edge: faces right and left
                fa, fb = (x0, y0), (x0 - 1, y0)
            a = fa if fa in faces else self.HUB
            b = fb if fb in faces else self.HUB
            self.dual_edges.append(DualEdge(a, b, ((x0, y0), (x1, y1))))
        self.n_dual_vertices = len(self.faces) + 1

    def dual_vertex_index(self, f) -> int:
        if f == self.HUB:
            return len(self.faces)
        return self.faces.index(f)

    def edge_pairs(self):
        """Dual edges as index pairs (hub last); self-loops kept."""
        idx = {f: i for i, f in enumerate(self.faces)}
        idx[self.HUB] = len(self.faces)
        return [(idx[de.a], idx[de.b]) for de in self.dual_edges]

    def reconstruct_primal(self) -> Domain:
        """Rebuild the primal domain from the dual-edge crossing tags only."""
        verts = set()
        for de in self.dual_edges:
            verts.update(de.crossing)
        return Domain(verts)

    def double_dual_edge_map(self) -> dict[int, int]:
        """e -> index of e in the reconstructed primal; identity when the
        reconstruction reproduces the domain."""
        re = self.reconstruct_primal()
        return {
            i: re.edge_index[de.crossing]
            for i, de in enumerate(self.dual_edges)
        }
