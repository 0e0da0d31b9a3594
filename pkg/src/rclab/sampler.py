"""Monte Carlo samplers for the random-cluster measure.

Two dynamics target phi^xi_{G,p,q,h}:

* single-edge heat bath — each edge is resampled from its exact conditional
  (p when the endpoints are joined off the edge through omega and the
  wirings, else p/(p+(1-p)q)); the reference dynamics, valid for h >= 0 with
  ghost edges treated as ordinary dynamic edges of weight 1 - e^{-h};
* Chayes-Machta cluster updates — clusters of omega^xi are activated with
  probability 1/q and the active region is resampled as Bernoulli(p);
  requires h = 0, reduces to independent resampling at q = 1.

Vectorized many-chain variants drive the statistical acceptance checks on
small domains; a scipy-backed single chain handles large lattices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .exact import EdgeConfig, ModelParams, UnionFind, _wiring_pairs
from .lattice import BoundaryCondition, Domain
from .rng import sweep_generator
from .stats import BudgetError, Estimate, batch_means, estimate_tau_int, from_batches


def _ghost_p(h: float) -> float:
    return -np.expm1(-h)  # 1 - e^{-h}


@dataclass
class ChainState:
    domain: Domain
    bc: BoundaryCondition
    params: ModelParams
    open: np.ndarray                 # (n_edges,) uint8
    ghost_open: np.ndarray | None    # (n_vertices,) uint8 when h > 0
    seed: int
    stream: int = 0
    sweep_count: int = 0
    algo: str = "heatbath"
    _labels: np.ndarray | None = field(default=None, repr=False)

    def config(self) -> EdgeConfig:
        mask = 0
        for e in np.nonzero(self.open)[0]:
            mask |= 1 << int(e)
        return EdgeConfig(self.domain, mask)

    def invalidate(self):
        self._labels = None


def init_chain(domain: Domain, bc: BoundaryCondition, params: ModelParams,
               seed: int, start: str = "random", algo: str = "heatbath",
               stream: int = 0) -> ChainState:
    gen = sweep_generator(seed, 0, stream=stream + 7)
    m = domain.n_edges
    if start == "empty":
        open_ = np.zeros(m, dtype=np.uint8)
    elif start == "full":
        open_ = np.ones(m, dtype=np.uint8)
    elif start == "random":
        open_ = (gen.random(m) < params.p).astype(np.uint8)
    else:
        raise ValueError(f"unknown start {start!r}")
    ghost = None
    if params.h > 0.0:
        ghost = (gen.random(domain.n_vertices) < _ghost_p(params.h)).astype(np.uint8)
    return ChainState(domain, bc, params, open_, ghost, seed, stream, 0, algo)


# ---------------------------------------------------------------------------
# connectivity queries (single chain)


def connected_off_edge(state: ChainState, e: int) -> bool:
    """BFS from one endpoint avoiding e, with early exit; wirings act as
    jumps between class members and the ghost is one extra vertex."""
    d = state.domain
    a, b = d.endpoints(e)
    n = d.n_vertices
    ghost = n
    use_ghost = state.ghost_open is not None
    classmates: dict[int, list[int]] = {}
    for x, y in _wiring_pairs(d, state.bc, ghost if use_ghost else None):
        classmates.setdefault(x, []).append(y)
        classmates.setdefault(y, []).append(x)
    seen = [False] * (n + 1)
    seen[a] = True
    stack = [a]
    while stack:
        u = stack.pop()
        if u == b:
            return True
        neighbours = []
        if u == ghost:
            neighbours = [v for v in range(n) if state.ghost_open[v]]
        else:
            for v, ei in d.adjacency[u]:
                if ei != e and state.open[ei]:
                    neighbours.append(v)
            if use_ghost and state.ghost_open[u]:
                neighbours.append(ghost)
        neighbours.extend(classmates.get(u, ()))
        for v in neighbours:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return seen[b]


def connected_off_edge_uf(state: ChainState, e: int) -> bool:
    """Independent union-find implementation of the same query."""
    d = state.domain
    n = d.n_vertices
    use_ghost = state.ghost_open is not None
    uf = UnionFind(n + (1 if use_ghost else 0))
    for x, y in _wiring_pairs(d, state.bc, n if use_ghost else None):
        uf.union(x, y)
    for ei in range(d.n_edges):
        if ei != e and state.open[ei]:
            uf.union(*d.endpoints(ei))
    if use_ghost:
        for v in range(n):
            if state.ghost_open[v]:
                uf.union(v, n)
    a, b = d.endpoints(e)
    return uf.find(a) == uf.find(b)


def _ghost_connected_off(state: ChainState, v: int) -> bool:
    """Is v joined to the ghost without its own ghost edge?"""
    d = state.domain
    n = d.n_vertices
    saved = state.ghost_open[v]
    state.ghost_open[v] = 0
    try:
        uf = UnionFind(n + 1)
        for x, y in _wiring_pairs(d, state.bc, n):
            uf.union(x, y)
        for ei in range(d.n_edges):
            if state.open[ei]:
                uf.union(*d.endpoints(ei))
        for u in range(n):
            if state.ghost_open[u]:
                uf.union(u, n)
        return uf.find(v) == uf.find(n)
    finally:
        state.ghost_open[v] = saved


# ---------------------------------------------------------------------------
# single-chain dynamics


def heat_bath_sweep(state: ChainState, params: ModelParams | None = None,
                    bc: BoundaryCondition | None = None) -> ChainState:
    """One deterministic-order sweep of single-edge heat-bath updates."""
    if params is not None:
        state.params = params
    if bc is not None:
        state.bc = bc
    pr = state.params
    d = state.domain
    n_bits = d.n_edges + (d.n_vertices if state.ghost_open is not None else 0)
    u = sweep_generator(state.seed, state.sweep_count, state.stream).random(n_bits)
    for e in range(d.n_edges):
        conn = connected_off_edge(state, e)
        p_open = pr.p if conn else pr.p / (pr.p + (1.0 - pr.p) * pr.q)
        state.open[e] = 1 if u[e] >= 1.0 - p_open else 0
    if state.ghost_open is not None:
        pg = _ghost_p(pr.h)
        for v in range(d.n_vertices):
            conn = _ghost_connected_off(state, v)
            p_open = pg if conn else pg / (pg + (1.0 - pg) * pr.q)
            state.ghost_open[v] = 1 if u[d.n_edges + v] >= 1.0 - p_open else 0
    state.sweep_count += 1
    state.invalidate()
    return state


def _component_labels_single(domain: Domain, open_: np.ndarray,
                             bc: BoundaryCondition | None) -> np.ndarray:
    """Min-vertex component labels of the open subgraph (plus wirings)."""
    n = domain.n_vertices
    ep = domain.edge_array()
    idx = np.nonzero(open_)[0]
    rows = ep[idx, 0]
    cols = ep[idx, 1]
    if bc is not None:
        wires = _wiring_pairs(domain, bc, None)
        if wires:
            wa = np.array([w[0] for w in wires])
            wb = np.array([w[1] for w in wires])
            rows = np.concatenate([rows, wa])
            cols = np.concatenate([cols, wb])
    g = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    _, lab = connected_components(g, directed=False)
    rep = np.full(lab.max() + 1, n, dtype=np.int64)
    np.minimum.at(rep, lab, np.arange(n))
    return rep[lab]


def chayes_machta_step(state: ChainState, params: ModelParams | None = None,
                       bc: BoundaryCondition | None = None) -> ChainState:
    """One cluster-coloring update; stationary for phi^xi_{G,p,q}, h = 0."""
    if params is not None:
        state.params = params
    if bc is not None:
        state.bc = bc
    pr = state.params
    if pr.h != 0.0 or state.ghost_open is not None:
        raise ValueError("Chayes-Machta requires h = 0")
    d = state.domain
    gen = sweep_generator(state.seed, state.sweep_count, state.stream)
    u_act = gen.random(d.n_vertices)
    u_edge = gen.random(d.n_edges)
    labels = _component_labels_single(d, state.open, state.bc)
    active = u_act[labels] < 1.0 / pr.q
    ep = d.edge_array()
    both = active[ep[:, 0]] & active[ep[:, 1]]
    state.open = np.where(both, (u_edge < pr.p).astype(np.uint8), state.open)
    state.sweep_count += 1
    state.invalidate()
    return state


def chain_labels(state: ChainState, wirings: bool = True) -> np.ndarray:
    bc = state.bc if wirings else None
    return _component_labels_single(state.domain, state.open, bc)


def step(state: ChainState) -> ChainState:
    if state.algo == "heatbath":
        return heat_bath_sweep(state)
    if state.algo == "cm":
        return chayes_machta_step(state)
    raise ValueError(f"unknown algo {state.algo!r}")


def default_burn_in(domain: Domain, bc: BoundaryCondition, params: ModelParams,
                    seed: int, algo: str = "heatbath", pilot: int = 512) -> int:
    """20x the integrated autocorrelation time of a central edge observable,
    floored at 1000 sweeps (the dynamics are an engineering choice, so the
    threshold is deliberately conservative)."""
    st = init_chain(domain, bc, params, seed ^ 0xB0F, algo=algo)
    e = domain.n_edges // 2
    vals = np.empty(pilot)
    for i in range(pilot):
        step(st)
        vals[i] = st.open[e]
    tau = estimate_tau_int(vals)
    return max(1000, int(np.ceil(20.0 * tau)))


def estimate(event, params: ModelParams, domain: Domain, bc: BoundaryCondition,
             budget: int, burn_in: int | None, seed: int,
             algo: str = "heatbath", stream: int = 0) -> Estimate:
    """Batch-means estimate of P[event] (or E of a real observable).

    Deterministic given (seed, budget, burn_in, edge order); the event sees
    one EdgeConfig per sweep after burn-in.
    """
    if burn_in is None:
        burn_in = default_burn_in(domain, bc, params, seed, algo)
    if budget <= burn_in:
        raise BudgetError("budget must exceed burn-in")
    st = init_chain(domain, bc, params, seed, algo=algo, stream=stream)
    for _ in range(burn_in):
        step(st)
    vals = np.empty(budget - burn_in)
    for i in range(budget - burn_in):
        step(st)
        vals[i] = float(event(st.config()))
    est = from_batches(vals, seed, params=params,
                       meta={"algo": algo, "burn_in": burn_in, "bc": bc.name})
    return est


def mc_estimate(domain: Domain, bc: BoundaryCondition, params: ModelParams,
                observable, needs_labels: bool, budget: int,
                burn_in: int | None, seed: int, algo: str = "cm",
                stream: int = 0, thin: int = 1) -> Estimate:
    """Single-chain batch-means estimate of a vectorized observable.

    ``observable`` receives either component labels shaped (1, n_vertices)
    or the open-edge array shaped (1, n_edges) and returns one value.
    """
    if burn_in is None:
        burn_in = max(1000, budget // 10)
    if budget <= burn_in:
        raise BudgetError("budget must exceed burn-in")
    st = init_chain(domain, bc, params, seed, algo=algo, stream=stream)
    for _ in range(burn_in):
        step(st)
    n = (budget - burn_in) // thin
    vals = np.empty(n)
    for i in range(n):
        for _ in range(thin):
            step(st)
        if needs_labels:
            arg = chain_labels(st, wirings=False)[None, :]
        else:
            arg = st.open[None, :]
        vals[i] = float(np.asarray(observable(arg)).reshape(-1)[0])
    return from_batches(vals, seed, params=params,
                        meta={"algo": algo, "burn_in": burn_in, "thin": thin,
                              "bc": bc.name})


# ---------------------------------------------------------------------------
# vectorized many-chain engine (small domains)


class VectorChains:
    """N independent chains advanced in lockstep with shared sweep uniforms.

    Shared uniforms make paired runs (wired vs free) common-random-number
    coupled: construct two VectorChains with the same (seed, stream).
    """

    def __init__(self, domain: Domain, bc: BoundaryCondition, params: ModelParams,
                 n_chains: int, seed: int, algo: str = "heatbath",
                 stream: int = 0, start: str = "random"):
        self.domain = domain
        self.bc = bc
        self.params = params
        self.n = n_chains
        self.seed = seed
        self.stream = stream
        self.algo = algo
        self.sweep_count = 0
        d = domain
        self.m = d.n_edges
        self.nv = d.n_vertices
        self.use_ghost = params.h > 0.0
        self.n_labels = self.nv + (1 if self.use_ghost else 0)
        self.ep = d.edge_array()
        self.wires = _wiring_pairs(d, bc, self.nv if self.use_ghost else None)
        init = np.arange(self.n_labels, dtype=np.int16)
        for a, b in self.wires:
            r = min(init[a], init[b])
            init[init == init[a]] = r
            init[init == init[b]] = r
        self.init_labels = init
        gen = sweep_generator(seed, 0, stream=stream + 7)
        if start == "random":
            self.open = (gen.random((self.n, self.m)) < params.p).astype(bool)
        elif start == "empty":
            self.open = np.zeros((self.n, self.m), dtype=bool)
        elif start == "full":
            self.open = np.ones((self.n, self.m), dtype=bool)
        else:
            raise ValueError(f"unknown start {start!r}")
        self.ghost = None
        if self.use_ghost:
            if algo == "cm":
                raise ValueError("Chayes-Machta requires h = 0")
            self.ghost = (gen.random((self.n, self.nv)) < _ghost_p(params.h)).astype(bool)

    # -- vectorized component labels -----------------------------------

    def labels(self, wirings: bool = True, skip_edge: int = -1,
               skip_ghost: int = -1) -> np.ndarray:
        init = self.init_labels if wirings else np.arange(self.n_labels, dtype=np.int16)
        lab = np.tile(init, (self.n, 1))
        work = []
        for j in range(self.m):
            if j != skip_edge:
                work.append((self.open[:, j], int(self.ep[j, 0]), int(self.ep[j, 1])))
        if self.use_ghost:
            for v in range(self.nv):
                if v != skip_ghost:
                    work.append((self.ghost[:, v], v, self.nv))
        if wirings:
            for a, b in self.wires:
                work.append((None, a, b))
        prev = -1
        while True:
            for sweep_dir in (work, work[::-1]):
                for sel, a, b in sweep_dir:
                    la = lab[:, a]
                    lb = lab[:, b]
                    mn = np.minimum(la, lb)
                    if sel is None:
                        lab[:, a] = mn
                        lab[:, b] = mn
                    else:
                        lab[:, a] = np.where(sel, mn, la)
                        lab[:, b] = np.where(sel, mn, lb)
            tot = int(lab.sum())
            if tot == prev:
                return lab
            prev = tot

    # -- dynamics ---------------------------------------------------------

    def heat_bath_sweep(self):
        pr = self.params
        n_bits = self.m + (self.nv if self.use_ghost else 0)
        u = sweep_generator(self.seed, self.sweep_count, self.stream).random(
            (n_bits, self.n)
        )
        p_low = pr.p / (pr.p + (1.0 - pr.p) * pr.q)
        for e in range(self.m):
            lab = self.labels(skip_edge=e)
            a, b = int(self.ep[e, 0]), int(self.ep[e, 1])
            conn = lab[:, a] == lab[:, b]
            p_open = np.where(conn, pr.p, p_low)
            self.open[:, e] = u[e] >= 1.0 - p_open
        if self.use_ghost:
            pg = _ghost_p(pr.h)
            pg_low = pg / (pg + (1.0 - pg) * pr.q)
            for v in range(self.nv):
                lab = self.labels(skip_ghost=v)
                conn = lab[:, v] == lab[:, self.nv]
                p_open = np.where(conn, pg, pg_low)
                self.ghost[:, v] = u[self.m + v] >= 1.0 - p_open
        self.sweep_count += 1

    def cm_sweep(self):
        pr = self.params
        gen = sweep_generator(self.seed, self.sweep_count, self.stream)
        u_act = gen.random((self.n, self.nv))
        u_edge = gen.random((self.n, self.m))
        lab = self.labels()
        rows = np.arange(self.n)[:, None]
        active = u_act[rows, lab] < 1.0 / pr.q
        both = active[:, self.ep[:, 0]] & active[:, self.ep[:, 1]]
        self.open = np.where(both, u_edge < pr.p, self.open)
        self.sweep_count += 1

    def sweep(self):
        if self.algo == "heatbath":
            self.heat_bath_sweep()
        else:
            self.cm_sweep()

    def run(self, sweeps: int):
        for _ in range(sweeps):
            self.sweep()
        return self


def multichain_edge_marginals(domain: Domain, bc: BoundaryCondition,
                              params: ModelParams, n_chains: int, sweeps: int,
                              burn_in: int, seed: int, algo: str = "heatbath",
                              stream: int = 0):
    """Per-edge means with standard errors over independent chains."""
    vc = VectorChains(domain, bc, params, n_chains, seed, algo=algo, stream=stream)
    vc.run(burn_in)
    acc = np.zeros((n_chains, domain.n_edges))
    for _ in range(sweeps):
        vc.sweep()
        acc += vc.open
    chain_means = acc / sweeps
    mean = chain_means.mean(axis=0)
    stderr = chain_means.std(axis=0, ddof=1) / np.sqrt(n_chains)
    return mean, stderr, n_chains * sweeps


def multichain_final_masks(domain: Domain, bc: BoundaryCondition,
                           params: ModelParams, n_chains: int, sweeps: int,
                           seed: int, algo: str = "heatbath") -> np.ndarray:
    """Integer masks of the chains' final configurations (joint-law tests)."""
    vc = VectorChains(domain, bc, params, n_chains, seed, algo=algo)
    vc.run(sweeps)
    weights = (1 << np.arange(domain.n_edges, dtype=np.int64))
    return (vc.open.astype(np.int64) * weights).sum(axis=1)
