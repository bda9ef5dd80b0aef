"""Fully-connected CRF over joint proposals, solved as a clustering program.

Every proposal is either dropped or put in exactly one person cluster; two
selected proposals share a cluster exactly when they are the same person.
A cluster holds at most one proposal per joint type. The energy is the sum of
unary log-odds of selected proposals plus pair log-odds of every same-cluster
pair. Clusters are stored directly as a partition, which makes transitivity
of the same-person relation structural.
"""

import json
import math
import random
from dataclasses import dataclass

import numpy as np

from .pairwise import LabelIndex, pair_feature, pair_probability

EPS = 1e-6
_IMPROVE = 1e-12
_LS_IMPROVE = 1e-9


class CapacityError(RuntimeError):
    pass


def log_odds_cost(p):
    p = min(max(p, EPS), 1.0 - EPS)
    return math.log((1.0 - p) / p)


@dataclass
class AssemblyProblem:
    nodes: list             # JointProposal per node
    unary: np.ndarray       # (n,)
    pair_cost: np.ndarray   # (n, n) symmetric, zero diagonal

    def __post_init__(self):
        n = len(self.nodes)
        self.unary = np.asarray(self.unary, dtype=np.float64).reshape(n)
        self.pair_cost = np.asarray(self.pair_cost, dtype=np.float64).reshape(n, n)
        if not (np.isfinite(self.unary).all() and np.isfinite(self.pair_cost).all()):
            raise ValueError("costs must be finite")
        if not np.array_equal(self.pair_cost, self.pair_cost.T):
            raise ValueError("pair costs must be symmetric")

    @property
    def size(self):
        return len(self.nodes)

    @property
    def types(self):
        return [c.joint_type for c in self.nodes]

    def to_json(self):
        return {
            "nodes": [{"x": c.x, "y": c.y, "type": c.joint_type, "score": c.score}
                      for c in self.nodes],
            "unary": self.unary.tolist(),
            "pair_cost": self.pair_cost.tolist(),
        }

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


@dataclass(frozen=True)
class Labeling:
    """cluster[i] is the cluster id of node i, or -1 when it is not selected."""

    cluster: tuple

    @classmethod
    def from_assignment(cls, assignment):
        # renumber clusters by first appearance
        remap = {}
        out = []
        for c in assignment:
            if c < 0:
                out.append(-1)
            else:
                out.append(remap.setdefault(c, len(remap)))
        return cls(tuple(out))

    @classmethod
    def empty(cls, n):
        return cls((-1,) * n)

    def clusters(self):
        groups = {}
        for i, c in enumerate(self.cluster):
            if c >= 0:
                groups.setdefault(c, []).append(i)
        return [groups[c] for c in sorted(groups)]

    def node_labels(self, problem):
        """Joint type + 1 for selected nodes, 0 for background."""
        return [problem.nodes[i].joint_type + 1 if c >= 0 else 0
                for i, c in enumerate(self.cluster)]


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "heuristic"
    exact_node_limit: int = 12
    restarts: int = 8
    move_cap: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "heuristic", "oracle"):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if self.exact_node_limit < 1 or self.move_cap < 1 or self.restarts < 0:
            raise ValueError("solver limits must be positive")


def build_problem(region, proposals, model, assoc, label_map, use_segments=True):
    index = label_map if isinstance(label_map, LabelIndex) else LabelIndex(label_map)
    n = len(proposals)
    unary = np.array([log_odds_cost(c.score) for c in proposals])
    pair = np.zeros((n, n))
    for i in range(n):
        ci = proposals[i]
        for j in range(i + 1, n):
            cj = proposals[j]
            f = pair_feature(region, index, assoc, ci, cj, use_segments=use_segments)
            pair[i, j] = pair[j, i] = log_odds_cost(
                pair_probability(model, f, ci.joint_type, cj.joint_type))
    return AssemblyProblem(nodes=list(proposals), unary=unary, pair_cost=pair)


def check_feasible(problem, labeling):
    if len(labeling.cluster) != problem.size:
        raise ValueError("labeling size does not match the problem")
    types = problem.types
    for members in labeling.clusters():
        seen = set()
        for i in members:
            if types[i] in seen:
                raise ValueError(f"cluster {members} holds two joints of type {types[i]}")
            seen.add(types[i])


def objective(problem, labeling):
    check_feasible(problem, labeling)
    total = 0.0
    u = problem.unary
    pc = problem.pair_cost
    for members in labeling.clusters():
        for a, i in enumerate(members):
            total += u[i]
            for j in members[a + 1:]:
                total += pc[i, j]
    return float(total)


def cluster_objective(problem, members):
    """Energy contributed by one cluster on its own."""
    total = 0.0
    for a, i in enumerate(members):
        total += problem.unary[i]
        for j in members[a + 1:]:
            total += problem.pair_cost[i, j]
    return float(total)


# ---- exhaustive and branch-and-bound search --------------------------------

def _enumerate(problem):
    n = problem.size
    types = problem.types
    u = problem.unary.tolist()
    pc = problem.pair_cost.tolist()
    best = [0.0, [-1] * n]
    assign = [-1] * n
    members = []

    def rec(i, cost):
        if i == n:
            if cost < best[0] - _IMPROVE:
                best[0] = cost
                best[1] = assign[:]
            return
        assign[i] = -1
        rec(i + 1, cost)
        t = types[i]
        row = pc[i]
        for c, (mem, tset) in enumerate(members):
            if t in tset:
                continue
            add = u[i] + sum(row[j] for j in mem)
            assign[i] = c
            mem.append(i)
            tset.add(t)
            rec(i + 1, cost + add)
            mem.pop()
            tset.discard(t)
        assign[i] = len(members)
        members.append(([i], {t}))
        rec(i + 1, cost + u[i])
        members.pop()
        assign[i] = -1

    rec(0, 0.0)
    return Labeling.from_assignment(best[1])


def _branch_and_bound(problem, incumbent):
    n = problem.size
    types = problem.types
    u = problem.unary.tolist()
    pc = problem.pair_cost.tolist()
    # Lower bound on what nodes r..n-1 can still add: each node contributes its
    # unary plus its pair costs to earlier cluster-mates, at best all negative ones.
    contrib = [min(0.0, u[r] + sum(min(0.0, pc[r][q]) for q in range(r))) for r in range(n)]
    tail = [0.0] * (n + 1)
    for r in range(n - 1, -1, -1):
        tail[r] = tail[r + 1] + contrib[r]

    best = [objective(problem, incumbent), list(incumbent.cluster)]
    assign = [-1] * n
    members = []

    def rec(i, cost):
        if cost + tail[i] >= best[0] - _IMPROVE:
            return
        if i == n:
            best[0] = cost
            best[1] = assign[:]
            return
        t = types[i]
        row = pc[i]
        options = [(0.0, 0, -1)]
        for c, (mem, tset) in enumerate(members):
            if t not in tset:
                options.append((u[i] + sum(row[j] for j in mem), 2, c))
        options.append((u[i], 1, len(members)))
        # cheapest continuation first so good incumbents appear early
        options.sort(key=lambda o: (o[0], o[1], o[2]))
        for add, kind, c in options:
            assign[i] = c
            if kind == 0:
                rec(i + 1, cost)
            elif kind == 1:
                members.append(([i], {t}))
                rec(i + 1, cost + add)
                members.pop()
            else:
                mem, tset = members[c]
                mem.append(i)
                tset.add(t)
                rec(i + 1, cost + add)
                mem.pop()
                tset.discard(t)
        assign[i] = -1

    rec(0, 0.0)
    return Labeling.from_assignment(best[1])


# ---- local search -----------------------------------------------------------

class _State:
    """Partition plus cached node-to-cluster pair sums, updated per move."""

    def __init__(self, problem, assignment):
        self.n = problem.size
        self.types = problem.types
        self.u = problem.unary.tolist()
        self.pc = problem.pair_cost.tolist()
        self.cl = [-1] * self.n
        self.members = {}
        self.ctypes = {}
        # sums[v][c] = sum of pair costs between v and the members of c other than v
        self.sums = [{} for _ in range(self.n)]
        self.next_id = 0
        ids = {}
        for v, c in enumerate(assignment):
            if c >= 0:
                if c not in ids:
                    ids[c] = self._new_cluster()
                self._attach(v, ids[c])

    def _new_cluster(self):
        c = self.next_id
        self.next_id += 1
        self.members[c] = []
        self.ctypes[c] = set()
        for sv in self.sums:
            sv[c] = 0.0
        return c

    def _attach(self, v, c):
        self.members[c].append(v)
        self.ctypes[c].add(self.types[v])
        self.cl[v] = c
        row = self.pc[v]
        for w, sw in enumerate(self.sums):
            if w != v:
                sw[c] += row[w]

    def _detach(self, v):
        a = self.cl[v]
        self.members[a].remove(v)
        self.ctypes[a].discard(self.types[v])
        self.cl[v] = -1
        if not self.members[a]:
            del self.members[a]
            del self.ctypes[a]
            for sw in self.sums:
                del sw[a]
            return
        row = self.pc[v]
        for w, sw in enumerate(self.sums):
            if w != v:
                sw[a] -= row[w]

    def _merge(self, a, b):
        for v in self.members[b]:
            self.cl[v] = a
        self.members[a].extend(self.members.pop(b))
        self.ctypes[a] |= self.ctypes.pop(b)
        for sw in self.sums:
            sw[a] += sw.pop(b)

    def best_move(self):
        """(delta, move) for the most improving move, or (0, None)."""
        u, types, ctypes = self.u, self.types, self.ctypes
        best_delta, best = -_LS_IMPROVE, None
        for v in range(self.n):
            a = self.cl[v]
            t = types[v]
            sv = self.sums[v]
            if a < 0:
                d = u[v]
                if d < best_delta:
                    best_delta, best = d, ("add", v, None)
                for c, s in sv.items():
                    d = u[v] + s
                    if d < best_delta and t not in ctypes[c]:
                        best_delta, best = d, ("add", v, c)
            else:
                sa = sv[a]
                d = -(u[v] + sa)
                if d < best_delta:
                    best_delta, best = d, ("drop", v, None)
                if len(self.members[a]) > 1 and -sa < best_delta:
                    best_delta, best = -sa, ("move", v, None)
                for c, s in sv.items():
                    d = s - sa
                    if d < best_delta and c != a and t not in ctypes[c]:
                        best_delta, best = d, ("move", v, c)
        ids = list(self.members)
        for x, a in enumerate(ids):
            mem_a = self.members[a]
            ta = ctypes[a]
            for b in ids[x + 1:]:
                d = 0.0
                for v in mem_a:
                    d += self.sums[v][b]
                if d < best_delta and ta.isdisjoint(ctypes[b]):
                    best_delta, best = d, ("merge", a, b)
        return best_delta, best

    def apply(self, move):
        kind, x, y = move
        if kind == "add":
            self._attach(x, self._new_cluster() if y is None else y)
        elif kind == "drop":
            self._detach(x)
        elif kind == "move":
            self._detach(x)
            self._attach(x, self._new_cluster() if y is None else y)
        else:
            self._merge(x, y)

    def descend(self, cap):
        for _ in range(cap):
            delta, move = self.best_move()
            if move is None:
                return
            self.apply(move)


def local_search(problem, assignment, move_cap=10000):
    state = _State(problem, assignment)
    state.descend(move_cap)
    return Labeling.from_assignment(state.cl)


def greedy_seed(problem):
    """Every node with negative unary cost selected, each in its own cluster."""
    out = []
    for i, u in enumerate(problem.unary):
        out.append(len([c for c in out if c >= 0]) if u < 0 else -1)
    return out


def _heuristic(problem, cfg):
    best = local_search(problem, greedy_seed(problem), cfg.move_cap)
    best_obj = objective(problem, best)
    rng = random.Random(cfg.seed)
    for _ in range(cfg.restarts):
        assign = list(best.cluster)
        fresh = max(assign, default=-1) + 1
        for i in range(problem.size):
            if rng.random() < 0.3:
                if assign[i] >= 0 and rng.random() < 0.5:
                    assign[i] = -1
                else:
                    assign[i] = fresh
                    fresh += 1
        cand = local_search(problem, assign, cfg.move_cap)
        obj = objective(problem, cand)
        if obj < best_obj - _IMPROVE:
            best, best_obj = cand, obj
    return best


def solve(problem, cfg=SolverConfig()):
    n = problem.size
    if cfg.mode == "oracle":
        if n > 8:
            raise CapacityError(f"oracle enumeration is limited to 8 nodes, got {n}")
        return _enumerate(problem)
    if cfg.mode == "exact":
        if n > cfg.exact_node_limit:
            raise CapacityError(
                f"exact solver is limited to {cfg.exact_node_limit} nodes, got {n}")
        seed = local_search(problem, greedy_seed(problem), cfg.move_cap)
        return _branch_and_bound(problem, seed)
    return _heuristic(problem, cfg)
