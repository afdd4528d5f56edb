"""Problem vocabulary shared by every solver.

Agents, tasks and vertices are addressed internally by dense integer
indices.  External names (agent/task strings, vertex ids) only matter for
JSON input/output, see :func:`load_instance` / :func:`instance_to_dict`.

Conflict elements are tuples::

    ("arc", agent, u, v)     # u < v, arcs are undirected
    ("vertex", agent, v)
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InstanceError, InvalidTourError, PartitionError

EPS = 1e-9


def arc(agent: int, u: int, v: int) -> tuple:
    if u == v:
        raise InstanceError(f"arc needs two distinct vertices, got ({u}, {v})")
    return ("arc", agent, min(u, v), max(u, v))


def vertex(agent: int, v: int) -> tuple:
    return ("vertex", agent, v)


def _canon(elem) -> tuple:
    kind = elem[0]
    if kind == "arc":
        return arc(int(elem[1]), int(elem[2]), int(elem[3]))
    if kind == "vertex":
        return vertex(int(elem[1]), int(elem[2]))
    raise InstanceError(f"unknown conflict element {elem!r}")


class ConflictSet:
    """Symmetric incompatibility relation between elements of different agents."""

    def __init__(self, pairs: Iterable[tuple] = ()):
        adj: dict[tuple, set] = {}
        for a, b in pairs:
            a, b = _canon(a), _canon(b)
            if a[1] == b[1]:
                raise InstanceError(f"conflict between elements of the same agent: {a}, {b}")
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        self._adj = {k: frozenset(v) for k, v in adj.items()}

    def conflicts(self, a, b) -> bool:
        return b in self._adj.get(a, ())

    def __contains__(self, pair) -> bool:
        a, b = pair
        return self.conflicts(_canon(a), _canon(b))

    def partners(self, elem) -> frozenset:
        return self._adj.get(elem, frozenset())

    def elements(self):
        return self._adj.keys()

    def pairs(self) -> list[tuple[tuple, tuple]]:
        out = []
        for a, partners in self._adj.items():
            for b in partners:
                if a < b:
                    out.append((a, b))
        out.sort()
        return out

    def __len__(self) -> int:
        return sum(len(p) for p in self._adj.values()) // 2

    def __bool__(self) -> bool:
        return bool(self._adj)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConflictSet) and self._adj == other._adj

    def __repr__(self) -> str:
        return f"ConflictSet({len(self)} pairs)"

    def union(self, other: "ConflictSet") -> "ConflictSet":
        return ConflictSet(self.pairs() + other.pairs())

    def restrict(self, agent_vertices: dict[int, Iterable[int]]) -> "ConflictSet":
        """Keep only pairs whose elements use vertices listed for their agent."""
        allowed = {k: set(vs) for k, vs in agent_vertices.items()}

        def ok(e):
            vs = allowed.get(e[1])
            return vs is not None and all(x in vs for x in e[2:])

        return ConflictSet((a, b) for a, b in self.pairs() if ok(a) and ok(b))


class CostModel:
    """Travel times between vertices plus a uniform processing time ``c_g``."""

    metric = "abstract"
    per_agent = True

    def __init__(self, c_g: float = 0.0):
        if not c_g >= 0 or not math.isfinite(c_g):
            raise InstanceError(f"processing time must be finite and nonnegative, got {c_g}")
        self.c_g = float(c_g)
        self._cache: dict[int, np.ndarray] = {}

    def _compute(self, agent: int) -> np.ndarray:
        raise NotImplementedError

    def travel_matrix(self, agent: int) -> np.ndarray:
        """Travel-time matrix over all vertex indices (zero diagonal)."""
        key = agent if self.per_agent else 0
        m = self._cache.get(key)
        if m is None:
            m = self._compute(agent)
            m.setflags(write=False)
            self._cache[key] = m
        return m

    def travel(self, agent: int, u: int, v: int) -> float:
        return float(self.travel_matrix(agent)[u, v])


class EuclideanCost(CostModel):
    metric = "euclidean2d"
    per_agent = False

    def __init__(self, coords, c_g: float = 0.0):
        super().__init__(c_g)
        self.coords = np.asarray(coords, dtype=float)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise InstanceError("euclidean2d metric needs 2D coordinates")

    def _compute(self, agent):
        d = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((d * d).sum(axis=-1))


class ChebyshevCost(CostModel):
    """Joint-space travel time: slowest joint at its maximum velocity."""

    metric = "chebyshev_joints"
    per_agent = False

    def __init__(self, coords, omega_max, c_g: float = 0.0):
        super().__init__(c_g)
        self.coords = np.asarray(coords, dtype=float)
        self.omega_max = np.asarray(omega_max, dtype=float)
        if self.coords.ndim != 2 or self.coords.shape[1] != len(self.omega_max):
            raise InstanceError("joint vectors and omega_max differ in dimension")
        if np.any(self.omega_max <= 0):
            raise InstanceError("omega_max entries must be positive")

    def _compute(self, agent):
        d = np.abs(self.coords[:, None, :] - self.coords[None, :, :]) / self.omega_max
        return d.max(axis=-1)


class ExplicitCost(CostModel):
    """Per-agent symmetric matrices; the diagonal holds the processing time."""

    metric = "explicit"

    def __init__(self, matrices: Sequence, c_g: float = 0.0):
        super().__init__(c_g)
        self.matrices = [np.asarray(m, dtype=float) for m in matrices]
        for k, m in enumerate(self.matrices):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise InstanceError(f"matrix of agent {k} is not square")
            if not np.allclose(np.diag(m), self.c_g):
                raise InstanceError(f"matrix of agent {k}: diagonal must equal c_g={self.c_g}")

    def _compute(self, agent):
        m = self.matrices[agent].copy()
        np.fill_diagonal(m, 0.0)
        return m


@dataclass(frozen=True, eq=False)
class Instance:
    agents: tuple[str, ...]
    tasks: tuple[str, ...]
    vertex_ids: tuple[int, ...]
    vertex_task: tuple[int, ...]
    vertex_agents: tuple[frozenset, ...]
    cost: CostModel
    conflicts: ConflictSet = field(default_factory=ConflictSet)
    coords: np.ndarray | None = None
    radius: float | None = None
    name: str = "instance"

    def __post_init__(self):
        n_a, n_g, n = len(self.agents), len(self.tasks), len(self.vertex_ids)
        if n_a < 1:
            raise InstanceError("need at least one agent")
        if n_g < n_a:
            raise InstanceError("the first N_A tasks are the agents' homes")
        if len(self.vertex_task) != n or len(self.vertex_agents) != n:
            raise InstanceError("vertex arrays differ in length")
        if len(set(self.vertex_ids)) != n:
            raise InstanceError("duplicate vertex ids")
        for v, t in enumerate(self.vertex_task):
            if not 0 <= t < n_g:
                raise InstanceError(f"vertex {self.vertex_ids[v]} maps to unknown task {t}")
            if not self.vertex_agents[v] or not all(0 <= k < n_a for k in self.vertex_agents[v]):
                raise InstanceError(f"vertex {self.vertex_ids[v]} has an invalid agent set")
        for k in range(n_a):
            if len(self.groups[k][k]) == 0:
                raise InstanceError(f"agent {self.agents[k]} has no vertex in its home task")
            m = self.cost.travel_matrix(k)
            if m.shape != (n, n):
                raise InstanceError("cost matrix shape does not match the vertex count")
            if np.any(m < 0) or not np.allclose(m, m.T):
                raise InstanceError("arc costs must be nonnegative and symmetric")
        for elem in self.conflicts.elements():
            k = elem[1]
            if not 0 <= k < n_a:
                raise InstanceError(f"conflict references unknown agent {k}")
            for v in elem[2:]:
                if not 0 <= v < n or k not in self.vertex_agents[v]:
                    raise InstanceError(f"conflict element {elem} uses a vertex unavailable to its agent")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_ids)

    @property
    def c_g(self) -> float:
        return self.cost.c_g

    @cached_property
    def groups(self) -> list[list[np.ndarray]]:
        """``groups[k][i]`` is D^k_i, the vertices by which agent k performs task i."""
        out = []
        for k in range(self.n_agents):
            buckets: list[list[int]] = [[] for _ in self.tasks]
            for v, t in enumerate(self.vertex_task):
                if k in self.vertex_agents[v]:
                    buckets[t].append(v)
            out.append([np.array(b, dtype=np.int64) for b in buckets])
        return out

    def reachable(self, agent: int, task: int) -> bool:
        return len(self.groups[agent][task]) > 0

    def travel(self, agent: int) -> np.ndarray:
        return self.cost.travel_matrix(agent)

    @cached_property
    def index_of(self) -> dict[int, int]:
        return {vid: i for i, vid in enumerate(self.vertex_ids)}

    def with_conflicts(self, conflicts: ConflictSet) -> "Instance":
        return replace(self, conflicts=conflicts)


def euclidean_instance(coords, vertex_task, n_agents: int, c_g: float = 0.0, vertex_agents=None,
                       conflicts: ConflictSet | None = None, radius: float | None = None,
                       name: str = "instance", n_tasks: int | None = None) -> Instance:
    """Build an instance over 2D points; tasks ``0..n_agents-1`` are the homes."""
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    n_tasks = n_tasks if n_tasks is not None else max(vertex_task) + 1
    if vertex_agents is None:
        vertex_agents = [frozenset(range(n_agents))] * n
    return Instance(
        agents=tuple(f"a{k + 1}" for k in range(n_agents)),
        tasks=tuple(f"h{i + 1}" if i < n_agents else f"g{i + 1}" for i in range(n_tasks)),
        vertex_ids=tuple(range(n)),
        vertex_task=tuple(int(t) for t in vertex_task),
        vertex_agents=tuple(frozenset(a) for a in vertex_agents),
        cost=EuclideanCost(coords, c_g),
        conflicts=conflicts or ConflictSet(),
        coords=coords,
        radius=radius,
        name=name,
    )


@dataclass(frozen=True)
class Tour:
    agent: int
    sequence: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(int(v) for v in self.sequence))

    def waypoints(self) -> list[int]:
        """Vertex list with the closing return to the first vertex appended."""
        seq = list(self.sequence)
        return seq + [seq[0]] if len(seq) > 1 else seq

    def tasks(self, instance: Instance) -> list[int]:
        return [instance.vertex_task[v] for v in self.sequence]


def validate_tour(instance: Instance, tour: Tour) -> None:
    k = tour.agent
    if not 0 <= k < instance.n_agents:
        raise InvalidTourError(f"unknown agent {k}")
    if not tour.sequence:
        raise InvalidTourError("empty tour")
    for v in tour.sequence:
        if not 0 <= v < instance.n_vertices or k not in instance.vertex_agents[v]:
            raise InvalidTourError(f"vertex {v} is not available to agent {instance.agents[k]}")
    tasks = tour.tasks(instance)
    if tasks[0] != k:
        raise InvalidTourError(f"tour of agent {instance.agents[k]} does not start at its home task")
    if len(set(tasks)) != len(tasks):
        raise InvalidTourError("tour visits a task twice")


def tour_cost(instance: Instance, tour: Tour) -> float:
    """Processing at every visited vertex plus all travel, closing the cycle."""
    validate_tour(instance, tour)
    m = instance.travel(tour.agent)
    w = tour.waypoints()
    travel = sum(float(m[a, b]) for a, b in zip(w, w[1:]))
    return travel + instance.c_g * len(tour.sequence)


def check_partition(instance: Instance, tours: Sequence[Tour]) -> None:
    owner: dict[int, int] = {}
    for tour in tours:
        for t in tour.tasks(instance):
            if t in owner:
                raise PartitionError(f"task {instance.tasks[t]} is covered twice", task=instance.tasks[t])
            owner[t] = tour.agent
    for t, name in enumerate(instance.tasks):
        if t not in owner:
            raise PartitionError(f"task {name} is not covered", task=name)


def solution_makespan(instance: Instance, tours: Sequence[Tour]) -> float:
    check_partition(instance, tours)
    return max(tour_cost(instance, t) for t in tours)


@dataclass(frozen=True)
class ScheduledTour:
    """Timed vertex sequence.  ``waypoints`` may revisit vertices.

    Position ``i`` is occupied during ``[arrive[i], leave[i]]``; the arc
    after position ``i`` during ``[leave[i], arrive[i + 1]]``.  The last
    position is the closing return home and has ``leave == arrive``.
    """

    agent: int
    waypoints: tuple[int, ...]
    arrive: tuple[float, ...]
    leave: tuple[float, ...]

    def __post_init__(self):
        if not len(self.waypoints) == len(self.arrive) == len(self.leave):
            raise InvalidTourError("waypoints and time labels differ in length")

    @property
    def makespan(self) -> float:
        return float(self.leave[-1])

    def arcs(self):
        """Yield ``(position, u, v, start, end)`` for every movement."""
        w = self.waypoints
        for i in range(len(w) - 1):
            if w[i] != w[i + 1]:
                yield i, w[i], w[i + 1], self.leave[i], self.arrive[i + 1]

    def validate(self, instance: Instance, eps: float = EPS) -> None:
        m = instance.travel(self.agent)
        for i in range(len(self.waypoints)):
            if self.leave[i] < self.arrive[i] - eps:
                raise InvalidTourError(f"position {i}: leaves before arriving")
        for i in range(len(self.waypoints) - 1):
            u, v = self.waypoints[i], self.waypoints[i + 1]
            if self.arrive[i + 1] < self.leave[i] + m[u, v] - eps:
                raise InvalidTourError(f"position {i + 1}: arrival faster than travel time")


@dataclass(frozen=True)
class Violation:
    kind: str  # "arc-arc", "vertex-arc" or "vertex-vertex"
    first: tuple  # (conflict element, position, (start, end))
    second: tuple


def _occupancies(s: ScheduledTour):
    k = s.agent
    for i, v in enumerate(s.waypoints):
        yield vertex(k, v), i, (s.arrive[i], s.leave[i])
    for i, u, v, t0, t1 in s.arcs():
        yield arc(k, u, v), i, (t0, t1)


def intervals_overlap(a, b, eps: float = EPS, touching: bool = False) -> bool:
    """Interval intersection test.

    By default two intervals that merely share an endpoint do not overlap
    (one may start exactly when the other ends).  ``touching=True`` uses
    closed intervals, where a shared endpoint counts.
    """
    if touching:
        return a[0] <= b[1] + eps and b[0] <= a[1] + eps
    return a[0] < b[1] - eps and b[0] < a[1] - eps


def check_active_conflicts(
    conflicts: ConflictSet | Instance,
    schedules: Sequence[ScheduledTour],
    eps: float = EPS,
    touching: bool = False,
) -> list[Violation]:
    """Every conflicting pair of occupancies whose time intervals intersect."""
    if isinstance(conflicts, Instance):
        conflicts = conflicts.conflicts
    if not conflicts:
        return []
    occ = [list(_occupancies(s)) for s in schedules]
    out = []
    for a in range(len(schedules)):
        for b in range(a + 1, len(schedules)):
            if schedules[a].agent == schedules[b].agent:
                continue
            for ea, ia, ta in occ[a]:
                partners = conflicts.partners(ea)
                if not partners:
                    continue
                for eb, ib, tb in occ[b]:
                    if eb in partners and intervals_overlap(ta, tb, eps, touching):
                        kind = "-".join(sorted((ea[0], eb[0]), reverse=True))
                        out.append(Violation(kind, (ea, ia, ta), (eb, ib, tb)))
    return out


def earliest_schedule(instance: Instance, agent: int, waypoints: Sequence[int], start: float = 0.0) -> ScheduledTour:
    """Schedule a waypoint list with no waiting, ignoring conflicts."""
    m = instance.travel(agent)
    dwell = processing_dwell(instance, waypoints)
    arrive, leave = [], []
    t = start
    for i, v in enumerate(waypoints):
        if i > 0:
            t += float(m[waypoints[i - 1], v])
        arrive.append(t)
        t += dwell[i]
        leave.append(t)
    return ScheduledTour(agent, tuple(waypoints), tuple(arrive), tuple(leave))


def processing_dwell(instance: Instance, waypoints: Sequence[int]) -> list[float]:
    """Processing time per position: ``c_g`` at the first visit of each task.

    The closing return home of a multi-position sequence is not a new visit.
    """
    seen = set()
    out = []
    for v in waypoints:
        t = instance.vertex_task[v]
        out.append(0.0 if t in seen else instance.c_g)
        seen.add(t)
    return out


# -- JSON ---------------------------------------------------------------


def _agent_set(spec, agent_index, n_agents) -> frozenset:
    if spec is None:
        return frozenset(range(n_agents))
    if isinstance(spec, list):
        return frozenset(agent_index[a] for a in spec)
    return frozenset([agent_index[spec]])


def instance_from_dict(doc: dict) -> Instance:
    try:
        agents = tuple(str(a) for a in doc["agents"])
        tasks = tuple(str(t) for t in doc["tasks"])
        agent_index = {a: i for i, a in enumerate(agents)}
        task_index = {t: i for i, t in enumerate(tasks)}
        verts = doc["vertices"]
        ids = tuple(int(v["id"]) for v in verts)
        vtask = tuple(task_index[str(v["task"])] for v in verts)
        vagents = tuple(_agent_set(v.get("agent"), agent_index, len(agents)) for v in verts)
        coords = None
        if all("coordinates" in v for v in verts) and verts:
            coords = np.array([v["coordinates"] for v in verts], dtype=float)
        c_g = float(doc.get("c_g", 0.0))
        metric = doc.get("metric", "euclidean2d")
        if metric == "euclidean2d":
            cost: CostModel = EuclideanCost(coords, c_g)
        elif metric == "chebyshev_joints":
            cost = ChebyshevCost(coords, doc["omega_max"], c_g)
        elif metric == "explicit":
            cost = ExplicitCost([doc["matrices"][a] for a in agents], c_g)
        else:
            raise InstanceError(f"unknown metric {metric!r}")
        index = {vid: i for i, vid in enumerate(ids)}
        pairs = []
        cdoc = doc.get("conflicts") or {}

        def elem(e):
            a = agent_index[str(e[0])]
            if len(e) == 2:
                return vertex(a, index[int(e[1])])
            return arc(a, index[int(e[1])], index[int(e[2])])

        for key in ("arc_arc", "vertex_arc", "vertex_vertex"):
            for a, b in cdoc.get(key, []):
                pairs.append((elem(a), elem(b)))
    except KeyError as exc:
        raise InstanceError(f"missing or unknown field/name: {exc}") from exc
    radius = doc.get("radius")
    return Instance(
        agents=agents,
        tasks=tasks,
        vertex_ids=ids,
        vertex_task=vtask,
        vertex_agents=vagents,
        cost=cost,
        conflicts=ConflictSet(pairs),
        coords=coords,
        radius=None if radius is None else float(radius),
        name=str(doc.get("name", "instance")),
    )


def conflicts_to_dict(instance: Instance, conflicts: ConflictSet | None = None) -> dict:
    conflicts = instance.conflicts if conflicts is None else conflicts

    def ext(e):
        a = instance.agents[e[1]]
        return [a] + [instance.vertex_ids[v] for v in e[2:]]

    out = {"arc_arc": [], "vertex_arc": [], "vertex_vertex": []}
    for a, b in conflicts.pairs():
        if a[0] == "arc" and b[0] == "vertex":
            a, b = b, a
        key = {("arc", "arc"): "arc_arc", ("vertex", "arc"): "vertex_arc", ("vertex", "vertex"): "vertex_vertex"}[(a[0], b[0])]
        out[key].append([ext(a), ext(b)])
    return out


def instance_to_dict(instance: Instance) -> dict:
    n_a = instance.n_agents
    verts = []
    for v, vid in enumerate(instance.vertex_ids):
        ag = instance.vertex_agents[v]
        if len(ag) == n_a:
            agent = None
        elif len(ag) == 1:
            agent = instance.agents[next(iter(ag))]
        else:
            agent = [instance.agents[k] for k in sorted(ag)]
        entry = {"id": vid, "agent": agent, "task": instance.tasks[instance.vertex_task[v]]}
        if instance.coords is not None:
            entry["coordinates"] = [float(x) for x in instance.coords[v]]
        verts.append(entry)
    doc = {
        "name": instance.name,
        "agents": list(instance.agents),
        "tasks": list(instance.tasks),
        "vertices": verts,
        "metric": instance.cost.metric,
        "c_g": instance.c_g,
    }
    if isinstance(instance.cost, ChebyshevCost):
        doc["omega_max"] = instance.cost.omega_max.tolist()
    elif isinstance(instance.cost, ExplicitCost):
        doc["matrices"] = {a: instance.cost.matrices[k].tolist() for k, a in enumerate(instance.agents)}
    if instance.radius is not None:
        doc["radius"] = instance.radius
    doc["conflicts"] = conflicts_to_dict(instance)
    return doc


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return instance_from_dict(doc)


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=1))
