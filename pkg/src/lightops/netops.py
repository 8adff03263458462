"""Network operations: routing with wavelength assignment, health analysis,
and launch-power optimization.

Routing uses k-shortest loopless paths (by total span length, ties broken by
the lexicographic node sequence) and first-fit channel assignment with the
wavelength-continuity constraint.  Spectrum occupancy is tracked per declared
link; a bidirectional link shares one channel set for both directions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .errors import (
    ConsistencyError,
    NoCarriedDemandError,
    NoPathError,
    ValidationError,
)
from .netmodel import Link, NetworkTopology, ServiceDemand, SpectrumGrid, grid_channels
from .qot import (
    DEFAULT_THRESHOLDS,
    ChannelLaunch,
    GsnrReport,
    ModulationThresholds,
    dbm_to_w,
    estimate_gsnr,
)

logger = logging.getLogger(__name__)

# Minimum objective gain (dB) for the optimizer to accept a move; guards
# against float-noise cycling.
IMPROVEMENT_EPS_DB = 1e-9


@dataclass(frozen=True)
class Route:
    """One loopless candidate path."""

    nodes: tuple[str, ...]
    link_ids: tuple[str, ...]
    length_km: float


def build_graph(topology: NetworkTopology) -> "nx.Graph":
    graph = nx.Graph()
    graph.add_nodes_from(topology.node_ids())
    for link in topology.links:
        a, b = link.endpoints
        graph.add_edge(a, b, weight=link.length_km, link_id=link.id)
    return graph


def _route_from_nodes(topology: NetworkTopology, graph: "nx.Graph", nodes: Sequence[str]) -> Route:
    link_ids = []
    length = 0.0
    for a, b in zip(nodes, nodes[1:]):
        data = graph.edges[a, b]
        link_ids.append(data["link_id"])
        length += data["weight"]
    return Route(nodes=tuple(nodes), link_ids=tuple(link_ids), length_km=length)


def k_shortest_paths(topology: NetworkTopology, src: str, dst: str, k: int) -> list[Route]:
    """First k loopless paths ordered by (total span length, node sequence).

    All paths tied with the k-th length are collected before the final sort
    so the lexicographic tiebreak is stable regardless of generator order.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    node_ids = set(topology.node_ids())
    if src not in node_ids or dst not in node_ids:
        raise NoPathError(f"unknown endpoint(s) {src!r} -> {dst!r}")
    graph = build_graph(topology)
    routes: list[Route] = []
    try:
        generator = nx.shortest_simple_paths(graph, src, dst, weight="weight")
        for nodes in generator:
            route = _route_from_nodes(topology, graph, nodes)
            if len(routes) >= k and route.length_km > routes[k - 1].length_km + 1e-12:
                break
            routes.append(route)
            routes.sort(key=lambda r: (r.length_km, r.nodes))
    except nx.NetworkXNoPath:
        raise NoPathError(f"no path from {src} to {dst}") from None
    if not routes:
        raise NoPathError(f"no path from {src} to {dst}")
    return routes[:k]


# ---------------------------------------------------------------------------
# Provisioning


@dataclass
class SpectrumState:
    """Occupied channel indices per link id."""

    occupied: dict[str, set[int]] = field(default_factory=dict)

    def is_free(self, link_ids: Iterable[str], channel: int) -> bool:
        return all(channel not in self.occupied.get(l, set()) for l in link_ids)

    def allocate(self, link_ids: Iterable[str], channel: int) -> None:
        for l in link_ids:
            self.occupied.setdefault(l, set()).add(channel)

    def to_dict(self) -> dict:
        return {l: sorted(chs) for l, chs in sorted(self.occupied.items())}


@dataclass(frozen=True)
class DemandAllocation:
    demand_id: str
    blocked: bool
    route_nodes: tuple[str, ...] = ()
    link_ids: tuple[str, ...] = ()
    channel: int | None = None

    def to_dict(self) -> dict:
        return {
            "demand_id": self.demand_id,
            "blocked": self.blocked,
            "route_nodes": list(self.route_nodes),
            "link_ids": list(self.link_ids),
            "channel": self.channel,
        }


@dataclass(frozen=True)
class AllocationReport:
    allocations: tuple[DemandAllocation, ...]
    blocking_probability: float
    utilization: float
    n_channels: int
    n_links: int
    link_occupancy: Mapping[str, tuple[int, ...]]

    def allocation(self, demand_id: str) -> DemandAllocation:
        for alloc in self.allocations:
            if alloc.demand_id == demand_id:
                return alloc
        raise KeyError(demand_id)

    @property
    def carried(self) -> tuple[DemandAllocation, ...]:
        return tuple(a for a in self.allocations if not a.blocked)

    def to_dict(self) -> dict:
        return {
            "allocations": [a.to_dict() for a in self.allocations],
            "blocking_probability": self.blocking_probability,
            "utilization": self.utilization,
            "n_channels": self.n_channels,
            "n_links": self.n_links,
            "link_occupancy": {l: list(c) for l, c in sorted(self.link_occupancy.items())},
        }


def provision(
    demands: Sequence[ServiceDemand],
    topology: NetworkTopology,
    grid: SpectrumGrid | None = None,
    k: int = 3,
) -> AllocationReport:
    """Route demands in input order with first-fit wavelength assignment.

    For each demand the k shortest candidate routes are tried in order; the
    demand takes the lowest channel index free on every link of the first
    route that has one.  A demand with no feasible (route, channel) is
    blocked; provisioning always returns a report.
    """
    grid = grid or topology.grid
    n_channels = len(grid_channels(grid))
    state = SpectrumState()
    allocations: list[DemandAllocation] = []
    route_cache: dict[tuple[str, str], list[Route]] = {}

    for demand in demands:
        key = (demand.src, demand.dst)
        if key not in route_cache:
            try:
                route_cache[key] = k_shortest_paths(topology, demand.src, demand.dst, k)
            except NoPathError:
                route_cache[key] = []
        placed = False
        for route in route_cache[key]:
            for channel in range(n_channels):
                if state.is_free(route.link_ids, channel):
                    state.allocate(route.link_ids, channel)
                    allocations.append(
                        DemandAllocation(
                            demand_id=demand.id,
                            blocked=False,
                            route_nodes=route.nodes,
                            link_ids=route.link_ids,
                            channel=channel,
                        )
                    )
                    placed = True
                    break
            if placed:
                break
        if not placed:
            allocations.append(DemandAllocation(demand_id=demand.id, blocked=True))

    blocked = sum(1 for a in allocations if a.blocked)
    total = len(allocations)
    occupied_slots = sum(len(chs) for chs in state.occupied.values())
    denom = len(topology.links) * n_channels
    return AllocationReport(
        allocations=tuple(allocations),
        blocking_probability=blocked / total if total else 0.0,
        utilization=occupied_slots / denom if denom else 0.0,
        n_channels=n_channels,
        n_links=len(topology.links),
        link_occupancy={l: tuple(sorted(chs)) for l, chs in state.occupied.items()},
    )


# ---------------------------------------------------------------------------
# Network analysis


class FindingKind(Enum):
    NEGATIVE_MARGIN = "NEGATIVE_MARGIN"
    LOW_MARGIN = "LOW_MARGIN"
    BLOCKED_DEMAND = "BLOCKED_DEMAND"
    CONGESTED_LINK = "CONGESTED_LINK"


_KIND_ORDER = {kind: i for i, kind in enumerate(FindingKind)}


@dataclass(frozen=True)
class AnalysisConfig:
    low_margin_db: float = 2.0
    congestion_utilization: float = 0.8


@dataclass(frozen=True)
class NetworkFinding:
    kind: FindingKind
    subject: str
    metric: float
    detail: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "subject": self.subject,
            "metric": self.metric,
            "detail": self.detail,
        }


def analyze_network(
    report: AllocationReport,
    gsnr_reports: Mapping[str, GsnrReport],
    config: AnalysisConfig = AnalysisConfig(),
) -> list[NetworkFinding]:
    """Classify margins, blocked demands, and per-link congestion into an
    ordered findings list (severity class first, then subject id)."""
    findings: list[NetworkFinding] = []
    for alloc in report.allocations:
        if alloc.blocked:
            findings.append(
                NetworkFinding(
                    kind=FindingKind.BLOCKED_DEMAND,
                    subject=alloc.demand_id,
                    metric=1.0,
                    detail="no feasible route and channel",
                )
            )
            continue
        if alloc.demand_id not in gsnr_reports:
            raise ConsistencyError(f"carried demand {alloc.demand_id} has no QoT report")
        channel_qot = gsnr_reports[alloc.demand_id].channel(alloc.channel)
        m = channel_qot.margin_db
        if m < 0:
            findings.append(
                NetworkFinding(
                    kind=FindingKind.NEGATIVE_MARGIN,
                    subject=alloc.demand_id,
                    metric=m,
                    detail=f"margin {m:.3f} dB below 0",
                )
            )
        elif m < config.low_margin_db:
            findings.append(
                NetworkFinding(
                    kind=FindingKind.LOW_MARGIN,
                    subject=alloc.demand_id,
                    metric=m,
                    detail=f"margin {m:.3f} dB below {config.low_margin_db} dB",
                )
            )
    for link_id, channels in sorted(report.link_occupancy.items()):
        util = len(channels) / report.n_channels if report.n_channels else 0.0
        if util > config.congestion_utilization:
            findings.append(
                NetworkFinding(
                    kind=FindingKind.CONGESTED_LINK,
                    subject=link_id,
                    metric=util,
                    detail=f"utilization {util:.3f} above {config.congestion_utilization}",
                )
            )
    findings.sort(key=lambda f: (_KIND_ORDER[f.kind], f.subject))
    return findings


# ---------------------------------------------------------------------------
# Launch-power optimization


@dataclass(frozen=True)
class OptimizationStep:
    step_index: int
    demand_id: str
    channel_index: int
    delta_db: float
    power_dbm: float
    objective_db: float

    def to_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "demand_id": self.demand_id,
            "channel_index": self.channel_index,
            "delta_db": self.delta_db,
            "power_dbm": self.power_dbm,
            "objective_db": self.objective_db,
        }


@dataclass(frozen=True)
class OptimizationTrace:
    steps: tuple[OptimizationStep, ...]
    initial_objective_db: float
    final_objective_db: float
    final_launch_dbm: Mapping[str, float]
    rounds: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "steps": [s.to_dict() for s in self.steps],
            "initial_objective_db": self.initial_objective_db,
            "final_objective_db": self.final_objective_db,
            "final_launch_dbm": dict(sorted(self.final_launch_dbm.items())),
            "rounds": self.rounds,
            "converged": self.converged,
        }


def demand_gsnr_reports(
    demands: Sequence[ServiceDemand],
    report: AllocationReport,
    topology: NetworkTopology,
    grid: SpectrumGrid | None = None,
    thresholds: ModulationThresholds = DEFAULT_THRESHOLDS,
    powers_dbm: Mapping[str, float] | None = None,
) -> dict[str, GsnrReport]:
    """QoT report per carried demand at its allocated channel and route."""
    grid = grid or topology.grid
    by_id = {d.id: d for d in demands}
    out: dict[str, GsnrReport] = {}
    for alloc in report.carried:
        demand = by_id[alloc.demand_id]
        power_dbm = (powers_dbm or {}).get(demand.id, demand.launch_power_dbm)
        route_links = [topology.link_by_id(l) for l in alloc.link_ids]
        out[demand.id] = estimate_gsnr(
            route_links,
            [ChannelLaunch(alloc.channel, dbm_to_w(power_dbm))],
            grid,
            {alloc.channel: demand.modulation},
            thresholds,
        )
    return out


def optimize_launch_power(
    demands: Sequence[ServiceDemand],
    topology: NetworkTopology,
    grid: SpectrumGrid | None = None,
    *,
    bounds_dbm: tuple[float, float] = (-4.0, 4.0),
    step_db: float = 0.5,
    max_rounds: int = 50,
    k: int = 3,
    thresholds: ModulationThresholds = DEFAULT_THRESHOLDS,
) -> OptimizationTrace:
    """Maximize the minimum margin across carried channels by coordinate
    ascent on per-demand launch powers.

    Demands are first routed (first-fit, routes stay fixed).  Each round
    cycles the carried demands in (channel, demand id) order; for each, a
    +step move and then a -step move (clamped to bounds) are tried, and the
    first move that strictly improves the objective is accepted.  The search
    stops after a full round with no accepted move, or after ``max_rounds``.
    """
    grid = grid or topology.grid
    if step_db <= 0:
        raise ValidationError(f"step_db must be > 0, got {step_db}")
    lo, hi = bounds_dbm
    if not lo < hi:
        raise ValidationError(f"bounds_dbm must satisfy lo < hi, got {bounds_dbm}")

    report = provision(demands, topology, grid, k=k)
    carried = sorted(report.carried, key=lambda a: (a.channel, a.demand_id))
    if not carried:
        raise NoCarriedDemandError("no demand was carried; nothing to optimize")

    by_id = {d.id: d for d in demands}
    route_links = {
        a.demand_id: [topology.link_by_id(l) for l in a.link_ids] for a in carried
    }

    def margin_at(alloc: DemandAllocation, power_dbm: float) -> float:
        demand = by_id[alloc.demand_id]
        rep = estimate_gsnr(
            route_links[alloc.demand_id],
            [ChannelLaunch(alloc.channel, dbm_to_w(power_dbm))],
            grid,
            {alloc.channel: demand.modulation},
            thresholds,
        )
        return rep.channels[0].margin_db

    powers = {a.demand_id: by_id[a.demand_id].launch_power_dbm for a in carried}
    margins = {a.demand_id: margin_at(a, powers[a.demand_id]) for a in carried}
    objective = min(margins.values())
    initial_objective = objective

    steps: list[OptimizationStep] = []
    rounds = 0
    converged = False
    for _ in range(max_rounds):
        rounds += 1
        accepted_any = False
        for alloc in carried:
            did = alloc.demand_id
            for direction in (step_db, -step_db):
                new_power = min(hi, max(lo, powers[did] + direction))
                if new_power == powers[did]:
                    continue
                new_margin = margin_at(alloc, new_power)
                others = min(
                    (m for d, m in margins.items() if d != did), default=math.inf
                )
                new_objective = min(new_margin, others)
                if new_objective > objective + IMPROVEMENT_EPS_DB:
                    delta = new_power - powers[did]
                    powers[did] = new_power
                    margins[did] = new_margin
                    objective = new_objective
                    steps.append(
                        OptimizationStep(
                            step_index=len(steps),
                            demand_id=did,
                            channel_index=alloc.channel,
                            delta_db=delta,
                            power_dbm=new_power,
                            objective_db=objective,
                        )
                    )
                    accepted_any = True
                    break
        if not accepted_any:
            converged = True
            break

    logger.debug(
        "optimize_launch_power: %d moves, objective %.4f -> %.4f dB",
        len(steps),
        initial_objective,
        objective,
    )
    return OptimizationTrace(
        steps=tuple(steps),
        initial_objective_db=initial_objective,
        final_objective_db=objective,
        final_launch_dbm=dict(powers),
        rounds=rounds,
        converged=converged,
    )
