"""Optical-network data model: fiber spans, amplifiers, links, spectrum grids,
service demands, and seeded synthetic topology generation.

Conventions
-----------
- lengths in km, attenuation in dB/km, dispersion (beta2) in ps^2/km,
  nonlinear coefficient (gamma) in 1/(W*km), frequencies in THz on grids,
  gains and noise figures in dB
- links are bidirectional: a declared link carries traffic in both
  directions with the same element chain
- topologies are immutable once built; all mutation happens by constructing
  a new object

File format (JSON): top-level keys ``nodes``, ``links``, ``grid``.  Field
names mirror the dataclass fields below.  Unknown keys are rejected so typos
fail loudly instead of silently configuring nothing.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence, Union

from .errors import InfeasibleError, ParseError, ValidationError

# Sanity floor for amplifier noise figures; real EDFAs sit above the 3 dB
# quantum limit.  Kept module-level so validation callers can override.
DEFAULT_NF_FLOOR_DB = 3.0


class Modulation(str, Enum):
    """Modulation formats with configured GSNR thresholds."""

    QPSK = "QPSK"
    QAM8 = "8QAM"
    QAM16 = "16QAM"
    QAM64 = "64QAM"

    @classmethod
    def parse(cls, value: str) -> "Modulation":
        for member in cls:
            if member.value == value:
                return member
        raise ParseError(f"unknown modulation {value!r}")


@dataclass(frozen=True)
class FiberSpan:
    """One fiber span between amplification sites."""

    id: str
    length_km: float
    atten_db_per_km: float
    beta2_ps2_per_km: float
    gamma_per_w_km: float

    @property
    def loss_db(self) -> float:
        return self.length_km * self.atten_db_per_km

    def check(self) -> list[str]:
        out = []
        if not self.id:
            out.append("span id must be non-empty")
        if not self.length_km > 0:
            out.append(f"span {self.id}: length_km must be > 0, got {self.length_km}")
        if not self.atten_db_per_km > 0:
            out.append(
                f"span {self.id}: atten_db_per_km must be > 0, got {self.atten_db_per_km}"
            )
        if self.gamma_per_w_km < 0:
            out.append(
                f"span {self.id}: gamma_per_w_km must be >= 0, got {self.gamma_per_w_km}"
            )
        return out


@dataclass(frozen=True)
class Amplifier:
    """Lumped EDFA-style amplifier."""

    id: str
    gain_db: float
    nf_db: float
    tilt_db: float = 0.0

    def check(self, nf_floor_db: float = DEFAULT_NF_FLOOR_DB) -> list[str]:
        out = []
        if not self.id:
            out.append("amplifier id must be non-empty")
        if self.gain_db < 0:
            out.append(f"amplifier {self.id}: gain_db must be >= 0, got {self.gain_db}")
        if self.gain_db > 0 and self.nf_db < nf_floor_db:
            out.append(
                f"amplifier {self.id}: nf_db {self.nf_db} below floor {nf_floor_db}"
            )
        return out


Element = Union[FiberSpan, Amplifier]


@dataclass(frozen=True)
class Link:
    """Directed element chain between two nodes, mirrored for the reverse
    direction.  Elements alternate span, amplifier, span, amplifier, ...
    with exactly one amplifier after each span."""

    id: str
    endpoints: tuple[str, str]
    elements: tuple[Element, ...]

    @property
    def spans(self) -> tuple[FiberSpan, ...]:
        return tuple(e for e in self.elements if isinstance(e, FiberSpan))

    @property
    def amplifiers(self) -> tuple[Amplifier, ...]:
        return tuple(e for e in self.elements if isinstance(e, Amplifier))

    @property
    def length_km(self) -> float:
        return sum(s.length_km for s in self.spans)

    def check(self, nf_floor_db: float = DEFAULT_NF_FLOOR_DB) -> list[str]:
        out = []
        if not self.id:
            out.append("link id must be non-empty")
        if len(self.endpoints) != 2 or self.endpoints[0] == self.endpoints[1]:
            out.append(f"link {self.id}: endpoints must be two distinct nodes")
        if not self.spans:
            out.append(f"link {self.id}: at least one span required")
        for i, element in enumerate(self.elements):
            want_span = i % 2 == 0
            if want_span is not isinstance(element, FiberSpan):
                out.append(
                    f"link {self.id}: element {i} breaks the span/amplifier alternation"
                )
        if len(self.elements) % 2 != 0:
            out.append(f"link {self.id}: every span needs a following amplifier")
        for element in self.elements:
            if isinstance(element, FiberSpan):
                out.extend(element.check())
            else:
                out.extend(element.check(nf_floor_db))
        return out

    def check_transparent(self, rel_tol: float = 1e-9) -> list[str]:
        """Transparent-link mode: each amplifier exactly undoes the loss of
        the span before it."""
        out = []
        for i in range(0, len(self.elements) - 1, 2):
            span = self.elements[i]
            amp = self.elements[i + 1]
            if not isinstance(span, FiberSpan) or not isinstance(amp, Amplifier):
                continue  # alternation violation already reported by check()
            if not math.isclose(amp.gain_db, span.loss_db, rel_tol=rel_tol, abs_tol=1e-12):
                out.append(
                    f"link {self.id}: amplifier {amp.id} gain {amp.gain_db} dB "
                    f"!= span {span.id} loss {span.loss_db} dB"
                )
        return out


@dataclass(frozen=True)
class Band:
    """One contiguous transmission band, bounds in THz."""

    name: str
    start_thz: float
    end_thz: float


@dataclass(frozen=True)
class SpectrumGrid:
    """Fixed-grid channel plan over one or more bands."""

    bands: tuple[Band, ...]
    spacing_ghz: float
    symbol_rate_gbd: float
    b_ref_ghz: float

    def __post_init__(self):
        out = []
        for band in self.bands:
            if band.end_thz <= band.start_thz:
                out.append(f"band {band.name}: end_thz must exceed start_thz")
        ordered = sorted(self.bands, key=lambda b: b.start_thz)
        for lo, hi in zip(ordered, ordered[1:]):
            if hi.start_thz < lo.end_thz:
                out.append(f"bands {lo.name} and {hi.name} overlap")
        if not self.spacing_ghz > 0:
            out.append("spacing_ghz must be > 0")
        if not self.symbol_rate_gbd > 0:
            out.append("symbol_rate_gbd must be > 0")
        if self.spacing_ghz < self.symbol_rate_gbd:
            out.append(
                f"spacing {self.spacing_ghz} GHz below symbol rate "
                f"{self.symbol_rate_gbd} GBd"
            )
        if not self.b_ref_ghz > 0:
            out.append("b_ref_ghz must be > 0")
        if out:
            raise ValidationError(out)

    @property
    def channel_bandwidth_hz(self) -> float:
        return self.symbol_rate_gbd * 1e9


@dataclass(frozen=True)
class Channel:
    """One grid slot; ``index`` is the global frequency-ordered position."""

    index: int
    band: str
    center_thz: float

    @property
    def center_hz(self) -> float:
        return self.center_thz * 1e12


@dataclass(frozen=True)
class Node:
    id: str
    label: str = ""


@dataclass(frozen=True)
class ServiceDemand:
    """Connection request between two nodes."""

    id: str
    src: str
    dst: str
    launch_power_dbm: float
    modulation: Modulation

    def check(self, power_bounds_dbm: tuple[float, float] = (-4.0, 4.0)) -> list[str]:
        out = []
        if not self.id:
            out.append("demand id must be non-empty")
        if self.src == self.dst:
            out.append(f"demand {self.id}: src and dst must differ")
        lo, hi = power_bounds_dbm
        if not lo <= self.launch_power_dbm <= hi:
            out.append(
                f"demand {self.id}: launch_power_dbm {self.launch_power_dbm} "
                f"outside [{lo}, {hi}]"
            )
        return out


@dataclass(frozen=True)
class NetworkTopology:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    grid: SpectrumGrid

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def link_by_id(self, link_id: str) -> Link:
        for link in self.links:
            if link.id == link_id:
                return link
        raise KeyError(link_id)


# Default C+L grid: 100 GHz spacing, 64 GBd carriers, 12.5 GHz noise
# reference bandwidth.  45 channels per band, 90 total.
DEFAULT_GRID = SpectrumGrid(
    bands=(Band("C", 191.6, 196.1), Band("L", 186.1, 190.6)),
    spacing_ghz=100.0,
    symbol_rate_gbd=64.0,
    b_ref_ghz=12.5,
)


def band_channel_count(band: Band, spacing_ghz: float) -> int:
    """Number of whole channel slots that fit in the band.

    The quotient is computed with a tiny epsilon so that spans that are an
    exact multiple of the spacing (e.g. 4.5 THz / 100 GHz) do not lose a
    channel to float rounding.
    """
    spacing_thz = spacing_ghz / 1e3
    return int(math.floor((band.end_thz - band.start_thz) / spacing_thz + 1e-9))


def grid_channels(grid: SpectrumGrid) -> list[Channel]:
    """Enumerate all channels, frequency-ascending, with contiguous indices.

    Channel centers sit at band_start + spacing/2 + k*spacing.
    """
    raw: list[tuple[float, str]] = []
    for band in grid.bands:
        count = band_channel_count(band, grid.spacing_ghz)
        spacing_thz = grid.spacing_ghz / 1e3
        for k in range(count):
            center = band.start_thz + spacing_thz / 2 + k * spacing_thz
            raw.append((center, band.name))
    raw.sort(key=lambda item: item[0])
    return [Channel(index=i, band=name, center_thz=c) for i, (c, name) in enumerate(raw)]


def total_wdm_bandwidth(grid: SpectrumGrid) -> float:
    """Total populated WDM bandwidth in Hz: channel count times spacing,
    summed over bands.  This is the B_wdm input of the NLI formula."""
    total_channels = sum(band_channel_count(b, grid.spacing_ghz) for b in grid.bands)
    return total_channels * grid.spacing_ghz * 1e9


# ---------------------------------------------------------------------------
# Topology file I/O


_NODE_KEYS = {"id", "label"}
_LINK_KEYS = {"id", "endpoints", "elements"}
_SPAN_KEYS = {"kind", "id", "length_km", "atten_db_per_km", "beta2_ps2_per_km", "gamma_per_w_km"}
_AMP_KEYS = {"kind", "id", "gain_db", "nf_db", "tilt_db"}
_GRID_KEYS = {"bands", "spacing_ghz", "symbol_rate_gbd", "b_ref_ghz"}
_BAND_KEYS = {"name", "start_thz", "end_thz"}
_TOP_KEYS = {"nodes", "links", "grid"}


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ParseError(f"{where}: unknown key(s) {', '.join(unknown)}")
    missing = sorted(required - set(obj))
    if missing:
        raise ParseError(f"{where}: missing key(s) {', '.join(missing)}")


def _number(obj: dict, key: str, where: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}.{key}: expected a number, got {value!r}")
    return float(value)


def _string(obj: dict, key: str, where: str) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise ParseError(f"{where}.{key}: expected a string, got {value!r}")
    return value


def _parse_element(raw: dict, where: str) -> Element:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ParseError(f"{where}: element needs a 'kind' of 'span' or 'amp'")
    kind = raw["kind"]
    if kind == "span":
        _require_keys(raw, _SPAN_KEYS, _SPAN_KEYS, where)
        return FiberSpan(
            id=_string(raw, "id", where),
            length_km=_number(raw, "length_km", where),
            atten_db_per_km=_number(raw, "atten_db_per_km", where),
            beta2_ps2_per_km=_number(raw, "beta2_ps2_per_km", where),
            gamma_per_w_km=_number(raw, "gamma_per_w_km", where),
        )
    if kind == "amp":
        _require_keys(raw, _AMP_KEYS, _AMP_KEYS - {"tilt_db"}, where)
        return Amplifier(
            id=_string(raw, "id", where),
            gain_db=_number(raw, "gain_db", where),
            nf_db=_number(raw, "nf_db", where),
            tilt_db=_number(raw, "tilt_db", where) if "tilt_db" in raw else 0.0,
        )
    raise ParseError(f"{where}.kind: expected 'span' or 'amp', got {kind!r}")


def parse_grid(raw: dict, where: str = "grid") -> SpectrumGrid:
    _require_keys(raw, _GRID_KEYS, _GRID_KEYS, where)
    if not isinstance(raw["bands"], list):
        raise ParseError(f"{where}.bands: expected a list")
    bands = []
    for i, braw in enumerate(raw["bands"]):
        bwhere = f"{where}.bands[{i}]"
        _require_keys(braw, _BAND_KEYS, _BAND_KEYS, bwhere)
        bands.append(
            Band(
                name=_string(braw, "name", bwhere),
                start_thz=_number(braw, "start_thz", bwhere),
                end_thz=_number(braw, "end_thz", bwhere),
            )
        )
    return SpectrumGrid(
        bands=tuple(bands),
        spacing_ghz=_number(raw, "spacing_ghz", where),
        symbol_rate_gbd=_number(raw, "symbol_rate_gbd", where),
        b_ref_ghz=_number(raw, "b_ref_ghz", where),
    )


def validate_topology(
    topology: NetworkTopology,
    *,
    require_connected: bool = True,
    transparent: bool = True,
    nf_floor_db: float = DEFAULT_NF_FLOOR_DB,
) -> list[str]:
    """Collect every invariant violation; empty list means valid."""
    out: list[str] = []
    seen_nodes: set[str] = set()
    for node in topology.nodes:
        if not node.id:
            out.append("node id must be non-empty")
        if node.id in seen_nodes:
            out.append(f"duplicate node id {node.id}")
        seen_nodes.add(node.id)

    seen_links: set[str] = set()
    seen_pairs: set[tuple[str, str]] = set()
    for link in topology.links:
        if link.id in seen_links:
            out.append(f"duplicate link id {link.id}")
        seen_links.add(link.id)
        out.extend(link.check(nf_floor_db))
        if transparent:
            out.extend(link.check_transparent())
        for end in link.endpoints:
            if end not in seen_nodes:
                out.append(f"link {link.id}: endpoint {end} is not a declared node")
        pair = tuple(sorted(link.endpoints))
        if len(pair) == 2:
            if pair in seen_pairs:
                out.append(f"link {link.id}: parallel link between {pair[0]} and {pair[1]}")
            seen_pairs.add(pair)  # bidirectional: one link per node pair

    if require_connected and topology.nodes:
        adj: dict[str, set[str]] = {n.id: set() for n in topology.nodes}
        for link in topology.links:
            a, b = link.endpoints
            if a in adj and b in adj:
                adj[a].add(b)
                adj[b].add(a)
        stack = [topology.nodes[0].id]
        reached: set[str] = set()
        while stack:
            n = stack.pop()
            if n in reached:
                continue
            reached.add(n)
            stack.extend(adj[n] - reached)
        if len(reached) != len(topology.nodes):
            missing = sorted(set(adj) - reached)
            out.append(f"topology is not connected; unreachable: {', '.join(missing)}")
    return out


def load_topology(
    path: str | Path,
    *,
    require_connected: bool = True,
    transparent: bool = True,
) -> NetworkTopology:
    """Load and fully validate a topology file.

    Raises ParseError with line/field context for malformed files and
    ValidationError listing all invariant violations at once.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    _require_keys(raw, _TOP_KEYS, _TOP_KEYS, str(path))

    if not isinstance(raw["nodes"], list) or not isinstance(raw["links"], list):
        raise ParseError(f"{path}: 'nodes' and 'links' must be lists")

    nodes = []
    for i, nraw in enumerate(raw["nodes"]):
        where = f"nodes[{i}]"
        _require_keys(nraw, _NODE_KEYS, {"id"}, where)
        nodes.append(
            Node(
                id=_string(nraw, "id", where),
                label=_string(nraw, "label", where) if "label" in nraw else "",
            )
        )

    links = []
    for i, lraw in enumerate(raw["links"]):
        where = f"links[{i}]"
        _require_keys(lraw, _LINK_KEYS, _LINK_KEYS, where)
        endpoints = lraw["endpoints"]
        if (
            not isinstance(endpoints, list)
            or len(endpoints) != 2
            or not all(isinstance(e, str) for e in endpoints)
        ):
            raise ParseError(f"{where}.endpoints: expected two node id strings")
        if not isinstance(lraw["elements"], list):
            raise ParseError(f"{where}.elements: expected a list")
        elements = tuple(
            _parse_element(eraw, f"{where}.elements[{j}]")
            for j, eraw in enumerate(lraw["elements"])
        )
        links.append(
            Link(id=_string(lraw, "id", where), endpoints=(endpoints[0], endpoints[1]), elements=elements)
        )

    grid = parse_grid(raw["grid"])
    topology = NetworkTopology(nodes=tuple(nodes), links=tuple(links), grid=grid)
    violations = validate_topology(
        topology, require_connected=require_connected, transparent=transparent
    )
    if violations:
        raise ValidationError(violations)
    return topology


def topology_to_dict(topology: NetworkTopology) -> dict:
    def element_to_dict(e: Element) -> dict:
        if isinstance(e, FiberSpan):
            return {
                "kind": "span",
                "id": e.id,
                "length_km": e.length_km,
                "atten_db_per_km": e.atten_db_per_km,
                "beta2_ps2_per_km": e.beta2_ps2_per_km,
                "gamma_per_w_km": e.gamma_per_w_km,
            }
        return {
            "kind": "amp",
            "id": e.id,
            "gain_db": e.gain_db,
            "nf_db": e.nf_db,
            "tilt_db": e.tilt_db,
        }

    return {
        "nodes": [{"id": n.id, "label": n.label} for n in topology.nodes],
        "links": [
            {
                "id": l.id,
                "endpoints": list(l.endpoints),
                "elements": [element_to_dict(e) for e in l.elements],
            }
            for l in topology.links
        ],
        "grid": {
            "bands": [
                {"name": b.name, "start_thz": b.start_thz, "end_thz": b.end_thz}
                for b in topology.grid.bands
            ],
            "spacing_ghz": topology.grid.spacing_ghz,
            "symbol_rate_gbd": topology.grid.symbol_rate_gbd,
            "b_ref_ghz": topology.grid.b_ref_ghz,
        },
    }


def save_topology(topology: NetworkTopology, path: str | Path) -> None:
    """Write canonical JSON (fixed key order, repr floats, trailing newline)
    so identical topologies produce byte-identical files."""
    Path(path).write_text(
        json.dumps(topology_to_dict(topology), indent=2) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Seeded synthetic topology generation


@dataclass(frozen=True)
class SpanProfile:
    """Parameter ranges for synthetic spans; values drawn uniformly."""

    length_km: tuple[float, float] = (60.0, 120.0)
    atten_db_per_km: tuple[float, float] = (0.19, 0.22)
    beta2_ps2_per_km: float = -21.27
    gamma_per_w_km: float = 1.3
    spans_per_link: tuple[int, int] = (1, 3)
    amp_nf_db: tuple[float, float] = (4.5, 6.0)


DEFAULT_SPAN_PROFILE = SpanProfile()


def generate_synthetic_topology(
    n_nodes: int,
    n_links: int,
    seed: int,
    span_profile: SpanProfile = DEFAULT_SPAN_PROFILE,
    grid: SpectrumGrid = DEFAULT_GRID,
) -> NetworkTopology:
    """Deterministic continental-scale stand-in topology.

    Nodes get seeded planar positions; the link set is the Euclidean minimum
    spanning tree (guaranteeing connectivity) plus the geometrically shortest
    remaining candidate edges until exactly ``n_links`` links exist.  Spans
    and amplifiers are drawn from ``span_profile``; amplifier gains are
    transparent (gain equals the preceding span's loss).

    The same arguments always produce a byte-identical topology.
    """
    if n_nodes < 2:
        raise InfeasibleError(f"need at least 2 nodes, got {n_nodes}")
    min_links = n_nodes - 1
    max_links = n_nodes * (n_nodes - 1) // 2
    if not min_links <= n_links <= max_links:
        raise InfeasibleError(
            f"{n_links} links infeasible for {n_nodes} nodes "
            f"(connected simple graph needs {min_links}..{max_links})"
        )

    rng = random.Random(seed)
    width = max(2, len(str(n_nodes)))
    node_ids = [f"N{i + 1:0{width}d}" for i in range(n_nodes)]
    positions = {nid: (rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)) for nid in node_ids}

    def dist(a: str, b: str) -> float:
        (ax, ay), (bx, by) = positions[a], positions[b]
        return math.hypot(ax - bx, ay - by)

    candidates = sorted(
        (
            (dist(node_ids[i], node_ids[j]), node_ids[i], node_ids[j])
            for i in range(n_nodes)
            for j in range(i + 1, n_nodes)
        ),
        key=lambda t: (t[0], t[1], t[2]),
    )

    parent = {nid: nid for nid in node_ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen: list[tuple[str, str]] = []
    leftover: list[tuple[str, str]] = []
    for _, a, b in candidates:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            chosen.append((a, b))
        else:
            leftover.append((a, b))
    chosen.extend(leftover[: n_links - len(chosen)])

    lwidth = max(3, len(str(n_links)))
    links = []
    for k, (a, b) in enumerate(chosen):
        link_id = f"L{k + 1:0{lwidth}d}"
        n_spans = rng.randint(*span_profile.spans_per_link)
        elements: list[Element] = []
        for j in range(n_spans):
            length = rng.uniform(*span_profile.length_km)
            atten = rng.uniform(*span_profile.atten_db_per_km)
            nf = rng.uniform(*span_profile.amp_nf_db)
            span = FiberSpan(
                id=f"{link_id}-S{j}",
                length_km=length,
                atten_db_per_km=atten,
                beta2_ps2_per_km=span_profile.beta2_ps2_per_km,
                gamma_per_w_km=span_profile.gamma_per_w_km,
            )
            elements.append(span)
            elements.append(
                Amplifier(id=f"{link_id}-A{j}", gain_db=span.loss_db, nf_db=nf)
            )
        links.append(Link(id=link_id, endpoints=(a, b), elements=tuple(elements)))

    topology = NetworkTopology(
        nodes=tuple(Node(id=nid, label=f"node-{i + 1}") for i, nid in enumerate(node_ids)),
        links=tuple(links),
        grid=grid,
    )
    violations = validate_topology(topology, require_connected=True, transparent=True)
    if violations:  # generator bug if this ever triggers
        raise ValidationError(violations)
    return topology


# ---------------------------------------------------------------------------
# Demand file I/O

_DEMAND_KEYS = {"id", "src", "dst", "launch_power_dbm", "modulation"}


def parse_demand(raw: dict, where: str = "demand") -> ServiceDemand:
    _require_keys(raw, _DEMAND_KEYS, _DEMAND_KEYS, where)
    return ServiceDemand(
        id=_string(raw, "id", where),
        src=_string(raw, "src", where),
        dst=_string(raw, "dst", where),
        launch_power_dbm=_number(raw, "launch_power_dbm", where),
        modulation=Modulation.parse(_string(raw, "modulation", where)),
    )


def load_demands(
    path: str | Path, power_bounds_dbm: tuple[float, float] = (-4.0, 4.0)
) -> list[ServiceDemand]:
    """Load a JSON list of service demands, validating every record."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: expected a JSON list of demands")
    demands = [parse_demand(d, f"demands[{i}]") for i, d in enumerate(raw)]
    violations: list[str] = []
    seen: set[str] = set()
    for demand in demands:
        if demand.id in seen:
            violations.append(f"duplicate demand id {demand.id}")
        seen.add(demand.id)
        violations.extend(demand.check(power_bounds_dbm))
    if violations:
        raise ValidationError(violations)
    return demands


def demands_to_dict(demands: Sequence[ServiceDemand]) -> list[dict]:
    return [
        {
            "id": d.id,
            "src": d.src,
            "dst": d.dst,
            "launch_power_dbm": d.launch_power_dbm,
            "modulation": d.modulation.value,
        }
        for d in demands
    ]
