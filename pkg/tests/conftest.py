"""Shared fixtures: reference plants, small topologies, alarm builders."""

from __future__ import annotations

import random

import pytest

from lightops.alarms import Alarm, Severity
from lightops.bundled import (
    load_backend_fixture,
    load_bundled_topology,
    load_knowledge_store,
    load_manual_store,
    load_rulebase,
)
from lightops.netmodel import (
    Amplifier,
    Band,
    FiberSpan,
    Link,
    Modulation,
    NetworkTopology,
    Node,
    ServiceDemand,
    SpectrumGrid,
)

# The worked single-span plant: 80 km of standard fiber closed out by a
# transparent amplifier, one 32 GHz channel alone in the band.
REF_ATTEN = 0.2
REF_LENGTH = 80.0
REF_BETA2 = -21.27
REF_GAMMA = 1.3
REF_NF = 5.0
REF_GAIN = REF_ATTEN * REF_LENGTH  # 16 dB
REF_CENTER_THZ = 193.4


def make_span(span_id: str = "sp1", length_km: float = REF_LENGTH,
              atten: float = REF_ATTEN, beta2: float = REF_BETA2,
              gamma: float = REF_GAMMA) -> FiberSpan:
    return FiberSpan(id=span_id, length_km=length_km, atten_db_per_km=atten,
                     beta2_ps2_per_km=beta2, gamma_per_w_km=gamma)


def make_amp(amp_id: str = "amp1", gain_db: float = REF_GAIN,
             nf_db: float = REF_NF) -> Amplifier:
    return Amplifier(id=amp_id, gain_db=gain_db, nf_db=nf_db)


def single_channel_grid(center_thz: float = REF_CENTER_THZ,
                        width_ghz: float = 32.0) -> SpectrumGrid:
    half = width_ghz / 2e3
    return SpectrumGrid(
        bands=(Band("C", center_thz - half, center_thz + half),),
        spacing_ghz=width_ghz,
        symbol_rate_gbd=width_ghz,
        b_ref_ghz=12.5,
    )


def single_link_topology(n_spans: int = 1) -> NetworkTopology:
    elements = []
    for i in range(n_spans):
        elements.append(make_span(f"sp{i}"))
        elements.append(make_amp(f"amp{i}"))
    return NetworkTopology(
        nodes=(Node("A"), Node("B")),
        links=(Link("A-B", ("A", "B"), tuple(elements)),),
        grid=single_channel_grid(),
    )


def small_grid(n_channels: int, spacing_ghz: float = 100.0) -> SpectrumGrid:
    width_thz = n_channels * spacing_ghz / 1e3
    return SpectrumGrid(
        bands=(Band("C", 193.0, 193.0 + width_thz),),
        spacing_ghz=spacing_ghz,
        symbol_rate_gbd=64.0,
        b_ref_ghz=12.5,
    )


def random_small_topology(rng: random.Random, n_nodes: int, n_channels: int) -> NetworkTopology:
    """Connected topology with random extra edges and random span lengths."""
    names = [f"Nd{i}" for i in range(n_nodes)]
    edges: set[tuple[str, str]] = set()
    for i in range(1, n_nodes):
        j = rng.randrange(i)
        edges.add((names[j], names[i]))
    possible = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]
                if (a, b) not in edges]
    rng.shuffle(possible)
    for extra in possible[: rng.randint(0, max(0, len(possible) // 2))]:
        edges.add(extra)
    links = []
    for idx, (a, b) in enumerate(sorted(edges)):
        length = rng.choice([60.0, 75.0, 80.0, 90.0, 100.0, 120.0])
        span = make_span(f"sp{idx}", length_km=length)
        amp = make_amp(f"amp{idx}", gain_db=span.loss_db)
        links.append(Link(f"L{idx}", (a, b), (span, amp)))
    return NetworkTopology(
        nodes=tuple(Node(n) for n in names),
        links=tuple(links),
        grid=small_grid(n_channels),
    )


def random_demands(rng: random.Random, topology: NetworkTopology, n: int) -> list[ServiceDemand]:
    names = topology.node_ids()
    demands = []
    for i in range(n):
        src, dst = rng.sample(names, 2)
        demands.append(
            ServiceDemand(
                id=f"d{i}",
                src=src,
                dst=dst,
                launch_power_dbm=round(rng.uniform(-3.0, 3.0), 1),
                modulation=rng.choice(list(Modulation)),
            )
        )
    return demands


def make_alarm(alarm_id: str, ts: int, severity: Severity = Severity.CRITICAL,
               alarm_type: str = "LOS", source_ne: str = "NE-1",
               description: str = "Loss of signal detected on line port") -> Alarm:
    return Alarm(id=alarm_id, ts=ts, severity=severity, alarm_type=alarm_type,
                 source_ne=source_ne, description=description)


ALARM_VOCAB = (
    ("LOS", "Loss of signal detected on line port"),
    ("LOF", "Loss of frame alignment on client port"),
    ("BER_DEG", "Bit error rate degradation beyond threshold"),
    ("TEMP_HIGH", "Shelf temperature above operating range"),
    ("POWER_FLUCT", "Optical power fluctuation on receive side"),
    ("FAN_FAIL", "Cooling fan unit failure detected"),
)


def random_alarms(rng: random.Random, n: int, t0: int = 0, spread_ms: int = 120000) -> list[Alarm]:
    out = []
    for i in range(n):
        alarm_type, description = rng.choice(ALARM_VOCAB)
        out.append(
            Alarm(
                id=f"r{i:04d}",
                ts=t0 + rng.randrange(spread_ms),
                severity=rng.choice(list(Severity)),
                alarm_type=alarm_type,
                source_ne=f"NE-{rng.randrange(1, 8)}",
                description=description,
            )
        )
    return out


@pytest.fixture(scope="session")
def bundled_topology():
    return load_bundled_topology()


@pytest.fixture(scope="session")
def manual_store():
    return load_manual_store()


@pytest.fixture(scope="session")
def knowledge_store():
    return load_knowledge_store()


@pytest.fixture(scope="session")
def rulebase():
    return load_rulebase()


@pytest.fixture()
def scripted_backend():
    return load_backend_fixture()


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "paper_scale: full-size evaluation runs, skipped unless requested"
    )


def pytest_addoption(parser):
    parser.addoption(
        "--paper-scale",
        action="store_true",
        default=False,
        help="also run the full 2,400-situation evaluation matrix",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--paper-scale"):
        return
    skip = pytest.mark.skip(reason="pass --paper-scale to run")
    for item in items:
        if "paper_scale" in item.keywords:
            item.add_marker(skip)
