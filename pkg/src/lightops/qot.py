"""Quality-of-transmission estimation with an incoherent per-span GN model.

The estimator walks a route element by element, accumulating per-channel
signal, ASE, and nonlinear-interference powers, and reports GSNR and margin
after every link.  All powers are linear watts; conversions happen at the
edges.

Formulas (per span / per amplifier):

    alpha_p   = atten_db_per_km * ln(10) / 10            [1/km]
    L_eff     = (1 - exp(-alpha_p * L)) / alpha_p        [km]
    L_eff,a   = 1 / alpha_p                              [km]
    P_ASE     = h * nu * NF_lin * (G_lin - 1) * B_n      [W]
    P_NLI     = (8/27) * gamma^2 * L_eff^2 * (P/B_ch)^3 * B_ch
                * asinh((pi^2/2) * |beta2| * L_eff,a * B_wdm^2)
                / (pi * |beta2| * L_eff,a)               [W]

beta2 converts from ps^2/km to s^2/km (factor 1e-24) inside the NLI
evaluation.  GSNR = P / (P_ASE + P_NLI), with both noise terms accounted in
the channel (symbol-rate) bandwidth so the ratio is physically consistent.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence, Union

from .errors import (
    DomainError,
    EmptyRouteError,
    UnknownModulationError,
    ValidationError,
)
from .netmodel import (
    Amplifier,
    Channel,
    FiberSpan,
    Link,
    Modulation,
    SpectrumGrid,
    grid_channels,
    total_wdm_bandwidth,
)

# Planck constant, J*s (2019 SI exact value).
PLANCK_H_JS = 6.62607015e-34


def dbm_to_w(dbm: float) -> float:
    return 1e-3 * 10 ** (dbm / 10)


def w_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise DomainError(f"cannot express {watts} W in dBm")
    return 10 * math.log10(watts / 1e-3)


def db_to_lin(db: float) -> float:
    return 10 ** (db / 10)


class EffectiveLength(NamedTuple):
    l_eff_km: float
    l_eff_asymptotic_km: float


def effective_length(atten_db_per_km: float, length_km: float) -> EffectiveLength:
    """Nonlinear effective length and its asymptotic (long-span) limit."""
    if atten_db_per_km <= 0:
        raise DomainError(f"atten_db_per_km must be > 0, got {atten_db_per_km}")
    if length_km <= 0:
        raise DomainError(f"length_km must be > 0, got {length_km}")
    alpha_p = atten_db_per_km * math.log(10) / 10
    l_eff = (1 - math.exp(-alpha_p * length_km)) / alpha_p
    return EffectiveLength(l_eff, 1 / alpha_p)


def ase_power(amp: Amplifier, center_freq_hz: float, b_ref_hz: float) -> float:
    """ASE power added by one amplifier, in watts over ``b_ref_hz``.

    A gain below 0 dB would make the (G - 1) factor negative; such an
    element attenuates and emits no ASE, so the result is clamped to 0 with
    a warning instead of going negative.
    """
    if center_freq_hz <= 0:
        raise DomainError(f"center_freq_hz must be > 0, got {center_freq_hz}")
    if b_ref_hz <= 0:
        raise DomainError(f"b_ref_hz must be > 0, got {b_ref_hz}")
    g_lin = db_to_lin(amp.gain_db)
    nf_lin = db_to_lin(amp.nf_db)
    if g_lin < 1:
        warnings.warn(
            f"amplifier {amp.id}: gain {amp.gain_db} dB < 0, ASE clamped to 0",
            stacklevel=2,
        )
        return 0.0
    return PLANCK_H_JS * center_freq_hz * nf_lin * (g_lin - 1) * b_ref_hz


@dataclass(frozen=True)
class ChannelLaunch:
    """Launch state of one channel entering a span."""

    channel_index: int
    power_w: float

    def __post_init__(self):
        if self.power_w <= 0:
            raise ValidationError(
                f"channel {self.channel_index}: power_w must be > 0, got {self.power_w}"
            )


def nli_power_span(
    span: FiberSpan, launch: ChannelLaunch, b_ch_hz: float, b_wdm_hz: float
) -> float:
    """Nonlinear interference power generated by one span, in watts.

    Evaluated at the span-input channel power.  Returns 0 for a linear
    fiber (gamma = 0).  A zero dispersion magnitude has no closed form here
    and raises DomainError.
    """
    if b_ch_hz <= 0 or b_wdm_hz <= 0:
        raise DomainError("b_ch_hz and b_wdm_hz must be > 0")
    if span.gamma_per_w_km == 0:
        return 0.0
    beta2_abs = abs(span.beta2_ps2_per_km) * 1e-24  # ps^2/km -> s^2/km
    if beta2_abs == 0:
        raise DomainError(f"span {span.id}: |beta2| must be > 0 when gamma > 0")
    l_eff, l_eff_a = effective_length(span.atten_db_per_km, span.length_km)
    psd = launch.power_w / b_ch_hz
    num = math.asinh((math.pi**2 / 2) * beta2_abs * l_eff_a * b_wdm_hz**2)
    den = math.pi * beta2_abs * l_eff_a
    return (8 / 27) * span.gamma_per_w_km**2 * l_eff**2 * psd**3 * b_ch_hz * num / den


# ---------------------------------------------------------------------------
# Modulation thresholds and margin

_THRESHOLD_ORDER = (Modulation.QPSK, Modulation.QAM8, Modulation.QAM16, Modulation.QAM64)


@dataclass(frozen=True)
class ModulationThresholds:
    """Required GSNR per modulation format, dB."""

    required_gsnr_db: Mapping[Modulation, float]

    def __post_init__(self):
        values = []
        for mod in _THRESHOLD_ORDER:
            if mod in self.required_gsnr_db:
                values.append(self.required_gsnr_db[mod])
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValidationError(
                "thresholds must increase strictly with modulation order"
            )

    def required(self, modulation: Modulation) -> float:
        try:
            return self.required_gsnr_db[modulation]
        except KeyError:
            raise UnknownModulationError(
                f"no GSNR threshold configured for {modulation.value}"
            ) from None


DEFAULT_THRESHOLDS = ModulationThresholds(
    {
        Modulation.QPSK: 9.0,
        Modulation.QAM8: 12.0,
        Modulation.QAM16: 15.0,
        Modulation.QAM64: 21.0,
    }
)


def margin(gsnr_db: float, modulation: Modulation, thresholds: ModulationThresholds) -> float:
    """Margin = achieved GSNR minus the format's required GSNR, dB."""
    return gsnr_db - thresholds.required(modulation)


# ---------------------------------------------------------------------------
# Route-level GSNR estimation


@dataclass(frozen=True)
class ChannelQot:
    """Per-channel accumulated state at a snapshot point."""

    channel_index: int
    center_thz: float
    power_w: float
    ase_w: float
    nli_w: float
    gsnr_db: float
    margin_db: float
    modulation: Modulation

    def to_dict(self) -> dict:
        return {
            "channel_index": self.channel_index,
            "center_thz": self.center_thz,
            "power_w": self.power_w,
            "ase_w": self.ase_w,
            "nli_w": self.nli_w,
            "gsnr_db": self.gsnr_db,
            "margin_db": self.margin_db,
            "modulation": self.modulation.value,
        }


@dataclass(frozen=True)
class LinkQot:
    """Cumulative per-channel state after traversing one link of the route."""

    link_id: str
    channels: tuple[ChannelQot, ...]

    def to_dict(self) -> dict:
        return {"link_id": self.link_id, "channels": [c.to_dict() for c in self.channels]}


@dataclass(frozen=True)
class GsnrReport:
    """End-of-route channel states plus the after-each-link breakdown."""

    channels: tuple[ChannelQot, ...]
    links: tuple[LinkQot, ...]

    def channel(self, index: int) -> ChannelQot:
        for ch in self.channels:
            if ch.channel_index == index:
                return ch
        raise KeyError(index)

    def to_dict(self) -> dict:
        return {
            "channels": [c.to_dict() for c in self.channels],
            "links": [l.to_dict() for l in self.links],
        }


def _gsnr_db(power_w: float, noise_w: float) -> float:
    if noise_w <= 0:
        return math.inf
    return 10 * math.log10(power_w / noise_w)


def estimate_gsnr(
    route: Sequence[Link],
    launches: Sequence[ChannelLaunch],
    grid: SpectrumGrid,
    modulations: Union[Modulation, Mapping[int, Modulation]],
    thresholds: ModulationThresholds = DEFAULT_THRESHOLDS,
) -> GsnrReport:
    """Estimate GSNR for the launched channels over an ordered link route.

    Per span: NLI is added at the span-input power, then the span loss
    attenuates signal and both noise terms.  Per amplifier: gain applies to
    signal, ASE, and NLI, then the amplifier's own ASE is added.  Noise is
    accounted in the channel bandwidth (grid symbol rate).

    ``modulations`` is either one format for every launch or a mapping from
    channel index to format (used for the margin column).
    """
    if not route:
        raise EmptyRouteError("route has no links")

    channels = {ch.index: ch for ch in grid_channels(grid)}
    indices = [l.channel_index for l in launches]
    if len(set(indices)) != len(indices):
        raise ValidationError("duplicate channel index in launches")
    for launch in launches:
        if launch.channel_index not in channels:
            raise DomainError(f"channel {launch.channel_index} not on the grid")

    def modulation_for(index: int) -> Modulation:
        if isinstance(modulations, Modulation):
            return modulations
        try:
            return modulations[index]
        except KeyError:
            raise UnknownModulationError(f"no modulation given for channel {index}") from None

    b_ch = grid.channel_bandwidth_hz
    b_wdm = total_wdm_bandwidth(grid)

    p_sig = {l.channel_index: l.power_w for l in launches}
    p_ase = {l.channel_index: 0.0 for l in launches}
    p_nli = {l.channel_index: 0.0 for l in launches}

    def snapshot(idx: int) -> ChannelQot:
        gsnr = _gsnr_db(p_sig[idx], p_ase[idx] + p_nli[idx])
        mod = modulation_for(idx)
        return ChannelQot(
            channel_index=idx,
            center_thz=channels[idx].center_thz,
            power_w=p_sig[idx],
            ase_w=p_ase[idx],
            nli_w=p_nli[idx],
            gsnr_db=gsnr,
            margin_db=margin(gsnr, mod, thresholds),
            modulation=mod,
        )

    link_snapshots = []
    for link in route:
        for element in link.elements:
            if isinstance(element, FiberSpan):
                att = db_to_lin(-element.loss_db)
                for idx in indices:
                    p_nli[idx] += nli_power_span(
                        element, ChannelLaunch(idx, p_sig[idx]), b_ch, b_wdm
                    )
                    p_sig[idx] *= att
                    p_ase[idx] *= att
                    p_nli[idx] *= att
            else:
                gain = db_to_lin(element.gain_db)
                for idx in indices:
                    p_sig[idx] *= gain
                    p_ase[idx] *= gain
                    p_nli[idx] *= gain
                    p_ase[idx] += ase_power(element, channels[idx].center_hz, b_ch)
        link_snapshots.append(
            LinkQot(link_id=link.id, channels=tuple(snapshot(i) for i in indices))
        )

    return GsnrReport(
        channels=tuple(snapshot(i) for i in indices), links=tuple(link_snapshots)
    )
