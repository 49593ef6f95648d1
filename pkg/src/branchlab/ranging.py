"""Simulated BLE beacon ranging.

Log-distance path loss with caller-supplied Gaussian shadowing turns
position into RSSI; an EMA smoother and a hysteresis state machine turn
RSSI samples back into proximity-zone events. Noise is injected by the
caller so everything here stays deterministic and seedable. Smoothing is
applied to RSSI rather than distance because the noise is additive in dB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class ProximityZone(Enum):
    UNKNOWN = "Unknown"
    FAR = "Far"
    NEAR = "Near"
    IMMEDIATE = "Immediate"


# Closeness order used by the adjacency rule; Unknown is the outermost state.
_ZONE_ORDER = (
    ProximityZone.UNKNOWN,
    ProximityZone.FAR,
    ProximityZone.NEAR,
    ProximityZone.IMMEDIATE,
)


@dataclass(frozen=True)
class BeaconIdentity:
    """(region, branch, station) triple broadcast by a station's beacon."""

    region_uuid: str
    major: int  # branch id
    minor: int  # station id


@dataclass(frozen=True)
class RangingConfig:
    p0_dbm: float = -59.0  # power at the 1 m reference distance
    path_loss_exponent_n: float = 2.0
    noise_sigma_db: float = 2.0
    min_distance_m: float = 0.1
    ema_alpha: float = 0.3
    sample_hz: float = 10.0
    # (Immediate, Near, Far) outer bounds in meters, strictly increasing.
    zone_thresholds_m: tuple[float, float, float] = (1.0, 4.0, 10.0)
    hysteresis_m: float = 0.5

    def __post_init__(self) -> None:
        t_imm, t_near, t_far = self.zone_thresholds_m
        if not (0 < t_imm < t_near < t_far):
            raise ValueError("zone thresholds must be strictly increasing and positive")
        if not (0 < self.ema_alpha <= 1):
            raise ValueError("ema_alpha must be in (0, 1]")
        smallest_gap = min(t_imm, t_near - t_imm, t_far - t_near)
        if not (0 <= self.hysteresis_m < smallest_gap):
            raise ValueError("hysteresis_m must be smaller than the smallest threshold gap")
        if self.min_distance_m <= 0:
            raise ValueError("min_distance_m must be positive")
        if self.noise_sigma_db < 0:
            raise ValueError("noise_sigma_db must be >= 0")
        if self.sample_hz <= 0:
            raise ValueError("sample_hz must be positive")
        if self.path_loss_exponent_n <= 0:
            raise ValueError("path_loss_exponent_n must be positive")


@dataclass(frozen=True)
class ProximityEvent:
    """Zone transition for one (client, beacon) pair."""

    station: BeaconIdentity | None
    from_zone: ProximityZone
    to_zone: ProximityZone
    at: float
    distance_m: float

    def __post_init__(self) -> None:
        if self.from_zone == self.to_zone:
            raise ValueError("from_zone and to_zone must differ")


def rssi_at(distance_m: float, config: RangingConfig, noise_draw_db: float = 0.0) -> float:
    """Received power in dBm at a distance, log-distance path-loss model.

    Distances below the clamp floor measure as the floor itself.
    """
    if distance_m < 0:
        raise ValueError("distance_m must be >= 0")
    d = max(distance_m, config.min_distance_m)
    return config.p0_dbm - 10.0 * config.path_loss_exponent_n * math.log10(d) + noise_draw_db


def estimate_distance(rssi_dbm: float, config: RangingConfig) -> float:
    """Invert the noiseless path-loss model; exact above the clamp floor."""
    return 10.0 ** ((config.p0_dbm - rssi_dbm) / (10.0 * config.path_loss_exponent_n))


def smooth(prev_ema: float | None, sample: float, alpha: float) -> float:
    """Exponential moving average; the first sample seeds the filter."""
    if not (0 < alpha <= 1):
        raise ValueError("alpha must be in (0, 1]")
    if prev_ema is None:
        return sample
    return alpha * sample + (1 - alpha) * prev_ema


def zone_of(distance_m: float, config: RangingConfig) -> ProximityZone:
    """Plain threshold classification with no hysteresis."""
    t_imm, t_near, t_far = config.zone_thresholds_m
    if distance_m < t_imm:
        return ProximityZone.IMMEDIATE
    if distance_m < t_near:
        return ProximityZone.NEAR
    if distance_m < t_far:
        return ProximityZone.FAR
    return ProximityZone.UNKNOWN


def _inner_threshold(zone: ProximityZone, config: RangingConfig) -> float:
    """Bound to cross when leaving `zone` toward the station."""
    t_imm, t_near, t_far = config.zone_thresholds_m
    return {ProximityZone.UNKNOWN: t_far, ProximityZone.FAR: t_near, ProximityZone.NEAR: t_imm}[zone]


def _outer_threshold(zone: ProximityZone, config: RangingConfig) -> float:
    """Bound to cross when leaving `zone` away from the station."""
    t_imm, t_near, t_far = config.zone_thresholds_m
    return {ProximityZone.IMMEDIATE: t_imm, ProximityZone.NEAR: t_near, ProximityZone.FAR: t_far}[zone]


def classify(
    distance_m: float,
    prev_zone: ProximityZone,
    config: RangingConfig,
    *,
    station: BeaconIdentity | None = None,
    at: float = 0.0,
) -> tuple[ProximityZone, ProximityEvent | None]:
    """Hysteresis + adjacency zone update; emits an event iff the zone changed.

    Entering the next closer zone requires distance < threshold - hysteresis;
    reverting to the next farther zone requires distance > threshold +
    hysteresis; otherwise the zone is unchanged. A known zone moves at most
    one step per call. Unknown (no prior contact) may jump straight to the
    plain classification.
    """
    if distance_m < 0:
        raise ValueError("distance_m must be >= 0")
    h = config.hysteresis_m
    if prev_zone == ProximityZone.UNKNOWN:
        new_zone = zone_of(distance_m, config)
    else:
        target = zone_of(distance_m, config)
        prev_idx = _ZONE_ORDER.index(prev_zone)
        target_idx = _ZONE_ORDER.index(target)
        new_zone = prev_zone
        if target_idx > prev_idx and distance_m < _inner_threshold(prev_zone, config) - h:
            new_zone = _ZONE_ORDER[prev_idx + 1]
        elif target_idx < prev_idx and distance_m > _outer_threshold(prev_zone, config) + h:
            new_zone = _ZONE_ORDER[prev_idx - 1]
    if new_zone == prev_zone:
        return new_zone, None
    event = ProximityEvent(
        station=station,
        from_zone=prev_zone,
        to_zone=new_zone,
        at=at,
        distance_m=distance_m,
    )
    return new_zone, event


class ZoneTracker:
    """Per-(client, beacon) ranging state: EMA filter plus zone machine.

    Owned by a single logical task; feed it raw RSSI samples in time order.
    """

    def __init__(self, config: RangingConfig, station: BeaconIdentity | None = None):
        self.config = config
        self.station = station
        self.ema_dbm: float | None = None
        self.zone = ProximityZone.UNKNOWN

    def update(self, sample_dbm: float, at: float) -> tuple[float, ProximityEvent | None]:
        """Ingest one RSSI sample; returns (distance estimate, event or None)."""
        self.ema_dbm = smooth(self.ema_dbm, sample_dbm, self.config.ema_alpha)
        distance = estimate_distance(self.ema_dbm, self.config)
        self.zone, event = classify(
            distance, self.zone, self.config, station=self.station, at=at
        )
        return distance, event
