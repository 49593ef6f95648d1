"""Physically placed agent stations: field of view, synthetic frames, observation.

Each station is a fixed camera with a cone-shaped field of view in
floor-plan coordinates, plus a beacon identity. The frame source renders a
deterministic synthetic scene (background color keyed to the station, one
marker per visible customer) so the PNG pipeline runs at full fidelity
without camera hardware.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

from PIL import Image

from .protocol import EncodedFrame, ObservationReport
from .ranging import BeaconIdentity
from .roles import AgentRole

FRAME_WIDTH = 480
FRAME_HEIGHT = 360
_MARKER_HALF = 7  # marker blob is (2*_MARKER_HALF+1) px square
_MARKER_RGB = (255, 255, 255)

Point = tuple[float, float]


class InvalidFrame(Exception):
    """Frame dimensions or buffer size violate the fixed-format contract."""


class EncodingFailed(Exception):
    """PNG codec failure, propagated."""


@dataclass(frozen=True)
class AgentStation:
    """One physically placed agent: position, facing, FOV cone, role, beacon."""

    station_id: int
    position: Point
    orientation_rad: float
    role: AgentRole
    beacon: BeaconIdentity
    fov_angle_rad: float = math.pi / 2
    fov_range_m: float = 8.0

    def __post_init__(self) -> None:
        if not (0 < self.fov_angle_rad <= 2 * math.pi):
            raise ValueError("fov_angle_rad must be in (0, 2*pi]")
        if self.fov_range_m <= 0:
            raise ValueError("fov_range_m must be positive")
        if self.station_id != self.beacon.minor:
            raise ValueError("station_id must equal beacon.minor")


@dataclass(frozen=True)
class Frame:
    """Raw 480x360 RGB frame, row-major 8-bit pixels."""

    pixels: bytes
    captured_at: float
    width: int = FRAME_WIDTH
    height: int = FRAME_HEIGHT

    def __post_init__(self) -> None:
        if self.width != FRAME_WIDTH or self.height != FRAME_HEIGHT:
            raise InvalidFrame(f"frame must be {FRAME_WIDTH}x{FRAME_HEIGHT}")
        if len(self.pixels) != FRAME_WIDTH * FRAME_HEIGHT * 3:
            raise InvalidFrame("pixel buffer length must be width*height*3")


def _wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2 * math.pi)
    if wrapped <= 0:
        wrapped += 2 * math.pi
    return wrapped - math.pi


def in_field_of_view(station: AgentStation, point: Point) -> bool:
    """True iff the point is within range and inside the FOV cone.

    Boundaries are inclusive, and the station's own position counts as
    visible (distance zero has no defined bearing).
    """
    dx = point[0] - station.position[0]
    dy = point[1] - station.position[1]
    distance = math.hypot(dx, dy)
    if distance > station.fov_range_m:
        return False
    if distance == 0:
        return True
    bearing = math.atan2(dy, dx)
    deviation = abs(_wrap_angle(bearing - station.orientation_rad))
    return deviation <= station.fov_angle_rad / 2


def observe(station: AgentStation, world_snapshot: dict[str, Point]) -> ObservationReport:
    """Report exactly the customer ids in the station's FOV, sorted ascending."""
    visible = sorted(
        cid for cid, pos in world_snapshot.items() if in_field_of_view(station, pos)
    )
    return ObservationReport(station_id=station.station_id, customer_ids_in_fov=tuple(visible))


def _station_background(station_id: int) -> tuple[int, int, int]:
    # Distinct, deterministic per station; avoids the pure-white marker color.
    return (
        (station_id * 53 + 31) % 200 + 20,
        (station_id * 97 + 77) % 200 + 20,
        (station_id * 193 + 11) % 200 + 20,
    )


def projected_column(station: AgentStation, point: Point) -> int:
    """Map a visible point's bearing onto a frame column.

    Bearings from -fov/2 to +fov/2 cover columns 0..width-1 linearly.
    """
    dx = point[0] - station.position[0]
    dy = point[1] - station.position[1]
    if dx == 0 and dy == 0:
        return FRAME_WIDTH // 2
    rel = _wrap_angle(math.atan2(dy, dx) - station.orientation_rad)
    col = int((rel + station.fov_angle_rad / 2) / station.fov_angle_rad * FRAME_WIDTH)
    return min(max(col, 0), FRAME_WIDTH - 1)


@dataclass(frozen=True)
class FrameSource:
    """Deterministic synthetic renderer standing in for a station camera."""

    station: AgentStation


def capture_frame(source: FrameSource, world: list[Point], t: float) -> Frame:
    """Render the station's view: flat background plus one marker per visible customer.

    Pure function of (station, world, t): identical inputs give identical pixels.
    """
    station = source.station
    bg = _station_background(station.station_id)
    buf = bytearray(bytes(bg) * (FRAME_WIDTH * FRAME_HEIGHT))
    visible = [p for p in world if in_field_of_view(station, p)]
    # Sort by projected column then position for draw-order determinism.
    visible.sort(key=lambda p: (projected_column(station, p), p))
    row_center = FRAME_HEIGHT // 2
    marker = bytes(_MARKER_RGB)
    for point in visible:
        col_center = projected_column(station, point)
        for row in range(row_center - _MARKER_HALF, row_center + _MARKER_HALF + 1):
            for col in range(col_center - _MARKER_HALF, col_center + _MARKER_HALF + 1):
                if 0 <= row < FRAME_HEIGHT and 0 <= col < FRAME_WIDTH:
                    base = (row * FRAME_WIDTH + col) * 3
                    buf[base : base + 3] = marker
    return Frame(pixels=bytes(buf), captured_at=t)


def encode_frame(frame: Frame) -> EncodedFrame:
    """Encode to PNG; decode_frame(encode_frame(f)) is pixel-identical."""
    if frame.width != FRAME_WIDTH or frame.height != FRAME_HEIGHT:
        raise InvalidFrame(f"frame must be {FRAME_WIDTH}x{FRAME_HEIGHT}")
    try:
        image = Image.frombytes("RGB", (frame.width, frame.height), frame.pixels)
        out = io.BytesIO()
        image.save(out, format="PNG")
    except Exception as exc:  # codec failure
        raise EncodingFailed(str(exc)) from exc
    return EncodedFrame.from_png(out.getvalue())


def decode_frame(encoded: EncodedFrame, captured_at: float = 0.0) -> Frame:
    """Decode PNG bytes back into a raw frame."""
    try:
        image = Image.open(io.BytesIO(encoded.png_bytes))
        image.load()
        rgb = image.convert("RGB")
    except Exception as exc:
        raise EncodingFailed(str(exc)) from exc
    if rgb.size != (FRAME_WIDTH, FRAME_HEIGHT):
        raise InvalidFrame(f"decoded image is {rgb.size}, expected {FRAME_WIDTH}x{FRAME_HEIGHT}")
    return Frame(pixels=rgb.tobytes(), captured_at=captured_at)


def pixel_digest(frame: Frame) -> str:
    """Content hash of the raw pixels; stable across PNG encoder versions."""
    import hashlib

    return hashlib.sha256(frame.pixels).hexdigest()
