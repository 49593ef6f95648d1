"""Configuration file loading for the simulator, service, and live server.

One JSON document configures everything; every section and every field is
optional and falls back to the library defaults. See README for the schema.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .ranging import BeaconIdentity, RangingConfig
from .records import DataCategory
from .roles import AgentRole, RoleScopeMatrix, ServiceNeed
from .service import ServiceConfig
from .sim import Directive, FloorPlan, InvalidConfig, ScriptedArrival, SimConfig, default_floor
from .stations import AgentStation


def _require(obj: Any, cls: type, what: str) -> Any:
    if not isinstance(obj, cls) or isinstance(obj, bool) and cls is not bool:
        raise InvalidConfig(f"{what} must be {cls.__name__}")
    return obj


def _num(obj: Any, what: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise InvalidConfig(f"{what} must be a number")
    return float(obj)


def _point(obj: Any, what: str) -> tuple[float, float]:
    if not isinstance(obj, (list, tuple)) or len(obj) != 2:
        raise InvalidConfig(f"{what} must be [x, y]")
    return (_num(obj[0], what), _num(obj[1], what))


def _enum(cls: type, value: Any, what: str):
    try:
        return cls(value)
    except (ValueError, TypeError) as exc:
        raise InvalidConfig(f"{what}: unknown value {value!r}") from exc


def parse_ranging(obj: dict) -> RangingConfig:
    kwargs: dict[str, Any] = {}
    fields = {
        "p0_dbm",
        "path_loss_exponent_n",
        "noise_sigma_db",
        "min_distance_m",
        "ema_alpha",
        "sample_hz",
        "hysteresis_m",
    }
    for key, value in obj.items():
        if key in fields:
            kwargs[key] = _num(value, f"ranging.{key}")
        elif key == "zone_thresholds_m":
            if not isinstance(value, list) or len(value) != 3:
                raise InvalidConfig("ranging.zone_thresholds_m must be [immediate, near, far]")
            kwargs[key] = tuple(_num(v, "ranging.zone_thresholds_m") for v in value)
        else:
            raise InvalidConfig(f"unknown ranging key {key!r}")
    try:
        return RangingConfig(**kwargs)
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc


def parse_station(obj: dict) -> AgentStation:
    _require(obj, dict, "station")
    try:
        station_id = obj["station_id"]
        position = _point(obj["position"], "station.position")
    except KeyError as exc:
        raise InvalidConfig(f"station missing field {exc}") from exc
    if isinstance(station_id, bool) or not isinstance(station_id, int) or station_id < 0:
        raise InvalidConfig("station_id must be a non-negative integer")
    beacon_obj = obj.get("beacon", {})
    _require(beacon_obj, dict, "station.beacon")
    beacon = BeaconIdentity(
        region_uuid=beacon_obj.get("region_uuid", f"{1:032x}"),
        major=beacon_obj.get("major", 1),
        minor=beacon_obj.get("minor", station_id),
    )
    try:
        return AgentStation(
            station_id=station_id,
            position=position,
            orientation_rad=_num(obj.get("orientation_rad", math.pi / 2), "orientation_rad"),
            role=_enum(AgentRole, obj.get("role", "CustomerService"), "station.role"),
            beacon=beacon,
            fov_angle_rad=_num(obj.get("fov_angle_rad", math.pi / 2), "fov_angle_rad"),
            fov_range_m=_num(obj.get("fov_range_m", 8.0), "fov_range_m"),
        )
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc


def parse_floor(obj: dict) -> FloorPlan:
    _require(obj, dict, "floor")
    stations = tuple(parse_station(s) for s in obj.get("stations", []))
    try:
        return FloorPlan(
            width_m=_num(obj.get("width_m", 20.0), "floor.width_m"),
            height_m=_num(obj.get("height_m", 15.0), "floor.height_m"),
            entry_point=_point(obj.get("entry_point", [10.0, 14.0]), "floor.entry_point"),
            stations=stations or default_floor().stations,
        )
    except InvalidConfig:
        raise
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc


def parse_directive(obj: dict) -> Directive:
    _require(obj, dict, "directive")
    action = obj.get("action")
    if action not in ("rebind", "consent", "utterance", "close"):
        raise InvalidConfig(f"unknown directive action {action!r}")
    category = obj.get("category")
    return Directive(
        at=_num(obj.get("at", 0.0), "directive.at"),
        action=action,
        customer_id=_require(obj.get("customer_id", ""), str, "directive.customer_id"),
        station_id=obj.get("station_id"),
        category=_enum(DataCategory, category, "directive.category") if category else None,
        enabled=obj.get("enabled"),
        text=obj.get("text"),
    )


def parse_sim_config(doc: dict) -> SimConfig:
    _require(doc, dict, "config document")
    sim = doc.get("sim", {})
    _require(sim, dict, "sim section")
    known = {
        "seed",
        "duration_s",
        "arrival_rate_per_min",
        "walk_speed_mps",
        "service_time_mean_s",
        "handshake_delay_ms",
        "baseline_mode",
        "stop_distance_m",
        "report_interval_s",
        "utterances_per_customer",
    }
    for key in sim:
        if key not in known:
            raise InvalidConfig(f"unknown sim key {key!r}")
    arrivals = None
    if "arrivals" in doc:
        arrivals = tuple(
            ScriptedArrival(
                at=_num(a.get("at", 0.0), "arrival.at"),
                customer_id=_require(a.get("customer_id", ""), str, "arrival.customer_id"),
                need=_enum(ServiceNeed, a.get("need", "GeneralInquiry"), "arrival.need"),
            )
            for a in _require(doc["arrivals"], list, "arrivals")
        )
    directives = tuple(
        parse_directive(d) for d in _require(doc.get("directives", []), list, "directives")
    )
    config = SimConfig(
        seed=int(sim.get("seed", 1)),
        duration_s=_num(sim.get("duration_s", 600.0), "sim.duration_s"),
        arrival_rate_per_min=_num(sim.get("arrival_rate_per_min", 2.0), "sim.arrival_rate_per_min"),
        walk_speed_mps=_num(sim.get("walk_speed_mps", 1.2), "sim.walk_speed_mps"),
        service_time_mean_s=_num(sim.get("service_time_mean_s", 120.0), "sim.service_time_mean_s"),
        handshake_delay_ms=_num(sim.get("handshake_delay_ms", 300.0), "sim.handshake_delay_ms"),
        baseline_mode=bool(sim.get("baseline_mode", False)),
        stop_distance_m=_num(sim.get("stop_distance_m", 0.3), "sim.stop_distance_m"),
        report_interval_s=_num(sim.get("report_interval_s", 5.0), "sim.report_interval_s"),
        utterances_per_customer=int(sim.get("utterances_per_customer", 1)),
        ranging=parse_ranging(_require(doc.get("ranging", {}), dict, "ranging section")),
        floor=parse_floor(doc.get("floor", {})),
        scripted_arrivals=arrivals,
        directives=directives,
    )
    config.validate()
    return config


def parse_service_config(doc: dict) -> ServiceConfig:
    _require(doc, dict, "config document")
    svc = doc.get("service", {})
    _require(svc, dict, "service section")
    matrix_kwargs: dict[str, Any] = {}
    if "role_resources" in svc:
        matrix_kwargs["resources"] = {
            _enum(AgentRole, role, "role_resources"): frozenset(paths)
            for role, paths in _require(svc["role_resources"], dict, "role_resources").items()
        }
    if "role_capabilities" in svc:
        matrix_kwargs["capabilities"] = {
            _enum(AgentRole, role, "role_capabilities"): frozenset(
                _enum(ServiceNeed, n, "role_capabilities") for n in needs
            )
            for role, needs in _require(svc["role_capabilities"], dict, "role_capabilities").items()
        }
    if "preferred_roles" in svc:
        matrix_kwargs["preferred_role"] = {
            _enum(ServiceNeed, need, "preferred_roles"): _enum(AgentRole, role, "preferred_roles")
            for need, role in _require(svc["preferred_roles"], dict, "preferred_roles").items()
        }
    try:
        matrix = RoleScopeMatrix(**matrix_kwargs)
    except Exception as exc:
        raise InvalidConfig(f"bad role matrix: {exc}") from exc
    credentials = {
        _require(cid, str, "credential id"): _require(cred, str, "credential").encode("utf-8")
        for cid, cred in _require(svc.get("credentials", {}), dict, "credentials").items()
    }
    config = ServiceConfig(matrix=matrix, credentials=credentials)
    for key in (
        "fallback_reply",
        "restricted_reply",
    ):
        if key in svc:
            setattr(config, key, _require(svc[key], str, key))
    for key in (
        "service_time_estimate_s",
        "report_interval_s",
        "heartbeat_interval_s",
    ):
        if key in svc:
            setattr(config, key, _num(svc[key], key))
    if "max_response_chars" in svc:
        config.max_response_chars = int(svc["max_response_chars"])
    return config


def load_document(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config is not valid JSON: {exc}") from exc
    return _require(doc, dict, "config document")


def load_sim_config(path: str) -> SimConfig:
    return parse_sim_config(load_document(path))


def load_service_config(path: str) -> ServiceConfig:
    return parse_service_config(load_document(path))
