/**
 * Proximity-zone state machine for the distance slider.
 *
 * Mirrors the server-side ranging rules so the slider produces the same
 * ProximityUpdate stream a walking customer would: entering the next
 * closer zone needs distance < threshold - hysteresis, reverting needs
 * distance > threshold + hysteresis, a known zone moves at most one step
 * per sample, and Unknown (no contact yet) may jump straight to the plain
 * classification. The hysteresis band is what keeps the indicator from
 * flickering when the slider wobbles around a threshold.
 */

import type { Zone } from "./protocol.js";

export interface ZoneConfig {
  thresholdsM: [number, number, number]; // Immediate, Near, Far outer bounds
  hysteresisM: number;
}

export const DEFAULT_ZONE_CONFIG: ZoneConfig = {
  thresholdsM: [1.0, 4.0, 10.0],
  hysteresisM: 0.5,
};

const ORDER: Zone[] = ["Unknown", "Far", "Near", "Immediate"];

export function zoneOf(distanceM: number, config: ZoneConfig = DEFAULT_ZONE_CONFIG): Zone {
  const [tImm, tNear, tFar] = config.thresholdsM;
  if (distanceM < tImm) return "Immediate";
  if (distanceM < tNear) return "Near";
  if (distanceM < tFar) return "Far";
  return "Unknown";
}

function innerThreshold(zone: Zone, config: ZoneConfig): number {
  const [tImm, tNear, tFar] = config.thresholdsM;
  return zone === "Unknown" ? tFar : zone === "Far" ? tNear : tImm;
}

function outerThreshold(zone: Zone, config: ZoneConfig): number {
  const [tImm, tNear, tFar] = config.thresholdsM;
  return zone === "Immediate" ? tImm : zone === "Near" ? tNear : tFar;
}

export function classify(
  distanceM: number,
  prevZone: Zone,
  config: ZoneConfig = DEFAULT_ZONE_CONFIG,
): Zone {
  if (prevZone === "Unknown") {
    return zoneOf(distanceM, config);
  }
  const target = zoneOf(distanceM, config);
  const prevIdx = ORDER.indexOf(prevZone);
  const targetIdx = ORDER.indexOf(target);
  if (targetIdx > prevIdx && distanceM < innerThreshold(prevZone, config) - config.hysteresisM) {
    return ORDER[prevIdx + 1];
  }
  if (targetIdx < prevIdx && distanceM > outerThreshold(prevZone, config) + config.hysteresisM) {
    return ORDER[prevIdx - 1];
  }
  return prevZone;
}

/** Stateful wrapper: feed slider positions, get zone transitions. */
export class ZoneTracker {
  zone: Zone = "Unknown";

  constructor(private config: ZoneConfig = DEFAULT_ZONE_CONFIG) {}

  /** Returns the new zone when it changed, null otherwise. */
  update(distanceM: number): Zone | null {
    const next = classify(distanceM, this.zone, this.config);
    if (next === this.zone) return null;
    this.zone = next;
    return next;
  }
}
