"""Beacon ranging walkthrough: path loss, smoothing, and zone events.

A customer walks from 14 m straight up to a station while we sample RSSI
at 10 Hz with Gaussian shadowing, smooth it, and watch the proximity-zone
state machine fire exactly three events on the way in.
"""

import random

from branchlab import RangingConfig, ZoneTracker, estimate_distance, rssi_at

cfg = RangingConfig()  # -59 dBm @ 1 m, n = 2.0, sigma = 2 dB, EMA alpha 0.3
rng = random.Random(42)

print("RSSI at reference distances (no noise):")
for d in (0.5, 1.0, 2.0, 4.0, 10.0):
    dbm = rssi_at(d, cfg)
    print(f"  {d:5.1f} m -> {dbm:7.2f} dBm -> inverted {estimate_distance(dbm, cfg):6.3f} m")

print("\nWalking in from 14 m at 1.2 m/s, noisy samples at 10 Hz:")
tracker = ZoneTracker(cfg)
t, d = 0.0, 14.0
while d > 0.3:
    noise = rng.gauss(0.0, cfg.noise_sigma_db)
    estimate, event = tracker.update(rssi_at(d, cfg, noise), at=t)
    if event:
        print(
            f"  t={t:5.1f}s  true={d:5.2f} m  est={estimate:5.2f} m  "
            f"{event.from_zone.value} -> {event.to_zone.value}"
        )
    t += 0.1
    d -= 0.12

print("\nOscillating around the 4 m threshold (hysteresis keeps it quiet):")
jitter = ZoneTracker(cfg)
for k in range(5):  # settle into the Near zone first
    jitter.update(rssi_at(3.0, cfg, 0.0), at=k * 0.1)
flaps = 0
for k in range(40):
    d = 4.0 + (0.2 if k % 2 else -0.2)
    _, event = jitter.update(rssi_at(d, cfg, 0.0), at=0.5 + k * 0.1)
    flaps += event is not None
print(f"  zone changes during 40 oscillating samples: {flaps}")
