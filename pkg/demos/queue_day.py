"""Simulate a branch morning and read the operational metrics.

Poisson arrivals walk to the best station for their need (queue length,
then walking distance, then station id), wait their turn, talk to the
agent, and leave. Crowd levels come from the stations' own observation
reports, not from any global state.
"""

from branchlab import SimConfig
from branchlab.sim import run_detailed

cfg = SimConfig(seed=11, duration_s=1800.0, arrival_rate_per_min=2.5, service_time_mean_s=90.0)
result = run_detailed(cfg)
report = result.report

print("Half-hour of branch traffic:")
print(f"  arrivals        {report.arrivals_count}")
print(f"  served          {report.served_count}")
print(f"  mean wait       {report.mean_wait_s:7.1f} s")
print(f"  p95 wait        {report.p95_wait_s:7.1f} s")
print(f"  max queue       {report.max_queue_len}")
print(f"  log digest      {report.determinism_digest[:16]}...")

world = result.world
crowd = world.service.crowd_levels(world.now)
print("\nCrowd levels from the stations' latest observation reports:")
for station_id, count in sorted(crowd.counts.items()):
    shown = "unknown" if count is None else count
    print(f"  station {station_id}: {shown} customers in view")

print("\nFirst few event-log lines (the digest covers all of them):")
for line in world.log[:8]:
    print("  " + line[:110])
