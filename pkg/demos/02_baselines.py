"""
MRT+MRC against the full-duplex capacity
=========================================

Matched beams ignore self-interference. With 40 dB of worst-case coupling the
uplink is swamped, even though the downlink is nearly optimal.
"""

import numpy as np

from fdbeam import channel, metrics
from fdbeam.channel import Scenario
from fdbeam.harness import baseline_columns, empirical_cdf

scenario = Scenario.side_by_side(2, 4)
data = channel.draw_batch(scenario, seed=1, start=0, count=2000)
cols = baseline_columns(data, scenario.budget)

print(f"capacity          {cols['capacity'].mean():.3f} bits/s/Hz (2 log2 11 = {2 * np.log2(11):.3f})")
print(f"baseline SSE      {cols['baseline_sse'].mean():.3f}")
print(f"  downlink rate   {cols['baseline_r_dl'].mean():.3f}")
print(f"  uplink rate     {cols['baseline_r_ul'].mean():.3f}")

cdf = empirical_cdf(cols["baseline_inr_ul_db"])
for q in (0.1, 0.5, 0.9):
    value = next(v for v, p in cdf if p >= q)
    print(f"INR_UL {int(q * 100):>2}th percentile: {value:6.1f} dB")

# A random feasible beam pair never beats capacity.
rng = np.random.default_rng(0)
f = np.exp(2j * np.pi * rng.random((len(data), scenario.nt)))
w = np.exp(2j * np.pi * rng.random((len(data), scenario.nr)))
_, _, r = metrics.sse(f, w, data, scenario.budget)
print(f"random phases: SSE {r.mean():.3f}, max slack to capacity {np.min(cols['capacity'] - r):.3f}")
