"""
Training codebooks and the beam synthesizer
===========================================

A deliberately small run (2x2 arrays, 4 probes) that finishes in well under
a minute. The loss is the negative mean sum spectral efficiency.

At kappa = 0 dB half the coupling power is random, and a handful of probes
cannot pin it down. Runs at this scale often settle on switching the
downlink off (f near zero), which buys an interference-free uplink. Compare
with 04_kappa_sweep.py, where a stronger deterministic LOS term lets the
model keep both links.
"""

import numpy as np

from fdbeam import harness
from fdbeam.harness import Config

cfg = Config(nt_rows=2, nt_cols=2, nr_rows=2, nr_cols=2, num_rays=16, m_probes=4,
             batch_size=128, max_batches=1500, conv_window=300, test_count=1000, seed=3)

history = []
report = harness.run_cell(cfg, callback=lambda t, v: history.append(v))
print(f"trained {len(history)} batches; loss {np.mean(history[:50]):.3f} -> {np.mean(history[-50:]):.3f}")

for who in ("model", "baseline"):
    print(f"{who:>8}: SSE {report.mean(who + '_sse'):.3f}, "
          f"R_dl {report.mean(who + '_r_dl'):.3f}, R_ul {report.mean(who + '_r_ul'):.3f}, "
          f"median INR_UL {report.quantile(who + '_inr_ul_db', 0.5):.1f} dB")
print(f"capacity: {report.mean('capacity'):.3f}")
