"""
Sweeping the Rician factor
==========================

One model per kappa value, written as CSV. Small settings keep the run
short; raise the array size, batch size and batch budget for real numbers.
"""

import sys

from fdbeam import harness
from fdbeam.harness import Config

base = Config(nt_rows=2, nt_cols=2, nr_rows=2, nr_cols=2, num_rays=16, m_probes=4,
              batch_size=128, max_batches=400, conv_window=200, test_count=500)
out = sys.argv[1] if len(sys.argv) > 1 else "kappa_sweep.csv"
rows = harness.sweep("kappa", [-10.0, 0.0, 10.0, 20.0, 30.0], base, out=out)
for value, m, sse, inr, base_sse, cap, status in rows:
    print(f"kappa {value:>6} dB  model {sse:.3f}  baseline {base_sse:.3f}  capacity {cap:.3f}  [{status}]")
print("wrote", out)
