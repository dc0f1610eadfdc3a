"""From photon counts to certified random bits.

Generates mod-8 bits from a bright simulated source, packs them into the
bitstream file format, runs the randomness certification suite, and shows
the same machinery rejecting a dim source whose residue bias is visible.

Run:  python demos/05_random_bits.py
"""

import tempfile
from pathlib import Path

import numpy as np

from tesqrng import nist, qrng
from tesqrng.counting import DISCARDED
from tesqrng.source import sample_totals


def stream_for(nbar, events, d, seed):
    totals = sample_totals(nbar, events, seed)
    totals = np.where(totals > 100, DISCARDED, totals)
    return qrng.generate(totals, d=d, source_meta={"nbar": nbar, "seed": seed})


print("bright source: nbar = 57, d = 3, 2.1e6 bits")
stream = stream_for(57.0, 700_000, 3, seed=60)
with tempfile.TemporaryDirectory() as td:
    path = Path(td) / "bits.qrnb"
    stream.save(path)
    stream = qrng.BitStream.load(path)
print(f"  {stream.bit_length} bits from {stream.n_events_used} events "
      f"({stream.n_discarded} discarded)")
rep = qrng.empirical_bias(stream, q=8)
print(f"  empirical mod-8 bias {rep.max_bias:.2e} (sampling floor "
      f"~{4 * np.sqrt(0.125 * 0.875 / stream.n_events_used):.2e})")

plan = nist.TrialPlan(trial_size=100_000)
outcomes = nist.run_test_suite(stream, plan)
print(f"  {len(outcomes)} test outcomes over {outcomes[0].n} trials:")
for oc in sorted(outcomes, key=lambda o: o.test):
    print(f"    {oc.test:26s} proportion {oc.proportion:.3f} "
          f">= {oc.pass_threshold:.3f}: {'pass' if oc.passed else 'FAIL'}")
print(f"  verdict: {'random' if nist.verdict(outcomes).random else 'not-random'}")

print("\ndim source: nbar = 5, d = 3, 1e5 bits (mod-8 bias ~1.4e-2)")
dim = stream_for(5.0, 34_000, 3, seed=61)
outcomes = nist.run_test_suite(dim, nist.TrialPlan(trial_size=100_000))
for oc in sorted(outcomes, key=lambda o: o.test):
    flag = "pass" if oc.passed else "FAIL"
    print(f"    {oc.test:26s} proportion {oc.proportion:.3f}: {flag}")
print(f"  verdict: {'random' if nist.verdict(outcomes).random else 'not-random'}")
