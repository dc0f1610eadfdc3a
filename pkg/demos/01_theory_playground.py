"""Closed-form theory tour: parity decay, residue probabilities, bias curves.

Everything here is analytic. The punchline of the approach: the parity of a
coherent state's photon number decays as exp(-2 nbar), so a bright-enough
pulse gives a perfectly balanced coin flip, and mod-2^d binning hands out d
bits per detection; truncating the detector at 100 photons leaves a
residual bias that stays at the 1e-8 scale for d <= 3 at nbar = 57 but
ruins d >= 4.

Run:  python demos/01_theory_playground.py
"""

import numpy as np

from tesqrng import theory
from tesqrng.theory import CoherentSpec, ModQSpec

print("Parity of a coherent state, exp(-2 nbar):")
for nbar in (0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 57.0):
    print(f"  nbar = {nbar:5.2f}  parity = {theory.coherent_parity(nbar):.6g}")

print("\nMod-8 residue probabilities at nbar = 5 (visible bias)"
      " and nbar = 57 (none to 8 digits):")
for nbar in (5.0, 57.0):
    rep = theory.modq_probabilities(CoherentSpec(nbar), ModQSpec(8, n_max=100))
    probs = ", ".join(f"{p:.5f}" for p in rep.probabilities)
    print(f"  nbar={nbar:4.0f}: [{probs}]  max bias {rep.max_bias:.3g}")

print("\nResidual bias vs binning width at nbar = 57, 100-photon truncation:")
print("  d  q    truncated bias   unbounded bias   trend exp(-4nbar/q)")
for d in range(1, 6):
    trunc = theory.modq_probabilities(CoherentSpec(57.0), ModQSpec.power_of_two(d, 100))
    unbounded = theory.modq_probabilities(CoherentSpec(57.0), ModQSpec.power_of_two(d, None))
    print(
        f"  {d}  {2**d:2d}   {trunc.max_bias:12.4e}   {unbounded.max_bias:12.4e}"
        f"   {theory.bias_trend(57.0, 2**d):12.4e}"
    )
print("  -> d <= 3 all sit on the ~1e-8 truncation floor; d >= 4 is dominated")
print("     by the intrinsic bias and fails randomness tests.")

print("\nRobustness oracles:")
print(f"  loss eta=0.9 on nbar=100     -> nbar' = {theory.apply_loss(100.0, 0.9):.1f}")
print(f"  thermal environment mbar=0.5 -> joint parity "
      f"{theory.parity_with_environment(1.0, theory.thermal_env_parity(0.5)):.6f}")
print(f"  uniform phase mixture nbar=2 -> parity {theory.phase_mixture_parity(2.0):.6f} "
      f"(= exp(-4) = {np.exp(-4):.6f})")
