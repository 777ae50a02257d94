"""Interleaved randomized benchmarking of the simulated gate.

The CZ channel is simulated once under the reconstructed noise profile
(quasi-static dephasing averaged over 64 offset draws).  Random two-qubit
Clifford sequences are then built from that channel plus depolarised
single-qubit gates, with and without the CZ interleaved.  This takes
about a minute.
"""
import numpy as np

from adiabatic_cz import DeviceParams
from adiabatic_cz.benchmarking.rb import PhysicalChannels, RBConfig, consistency_upper_bound, run_interleaved
from adiabatic_cz.calibration import calibrate_cz, compensated_cz_channel
from adiabatic_cz.error_budget import reconstructed_profile

params = DeviceParams()
cal = calibrate_cz(params, 30.0, verify=False)
noise = reconstructed_profile(params, cal.pulse).noise_model("quasi_static_gaussian")
channel = compensated_cz_channel(params, cal.pulse, noise, cal.metrics.single_qubit_phases)

res = run_interleaved(PhysicalChannels(channel, r_1q=0.0013), RBConfig(seed=1))
print("length  reference  interleaved")
for m, a, b in zip(res.reference.lengths, res.reference.means, res.interleaved.means):
    print(f"{m:6d}  {a:9.4f}  {b:11.4f}")
print(f"r_ref {res.rates.r_ref:.4f}, r_int {res.rates.r_int:.4f}")
print(f"F_CZ = {res.rates.f_cz:.4f} +- {res.sigma_f_cz:.4f}")
print(f"upper bound on CZ error from the reference decay: {consistency_upper_bound(res.rates.r_ref, 0.0013):.2%}")
print(f"mean leakage after the longest interleaved sequences: {np.mean(res.interleaved.leakage[-1]):.2e}")
