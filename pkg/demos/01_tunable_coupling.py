"""Tunable coupling: how far the coupler can switch the ZZ interaction.

At the idle point the coupler cancels most of the direct qubit-qubit
exchange and the residual ZZ rate (chi12) is tiny.  Pulling the coupler
down towards the qubits turns it up by more than three orders of
magnitude, which is what makes a fast CZ possible.
"""
import numpy as np

from adiabatic_cz import DeviceParams
from adiabatic_cz.spectrum import chi12_spectral, sweep_chi

params = DeviceParams()
print(f"device dims {params.dims}, coupler idles at {params.idle_frequency} GHz")

idle = chi12_spectral(params, params.idle_frequency)
print(f"residual chi12 at idle: {1e6 * idle:+.1f} kHz")

freqs = np.round(np.arange(4.9, 6.74 + 1e-9, 0.01), 10)
sweep = sweep_chi(params, freqs)
print(f"dynamic range over {freqs[0]}..{freqs[-1]} GHz: {sweep.dynamic_range:.0f}")
for w in (6.5, 6.0, 5.5, 5.2, 5.0):
    print(f"  coupler {w:.2f} GHz -> chi12 {1e3 * chi12_spectral(params, w):+9.4f} MHz")

# the direct exchange partly offsets the coupler-mediated term
no_direct = params.with_couplings(g12=0.0)
print(f"with g12 = 0 the idle chi12 becomes {1e6 * chi12_spectral(no_direct, params.idle_frequency):+.1f} kHz")
