"""Calibrating the adiabatic CZ.

A half-sine coupler excursion is scaled until the conditional phase hits
pi.  The single-qubit phases it picks up are removed with virtual Z
gates.  Shorter pulses are faster but less adiabatic: leakage out of the
computational space falls steeply as the pulse is stretched.
"""
from adiabatic_cz import DeviceParams
from adiabatic_cz.calibration import calibrate_cz
from adiabatic_cz.spectrum import min_gap_detail

params = DeviceParams()
cal = calibrate_cz(params, 30.0)
for key, value in cal.report().items():
    print(f"{key:>28s}: {value:.6g}")

gap, where, partner = min_gap_detail(params, cal.pulse)
print(f"closest approach of |101> along the trajectory: {1e3 * gap:.1f} MHz near {where:.3f} GHz (to {partner})")

print("\nduration  leakage   coherent infidelity")
for tau in (30.0, 40.0, 60.0):
    m = calibrate_cz(params, tau, verify=False).metrics
    print(f"{tau:5.0f} ns  {m.leakage:.2e}  {m.coherent_infidelity:.2e}")
