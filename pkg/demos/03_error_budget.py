"""Where does the gate error come from?

The coupler is noisier than the qubits and sits far from its flux sweet
spot during the pulse, so the qubits borrow its decoherence in proportion
to how strongly they hybridise with it.  A synthetic decoherence profile is
tuned so that the analytic formulas reproduce a chosen effective dephasing
time and relaxation contribution, then the budget splits a total error
into its parts.
"""
from adiabatic_cz import DeviceParams
from adiabatic_cz.calibration import calibrate_cz
from adiabatic_cz.error_budget import analytic_budget, effective_rates, reconstructed_profile

params = DeviceParams()
pulse = calibrate_cz(params, 30.0, verify=False).pulse
profile = reconstructed_profile(params, pulse, tphi_q1_eff=0.5, relaxation_target=0.0028)

eff = effective_rates(profile, pulse)
print(f"effective T1   (us): Q1 {eff.t1[0]:.2f}, Q2 {eff.t1[1]:.2f}")
print(f"effective Tphi (us): Q1 {eff.tphi[0]:.3f}, Q2 {eff.tphi[1]:.2f}")
print(f"coupler T1 behind the profile: {profile.coupler.t1_idle:.2f} us")

report = analytic_budget(profile, pulse, total=0.0052)
for name, frac in report.fractions.items():
    print(f"  {name:>13s}: {frac:6.1%}")
print(f"decoherence accounts for {report.decoherence_fraction:.1%} of a 0.52% total")
