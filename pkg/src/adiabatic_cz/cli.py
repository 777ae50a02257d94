"""Batch command-line front end.

Usage::

    adiabatic-cz <command> [--config FILE] [--seed N] [--out DIR] [--threads N] [--levels N]

Commands: ``spectrum``, ``chi-sweep``, ``calibrate``, ``rb``, ``error-budget``
and ``crosstalk``.  The configuration is a JSON document; every numeric key
carries its unit as a suffix.  See ``configs/nominal.json`` for the full
schema with defaults.

Exit codes: 0 success, 2 configuration error, 3 numerical or calibration
failure, 4 fit failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional

import numpy as np

from .device import DeviceParams
from .errors import ConfigError, FitError, ToolkitError, ValidationError
from .io import run_metadata, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_FIT = 0, 2, 3, 4

DEFAULTS: Dict = {
    "seed": 0,
    "device": {},
    "spectrum": {
        "frequency_min_ghz": 4.0,
        "frequency_max_ghz": 6.74,
        "frequency_step_ghz": 0.01,
    },
    "chi_sweep": {
        "frequency_min_ghz": 4.9,
        "frequency_max_ghz": 6.74,
        "frequency_step_ghz": 0.01,
        "ramsey_frequencies_ghz": [],
        "ramsey_durations_ns": [40.0, 60.0],
        "ramsey_ramp_ns": 8.0,
    },
    "calibration": {
        "duration_ns": 30.0,
        "tolerance_rad": 1e-4,
        "space": "frequency",
        "single_qubit_error": 0.0013,
    },
    "rb": {
        "sequence_lengths": [1, 2, 4, 6, 8, 12, 16, 24, 32, 48, 64],
        "sequences_per_length": 30,
        "bootstrap_resamples": 200,
        "noise": "reconstructed",
        "dephasing_kind": "quasi_static_gaussian",
        "noise_samples": 64,
    },
    "error_budget": {
        "tphi_q1_eff_us": 0.5,
        "relaxation_target": 0.0028,
        "t1_idle_us": [20.0, 20.0],
        "tphi_idle_us": [20.0, 20.0],
        "spacing_ns": 4.0,
        "total_error": 0.0052,
        "profile_path": None,
        "transitional": False,
        "transitional_m_max": 60,
    },
    "crosstalk": {
        "fractions": [0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2],
        "aggressor_amplitude_phi0": None,
    },
}


# -- configuration -----------------------------------------------------------


def _merge(base: Dict, override: Mapping, path: str = "") -> Dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and key != "device":
            if not isinstance(value, Mapping):
                raise ConfigError(f"{where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def load_config(path: Optional[str]) -> Dict:
    """Defaults overlaid with the JSON file at ``path``.

    ``device`` may be an inline device document or a path to one; a relative
    path is resolved against the configuration file's directory.
    """
    if path is None:
        return copy.deepcopy(DEFAULTS)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ConfigError("configuration must be a JSON object")
    cfg = _merge(DEFAULTS, doc)
    if isinstance(cfg["device"], str):
        dev = Path(cfg["device"])
        dev = dev if dev.is_absolute() else p.parent / dev
        if not dev.is_file():
            raise ConfigError(f"device file not found: {dev}")
        cfg["device"] = json.loads(dev.read_text())
    prof = cfg["error_budget"].get("profile_path")
    if prof and not Path(prof).is_absolute():
        cfg["error_budget"]["profile_path"] = str(p.parent / prof)
    return cfg


def _device(cfg: Dict, levels: Optional[int]) -> DeviceParams:
    try:
        params = DeviceParams.from_dict(cfg["device"])
        return params.with_levels(levels) if levels else params
    except (ValidationError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid device description: {exc}") from exc


def _grid(block: Mapping) -> np.ndarray:
    try:
        lo, hi, step = (float(block[k]) for k in ("frequency_min_ghz", "frequency_max_ghz", "frequency_step_ghz"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"frequency grid needs numeric min/max/step: {exc}") from exc
    if step <= 0 or hi < lo:
        raise ConfigError("frequency grid is empty")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


class Context:
    def __init__(self, cfg: Dict, seed: int, out: Path, threads: int, levels: Optional[int]):
        self.cfg = cfg
        self.seed = seed
        self.out = out
        self.threads = threads
        self.params = _device(cfg, levels)
        self.meta = run_metadata({**cfg, "device": self.params.to_dict()}, seed)
        self.written: List[Path] = []

    def json(self, name: str, payload: Mapping):
        self.written.append(write_json(self.out / name, payload, self.meta))

    def csv(self, name: str, header, rows):
        self.written.append(write_csv(self.out / name, header, rows, self.meta))

    def calibrate(self):
        from .calibration import calibrate_cz

        block = self.cfg["calibration"]
        return calibrate_cz(
            self.params,
            float(block["duration_ns"]),
            tolerance=float(block["tolerance_rad"]),
            space=block["space"],
        )

    def profile(self, pulse):
        from .error_budget import DecoherenceProfile, reconstructed_profile

        block = self.cfg["error_budget"]
        if block.get("profile_path"):
            path = Path(block["profile_path"])
            if not path.is_file():
                raise ConfigError(f"profile file not found: {path}")
            return DecoherenceProfile.from_dict(json.loads(path.read_text()))
        return reconstructed_profile(
            self.params,
            pulse,
            tphi_q1_eff=float(block["tphi_q1_eff_us"]),
            relaxation_target=float(block["relaxation_target"]),
            t1_idle=tuple(block["t1_idle_us"]),
            tphi_idle=tuple(block["tphi_idle_us"]),
            tau_spacing=float(block["spacing_ns"]),
        )


# -- commands ----------------------------------------------------------------


def cmd_spectrum(ctx: Context) -> Dict:
    from .spectrum import L101, min_gap_detail, track_spectra

    block = ctx.cfg["spectrum"]
    freqs = _grid(block)
    spectra = track_spectra(ctx.params, freqs, max_excitation=2)
    labels = list(spectra[0].levels_in(2)[0])
    header = ["coupler_frequency_GHz"] + ["E_%d%d%d_GHz" % lab for lab in labels]
    rows = []
    for w, spec in zip(freqs, spectra):
        labs, energies = spec.levels_in(2)
        lookup = dict(zip(labs, energies))
        rows.append([w] + [lookup[lab] for lab in labels])
    ctx.csv("spectrum.csv", header, rows)

    cal = ctx.calibrate()
    gap, where, partner = min_gap_detail(ctx.params, cal.pulse)
    summary = {
        "min_gap_MHz": 1e3 * gap,
        "min_gap_coupler_frequency_GHz": where,
        "min_gap_partner_label": "".join(map(str, partner)),
        "tracked_label": "".join(map(str, L101)),
        "trajectory_peak_frequency_GHz": cal.pulse.peak_frequency,
        "trajectory_duration_ns": cal.pulse.duration,
    }
    ctx.json("gap_summary.json", summary)
    return summary


def cmd_chi_sweep(ctx: Context) -> Dict:
    from .calibration import ramsey_chi12
    from .spectrum import chi12_spectral, sweep_chi

    block = ctx.cfg["chi_sweep"]
    sweep = sweep_chi(ctx.params, _grid(block), workers=ctx.threads)
    ctx.csv(
        "chi_sweep.csv",
        ("coupler_frequency_GHz", "chi12_kHz", "label_overlap", "flags"),
        ((w, 1e6 * c, o, f) for w, c, o, f in sweep.rows()),
    )
    finite = np.abs(sweep.chi12[np.isfinite(sweep.chi12)])
    summary = {
        "points": int(len(sweep.frequencies)),
        "flagged_points": int(sum(bool(f) for f in sweep.flags)),
        "max_abs_chi12_kHz": 1e6 * float(finite.max()) if finite.size else None,
        "min_abs_chi12_kHz": 1e6 * float(finite.min()) if finite.size else None,
        "dynamic_range": sweep.dynamic_range if finite.size and finite.min() > 0 else None,
    }
    checks = [float(w) for w in block.get("ramsey_frequencies_ghz") or []]
    if checks:
        t1, t2 = (float(t) for t in block["ramsey_durations_ns"])
        ramp = float(block["ramsey_ramp_ns"])
        rows = []
        for w in checks:
            spectral = chi12_spectral(ctx.params, w)
            flag = ""
            try:
                ramsey = ramsey_chi12(ctx.params, w, (t1, t2), ramp)
            except ToolkitError as exc:
                ramsey, flag = float("nan"), f"error:{type(exc).__name__}"
            rows.append((w, 1e6 * spectral, 1e6 * ramsey, flag))
        ctx.csv(
            "chi_ramsey_check.csv",
            ("coupler_frequency_GHz", "chi12_spectral_kHz", "chi12_ramsey_kHz", "flags"),
            rows,
        )
    ctx.json("chi_summary.json", summary)
    return summary


def cmd_calibrate(ctx: Context) -> Dict:
    block = ctx.cfg["calibration"]
    r1q = float(block["single_qubit_error"])
    if not 0 <= r1q < 1:
        raise ConfigError("single_qubit_error must lie in [0, 1)")
    cal = ctx.calibrate()
    report = {
        **cal.report(),
        "duration_ns": cal.pulse.duration,
        "space": cal.pulse.space,
        "single_qubit_error": r1q,
        "diagnostics": {k: v for k, v in cal.diagnostics.items() if k != "scan"},
    }
    ctx.json("calibration.json", report)
    ctx.csv("calibrated_pulse.csv", ("t_ns", "coupler_frequency_GHz", "flux_Phi0"), cal.pulse.waveform_rows())
    return report


def cmd_rb(ctx: Context) -> Dict:
    from .benchmarking.rb import PhysicalChannels, RBConfig, run_interleaved
    from .calibration import compensated_cz_channel

    block = ctx.cfg["rb"]
    cal = ctx.calibrate()
    noise = None
    kind = block["noise"]
    if kind == "reconstructed":
        noise = ctx.profile(cal.pulse).noise_model(block["dephasing_kind"], int(block["noise_samples"]), ctx.seed)
    elif kind != "none":
        raise ConfigError("rb.noise must be 'reconstructed' or 'none'")
    channel = compensated_cz_channel(ctx.params, cal.pulse, noise, cal.metrics.single_qubit_phases)
    try:
        config = RBConfig(tuple(block["sequence_lengths"]), int(block["sequences_per_length"]), ctx.seed)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    provider = PhysicalChannels(channel, float(ctx.cfg["calibration"]["single_qubit_error"]))
    res = run_interleaved(provider, config, int(block["bootstrap_resamples"]), ctx.threads)
    header = ("arm", "length", "sequence", "survival", "leakage")
    rows = [("reference",) + r for r in res.reference.rows()] + [("interleaved",) + r for r in res.interleaved.rows()]
    ctx.csv("rb_raw.csv", header, rows)
    summary = {**res.summary(), "noise": kind, "calibration": cal.report()}
    ctx.json("rb_summary.json", summary)
    return summary


def cmd_error_budget(ctx: Context) -> Dict:
    from .error_budget import (
        JOINT_STATES,
        analytic_budget,
        mean_additional_error,
        transitional_channels,
        transitional_error_experiment,
    )

    block = ctx.cfg["error_budget"]
    cal = ctx.calibrate()
    profile = ctx.profile(cal.pulse)
    report = analytic_budget(profile, cal.pulse, total=float(block["total_error"]), tau_spacing=float(block["spacing_ns"]))
    payload = {"budget": report.to_dict(), "profile": profile.to_dict()}
    if block["transitional"]:
        noise = profile.noise_model(seed=ctx.seed)
        chans = transitional_channels(ctx.params, noise, cal.pulse, cal.metrics.single_qubit_phases, float(block["spacing_ns"]))
        results = [
            transitional_error_experiment(
                ctx.params, noise, s, int(block["transitional_m_max"]), cal.pulse, channels=chans
            )
            for s in JOINT_STATES
        ]
        rows = []
        for r in results:
            for m, a, b in zip(r.repetitions, r.cz_population, r.identity_population):
                rows.append((r.joint_state, int(m), a, b))
        ctx.csv("transitional.csv", ("joint_state", "m", "cz_population", "identity_population"), rows)
        payload["transitional"] = {
            r.joint_state: {
                "cz_rate": r.cz_rate,
                "identity_rate": r.identity_rate,
                "relaxation_correction": r.relaxation_correction,
                "additional_error": r.additional_error,
            }
            for r in results
        }
        payload["transitional_mean_additional_error"] = mean_additional_error(results)
    ctx.json("error_budget.json", payload)
    return payload


def cmd_crosstalk(ctx: Context) -> Dict:
    from .spectrum import crosstalk_sensitivity

    block = ctx.cfg["crosstalk"]
    fractions = [float(f) for f in block["fractions"]]
    if not fractions:
        raise ConfigError("crosstalk.fractions is empty")
    amp = block.get("aggressor_amplitude_phi0")
    amp = ctx.calibrate().amplitude if amp is None else float(amp)
    rows = [(f, 1e6 * crosstalk_sensitivity(ctx.params, amp, f)) for f in fractions]
    ctx.csv("crosstalk.csv", ("fraction", "delta_abs_chi12_kHz"), rows)
    summary = {"aggressor_amplitude_Phi0": amp, "rows": len(rows)}
    ctx.json("crosstalk_summary.json", summary)
    return summary


COMMANDS: Dict[str, Callable[[Context], Dict]] = {
    "spectrum": cmd_spectrum,
    "chi-sweep": cmd_chi_sweep,
    "calibrate": cmd_calibrate,
    "rb": cmd_rb,
    "error-budget": cmd_error_budget,
    "crosstalk": cmd_crosstalk,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adiabatic-cz", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    parser.add_argument("--out", default="results", help="output directory (default: results)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for sweeps and RB")
    parser.add_argument("--levels", type=int, help="levels per mode (truncation override)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = cfg["seed"] if args.seed is None else args.seed
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.levels is not None and args.levels < 3:
            raise ConfigError("--levels must be at least 3")
        cfg["seed"] = seed
        ctx = Context(cfg, seed, Path(args.out), args.threads, args.levels)
        COMMANDS[args.command](ctx)
    except (ConfigError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ToolkitError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in ctx.written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
