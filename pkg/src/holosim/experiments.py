"""Config-driven scenario runner for the bundled experiments.

Every scenario is a pure function of ``(config, seed)``: trial ``t``
draws from ``rng.stream(seed, t)`` (multi-user trials draw placements
first, then each user's angular response and leakage in user order), and
results are accumulated in trial order, so re-running a config is
byte-identical for any worker count.  Each run writes ``results.csv``
(plus scenario-specific artifacts and figures) and a ``manifest.json``
with checksums of every output file.
"""

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import (
    MultiUserScenario,
    eigen_spectrum,
    gain_rate,
    iterative_water_filling,
    mrt_sum_rate,
    resample_receive_array,
    zf_sum_rate,
)
from .channel import load_channel_csv, save_channel_csv, steered_pattern_matrix, synthesize_pol
from .efficiency import transmission_efficiency_bound, radiation_efficiency_bound
from .errors import ConfigError
from .geometry import ArrayGeometry, propagating_sample_set, steering_matrix
from .patterns import (
    XprParameters,
    dipole_pattern,
    draw_leakage,
    isotropic_pattern,
    load_pattern_file,
)
from .rng import stream
from .spectrum import draw_angular_response, variance_map

SCENARIOS = (
    "fig8a_spacing_sweep",
    "fig8b_xpr_sweep",
    "fig11_dipole_arrays",
    "fig13_mu_zf_mrt",
    "fig14_mu_iwf",
    "postprocess_pipeline",
    "efficiency_tables",
)

SPACING_SWEEP = [1.0, 0.875, 0.75, 0.625, 0.5, 0.375, 0.25, 0.125]
DIPOLE_STRUCTURES = [[0.5, 0.5], [0.25, 0.5], [0.125, 0.5]]
EFFICIENCY_MODES = ("holo", "bound", "simulated", "calibrated", "unit")

RESULT_COLUMNS = ["scenario", "spacing_wl", "model", "allocation", "trials", "mean_bits", "ci95_bits"]

_MAX_PER_SIDE = 64  # keeps an accidental config from requesting a week of linear algebra

_DIPOLE_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


def _default_parameters(scenario):
    common = {"snr_db": 0.0, "total_power_w": 10.0, "normalization": "unit-average-gain"}
    if scenario == "fig8a_spacing_sweep":
        return common | {
            "aperture_wl": 4.0,
            "spacings_wl": list(SPACING_SWEEP),
            "models": ["holo", "mdf"],
            "allocations": ["waterfilling"],
        }
    if scenario == "fig8b_xpr_sweep":
        return common | {
            "aperture_wl": 4.0,
            "spacing_wl": 0.5,
            "kappa_values": [0.1, 1.0, 10.0, 100.0, 1e4, 1e6],
            "include_scalar_reference": True,
        }
    if scenario == "fig11_dipole_arrays":
        return common | {
            "aperture_wl": 4.0,
            "structures": [list(s) for s in DIPOLE_STRUCTURES],
            "efficiency_modes": ["unit", "bound"],
            "pattern_file": None,
            "dipole_axis": "y",
            "xpr_mu_db": 8.0,
            "xpr_sigma_db": 3.0,
        }
    if scenario == "fig13_mu_zf_mrt":
        return common | {
            "bs_aperture_wl": 8.0,
            "ut_aperture_wl": 4.0,
            "n_users": 3,
            "spacings_wl": list(SPACING_SWEEP),
            "precoders": ["zf", "mrt"],
            "compensation": [False, True],
            "streams": "per_user",
        }
    if scenario == "fig14_mu_iwf":
        return common | {
            "bs_aperture_wl": 4.0,
            "bs_structures": [list(s) for s in DIPOLE_STRUCTURES],
            "n_users": 10,
            "ut_count_x": 2,
            "ut_count_y": 2,
            "ut_aperture_x_wl": 1.0 / math.sqrt(2.0),
            "ut_aperture_y_wl": math.sqrt(2.0),
            "sector_half_angle_deg": 60.0,
            "range_min_m": 25.0,
            "range_max_m": 100.0,
            "reference_range_m": 50.0,
            "reference_snr_db": 0.0,
            "pathloss_exponent": 2.0,
            "efficiency_modes": ["unit", "bound"],
            "pattern_file": None,
            "dipole_axis": "y",
            "xpr_mu_db": 8.0,
            "xpr_sigma_db": 3.0,
            "iwf_tolerance": 1e-6,
            "iwf_max_iters": 100,
        }
    if scenario == "postprocess_pipeline":
        return common | {
            "channel_file": None,
            "source_count_x": 4,
            "source_count_y": 4,
            "source_spacing_wl": 0.5,
            "receive_count_x": 16,
            "receive_count_y": 16,
            "receive_spacing_wl": 0.125,
            "target_spacings_wl": [0.125, 0.25, 0.5],
            "allocations": ["waterfilling", "equal"],
            "top_eigenvalues": 16,
            "xpr_mu_db": 8.0,
            "xpr_sigma_db": 3.0,
            "compensate_source": True,
        }
    if scenario == "efficiency_tables":
        return {
            "aperture_wl": 4.0,
            "structures": [list(s) for s in DIPOLE_STRUCTURES],
            "simulated_percent": None,
            "wavelength_m": 0.15,
            "skin_depth_m": 1.9e-6,
            "radiation_sides_wl": [0.01, 0.1],
        }
    raise ConfigError(f"scenario: unknown scenario id {scenario!r}")


_DEFAULT_TRIALS = {"postprocess_pipeline": 1, "efficiency_tables": 1}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario description (see README for the JSON schema)."""

    scenario: str
    seed: int = 1234
    trials: int = 500
    workers: int = 1
    output: str = "results"
    figures: bool = True
    parameters: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = set(raw) - {"scenario", "seed", "trials", "workers", "output", "figures", "parameters"}
        if unknown:
            raise ConfigError(f"config: unknown top-level keys {sorted(unknown)}")
        scenario = raw.get("scenario")
        if scenario not in SCENARIOS:
            raise ConfigError(f"scenario: expected one of {list(SCENARIOS)}, got {scenario!r}")
        parameters = _default_parameters(scenario)
        supplied = raw.get("parameters", {})
        if not isinstance(supplied, dict):
            raise ConfigError("parameters: expected an object")
        for key in supplied:
            if key not in parameters:
                raise ConfigError(f"parameters.{key}: unknown key for scenario {scenario}")
        parameters.update(supplied)
        config = cls(
            scenario=scenario,
            seed=int(raw.get("seed", 1234)),
            trials=int(raw.get("trials", _DEFAULT_TRIALS.get(scenario, 500))),
            workers=int(raw.get("workers", 1)),
            output=str(raw.get("output", "results")),
            figures=bool(raw.get("figures", True)),
            parameters=parameters,
        )
        config.validate()
        return config

    def canonical(self):
        """Scientific content of the config (what the hash covers)."""
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "trials": self.trials,
            "parameters": self.parameters,
        }

    def replace(self, **kwargs):
        data = {
            "scenario": self.scenario,
            "seed": self.seed,
            "trials": self.trials,
            "workers": self.workers,
            "output": self.output,
            "figures": self.figures,
            "parameters": self.parameters,
        }
        data.update(kwargs)
        return ScenarioConfig(**data)

    def validate(self):
        p = self.parameters
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        if "total_power_w" in p and p["total_power_w"] <= 0:
            raise ConfigError("parameters.total_power_w: must be positive")
        for key in ("aperture_wl", "bs_aperture_wl", "ut_aperture_wl"):
            if key in p and p[key] <= 0:
                raise ConfigError(f"parameters.{key}: must be positive")
        if "normalization" in p and p["normalization"] not in ("raw", "unit-average-gain"):
            raise ConfigError("parameters.normalization: expected raw or unit-average-gain")

        def check_spacing(key, spacing, aperture):
            if spacing <= 0:
                raise ConfigError(f"parameters.{key}: spacing {spacing} must be positive")
            if spacing > aperture + 1e-12:
                raise ConfigError(
                    f"parameters.{key}: spacing {spacing} exceeds aperture {aperture}"
                )
            n = round(aperture / spacing)
            if n < 1 or abs(aperture - n * spacing) > 1e-9:
                raise ConfigError(
                    f"parameters.{key}: aperture {aperture} is not an integer multiple of {spacing}"
                )
            if n > _MAX_PER_SIDE:
                raise ConfigError(
                    f"parameters.{key}: {n} elements per side exceeds the desk-scale cap {_MAX_PER_SIDE}"
                )

        if self.scenario == "fig8a_spacing_sweep":
            for i, d in enumerate(p["spacings_wl"]):
                check_spacing(f"spacings_wl[{i}]", d, p["aperture_wl"])
            for model in p["models"]:
                if model not in ("holo", "mdf"):
                    raise ConfigError(f"parameters.models: unknown model {model!r}")
            for allocation in p["allocations"]:
                if allocation not in ("waterfilling", "equal"):
                    raise ConfigError(f"parameters.allocations: unknown allocation {allocation!r}")
        elif self.scenario == "fig8b_xpr_sweep":
            check_spacing("spacing_wl", p["spacing_wl"], p["aperture_wl"])
            for i, kappa in enumerate(p["kappa_values"]):
                if kappa <= 0:
                    raise ConfigError(f"parameters.kappa_values[{i}]: must be positive")
        elif self.scenario == "fig11_dipole_arrays":
            self._validate_structures(p["structures"], p["aperture_wl"], check_spacing)
            self._validate_modes(p["efficiency_modes"], p["pattern_file"], len(p["structures"]))
        elif self.scenario == "fig13_mu_zf_mrt":
            if p["n_users"] < 1:
                raise ConfigError("parameters.n_users: must be >= 1")
            if p["streams"] not in ("per_user", "per_antenna"):
                raise ConfigError("parameters.streams: expected per_user or per_antenna")
            for i, d in enumerate(p["spacings_wl"]):
                check_spacing(f"spacings_wl[{i}] (BS)", d, p["bs_aperture_wl"])
                check_spacing(f"spacings_wl[{i}] (UT)", d, p["ut_aperture_wl"])
            for precoder in p["precoders"]:
                if precoder not in ("zf", "mrt"):
                    raise ConfigError(f"parameters.precoders: unknown precoder {precoder!r}")
        elif self.scenario == "fig14_mu_iwf":
            if p["n_users"] < 1:
                raise ConfigError("parameters.n_users: must be >= 1")
            if not 0 < p["range_min_m"] < p["range_max_m"]:
                raise ConfigError("parameters.range_min_m/range_max_m: need 0 < min < max")
            if p["ut_count_x"] < 1 or p["ut_count_y"] < 1:
                raise ConfigError("parameters.ut_count_x/ut_count_y: must be >= 1")
            self._validate_structures(p["bs_structures"], p["bs_aperture_wl"], check_spacing)
            self._validate_modes(p["efficiency_modes"], p["pattern_file"], len(p["bs_structures"]))
        elif self.scenario == "postprocess_pipeline":
            if p["channel_file"] is not None and not Path(p["channel_file"]).exists():
                raise ConfigError(f"parameters.channel_file: {p['channel_file']} does not exist")
            measured = p["receive_spacing_wl"]
            if measured <= 0:
                raise ConfigError("parameters.receive_spacing_wl: must be positive")
            for i, d in enumerate(p["target_spacings_wl"]):
                ratio = d / measured
                if d <= 0 or abs(ratio - round(ratio)) > 1e-9:
                    raise ConfigError(
                        f"parameters.target_spacings_wl[{i}]: {d} is not an integer multiple "
                        f"of the measured spacing {measured}"
                    )
        elif self.scenario == "efficiency_tables":
            for i, (dx, dy) in enumerate(p["structures"]):
                if dx <= 0 or dy <= 0:
                    raise ConfigError(f"parameters.structures[{i}]: spacings must be positive")
            if p["simulated_percent"] is not None and len(p["simulated_percent"]) != len(p["structures"]):
                raise ConfigError("parameters.simulated_percent: one value per structure")

    def _validate_structures(self, structures, aperture, check_spacing):
        for i, structure in enumerate(structures):
            if len(structure) != 2:
                raise ConfigError(f"parameters.structures[{i}]: expected [dx, dy]")
            dx, dy = structure
            check_spacing(f"structures[{i}].dx", dx, aperture)
            check_spacing(f"structures[{i}].dy", dy, aperture)

    def _validate_modes(self, modes, pattern_file, n_structures=None):
        for mode in modes:
            if mode not in EFFICIENCY_MODES:
                raise ConfigError(f"parameters.efficiency_modes: unknown mode {mode!r}")
            if mode in ("simulated", "calibrated") and pattern_file is None:
                raise ConfigError(
                    f"parameters.pattern_file: required for efficiency mode {mode!r}"
                )
        if pattern_file is None:
            return
        files = pattern_file if isinstance(pattern_file, list) else [pattern_file]
        if isinstance(pattern_file, list) and n_structures is not None and len(files) != n_structures:
            raise ConfigError(
                f"parameters.pattern_file: {len(files)} files for {n_structures} structures"
            )
        for name in files:
            if not Path(name).exists():
                raise ConfigError(f"parameters.pattern_file: {name} does not exist")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    return ScenarioConfig.from_dict(raw)


@dataclass(frozen=True)
class ResultTable:
    """Rows written to results.csv, plus the run manifest."""

    columns: list
    rows: list
    output_dir: Path
    manifest: dict


# ---------------------------------------------------------------------------
# shared numerics


def _qr_r(matrix):
    """Triangular factor whose product form preserves singular values."""
    return np.linalg.qr(matrix, mode="r")


def _mean_ci(values):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size > 1:
        ci = float(1.96 * values.std(ddof=1) / np.sqrt(values.size))
    else:
        ci = 0.0
    return mean, ci


def _run_trials(trials, workers, fn):
    """Evaluate ``fn(t)`` for every trial index, results in trial order."""
    results = [None] * trials
    def slot(t):
        results[t] = fn(t)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(slot, range(trials)))
    else:
        for t in range(trials):
            slot(t)
    return results


def _scalar_core_factors(aperture, spacing, normalization):
    """Compressed steering factors of identical transmit/receive arrays."""
    geometry = ArrayGeometry.from_aperture(aperture, aperture, spacing, spacing)
    sset = propagating_sample_set(aperture, aperture)
    vmap = variance_map(sset, sset, normalization)
    r = _qr_r(steering_matrix(geometry, sset))
    return geometry, sset, vmap, r


def _dipole_patterns(geometry, axis_key):
    pattern = dipole_pattern(_DIPOLE_AXES[axis_key])
    return [pattern] * geometry.count


def _pattern_file_for(pattern_file, index):
    if isinstance(pattern_file, list):
        return pattern_file[index]
    return pattern_file


def _load_patterns_for(geometry, pattern_file, fallback):
    """Patterns + simulated efficiencies for an array, broadcasting singles."""
    if pattern_file is None:
        return fallback, None
    patterns, profile = load_pattern_file(pattern_file)
    chis = profile.per_element
    if len(patterns) == 1:
        return [patterns[0]] * geometry.count, np.full(geometry.count, chis[0])
    if len(patterns) != geometry.count:
        raise ConfigError(
            f"parameters.pattern_file: {len(patterns)} elements in file, "
            f"array needs {geometry.count} (or a single broadcastable element)"
        )
    return patterns, chis


def _mode_efficiencies(mode, count, chi_bound, chi_simulated):
    if mode == "unit" or mode == "holo":
        return np.ones(count)
    if mode == "bound":
        return np.full(count, chi_bound)
    if mode == "simulated":
        return np.asarray(chi_simulated, dtype=float)
    if mode == "calibrated":
        return np.maximum(np.asarray(chi_simulated, dtype=float), chi_bound)
    raise ConfigError(f"unknown efficiency mode {mode!r}")


# ---------------------------------------------------------------------------
# scenario kernels


def _run_fig8a(config):
    p = config.parameters
    rho = 10.0 ** (p["snr_db"] / 10.0)
    rows = []
    for spacing in p["spacings_wl"]:
        geometry, _, vmap, r = _scalar_core_factors(
            p["aperture_wl"], spacing, p["normalization"]
        )
        chi = transmission_efficiency_bound(spacing, spacing)
        scales = {"holo": 1.0, "mdf": chi}
        for allocation in p["allocations"]:
            def one_trial(t):
                h_a = draw_angular_response(vmap, stream(config.seed, t)).matrix
                core = r @ h_a @ r.T
                svals = np.linalg.svd(core, compute_uv=False)
                gains = rho * svals**2
                return {
                    model: gain_rate(
                        scales[model] ** 2 * gains,
                        p["total_power_w"],
                        allocation,
                        geometry.count,
                    )
                    for model in p["models"]
                }
            per_trial = _run_trials(config.trials, config.workers, one_trial)
            for model in p["models"]:
                mean, ci = _mean_ci([row[model] for row in per_trial])
                rows.append(
                    {
                        "scenario": config.scenario,
                        "spacing_wl": spacing,
                        "model": model,
                        "allocation": allocation,
                        "trials": config.trials,
                        "mean_bits": mean,
                        "ci95_bits": ci,
                    }
                )
    return RESULT_COLUMNS, rows, {}


def _run_fig8b(config):
    p = config.parameters
    rho = 10.0 ** (p["snr_db"] / 10.0)
    spacing = p["spacing_wl"]
    geometry, sset, vmap, r_scalar = _scalar_core_factors(
        p["aperture_wl"], spacing, p["normalization"]
    )
    patterns = [isotropic_pattern("theta")] * geometry.count
    f = steered_pattern_matrix(geometry, patterns, sset)
    r_pol = _qr_r(f)
    n = len(sset)
    ones2 = np.ones((2, 2))
    rows = []

    def pol_rates(t, kappa):
        rng = stream(config.seed, t)
        h_a = draw_angular_response(vmap, rng).matrix
        omega = draw_leakage(XprParameters(deterministic_kappa=kappa), n, n, rng)
        core = r_pol @ (omega.matrix * np.kron(h_a, ones2)) @ r_pol.T
        svals = np.linalg.svd(core, compute_uv=False)
        return gain_rate(rho * svals**2, p["total_power_w"], "waterfilling")

    for kappa in p["kappa_values"]:
        per_trial = _run_trials(config.trials, config.workers, lambda t: pol_rates(t, kappa))
        mean, ci = _mean_ci(per_trial)
        rows.append(
            {
                "scenario": config.scenario,
                "spacing_wl": spacing,
                "model": "pol",
                "allocation": "waterfilling",
                "trials": config.trials,
                "mean_bits": mean,
                "ci95_bits": ci,
                "kappa": kappa,
            }
        )
    if p["include_scalar_reference"]:
        def holo_rate(t):
            h_a = draw_angular_response(vmap, stream(config.seed, t)).matrix
            svals = np.linalg.svd(r_scalar @ h_a @ r_scalar.T, compute_uv=False)
            return gain_rate(rho * svals**2, p["total_power_w"], "waterfilling")
        per_trial = _run_trials(config.trials, config.workers, holo_rate)
        mean, ci = _mean_ci(per_trial)
        rows.append(
            {
                "scenario": config.scenario,
                "spacing_wl": spacing,
                "model": "holo",
                "allocation": "waterfilling",
                "trials": config.trials,
                "mean_bits": mean,
                "ci95_bits": ci,
                "kappa": "",
            }
        )
    return RESULT_COLUMNS + ["kappa"], rows, {}


def _run_fig11(config):
    p = config.parameters
    rho = 10.0 ** (p["snr_db"] / 10.0)
    aperture = p["aperture_wl"]
    sset = propagating_sample_set(aperture, aperture)
    xpr = XprParameters(p["xpr_mu_db"], p["xpr_sigma_db"])
    n = len(sset)
    ones2 = np.ones((2, 2))
    rows = []
    for index, (dx, dy) in enumerate(p["structures"]):
        geometry = ArrayGeometry.from_aperture(aperture, aperture, dx, dy)
        structure = f"{geometry.count_y}x{geometry.count_x}"
        vmap = variance_map(sset, sset, p["normalization"])
        fallback = _dipole_patterns(geometry, p["dipole_axis"])
        patterns, chi_simulated = _load_patterns_for(
            geometry, _pattern_file_for(p["pattern_file"], index), fallback
        )
        chi_bound = transmission_efficiency_bound(dx, dy)
        f = steered_pattern_matrix(geometry, patterns, sset)
        u_scalar = None
        factors = {}
        for mode in p["efficiency_modes"]:
            if mode == "holo":
                u_scalar = _qr_r(steering_matrix(geometry, sset))
                continue
            chi = _mode_efficiencies(mode, geometry.count, chi_bound, chi_simulated)
            factors[mode] = _qr_r(np.sqrt(chi)[:, None] * f)

        def one_trial(t):
            rng = stream(config.seed, t)
            h_a = draw_angular_response(vmap, rng).matrix
            omega = draw_leakage(xpr, n, n, rng)
            mixed = omega.matrix * np.kron(h_a, ones2)
            out = {}
            for mode, r in factors.items():
                svals = np.linalg.svd(r @ mixed @ r.T, compute_uv=False)
                out[mode] = gain_rate(rho * svals**2, p["total_power_w"], "waterfilling")
            if u_scalar is not None:
                svals = np.linalg.svd(u_scalar @ h_a @ u_scalar.T, compute_uv=False)
                out["holo"] = gain_rate(rho * svals**2, p["total_power_w"], "waterfilling")
            return out

        per_trial = _run_trials(config.trials, config.workers, one_trial)
        for mode in p["efficiency_modes"]:
            mean, ci = _mean_ci([row[mode] for row in per_trial])
            rows.append(
                {
                    "scenario": config.scenario,
                    "spacing_wl": dx,
                    "model": "holo" if mode == "holo" else "pol",
                    "allocation": "waterfilling",
                    "trials": config.trials,
                    "mean_bits": mean,
                    "ci95_bits": ci,
                    "structure": structure,
                    "efficiency_mode": mode,
                }
            )
    return RESULT_COLUMNS + ["structure", "efficiency_mode"], rows, {}


def _run_fig13(config):
    p = config.parameters
    rho = 10.0 ** (p["snr_db"] / 10.0)
    n_users = p["n_users"]
    rows = []
    for spacing in p["spacings_wl"]:
        bs = ArrayGeometry.from_aperture(p["bs_aperture_wl"], p["bs_aperture_wl"], spacing, spacing)
        ut = ArrayGeometry.from_aperture(p["ut_aperture_wl"], p["ut_aperture_wl"], spacing, spacing)
        sset_bs = propagating_sample_set(bs.aperture_x, bs.aperture_y)
        sset_ut = propagating_sample_set(ut.aperture_x, ut.aperture_y)
        vmap = variance_map(sset_ut, sset_bs, p["normalization"])
        r_ut = _qr_r(steering_matrix(ut, sset_ut))
        r_bs = _qr_r(steering_matrix(bs, sset_bs))
        chi = transmission_efficiency_bound(spacing, spacing)
        rho_users = np.full(n_users, rho)

        def one_trial(t):
            rng = stream(config.seed, t)
            cores = [
                r_ut @ draw_angular_response(vmap, rng).matrix @ r_bs.T
                for _ in range(n_users)
            ]
            out = {}
            for compensated in p["compensation"]:
                scale = chi if compensated else 1.0
                channels = [scale * core for core in cores]
                for precoder in p["precoders"]:
                    rate_fn = zf_sum_rate if precoder == "zf" else mrt_sum_rate
                    out[(compensated, precoder)] = rate_fn(
                        channels, p["total_power_w"], rho_users, streams=p["streams"]
                    )
            return out

        per_trial = _run_trials(config.trials, config.workers, one_trial)
        for compensated in p["compensation"]:
            for precoder in p["precoders"]:
                mean, ci = _mean_ci([row[(compensated, precoder)] for row in per_trial])
                rows.append(
                    {
                        "scenario": config.scenario,
                        "spacing_wl": spacing,
                        "model": "mdf" if compensated else "holo",
                        "allocation": precoder,
                        "trials": config.trials,
                        "mean_bits": mean,
                        "ci95_bits": ci,
                        "compensated": compensated,
                    }
                )
    return RESULT_COLUMNS + ["compensated"], rows, {}


def _psd_sqrt(matrix):
    w, v = np.linalg.eigh((matrix + matrix.conj().T) / 2.0)
    return v * np.sqrt(np.clip(w, 0.0, None))


def _run_fig14(config):
    p = config.parameters
    n_users = p["n_users"]
    ut = ArrayGeometry.from_counts(
        p["ut_count_x"],
        p["ut_count_y"],
        p["ut_aperture_x_wl"] / p["ut_count_x"],
        p["ut_aperture_y_wl"] / p["ut_count_y"],
    )
    sset_ut = propagating_sample_set(ut.aperture_x, ut.aperture_y)
    chi_ut_bound = transmission_efficiency_bound(ut.spacing_x, ut.spacing_y)
    axis = p["dipole_axis"]
    ut_patterns = _dipole_patterns(ut, axis)
    f_ut = steered_pattern_matrix(ut, ut_patterns, sset_ut)
    xpr = XprParameters(p["xpr_mu_db"], p["xpr_sigma_db"])
    sector = math.radians(p["sector_half_angle_deg"])
    r_min2, r_max2 = p["range_min_m"] ** 2, p["range_max_m"] ** 2
    rows = []
    for index, (dx, dy) in enumerate(p["bs_structures"]):
        bs = ArrayGeometry.from_aperture(p["bs_aperture_wl"], p["bs_aperture_wl"], dx, dy)
        structure = f"{bs.count_y}x{bs.count_x}"
        sset_bs = propagating_sample_set(bs.aperture_x, bs.aperture_y)
        vmap = variance_map(sset_ut, sset_bs, p["normalization"])
        n_r, n_s = len(sset_ut), len(sset_bs)
        fallback = _dipole_patterns(bs, axis)
        bs_patterns, chi_simulated = _load_patterns_for(
            bs, _pattern_file_for(p["pattern_file"], index), fallback
        )
        chi_bs_bound = transmission_efficiency_bound(dx, dy)
        f_bs = steered_pattern_matrix(bs, bs_patterns, sset_bs)
        # per-mode factors: receive side (UT) kept physical, BS side compressed
        mode_factors = {}
        for mode in p["efficiency_modes"]:
            if mode == "holo":
                raise ConfigError("parameters.efficiency_modes: holo is not defined for fig14")
            chi_bs = _mode_efficiencies(mode, bs.count, chi_bs_bound, chi_simulated)
            chi_ut = np.ones(ut.count) if mode == "unit" else np.full(ut.count, chi_ut_bound)
            a_ut = np.sqrt(chi_ut)[:, None] * f_ut
            b = f_bs.T * np.sqrt(chi_bs)[None, :]  # 2n_s x N_bs
            mode_factors[mode] = (a_ut, _psd_sqrt(b @ b.conj().T))
        ones2 = np.ones((2, 2))

        def one_trial(t):
            rng = stream(config.seed, t)
            # uniform over the sector area: quadratic range CDF, uniform azimuth
            ranges = np.sqrt(r_min2 + rng.random(n_users) * (r_max2 - r_min2))
            azimuths = rng.uniform(-sector, sector, n_users)
            drop = MultiUserScenario(
                bs_geometry=bs,
                user_geometries=[ut] * n_users,
                user_placements=list(zip(ranges, azimuths)),
                pathloss_exponent=p["pathloss_exponent"],
                reference_range_m=p["reference_range_m"],
                reference_snr_db=p["reference_snr_db"],
                total_power_w=p["total_power_w"],
            )
            rho_users = drop.rho_per_user()
            mixed = []
            for _ in range(n_users):
                h_a = draw_angular_response(vmap, rng).matrix
                omega = draw_leakage(xpr, n_r, n_s, rng)
                mixed.append(omega.matrix * np.kron(h_a, ones2))
            out = {}
            for mode, (a_ut, b_sqrt) in mode_factors.items():
                channels = [a_ut @ x @ b_sqrt for x in mixed]
                stacked = np.vstack(channels)
                # compress the shared transmit space to the stacked row span
                q = np.linalg.qr(stacked.conj().T)[0]
                compressed = [h @ q for h in channels]
                result = iterative_water_filling(
                    compressed,
                    p["total_power_w"],
                    rho_users,
                    tolerance=p["iwf_tolerance"],
                    max_iters=p["iwf_max_iters"],
                )
                out[mode] = result.sum_rate_bits
            return out

        per_trial = _run_trials(config.trials, config.workers, one_trial)
        for mode in p["efficiency_modes"]:
            mean, ci = _mean_ci([row[mode] for row in per_trial])
            rows.append(
                {
                    "scenario": config.scenario,
                    "spacing_wl": dx,
                    "model": "pol",
                    "allocation": "iwf",
                    "trials": config.trials,
                    "mean_bits": mean,
                    "ci95_bits": ci,
                    "structure": structure,
                    "efficiency_mode": mode,
                }
            )
    return RESULT_COLUMNS + ["structure", "efficiency_mode"], rows, {}


def generate_synthetic_measurement(
    path,
    seed,
    receive_grid=(16, 16, 0.125),
    source_grid=(4, 4, 0.5),
    xpr_mu_db=8.0,
    xpr_sigma_db=3.0,
):
    """Synthesize one virtual-probe measurement and write the channel CSV.

    Stands in for the measurement rig: a dense virtual receive grid
    scanned by a single probe (no receive-side coupling, unit
    efficiencies) against a fixed source array; one polarized-model
    realization drawn from ``stream(seed, 0)``.
    """
    rx_count_x, rx_count_y, rx_spacing = receive_grid
    src_count_x, src_count_y, src_spacing = source_grid
    receive = ArrayGeometry.from_counts(rx_count_x, rx_count_y, rx_spacing, rx_spacing)
    source = ArrayGeometry.from_counts(src_count_x, src_count_y, src_spacing, src_spacing)
    sset_r = propagating_sample_set(receive.aperture_x, receive.aperture_y)
    sset_s = propagating_sample_set(source.aperture_x, source.aperture_y)
    vmap = variance_map(sset_r, sset_s)
    rng = stream(seed, 0)
    h_a = draw_angular_response(vmap, rng, lineage=(seed, 0))
    omega = draw_leakage(
        XprParameters(xpr_mu_db, xpr_sigma_db), len(sset_r), len(sset_s), rng
    )
    pattern = isotropic_pattern("theta")
    f_r = steered_pattern_matrix(receive, [pattern] * receive.count, sset_r)
    f_s = steered_pattern_matrix(source, [pattern] * source.count, sset_s)
    realization = synthesize_pol(
        np.ones(receive.count), f_r, omega, h_a, f_s, np.ones(source.count),
        metadata={"receive_grid": receive_grid, "source_grid": source_grid},
    )
    save_channel_csv(path, realization)
    return realization


def _run_postprocess(config):
    p = config.parameters
    rho = 10.0 ** (p["snr_db"] / 10.0)
    extra_outputs = {}
    if p["channel_file"] is None:
        measurement_path = Path(config.output) / "measurement.csv"
        generate_synthetic_measurement(
            measurement_path,
            config.seed,
            (p["receive_count_x"], p["receive_count_y"], p["receive_spacing_wl"]),
            (p["source_count_x"], p["source_count_y"], p["source_spacing_wl"]),
            p["xpr_mu_db"],
            p["xpr_sigma_db"],
        )
        extra_outputs["measurement.csv"] = measurement_path
        matrix = load_channel_csv(measurement_path)
    else:
        matrix = load_channel_csv(p["channel_file"])
    grid = (p["receive_count_x"], p["receive_count_y"], p["receive_spacing_wl"])
    chi_s = (
        transmission_efficiency_bound(p["source_spacing_wl"], p["source_spacing_wl"])
        if p["compensate_source"]
        else 1.0
    )
    rows = []
    eigen_rows = []
    for spacing in p["target_spacings_wl"]:
        sub = resample_receive_array(matrix, grid, spacing)
        chi_r = transmission_efficiency_bound(spacing, spacing)
        for compensated in (False, True):
            h = np.sqrt(chi_r * chi_s) * sub if compensated else sub
            svals = np.linalg.svd(h, compute_uv=False)
            gains = rho * svals**2
            for allocation in p["allocations"]:
                rate = gain_rate(gains, p["total_power_w"], allocation, h.shape[1])
                rows.append(
                    {
                        "scenario": config.scenario,
                        "spacing_wl": spacing,
                        "model": "measured",
                        "allocation": allocation,
                        "trials": 1,
                        "mean_bits": rate,
                        "ci95_bits": 0.0,
                        "n_receive": sub.shape[0],
                        "compensated": compensated,
                    }
                )
            spectrum = eigen_spectrum(h)[: p["top_eigenvalues"]]
            for rank, value in enumerate(spectrum, start=1):
                eigen_rows.append(
                    {
                        "spacing_wl": spacing,
                        "n_receive": sub.shape[0],
                        "compensated": compensated,
                        "rank_index": rank,
                        "eigenvalue": value,
                    }
                )
    extra = {
        "eigen_spectra.csv": (
            ["spacing_wl", "n_receive", "compensated", "rank_index", "eigenvalue"],
            eigen_rows,
        )
    }
    return RESULT_COLUMNS + ["n_receive", "compensated"], rows, extra, extra_outputs


def _run_efficiency_tables(config):
    p = config.parameters
    rows = []
    simulated = p["simulated_percent"]
    aperture = p["aperture_wl"]
    for i, (dx, dy) in enumerate(p["structures"]):
        chi_ub = transmission_efficiency_bound(dx, dy)
        nx, ny = round(aperture / dx), round(aperture / dy)
        if abs(aperture - nx * dx) < 1e-9 and abs(aperture - ny * dy) < 1e-9:
            structure = f"{ny}x{nx}"
        else:
            structure = f"dx={dx};dy={dy}"
        row = {
            "scenario": config.scenario,
            "structure": structure,
            "spacing_x_wl": dx,
            "spacing_y_wl": dy,
            "chi_ub_percent": 100.0 * chi_ub,
        }
        if simulated is not None:
            chi_s = simulated[i]
            row["chi_s_percent"] = chi_s
            row["chi_0_percent"] = max(chi_s, 100.0 * chi_ub)
        else:
            row["chi_s_percent"] = ""
            row["chi_0_percent"] = ""
        rows.append(row)
    columns = [
        "scenario",
        "structure",
        "spacing_x_wl",
        "spacing_y_wl",
        "chi_ub_percent",
        "chi_s_percent",
        "chi_0_percent",
    ]
    radiation_rows = []
    k = 2.0 * np.pi / p["wavelength_m"]
    for side_wl in p["radiation_sides_wl"]:
        side_m = side_wl * p["wavelength_m"]
        radiation_rows.append(
            {
                "side_wl": side_wl,
                "side_m": side_m,
                "chi_r": radiation_efficiency_bound(side_m**2, p["skin_depth_m"], k),
            }
        )
    extra = {"radiation.csv": (["side_wl", "side_m", "chi_r"], radiation_rows)}
    return columns, rows, extra


# ---------------------------------------------------------------------------
# output plumbing


def _format_cell(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row.get(col, "")) for col in columns) + "\n")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config):
    payload = json.dumps(config.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def emit_manifest(config, outputs, path):
    """Write the reproduction manifest: config, hash, per-output checksums."""
    manifest = {
        "scenario": config.scenario,
        "seed": config.seed,
        "config": config.canonical(),
        "config_hash": config_hash(config),
        "package_version": __version__,
        "outputs": {name: _sha256(p) for name, p in sorted(outputs.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def run_scenario(config):
    """Execute one scenario config and write all outputs plus the manifest."""
    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    extra_tables = {}
    extra_outputs = {}
    if config.scenario == "fig8a_spacing_sweep":
        columns, rows, extra_tables = _run_fig8a(config)
    elif config.scenario == "fig8b_xpr_sweep":
        columns, rows, extra_tables = _run_fig8b(config)
    elif config.scenario == "fig11_dipole_arrays":
        columns, rows, extra_tables = _run_fig11(config)
    elif config.scenario == "fig13_mu_zf_mrt":
        columns, rows, extra_tables = _run_fig13(config)
    elif config.scenario == "fig14_mu_iwf":
        columns, rows, extra_tables = _run_fig14(config)
    elif config.scenario == "postprocess_pipeline":
        columns, rows, extra_tables, extra_outputs = _run_postprocess(config)
    elif config.scenario == "efficiency_tables":
        columns, rows, extra_tables = _run_efficiency_tables(config)
    else:
        raise ConfigError(f"scenario: unknown scenario id {config.scenario!r}")

    outputs = dict(extra_outputs)
    results_path = out_dir / "results.csv"
    _write_csv(results_path, columns, rows)
    outputs["results.csv"] = results_path
    for name, (cols, table_rows) in extra_tables.items():
        table_path = out_dir / name
        _write_csv(table_path, cols, table_rows)
        outputs[name] = table_path

    if config.figures:
        from . import plots

        for name, figure_path in plots.render_scenario_figures(
            config.scenario, rows, extra_tables, out_dir
        ):
            outputs[name] = figure_path

    manifest_path = out_dir / "manifest.json"
    manifest = emit_manifest(config, outputs, manifest_path)
    return ResultTable(columns, rows, out_dir, manifest)


def replay_manifest(manifest_path, output=None, workers=None):
    """Re-run the config embedded in a manifest and verify every checksum.

    Returns ``(ok, mismatches)`` where mismatches lists output names whose
    bytes differ from the recorded run.
    """
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    recorded = manifest["config"]
    config = ScenarioConfig.from_dict(
        {
            "scenario": recorded["scenario"],
            "seed": recorded["seed"],
            "trials": recorded["trials"],
            "parameters": recorded["parameters"],
            "output": output if output is not None else str(Path(manifest_path).parent),
            "workers": workers if workers is not None else 1,
        }
    )
    table = run_scenario(config)
    mismatches = []
    for name, digest in manifest["outputs"].items():
        replayed = table.manifest["outputs"].get(name)
        if replayed != digest:
            mismatches.append(name)
    extra = set(table.manifest["outputs"]) - set(manifest["outputs"])
    mismatches.extend(sorted(extra))
    return not mismatches, mismatches
