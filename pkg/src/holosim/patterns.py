"""Element directivity patterns and polarization-leakage draws.

Patterns map an angle pair to the two field components ``(d_theta, d_phi)``
of the embedded element directivity, normalized so the power pattern
averages to 1 over the full sphere.  Analytic isotropic and half-wave
dipole patterns are provided; measured/simulated embedded patterns load
from CSV files together with their per-element efficiencies.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import PatternRangeError, SchemaError
from .geometry import direction, sample_angles

PATTERN_FILE_HEADER = ["element", "theta_deg", "phi_deg", "dtheta_re", "dtheta_im", "dphi_re", "dphi_im"]


@dataclass(frozen=True)
class PolarizedPattern:
    """Directivity pattern with theta/phi field components.

    ``evaluator(theta, phi)`` takes broadcastable angle arrays in radians
    and returns the pair of component arrays.
    """

    evaluator: object = field(repr=False)
    label: str = "pattern"

    def evaluate(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        return self.evaluator(theta, phi)

    def normalization_integral(self, n_polar=96, n_azimuth=192):
        """Average of ``|d_theta|^2 + |d_phi|^2`` over the full sphere.

        Directivity patterns integrate to 1.  Gauss-Legendre in cos(theta)
        and a periodic rule in phi.
        """
        u, w = np.polynomial.legendre.leggauss(n_polar)
        theta = np.arccos(u)
        phi = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        d_theta, d_phi = self.evaluate(tt, pp)
        power = np.abs(d_theta) ** 2 + np.abs(d_phi) ** 2
        return float((power.mean(axis=1) * w).sum() / 2.0)


def isotropic_pattern(polarization="theta"):
    """Constant pattern: pure theta, pure phi, or an equal-split scalar stand-in."""
    components = {
        "theta": (1.0, 0.0),
        "phi": (0.0, 1.0),
        "scalar": (1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)),
    }
    if polarization not in components:
        raise ValueError(f"unknown polarization {polarization!r}")
    ct, cp = components[polarization]

    def evaluator(theta, phi):
        shape = np.broadcast(theta, phi).shape
        return np.full(shape, ct, dtype=complex), np.full(shape, cp, dtype=complex)

    return PolarizedPattern(evaluator, label=f"isotropic-{polarization}")


def _halfwave_directivity():
    # peak directivity of the ideal half-wave dipole, 4*pi / radiated integral
    total = 2.0 * np.pi * quad(
        lambda a: np.cos(np.pi / 2.0 * np.cos(a)) ** 2 / np.sin(a), 0.0, np.pi
    )[0]
    return 4.0 * np.pi / total


_HALFWAVE_PEAK = np.sqrt(_halfwave_directivity())


def dipole_pattern(axis=(0.0, 1.0, 0.0)):
    """Ideal half-wave dipole pattern about an arbitrary axis.

    Field amplitude ``cos((pi/2) cos(alpha)) / sin(alpha)`` with ``alpha``
    the angle from the dipole axis, scaled to the exact peak directivity
    (2.15 dBi) and decomposed onto the array frame's theta/phi unit
    vectors.  Evaluation on the axis returns 0 (pattern null).
    """
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if not np.isclose(norm, 1.0, atol=1e-9):
        raise ValueError("dipole axis must be a unit vector")
    axis = axis / norm

    def evaluator(theta, phi):
        theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
        st, ct = np.sin(theta), np.cos(theta)
        sp, cp = np.sin(phi), np.cos(phi)
        r_hat = np.stack([st * cp, st * sp, ct], axis=-1)
        cos_a = np.clip(r_hat @ axis, -1.0, 1.0)
        sin_a = np.sqrt(np.clip(1.0 - cos_a**2, 0.0, None))
        ok = sin_a > 1e-12
        amp = np.zeros_like(sin_a)
        np.divide(
            np.cos(np.pi / 2.0 * cos_a), sin_a, out=amp, where=ok
        )
        amp = amp * _HALFWAVE_PEAK
        # field polarization: unit vector in the (axis, r_hat) plane, normal to r_hat
        e_vec = cos_a[..., None] * r_hat - axis
        with np.errstate(invalid="ignore"):
            e_vec = np.where(ok[..., None], e_vec / np.where(ok, sin_a, 1.0)[..., None], 0.0)
        theta_hat = np.stack([ct * cp, ct * sp, -st], axis=-1)
        phi_hat = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
        d_theta = amp * np.sum(e_vec * theta_hat, axis=-1)
        d_phi = amp * np.sum(e_vec * phi_hat, axis=-1)
        return d_theta.astype(complex), d_phi.astype(complex)

    return PolarizedPattern(evaluator, label="halfwave-dipole")


class _GridPattern:
    """Bilinear interpolation of a pattern sampled on a regular angle grid."""

    def __init__(self, theta_rad, phi_rad, d_theta, d_phi):
        self.theta = theta_rad
        self.phi = phi_rad
        self.d_theta = d_theta
        self.d_phi = d_phi
        # a grid covering the full circle makes azimuth periodic
        self.phi_periodic = phi_rad[-1] - phi_rad[0] >= 2.0 * np.pi - 1e-6

    def _locate(self, grid, values, name):
        lo, hi = grid[0], grid[-1]
        if np.any(values < lo - 1e-9) or np.any(values > hi + 1e-9):
            raise PatternRangeError(
                f"{name} angle outside sampled grid [{lo}, {hi}] rad"
            )
        values = np.clip(values, lo, hi)
        idx = np.clip(np.searchsorted(grid, values, side="right") - 1, 0, grid.size - 2)
        frac = (values - grid[idx]) / (grid[idx + 1] - grid[idx])
        return idx, frac

    def __call__(self, theta, phi):
        theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
        if self.phi_periodic:
            phi = self.phi[0] + np.mod(phi - self.phi[0], 2.0 * np.pi)
        it, ft = self._locate(self.theta, theta, "polar")
        ip, fp = self._locate(self.phi, phi, "azimuth")
        out = []
        for table in (self.d_theta, self.d_phi):
            v00 = table[it, ip]
            v01 = table[it, ip + 1]
            v10 = table[it + 1, ip]
            v11 = table[it + 1, ip + 1]
            out.append(
                v00 * (1 - ft) * (1 - fp)
                + v01 * (1 - ft) * fp
                + v10 * ft * (1 - fp)
                + v11 * ft * fp
            )
        return out[0], out[1]


def load_pattern_file(path):
    """Load per-element sampled patterns and efficiencies from CSV.

    The file carries a header row, one data row per
    ``(element, theta_deg, phi_deg)`` grid point, and one sidecar row
    ``efficiency,<element>,<chi>`` per element.  Angles must form a
    complete regular grid per element.

    Returns
    -------
    (patterns, profile) : list of PolarizedPattern, EfficiencyProfile
        Ordered by ascending element id.
    """
    from .efficiency import EfficiencyProfile

    samples = {}
    efficiencies = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PATTERN_FILE_HEADER:
            raise SchemaError(
                "expected header " + ",".join(PATTERN_FILE_HEADER), line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].strip() == "efficiency":
                if len(row) != 3:
                    raise SchemaError("efficiency rows need 3 fields", line=lineno)
                try:
                    element, chi = int(row[1]), float(row[2])
                except ValueError as exc:
                    raise SchemaError(str(exc), line=lineno) from exc
                if not 0.0 <= chi <= 1.0:
                    raise SchemaError(f"efficiency {chi} outside [0, 1]", line=lineno)
                efficiencies[element] = chi
                continue
            if len(row) != 7:
                raise SchemaError(f"expected 7 fields, got {len(row)}", line=lineno)
            try:
                element = int(row[0])
                theta_deg, phi_deg = float(row[1]), float(row[2])
                d_theta = complex(float(row[3]), float(row[4]))
                d_phi = complex(float(row[5]), float(row[6]))
            except ValueError as exc:
                raise SchemaError(str(exc), line=lineno) from exc
            key = (round(theta_deg, 9), round(phi_deg, 9))
            samples.setdefault(element, {})
            if key in samples[element]:
                raise SchemaError(
                    f"duplicate grid point {key} for element {element}", line=lineno
                )
            samples[element][key] = (d_theta, d_phi)

    if not samples:
        raise SchemaError("file contains no pattern rows")
    patterns = []
    chis = []
    for element in sorted(samples):
        if element not in efficiencies:
            raise SchemaError(f"missing efficiency row for element {element}")
        grid = samples[element]
        thetas = np.array(sorted({t for t, _ in grid}))
        phis = np.array(sorted({p for _, p in grid}))
        if thetas.size < 2 or phis.size < 2:
            raise SchemaError(f"element {element}: grid needs at least 2x2 points")
        if len(grid) != thetas.size * phis.size:
            raise SchemaError(
                f"element {element}: incomplete grid "
                f"({len(grid)} points, expected {thetas.size * phis.size})"
            )
        d_theta = np.empty((thetas.size, phis.size), dtype=complex)
        d_phi = np.empty_like(d_theta)
        t_index = {t: i for i, t in enumerate(thetas)}
        p_index = {p: i for i, p in enumerate(phis)}
        for (t, p), (dt, dp) in grid.items():
            d_theta[t_index[t], p_index[p]] = dt
            d_phi[t_index[t], p_index[p]] = dp
        evaluator = _GridPattern(np.radians(thetas), np.radians(phis), d_theta, d_phi)
        patterns.append(PolarizedPattern(evaluator, label=f"file-element-{element}"))
        chis.append(efficiencies[element])
    return patterns, EfficiencyProfile(np.array(chis), source="simulated")


def write_pattern_file(path, patterns, efficiencies, theta_deg, phi_deg):
    """Sample patterns on a degree grid and write the CSV schema above."""
    theta_deg = np.asarray(theta_deg, dtype=float)
    phi_deg = np.asarray(phi_deg, dtype=float)
    tt, pp = np.meshgrid(np.radians(theta_deg), np.radians(phi_deg), indexing="ij")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PATTERN_FILE_HEADER)
        for element, (pattern, chi) in enumerate(zip(patterns, efficiencies), start=1):
            writer.writerow(["efficiency", element, f"{chi:.17g}"])
            d_theta, d_phi = pattern.evaluate(tt, pp)
            for i, t in enumerate(theta_deg):
                for j, p in enumerate(phi_deg):
                    writer.writerow(
                        [
                            element,
                            f"{t:.9g}",
                            f"{p:.9g}",
                            f"{d_theta[i, j].real:.17g}",
                            f"{d_theta[i, j].imag:.17g}",
                            f"{d_phi[i, j].real:.17g}",
                            f"{d_phi[i, j].imag:.17g}",
                        ]
                    )


def assemble_pattern_matrix(patterns, sample_set):
    """Pattern matrix: row per element, column pair per wavenumber sample.

    Row ``q`` holds ``(d_theta_q, d_phi_q)`` at the sample angles, so the
    result is ``N x 2n`` with theta components in even columns.
    """
    theta, phi = sample_angles(sample_set)
    n = len(sample_set)
    out = np.empty((len(patterns), 2 * n), dtype=complex)
    for q, pattern in enumerate(patterns):
        d_theta, d_phi = pattern.evaluate(theta, phi)
        out[q, 0::2] = d_theta
        out[q, 1::2] = d_phi
    return out


@dataclass(frozen=True)
class XprParameters:
    """Cross-polarization power-ratio model (log-normal kappa).

    ``kappa = 10**(X/10)`` with ``X ~ Normal(mu_xpr_db, sigma_xpr_db)``;
    a deterministic override fixes kappa for every propagation path.
    """

    mu_xpr_db: float = 8.0
    sigma_xpr_db: float = 3.0
    deterministic_kappa: float | None = None

    def __post_init__(self):
        if self.sigma_xpr_db < 0:
            raise ValueError("sigma_xpr_db must be nonnegative")
        if self.deterministic_kappa is not None and self.deterministic_kappa <= 0:
            raise ValueError("deterministic_kappa must be positive")


@dataclass(frozen=True)
class LeakageMatrix:
    """Polarization-leakage blocks of all propagation paths, as one matrix.

    ``matrix`` is ``2 n_R x 2 n_S``; the 2x2 block at ``(l, m)`` maps the
    source sample's (theta, phi) components onto the receive sample's.
    """

    matrix: np.ndarray = field(repr=False)

    @property
    def n_receive(self):
        return self.matrix.shape[0] // 2

    @property
    def n_source(self):
        return self.matrix.shape[1] // 2


def leakage_from_blocks(p11, p12, p21, p22):
    """Interleave per-path 2x2 block entries into the big leakage matrix."""
    n_r, n_s = p11.shape
    matrix = np.empty((2 * n_r, 2 * n_s), dtype=complex)
    matrix[0::2, 0::2] = p11
    matrix[0::2, 1::2] = p12
    matrix[1::2, 0::2] = p21
    matrix[1::2, 1::2] = p22
    return LeakageMatrix(matrix)


def draw_leakage(xpr, n_receive, n_source, rng):
    """Draw the polarization-leakage matrix for all sample pairs.

    Per path: kappa from the XPR model (or its deterministic override)
    and four independent uniform phases.  Each block row has unit power:
    ``|P11|^2 + |P12|^2 = 1`` exactly.
    """
    if n_receive < 1 or n_source < 1:
        raise ValueError("sample counts must be >= 1")
    shape = (n_receive, n_source)
    if xpr.deterministic_kappa is not None:
        kappa = np.full(shape, float(xpr.deterministic_kappa))
    else:
        x_db = rng.normal(xpr.mu_xpr_db, xpr.sigma_xpr_db, size=shape)
        kappa = 10.0 ** (x_db / 10.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=shape + (4,))
    co = 1.0 / np.sqrt(1.0 + 1.0 / kappa)
    cross = np.sqrt(1.0 / kappa) * co
    return leakage_from_blocks(
        co * np.exp(1j * phases[..., 0]),
        cross * np.exp(1j * phases[..., 1]),
        cross * np.exp(1j * phases[..., 2]),
        co * np.exp(1j * phases[..., 3]),
    )
