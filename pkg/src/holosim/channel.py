"""Channel-matrix synthesis for the three model variants.

``holo``  -- scalar wavenumber-domain model ``U_R H_a U_S^T`` with
unit-modulus steering factors (all gain bookkeeping lives in the angular
variances).

``mdf``   -- the same channel scaled by ``sqrt(chi_R chi_S)`` to impose
array-level antenna efficiencies on scalar isotropic elements.

``pol``   -- polarized electromagnetic model
``Gamma_R F_R [Omega o (H_a x 1_2x2)] F_S^T Gamma_S^T`` where the F
matrices interleave the theta/phi components of the embedded element
patterns.  The F matrices used here carry the per-element steering phase
on each column pair, which makes the polarized model collapse exactly to
the scalar one for co-polarized isotropic elements with no leakage.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .geometry import sample_angles, sample_directions, steering_matrix

CHANNEL_MODELS = ("holo", "mdf", "pol")


@dataclass(frozen=True)
class ChannelRealization:
    """One synthesized channel matrix plus provenance."""

    matrix: np.ndarray = field(repr=False)
    model: str = "holo"
    seed_lineage: tuple | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape


def _matrix_of(h_a):
    return np.asarray(getattr(h_a, "matrix", h_a))


def _lineage_of(h_a):
    return getattr(h_a, "seed_lineage", None)


def synthesize_holo(u_r, h_a, u_s, metadata=None):
    """Scalar holographic channel ``U_R H_a U_S^T`` (plain transpose)."""
    h_a_m = _matrix_of(h_a)
    u_r = np.asarray(u_r)
    u_s = np.asarray(u_s)
    if u_r.shape[1] != h_a_m.shape[0] or u_s.shape[1] != h_a_m.shape[1]:
        raise ValueError(
            f"non-conformable shapes {u_r.shape} x {h_a_m.shape} x {u_s.shape}^T"
        )
    matrix = u_r @ h_a_m @ u_s.T
    return ChannelRealization(matrix, "holo", _lineage_of(h_a), dict(metadata or {}))


def synthesize_mdf(chi_r, chi_s, u_r, h_a, u_s, metadata=None):
    """Efficiency-modified scalar channel ``sqrt(chi_R chi_S) U_R H_a U_S^T``."""
    for name, chi in (("chi_r", chi_r), ("chi_s", chi_s)):
        if not 0.0 <= chi <= 1.0:
            raise ValueError(f"{name}={chi} outside [0, 1]")
    base = synthesize_holo(u_r, h_a, u_s)
    meta = dict(metadata or {})
    meta.update(chi_r=chi_r, chi_s=chi_s)
    return ChannelRealization(
        np.sqrt(chi_r * chi_s) * base.matrix, "mdf", base.seed_lineage, meta
    )


def steered_pattern_matrix(geometry, patterns, sample_set):
    """Pattern matrix with per-element steering phases folded in.

    Each pattern column pair of :func:`assemble_pattern_matrix` is
    multiplied by the element's steering phase ``exp(-j k_l . r_q)``;
    feeding these to :func:`synthesize_pol` keeps the polarized model
    consistent with the scalar one.
    """
    from .patterns import assemble_pattern_matrix

    if len(patterns) != geometry.count:
        raise ValueError(
            f"{len(patterns)} patterns for a {geometry.count}-element array"
        )
    f = assemble_pattern_matrix(patterns, sample_set)
    u = steering_matrix(geometry, sample_set)
    return f * np.repeat(u, 2, axis=1)


def synthesize_pol(efficiency_r, f_r, omega, h_a, f_s, efficiency_s, metadata=None):
    """Polarized electromagnetic channel (matrix form).

    ``H = Gamma_R F_R [Omega o (H_a x 1_2x2)] F_S^T Gamma_S^T`` with
    ``Gamma = diag(sqrt(efficiency))``.  ``omega`` may be a
    LeakageMatrix or a bare ``2n_R x 2n_S`` array; the F matrices must be
    steered pattern matrices (see :func:`steered_pattern_matrix`).
    """
    h_a_m = _matrix_of(h_a)
    omega_m = _matrix_of(omega)
    f_r = np.asarray(f_r)
    f_s = np.asarray(f_s)
    eff_r = np.asarray(efficiency_r, dtype=float)
    eff_s = np.asarray(efficiency_s, dtype=float)
    n_r, n_s = h_a_m.shape
    if omega_m.shape != (2 * n_r, 2 * n_s):
        raise ValueError(f"leakage shape {omega_m.shape} does not match 2x{h_a_m.shape}")
    if f_r.shape[1] != 2 * n_r or f_s.shape[1] != 2 * n_s:
        raise ValueError("pattern matrices do not match the sample sets")
    if eff_r.shape != (f_r.shape[0],) or eff_s.shape != (f_s.shape[0],):
        raise ValueError("efficiency vectors must have one entry per element")
    if np.any(eff_r < 0) or np.any(eff_r > 1) or np.any(eff_s < 0) or np.any(eff_s > 1):
        raise ValueError("efficiencies must lie in [0, 1]")
    mixed = omega_m * np.kron(h_a_m, np.ones((2, 2)))
    matrix = (np.sqrt(eff_r)[:, None] * f_r) @ mixed @ (f_s.T * np.sqrt(eff_s)[None, :])
    return ChannelRealization(matrix, "pol", _lineage_of(h_a), dict(metadata or {}))


def entry_pol(
    q,
    p,
    receive_geometry,
    source_geometry,
    receive_set,
    source_set,
    receive_patterns,
    source_patterns,
    leakage,
    h_a,
    efficiency_r,
    efficiency_s,
):
    """Single polarized channel entry as an explicit double sum.

    Loops over every sample pair, multiplying pattern row vectors through
    the 2x2 leakage block; serves as an independent oracle for
    :func:`synthesize_pol` (which it must match to machine precision).
    Indices ``q, p`` are 0-based.
    """
    h_a_m = _matrix_of(h_a)
    omega_m = _matrix_of(leakage)
    theta_r, phi_r = sample_angles(receive_set)
    theta_s, phi_s = sample_angles(source_set)
    dirs_r = sample_directions(receive_set)
    dirs_s = sample_directions(source_set)
    r_q = receive_geometry.positions[q]
    s_p = source_geometry.positions[p]
    scale = np.sqrt(float(efficiency_r[q]) * float(efficiency_s[p]))
    total = 0.0 + 0.0j
    for l in range(len(receive_set)):
        d_r = np.array(receive_patterns[q].evaluate(theta_r[l], phi_r[l]))
        phase_r = np.exp(-1j * 2.0 * np.pi * (dirs_r[l] @ r_q))
        for m in range(len(source_set)):
            d_s = np.array(source_patterns[p].evaluate(theta_s[m], phi_s[m]))
            phase_s = np.exp(-1j * 2.0 * np.pi * (dirs_s[m] @ s_p))
            block = omega_m[2 * l : 2 * l + 2, 2 * m : 2 * m + 2]
            total += scale * phase_r * phase_s * (d_r @ (block * h_a_m[l, m]) @ d_s)
    return total


def save_channel_csv(path, realization_or_matrix):
    """Write a channel matrix in the shared CSV exchange format.

    Two header rows carry the dimensions, then one ``q,p,re,im`` row per
    entry (1-based indices, 17-significant-digit floats so the round
    trip is bit exact).
    """
    matrix = _matrix_of(realization_or_matrix)
    n_r, n_s = matrix.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"N_R,{n_r}\n")
        fh.write(f"N_S,{n_s}\n")
        fh.write("q,p,re,im\n")
        for q in range(n_r):
            for p in range(n_s):
                v = matrix[q, p]
                fh.write(f"{q + 1},{p + 1},{v.real:.17g},{v.imag:.17g}\n")


def load_channel_csv(path):
    """Read a channel matrix written by :func:`save_channel_csv`."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3:
        raise SchemaError("file too short for channel CSV")
    try:
        tag_r, n_r = lines[0].split(",")
        tag_s, n_s = lines[1].split(",")
        n_r, n_s = int(n_r), int(n_s)
    except ValueError as exc:
        raise SchemaError(f"bad dimension headers: {exc}", line=1) from exc
    if tag_r.strip() != "N_R" or tag_s.strip() != "N_S":
        raise SchemaError("expected N_R and N_S header rows", line=1)
    if lines[2].strip() != "q,p,re,im":
        raise SchemaError("expected column header 'q,p,re,im'", line=3)
    matrix = np.full((n_r, n_s), np.nan, dtype=complex)
    for lineno, line in enumerate(lines[3:], start=4):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise SchemaError(f"expected 4 fields, got {len(parts)}", line=lineno)
        try:
            q, p = int(parts[0]) - 1, int(parts[1]) - 1
            value = complex(float(parts[2]), float(parts[3]))
        except ValueError as exc:
            raise SchemaError(str(exc), line=lineno) from exc
        if not (0 <= q < n_r and 0 <= p < n_s):
            raise SchemaError(f"index ({q + 1}, {p + 1}) outside {n_r}x{n_s}", line=lineno)
        matrix[q, p] = value
    if np.isnan(matrix.real).any():
        raise SchemaError("channel CSV is missing entries")
    return matrix
