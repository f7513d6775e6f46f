"""Per-sample angular variances and random wavenumber-domain responses.

Each propagating lattice sample ``(mx, my)`` of an aperture owns a block
of the unit disk; the solid angle of that block (the integral of
``1/sqrt(1 - kx^2 - ky^2)`` over it) is the variance weight of the sample.
Blocks extend *away from the origin* along each axis:

- index 0 owns ``(-step, step)``,
- index m > 0 owns ``[m*step, (m+1)*step)``,
- index m < 0 owns ``((m-1)*step, m*step]``,

with ``step = 1/L``.  Anchored this way, every disk point is owned by an
in-disk lattice sample, so the weights of a propagating sample set always
tile the hemisphere: they sum to exactly ``2*pi`` for any aperture, and
rim samples with no interior (grazing, ``kz = 0``) get weight zero.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

NORMALIZATION_MODES = ("raw", "unit-average-gain")


def _axis_interval(m, step):
    if m == 0:
        return -step, step
    if m > 0:
        return m * step, (m + 1) * step
    return (m - 1) * step, m * step


def _quadrant_patch(a, b, c, d):
    """Solid angle of ``[a,b] x [c,d]`` (first quadrant) clipped to the disk."""
    b = min(b, 1.0)
    d = min(d, 1.0)
    if a >= b or c >= d:
        return 0.0
    if a * a + c * c >= 1.0:
        return 0.0
    x_hi = min(b, np.sqrt(1.0 - c * c))
    if x_hi <= a:
        return 0.0
    # Column at x spans y in [c, min(d, sqrt(1-x^2))]; the inner integral of
    # 1/sqrt(1-x^2-y^2) is asin(y/t) with t = sqrt(1-x^2).  The column top
    # switches from d to the disk edge at x_star.
    x_star = np.sqrt(max(0.0, 1.0 - d * d))
    x_star = min(max(x_star, a), x_hi)

    def full_column(x):
        t = np.sqrt(1.0 - x * x)
        return np.arcsin(min(1.0, d / t)) - np.arcsin(min(1.0, c / t))

    def clipped_column(x):
        t = np.sqrt(1.0 - x * x)
        return np.pi / 2.0 - np.arcsin(min(1.0, c / t))

    total = 0.0
    if x_star > a:
        total += quad(full_column, a, x_star, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    if x_hi > x_star:
        total += quad(clipped_column, x_star, x_hi, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    return total


def block_solid_angle(index, aperture_x, aperture_y):
    """Solid angle of the disk block owned by lattice sample ``index``.

    Equals ``integral of sin(theta) dtheta dphi`` over the block's angular
    region; a block wholly outside the disk (or touching it only on the
    rim) returns 0.  The sum over a propagating sample set is ``2*pi``.
    """
    mx, my = index
    x0, x1 = _axis_interval(int(mx), 1.0 / aperture_x)
    y0, y1 = _axis_interval(int(my), 1.0 / aperture_y)
    # split at the axes and fold each piece into the first quadrant
    total = 0.0
    for lo, hi in ((x0, min(x1, 0.0)), (max(x0, 0.0), x1)):
        if hi <= lo:
            continue
        a, b = sorted((abs(lo), abs(hi)))
        for lo2, hi2 in ((y0, min(y1, 0.0)), (max(y0, 0.0), y1)):
            if hi2 <= lo2:
                continue
            c, d = sorted((abs(lo2), abs(hi2)))
            total += _quadrant_patch(a, b, c, d)
    return total


@dataclass(frozen=True)
class AngularVarianceMap:
    """Variances of the wavenumber-domain coupling coefficients.

    ``variances[l, m]`` is the variance of the complex gain from source
    sample ``m`` to receive sample ``l``.  In ``raw`` mode it is the
    product of the two solid-angle weights (isotropic scattering), total
    ``(2*pi)**2``; ``unit-average-gain`` rescales the map to total 1 so
    an SNR applied to the synthesized channel is per-element-pair.
    """

    receive_weights: np.ndarray = field(repr=False)
    source_weights: np.ndarray = field(repr=False)
    variances: np.ndarray = field(repr=False)
    normalization: str = "raw"

    @property
    def shape(self):
        return self.variances.shape


def variance_map(receive_set, source_set, normalization="unit-average-gain"):
    """Outer-product variance map of two propagating sample sets."""
    if normalization not in NORMALIZATION_MODES:
        raise ValueError(f"unknown normalization {normalization!r}")
    w_r = np.asarray(receive_set.block_weights, dtype=float)
    w_s = np.asarray(source_set.block_weights, dtype=float)
    if w_r.size == 0 or w_s.size == 0:
        raise ValueError("sample sets must be nonempty")
    variances = np.outer(w_r, w_s)
    if normalization == "unit-average-gain":
        variances = variances / variances.sum()
    return AngularVarianceMap(w_r, w_s, variances, normalization)


@dataclass(frozen=True)
class AngularResponse:
    """One draw of the wavenumber-domain coupling matrix."""

    matrix: np.ndarray = field(repr=False)
    seed_lineage: tuple | None = None


def draw_angular_response(vmap, rng, lineage=None):
    """Draw independent circularly-symmetric Gaussian angular responses.

    Entry ``(l, m)`` is complex normal with variance ``variances[l, m]``
    (half in each of the real and imaginary parts).  Draws are a pure
    function of the generator state, so trials fed from per-trial streams
    are reproducible regardless of scheduling.
    """
    std = np.sqrt(vmap.variances / 2.0)
    shape = vmap.variances.shape
    matrix = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * std
    return AngularResponse(matrix, lineage)


def dump_variance_csv(vmap, path):
    """Write the variance matrix as CSV (row = receive, column = source)."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in vmap.variances:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
