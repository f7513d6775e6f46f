"""Antenna-efficiency bounds, scattering utilities, and calibration.

Two physical mechanisms bound the total efficiency of an element inside
a dense array: ohmic (conductor) loss, captured by a skin-depth bound on
the radiation efficiency, and mismatch forced by mutual coupling, captured
by a visible-region bound on the transmission efficiency of an infinite
regular array.  The transmission bound is the area of the visible-region
ellipse (semi-axes ``2*pi*dx``, ``2*pi*dy`` in array-phase units) clipped
to the ``[-pi, pi]^2`` integration square, divided by ``4*pi^2``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPassiveError, SchemaError, SingularMatrixError

EFFICIENCY_SOURCES = ("bound-only", "simulated", "calibrated")

_PASSIVITY_TOL = 1e-9


@dataclass(frozen=True)
class EfficiencyProfile:
    """Per-element total efficiencies in [0, 1] plus their provenance."""

    per_element: np.ndarray = field(repr=False)
    source: str = "bound-only"

    def __post_init__(self):
        values = np.asarray(self.per_element, dtype=float)
        if values.ndim != 1:
            raise ValueError("per_element must be a 1-D sequence")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("efficiencies must lie in [0, 1]")
        if self.source not in EFFICIENCY_SOURCES:
            raise ValueError(f"unknown efficiency source {self.source!r}")
        object.__setattr__(self, "per_element", values)

    def __len__(self):
        return self.per_element.size


@dataclass(frozen=True)
class ScatteringGrid:
    """Scattering coefficients of one element of an infinite regular array.

    ``coefficients`` maps integer grid offsets ``(p, q)`` to the complex
    coupling ``S_pq`` into the element ``p`` columns and ``q`` rows away.
    A passive element satisfies ``sum |S_pq|^2 <= 1``.
    """

    coefficients: dict
    reference_impedance: float = 50.0

    def __post_init__(self):
        total = self.total_reflected_power()
        if total > 1.0 + _PASSIVITY_TOL:
            raise NonPassiveError(f"sum |S_pq|^2 = {total} exceeds 1")

    def total_reflected_power(self):
        return float(sum(abs(s) ** 2 for s in self.coefficients.values()))


def load_scattering_grid(path, reference_impedance=50.0):
    """Load a ScatteringGrid from CSV with columns ``p, q, re, im``."""
    coefficients = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:4]] != ["p", "q", "re", "im"]:
            raise SchemaError("expected header 'p,q,re,im'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise SchemaError(f"expected 4 fields, got {len(row)}", line=lineno)
            try:
                p, q = int(row[0]), int(row[1])
                value = complex(float(row[2]), float(row[3]))
            except ValueError as exc:
                raise SchemaError(str(exc), line=lineno) from exc
            if (p, q) in coefficients:
                raise SchemaError(f"duplicate offset ({p}, {q})", line=lineno)
            coefficients[(p, q)] = value
    return ScatteringGrid(coefficients, reference_impedance)


def radiation_efficiency_bound(surface_area, skin_depth, wavenumber):
    """Upper bound on radiation efficiency from conductor loss.

    ``(1 + (3*pi/2) * delta / (k * S))**-1`` for an antenna of (one-face)
    surface area ``S`` m^2, skin depth ``delta`` m, and free-space
    wavenumber ``k`` 1/m.  Lossless conductors (``delta -> 0``) give 1.
    """
    if surface_area <= 0 or skin_depth < 0 or wavenumber <= 0:
        raise ValueError("surface_area and wavenumber must be positive, skin_depth nonnegative")
    return 1.0 / (1.0 + 1.5 * np.pi * skin_depth / (wavenumber * surface_area))


def ellipse_rectangle_intersection_area(semi_axis_a, semi_axis_b, half_width, half_height):
    """Exact area of an origin-centered ellipse clipped by a centered rectangle.

    Rescaling ``x/a, y/b`` maps the ellipse to the unit circle and the
    rectangle to ``[-w/a, w/a] x [-h/b, h/b]``; the circle-rectangle area
    is closed form, and the result scales back by ``a*b``.
    """
    if min(semi_axis_a, semi_axis_b, half_width, half_height) <= 0:
        raise ValueError("all arguments must be positive")
    w = half_width / semi_axis_a
    h = half_height / semi_axis_b
    return semi_axis_a * semi_axis_b * 4.0 * _unit_circle_quarter_area(w, h)


def _circ_integral(t):
    # integral of sqrt(1-x^2) from 0 to t, t in [0, 1]
    t = min(t, 1.0)
    return 0.5 * (t * np.sqrt(1.0 - t * t) + np.arcsin(t))


def _unit_circle_quarter_area(w, h):
    """Area of the unit circle's first quadrant clipped to [0,w] x [0,h]."""
    if w >= 1.0 and h >= 1.0:
        return np.pi / 4.0
    if h >= 1.0:
        return _circ_integral(w)
    x_c = np.sqrt(1.0 - h * h)  # rightmost x where the circle is above h
    if w <= x_c:
        return w * h
    return x_c * h + _circ_integral(min(w, 1.0)) - _circ_integral(x_c)


def transmission_efficiency_bound(spacing_x, spacing_y):
    """Upper bound on transmission efficiency of an infinite regular array.

    Spacings are in wavelengths.  The bound is the fraction of the
    ``[-pi, pi]^2`` phase square covered by the visible-region ellipse
    with semi-axes ``2*pi*dx`` and ``2*pi*dy``; it reaches exactly 1 for
    square grids with spacing >= 1/sqrt(2) wavelengths and is ``pi/4``
    at half-wavelength spacing.
    """
    if spacing_x <= 0 or spacing_y <= 0:
        raise ValueError("spacings must be positive")
    # square corners inside the ellipse: the whole square is visible
    if 1.0 / (2.0 * spacing_x) ** 2 + 1.0 / (2.0 * spacing_y) ** 2 <= 1.0:
        return 1.0
    area = ellipse_rectangle_intersection_area(
        2.0 * np.pi * spacing_x, 2.0 * np.pi * spacing_y, np.pi, np.pi
    )
    return min(1.0, area / (4.0 * np.pi**2))


def scattering_matrix_window(grid, counts=None):
    """Materialize a finite port scattering matrix from offset coefficients.

    The ports are the elements of an ``nx x ny`` array window (row-major,
    x fastest) and ``S[u, v] = S_(pv-pu, qv-qu)``.  By default the window
    is the bounding box of the grid support, so a grid with only the
    ``(0, 0)`` coefficient gives a 1-port matrix.
    """
    offsets = list(grid.coefficients)
    if counts is None:
        if not offsets:
            return np.zeros((1, 1), dtype=complex)
        ps = [p for p, _ in offsets]
        qs = [q for _, q in offsets]
        counts = (max(ps) - min(ps) + 1, max(qs) - min(qs) + 1)
    nx, ny = counts
    ports = [(i, j) for j in range(ny) for i in range(nx)]
    s = np.zeros((len(ports), len(ports)), dtype=complex)
    for u, (iu, ju) in enumerate(ports):
        for v, (iv, jv) in enumerate(ports):
            s[u, v] = grid.coefficients.get((iv - iu, jv - ju), 0.0)
    return s


def z_from_s(scattering, reference_impedance=50.0):
    """Impedance matrix from a scattering matrix: ``Z = Z0 (I+S)(I-S)^-1``.

    Accepts a square complex matrix or a :class:`ScatteringGrid` (which
    is materialized with :func:`scattering_matrix_window` first).
    """
    if isinstance(scattering, ScatteringGrid):
        scattering = scattering_matrix_window(scattering)
    s = np.atleast_2d(np.asarray(scattering, dtype=complex))
    eye = np.eye(s.shape[0])
    try:
        inv = np.linalg.inv(eye - s)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("I - S is singular (total reflection)") from exc
    if not np.all(np.isfinite(inv)):
        raise SingularMatrixError("I - S is singular (total reflection)")
    return reference_impedance * (eye + s) @ inv


def s_from_z(impedance, reference_impedance=50.0):
    """Scattering matrix from an impedance matrix (inverse of z_from_s)."""
    z = np.atleast_2d(np.asarray(impedance, dtype=complex)) / reference_impedance
    eye = np.eye(z.shape[0])
    try:
        return (z - eye) @ np.linalg.inv(z + eye)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("Z + Z0 I is singular") from exc


def active_reflection_coefficient(grid, psi_x, psi_y):
    """Active reflection coefficient at array-phase pair ``(psi_x, psi_y)``.

    ``R = sum_pq S_pq exp(-j p psi_x - j q psi_y)``; broadcasting over
    array-valued phases is supported.
    """
    psi_x = np.asarray(psi_x, dtype=float)
    psi_y = np.asarray(psi_y, dtype=float)
    result = np.zeros(np.broadcast(psi_x, psi_y).shape, dtype=complex)
    for (p, q), s in grid.coefficients.items():
        result = result + s * np.exp(-1j * (p * psi_x + q * psi_y))
    return result if result.shape else complex(result)


def transmission_efficiency_from_scattering(grid):
    """Transmission efficiency ``1 - sum |S_pq|^2`` of a passive element."""
    total = grid.total_reflected_power()
    if total > 1.0 + _PASSIVITY_TOL:
        raise NonPassiveError(f"sum |S_pq|^2 = {total} exceeds 1")
    return float(np.clip(1.0 - total, 0.0, 1.0))


def calibrate_efficiencies(simulated, bound):
    """Clamp simulated per-element efficiencies from below by a theory bound.

    Central elements of a large array cannot beat the infinite-array
    bound, while simulated central-element values sit below it due to
    mismatch; edge elements may legitimately exceed it and keep their
    simulated value.  Per element: ``max(chi_sim, chi_bound)``.
    """
    if not 0.0 <= bound <= 1.0:
        raise ValueError("bound must lie in [0, 1]")
    calibrated = np.maximum(simulated.per_element, bound)
    return EfficiencyProfile(calibrated, source="calibrated")
