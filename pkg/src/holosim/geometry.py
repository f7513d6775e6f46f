"""Planar array geometry and wavenumber-domain sampling.

Arrays are regular grids in the xy plane, centered on the origin, with
all lengths expressed in wavelengths.  A plane wave towards polar angle
``theta`` (from broadside, i.e. +z) and azimuth ``phi`` has the unit
direction ``(sin(theta)cos(phi), sin(theta)sin(phi), cos(theta))``; the
propagating directions map to points of the closed unit disk in the
normalized ``(kx, ky)`` plane.  An aperture of size ``(Lx, Ly)`` resolves
that disk on the integer lattice with per-axis step ``1/Lx`` and ``1/Ly``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGeometryError, InvalidSampleError

# lattice-membership slack for samples exactly on the unit circle
_DISK_EPS = 1e-9


@dataclass(frozen=True)
class ArrayGeometry:
    """Regular planar array in the xy plane, centered on the origin.

    Lengths are in wavelengths unless ``unit`` says otherwise; all the
    bundled experiments work in wavelength units.
    """

    aperture_x: float
    aperture_y: float
    spacing_x: float
    spacing_y: float
    count_x: int
    count_y: int
    positions: np.ndarray = field(repr=False)
    unit: str = "wavelengths"

    @property
    def count(self):
        return self.count_x * self.count_y

    @classmethod
    def from_aperture(cls, aperture_x, aperture_y, spacing_x, spacing_y):
        """Build a grid with ``count = aperture / spacing`` elements per side.

        The aperture must be an integer multiple of the spacing (within
        1e-9); a 4-wavelength aperture at half-wavelength spacing gives
        an 8x8 array.
        """
        if spacing_x <= 0 or spacing_y <= 0:
            raise InvalidGeometryError("spacings must be positive")
        if aperture_x <= 0 or aperture_y <= 0:
            raise InvalidGeometryError("apertures must be positive")
        counts = []
        for aperture, spacing, axis in ((aperture_x, spacing_x, "x"), (aperture_y, spacing_y, "y")):
            n = round(aperture / spacing)
            if n < 1 or abs(aperture - n * spacing) > 1e-9:
                raise InvalidGeometryError(
                    f"aperture_{axis}={aperture} is not an integer multiple of spacing_{axis}={spacing}"
                )
            counts.append(n)
        return cls.from_counts(counts[0], counts[1], spacing_x, spacing_y)

    @classmethod
    def from_counts(cls, count_x, count_y, spacing_x, spacing_y):
        """Build a grid from element counts and spacings."""
        if count_x < 1 or count_y < 1:
            raise InvalidGeometryError("element counts must be >= 1")
        if spacing_x <= 0 or spacing_y <= 0:
            raise InvalidGeometryError("spacings must be positive")
        geometry = cls(
            aperture_x=count_x * spacing_x,
            aperture_y=count_y * spacing_y,
            spacing_x=spacing_x,
            spacing_y=spacing_y,
            count_x=int(count_x),
            count_y=int(count_y),
            positions=np.empty((0, 3)),
        )
        object.__setattr__(geometry, "positions", element_positions(geometry))
        return geometry


def element_positions(geometry):
    """Centered grid positions, row-major with the x index running fastest.

    Element ``p`` (0-based) sits at
    ``((p % Nx - (Nx-1)/2) * dx, (p // Nx - (Ny-1)/2) * dy, 0)``,
    so the grid is symmetric about the origin and an ``N``-per-side array
    spans ``(N-1) * d`` per side.

    Returns
    -------
    ndarray, shape (Nx*Ny, 3)
    """
    nx, ny = geometry.count_x, geometry.count_y
    if nx < 1 or ny < 1:
        raise InvalidGeometryError("element counts must be >= 1")
    if geometry.spacing_x <= 0 or geometry.spacing_y <= 0:
        raise InvalidGeometryError("spacings must be positive")
    p = np.arange(nx * ny)
    x = (p % nx - (nx - 1) / 2.0) * geometry.spacing_x
    y = (p // nx - (ny - 1) / 2.0) * geometry.spacing_y
    return np.column_stack([x, y, np.zeros_like(x)])


def direction(theta, phi):
    """Unit propagation direction for polar angle ``theta``, azimuth ``phi``."""
    st = np.sin(theta)
    return np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def steering_vector(geometry, theta, phi):
    """Unit-norm steering vector ``exp(-j k . r_n) / sqrt(N)``.

    ``theta`` is measured from broadside (+z); positions live in the
    z = 0 plane so the broadside vector is constant ``1/sqrt(N)``.
    """
    n = geometry.count
    phase = -2.0 * np.pi * (geometry.positions @ direction(theta, phi))
    return np.exp(1j * phase) / np.sqrt(n)


@dataclass(frozen=True)
class WavenumberSampleSet:
    """Propagating lattice samples of an aperture, with solid-angle weights.

    ``indices`` holds integer pairs ``(mx, my)`` whose lattice points
    ``(mx/Lx, my/Ly)`` lie in the closed unit disk; ``block_weights`` is
    the solid angle of the disk region owned by each sample.  The weights
    partition the hemisphere: they always sum to 2*pi.
    """

    aperture_x: float
    aperture_y: float
    indices: np.ndarray = field(repr=False)
    block_weights: np.ndarray = field(repr=False)

    def __len__(self):
        return self.indices.shape[0]

    def lattice_points(self):
        """Normalized in-disk sample coordinates ``(mx/Lx, my/Ly)``."""
        return self.indices / np.array([self.aperture_x, self.aperture_y])


def propagating_sample_set(aperture_x, aperture_y):
    """Enumerate propagating wavenumber samples of an ``(Lx, Ly)`` aperture.

    A lattice index ``(mx, my)`` is propagating when
    ``(mx/Lx)^2 + (my/Ly)^2 <= 1`` (grazing samples on the unit circle
    included).  Block weights are filled with
    :func:`holosim.spectrum.block_solid_angle`.
    """
    from .spectrum import block_solid_angle

    if aperture_x <= 0 or aperture_y <= 0:
        raise InvalidGeometryError("apertures must be positive")
    mx_max = int(np.floor(aperture_x * (1.0 + _DISK_EPS)))
    my_max = int(np.floor(aperture_y * (1.0 + _DISK_EPS)))
    indices = []
    for mx in range(-mx_max, mx_max + 1):
        for my in range(-my_max, my_max + 1):
            r2 = (mx / aperture_x) ** 2 + (my / aperture_y) ** 2
            if r2 <= 1.0 + _DISK_EPS:
                indices.append((mx, my))
    indices = np.array(sorted(indices), dtype=int).reshape(-1, 2)
    weights = np.array(
        [block_solid_angle((mx, my), aperture_x, aperture_y) for mx, my in indices]
    )
    return WavenumberSampleSet(aperture_x, aperture_y, indices, weights)


def sample_angles(sample_set):
    """Polar/azimuth angle pairs of each sample in a set.

    ``theta = asin(|k_xy|)``, ``phi = atan2(ky, kx)`` with the in-plane
    wavenumber normalized to the unit disk.
    """
    pts = sample_set.lattice_points()
    rho = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(rho > 1.0 + _DISK_EPS):
        raise InvalidSampleError("sample set contains evanescent (out-of-disk) indices")
    theta = np.arcsin(np.clip(rho, 0.0, 1.0))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    return theta, phi


def sample_directions(sample_set):
    """Unit direction vectors (n, 3) for each sample in a set."""
    pts = sample_set.lattice_points()
    rho2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    if np.any(rho2 > (1.0 + _DISK_EPS) ** 2):
        raise InvalidSampleError("sample set contains evanescent (out-of-disk) indices")
    kz = np.sqrt(np.clip(1.0 - rho2, 0.0, None))
    return np.column_stack([pts[:, 0], pts[:, 1], kz])


def steering_matrix(geometry, sample_set):
    """Unnormalized steering matrix, one unit-modulus column per sample.

    Column ``l`` holds ``exp(-j k_l . r_q)`` over elements ``q``; the
    ``1/sqrt(N)`` of the steering vector is deliberately left out, so all
    channel-gain bookkeeping lives in the angular variances.
    """
    dirs = sample_directions(sample_set)
    phase = -2.0 * np.pi * (geometry.positions @ dirs.T)
    return np.exp(1j * phase)
