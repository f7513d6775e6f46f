"""Power allocation, rate computation, and measurement post-processing.

Rates are in bits (per channel use, per Hz); noise power is normalized to
one, so the linear SNR ``rho`` multiplies the channel eigenvalues and any
large-scale fading folds into per-user ``rho`` values.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficientError
from .rng import stream

ALLOCATIONS = ("waterfilling", "equal")
STREAM_MODES = ("per_antenna", "per_user")


@dataclass(frozen=True)
class PowerAllocation:
    """Water-filling solution over parallel eigenchannels."""

    powers: np.ndarray = field(repr=False)
    water_level: float
    rate_bits: float


def water_filling(gains, p_total):
    """Exact water-filling power allocation over positive channel gains.

    Finds the largest active set such that the common water level
    ``mu = (P + sum 1/g_i) / k`` exceeds every active ``1/g_i``, then
    assigns ``p_i = mu - 1/g_i``.  Satisfies the KKT conditions to
    machine precision; all-zero gains get a zero allocation.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 1 or gains.size == 0:
        raise ValueError("gains must be a nonempty 1-D sequence")
    if np.any(gains < 0):
        raise ValueError("gains must be nonnegative")
    if p_total < 0:
        raise ValueError("total power must be nonnegative")
    powers = np.zeros_like(gains)
    positive = np.flatnonzero(gains > 0)
    if positive.size == 0 or p_total == 0:
        level = 0.0 if positive.size == 0 else 1.0 / gains[positive].max()
        return PowerAllocation(powers, level, 0.0)
    order = positive[np.argsort(-gains[positive])]
    inv = 1.0 / gains[order]
    cumulative = np.cumsum(inv)
    k_range = np.arange(1, order.size + 1)
    levels = (p_total + cumulative) / k_range
    active = np.flatnonzero(levels > inv)  # candidate active-set sizes - 1
    k = active[-1] + 1
    level = levels[k - 1]
    powers[order[:k]] = level - inv[:k]
    rate = float(np.sum(np.log2(gains[order[:k]] * level)))
    return PowerAllocation(powers, float(level), rate)


def _check_covariance(r_xx, p_total=None):
    r_xx = np.atleast_2d(np.asarray(r_xx, dtype=complex))
    scale = max(1.0, float(np.abs(r_xx).max()))
    if np.abs(r_xx - r_xx.conj().T).max() > 1e-9 * scale:
        raise ValueError("covariance is not Hermitian")
    eigs = np.linalg.eigvalsh((r_xx + r_xx.conj().T) / 2.0)
    if eigs.min() < -1e-9 * scale:
        raise ValueError("covariance is not positive semidefinite")
    if p_total is not None and np.real(np.trace(r_xx)) > p_total + 1e-9:
        raise ValueError(f"covariance trace exceeds the power budget {p_total}")
    return r_xx


def capacity(h, r_xx, rho, p_total=None):
    """Single-realization rate ``log2 det(I + rho H R_xx H^H)`` in bits."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    r_xx = _check_covariance(r_xx, p_total)
    m = np.eye(h.shape[0]) + rho * h @ r_xx @ h.conj().T
    _, logdet = np.linalg.slogdet(m)
    return float(logdet / np.log(2.0))


def waterfilled_covariance(h, rho, p_total):
    """Capacity-achieving transmit covariance via SVD precoding."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    _, svals, vh = np.linalg.svd(h, full_matrices=False)
    allocation = water_filling(rho * svals**2, p_total)
    return (vh.conj().T * allocation.powers) @ vh


def gain_rate(gains, p_total, allocation, n_transmit=None):
    """Rate over parallel eigenchannel gains under a power strategy.

    ``waterfilling`` optimizes the split; ``equal`` spreads the power
    uniformly over ``n_transmit`` antennas (isotropic input).
    """
    gains = np.asarray(gains, dtype=float)
    if allocation == "waterfilling":
        return water_filling(gains, p_total).rate_bits
    if allocation == "equal":
        if n_transmit is None:
            raise ValueError("equal allocation needs n_transmit")
        return float(np.sum(np.log2(1.0 + gains * (p_total / n_transmit))))
    raise ValueError(f"unknown allocation {allocation!r}")


@dataclass(frozen=True)
class ErgodicCapacity:
    mean_bits: float
    ci95_bits: float
    trials: int


def ergodic_capacity(
    sample_channel,
    trials,
    seed,
    allocation="waterfilling",
    rho=1.0,
    p_total=10.0,
    workers=1,
    n_transmit=None,
):
    """Monte-Carlo mean rate over independent channel draws.

    ``sample_channel(rng)`` returns one channel matrix (possibly a
    compressed core with the same singular values).  Each trial draws
    from its own ``stream(seed, trial)``, and results are accumulated in
    trial order, so the outcome is bit-identical for any ``workers``
    count or scheduling.  ``n_transmit`` must be given for ``equal``
    allocation when the sampled matrices are compressed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if allocation not in ALLOCATIONS:
        raise ValueError(f"unknown allocation {allocation!r}")
    rates = np.empty(trials)

    def one_trial(t):
        h = sample_channel(stream(seed, t))
        svals = np.linalg.svd(np.atleast_2d(h), compute_uv=False)
        nt = n_transmit if n_transmit is not None else np.atleast_2d(h).shape[1]
        rates[t] = gain_rate(rho * svals**2, p_total, allocation, nt)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one_trial, range(trials)))
    else:
        for t in range(trials):
            one_trial(t)
    mean = float(rates.mean())
    if trials > 1:
        ci = float(1.96 * rates.std(ddof=1) / np.sqrt(trials))
    else:
        ci = 0.0
    return ErgodicCapacity(mean, ci, trials)


def eigen_spectrum(h):
    """Descending eigenvalues of ``H H^H``, zero-padded to the row count."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    svals = np.linalg.svd(h, compute_uv=False)
    values = np.zeros(h.shape[0])
    values[: svals.size] = np.sort(svals**2)[::-1][: h.shape[0]]
    return values


def _stream_rows(user_channels, streams):
    """Flatten user channels into single-stream rows plus owner indices."""
    if streams not in STREAM_MODES:
        raise ValueError(f"unknown stream mode {streams!r}")
    rows = []
    owners = []
    for k, h in enumerate(user_channels):
        h = np.atleast_2d(np.asarray(h, dtype=complex))
        if streams == "per_antenna" or h.shape[0] == 1:
            for row in h:
                rows.append(row)
                owners.append(k)
        else:
            u, _, _ = np.linalg.svd(h, full_matrices=False)
            rows.append(u[:, 0].conj() @ h)
            owners.append(k)
    return np.array(rows), np.array(owners)


def _per_user_rho(rho_per_user, n_users):
    if rho_per_user is None:
        return np.ones(n_users)
    rho = np.asarray(rho_per_user, dtype=float)
    if rho.shape != (n_users,):
        raise ValueError("rho_per_user must have one entry per user")
    return rho


def zf_sum_rate(user_channels, p_total, rho_per_user=None, streams="per_antenna"):
    """Zero-forcing downlink sum rate with equal per-stream power.

    Streams are the rows of the stacked user channels (or one dominant-
    eigenmode stream per user).  The precoder is the pseudo-inverse of
    the stack with unit-normalized columns, which nulls inter-stream
    interference exactly; a rank-deficient stack raises.
    """
    rho = _per_user_rho(rho_per_user, len(user_channels))
    a, owners = _stream_rows(user_channels, streams)
    n_streams = a.shape[0]
    if n_streams > a.shape[1]:
        raise RankDeficientError(
            f"{n_streams} streams cannot be zero-forced by {a.shape[1]} antennas"
        )
    svals = np.linalg.svd(a, compute_uv=False)
    if svals[-1] <= 1e-10 * svals[0]:
        raise RankDeficientError("stacked stream channel is rank deficient")
    w = np.linalg.pinv(a)
    col_power = np.sum(np.abs(w) ** 2, axis=0)
    p_stream = p_total / n_streams
    sinr = rho[owners] * p_stream / col_power
    return float(np.sum(np.log2(1.0 + sinr)))


def mrt_sum_rate(user_channels, p_total, rho_per_user=None, streams="per_antenna"):
    """Maximum-ratio-transmission sum rate with equal per-stream power.

    Precoder columns are matched to the stream rows; the SINR of each
    stream counts the leakage of every other stream's beam.
    """
    rho = _per_user_rho(rho_per_user, len(user_channels))
    a, owners = _stream_rows(user_channels, streams)
    n_streams = a.shape[0]
    w = a.conj().T / np.linalg.norm(a, axis=1)[None, :]
    coupling = np.abs(a @ w) ** 2
    p_stream = p_total / n_streams
    signal = rho[owners] * p_stream * np.diag(coupling)
    interference = rho[owners] * p_stream * (coupling.sum(axis=1) - np.diag(coupling))
    sinr = signal / (1.0 + interference)
    return float(np.sum(np.log2(1.0 + sinr)))


@dataclass(frozen=True)
class IwfResult:
    """Outcome of sum-power iterative water-filling."""

    sum_rate_bits: float
    trace: np.ndarray = field(repr=False)
    converged: bool
    covariances: list = field(repr=False, default_factory=list)


def _iwf_objective(g_list, q_list):
    n_s = g_list[0].shape[1]
    total = np.eye(n_s, dtype=complex)
    for g, q in zip(g_list, q_list):
        total = total + g.conj().T @ q @ g
    _, logdet = np.linalg.slogdet(total)
    return float(logdet / np.log(2.0))


def iterative_water_filling(
    user_channels, p_total, rho_per_user=None, tolerance=1e-9, max_iters=100
):
    """Sum-rate maximization under one total power budget across users.

    Each sweep water-fills every user's covariance against the
    interference-plus-noise of the others' current covariances, using a
    single global water level so the summed traces meet ``p_total``;
    updates are damped by ``1/K`` after the first sweep, with a
    backtracking safeguard, so the recorded per-sweep rate trace is
    non-decreasing.  Stops when the sweep-to-sweep change drops below
    ``tolerance``; hitting ``max_iters`` returns the best sweep with
    ``converged=False``.
    """
    n_users = len(user_channels)
    if n_users < 1:
        raise ValueError("need at least one user")
    rho = _per_user_rho(rho_per_user, n_users)
    g_list = [
        np.sqrt(r) * np.atleast_2d(np.asarray(h, dtype=complex))
        for r, h in zip(rho, user_channels)
    ]
    n_s = g_list[0].shape[1]
    if any(g.shape[1] != n_s for g in g_list):
        raise ValueError("user channels must share the transmit dimension")
    q_list = [np.zeros((g.shape[0], g.shape[0]), dtype=complex) for g in g_list]
    f_prev = 0.0
    best_f = 0.0
    best_q = [q.copy() for q in q_list]
    trace = []
    converged = False
    eye_s = np.eye(n_s, dtype=complex)
    for sweep in range(max_iters):
        total = eye_s.copy()
        for g, q in zip(g_list, q_list):
            total = total + g.conj().T @ q @ g
        gains = []
        bases = []
        for g, q in zip(g_list, q_list):
            z = total - g.conj().T @ q @ g
            m = g @ np.linalg.solve(z, g.conj().T)
            w, v = np.linalg.eigh((m + m.conj().T) / 2.0)
            gains.append(np.clip(w, 0.0, None))
            bases.append(v)
        flat = np.concatenate(gains)
        allocation = water_filling(flat, p_total)
        filled = []
        offset = 0
        for g, v, w in zip(g_list, bases, gains):
            p = allocation.powers[offset : offset + w.size]
            offset += w.size
            filled.append((v * p) @ v.conj().T)
        weight = 1.0 if (sweep == 0 or n_users == 1) else 1.0 / n_users
        slack = 1e-12 * max(1.0, abs(f_prev))
        f_new = None
        for _ in range(60):
            candidate = [
                (1.0 - weight) * q + weight * s for q, s in zip(q_list, filled)
            ]
            f_new = _iwf_objective(g_list, candidate)
            if f_new >= f_prev - slack:
                break
            weight /= 2.0
        q_list = candidate
        f_new = max(f_new, f_prev)  # guard fp wobble below slack
        trace.append(f_new)
        if f_new > best_f:
            best_f = f_new
            best_q = [q.copy() for q in q_list]
        if sweep > 0 and abs(f_new - f_prev) < tolerance:
            converged = True
            f_prev = f_new
            break
        f_prev = f_new
    return IwfResult(best_f, np.array(trace), converged, best_q)


def compensate_efficiency(h, chi_r, chi_s):
    """Scale a measured channel by ``sqrt(chi_R chi_S)``."""
    for name, chi in (("chi_r", chi_r), ("chi_s", chi_s)):
        if not 0.0 <= chi <= 1.0:
            raise ValueError(f"{name}={chi} outside [0, 1]")
    h = np.asarray(getattr(h, "matrix", h))
    return np.sqrt(chi_r * chi_s) * h


def resample_receive_array(h, full_grid, target_spacing):
    """Keep the rows of a dense measurement grid at a coarser spacing.

    ``full_grid = (count_x, count_y, spacing)`` describes the measured
    receive grid (row-major, x fastest); rows whose grid coordinates are
    multiples of ``target_spacing / spacing`` in both axes are retained
    in their original order.  The stride must be an integer and divide
    both counts.
    """
    h = np.atleast_2d(np.asarray(getattr(h, "matrix", h)))
    count_x, count_y, spacing = full_grid
    if h.shape[0] != count_x * count_y:
        raise ValueError(f"matrix has {h.shape[0]} rows, grid has {count_x * count_y}")
    ratio = target_spacing / spacing
    stride = round(ratio)
    if stride < 1 or abs(ratio - stride) > 1e-9:
        raise ValueError(
            f"target spacing {target_spacing} is not an integer multiple of {spacing}"
        )
    if count_x % stride or count_y % stride:
        raise ValueError(f"grid {count_x}x{count_y} not divisible by stride {stride}")
    q = np.arange(h.shape[0])
    keep = ((q % count_x) % stride == 0) & ((q // count_x) % stride == 0)
    return h[keep, :]


@dataclass(frozen=True)
class MultiUserScenario:
    """Downlink drop: one base station, K placed users, large-scale fading."""

    bs_geometry: object
    user_geometries: list
    user_placements: list  # (range_m, azimuth_rad) pairs
    pathloss_exponent: float = 2.0
    reference_range_m: float = 50.0
    reference_snr_db: float = 0.0
    total_power_w: float = 10.0

    def __post_init__(self):
        if len(self.user_geometries) < 1:
            raise ValueError("need at least one user")
        if len(self.user_placements) != len(self.user_geometries):
            raise ValueError("one placement per user geometry")
        if any(r <= 0 for r, _ in self.user_placements):
            raise ValueError("user ranges must be positive")

    def rho_per_user(self):
        """Linear per-user SNR from the range-normalized budget."""
        snr_db = np.array(
            [
                self.reference_snr_db
                - 10.0 * self.pathloss_exponent * np.log10(r / self.reference_range_m)
                for r, _ in self.user_placements
            ]
        )
        return 10.0 ** (snr_db / 10.0)
