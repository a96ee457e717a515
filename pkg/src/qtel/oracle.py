"""Independent ground-truth engines for cross-validation.

Two oracles check the transfer-operator machinery from the outside:

* exact enumeration sums the 2**n discrete level sequences of a single
  fluctuator with their exact probabilities, reproducing the discrete
  transfer operator without ever building it;
* a continuous-time Monte-Carlo sampler draws telegraph trajectories
  with exact exponential dwell times (no time-step bias) and averages
  the rotated Bloch vectors.

A spectrum estimator fits the sampled noise to its Lorentzian power
spectrum, pinning the normalization used by the perturbative rates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .model import FluctuatorSpec, SystemSpec, as_bloch_array, step_rotation

__all__ = [
    "SequenceEnsembleResult",
    "McEstimate",
    "SpectrumEstimate",
    "enumerate_sequences",
    "sample_trajectories",
    "sample_dwell_times",
    "empirical_spectrum",
]

# 2**20 sequences is the largest enumeration allowed.
MAX_ENUM_STEPS = 20

# Samples are simulated in fixed-size chunks with per-chunk child seeds,
# so results are bit-identical for any worker count.
CHUNK_SIZE = 8192


@dataclass(frozen=True)
class SequenceEnsembleResult:
    """Exact average over all discrete noise sequences."""

    t_matrix: np.ndarray
    n_steps: int
    dt: float
    total_probability: float


@dataclass(frozen=True)
class McEstimate:
    """Monte-Carlo mean Bloch vector with per-component standard errors."""

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_samples: int
    seed: int


@dataclass(frozen=True)
class SpectrumEstimate:
    """Periodogram estimate of the noise power spectrum with Lorentzian fit."""

    omega: np.ndarray
    values: np.ndarray
    s_zero: float
    hwhm: float


def _single_fluctuator(sys: SystemSpec) -> FluctuatorSpec:
    if sys.n_fluctuators != 1:
        raise ValueError("this oracle supports exactly one fluctuator")
    return sys.fluctuators[0]


def _switch_matrix(gamma: float, eta: float, dt: float) -> np.ndarray:
    """Conditional switching probabilities W[new, old], states ordered (+, -)."""
    p = gamma * dt
    d = eta * dt
    if p >= 1.0:
        raise ValueError("dt too large for telegraph limit")
    if p + abs(d) > 1.0:
        raise ValueError("switching probabilities exceed 1; reduce dt")
    return np.array([[1.0 - p - d, p - d], [p + d, 1.0 - p + d]])


def enumerate_sequences(sys: SystemSpec, dt: float, n_steps: int) -> SequenceEnsembleResult:
    """Average the n-interval evolution over all 2**n level sequences.

    The probability of a sequence (s_1 ... s_n) is the initial
    occupation of s_1 times the n - 1 interior switching probabilities;
    the switch after the last interval is summed out (its probabilities
    add to one), so it never appears.  The result equals the boundary
    contraction of the n-th power of the discrete transfer operator to
    machine precision; this identity is the central correctness check
    of the discrete formalism.
    """
    f = _single_fluctuator(sys)
    if not 1 <= n_steps <= MAX_ENUM_STEPS:
        raise ValueError(f"n_steps must be in [1, {MAX_ENUM_STEPS}]")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    w = _switch_matrix(f.gamma, f.eta, dt)
    dist = sys.distributions()[0]
    p_start = np.array([dist.p_plus, dist.p_minus])

    rot = np.stack([step_rotation(sys.b0, f.g, +1, dt), step_rotation(sys.b0, f.g, -1, dt)])

    n_seq = 2**n_steps
    # Level index of every sequence at every step: 0 for s=+1, 1 for s=-1.
    codes = np.arange(n_seq, dtype=np.uint32)
    levels = np.empty((n_seq, n_steps), dtype=np.intp)
    for k in range(n_steps):
        levels[:, k] = (codes >> k) & 1

    probs = p_start[levels[:, 0]].copy()
    for k in range(n_steps - 1):
        probs *= w[levels[:, k + 1], levels[:, k]]

    transfer = rot[levels[:, 0]]
    for k in range(1, n_steps):
        transfer = rot[levels[:, k]] @ transfer

    t_matrix = np.einsum("s,sij->ij", probs, transfer)
    return SequenceEnsembleResult(
        t_matrix=t_matrix,
        n_steps=n_steps,
        dt=dt,
        total_probability=float(probs.sum()),
    )


def _rotate_vectors(n: np.ndarray, states: np.ndarray, dts: np.ndarray,
                    axis_plus: np.ndarray, axis_minus: np.ndarray) -> np.ndarray:
    """Rodrigues rotation of each row of n about its state's field axis."""
    axes = np.where(states[:, None] > 0, axis_plus[None, :], axis_minus[None, :])
    norms = np.linalg.norm(axes, axis=1)
    angles = norms * dts
    safe = np.where(norms > 0, norms, 1.0)
    u = axes / safe[:, None]
    cos = np.cos(angles)[:, None]
    sin = np.sin(angles)[:, None]
    return n * cos + np.cross(u, n) * sin + u * np.sum(u * n, axis=1)[:, None] * (1.0 - cos)


def _sample_chunk(f: FluctuatorSpec, b0: float, p_plus: float, n0: np.ndarray,
                  t_grid: np.ndarray, size: int, rng: np.random.Generator):
    """Simulate `size` telegraph trajectories; returns per-time sums."""
    axis_plus = np.array([0.0, 0.0, b0]) + f.g
    axis_minus = np.array([0.0, 0.0, b0]) - f.g

    states = np.where(rng.random(size) < p_plus, 1, -1).astype(np.int8)
    n = np.tile(n0, (size, 1))
    cursor = np.zeros(size)
    # Rate out of state s is gamma + s * eta; a frozen state dwells forever.
    with np.errstate(divide="ignore"):
        next_switch = rng.exponential(1.0, size) / (f.gamma + f.eta * states)

    sums = np.zeros((len(t_grid), 3))
    sumsq = np.zeros((len(t_grid), 3))
    for k, tk in enumerate(t_grid):
        while True:
            active = next_switch < tk
            if not active.any():
                break
            n[active] = _rotate_vectors(
                n[active], states[active], next_switch[active] - cursor[active],
                axis_plus, axis_minus,
            )
            cursor[active] = next_switch[active]
            states[active] = -states[active]
            with np.errstate(divide="ignore"):
                next_switch[active] = cursor[active] + rng.exponential(
                    1.0, int(active.sum())
                ) / (f.gamma + f.eta * states[active])
        remaining = tk - cursor
        moving = remaining > 0
        n[moving] = _rotate_vectors(
            n[moving], states[moving], remaining[moving], axis_plus, axis_minus
        )
        cursor[:] = tk
        sums[k] = n.sum(axis=0)
        sumsq[k] = (n**2).sum(axis=0)
    return sums, sumsq


def sample_trajectories(
    sys: SystemSpec,
    n0,
    t_grid,
    n_samples: int,
    seed: int,
    workers: int = 1,
) -> McEstimate:
    """Monte-Carlo estimate of the ensemble-averaged Bloch vector.

    Trajectories use exact exponential dwell times (rate ``gamma + s eta``
    out of level s) with the initial level drawn from the fluctuator's
    distribution; within a dwell the Bloch vector rotates
    deterministically about the total field.  Sampling is chunked with
    per-chunk seeds spawned from ``seed``, so results are bit-identical
    for any ``workers`` count and fully reproducible from
    ``(seed, n_samples)``.
    """
    f = _single_fluctuator(sys)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n0 = as_bloch_array(n0)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0 or np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
        raise ValueError("t_grid must be 1-d, strictly increasing and >= 0")
    dist = sys.distributions()[0]

    sizes = [CHUNK_SIZE] * (n_samples // CHUNK_SIZE)
    if n_samples % CHUNK_SIZE:
        sizes.append(n_samples % CHUNK_SIZE)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run_chunk(args):
        size, child = args
        return _sample_chunk(f, sys.b0, dist.p_plus, n0, t_grid, size, np.random.default_rng(child))

    jobs = list(zip(sizes, seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, jobs))
    else:
        results = [run_chunk(job) for job in jobs]

    # Ordered reduction keeps the floating-point result deterministic.
    sums = np.zeros((len(t_grid), 3))
    sumsq = np.zeros((len(t_grid), 3))
    for s, s2 in results:
        sums += s
        sumsq += s2

    mean = sums / n_samples
    if n_samples > 1:
        var = np.clip((sumsq - n_samples * mean**2) / (n_samples - 1), 0.0, None)
        stderr = np.sqrt(var / n_samples)
    else:
        stderr = np.zeros_like(mean)
    return McEstimate(times=t_grid, mean=mean, stderr=stderr, n_samples=n_samples, seed=seed)


def sample_dwell_times(f: FluctuatorSpec, n_dwells: int, seed: int) -> np.ndarray:
    """Successive dwell times of the stationary switching process.

    The initial level is drawn from the stationary distribution and the
    level alternates after each dwell; the dwell in level s is
    exponential with rate ``gamma + s * eta`` (rate ``gamma`` for both
    levels in the symmetric case).
    """
    if n_dwells < 1:
        raise ValueError("n_dwells must be >= 1")
    if f.gamma <= 0.0:
        raise ValueError("frozen fluctuator has no finite dwell times")
    rng = np.random.default_rng(seed)
    p_plus = (f.gamma - f.eta) / (2.0 * f.gamma)
    state = 1 if rng.random() < p_plus else -1
    signs = state * (-1) ** np.arange(n_dwells)
    rates = f.gamma + f.eta * signs
    if np.any(rates <= 0):
        raise ValueError("frozen fluctuator has no finite dwell times")
    return rng.exponential(1.0, n_dwells) / rates


def _sample_states_on_grid(f: FluctuatorSpec, n_grid: int, dt: float,
                           n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary telegraph states on a uniform grid, exact dwell times."""
    p_plus = (f.gamma - f.eta) / (2.0 * f.gamma)
    states = np.where(rng.random(n_samples) < p_plus, 1, -1).astype(np.int8)
    next_switch = rng.exponential(1.0, n_samples) / (f.gamma + f.eta * states)
    out = np.empty((n_samples, n_grid), dtype=np.int8)
    for k in range(n_grid):
        tk = k * dt
        while True:
            active = next_switch < tk
            if not active.any():
                break
            states[active] = -states[active]
            next_switch[active] = next_switch[active] + rng.exponential(
                1.0, int(active.sum())
            ) / (f.gamma + f.eta * states[active])
        out[:, k] = states
    return out


def empirical_spectrum(
    f: FluctuatorSpec,
    t_max: float | None = None,
    n_samples: int = 400,
    seed: int = 0,
) -> SpectrumEstimate:
    """Estimate the power spectrum of the sampled noise field.

    Averages the periodogram of ``|g| * s(t)`` over realizations and
    fits a Lorentzian ``S0 * hw**2 / (omega**2 + hw**2)``.  For
    symmetric telegraph noise the autocorrelation is
    ``g**2 exp(-2 gamma |t|)``, so the fit should recover
    ``S0 = g**2 / gamma`` and ``hw = 2 gamma``.
    """
    if f.eta != 0.0:
        raise ValueError("spectrum estimation is implemented for eta = 0 only")
    if f.gamma <= 0.0:
        raise ValueError("gamma must be > 0")
    if t_max is None:
        t_max = 30.0 / f.gamma
    dt = 0.02 / f.gamma
    n_grid = max(int(round(t_max / dt)), 64)
    rng = np.random.default_rng(seed)
    states = _sample_states_on_grid(f, n_grid, dt, n_samples, rng)
    x = f.coupling_magnitude * states.astype(float)

    transform = np.fft.rfft(x, axis=1) * dt
    periodogram = (np.abs(transform) ** 2).mean(axis=0) / (n_grid * dt)
    omega = 2.0 * np.pi * np.fft.rfftfreq(n_grid, dt)

    def lorentzian(w, s_zero, hw):
        return s_zero * hw**2 / (w**2 + hw**2)

    window = omega <= 16.0 * f.gamma
    popt, _ = scipy.optimize.curve_fit(
        lorentzian,
        omega[window],
        periodogram[window],
        p0=[float(periodogram[0]), 2.0 * f.gamma],
    )
    return SpectrumEstimate(
        omega=omega,
        values=periodogram,
        s_zero=float(popt[0]),
        hwhm=abs(float(popt[1])),
    )
