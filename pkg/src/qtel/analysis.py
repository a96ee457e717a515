"""Signal-shape diagnostics for decay curves.

Echo and free-decay curves fall into two qualitative classes: staircase
decay (long plateaus separated by rapid drops, strong coupling) and
smooth exponential decay (weak coupling).  The functions here make that
distinction algorithmic so it can be asserted in tests:

* a *plateau* is a maximal run where the instantaneous slope is below a
  fixed fraction of the curve's peak slope;
* a *step structure* requires at least two large fractional drops of
  the signal, each concentrated in a fast-slope event, with a plateau
  between drops;
* exponential decay is quantified by a log-linear fit over the
  post-transient window (peak envelope when the curve oscillates).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Plateau",
    "StepStructure",
    "ExponentialFit",
    "detect_plateaus",
    "detect_steps",
    "fit_exponential_decay",
]

# A point is "flat" when |slope| is below this fraction of the maximum
# |slope| of the curve.
FLAT_SLOPE_FRACTION = 0.05

# A drop event must lose at least this much of the signal in log space
# (~18% of the level) to count as a step edge.
MIN_LOG_DEPTH = 0.2

# Slope threshold (fraction of the peak downhill log-slope) used to
# segment drop events.
DROP_SLOPE_FRACTION = 0.25


@dataclass(frozen=True)
class Plateau:
    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_start + self.t_end)


@dataclass(frozen=True)
class StepStructure:
    """Detected staircase structure of a decay curve.

    ``period`` is the mean spacing between drop-event centers occurring
    after the first plateau (NaN when fewer than two qualify);
    ``has_steps`` requires at least two qualifying drops plus an
    interior plateau.
    """

    has_steps: bool
    period: float
    drop_times: tuple[float, ...]
    plateaus: tuple[Plateau, ...]


@dataclass(frozen=True)
class ExponentialFit:
    rate: float
    r_squared: float
    n_points: int
    t_window: tuple[float, float]


def _runs(mask: np.ndarray):
    """Yield (start, stop) index pairs of maximal True runs."""
    i = 0
    n = len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            yield i, j
            i = j + 1
        else:
            i += 1


def detect_plateaus(
    times,
    signal,
    slope_fraction: float = FLAT_SLOPE_FRACTION,
    min_points: int = 3,
    log_scale: bool = False,
    include_leading: bool = False,
) -> tuple[Plateau, ...]:
    """Maximal flat stretches of a sampled curve.

    A plateau is a run of at least ``min_points`` samples whose
    |slope| stays below ``slope_fraction`` times the curve's maximum
    |slope|.  The run containing t = 0 is excluded unless
    ``include_leading`` is set (every echo curve starts flat).  With
    ``log_scale`` the slope is measured on log|signal|, which treats
    fractional rather than absolute changes as significant.
    """
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if signal.max() - signal.min() < 1e-12 * max(1.0, np.abs(signal).max()):
        return ()  # no structure beyond roundoff
    if log_scale:
        signal = np.log(np.clip(np.abs(signal), 1e-12, None))
    slope = np.gradient(signal, times)
    peak = np.abs(slope).max()
    if peak == 0.0:
        return ()
    flat = np.abs(slope) < slope_fraction * peak
    out = []
    for i, j in _runs(flat):
        if j - i + 1 < min_points:
            continue
        if i == 0 and not include_leading:
            continue
        out.append(Plateau(t_start=float(times[i]), t_end=float(times[j])))
    return tuple(out)


def detect_steps(
    times,
    signal,
    drop_slope_fraction: float = DROP_SLOPE_FRACTION,
    min_log_depth: float = MIN_LOG_DEPTH,
    slope_fraction: float = FLAT_SLOPE_FRACTION,
    min_points: int = 3,
) -> StepStructure:
    """Locate staircase steps in a decaying signal.

    Works on log|signal| so that successive drops of equal fractional
    size register equally.  A drop event is a maximal run where the
    log-slope is steeper than ``drop_slope_fraction`` times the peak
    downhill log-slope and where the signal loses at least
    ``min_log_depth`` in log units.  A smooth exponential produces one
    long event and no interior flats, hence no steps; micro-oscillations
    fail the depth cut.

    The step period is the mean spacing of drop centers, counting drops
    after the first plateau begins (the initial transient is not a
    step).
    """
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    flat_signal = signal.max() - signal.min() < 1e-12 * max(1.0, np.abs(signal).max())
    logs = np.log(np.clip(np.abs(signal), 1e-12, None))
    slope = np.gradient(logs, times)
    peak_drop = max(-slope.min(), 0.0)
    if flat_signal or peak_drop == 0.0:
        return StepStructure(has_steps=False, period=float("nan"), drop_times=(), plateaus=())

    drops = []
    for i, j in _runs(slope < -drop_slope_fraction * peak_drop):
        if logs[i] - logs[j] >= min_log_depth:
            drops.append(0.5 * (times[i] + times[j]))

    plateaus = detect_plateaus(
        times, signal, slope_fraction=slope_fraction, min_points=min_points, log_scale=True
    )
    has_steps = len(drops) >= 2 and len(plateaus) >= 1

    period = float("nan")
    if plateaus:
        anchor = plateaus[0].t_start
        settled = [t for t in drops if t > anchor]
        if len(settled) >= 2:
            period = float(np.mean(np.diff(settled)))
    return StepStructure(
        has_steps=has_steps,
        period=period,
        drop_times=tuple(drops),
        plateaus=plateaus,
    )


def fit_exponential_decay(
    times,
    signal,
    t_skip: float = 0.0,
    floor: float = 0.02,
    envelope: bool = True,
) -> ExponentialFit:
    """Log-linear fit of a decaying signal.

    Fits ``log|signal|`` against time over the window starting at
    ``t_skip`` (dropping the initial transient) and ending where the
    signal falls below ``floor``.  When ``envelope`` is set and the
    window contains enough local maxima, only the peak envelope is
    fitted, which removes oscillation bias.
    """
    times = np.asarray(times, dtype=float)
    signal = np.abs(np.asarray(signal, dtype=float))
    mask = (times >= t_skip) & (signal > floor)
    tt, ss = times[mask], signal[mask]
    if len(tt) < 4:
        raise ValueError("too few points above the floor to fit a decay rate")
    if envelope:
        peaks = [i for i in range(1, len(ss) - 1) if ss[i] >= ss[i - 1] and ss[i] >= ss[i + 1]]
        if len(peaks) >= 8:
            tt, ss = tt[peaks], ss[peaks]
    slope, intercept = np.polyfit(tt, np.log(ss), 1)
    residual = np.log(ss) - (slope * tt + intercept)
    total = np.log(ss) - np.log(ss).mean()
    denom = float(np.sum(total**2))
    r_squared = 1.0 - float(np.sum(residual**2)) / denom if denom > 0 else 1.0
    return ExponentialFit(
        rate=-float(slope),
        r_squared=r_squared,
        n_points=len(tt),
        t_window=(float(tt[0]), float(tt[-1])),
    )
