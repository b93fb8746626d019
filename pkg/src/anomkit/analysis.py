"""Classical time-series anomaly probes.

Four families of checks back the reasoning pipeline: distributional
(summary stats, histogram outlier scores, k-sigma envelope), structural
(smoothed gradients), spectral (dominant period, sliding period scan)
and subsequence (matrix profile discords).

All statistics are population (1/N) statistics, stated once here so the
whole package agrees. Every function is a deterministic pure function
of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import Interval, labels_to_intervals, normalize_intervals
from .errors import ConfigError

MAD_TO_SIGMA = 1.4826  # robust std estimate: 1.4826 * median absolute deviation


@dataclass(frozen=True)
class AnalysisParams:
    """Default probe parameter pack.

    k, smooth_window, mp_window, period_window, k_band and
    discord_threshold are the documented defaults of the validation
    procedures; hbos_bins <= 0 selects round(sqrt(T)) at call time.
    """

    k: float = 3.0
    smooth_window: int = 21
    mp_window: int = 50
    period_window: int = 120
    period_stride: int = 10
    k_band: float = 3.0
    discord_threshold: float = 3.5
    hbos_bins: int = 0

    def effective_hbos_bins(self, length: int) -> int:
        if self.hbos_bins > 0:
            return self.hbos_bins
        return max(2, round(math.sqrt(length)))


class SummaryStats(NamedTuple):
    mean: float
    std: float
    max_abs_z: float


def summary_stats(series: np.ndarray) -> SummaryStats:
    """Population mean/std and the largest standardized deviation."""
    mu = float(np.mean(series))
    sigma = float(np.std(series))
    if sigma > 0:
        max_abs_z = float(np.max(np.abs(series - mu)) / sigma)
    else:
        max_abs_z = 0.0
    return SummaryStats(mu, sigma, max_abs_z)


def hbos_score(series: np.ndarray, bins: int) -> np.ndarray:
    """Histogram-based outlier score per point.

    Scores are -log of the Laplace-smoothed (+1 per bin) bin mass of an
    equal-width histogram over [min, max]; higher means more outlying.
    A constant series collapses to a single effective bin and uniform
    scores.
    """
    if bins < 2:
        raise ConfigError(f"hbos requires bins >= 2, got {bins}")
    x = np.asarray(series, dtype=float)
    n = x.size
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        mass = (n + 1.0) / (n + bins)
        return np.full(n, -math.log(mass))
    width = (hi - lo) / bins
    idx = np.minimum((x - lo) / width, bins - 1).astype(np.int64)
    idx = np.maximum(idx, 0)
    counts = np.bincount(idx, minlength=bins)
    mass = (counts + 1.0) / (n + bins)
    return -np.log(mass[idx])


@dataclass(frozen=True)
class EnvelopeResult:
    """k-sigma envelope with the contiguous excursions beyond it."""

    lower: float
    upper: float
    k: float
    intervals: tuple[Interval, ...]
    exceed_count: int


def ksigma_envelope(series: np.ndarray, k: float) -> EnvelopeResult:
    """Flag |x - mu| > k*sigma points, aggregated into maximal runs.

    A zero-variance series collapses the bounds onto the mean and, by
    convention, yields no exceedances.
    """
    if k <= 0:
        raise ConfigError(f"envelope requires k > 0, got {k}")
    mu = float(np.mean(series))
    sigma = float(np.std(series))
    if sigma == 0:
        return EnvelopeResult(mu, mu, k, (), 0)
    mask = np.abs(series - mu) > k * sigma
    intervals = tuple(labels_to_intervals(mask.astype(np.int8)))
    return EnvelopeResult(mu - k * sigma, mu + k * sigma, k, intervals, int(mask.sum()))


@dataclass(frozen=True)
class GradientResult:
    """First difference of the smoothed series with its population stats."""

    gradient: np.ndarray
    mean: float
    std: float
    window: int


def smoothed_gradient(series: np.ndarray, window: int) -> GradientResult:
    """Centered moving average of the given odd width, then first difference.

    The moving average truncates at the edges, so interior points of a
    linear ramp reproduce its slope exactly. The gradient has length T-1.
    """
    n = series.size
    if window < 3 or window % 2 == 0:
        raise ConfigError(f"smoothing window must be odd and >= 3, got {window}")
    if window >= n:
        raise ConfigError(f"smoothing window {window} must be < series length {n}")
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(series, dtype=float)))
    pos = np.arange(n)
    lo = np.maximum(pos - half, 0)
    hi = np.minimum(pos + half + 1, n)
    smooth = (csum[hi] - csum[lo]) / (hi - lo)
    gradient = np.diff(smooth)
    return GradientResult(gradient, float(np.mean(gradient)), float(np.std(gradient)), window)


@dataclass(frozen=True)
class GradientExceedances:
    """Gradient excursions beyond the +-k*sigma_grad threshold."""

    threshold: float
    intervals: tuple[Interval, ...]
    exceed_count: int


def gradient_exceedances(grad: GradientResult, k: float) -> GradientExceedances:
    """Merge |g - g_mean| > k*sigma_grad indices into series intervals.

    Each exceeding difference flags the pair of samples it spans; runs
    and adjacent flags merge. sigma_grad == 0 yields no exceedances.
    """
    if grad.std == 0:
        return GradientExceedances(0.0, (), 0)
    threshold = k * grad.std
    mask = np.abs(grad.gradient - grad.mean) > threshold
    labels = np.zeros(grad.gradient.size + 1, dtype=np.int8)
    hits = np.flatnonzero(mask)
    labels[hits] = 1
    labels[hits + 1] = 1
    return GradientExceedances(threshold, tuple(labels_to_intervals(labels)), int(mask.sum()))


class PeriodEstimate(NamedTuple):
    period: float
    peak_ratio: float


def _required_peak_ratio(nbins: int) -> float:
    """Peak-to-median power ratio that certifies a clear dominant period.

    Periodogram bins of white noise are approximately iid exponential;
    their maximum scales with log(nbins), so a fixed multiple of the
    median would fire on pure noise. log2(100 * nbins) bounds the
    white-noise false-alarm probability near 1% (union bound), and 3x
    the median is kept as the floor.
    """
    return max(3.0, math.log2(100.0 * max(nbins, 1)))


def dominant_period(series: np.ndarray) -> Optional[PeriodEstimate]:
    """Dominant period from the DFT of the mean-removed series.

    Returns T / argmax-bin (zero bin excluded) provided the peak power
    clears the significance ratio over the median nonzero-bin power;
    otherwise None. A pure sinusoid with an integer cycle count lands
    exactly on its bin.
    """
    n = series.size
    if n < 8:
        raise ConfigError(f"dominant_period requires T >= 8, got {n}")
    power = np.abs(np.fft.rfft(series - np.mean(series))) ** 2
    power = power[1:]
    if power.size == 0 or not np.any(power > 0):
        return None
    k = int(np.argmax(power))
    peak = float(power[k])
    med = float(np.median(power))
    if peak < _required_peak_ratio(power.size) * med:
        return None
    ratio = peak / med if med > 0 else float("inf")
    return PeriodEstimate(n / (k + 1), ratio)


def _window_period(window_values: np.ndarray) -> tuple[float, bool]:
    """Fractional-bin period estimate for one analysis window.

    Applies a Hann taper, then refines the periodogram argmax with
    log-power parabolic interpolation so periods between DFT bins (for
    example 50 samples inside a 120-sample window) resolve to fractions.
    Returns (period, significant).
    """
    w = window_values - np.mean(window_values)
    n = w.size
    power = np.abs(np.fft.rfft(w * np.hanning(n))) ** 2
    power = power[1:]
    if power.size == 0 or not np.any(power > 0):
        return float(n), False
    k = int(np.argmax(power))
    peak = float(power[k])
    med = float(np.median(power))
    significant = peak >= _required_peak_ratio(power.size) * med
    khat = k + 1.0
    if 1 <= k <= power.size - 2:
        logs = np.log(np.maximum(power[k - 1 : k + 2], 1e-300))
        denom = logs[0] - 2.0 * logs[1] + logs[2]
        if denom < 0:
            khat += 0.5 * (logs[0] - logs[2]) / denom
    return n / khat, significant


@dataclass(frozen=True)
class PeriodScan:
    """Sliding-window period estimates with a robust tolerance band."""

    periods: tuple[float, ...]
    window: int
    stride: int
    typical: float
    robust_scale: float
    band: tuple[float, float]
    k_band: float
    deviating: tuple[Interval, ...]


def sliding_period_scan(
    series: np.ndarray, window: int, stride: int, k_band: float
) -> PeriodScan:
    """Estimate the dominant period over sliding windows and flag drifts.

    Windows without a significant spectral peak inherit the previous
    window's period (the first window falls back to the global dominant
    period). The tolerance band is median +- k_band * 1.4826 * MAD;
    deviating windows map back to index intervals and merge.
    """
    n = series.size
    if window > n:
        raise ConfigError(f"period window {window} exceeds series length {n}")
    if window < 16:
        raise ConfigError(f"period window must be >= 16, got {window}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    starts = list(range(0, n - window + 1, stride))
    periods: list[float] = []
    previous: float | None = None
    for start in starts:
        est, significant = _window_period(series[start : start + window])
        if not significant:
            if previous is None:
                global_est = dominant_period(series)
                previous = global_est.period if global_est is not None else est
            est = previous
        periods.append(est)
        previous = est
    arr = np.asarray(periods)
    typical = float(np.median(arr))
    scale = MAD_TO_SIGMA * float(np.median(np.abs(arr - typical)))
    lo = typical - k_band * scale
    hi = typical + k_band * scale
    flagged = [
        Interval(starts[i], starts[i] + window - 1)
        for i, p in enumerate(arr)
        if p < lo or p > hi
    ]
    return PeriodScan(
        periods=tuple(float(p) for p in arr),
        window=window,
        stride=stride,
        typical=typical,
        robust_scale=scale,
        band=(lo, hi),
        k_band=k_band,
        deviating=tuple(normalize_intervals(flagged, n)),
    )


def period_band(typical: float, robust_scale: float, k_band: float) -> tuple[float, float]:
    """Tolerance band typical +- k_band * robust_scale."""
    return typical - k_band * robust_scale, typical + k_band * robust_scale


@dataclass(frozen=True)
class MatrixProfile:
    """Z-normalized nearest-neighbor subsequence distances."""

    distances: np.ndarray
    nn_index: np.ndarray
    window: int


def matrix_profile(series: np.ndarray, m: int) -> MatrixProfile:
    """Exact self-join matrix profile with an m/2 exclusion zone.

    d(i) is the minimal z-normalized Euclidean distance between the
    length-m subsequence at i and any subsequence at j with |i-j| >=
    m/2. A zero-variance subsequence z-normalizes to the zero vector.
    """
    n = series.size
    if m < 4 or m > n / 2:
        raise ConfigError(f"matrix profile window must satisfy 4 <= m <= T/2, got m={m}, T={n}")
    subs = np.lib.stride_tricks.sliding_window_view(np.asarray(series, dtype=float), m)
    means = subs.mean(axis=1, keepdims=True)
    stds = subs.std(axis=1, keepdims=True)
    znorm = np.where(stds > 0, (subs - means) / np.where(stds > 0, stds, 1.0), 0.0)
    sqnorms = np.einsum("ij,ij->i", znorm, znorm)
    gram = znorm @ znorm.T
    dist_sq = sqnorms[:, None] + sqnorms[None, :] - 2.0 * gram
    np.maximum(dist_sq, 0.0, out=dist_sq)
    count = dist_sq.shape[0]
    offsets = np.abs(np.arange(count)[:, None] - np.arange(count)[None, :])
    dist_sq[offsets < m / 2] = np.inf
    nn = np.argmin(dist_sq, axis=1)
    profile = np.sqrt(dist_sq[np.arange(count), nn])
    return MatrixProfile(profile, nn, m)


@dataclass(frozen=True)
class DiscordScores:
    """Standardized matrix-profile distances and the top discord."""

    zscores: np.ndarray
    index: int
    zscore: float
    threshold: float
    significant: bool


def discord_zscores(profile: np.ndarray, threshold: float = 3.5) -> DiscordScores:
    """Standardize profile distances; the argmax (earliest tie) is the discord.

    The discord is significant when its z-score exceeds the threshold.
    A zero-variance profile yields all-zero scores and no significance.
    """
    d = np.asarray(profile, dtype=float)
    if d.size < 2:
        raise ConfigError("discord scoring needs a profile of length >= 2")
    mu = float(np.mean(d))
    sigma = float(np.std(d))
    if sigma == 0:
        z = np.zeros_like(d)
        return DiscordScores(z, 0, 0.0, threshold, False)
    z = (d - mu) / sigma
    idx = int(np.argmax(z))
    top = float(z[idx])
    return DiscordScores(z, idx, top, threshold, top > threshold)


class TopDiscord(NamedTuple):
    index: int
    distance: float
    zscore: float


@dataclass(frozen=True)
class ScanReport:
    """Observation-stage snapshot: global, structural and local probes."""

    mean: float
    std: float
    max_abs_z: float
    hbos: np.ndarray
    grad_mean: float
    grad_std: float
    dominant_period: Optional[PeriodEstimate]
    top_discord: Optional[TopDiscord]
    discord_significant: bool
    smooth_window: int
    mp_window: int
    period_window: int
    candidates: dict[str, tuple[Interval, ...]] = field(default_factory=dict)


def hierarchical_scan(series: np.ndarray, params: AnalysisParams) -> ScanReport:
    """Run the global -> structural -> local probe cascade unconditionally.

    Every probe's candidate intervals are recorded so downstream stages
    can surface them before formal validation.
    """
    stats = summary_stats(series)
    hbos = hbos_score(series, params.effective_hbos_bins(series.size))
    envelope = ksigma_envelope(series, params.k)
    grad = smoothed_gradient(series, params.smooth_window)
    grad_exc = gradient_exceedances(grad, params.k)
    period = dominant_period(series)
    period_scan = sliding_period_scan(
        series, params.period_window, params.period_stride, params.k_band
    )
    profile = matrix_profile(series, params.mp_window)
    discords = discord_zscores(profile.distances, params.discord_threshold)
    top = TopDiscord(
        discords.index,
        float(profile.distances[discords.index]),
        discords.zscore,
    )
    discord_candidates: tuple[Interval, ...] = ()
    if discords.significant:
        end = min(discords.index + params.mp_window - 1, series.size - 1)
        discord_candidates = (Interval(discords.index, end),)
    return ScanReport(
        mean=stats.mean,
        std=stats.std,
        max_abs_z=stats.max_abs_z,
        hbos=hbos,
        grad_mean=grad.mean,
        grad_std=grad.std,
        dominant_period=period,
        top_discord=top,
        discord_significant=discords.significant,
        smooth_window=params.smooth_window,
        mp_window=params.mp_window,
        period_window=params.period_window,
        candidates={
            "envelope": envelope.intervals,
            "gradient": grad_exc.intervals,
            "period": period_scan.deviating,
            "discord": discord_candidates,
        },
    )
