"""Synthetic corpus generation: base signals plus injected anomalies.

The base signal is a sinusoid with optional linear trend and Gaussian
noise. Each anomaly class has a dedicated local transform, chosen so
the matching validation probe can detect it:

* global point: spikes pushed a multiple of sigma beyond the value range,
* contextual point: in-range values displaced from the local pattern,
* trend: an additive ramp over the interval,
* seasonal: the interval resampled so its period is multiplied or
  divided by the configured magnitude,
* shapelet: the interval replaced by a flat or squared-off motif that
  preserves the global value range.

Everything is deterministic given (config, seed); per-instance seeds
derive from the dataset seed through a 64-bit mixer, so instances can
be produced independently and in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import ANOMALY_CLASSES, AnomalyClass, Interval, LabeledInstance
from .errors import ConfigError, DataError

_MASK64 = (1 << 64) - 1
_LOCAL_HALF = 7  # half-width of the local window used by contextual shifts


def mix_seed(seed: int, index: int) -> int:
    """Derive a child seed from (seed, index) with a splitmix64 round."""
    z = (seed + 0x9E3779B97F4A7C15 * (index + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class BaseSignalConfig:
    """Sinusoid + trend + Gaussian noise base signal."""

    length: int = 1000
    period: float = 50.0
    amplitude: float = 1.0
    noise_std: float = 0.05
    trend_slope: float = 0.0

    def __post_init__(self) -> None:
        if self.length < 16:
            raise ConfigError(f"base length must be >= 16, got {self.length}")
        if not 1.0 < self.period < self.length / 2:
            raise ConfigError(
                f"period must lie in (1, length/2), got {self.period} for length {self.length}"
            )
        if self.amplitude <= 0:
            raise ConfigError(f"amplitude must be > 0, got {self.amplitude}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.noise_std >= self.amplitude:
            raise ConfigError("noise_std must stay below the amplitude")


@dataclass(frozen=True)
class InjectionConfig:
    """Per-class injection settings."""

    anomaly_class: AnomalyClass
    interval_length_range: tuple[int, int]
    magnitude: float
    count_range: tuple[int, int] = (1, 1)

    def __post_init__(self) -> None:
        if self.anomaly_class is AnomalyClass.NORMAL:
            raise ConfigError("cannot inject the 'normal' class")
        lo, hi = self.interval_length_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"bad interval length range {self.interval_length_range}")
        clo, chi = self.count_range
        if not 1 <= clo <= chi:
            raise ConfigError(f"bad count range {self.count_range}")
        if self.magnitude <= 0:
            raise ConfigError(f"magnitude must be > 0, got {self.magnitude}")


DEFAULT_INJECTIONS: dict[AnomalyClass, InjectionConfig] = {
    AnomalyClass.GLOBAL_POINT: InjectionConfig(
        AnomalyClass.GLOBAL_POINT, (1, 3), magnitude=1.0, count_range=(1, 3)
    ),
    AnomalyClass.CONTEXTUAL_POINT: InjectionConfig(
        AnomalyClass.CONTEXTUAL_POINT, (3, 8), magnitude=1.0, count_range=(1, 1)
    ),
    AnomalyClass.TREND: InjectionConfig(
        AnomalyClass.TREND, (40, 80), magnitude=20.0, count_range=(1, 1)
    ),
    AnomalyClass.SEASONAL: InjectionConfig(
        AnomalyClass.SEASONAL, (130, 200), magnitude=2.0, count_range=(1, 1)
    ),
    AnomalyClass.SHAPELET: InjectionConfig(
        AnomalyClass.SHAPELET, (60, 120), magnitude=1.0, count_range=(1, 1)
    ),
}


def generate_base(config: BaseSignalConfig, seed: int) -> np.ndarray:
    """Deterministic base series for (config, seed)."""
    rng = np.random.default_rng(seed)
    t = np.arange(config.length, dtype=float)
    values = config.amplitude * np.sin(2.0 * np.pi * t / config.period)
    values += config.trend_slope * t
    if config.noise_std > 0:
        values += config.noise_std * rng.standard_normal(config.length)
    return values


def _draw_intervals(
    rng: np.random.Generator,
    length: int,
    inj: InjectionConfig,
    fits: Optional[Callable[[int, int], bool]] = None,
) -> list[Interval]:
    """Draw non-overlapping, non-adjacent intervals inside (0, T-1).

    ``fits(start, size)`` may veto a placement (class-specific headroom
    constraints); placement failure raises DataError.
    """
    count = int(rng.integers(inj.count_range[0], inj.count_range[1] + 1))
    chosen: list[Interval] = []
    attempts = 0
    while len(chosen) < count:
        attempts += 1
        if attempts > 500:
            raise DataError(
                f"could not place {count} intervals of class "
                f"{inj.anomaly_class.value!r} inside series of length {length}"
            )
        size = int(rng.integers(inj.interval_length_range[0], inj.interval_length_range[1] + 1))
        if size > length - 2:
            raise DataError(f"interval length {size} does not fit inside (0, {length - 1})")
        start = int(rng.integers(1, length - size))
        candidate = Interval(start, start + size - 1)
        if any(candidate.start <= iv.end + 1 and iv.start <= candidate.end + 1 for iv in chosen):
            continue
        if fits is not None and not fits(start, size):
            continue
        chosen.append(candidate)
    return sorted(chosen)


def _local_stats(base: np.ndarray, t: int) -> tuple[float, float]:
    lo = max(0, t - _LOCAL_HALF)
    hi = min(base.size, t + _LOCAL_HALF + 1)
    window = base[lo:hi]
    return float(np.mean(window)), float(np.std(window))


def _inject_global_point(
    base: np.ndarray, values: np.ndarray, intervals: list[Interval],
    inj: InjectionConfig, rng: np.random.Generator,
) -> None:
    sigma = float(np.std(base))
    lo, hi = float(np.min(base)), float(np.max(base))
    jump = inj.magnitude * 6.0 * sigma
    for iv in intervals:
        for t in range(iv.start, iv.end + 1):
            if rng.random() < 0.5:
                values[t] = hi + jump
            else:
                values[t] = lo - jump


def _contextual_targets(base: np.ndarray, t: int, magnitude: float) -> list[float]:
    """Candidate displaced values at index t that stay inside the value range."""
    lo, hi = float(np.min(base)), float(np.max(base))
    mu_loc, sigma_loc = _local_stats(base, t)
    shift = 3.0 * magnitude * max(sigma_loc, 1e-12)
    return [v for v in (mu_loc + shift, mu_loc - shift) if lo <= v <= hi]


def _inject_contextual_point(
    base: np.ndarray, values: np.ndarray, intervals: list[Interval],
    inj: InjectionConfig, rng: np.random.Generator,
) -> None:
    for iv in intervals:
        for t in range(iv.start, iv.end + 1):
            targets = _contextual_targets(base, t, inj.magnitude)
            values[t] = targets[int(rng.integers(0, len(targets)))]


def _inject_trend(
    base: np.ndarray, values: np.ndarray, intervals: list[Interval],
    inj: InjectionConfig, rng: np.random.Generator,
) -> None:
    sigma = float(np.std(base))
    for iv in intervals:
        size = iv.end - iv.start + 1
        direction = 1.0 if rng.random() < 0.5 else -1.0
        ramp = direction * inj.magnitude * sigma * np.arange(1, size + 1) / size
        values[iv.start : iv.end + 1] += ramp


def _inject_seasonal(
    base: np.ndarray, values: np.ndarray, intervals: list[Interval],
    factors: Sequence[float],
) -> None:
    grid = np.arange(base.size, dtype=float)
    for iv, factor in zip(intervals, factors):
        size = iv.end - iv.start + 1
        positions = iv.start + factor * np.arange(size)
        values[iv.start : iv.end + 1] = np.interp(positions, grid, base)


def _inject_shapelet(
    base: np.ndarray, values: np.ndarray, intervals: list[Interval],
    rng: np.random.Generator,
) -> None:
    for iv in intervals:
        segment = base[iv.start : iv.end + 1]
        center = (float(np.max(segment)) + float(np.min(segment))) / 2.0
        half_range = (float(np.max(segment)) - float(np.min(segment))) / 2.0
        if rng.random() < 0.5:
            values[iv.start : iv.end + 1] = float(np.mean(segment))
        else:
            square = np.sign(segment - center)
            square[square == 0] = 1.0
            values[iv.start : iv.end + 1] = center + 0.9 * half_range * square


def inject_anomaly(
    series: np.ndarray,
    inj: InjectionConfig,
    seed: int,
    instance_id: str = "",
) -> LabeledInstance:
    """Apply the class transform of ``inj`` to a copy of ``series``.

    The returned instance's intervals cover exactly the indices the
    transform wrote; everything outside them is bit-identical to the
    input. Deterministic for fixed (series, inj, seed).
    """
    base = np.asarray(series, dtype=float)
    length = base.size
    rng = np.random.default_rng(seed)
    values = base.copy()

    if inj.anomaly_class is AnomalyClass.CONTEXTUAL_POINT:
        def fits(start: int, size: int) -> bool:
            return all(
                _contextual_targets(base, t, inj.magnitude)
                for t in range(start, start + size)
            )
        intervals = _draw_intervals(rng, length, inj, fits)
        _inject_contextual_point(base, values, intervals, inj, rng)
    elif inj.anomaly_class is AnomalyClass.GLOBAL_POINT:
        intervals = _draw_intervals(rng, length, inj)
        _inject_global_point(base, values, intervals, inj, rng)
    elif inj.anomaly_class is AnomalyClass.TREND:
        intervals = _draw_intervals(rng, length, inj)
        _inject_trend(base, values, intervals, inj, rng)
    elif inj.anomaly_class is AnomalyClass.SEASONAL:
        # Speed up or slow down the local clock; the resampled segment
        # keeps the original value range but shifts the local period.
        factor = inj.magnitude if rng.random() < 0.5 else 1.0 / inj.magnitude
        def fits(start: int, size: int) -> bool:
            return start + factor * (size - 1) <= length - 1
        intervals = _draw_intervals(rng, length, inj, fits)
        _inject_seasonal(base, values, intervals, [factor] * len(intervals))
    elif inj.anomaly_class is AnomalyClass.SHAPELET:
        intervals = _draw_intervals(rng, length, inj)
        _inject_shapelet(base, values, intervals, rng)
    else:  # pragma: no cover - guarded by InjectionConfig
        raise ConfigError(f"no transform for class {inj.anomaly_class}")

    return LabeledInstance(
        instance_id=instance_id or f"inst-{seed & _MASK64:016x}",
        values=values,
        anomaly_class=inj.anomaly_class,
        intervals=tuple(intervals),
        seed=seed,
    )


def _class_counts(n: int, mix: Mapping[AnomalyClass, float]) -> dict[AnomalyClass, int]:
    """Largest-remainder apportionment of n instances across the mix."""
    if not mix:
        raise ConfigError("class mix must not be empty")
    total = sum(mix.values())
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"mix fractions must sum to 1, got {total}")
    if any(f < 0 for f in mix.values()):
        raise ConfigError("mix fractions must be non-negative")
    ordered = list(mix.items())
    floors = {cls: int(n * frac) for cls, frac in ordered}
    remainder = n - sum(floors.values())
    by_fraction = sorted(
        ordered, key=lambda item: (item[1] * n) - floors[item[0]], reverse=True
    )
    for cls, _ in by_fraction[:remainder]:
        floors[cls] += 1
    return floors


def uniform_mix() -> dict[AnomalyClass, float]:
    """Equal fractions over the five anomaly classes."""
    return {cls: 1.0 / len(ANOMALY_CLASSES) for cls in ANOMALY_CLASSES}


def plan_dataset(
    n: int, mix: Mapping[AnomalyClass, float], seed: int
) -> list[tuple[int, AnomalyClass, int]]:
    """Deterministic (index, class, instance_seed) plan for a dataset.

    Instances can be built independently (and in parallel) from their
    plan entries; the shuffle order and every per-instance seed derive
    from the dataset seed through the 64-bit mixer.
    """
    counts = _class_counts(n, mix)
    classes: list[AnomalyClass] = []
    for cls in counts:
        classes.extend([cls] * counts[cls])
    order_rng = np.random.default_rng(mix_seed(seed, 0))
    order_rng.shuffle(classes)
    return [(i, cls, mix_seed(seed, i + 1)) for i, cls in enumerate(classes)]


def build_instance(
    index: int,
    cls: AnomalyClass,
    instance_seed: int,
    base: BaseSignalConfig,
    injections: Mapping[AnomalyClass, InjectionConfig],
) -> LabeledInstance:
    """Materialize one planned instance."""
    values = generate_base(base, instance_seed)
    slug = cls.value.replace(" ", "-")
    instance_id = f"{slug}-{index:05d}"
    if cls is AnomalyClass.NORMAL:
        return LabeledInstance(instance_id, values, AnomalyClass.NORMAL, (), instance_seed)
    return inject_anomaly(values, injections[cls], mix_seed(instance_seed, 1), instance_id)


def generate_dataset(
    n: int,
    mix: Mapping[AnomalyClass, float],
    base: BaseSignalConfig = BaseSignalConfig(),
    injections: Optional[Mapping[AnomalyClass, InjectionConfig]] = None,
    seed: int = 0,
) -> list[LabeledInstance]:
    """Generate n labeled instances with class counts matching the mix."""
    injections = dict(DEFAULT_INJECTIONS) | dict(injections or {})
    return [
        build_instance(index, cls, instance_seed, base, injections)
        for index, cls, instance_seed in plan_dataset(n, mix, seed)
    ]
