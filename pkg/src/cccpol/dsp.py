"""Visibility estimation from raw two-channel frames.

Per frame: find a rising midpoint crossing of the triangle channel, take the
min and max of the detector channel within +/-3 ms of it, subtract the dark
reference and form (max - min) / (max + min). Five frames make one sample.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

SAMPLE_RATE = 125e6 / 256
FRAME_POINTS = 16384


class FrameRejected(ValueError):
    """No usable ramp in a frame."""


class WindowTruncated(FrameRejected):
    pass


class InvalidVisibility(ValueError):
    """Dark-subtracted extrema that cannot come from a real fringe."""


@dataclass(frozen=True)
class Frame:
    ch1: np.ndarray
    ch2: np.ndarray
    t0: float = 0.0
    sample_rate: float = SAMPLE_RATE

    def __post_init__(self):
        if len(self.ch1) != len(self.ch2):
            raise ValueError("channel lengths differ")

    @property
    def duration(self) -> float:
        return len(self.ch1) / self.sample_rate


@dataclass(frozen=True)
class VisibilitySample:
    t: float
    v_mean: float
    v_std: float
    n_frames: int
    dark_ref: float
    valid: bool = True
    n_clamped: int = 0
    frame_values: tuple = ()


def find_rising_zero_cross(frame: Frame, triangle_hz: float = 100.0) -> list[int]:
    """Indices where the triangle channel rises through its midpoint.

    Crossings closer than half a triangle period to the previous one are
    dropped.
    """
    ch2 = np.asarray(frame.ch2)
    lo, hi = float(ch2.min()), float(ch2.max())
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        raise FrameRejected("triangle channel is flat")
    mid = 0.5 * (lo + hi)
    idx = np.flatnonzero((ch2[:-1] < mid) & (ch2[1:] >= mid)) + 1
    min_gap = 0.5 * frame.sample_rate / triangle_hz
    kept = []
    for i in idx:
        if not kept or i - kept[-1] >= min_gap:
            kept.append(int(i))
    if not kept:
        raise FrameRejected("no rising crossing of the triangle midpoint")
    return kept


def extract_extrema(frame: Frame, crossing: int, window: float = 3e-3) -> tuple[float, float]:
    """(min, max) of the detector channel within +/- ``window`` seconds of ``crossing``."""
    half = int(round(window * frame.sample_rate))
    if crossing - half < 0 or crossing + half >= len(frame.ch1):
        raise WindowTruncated(f"window around sample {crossing} leaves the frame")
    seg = frame.ch1[crossing - half:crossing + half + 1]
    return float(seg.min()), float(seg.max())


def raw_visibility(max_volts: float, min_volts: float, dark_ref: float = 0.0,
                   undershoot_limit: float = 0.02) -> float:
    """Unclamped (max - min) / (max + min) after dark subtraction.

    A dark-subtracted minimum below ``-undershoot_limit * max`` cannot come from
    detector noise and is reported as invalid, as is ``max + min <= 0``.
    """
    hi = max_volts - dark_ref
    lo = min_volts - dark_ref
    if hi + lo <= 0:
        raise InvalidVisibility(f"max + min = {hi + lo:.3e} V after dark subtraction")
    if lo < -undershoot_limit * abs(hi):
        raise InvalidVisibility(f"min {lo * 1e3:.3f} mV far below the dark reference")
    return (hi - lo) / (hi + lo)


def visibility(max_volts: float, min_volts: float, dark_ref: float = 0.0) -> float:
    return float(np.clip(raw_visibility(max_volts, min_volts, dark_ref), 0.0, 1.0))


def frame_visibility(frame: Frame, dark_ref: float, window: float = 3e-3,
                     triangle_hz: float = 100.0) -> float:
    """Unclamped visibility from the first ramp whose window fits in the frame."""
    for c in find_rising_zero_cross(frame, triangle_hz):
        try:
            lo, hi = extract_extrema(frame, c, window)
        except WindowTruncated:
            continue
        return raw_visibility(hi, lo, dark_ref)
    raise FrameRejected("every ramp window is truncated by the frame edge")


@dataclass
class DspPipeline:
    """Sequential consumer of a plant's frames; keeps the dark reference and counters."""

    n_frames: int = 5
    frame_interval: float = 0.5
    window: float = 3e-3
    triangle_hz: float = 100.0
    refresh_every: int = 20
    min_valid_frames: int = 3
    dark_ref: float | None = None
    clamp_events: int = 0
    rejected_frames: int = 0
    samples_since_refresh: int = 0
    dark_history: list = field(default_factory=list)

    @property
    def refresh_due(self) -> bool:
        return self.dark_ref is None or self.samples_since_refresh >= self.refresh_every

    def refresh_dark_reference(self, plant, t: float | None = None) -> float:
        """Close the shutter, average one frame, reopen."""
        t = plant.t if t is None else t
        was_open = plant.shutter_open
        plant.set_shutter(False)
        try:
            frame = plant.acquire_frame(t)
        finally:
            plant.set_shutter(was_open)
        self.dark_ref = float(np.mean(frame.ch1))
        self.samples_since_refresh = 0
        self.dark_history.append((t, self.dark_ref))
        return self.dark_ref

    def measure_visibility(self, plant, t: float | None = None) -> VisibilitySample:
        if self.dark_ref is None:
            raise RuntimeError("no dark reference; call refresh_dark_reference first")
        t = plant.t if t is None else t
        values, clamped = [], 0
        for k in range(self.n_frames):
            frame = plant.acquire_frame(t + k * self.frame_interval)
            try:
                v = frame_visibility(frame, self.dark_ref, self.window, self.triangle_hz)
            except (FrameRejected, InvalidVisibility) as exc:
                self.rejected_frames += 1
                log.debug("frame at t=%.3f rejected: %s", frame.t0, exc)
                continue
            if v > 1.0 or v < 0.0:
                clamped += 1
            values.append(min(max(v, 0.0), 1.0))
        self.clamp_events += clamped
        self.samples_since_refresh += 1
        if len(values) < self.min_valid_frames:
            return VisibilitySample(t, float("nan"), float("nan"), len(values), self.dark_ref,
                                    False, clamped, tuple(values))
        vals = np.array(values)
        return VisibilitySample(t, float(vals.mean()), float(vals.std()), len(values),
                                self.dark_ref, True, clamped, tuple(values))

    def step(self, plant, t: float | None = None) -> tuple[VisibilitySample, bool]:
        """Refresh the dark reference when due, then measure. Returns (sample, refreshed)."""
        refreshed = self.refresh_due
        if refreshed:
            self.refresh_dark_reference(plant, t)
        return self.measure_visibility(plant, t), refreshed


def measure_visibility(plant, pipeline: DspPipeline | None = None) -> VisibilitySample:
    pipeline = pipeline or DspPipeline()
    if pipeline.dark_ref is None:
        pipeline.refresh_dark_reference(plant)
    return pipeline.measure_visibility(plant)


def refresh_dark_reference(plant, pipeline: DspPipeline | None = None) -> float:
    pipeline = pipeline or DspPipeline()
    return pipeline.refresh_dark_reference(plant)
