"""Simulated fiber Mach-Zehnder interferometer with two stretcher-controlled arms.

Topology::

    Light 1 (V) -> BS1 -+- arm A: tap BS3 -> Fiber stretcher 1 ----------+-> BS2 -> BS4 tap -> PD2
                        +- arm B: mini stretcher -> Fiber stretcher 2 ----+

The arm paths carry the polarization; the beamsplitter port misalignments are
the first and last joints of each arm. The mini stretcher is driven by a
triangle wave and scans the interference phase. Samples are synthesized
directly at the downsampled ADC rate, with the noise figure quoted after
averaging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import FRAME_POINTS, SAMPLE_RATE, Frame
from .fiber import OpticalPath, drift_step
from .polarization import PlaneWaveField, overlap_visibility_jones

RNG_STREAMS = {"drift": 1, "noise": 2, "dark": 3, "phase": 4}


def named_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent generator per named stream, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(RNG_STREAMS[stream],)))


@dataclass(frozen=True)
class BeamsplitterSpec:
    coupling_ratio: float = 0.5
    per_db: float = 25.0

    def __post_init__(self):
        if not 0 < self.coupling_ratio < 1:
            raise ValueError("coupling_ratio must be in (0, 1)")
        if not self.per_db > 0:
            raise ValueError("per_db must be positive")

    @property
    def port_misalignment(self) -> float:
        return float(np.arctan(10 ** (-self.per_db / 20)))


@dataclass(frozen=True)
class TriangleWave:
    frequency: float = 100.0
    v_lo: float = 20.0
    v_hi: float = 50.0
    phase_per_volt: float = 2 * np.pi * 5 / 70
    # attenuated, AC-coupled copy recorded on channel 2
    monitor_gain: float = 1 / 50
    monitor_offset: float = 35.0

    def __post_init__(self):
        if not self.v_lo < self.v_hi:
            raise ValueError("v_lo must be below v_hi")
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")

    def drive(self, t):
        """Stretcher drive voltage; rises from v_lo at t = 0."""
        ph = np.asarray(t, float) * self.frequency
        # |2 frac - 1| falls 1 -> 0 over the first half period
        ph = np.abs(2.0 * (ph - np.floor(ph)) - 1.0)
        return self.v_hi - (self.v_hi - self.v_lo) * ph

    def monitor(self, drive):
        return self.monitor_gain * (np.asarray(drive, float) - self.monitor_offset)


@dataclass
class DetectorModel:
    v_max: float = 0.6
    dark_level: float = 2e-3
    noise_rms: float = 0.18e-3
    adc_bits: int | None = 14
    adc_range: float = 1.0
    dark_drift_amp: float = 0.5e-3
    dark_drift_period: float = 3600.0
    dark_walk_sigma: float = 0.5e-3 / 60.0  # V per sqrt(s): ~0.5 mV rms per hour

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError("detector scale must be positive")
        if self.noise_rms < 0:
            raise ValueError("noise_rms must be >= 0")

    @property
    def lsb(self) -> float | None:
        return None if self.adc_bits is None else 2 * self.adc_range / 2**self.adc_bits

    def quantize(self, x: np.ndarray) -> np.ndarray:
        if self.adc_bits is None:
            return x
        half = 2 ** (self.adc_bits - 1)
        return np.clip(np.round(x / self.lsb), -half, half - 1) * self.lsb


@dataclass
class PlantConfig:
    arm_a: OpticalPath
    arm_b: OpticalPath
    bs1: BeamsplitterSpec = field(default_factory=BeamsplitterSpec)
    bs2: BeamsplitterSpec = field(default_factory=BeamsplitterSpec)
    bs3: BeamsplitterSpec = field(default_factory=lambda: BeamsplitterSpec(0.995, 25.0))
    bs4: BeamsplitterSpec = field(default_factory=lambda: BeamsplitterSpec(0.005, 25.0))
    input_power: float = 1.2e-3
    detector: DetectorModel = field(default_factory=DetectorModel)
    triangle: TriangleWave = field(default_factory=TriangleWave)
    drift_sigma: float = 0.0
    phase_sigma: float = 0.3
    shutter_open: bool = True
    shutter_stuck_open: bool = False

    @property
    def power_a(self) -> float:
        """Arm A power reaching the monitored BS2 port, relative to the input."""
        return self.bs1.coupling_ratio * self.bs3.coupling_ratio * self.bs2.coupling_ratio

    @property
    def power_b(self) -> float:
        return (1 - self.bs1.coupling_ratio) * (1 - self.bs2.coupling_ratio)


class InterferometerPlant:
    """Stateful plant advanced by a single simulation clock."""

    def __init__(self, config: PlantConfig, seed: int = 0, t: float = 0.0):
        self.config = config
        self.seed = seed
        self.t = float(t)
        self.phase_offset = 0.0
        # time the phase offset refers to; it is walked forward lazily, frame by frame
        self.phase_t = self.t
        self.dark_walk = 0.0
        self.rng = {name: named_rng(seed, name) for name in RNG_STREAMS}

    # -- state ------------------------------------------------------------

    @property
    def shutter_open(self) -> bool:
        return self.config.shutter_open

    def set_shutter(self, open_: bool) -> None:
        if self.config.shutter_stuck_open:
            return
        self.config.shutter_open = bool(open_)

    @property
    def actuators(self):
        return self.config.arm_a.actuators + self.config.arm_b.actuators

    def advance(self, dt: float) -> None:
        """Move the clock by ``dt``: polarization drift and dark drift.

        The interferometer phase is walked forward when the next frame is taken.
        """
        c = self.config
        rd = self.rng["drift"]
        drift_step(c.arm_a, rd, dt, c.drift_sigma)
        drift_step(c.arm_b, rd, dt, c.drift_sigma)
        self.dark_walk += c.detector.dark_walk_sigma * np.sqrt(dt) * self.rng["dark"].standard_normal()
        self.t += dt

    def dark_level(self, t: float | None = None) -> float:
        d = self.config.detector
        t = self.t if t is None else t
        return d.dark_level + d.dark_drift_amp * np.sin(2 * np.pi * t / d.dark_drift_period) + self.dark_walk

    # -- optics -----------------------------------------------------------

    def port_fields(self) -> tuple[np.ndarray, np.ndarray]:
        """Jones vectors of both arms at the monitored BS2 output, power-scaled."""
        c = self.config
        v_in = np.array([1.0, 0.0], dtype=complex)
        e_a = np.sqrt(c.power_a) * (c.arm_a.matrix() @ v_in)
        e_b = np.sqrt(c.power_b) * (c.arm_b.matrix() @ v_in)
        return e_a, e_b

    def arm_fields(self) -> tuple[PlaneWaveField, PlaneWaveField]:
        e_a, e_b = self.port_fields()
        return PlaneWaveField.from_jones(e_a), PlaneWaveField.from_jones(e_b)

    def true_visibility(self) -> float:
        return float(overlap_visibility_jones(*self.port_fields()))

    def _detector(self, t) -> tuple[np.ndarray, np.ndarray]:
        c = self.config
        t = np.asarray(t, float)
        drive = c.triangle.drive(t)
        if c.shutter_open:
            e_a, e_b = self.port_fields()
            inner = np.vdot(e_a, e_b)
            base = np.vdot(e_a, e_a).real + np.vdot(e_b, e_b).real
            # |E_a + E_b exp(i delta)|^2 = base + 2 |<a,b>| cos(delta + arg<a,b>)
            ch1 = c.triangle.phase_per_volt * drive
            ch1 += self.phase_offset + np.angle(inner)
            np.cos(ch1, out=ch1)
            ch1 *= 2 * abs(inner) * c.detector.v_max
            ch1 += base * c.detector.v_max + self.dark_level(float(t.min()))
        else:
            ch1 = np.full(t.shape, self.dark_level(float(t.min())))
        if c.detector.noise_rms > 0:
            ch1 += c.detector.noise_rms * self.rng["noise"].standard_normal(t.shape)
        return c.detector.quantize(ch1), c.detector.quantize(c.triangle.monitor(drive))

    def _walk_phase(self, t: float) -> None:
        dt = t - self.phase_t
        if dt > 0:
            sigma = self.config.phase_sigma
            self.phase_offset += sigma * np.sqrt(dt) * self.rng["phase"].standard_normal()
            self.phase_t = t

    def interference_sample(self, t: float) -> tuple[float, float]:
        ch1, ch2 = self._detector(np.array([t]))
        return float(ch1[0]), float(ch2[0])

    def acquire_frame(self, t_start: float | None = None, n_points: int = FRAME_POINTS,
                      sample_rate: float = SAMPLE_RATE) -> Frame:
        t0 = self.t if t_start is None else float(t_start)
        self._walk_phase(t0)
        t = t0 + np.arange(n_points) / sample_rate
        ch1, ch2 = self._detector(t)
        return Frame(ch1, ch2, t0, sample_rate)

    def next_frame(self, t_start: float | None = None) -> Frame:
        return self.acquire_frame(t_start)


def interference_sample(plant: InterferometerPlant, t: float) -> tuple[float, float]:
    return plant.interference_sample(t)


def acquire_frame(plant: InterferometerPlant, t_start: float) -> Frame:
    return plant.acquire_frame(t_start)


def set_shutter(plant: InterferometerPlant, open_: bool) -> InterferometerPlant:
    plant.set_shutter(open_)
    return plant
