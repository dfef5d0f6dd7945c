"""Trial-and-error coordinate ascent over two stretcher voltages.

Step the active stretcher while visibility improves. When it stops improving,
hand over to the other stretcher. Each stretcher starts every run in the
direction opposite to its previous run. Voltages are tracked on the DAC side
(+/-0.8 V) and mapped affinely onto each stretcher's high-voltage range; a
command that would leave that range recentres the stretcher instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

log = logging.getLogger(__name__)

# (lower visibility bound, DAC step in volts)
STEP_POLICY = ((0.0, 0.030), (0.99, 0.020), (0.995, 0.010))


class Mode(str, Enum):
    POLARIZATION_CONTROL = "polarization_control"
    HOLD = "hold"
    PHASE_CONTROL_HANDOFF = "phase_control_handoff"


@dataclass(frozen=True)
class DacMap:
    """hv = gain * dac + offset."""

    gain: float
    offset: float

    def hv(self, dac: float) -> float:
        return self.gain * dac + self.offset

    def dac(self, hv: float) -> float:
        return (hv - self.offset) / self.gain

    @classmethod
    def from_range(cls, v_min: float, v_max: float, dac_span: float = 0.8) -> "DacMap":
        return cls((v_max - v_min) / (2 * dac_span), 0.5 * (v_max + v_min))


DAC_MAPS = {1: DacMap(461.25, 403.0), 2: DacMap(370.0, 406.0)}
HV_LIMITS = {1: (34.0, 772.0), 2: (110.0, 702.0)}


def step_width(v: float, policy=STEP_POLICY) -> float:
    """DAC step for the current visibility."""
    step = policy[0][1]
    for threshold, s in policy:
        if v >= threshold:
            step = s
    return step


@dataclass(frozen=True)
class Command:
    t: float
    actuator: int
    dac: float
    hv: float
    direction: int
    step: float
    reason: str
    visibility: float
    run: int


@dataclass
class ControllerState:
    dac: dict
    active_actuator: int = 1
    direction: dict = field(default_factory=lambda: {1: 1, 2: 1})
    last_visibility: float | None = None
    step_policy: tuple = STEP_POLICY
    dac_to_hv: dict = field(default_factory=lambda: dict(DAC_MAPS))
    v_limits: dict = field(default_factory=lambda: dict(HV_LIMITS))
    reset_target: dict = field(default_factory=lambda: {1: 400.0, 2: 400.0})
    mode: Mode = Mode.POLARIZATION_CONTROL
    deadband: float = 0.0
    run: int = 0
    events: list = field(default_factory=list)

    def __post_init__(self):
        thresholds = [p[0] for p in self.step_policy]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("step policy thresholds must be strictly increasing")

    def hv(self, k: int) -> float:
        return self.dac_to_hv[k].hv(self.dac[k])

    @classmethod
    def from_hv(cls, hv: dict, **kw) -> "ControllerState":
        maps = kw.get("dac_to_hv", dict(DAC_MAPS))
        return cls(dac={k: maps[k].dac(v) for k, v in hv.items()}, **kw)


# voltage slack for float round-off at the range ends
_HV_TOL = 1e-9


class CCCController:
    def __init__(self, state: ControllerState):
        self.state = state
        self.log: list[Command] = []

    def _emit(self, cmd: Command) -> Command:
        self.log.append(cmd)
        return cmd

    def in_range(self, k: int, hv: float) -> bool:
        lo, hi = self.state.v_limits[k]
        return lo - _HV_TOL <= hv <= hi + _HV_TOL

    def iterate(self, sample) -> list[Command]:
        """Consume one visibility sample; return at most one voltage command."""
        st = self.state
        if st.mode is not Mode.POLARIZATION_CONTROL or not sample.valid:
            return []
        v = sample.v_mean
        k = st.active_actuator
        reason = "step"
        if st.last_visibility is not None and not v > st.last_visibility + st.deadband:
            # the run is over; this stretcher starts its next run the other way
            st.direction[k] = -st.direction[k]
            k = 2 if k == 1 else 1
            st.active_actuator = k
            st.run += 1
            reason = "switch"
        st.last_visibility = v
        step = step_width(v, st.step_policy)
        dac_new = st.dac[k] + st.direction[k] * step
        hv_new = st.dac_to_hv[k].hv(dac_new)
        if not self.in_range(k, hv_new):
            return [self.handle_limit(k, hv_new, sample.t, v)]
        lo, hi = st.v_limits[k]
        hv_new = min(max(hv_new, lo), hi)
        st.dac[k] = dac_new
        return [self._emit(Command(sample.t, k, dac_new, hv_new, st.direction[k], step,
                                   reason, v, st.run))]

    def handle_limit(self, k: int, hv_requested: float, t: float = 0.0,
                     v: float = float("nan")) -> Command | None:
        """Recentre stretcher ``k`` if ``hv_requested`` is outside its range."""
        st = self.state
        if self.in_range(k, hv_requested):
            return None
        target = st.reset_target[k]
        st.dac[k] = st.dac_to_hv[k].dac(target)
        # the old comparison baseline no longer applies
        st.last_visibility = None
        st.events.append(("reset", t, k, hv_requested))
        log.info("stretcher %d requested %.1f V; reset to %.1f V", k, hv_requested, target)
        return self._emit(Command(t, k, st.dac[k], target, st.direction[k], 0.0, "reset", v, st.run))

    def hold_and_handoff(self, t: float = 0.0) -> Command | None:
        """Freeze both stretchers and signal the phase-control stage (once)."""
        st = self.state
        if st.mode is not Mode.POLARIZATION_CONTROL:
            return None
        st.mode = Mode.HOLD
        st.events.append(("handoff", t))
        k = st.active_actuator
        return self._emit(Command(t, k, st.dac[k], st.hv(k), st.direction[k], 0.0, "hold",
                                  float("nan"), st.run))

    def resume(self) -> None:
        st = self.state
        st.mode = Mode.POLARIZATION_CONTROL
        st.last_visibility = None
