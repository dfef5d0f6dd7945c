"""Jones-matrix propagation through PM-fiber chains with misaligned joints.

An :class:`OpticalPath` alternates joints and segments::

    joint, segment, joint, segment, ..., segment[, joint]

A trailing joint expresses the output in the frame of whatever follows the last
fiber (a polarimeter or a beamsplitter port). Every element is lossless.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .polarization import PlaneWaveField, StokesVector, stokes_from_jones

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class ConnectorJoint:
    """Slow-axis misalignment ``theta`` (radians) between adjacent fibers."""

    theta: float

    def __post_init__(self):
        if not np.isfinite(self.theta) or abs(self.theta) > np.pi / 2:
            raise ValueError(f"joint angle must satisfy |theta| <= pi/2, got {self.theta}")


@dataclass
class StretcherActuator:
    """Piezo fiber stretcher with a linear voltage -> relative-phase response."""

    v_min: float
    v_max: float
    v_center: float = 400.0
    v_per_circle: float = 600.0
    v_now: float | None = None
    name: str = "stretcher"

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if not self.v_per_circle > 0:
            raise ValueError("v_per_circle must be positive")
        if self.v_now is None:
            self.v_now = float(np.clip(self.v_center, self.v_min, self.v_max))
        self._check(self.v_now)

    def _check(self, v):
        if not self.v_min <= v <= self.v_max:
            raise ValueError(f"{self.name}: {v:.3f} V outside [{self.v_min}, {self.v_max}] V")

    def set_voltage(self, v: float) -> None:
        self._check(v)
        self.v_now = float(v)


def actuator_gamma(a: StretcherActuator) -> float:
    """Relative phase added by the stretcher at its present voltage."""
    a._check(a.v_now)
    return TWO_PI * (a.v_now - a.v_center) / a.v_per_circle


@dataclass
class FiberSegment:
    gamma_static: float = 0.0
    gamma_drift: float = 0.0
    actuator: StretcherActuator | None = None
    # deterministic drift in rad/s, on top of the random walk
    drift_rate: float = 0.0

    @property
    def total_gamma(self) -> float:
        g = self.gamma_static + self.gamma_drift
        if self.actuator is not None:
            g += actuator_gamma(self.actuator)
        return g


def joint_matrix(j: ConnectorJoint) -> np.ndarray:
    c, s = np.cos(j.theta), np.sin(j.theta)
    return np.array([[c, s], [-s, c]], dtype=complex)


def segment_matrix(s: FiberSegment | float) -> np.ndarray:
    """diag(exp(+i g/2), exp(-i g/2)); accepts a segment or a bare phase."""
    g = s.total_gamma if isinstance(s, FiberSegment) else float(s)
    return np.diag([np.exp(0.5j * g), np.exp(-0.5j * g)])


class OpticalPath:
    """Ordered chain of joints and fiber segments."""

    def __init__(self, elements):
        self.elements = list(elements)
        _validate(self.elements)

    @classmethod
    def from_angles(cls, thetas, gammas, actuators=None, output_theta=None) -> "OpticalPath":
        """Build ``J(t0) S(g0) J(t1) S(g1) ...``.

        ``actuators`` maps a segment index to a :class:`StretcherActuator`.
        ``output_theta`` appends a final frame joint when not ``None``.
        """
        if len(thetas) != len(gammas):
            raise ValueError("need one joint angle per segment")
        actuators = actuators or {}
        elements = []
        for k, (t, g) in enumerate(zip(thetas, gammas)):
            elements.append(ConnectorJoint(float(t)))
            elements.append(FiberSegment(float(g), actuator=actuators.get(k)))
        if output_theta is not None:
            elements.append(ConnectorJoint(float(output_theta)))
        return cls(elements)

    @property
    def segments(self) -> list[FiberSegment]:
        return [e for e in self.elements if isinstance(e, FiberSegment)]

    @property
    def joints(self) -> list[ConnectorJoint]:
        return [e for e in self.elements if isinstance(e, ConnectorJoint)]

    @property
    def actuators(self) -> list[StretcherActuator]:
        return [s.actuator for s in self.segments if s.actuator is not None]

    def matrix(self) -> np.ndarray:
        u = np.eye(2, dtype=complex)
        for e in self.elements:
            m = joint_matrix(e) if isinstance(e, ConnectorJoint) else segment_matrix(e)
            u = m @ u
        return u

    def copy(self) -> "OpticalPath":
        return copy.deepcopy(self)


def _validate(elements):
    if not elements:
        raise ValueError("empty optical path")
    if not isinstance(elements[0], ConnectorJoint):
        raise ValueError("path must start with a joint")
    for k, e in enumerate(elements):
        want = ConnectorJoint if k % 2 == 0 else FiberSegment
        if not isinstance(e, want):
            raise ValueError(f"element {k} is {type(e).__name__}, expected {want.__name__}")
    if len(elements) < 2:
        raise ValueError("path needs at least one fiber segment")


V_INPUT = PlaneWaveField(1.0, 0.0)


def propagate(path: OpticalPath, field_in: PlaneWaveField = V_INPUT) -> PlaneWaveField:
    if not isinstance(path, OpticalPath):
        raise TypeError("propagate expects an OpticalPath")
    return PlaneWaveField.from_jones(path.matrix() @ field_in.jones)


def output_stokes(path: OpticalPath, field_in: PlaneWaveField = V_INPUT) -> StokesVector:
    return StokesVector.from_array(stokes_from_jones(path.matrix() @ field_in.jones))


def sweep_trajectory(path: OpticalPath, actuator: StretcherActuator, n_points: int,
                     field_in: PlaneWaveField = V_INPUT) -> list[StokesVector]:
    """Output states for ``n_points`` voltages evenly spread over the actuator range.

    The actuator voltage is restored afterwards.
    """
    if not any(a is actuator for a in path.actuators):
        raise ValueError(f"actuator {actuator.name!r} is not part of this path")
    if n_points < 8:
        raise ValueError("n_points must be >= 8")
    v_saved = actuator.v_now
    out = []
    try:
        for v in np.linspace(actuator.v_min, actuator.v_max, n_points):
            actuator.set_voltage(v)
            out.append(output_stokes(path, field_in))
    finally:
        actuator.set_voltage(v_saved)
    return out


def drift_step(path: OpticalPath, rng: np.random.Generator, dt: float, sigma: float) -> OpticalPath:
    """Advance every segment's drift by a Gaussian random walk step (in place)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    scale = sigma * np.sqrt(dt)
    for seg in path.segments:
        seg.gamma_drift += seg.drift_rate * dt + scale * rng.standard_normal()
    return path


# -- circles on the sphere -------------------------------------------------

@dataclass
class CircleFit:
    """Least-squares circle through points on the Poincare sphere.

    ``center`` is the pole of the circle (unit axis scaled by s0); the circle
    lies in the plane ``normal . p = offset`` with in-plane center
    ``plane_center`` and Euclidean ``radius``.
    """

    center: np.ndarray
    radius: float
    rms_residual: float
    normal: np.ndarray
    plane_center: np.ndarray
    s0: float = 1.0
    degenerate: bool = False
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def offset(self) -> float:
        return float(self.normal @ self.plane_center)


def _as_points(points) -> tuple[np.ndarray, float]:
    if len(points) and isinstance(points[0], StokesVector):
        arr = np.array([p.as_array() for p in points])
    else:
        arr = np.asarray(points, float)
    if arr.shape[-1] == 4:
        s0 = arr[:, 0]
        if np.ptp(s0) > 1e-9 * np.max(s0):
            raise ValueError("circle_fit needs points with equal s0")
        return arr[:, 1:], float(s0[0])
    return arr, float(np.mean(np.linalg.norm(arr, axis=1)))


def circle_fit(points, degenerate_tol: float = 1e-9) -> CircleFit:
    p, s0 = _as_points(points)
    if len(p) < 8:
        raise ValueError("circle_fit needs at least 8 points")
    mean = p.mean(axis=0)
    d = p - mean
    spread = np.max(np.linalg.norm(d, axis=1))
    if spread <= degenerate_tol * max(s0, 1e-300):
        n = mean / np.linalg.norm(mean)
        res = np.linalg.norm(d, axis=1)
        return CircleFit(mean.copy(), 0.0, float(np.sqrt(np.mean(res**2))), n, mean.copy(),
                         s0, True, res)
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    e1, e2, n = vt[0], vt[1], vt[2]
    u, w = d @ e1, d @ e2
    # algebraic (Kasa) fit in the plane
    a = np.column_stack([2 * u, 2 * w, np.ones_like(u)])
    (cu, cw, k), *_ = np.linalg.lstsq(a, u * u + w * w, rcond=None)
    r = float(np.sqrt(max(k + cu * cu + cw * cw, 0.0)))
    pc = mean + cu * e1 + cw * e2
    if n @ pc < 0:
        n = -n
    h = d @ n
    radial = np.hypot(u - cu, w - cw) - r
    res = np.hypot(h, radial)
    return CircleFit(n * s0, r, float(np.sqrt(np.mean(res**2))), n, pc, s0, False, res)


def circle_intersections(a: CircleFit, b: CircleFit, tol: float = 1e-9) -> np.ndarray:
    """Crosspoints of two fitted circles on the sphere of radius ``a.s0``.

    Returns an (k, 3) array with k in {0, 1, 2}. Tangency within ``tol`` (in
    units of s0) counts as a single crosspoint.
    """
    s0 = a.s0
    line = np.cross(a.normal, b.normal)
    ln = np.linalg.norm(line)
    if ln < 1e-12:
        return np.empty((0, 3))
    line /= ln
    m = np.vstack([a.normal, b.normal])
    p0, *_ = np.linalg.lstsq(m, np.array([a.offset, b.offset]), rcond=None)
    # |p0 + t line|^2 = s0^2, with p0 orthogonal to line (minimum-norm solution)
    disc = s0 * s0 - p0 @ p0
    if disc < -2 * tol * s0:
        return np.empty((0, 3))
    if disc <= 2 * tol * s0:
        return (p0 * s0 / np.linalg.norm(p0))[None, :]
    t = np.sqrt(disc)
    return np.vstack([p0 + t * line, p0 - t * line])
