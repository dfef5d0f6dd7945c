"""Polarization states: plane-wave fields, Stokes vectors and Poincare geometry.

Conventions used throughout the package:

* The x component is the slow axis of the fiber. Slow-axis linear light is the
  point V on the Poincare sphere, ``(s1, s2, s3) = (s0, 0, 0)``.
* A field component ``a cos(kz - wt - g)`` is carried as the phasor
  ``a * exp(-1j * g)``. The relative phase is ``gamma_y - gamma_x``.
* ``s3 > 0`` is right-handed circular light.

Only the relative phase and the amplitudes enter any computed quantity; the
wave number, carrier frequency, position and time are conventions and are not
stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PlaneWaveField:
    """Two-component transverse field: amplitudes and (unwrapped) phases."""

    a_x: float
    a_y: float
    gamma_x: float = 0.0
    gamma_y: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.a_x) and np.isfinite(self.a_y)):
            raise ValueError("field amplitudes must be finite")
        if self.a_x < 0 or self.a_y < 0:
            raise ValueError(f"amplitudes must be >= 0, got ({self.a_x}, {self.a_y})")

    @property
    def gamma(self) -> float:
        """Relative phase gamma_y - gamma_x."""
        return self.gamma_y - self.gamma_x

    @property
    def power(self) -> float:
        return self.a_x**2 + self.a_y**2

    @property
    def jones(self) -> np.ndarray:
        return np.array([self.a_x * np.exp(-1j * self.gamma_x),
                         self.a_y * np.exp(-1j * self.gamma_y)])

    @classmethod
    def from_jones(cls, vec) -> "PlaneWaveField":
        vec = np.asarray(vec, dtype=complex)
        if vec.shape != (2,):
            raise ValueError("Jones vector must have shape (2,)")
        return cls(float(abs(vec[0])), float(abs(vec[1])),
                   float(-np.angle(vec[0])), float(-np.angle(vec[1])))

    @classmethod
    def linear(cls, angle: float, power: float = 1.0) -> "PlaneWaveField":
        """Linear polarization at ``angle`` from the slow axis."""
        a = np.sqrt(power)
        c, s = np.cos(angle), np.sin(angle)
        # keep amplitudes non-negative; a sign flip is a pi phase
        return cls(a * abs(c), a * abs(s), 0.0 if c >= 0 else np.pi, 0.0 if s >= 0 else np.pi)


@dataclass(frozen=True)
class StokesVector:
    s0: float
    s1: float
    s2: float
    s3: float

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])

    def as_array(self) -> np.ndarray:
        return np.array([self.s0, self.s1, self.s2, self.s3])

    def normalized(self) -> np.ndarray:
        """Unit (s1, s2, s3) direction."""
        if not self.s0 > 0:
            raise ValueError("Stokes vector with s0 <= 0 has no direction")
        return self.vector / self.s0

    @classmethod
    def from_array(cls, arr) -> "StokesVector":
        s0, s1, s2, s3 = (float(x) for x in arr)
        return cls(s0, s1, s2, s3)


@dataclass(frozen=True)
class EllipseAngles:
    """Azimuth psi in [0, pi) and ellipticity chi in [-pi/4, pi/4]."""

    psi: float
    chi: float


V_POINT = StokesVector(1.0, 1.0, 0.0, 0.0)
H_POINT = StokesVector(1.0, -1.0, 0.0, 0.0)

# relative size of the equatorial projection below which psi is undefined
_POLE_TOL = 1e-12


def stokes_array(a_x, a_y, gamma_x, gamma_y) -> np.ndarray:
    """Vectorized field -> Stokes conversion; returns shape (..., 4)."""
    a_x, a_y = np.asarray(a_x, float), np.asarray(a_y, float)
    g = np.asarray(gamma_y, float) - np.asarray(gamma_x, float)
    cross = 2.0 * a_x * a_y
    return np.stack(np.broadcast_arrays(a_x**2 + a_y**2, a_x**2 - a_y**2,
                                        cross * np.cos(g), cross * np.sin(g)), axis=-1)


def stokes_from_jones(vec) -> np.ndarray:
    """Stokes array (..., 4) from Jones vectors (..., 2) in the phasor convention."""
    vec = np.asarray(vec, dtype=complex)
    ex, ey = vec[..., 0], vec[..., 1]
    px, py = (ex * ex.conj()).real, (ey * ey.conj()).real
    c = ex * ey.conj()
    return np.stack([px + py, px - py, 2 * c.real, 2 * c.imag], axis=-1)


def stokes_from_field(f: PlaneWaveField) -> StokesVector:
    if f.a_x == 0 and f.a_y == 0:
        raise ValueError("all-zero field has no polarization")
    return StokesVector.from_array(stokes_array(f.a_x, f.a_y, f.gamma_x, f.gamma_y))


def stokes_angles_array(psi, chi, s0=1.0) -> np.ndarray:
    psi, chi, s0 = (np.asarray(x, float) for x in (psi, chi, s0))
    c2 = np.cos(2 * chi)
    return np.stack(np.broadcast_arrays(s0, s0 * c2 * np.cos(2 * psi),
                                        s0 * c2 * np.sin(2 * psi), s0 * np.sin(2 * chi)), axis=-1)


def stokes_from_angles(psi_chi: EllipseAngles, s0: float = 1.0) -> StokesVector:
    if not s0 > 0:
        raise ValueError("s0 must be positive")
    return StokesVector.from_array(stokes_angles_array(psi_chi.psi, psi_chi.chi, s0))


def angles_array(stokes) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inverse of :func:`stokes_angles_array`; returns (psi, chi)."""
    s = np.asarray(stokes, float)
    s0, s1, s2, s3 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    if np.any(~(s0 > 0)):
        raise ValueError("s0 must be positive")
    planar = np.hypot(s1, s2)
    chi = 0.5 * np.arctan2(s3, planar)
    psi = np.mod(0.5 * np.arctan2(s2, s1), np.pi)
    # mod can round up to exactly pi
    psi = np.where((psi >= np.pi) | (planar <= _POLE_TOL * s0), 0.0, psi)
    return psi, chi


def angles_from_stokes(s: StokesVector) -> EllipseAngles:
    psi, chi = angles_array(s.as_array())
    return EllipseAngles(float(psi), float(chi))


def pm_output_stokes(theta: float, gamma: float, a: float = 1.0) -> StokesVector:
    """Stokes vector leaving a PM fiber when linear light enters at ``theta``
    from the slow axis and the fiber imposes relative phase ``gamma``.

    Sweeping ``gamma`` traces a circle of radius ``a**2 * |sin 2 theta|`` about
    the s1 axis.
    """
    if not a > 0:
        raise ValueError("amplitude must be positive")
    p = a * a
    s2t = np.sin(2 * theta)
    return StokesVector(p, p * np.cos(2 * theta), p * s2t * np.cos(gamma), p * s2t * np.sin(gamma))


def sphere_angle(s_a: StokesVector, s_b: StokesVector) -> float:
    """Great-circle angle in [0, pi] between two states on the Poincare sphere."""
    u, v = s_a.normalized(), s_b.normalized()
    return float(np.arctan2(np.linalg.norm(np.cross(u, v)), np.dot(u, v)))


def overlap_visibility_jones(e_a, e_b) -> np.ndarray:
    """Fringe visibility for interfering Jones vectors (vectorized over ``...``).

    Unnormalized vectors carry the detected powers, so unequal powers pick up the
    ``2 sqrt(Pa Pb) / (Pa + Pb)`` factor automatically.
    """
    e_a = np.asarray(e_a, dtype=complex)
    e_b = np.asarray(e_b, dtype=complex)
    p_a = np.sum(np.abs(e_a) ** 2, axis=-1)
    p_b = np.sum(np.abs(e_b) ** 2, axis=-1)
    if np.any(p_a <= 0) or np.any(p_b <= 0):
        raise ValueError("zero-power input")
    inner = np.sum(e_a.conj() * e_b, axis=-1)
    # Cauchy-Schwarz bounds this by 1; trim rounding overshoot
    return np.minimum(2 * np.abs(inner) / (p_a + p_b), 1.0)


def overlap_visibility(f_a: PlaneWaveField, f_b: PlaneWaveField) -> float:
    return float(overlap_visibility_jones(f_a.jones, f_b.jones))
