"""Physical constants, materials, incident-wave specifications and coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS0 = 8.8541878128e-12
MU0 = 4.0e-7 * math.pi


@dataclass(frozen=True)
class PhysicalConstants:
    """Vacuum constants.

    ``c`` may be overridden (the transient benchmarks use ``c = 3e8``); in that
    case ``mu0`` is kept and ``eps0`` is recomputed so that ``c = 1/sqrt(eps0 mu0)``
    still holds.
    """

    eps0: float = EPS0
    mu0: float = MU0

    @property
    def c(self) -> float:
        return 1.0 / math.sqrt(self.eps0 * self.mu0)

    @classmethod
    def with_speed_of_light(cls, c: float) -> "PhysicalConstants":
        return cls(eps0=1.0 / (MU0 * c * c), mu0=MU0)


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class Material:
    eps_r: float = 1.0
    mu_r: float = 1.0

    def __post_init__(self):
        if not (self.eps_r > 0 and self.mu_r > 0):
            raise ValueError(f"material parameters must be positive, got {self}")

    def eps(self, const: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
        return self.eps_r * const.eps0

    def mu(self, const: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
        return self.mu_r * const.mu0

    def wavenumber(self, k0: float) -> float:
        return k0 * math.sqrt(self.eps_r * self.mu_r)


VACUUM = Material()


def _unit(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if v.shape != (3,) or n == 0.0:
        raise ValueError(f"{name} must be a non-zero 3-vector")
    return v / n


@dataclass(frozen=True)
class HarmonicWaveSpec:
    """Plane wave ``E0 exp(-i k0 k_hat.x) E_hat`` (time convention ``exp(+i omega t)``)."""

    k0: float
    E0: float = 1.0
    propagation_axis: tuple = (0.0, 0.0, 1.0)
    polarization: tuple = (1.0, 0.0, 0.0)
    constants: PhysicalConstants = field(default=DEFAULT_CONSTANTS, compare=False)

    def __post_init__(self):
        k = _unit(self.propagation_axis, "propagation_axis")
        p = _unit(self.polarization, "polarization")
        if abs(k @ p) > 1e-12:
            raise ValueError("polarization must be orthogonal to the propagation axis")
        object.__setattr__(self, "propagation_axis", tuple(k))
        object.__setattr__(self, "polarization", tuple(p))

    @property
    def omega(self) -> float:
        return self.k0 * self.constants.c

    def k(self, material: Material) -> float:
        return material.wavenumber(self.k0)


@dataclass(frozen=True)
class NeumannPulseSpec:
    """Derivative-of-Gaussian plane pulse."""

    t0: float
    r0: tuple
    tau: float
    k_hat: tuple = (0.0, 0.0, 1.0)
    E_hat: tuple = (1.0, 0.0, 0.0)
    constants: PhysicalConstants = field(default=DEFAULT_CONSTANTS, compare=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("pulse width tau must be positive")
        k = _unit(self.k_hat, "k_hat")
        e = _unit(self.E_hat, "E_hat")
        if abs(k @ e) > 1e-12:
            raise ValueError("E_hat must be orthogonal to k_hat")
        object.__setattr__(self, "k_hat", tuple(k))
        object.__setattr__(self, "E_hat", tuple(e))
        object.__setattr__(self, "r0", tuple(np.asarray(self.r0, dtype=float)))

    def retarded_time(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        proj = (x - np.asarray(self.r0)) @ np.asarray(self.k_hat)
        return t - self.t0 - proj / self.constants.c


@dataclass(frozen=True)
class SphericalPoint:
    r: float
    theta: float
    phi: float

    def to_cartesian(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([self.r * st * math.cos(self.phi),
                         self.r * st * math.sin(self.phi),
                         self.r * math.cos(self.theta)])


def plane_wave_field(spec: HarmonicWaveSpec, x) -> np.ndarray:
    """Incident plane wave at point(s) ``x`` of shape ``(..., 3)``."""
    x = np.asarray(x, dtype=float)
    phase = np.exp(-1j * spec.k0 * (x @ np.asarray(spec.propagation_axis)))
    return spec.E0 * phase[..., None] * np.asarray(spec.polarization)


def neumann_pulse(spec: NeumannPulseSpec, t, x):
    """Return ``(E_inc, dE_inc/dt)`` of the pulse at time ``t`` and points ``x``.

    With ``u = t - t0 - k_hat.(x - r0)/c`` the waveform is ``2 u exp(-u^2/tau^2)``.
    """
    u = np.asarray(spec.retarded_time(t, x))
    g = np.exp(-(u / spec.tau) ** 2)
    e_hat = np.asarray(spec.E_hat)
    E = (2.0 * u * g)[..., None] * e_hat
    dE = (2.0 * (1.0 - 2.0 * u**2 / spec.tau**2) * g)[..., None] * e_hat
    return E, dE


def neumann_pulse_d2(spec: NeumannPulseSpec, t, x) -> np.ndarray:
    """Second time derivative of the pulse field."""
    u = np.asarray(spec.retarded_time(t, x))
    s = spec.tau**2
    g = np.exp(-u**2 / s)
    d2 = (4.0 * u * g / s) * (2.0 * u**2 / s - 3.0)
    return d2[..., None] * np.asarray(spec.E_hat)


def neumann_pulse_integral(spec: NeumannPulseSpec, t, x) -> np.ndarray:
    """Time antiderivative of the pulse vanishing at ``t -> -inf``: ``-tau^2 exp(-u^2/tau^2)``."""
    u = np.asarray(spec.retarded_time(t, x))
    return (-spec.tau**2 * np.exp(-(u / spec.tau) ** 2))[..., None] * np.asarray(spec.E_hat)


def to_spherical(x) -> SphericalPoint:
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("to_spherical: zero vector has no direction")
    theta = math.acos(max(-1.0, min(1.0, x[2] / r)))
    if math.hypot(x[0], x[1]) == 0.0:
        phi = 0.0
    else:
        phi = math.atan2(x[1], x[0]) % (2.0 * math.pi)
    return SphericalPoint(r, theta, phi)


def spherical_basis(theta, phi):
    """Unit vectors ``(r_hat, theta_hat, phi_hat)`` as arrays of shape ``(..., 3)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    r_hat = np.stack([st * cp, st * sp, ct], axis=-1)
    t_hat = np.stack([ct * cp, ct * sp, -st], axis=-1)
    p_hat = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return r_hat, t_hat, p_hat
