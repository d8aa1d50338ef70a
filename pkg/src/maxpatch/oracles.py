"""Closed-form reference fields: Mie (PEC sphere), Stratton (dielectric sphere), cavity.

Series follow the classical vector spherical harmonic expansion written for an
``exp(-i omega t)`` time factor and an incident wave ``exp(+ikz) x_hat``; because the
solver uses ``exp(+i omega t)`` with ``exp(-ikz) x_hat``, results are returned as
complex conjugates of that expansion (parameters are real, so this is exact).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import DEFAULT_CONSTANTS, VACUUM, Material, PhysicalConstants, SphericalPoint, spherical_basis


class SeriesError(RuntimeError):
    pass


@dataclass(frozen=True)
class SeriesControl:
    """Truncation control; ``max_terms=None`` means ``ceil(k0 a) + 20``."""

    max_terms: Optional[int] = None
    tail_tolerance: float = 1e-12

    def cap(self, x: float) -> int:
        return int(self.max_terms) if self.max_terms is not None else int(math.ceil(x)) + 20


# --------------------------------------------------------------- Bessel functions

def spherical_jn(nmax: int, x: float) -> np.ndarray:
    """``j_0..j_nmax`` at real ``x > 0`` by normalised downward (Miller) recurrence."""
    if x <= 0.0:
        raise ValueError("spherical_jn needs x > 0")
    start = int(nmax + x + 20 + 4 * x ** (1.0 / 3.0))
    j = np.zeros(start + 2)
    j[start + 1], j[start] = 0.0, 1e-300
    for n in range(start, 0, -1):
        j[n - 1] = (2 * n + 1) / x * j[n] - j[n + 1]
        if abs(j[n - 1]) > 1e250:
            j[n - 1:] *= 1e-250
    j0 = math.sin(x) / x
    j1 = math.sin(x) / x**2 - math.cos(x) / x
    scale = j0 / j[0] if abs(j0) > abs(j1) else j1 / j[1]
    return j[: nmax + 1] * scale


def spherical_yn(nmax: int, x: float) -> np.ndarray:
    """``y_0..y_nmax`` by upward recurrence (stable for the growing solution)."""
    if x <= 0.0:
        raise ValueError("spherical_yn needs x > 0")
    y = np.zeros(max(nmax + 1, 2))
    y[0] = -math.cos(x) / x
    y[1] = -math.cos(x) / x**2 - math.sin(x) / x
    for n in range(1, nmax):
        y[n + 1] = (2 * n + 1) / x * y[n] - y[n - 1]
    return y[: nmax + 1]


def _bessel(nmax, x, check=True):
    """``(j, y, h1, dj, dh)`` with ``d`` the Riccati derivatives ``[x z_n(x)]'``."""
    j = spherical_jn(nmax + 1, x)
    y = spherical_yn(nmax + 1, x)
    if check:
        n = np.arange(1, nmax + 2)
        w = (j[n] * y[n - 1] - j[n - 1] * y[n]) * x * x
        if np.any(np.abs(w - 1.0) > 1e-8):
            raise SeriesError(f"Bessel Wronskian check failed at x={x} (max err {np.abs(w - 1).max():.2e})")
    h = j + 1j * y
    n = np.arange(1, nmax + 1)
    dj = np.zeros(nmax + 1)
    dh = np.zeros(nmax + 1, dtype=complex)
    dj[1:] = x * j[n - 1] - n * j[n]
    dh[1:] = x * h[n - 1] - n * h[n]
    return j[: nmax + 1], y[: nmax + 1], h[: nmax + 1], dj, dh


def _angular(nmax, theta):
    mu = math.cos(theta)
    pi = np.zeros(nmax + 1)
    tau = np.zeros(nmax + 1)
    if nmax >= 1:
        pi[1] = 1.0
    for n in range(2, nmax + 1):
        pi[n] = (2 * n - 1) / (n - 1) * mu * pi[n - 1] - n / (n - 1) * pi[n - 2]
    for n in range(1, nmax + 1):
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi, tau


# ------------------------------------------------------------ expansion engine

def _mie_coefficients(x, m, mu_ratio, nmax, pec):
    """Scattering ``a_n, b_n`` and interior ``c_n, d_n`` (``mu_ratio = mu1/mu``); index 0 unused."""
    j, _, h, dj, dh = (v[1:] for v in _bessel(nmax, x))
    out = [np.zeros(nmax + 1, dtype=complex) for _ in range(4)]
    if pec:
        out[0][1:] = dj / dh
        out[1][1:] = j / h
        return out[0], out[1], None, None
    jm, _, _, djm, _ = (v[1:] for v in _bessel(nmax, m * x))
    mu, mu1 = 1.0, mu_ratio
    den_a = mu * m * m * jm * dh - mu1 * h * djm
    den_b = mu1 * jm * dh - mu * h * djm
    out[0][1:] = (mu * m * m * jm * dj - mu1 * j * djm) / den_a
    out[1][1:] = (mu1 * jm * dj - mu * j * djm) / den_b
    out[2][1:] = (mu1 * j * dh - mu1 * h * dj) / den_b
    out[3][1:] = (mu1 * m * j * dh - mu1 * m * h * dj) / den_a
    return tuple(out)


def _vsh_terms(nmax, rho, theta, phi, z, dz):
    """Components ``(r, theta, phi)`` of M_o1n, M_e1n, N_o1n, N_e1n for n = 1..nmax."""
    pi, tau = _angular(nmax, theta)
    n = np.arange(nmax + 1)
    st, sp_, cp = math.sin(theta), math.sin(phi), math.cos(phi)
    zero = np.zeros(nmax + 1)
    Mo = np.array([zero, cp * pi * z, -sp_ * tau * z])
    Me = np.array([zero, -sp_ * pi * z, -cp * tau * z])
    Nr = n * (n + 1) * st * pi * z / rho
    No = np.array([sp_ * Nr, sp_ * tau * dz / rho, cp * pi * dz / rho])
    Ne = np.array([cp * Nr, cp * tau * dz / rho, -sp_ * pi * dz / rho])
    return Mo, Me, No, Ne


def _sum_series(terms, ctrl: SeriesControl, nmax):
    """Sum columns 1..nmax of ``terms`` (3, n) with two-consecutive-small-terms stopping."""
    total = np.zeros(3, dtype=complex)
    small = 0
    for n in range(1, nmax + 1):
        t = terms[:, n]
        total = total + t
        mag = np.linalg.norm(total)
        if np.linalg.norm(t) <= ctrl.tail_tolerance * max(mag, 1e-300):
            small += 1
            if small >= 2:
                return total
        else:
            small = 0
    # the cap is reached; accept only if the last term is negligible
    if np.linalg.norm(terms[:, nmax]) > 1e3 * ctrl.tail_tolerance * max(np.linalg.norm(total), 1e-300):
        raise SeriesError(f"series not converged within {nmax} terms")
    return total


def _to_cartesian(v_sph, theta, phi):
    rh, th, ph = spherical_basis(theta, phi)
    return v_sph[0] * rh + v_sph[1] * th + v_sph[2] * ph


def _point(x):
    if isinstance(x, SphericalPoint):
        return x
    from .model import to_spherical
    return to_spherical(x)


def _scatter_fields(k0, a, E0, x, ctrl, m=None, mu_ratio=1.0, want_h=False, const=DEFAULT_CONSTANTS):
    p = _point(x)
    pec = m is None
    ka = k0 * a
    nmax = max(ctrl.cap(ka * (1.0 if pec else m)), 2)
    r = max(p.r, 1e-12 * a)
    n = np.arange(nmax + 1)
    En = np.zeros(nmax + 1, dtype=complex)
    En[1:] = (1j ** n[1:]) * E0 * (2 * n[1:] + 1) / (n[1:] * (n[1:] + 1))
    a_n, b_n, c_n, d_n = _mie_coefficients(ka, m or 1.0, mu_ratio, nmax, pec)
    omega = k0 * const.c
    if pec or r >= a:                          # PEC has no interior field
        rho = k0 * r
        _, _, h, _, dh = _bessel(nmax, rho, check=False)
        Mo, Me, No, Ne = _vsh_terms(nmax, rho, p.theta, p.phi, h, dh)
        E = _sum_series(En * (1j * a_n * Ne - b_n * Mo), ctrl, nmax)
        H = None
        if want_h:
            H = (k0 / (omega * const.mu0)) * _sum_series(En * (1j * b_n * No + a_n * Me), ctrl, nmax)
    else:
        k1 = k0 * m
        rho = k1 * r
        j, _, _, dj, _ = _bessel(nmax, rho, check=False)
        Mo, Me, No, Ne = _vsh_terms(nmax, rho, p.theta, p.phi, j, dj)
        E = _sum_series(En * (c_n * Mo - 1j * d_n * Ne), ctrl, nmax)
        H = None
        if want_h:
            mu1 = mu_ratio * const.mu0
            H = (-k1 / (omega * mu1)) * _sum_series(En * (d_n * Me + 1j * c_n * No), ctrl, nmax)
    E = np.conj(_to_cartesian(E, p.theta, p.phi))
    if want_h:
        return E, np.conj(_to_cartesian(H, p.theta, p.phi))
    return E


def mie_pec_sphere(k0: float, a: float, E0: float, x, ctrl: SeriesControl = SeriesControl(),
                   with_h: bool = False):
    """Scattered field of a PEC sphere for ``E0 exp(-ik0 z) x_hat`` at ``r >= a``."""
    p = _point(x)
    if p.r < a * (1 - 1e-12):
        raise ValueError("mie_pec_sphere: point inside the sphere")
    return _scatter_fields(k0, a, E0, p, ctrl, want_h=with_h)


def stratton_dielectric_sphere(k0: float, a: float, eps1_r: float, mu1_r: float, E0: float, x,
                               ctrl: SeriesControl = SeriesControl(), with_h: bool = False):
    """Dielectric sphere: interior total field for ``r < a``, scattered field for ``r >= a``."""
    if not (eps1_r > 0 and mu1_r > 0):
        raise ValueError("material parameters must be positive")
    m = math.sqrt(eps1_r * mu1_r)
    return _scatter_fields(k0, a, E0, x, ctrl, m=m, mu_ratio=mu1_r, want_h=with_h)


def incident_expansion(k0, E0, x, nmax=40):
    """Partial-wave sum of the incident wave, for self-checks of the expansion."""
    p = _point(x)
    n = np.arange(nmax + 1)
    En = np.zeros(nmax + 1, dtype=complex)
    En[1:] = (1j ** n[1:]) * E0 * (2 * n[1:] + 1) / (n[1:] * (n[1:] + 1))
    rho = k0 * p.r
    j, _, _, dj, _ = _bessel(nmax, rho, check=False)
    Mo, Me, No, Ne = _vsh_terms(nmax, rho, p.theta, p.phi, j, dj)
    E = (En * (Mo - 1j * Ne))[:, 1:].sum(axis=1)
    return np.conj(_to_cartesian(E, p.theta, p.phi))


# ------------------------------------------------------------------- cavity

@dataclass
class CavityFields:
    E: np.ndarray
    H: np.ndarray
    A: np.ndarray
    j: np.ndarray
    psi: np.ndarray
    dj_dt: np.ndarray


def cavity_fields(x, t, omega: float, material: Material = VACUUM,
                  const: PhysicalConstants = DEFAULT_CONSTANTS) -> CavityFields:
    """Closed-form standing wave in the ``pi x pi x pi`` conducting cube (vectorised in ``x``)."""
    x = np.asarray(x, dtype=float)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    sx, cx, sy, cy, sz, cz = np.sin(X), np.cos(X), np.sin(Y), np.cos(Y), np.sin(Z), np.cos(Z)
    cw, sw = math.cos(omega * t), math.sin(omega * t)
    eps, mu = material.eps(const), material.mu(const)
    f1 = cx * sy * sz
    f2 = sx * cy * sz
    f3 = sx * sy * cz
    E = np.stack([2 * f1 * (cw - sw), f2 * (sw - cw), f3 * (sw - cw)], axis=-1)
    H = np.stack([np.zeros_like(X), -3 / (mu * omega) * cx * sy * cz * (cw + sw),
                  3 / (mu * omega) * cx * cy * sz * (cw + sw)], axis=-1)
    A = np.stack([-2 / omega * f1 * (sw + cw), f2 / omega * (cw + sw), f3 / omega * (cw + sw)], axis=-1)
    g = eps * mu * omega**2
    jsp = np.stack([(2 * g - 6) / (mu * omega) * f1, (3 - g) / (mu * omega) * f2,
                    (3 - g) / (mu * omega) * f3], axis=-1)
    j = jsp * (cw + sw)
    dj = jsp * omega * (cw - sw)
    return CavityFields(E, H, A, j, np.zeros_like(X), dj)


# ----------------------------------------------------------------------- CSV

PROBE_HEADER = ["coord", "ReEx", "ImEx", "ReEy", "ImEy", "ReEz", "ImEz"]


def write_field_csv(path, coords, fields) -> None:
    """Write ``coord,ReEx,ImEx,ReEy,ImEy,ReEz,ImEz`` rows."""
    fields = np.asarray(fields, dtype=complex)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROBE_HEADER)
        for c, e in zip(coords, fields):
            w.writerow([repr(float(c))] + [repr(float(v)) for comp in e for v in (comp.real, comp.imag)])


def oracle_sweep(kind: str, coords, points, **params) -> np.ndarray:
    """Evaluate ``mie`` or ``stratton`` at a list of Cartesian points."""
    if kind == "mie":
        return np.array([mie_pec_sphere(params["k0"], params["a"], params.get("E0", 1.0), p) for p in points])
    if kind == "stratton":
        return np.array([stratton_dielectric_sphere(params["k0"], params["a"], params["eps1_r"],
                                                    params.get("mu1_r", 1.0), params.get("E0", 1.0), p)
                         for p in points])
    raise ValueError(f"unknown oracle {kind!r}")
