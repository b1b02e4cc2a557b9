"""Closed-form benchmark values (hbar = 1)."""

from __future__ import annotations

import numpy as np


def two_level_jump(kT, tau, omega: float = 1.0):
    """Thermal two-level jump ``(w/2) cos(w tau) tanh(w / 2kT)``."""
    kT = np.asarray(kT, dtype=float)
    th = np.where(kT == 0, 1.0, np.tanh(omega / (2 * np.where(kT == 0, 1.0, kT))))
    return 0.5 * omega * np.cos(omega * np.asarray(tau)) * th


def oscillator_jump(t, omega: float = 1.0):
    """State-independent oscillator jump ``-(w/4) cos(w t)``."""
    return -0.25 * omega * np.cos(omega * np.asarray(t))


def planar_jump(t2, t3, omega: float = 1.0):
    """Angular-momentum jump ``sin(w (t2 - t3)) / 4`` of the isotropic trap."""
    return 0.25 * np.sin(omega * (np.asarray(t2) - np.asarray(t3)))


def finite_temperature_lz(kT, t2, t3, omega: float = 1.0):
    """Thermal ``<l_z x y>`` with l_z measured first: ``sin(w (t2 - t3)) / (4 sinh^2(w / 2kT))``."""
    return 0.25 * np.sin(omega * (np.asarray(t2) - np.asarray(t3))) / np.sinh(omega / (2 * np.asarray(kT))) ** 2


def two_level_mean_energy(kT, omega: float = 1.0):
    """Fermi-like thermal energy ``w / (exp(w/kT) + 1)``."""
    kT = np.asarray(kT, dtype=float)
    return omega * np.exp(-np.logaddexp(0.0, omega / kT))


def bose_mean_energy(kT, omega: float = 1.0):
    """Bose thermal energy ``w / (exp(w/kT) - 1)``."""
    return omega / np.expm1(omega / np.asarray(kT, dtype=float))
