"""Steady-state populations of single ions and ion pairs, and the local gain.

Pairs are two-ion clusters. A pair with both ions excited relaxes at once
to the singly-excited state (pair-induced quenching), so the ground ion of
a singly-excited pair keeps absorbing and every photon it absorbs is lost.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.constants import c, h

from .errors import SpectralRangeError
from .spectra import overlap_factor

FORWARD = "forward"
BACKWARD = "backward"
KINDS = ("pump", "signal", "ase")


@dataclass(frozen=True)
class PairingModel:
    """Fraction ``k`` of all dopant ions that sit in pairs."""

    k: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ValueError(f"pairing fraction must lie in [0, 1], got {self.k!r}")

    def single_density(self, n_total):
        return (1.0 - self.k) * n_total

    def pair_density(self, n_total):
        return self.k * n_total / 2.0


@dataclass(frozen=True)
class PopulationState:
    """Excited fraction of single ions and fraction of pairs holding one excitation."""

    n2_single: float
    n_eg_pair: float


@dataclass(frozen=True)
class Channel:
    wavelength: float
    power: float
    kind: str = "signal"
    direction: str = FORWARD
    bin_width: float = 0.0

    def __post_init__(self):
        if not self.power >= 0:
            raise ValueError("channel power must be non-negative")
        if not self.wavelength > 0:
            raise ValueError("channel wavelength must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.direction not in (FORWARD, BACKWARD):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.kind == "ase":
            if not self.bin_width > 0:
                raise ValueError("ASE channels need a positive bin width")
        elif self.bin_width != 0:
            raise ValueError("only ASE channels carry a bin width")

    @property
    def photon_energy(self):
        return h * c / self.wavelength

    @property
    def label(self):
        if self.kind == "ase":
            tag = "f" if self.direction == FORWARD else "b"
            return f"ase_{tag}_{self.wavelength * 1e9:.2f}nm"
        return self.kind


class ChannelSet(tuple):
    """Immutable ordered collection of :class:`Channel`."""

    def __new__(cls, channels=()):
        channels = tuple(channels)
        for ch in channels:
            if not isinstance(ch, Channel):
                raise TypeError(f"expected Channel, got {type(ch).__name__}")
        if sum(ch.kind == "signal" for ch in channels) > 1:
            raise ValueError("at most one signal channel is supported")
        return super().__new__(cls, channels)

    @property
    def wavelengths(self):
        return np.array([ch.wavelength for ch in self], dtype=float)

    @property
    def powers(self):
        return np.array([ch.power for ch in self], dtype=float)

    @property
    def forward(self):
        return np.array([ch.direction == FORWARD for ch in self], dtype=bool)

    @property
    def bin_widths(self):
        return np.array([ch.bin_width for ch in self], dtype=float)

    def index(self, kind):
        for i, ch in enumerate(self):
            if ch.kind == kind:
                return i
        raise KeyError(kind)

    def with_powers(self, powers):
        return ChannelSet(
            Channel(ch.wavelength, float(p), ch.kind, ch.direction, ch.bin_width)
            for ch, p in zip(self, powers)
        )


def rate_coefficients(wavelengths, xs, spec):
    """Per-channel factors turning power (W) into transition rates (1/s).

    Returns ``(coef_a, coef_e, gamma_sigma_a, gamma_sigma_e)`` where
    ``W_a = sum(coef_a * P)`` and ``gamma_sigma_*`` are the overlap-weighted
    cross sections used by the gain.
    """
    wl = np.asarray(wavelengths, dtype=float)
    if wl.size and not xs.covers(wl):
        raise SpectralRangeError("channel wavelength outside the spectral range")
    gamma = overlap_factor(spec, wl)
    sigma_a, sigma_e = xs(wl)
    hnu = h * c / wl
    gsa = gamma * sigma_a
    gse = gamma * sigma_e
    return gsa / (hnu * spec.core_area), gse / (hnu * spec.core_area), gsa, gse


def transition_rates(channels, xs, spec) -> Tuple[float, float]:
    """Total absorption and stimulated-emission rates per ion, ``(W_a, W_e)``."""
    channels = ChannelSet(channels)
    if not channels:
        return 0.0, 0.0
    coef_a, coef_e, _, _ = rate_coefficients(channels.wavelengths, xs, spec)
    p = channels.powers
    return float(np.dot(coef_a, p)), float(np.dot(coef_e, p))


def steady_state_populations(w_a, w_e, tau):
    """Closed-form steady state of the single-ion and pair rate equations.

    Single ions: ``n2 = W_a / (W_a + W_e + 1/tau)``.
    Pairs (ground <-> one excited at 2 W_a; the doubly excited state is quenched
    back instantly): ``n_eg = 2 W_a / (2 W_a + W_e + 1/tau)``.
    Works elementwise on arrays.
    """
    inv_tau = 1.0 / tau
    n2 = w_a / (w_a + w_e + inv_tau)
    n_eg = 2.0 * w_a / (2.0 * w_a + w_e + inv_tau)
    return PopulationState(n2, n_eg)


def level_densities(pop, pairing, n_total):
    """Ground and excited ion densities ``(N1, N2)``; ``N1 + N2 == n_total``."""
    n_s = pairing.single_density(n_total)
    n_p = pairing.pair_density(n_total)
    n2 = n_s * pop.n2_single + n_p * pop.n_eg_pair
    n1 = n_s * (1.0 - pop.n2_single) + n_p * (2.0 * (1.0 - pop.n_eg_pair) + pop.n_eg_pair)
    return n1, n2


def local_gain(pop, pairing, n_total, xs, spec, wavelength):
    """Net power gain coefficient in 1/m at ``wavelength``, background loss included."""
    wl = np.asarray(wavelength, dtype=float)
    gamma = overlap_factor(spec, wl)
    sigma_a, sigma_e = xs(wl)
    n1, n2 = level_densities(pop, pairing, n_total)
    return gamma * (sigma_e * n2 - sigma_a * n1) - spec.background_loss_per_m
