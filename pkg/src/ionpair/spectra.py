"""Fiber description, spectral tables and the spectroscopy derived from them.

Everything here is a pure function of immutable inputs. Wavelengths are in
metres, absorption in dB/m, cross sections in m^2.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.constants import Avogadro, c, h, k as k_B

from .errors import (
    FiberSpecError,
    ModeApproximationError,
    SpectralRangeError,
    SpectrumFormatError,
)

#: g/mol -> kg/mol, holmium-165
HOLMIUM_MOLAR_MASS = 0.16493

#: Simulation band every absorption spectrum must cover unless told otherwise.
DEFAULT_BAND = (1700e-9, 2200e-9)

UNITS = ("dB/m", "m^2", "1")

# Lower validity limit of the Marcuse Gaussian spot-size fit.
MIN_V_NUMBER = 0.8

SPECTRUM_HEADER = "wavelength_nm,alpha_dB_per_m"


@dataclass(frozen=True)
class FiberSpec:
    """Step-index doped fiber.

    ``zero_line_wavelength`` is either a wavelength in metres or the string
    ``"auto"``, in which case it is estimated from the absorption spectrum
    (see :func:`estimate_zero_line`).
    """

    core_radius: float
    clad_radius: float
    numerical_aperture: float
    index_step: float
    dopant_wt_fraction: float
    glass_density: float = 2200.0
    upper_lifetime: float = 0.8e-3
    background_loss: float = 0.02
    temperature: float = 295.0
    zero_line_wavelength: Union[float, str] = 2015e-9

    def __post_init__(self):
        if not self.core_radius > 0:
            raise FiberSpecError("core_radius must be positive")
        if not self.clad_radius > self.core_radius:
            raise FiberSpecError("clad_radius must exceed core_radius")
        if not 0 < self.numerical_aperture < 1:
            raise FiberSpecError("numerical_aperture must lie in (0, 1)")
        # zero doping is accepted so that undoped reference fibers can be described
        if not 0 <= self.dopant_wt_fraction < 0.1:
            raise FiberSpecError("dopant_wt_fraction must lie in [0, 0.1)")
        if not self.glass_density > 0:
            raise FiberSpecError("glass_density must be positive")
        if not self.upper_lifetime > 0:
            raise FiberSpecError("upper_lifetime must be positive")
        if not self.temperature > 0:
            raise FiberSpecError("temperature must be positive")
        if not self.background_loss >= 0:
            raise FiberSpecError("background_loss must be non-negative")
        zl = self.zero_line_wavelength
        if isinstance(zl, str):
            if zl != "auto":
                raise FiberSpecError("zero_line_wavelength must be a wavelength or 'auto'")
        elif not zl > 0:
            raise FiberSpecError("zero_line_wavelength must be positive")

    @property
    def core_area(self):
        return math.pi * self.core_radius**2

    @property
    def background_loss_per_m(self):
        """Background loss as a natural (power) attenuation coefficient in 1/m."""
        return self.background_loss * math.log(10) / 10


@dataclass(frozen=True, eq=False)
class SpectralTable:
    """Piecewise-linear function of wavelength.

    Evaluating outside ``[wavelengths[0], wavelengths[-1]]`` raises
    :class:`SpectralRangeError`; there is no extrapolation.
    """

    wavelengths: np.ndarray
    values: np.ndarray
    unit: str = "dB/m"

    def __post_init__(self):
        wl = np.array(self.wavelengths, dtype=float)
        val = np.array(self.values, dtype=float)
        if wl.ndim != 1 or wl.shape != val.shape or wl.size < 2:
            raise ValueError("need at least two samples with matching shapes")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        if not np.all(np.isfinite(val)):
            raise ValueError("values must be finite")
        if self.unit != "1" and np.any(val < 0):
            raise ValueError("absorption values must be non-negative")
        wl.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "values", val)

    @property
    def span(self):
        return float(self.wavelengths[0]), float(self.wavelengths[-1])

    def covers(self, wavelength):
        lo, hi = self.span
        wl = np.asarray(wavelength, dtype=float)
        return bool(np.all((wl >= lo) & (wl <= hi)))

    def __call__(self, wavelength):
        wl = np.asarray(wavelength, dtype=float)
        if not self.covers(wl):
            lo, hi = self.span
            raise SpectralRangeError(
                f"wavelength outside sampled range [{lo * 1e9:.1f}, {hi * 1e9:.1f}] nm"
            )
        out = np.interp(wl, self.wavelengths, self.values)
        return float(out) if out.ndim == 0 else out

    def with_values(self, values, unit):
        return SpectralTable(self.wavelengths, values, unit)


@dataclass(frozen=True, eq=False)
class CrossSections:
    """Absorption and emission cross sections on a common wavelength grid."""

    absorption: SpectralTable
    emission: SpectralTable
    ion_density: float
    zero_line_wavelength: float = field(default=float("nan"))

    def covers(self, wavelength):
        return self.absorption.covers(wavelength)

    def __call__(self, wavelength):
        return self.absorption(wavelength), self.emission(wavelength)


def load_absorption_spectrum(source, band=DEFAULT_BAND):
    """Parse an absorption spectrum in the ``wavelength_nm,alpha_dB_per_m`` CSV format.

    Parameters
    ----------
    source : path, bytes, or file-like
        Byte or text stream (or a path to one).
    band : (float, float) or None
        Wavelength interval in metres the table must cover. ``None`` skips
        the coverage check.

    Returns
    -------
    SpectralTable
        Table in dB/m.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    else:
        raw = source.read()
    if isinstance(raw, bytes):
        try:
            text = raw.decode("ascii")
        except UnicodeDecodeError as exc:
            raise SpectrumFormatError(f"non-ASCII content ({exc})") from None
    else:
        text = raw

    wavelengths, values = [], []
    header_seen = False
    last_line = 0
    for lineno, line in enumerate(io.StringIO(text), start=1):
        last_line = lineno
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if not header_seen:
            if stripped.replace(" ", "") != SPECTRUM_HEADER:
                raise SpectrumFormatError(f"expected header {SPECTRUM_HEADER!r}", lineno)
            header_seen = True
            continue
        parts = stripped.split(",")
        if len(parts) != 2:
            raise SpectrumFormatError("expected two comma-separated fields", lineno)
        try:
            wl_nm, alpha = float(parts[0]), float(parts[1])
        except ValueError:
            raise SpectrumFormatError(f"not a number: {stripped!r}", lineno) from None
        if not (math.isfinite(wl_nm) and math.isfinite(alpha)):
            raise SpectrumFormatError("non-finite value", lineno)
        if wl_nm <= 0:
            raise SpectrumFormatError("wavelength must be positive", lineno)
        if alpha < 0:
            raise SpectrumFormatError("negative absorption", lineno)
        if wavelengths and wl_nm <= wavelengths[-1]:
            raise SpectrumFormatError(
                f"wavelength {wl_nm:g} nm does not increase on previous sample", lineno
            )
        wavelengths.append(wl_nm)
        values.append(alpha)

    if not header_seen:
        raise SpectrumFormatError("missing header", last_line or 1)
    if len(wavelengths) < 2:
        raise SpectrumFormatError("need at least two samples", last_line or 1)
    wl = np.array(wavelengths) * 1e-9
    if band is not None:
        lo, hi = band
        # tolerate the nm -> m round-off on the band edges
        eps = 1e-15
        if wl[0] > lo + eps or wl[-1] < hi - eps:
            raise SpectrumFormatError(
                f"spectrum spans [{wavelengths[0]:g}, {wavelengths[-1]:g}] nm, narrower than "
                f"the simulation band [{lo * 1e9:g}, {hi * 1e9:g}] nm",
                last_line,
            )
    return SpectralTable(wl, np.array(values), "dB/m")


def write_absorption_spectrum(table, fh, comments=()):
    for line in comments:
        fh.write(f"# {line}\n")
    fh.write(SPECTRUM_HEADER + "\n")
    for wl, val in zip(table.wavelengths, table.values):
        fh.write(f"{wl * 1e9:.2f},{val:.6f}\n")


def ion_density(spec):
    """Dopant number density in ions/m^3 from the elemental mass fraction."""
    return spec.glass_density * spec.dopant_wt_fraction * Avogadro / HOLMIUM_MOLAR_MASS


def v_number(spec, wavelength):
    return 2 * np.pi * spec.core_radius * spec.numerical_aperture / np.asarray(wavelength, dtype=float)


def overlap_factor(spec, wavelength):
    """Fraction of the fundamental-mode power inside the doped core.

    Gaussian approximation with the Marcuse spot-size fit, valid for V > 0.8.
    """
    V = v_number(spec, wavelength)
    if np.any(V <= MIN_V_NUMBER):
        raise ModeApproximationError(
            "mode approximation invalid at this wavelength (V-number <= 0.8)"
        )
    w_over_a = 0.65 + 1.619 * V**-1.5 + 2.879 * V**-6
    gamma = 1.0 - np.exp(-2.0 / w_over_a**2)
    return float(gamma) if np.ndim(gamma) == 0 else gamma


def absorption_cross_section(alpha, spec):
    """Convert a dB/m absorption table into an absorption cross-section table.

    Both the cross section and the ion density depend on the dopant
    concentration convention, but their product (the quantity the gain model
    consumes) is fixed by the measured absorption, so the convention cancels.
    """
    if alpha.unit != "dB/m":
        raise ValueError(f"expected a dB/m table, got {alpha.unit!r}")
    n = ion_density(spec)
    if n == 0:
        raise FiberSpecError("undoped fiber has no cross section")
    gamma = overlap_factor(spec, alpha.wavelengths)
    sigma = alpha.values * (math.log(10) / 10) / (gamma * n)
    return alpha.with_values(sigma, "m^2")


def estimate_zero_line(alpha):
    """Zero-line wavelength estimated from the long-wavelength absorption edge.

    Taken as the wavelength beyond the absorption peak where the absorption
    first falls to half its peak value (linear interpolation between samples).
    Returns None when the edge never reaches half maximum inside the table.
    """
    vals = np.asarray(alpha.values)
    wl = np.asarray(alpha.wavelengths)
    peak = int(np.argmax(vals))
    half = 0.5 * vals[peak]
    if half <= 0:
        return None
    below = np.nonzero(vals[peak:] <= half)[0]
    if below.size == 0:
        return None
    j = peak + int(below[0])
    i = j - 1
    frac = (vals[i] - half) / (vals[i] - vals[j])
    return float(wl[i] + frac * (wl[j] - wl[i]))


def resolve_zero_line(spec, alpha=None):
    zl = spec.zero_line_wavelength
    if zl != "auto":
        return float(zl)
    estimate = None if alpha is None else estimate_zero_line(alpha)
    if estimate is None:
        raise FiberSpecError(
            "zero_line_wavelength is 'auto' but the absorption spectrum gives no crossing estimate"
        )
    return estimate


def mccumber_factor(wavelength, zero_line, temperature):
    """Ratio of emission to absorption cross section from McCumber reciprocity."""
    wl = np.asarray(wavelength, dtype=float)
    eps = h * c / zero_line
    return np.exp((eps - h * c / wl) / (k_B * temperature))


def mccumber_emission(sigma_a, spec, zero_line=None):
    """Emission cross sections from absorption cross sections via McCumber theory.

    ``zero_line`` overrides ``spec.zero_line_wavelength``; otherwise an ``"auto"`` zero line raises
    :class:`FiberSpecError` because the cross-section table alone cannot fix it.
    """
    if zero_line is None:
        zero_line = resolve_zero_line(spec)
    ratio = mccumber_factor(sigma_a.wavelengths, zero_line, spec.temperature)
    return sigma_a.with_values(sigma_a.values * ratio, "m^2")


def cross_sections(alpha, spec):
    """Absorption table (dB/m) and fiber -> :class:`CrossSections`."""
    sigma_a = absorption_cross_section(alpha, spec)
    zl = resolve_zero_line(spec, alpha)
    sigma_e = mccumber_emission(sigma_a, spec, zero_line=zl)
    return CrossSections(sigma_a, sigma_e, ion_density(spec), zl)
