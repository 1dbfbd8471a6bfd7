"""Parameter sweeps, slope-efficiency fits, length optimisation and pairing inversion.

The pairing inversion uses the ratio of amplified signal powers obtained
with two in-band pump wavelengths at equal pump power. That ratio is a
strictly monotone function of the pairing fraction for a given fiber, so a
measured ratio pins the pairing fraction without cutting the fiber.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .errors import (
    AmbiguousOptimumError,
    DegenerateModelError,
    FitError,
    RatioOutOfRangeError,
    SweepError,
)
from .propagate import AmplifierConfig, propagate_many

SLOPE_WINDOW_FRACTION = 0.4
MIN_FIT_POINTS = 4
INVERSION_K_MAX = 0.30
INVERSION_GRID_STEP = 0.01
INVERSION_TOL = 1e-4
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def config_digest(config: AmplifierConfig) -> str:
    """SHA-256 over every number that influences a propagation."""
    hsh = hashlib.sha256()
    f = config.fiber
    hsh.update(repr((
        f.core_radius, f.clad_radius, f.numerical_aperture, f.index_step,
        f.dopant_wt_fraction, f.glass_density, f.upper_lifetime, f.background_loss,
        f.temperature, f.zero_line_wavelength,
    )).encode())
    hsh.update(config.absorption.wavelengths.tobytes())
    hsh.update(config.absorption.values.tobytes())
    hsh.update(repr([(ch.wavelength, ch.power, ch.kind, ch.direction, ch.bin_width)
                     for ch in config.channels]).encode())
    hsh.update(repr((
        config.length, config.pairing.k, config.ase_enabled, tuple(config.ase_band),
        config.ase_bin_count, config.port_loss_in, config.port_loss_out, config.step,
        config.record_every, config.check_step,
    )).encode())
    return hsh.hexdigest()


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Records of one sweep, in request order.

    ``signal_out`` is in W; ``aux`` maps column names to arrays aligned with
    ``x``. Points whose propagation failed hold NaN and an entry in
    ``failures``.
    """

    variable: str
    unit: str
    x: np.ndarray
    signal_out: np.ndarray
    aux: Dict[str, np.ndarray] = field(default_factory=dict)
    provenance: str = ""
    failures: Dict[float, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.x)

    def at(self, x):
        i = int(np.argmin(np.abs(self.x - x)))
        if not math.isclose(self.x[i], x, rel_tol=1e-12, abs_tol=1e-15):
            raise KeyError(x)
        return float(self.signal_out[i])


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    window: Tuple[float, float]
    rms: float
    n_points: int

    @property
    def threshold(self):
        """Pump power where the fitted line crosses zero output."""
        return -self.intercept / self.slope if self.slope else float("nan")


@dataclass(frozen=True, eq=False)
class PairingEstimate:
    k_hat: float
    ratio: float
    ratio_range: Tuple[float, float]
    k_grid: np.ndarray
    ratio_curve: np.ndarray
    pump_wavelengths: Tuple[float, float]
    pump_power: float
    bracket: Tuple[float, float]
    evaluations: int

    def summary(self):
        lo, hi = self.ratio_range
        l1, l2 = (w * 1e9 for w in self.pump_wavelengths)
        return "\n".join([
            f"pairing estimate: k_hat = {self.k_hat:.5f} ({100 * self.k_hat:.2f} %)",
            f"measured ratio P({l1:.0f} nm)/P({l2:.0f} nm) = {self.ratio:.4f}",
            f"pump power = {self.pump_power:.4g} W",
            f"achievable ratio range = [{lo:.4f}, {hi:.4f}] over k in "
            f"[{self.k_grid[0]:.2f}, {self.k_grid[-1]:.2f}]",
            f"final bracket = [{self.bracket[0]:.6f}, {self.bracket[1]:.6f}]",
            f"propagations = {self.evaluations}",
        ])


@dataclass(frozen=True)
class LengthOptimum:
    length: float
    output: float
    scan_lengths: Tuple[float, ...]
    scan_outputs: Tuple[float, ...]
    evaluations: int


def _check_distinct(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D list")
    if np.unique(arr).size != arr.size:
        raise ValueError(f"{name} must not contain duplicates")
    return arr


def _outputs(configs, xs, n_jobs):
    results = propagate_many(configs, n_jobs=n_jobs, return_errors=True)
    sig = np.empty(len(configs))
    pump = np.empty(len(configs))
    for i, (x, r) in enumerate(zip(xs, results)):
        if isinstance(r, Exception):
            raise SweepError(x, r) from r
        sig[i] = r.signal_output
        pump[i] = r.pump_output
    return sig, pump


def sweep_pump_power(config, powers, n_jobs=1):
    """Signal output versus launched pump power (W)."""
    x = _check_distinct(powers, "powers")
    if np.any(x < 0):
        raise ValueError("pump powers must be non-negative")
    cfgs = [config.with_pump(power=p) for p in x]
    sig, pump = _outputs(cfgs, x, n_jobs)
    return SweepResult("pump_power", "W", x, sig, {"pump_out_W": pump}, config_digest(config))


def fit_slope_efficiency(sweep, window_fraction=SLOPE_WINDOW_FRACTION):
    """Least-squares line through the records at or above ``window_fraction`` of the max pump."""
    x = np.asarray(sweep.x, dtype=float)
    y = np.asarray(sweep.signal_out, dtype=float)
    ok = np.isfinite(y)
    lo = window_fraction * x[ok].max()
    sel = ok & (x >= lo)
    if sel.sum() < MIN_FIT_POINTS:
        raise FitError(
            f"need at least {MIN_FIT_POINTS} points with pump >= {lo:.4g} W, got {int(sel.sum())}"
        )
    xs, ys = x[sel], y[sel]
    A = np.column_stack([xs, np.ones_like(xs)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ys, rcond=None)
    rms = float(np.sqrt(np.mean((A @ [slope, intercept] - ys) ** 2)))
    return SlopeFit(float(slope), float(intercept), (float(xs.min()), float(xs.max())), rms, int(sel.sum()))


def sweep_pump_wavelength(config, wavelengths, k_values, n_jobs=1):
    """Signal output versus pump wavelength at fixed pump power, one sweep per pairing fraction.

    Failing points are recorded in ``failures`` and the sweep carries on.
    """
    wl = _check_distinct(wavelengths, "wavelengths")
    ks = _check_distinct(k_values, "k_values")
    if not config.absorption.covers(wl):
        raise ValueError("pump wavelengths must lie inside the spectral range")
    cfgs = [config.with_pairing(k).with_pump(wavelength=w) for k in ks for w in wl]
    results = propagate_many(cfgs, n_jobs=n_jobs, return_errors=True)
    family = {}
    n = len(wl)
    for j, k in enumerate(ks):
        chunk = results[j * n:(j + 1) * n]
        s = np.full(n, np.nan)
        p = np.full(n, np.nan)
        failures = {}
        for i, r in enumerate(chunk):
            if isinstance(r, Exception):
                failures[float(wl[i])] = str(r)
            else:
                s[i] = r.signal_output
                p[i] = r.pump_output
        family[float(k)] = SweepResult(
            "pump_wavelength", "m", wl, s, {"pump_out_W": p},
            config_digest(config.with_pairing(k)), failures,
        )
    return family


def sweep_pairing(config, k_values, pump_wavelengths=None, n_jobs=1):
    """Signal output versus pairing fraction at the configured pump power.

    With ``pump_wavelengths`` the sweep is repeated at each of them; the
    outputs go to ``aux`` as ``signal_out_W@<nm>nm`` and, for two wavelengths,
    their ratio as ``ratio``. ``signal_out`` always refers to the configured pump.
    """
    ks = _check_distinct(k_values, "k_values")
    if np.any((ks < 0) | (ks > 1)):
        raise ValueError("pairing fractions must lie in [0, 1]")
    cfgs = [config.with_pairing(k) for k in ks]
    extra = list(pump_wavelengths or ())
    for w in extra:
        cfgs += [config.with_pairing(k).with_pump(wavelength=w) for k in ks]
    xs = list(ks) * (1 + len(extra))
    sig, _ = _outputs(cfgs, xs, n_jobs)
    n = len(ks)
    aux = {}
    for j, w in enumerate(extra, start=1):
        aux[f"signal_out_W@{w * 1e9:.0f}nm"] = sig[j * n:(j + 1) * n]
    if len(extra) == 2:
        a, b = list(aux.values())
        aux["ratio"] = a / b
    return SweepResult("pairing", "1", ks, sig[:n], aux, config_digest(config))


def ratio_curve(config, pump_wavelengths, pump_power, k_values, n_jobs=1):
    """``R(k) = P_out(lambda_1, k) / P_out(lambda_2, k)`` on the given k values."""
    l1, l2 = pump_wavelengths
    base = config.with_pump(power=pump_power)
    cfgs = []
    for k in k_values:
        cfgs.append(base.with_pairing(k).with_pump(wavelength=l1))
        cfgs.append(base.with_pairing(k).with_pump(wavelength=l2))
    xs = [k for k in k_values for _ in (0, 1)]
    sig, _ = _outputs(cfgs, xs, n_jobs)
    return sig[0::2] / sig[1::2]


def tabulate_ratio_curve(config, pump_wavelengths, pump_power, k_max=INVERSION_K_MAX,
                         grid_step=INVERSION_GRID_STEP, n_jobs=1):
    """``R(k)`` on a uniform grid over ``[0, k_max]``, checked for strict monotonicity."""
    n = int(round(k_max / grid_step))
    ks = np.round(np.linspace(0.0, k_max, n + 1), 12)
    curve = ratio_curve(config, pump_wavelengths, pump_power, ks, n_jobs)
    d = np.diff(curve)
    if not (np.all(d > 0) or np.all(d < 0)):
        bad = ks[1:][d <= 0] if curve[-1] > curve[0] else ks[1:][d >= 0]
        raise DegenerateModelError(
            f"ratio curve is not strictly monotone in k (first offending k = {bad[0]:.2f}); "
            "inversion refused"
        )
    return ks, curve


def bisect_ratio(config, pump_wavelengths, pump_power, ks, curve, measured_ratio,
                 tol=INVERSION_TOL, n_jobs=1):
    """Refine the grid cell of a tabulated ratio curve that holds ``measured_ratio``.

    Returns ``(k_hat, (a, b), propagations)``; ``k_hat`` interpolates linearly
    inside the final bracket ``[a, b]`` of width below ``tol``.
    """
    r_lo, r_hi = float(np.min(curve)), float(np.max(curve))
    if not r_lo <= measured_ratio <= r_hi:
        raise RatioOutOfRangeError(measured_ratio, r_lo, r_hi)
    sign = 1.0 if curve[-1] > curve[0] else -1.0
    signed = sign * np.asarray(curve) - sign * measured_ratio
    j = int(np.searchsorted(signed, 0.0))
    if signed[j] == 0:
        k = float(ks[j])
        return k, (k, k), 0
    a, b = float(ks[j - 1]), float(ks[j])
    fa, fb = signed[j - 1], signed[j]
    evaluations = 0
    while b - a >= tol:
        m = 0.5 * (a + b)
        (rm,) = ratio_curve(config, pump_wavelengths, pump_power, [m], n_jobs)
        evaluations += 2
        fm = sign * (rm - measured_ratio)
        if fm == 0:
            return m, (m, m), evaluations
        if fm < 0:
            a, fa = m, fm
        else:
            b, fb = m, fm
    k_hat = a - fa * (b - a) / (fb - fa)
    return float(k_hat), (a, b), evaluations


def invert_pairing(config, pump_wavelengths, measured_ratio, pump_power=None,
                   k_max=INVERSION_K_MAX, grid_step=INVERSION_GRID_STEP, tol=INVERSION_TOL,
                   n_jobs=1):
    """Pairing fraction reproducing a measured two-pump output ratio.

    Tabulates ``R(k)`` on a uniform grid over ``[0, k_max]``, refuses to
    invert unless the curve is strictly monotone, then bisects the grid
    cell holding ``measured_ratio`` until it is narrower than ``tol``.
    """
    if not measured_ratio > 0:
        raise ValueError("measured ratio must be positive")
    power = config.pump.power if pump_power is None else float(pump_power)
    ks, curve = tabulate_ratio_curve(config, pump_wavelengths, power, k_max, grid_step, n_jobs)
    k_hat, bracket, evals = bisect_ratio(config, pump_wavelengths, power, ks, curve,
                                         measured_ratio, tol, n_jobs)
    return PairingEstimate(k_hat, float(measured_ratio), (float(curve.min()), float(curve.max())),
                           ks, curve, tuple(pump_wavelengths), power, bracket,
                           2 * len(ks) + evals)


def _signal_at_lengths(config, lengths, n_jobs=1):
    cfgs = [config.replace(length=float(L)) for L in lengths]
    sig, _ = _outputs(cfgs, lengths, n_jobs)
    return sig


def _local_maxima(x, y):
    peaks = []
    n = len(y)
    for i in range(n):
        left = y[i - 1] if i > 0 else -np.inf
        right = y[i + 1] if i < n - 1 else -np.inf
        if y[i] > left and y[i] >= right:
            peaks.append(float(x[i]))
    return peaks


def optimize_length(config, bracket, tol=1e-3, scan_points=21, n_jobs=1):
    """Fiber length maximising the signal output, by golden-section search.

    A coarse scan over the bracket first checks that the output has a single
    maximum; several local maxima raise :class:`AmbiguousOptimumError`.
    """
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ValueError("length bracket must be positive and increasing")
    scan = np.linspace(lo, hi, scan_points)
    outs = _signal_at_lengths(config, scan, n_jobs)
    evaluations = len(scan)
    peaks = _local_maxima(scan, outs)
    if len(peaks) > 1:
        raise AmbiguousOptimumError(peaks)

    # narrow to the scan cells around the peak before the golden-section search
    i = int(np.argmax(outs))
    a = scan[max(i - 1, 0)]
    b = scan[min(i + 1, len(scan) - 1)]
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = _signal_at_lengths(config, [c, d], n_jobs)
    evaluations += 2
    while b - a >= tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            (fc,) = _signal_at_lengths(config, [c], n_jobs)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            (fd,) = _signal_at_lengths(config, [d], n_jobs)
        evaluations += 1
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    for x_edge, f_edge in ((scan[0], outs[0]), (scan[-1], outs[-1])):
        if f_edge > best_f and abs(x_edge - best_x) <= (scan[1] - scan[0]):
            best_x, best_f = x_edge, f_edge
    return LengthOptimum(float(best_x), float(best_f), tuple(map(float, scan)),
                         tuple(map(float, outs)), evaluations)


def _fmt(v):
    return "nan" if not np.isfinite(v) else f"{v:.9e}"


def write_sweep_csv(sweep, fh, digest=None, extra_meta=()):
    """Write ``x_value,signal_out_W[,aux...]`` with a ``#`` metadata preamble."""
    fh.write(f"# config_digest: {digest or sweep.provenance}\n")
    fh.write(f"# x: {sweep.variable} [{sweep.unit}]\n")
    fh.write("# signal_out_W: amplified signal output power [W]\n")
    for line in extra_meta:
        fh.write(f"# {line}\n")
    for x, msg in sorted(sweep.failures.items()):
        fh.write(f"# failed at x = {x!r}: {msg}\n")
    writer = csv.writer(fh, lineterminator="\n")
    names = list(sweep.aux)
    writer.writerow(["x_value", "signal_out_W"] + names)
    for i, x in enumerate(sweep.x):
        writer.writerow([f"{x:.9e}", _fmt(sweep.signal_out[i])] + [_fmt(sweep.aux[n][i]) for n in names])


def write_ratio_curve_csv(estimate, fh, digest=""):
    fh.write(f"# config_digest: {digest}\n")
    l1, l2 = (w * 1e9 for w in estimate.pump_wavelengths)
    fh.write(f"# ratio = P({l1:.0f} nm)/P({l2:.0f} nm) at {estimate.pump_power:.6g} W pump\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["k", "ratio"])
    for k, r in zip(estimate.k_grid, estimate.ratio_curve):
        writer.writerow([f"{k:.4f}", f"{r:.9e}"])
