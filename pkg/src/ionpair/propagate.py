"""Steady-state power propagation along a co-pumped doped fiber.

The channel powers obey ``dP/dz = g(z) P (+ spontaneous source for ASE)``
with the populations recomputed from the local powers at every RK4 stage.
One batched kernel integrates any number of independent configurations that
share a step count, which is what the parameter sweeps rely on.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy.constants import c, h

from .errors import AccuracyError, ConvergenceError, DivergenceError, IonPairError
from .gain_model import (
    BACKWARD,
    FORWARD,
    Channel,
    ChannelSet,
    PairingModel,
    rate_coefficients,
    steady_state_populations,
)
from .spectra import FiberSpec, SpectralTable, cross_sections

DEFAULT_STEP = 1e-3
DEFAULT_RECORD_EVERY = 10e-3
DEFAULT_ASE_BAND = (1900e-9, 2150e-9)
DEFAULT_ASE_BINS = 250

STEP_CHECK_RTOL = 1e-6
RELAX_RTOL = 1e-6
RELAX_MAX_ITER = 50
# below this a power is treated as zero when forming relative differences
POWER_FLOOR = 1e-30


def db_to_factor(db):
    return 10.0 ** (-db / 10.0)


@dataclass(frozen=True, eq=False)
class AmplifierConfig:
    """Single-stage co-pumped amplifier.

    ``channels`` holds the launched powers in front of the input port; the
    port losses (dB) are applied on the way in and out of the doped fiber.
    ASE bins are generated from ``ase_band``/``ase_bin_count`` when
    ``ase_enabled`` is set and are not part of ``channels``.
    """

    fiber: FiberSpec
    absorption: SpectralTable
    length: float
    channels: ChannelSet
    pairing: PairingModel = PairingModel()
    ase_enabled: bool = False
    ase_band: Tuple[float, float] = DEFAULT_ASE_BAND
    ase_bin_count: int = DEFAULT_ASE_BINS
    port_loss_in: float = 0.0
    port_loss_out: float = 0.0
    step: float = DEFAULT_STEP
    record_every: float = DEFAULT_RECORD_EVERY
    check_step: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channels", ChannelSet(self.channels))
        if not self.length >= 0:
            raise ValueError("fiber length must be non-negative")
        if not self.step > 0:
            raise ValueError("integration step must be positive")
        if not self.record_every > 0:
            raise ValueError("record interval must be positive")
        if self.port_loss_in < 0 or self.port_loss_out < 0:
            raise ValueError("port losses must be non-negative")
        if len(self.channels) and not self.absorption.covers(self.channels.wavelengths):
            raise ValueError("channel wavelengths must lie inside the spectral range")
        if self.ase_enabled:
            lo, hi = self.ase_band
            if self.ase_bin_count < 0:
                raise ValueError("ase_bin_count must be non-negative")
            if self.ase_bin_count and not (hi > lo and self.absorption.covers([lo, hi])):
                raise ValueError("ASE band must be increasing and inside the spectral range")

    @classmethod
    def co_pumped(cls, fiber, absorption, length, signal_wavelength, signal_power,
                  pump_wavelength, pump_power, **kwargs):
        channels = ChannelSet([
            Channel(signal_wavelength, signal_power, "signal"),
            Channel(pump_wavelength, pump_power, "pump"),
        ])
        return cls(fiber, absorption, length, channels, **kwargs)

    @cached_property
    def cross_sections(self):
        return cross_sections(self.absorption, self.fiber)

    @property
    def signal(self):
        return self.channels[self.channels.index("signal")]

    @property
    def pump(self):
        return self.channels[self.channels.index("pump")]

    def replace(self, **changes):
        return replace(self, **changes)

    def with_pump(self, power=None, wavelength=None):
        i = self.channels.index("pump")
        old = self.channels[i]
        new = Channel(
            old.wavelength if wavelength is None else float(wavelength),
            old.power if power is None else float(power),
            "pump",
        )
        chans = list(self.channels)
        chans[i] = new
        return replace(self, channels=ChannelSet(chans))

    def with_pairing(self, k):
        return replace(self, pairing=PairingModel(float(k)))

    def ase_channels(self):
        if not self.ase_enabled or self.ase_bin_count == 0:
            return ChannelSet()
        lo, hi = self.ase_band
        edges = np.linspace(lo, hi, self.ase_bin_count + 1)
        centres = 0.5 * (edges[1:] + edges[:-1])
        widths = c * np.diff(edges) / centres**2
        chans = [Channel(float(wl), 0.0, "ase", d, float(bw))
                 for d in (FORWARD, BACKWARD)
                 for wl, bw in zip(centres, widths)]
        return ChannelSet(chans)

    def all_channels(self):
        return ChannelSet(tuple(self.channels) + tuple(self.ase_channels()))

    def grid(self, step=None):
        step = self.step if step is None else step
        if self.length == 0:
            return 0, 0.0
        n = max(1, math.ceil(self.length / step - 1e-9))
        return n, self.length / n


@dataclass(frozen=True, eq=False)
class PropagationResult:
    """Output of one propagation.

    ``powers`` are the in-fiber powers (W) on the recorded ``z`` grid, one
    column per entry of ``channels``; ``output`` carries the powers leaving
    the amplifier after the port losses.
    """

    config: AmplifierConfig
    channels: ChannelSet
    output: ChannelSet
    z: np.ndarray
    powers: np.ndarray
    n2: np.ndarray
    n_eg: np.ndarray
    fiber_input: np.ndarray
    fiber_output: np.ndarray
    iterations: int = 1
    residual: float = 0.0
    step_check: Optional[float] = None

    @property
    def signal_output(self):
        return self.output[self.output.index("signal")].power

    @property
    def pump_output(self):
        return self.output[self.output.index("pump")].power

    def profile(self, kind):
        return self.powers[:, self.channels.index(kind)]


@dataclass
class _Batch:
    """Per-row coefficient arrays for the RK4 kernel (rows are independent runs)."""

    coef_a: np.ndarray  # (B, C)
    coef_e: np.ndarray
    gsa: np.ndarray
    gse: np.ndarray
    src: np.ndarray  # (B, C) spontaneous source per unit excited density
    n_total: np.ndarray  # (B,)
    n_single: np.ndarray
    n_pair: np.ndarray
    inv_tau: np.ndarray
    loss: np.ndarray  # (B,)

    def rates(self, P):
        return (self.coef_a * P).sum(-1), (self.coef_e * P).sum(-1)


def _coefficients(config, channels):
    xs = config.cross_sections
    spec = config.fiber
    coef_a, coef_e, gsa, gse = rate_coefficients(channels.wavelengths, xs, spec)
    hnu = h * c / channels.wavelengths
    src = 2.0 * hnu * channels.bin_widths * gse
    return coef_a, coef_e, gsa, gse, src


def _make_batch(configs, channel_sets):
    cols = [_coefficients(cfg, ch) for cfg, ch in zip(configs, channel_sets)]
    arr = [np.array([col[i] for col in cols]) for i in range(5)]
    n_total = np.array([cfg.cross_sections.ion_density for cfg in configs])
    n_single = np.array([cfg.pairing.single_density(n) for cfg, n in zip(configs, n_total)])
    n_pair = np.array([cfg.pairing.pair_density(n) for cfg, n in zip(configs, n_total)])
    inv_tau = np.array([1.0 / cfg.fiber.upper_lifetime for cfg in configs])
    loss = np.array([cfg.fiber.background_loss_per_m for cfg in configs])
    return _Batch(*arr, n_total, n_single, n_pair, inv_tau, loss)


@njit(cache=True, nogil=True)
def _rk4_rows(P0, coef_a, coef_e, gsa, gse, src, n_total, n_single, n_pair, inv_tau,
              loss, dz, n, ext_a, ext_e, prof, bad_step):
    B, C = P0.shape
    half = 0.5 * dz
    sixth = dz / 6.0
    k = np.empty((4, C))
    tmp = np.empty(C)
    for b in range(B):
        P = P0[b].copy()
        for c in range(C):
            prof[0, b, c] = P[c]
        for i in range(n):
            for s in range(4):
                if s == 0:
                    node = 2 * i
                    for c in range(C):
                        tmp[c] = P[c]
                elif s == 3:
                    node = 2 * i + 2
                    for c in range(C):
                        tmp[c] = P[c] + dz * k[2, c]
                else:
                    node = 2 * i + 1
                    for c in range(C):
                        tmp[c] = P[c] + half * k[s - 1, c]
                wa = 0.0
                we = 0.0
                for c in range(C):
                    wa += coef_a[b, c] * tmp[c]
                    we += coef_e[b, c] * tmp[c]
                wa += ext_a[node, b]
                we += ext_e[node, b]
                n2 = wa / (wa + we + inv_tau[b])
                n_eg = 2.0 * wa / (2.0 * wa + we + inv_tau[b])
                N2 = n_single[b] * n2 + n_pair[b] * n_eg
                N1 = n_total[b] - N2
                for c in range(C):
                    g = gse[b, c] * N2 - gsa[b, c] * N1 - loss[b]
                    k[s, c] = g * tmp[c] + src[b, c] * N2
            finite = True
            for c in range(C):
                P[c] = P[c] + sixth * (k[0, c] + 2.0 * k[1, c] + 2.0 * k[2, c] + k[3, c])
                prof[i + 1, b, c] = P[c]
                if not np.isfinite(P[c]):
                    finite = False
            if not finite and bad_step[b] < 0:
                bad_step[b] = i + 1


def _rk4(batch, P0, dz, n, ext_a=None, ext_e=None, z0=0.0, direction=1.0):
    """Integrate ``n`` fixed RK4 steps; returns the profile ``(n+1, B, C)`` and bad-row z.

    ``ext_a``/``ext_e`` are ``(2n+1, B)`` rates contributed by frozen channels
    at the half-step nodes. A row that turns non-finite gets the z of the
    first bad node in the returned array (NaN for rows that stayed finite).
    """
    P0 = np.ascontiguousarray(P0, dtype=float)
    B = P0.shape[0]
    if ext_a is None:
        ext_a = np.zeros((2 * n + 1, B))
        ext_e = np.zeros((2 * n + 1, B))
    prof = np.empty((n + 1,) + P0.shape)
    bad_step = np.full(B, -1, dtype=np.int64)
    _rk4_rows(P0, batch.coef_a, batch.coef_e, batch.gsa, batch.gse, batch.src,
              batch.n_total, batch.n_single, batch.n_pair, batch.inv_tau, batch.loss,
              float(dz), int(n), np.ascontiguousarray(ext_a), np.ascontiguousarray(ext_e),
              prof, bad_step)
    bad_z = np.where(bad_step >= 0, z0 + direction * bad_step * dz, np.nan)
    return prof, bad_z


def _half_node_rates(batch, prof):
    """Rates of a stored profile at full and half-step nodes, shape ``(2n+1, B)``."""
    wa, we = batch.rates(prof)  # (n+1, B)
    n = prof.shape[0] - 1
    out_a = np.empty((2 * n + 1,) + wa.shape[1:])
    out_e = np.empty_like(out_a)
    out_a[0::2] = wa
    out_e[0::2] = we
    out_a[1::2] = 0.5 * (wa[1:] + wa[:-1])
    out_e[1::2] = 0.5 * (we[1:] + we[:-1])
    return out_a, out_e


def _record_stride(config, n, dz):
    if n == 0:
        return 1
    ratio = config.record_every / dz
    # a sub-step fiber would otherwise overflow the stride
    if not ratio < n:
        return n
    return max(1, int(round(ratio)))


def _recorded(n, stride):
    idx = list(range(0, n + 1, stride))
    if idx[-1] != n:
        idx.append(n)
    return np.array(idx)


def _build_result(config, channels, prof, dz, n, iterations=1, residual=0.0, step_check=None):
    """``prof`` is ``(n+1, C)`` in fiber, columns ordered as ``channels``."""
    stride = _record_stride(config, n, dz)
    idx = _recorded(n, stride)
    z = idx * dz
    powers = prof[idx]
    batch = _make_batch([config], [channels])
    wa, we = batch.rates(powers)
    pop = steady_state_populations(wa, we, config.fiber.upper_lifetime)
    fwd = channels.forward
    fin = np.where(fwd, prof[0], prof[-1])
    fout = np.where(fwd, prof[-1], prof[0])
    out_factor = np.where(fwd, db_to_factor(config.port_loss_out), db_to_factor(config.port_loss_in))
    output = channels.with_powers(fout * out_factor)
    for arr in (z, powers, pop.n2_single, pop.n_eg_pair, fin, fout):
        arr.flags.writeable = False
    return PropagationResult(
        config, channels, output, z, powers, pop.n2_single, pop.n_eg_pair,
        fin, fout, iterations, residual, step_check,
    )


def _launch(config, channels):
    """Powers entering the doped fiber at its launch end."""
    factor_in = db_to_factor(config.port_loss_in)
    factor_out = db_to_factor(config.port_loss_out)
    return channels.powers * np.where(channels.forward, factor_in, factor_out)


def _relative_change(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), POWER_FLOOR)


def _propagate_group(configs, check_step, step=None):
    """Forward-only batched propagation of configs sharing step count and channel count."""
    chans = [cfg.channels for cfg in configs]
    batch = _make_batch(configs, chans)
    n, dz = configs[0].grid(step)
    P0 = np.array([_launch(cfg, ch) for cfg, ch in zip(configs, chans)])
    prof, bad = _rk4(batch, P0, dz, n)
    errors = [None] * len(configs)
    for r in np.nonzero(~np.isnan(bad))[0]:
        errors[r] = DivergenceError(float(bad[r]))
    checks = [None] * len(configs)
    if check_step and n > 0:
        ok = np.array([e is None for e in errors])
        fine, bad2 = _rk4(batch, P0, dz / 2, 2 * n)
        diff = _relative_change(prof[-1], fine[-1]).max(-1)
        for r in range(len(configs)):
            if not ok[r]:
                continue
            if not np.isnan(bad2[r]):
                errors[r] = DivergenceError(float(bad2[r]))
                continue
            checks[r] = float(diff[r])
            if diff[r] > STEP_CHECK_RTOL:
                errors[r] = AccuracyError(
                    f"step-halving check failed: outputs changed by {diff[r]:.3e} relative"
                )
    results = []
    for r, cfg in enumerate(configs):
        if errors[r] is not None:
            results.append(errors[r])
        else:
            results.append(_build_result(cfg, chans[r], prof[:, r], dz, n, step_check=checks[r]))
    return results


def _group_key(cfg, step):
    n, dz = cfg.grid(step)
    return n, dz, len(cfg.channels)


def propagate_many(configs: Sequence[AmplifierConfig], n_jobs=1, return_errors=False, step=None):
    """Propagate many configurations, batching compatible ones into one RK4 run.

    Results come back in request order. ASE-enabled configs go through
    :func:`relax_bidirectional` one at a time. With ``return_errors`` the
    failing entries hold the exception instead of raising it.
    """
    configs = list(configs)
    results = [None] * len(configs)
    groups = {}
    for i, cfg in enumerate(configs):
        try:
            cfg.cross_sections
        except IonPairError as exc:
            results[i] = exc
            continue
        if cfg.ase_enabled:
            try:
                results[i] = relax_bidirectional(cfg)
            except IonPairError as exc:
                results[i] = exc
            continue
        groups.setdefault(_group_key(cfg, step), []).append(i)

    tasks = []
    for members in groups.values():
        n_chunks = max(1, min(int(n_jobs), len(members)))
        for chunk in np.array_split(np.array(members), n_chunks):
            if chunk.size:
                tasks.append(list(chunk))

    def run(idx):
        cfgs = [configs[i] for i in idx]
        check = all(cfg.check_step for cfg in cfgs)
        return idx, _propagate_group(cfgs, check, step)

    if n_jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=int(n_jobs)) as pool:
            done = list(pool.map(run, tasks))
    else:
        done = [run(t) for t in tasks]
    for idx, res in done:
        for i, r in zip(idx, res):
            results[i] = r

    if not return_errors:
        for r in results:
            if isinstance(r, Exception):
                raise r
    return results


def integrate_forward(config: AmplifierConfig, step=None):
    """Single-pass propagation of forward-travelling channels with fixed-step RK4.

    Unless ``config.check_step`` is off, the run is repeated with half the
    step and :class:`AccuracyError` is raised when any output moves by more
    than ``STEP_CHECK_RTOL`` relative.
    """
    if config.ase_enabled and len(config.ase_channels()):
        raise ValueError("ASE is enabled; use relax_bidirectional")
    if not config.channels.forward.all():
        raise ValueError("integrate_forward handles forward channels only")
    (res,) = _propagate_group([config], config.check_step, step)
    if isinstance(res, Exception):
        raise res
    return res


def relax_bidirectional(config: AmplifierConfig, step=None, max_iter=RELAX_MAX_ITER, rtol=RELAX_RTOL):
    """Relaxation solver for forward channels plus counter-propagating ASE.

    Alternates a forward sweep (backward channels frozen) and a backward
    sweep (forward channels frozen) until the largest relative change of any
    output power falls below ``rtol``.
    """
    channels = config.all_channels()
    fwd = channels.forward
    f_idx = np.nonzero(fwd)[0]
    b_idx = np.nonzero(~fwd)[0]
    f_ch = ChannelSet(channels[i] for i in f_idx)
    b_ch = ChannelSet(channels[i] for i in b_idx)
    n, dz = config.grid(step)
    launch = _launch(config, channels)
    f_batch = _make_batch([config], [f_ch])
    b_batch = _make_batch([config], [b_ch])
    P0_f = launch[f_idx][None, :]
    P0_b = launch[b_idx][None, :]

    prof_b = np.zeros((n + 1, 1, len(b_idx)))
    prev = None
    residual = np.inf
    for it in range(1, max_iter + 1):
        xa, xe = _half_node_rates(b_batch, prof_b)
        prof_f, bad = _rk4(f_batch, P0_f, dz, n, xa, xe)
        if not np.isnan(bad[0]):
            raise DivergenceError(float(bad[0]))
        xa, xe = _half_node_rates(f_batch, prof_f)
        rev, bad = _rk4(b_batch, P0_b, dz, n, xa[::-1], xe[::-1],
                        z0=config.length, direction=-1.0)
        if not np.isnan(bad[0]):
            raise DivergenceError(float(bad[0]))
        prof_b = rev[::-1]
        out = np.concatenate([prof_f[-1, 0], prof_b[0, 0]])
        if prev is not None:
            residual = float(_relative_change(out, prev).max()) if out.size else 0.0
            if residual < rtol:
                break
        prev = out
    else:
        raise ConvergenceError(max_iter, residual)

    prof = np.empty((n + 1, len(channels)))
    prof[:, f_idx] = prof_f[:, 0]
    prof[:, b_idx] = prof_b[:, 0]
    return _build_result(config, channels, prof, dz, n, iterations=it, residual=residual)


def propagate(config: AmplifierConfig, step=None):
    """Dispatch to the forward solver or the relaxation solver."""
    if config.ase_enabled:
        return relax_bidirectional(config, step)
    return integrate_forward(config, step)


def write_profile_csv(result: PropagationResult, fh, preamble=()):
    """Dump the recorded z-profiles as ``z_m,channel_id,power_W`` rows."""
    for line in preamble:
        fh.write(f"# {line}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["z_m", "channel_id", "power_W"])
    labels = [ch.label for ch in result.channels]
    for zi, row in zip(result.z, result.powers):
        for label, p in zip(labels, row):
            writer.writerow([f"{zi:.6f}", label, f"{p:.9e}"])
