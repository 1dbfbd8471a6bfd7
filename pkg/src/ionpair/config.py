"""Run configuration files.

Flat ``key = value unit`` text, one entry per line, ``#`` comments. Every
dimensional quantity needs an explicit unit; lists are comma separated and
ranges are written ``start:stop:step`` (stop inclusive), followed by one unit.

    fiber = nrl_fiber.cfg
    spectrum = nrl_absorption.csv
    amplifier.length = 2.5 m
    signal.power = 0 dBm
    sweep.pump_powers = 0:2.5:0.1 W

The fiber itself lives in a separate file with ``fiber.*`` keys.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError, IonPairError
from .gain_model import PairingModel
from .propagate import DEFAULT_ASE_BAND, DEFAULT_ASE_BINS, AmplifierConfig
from .spectra import FiberSpec, SpectralTable, load_absorption_spectrum

# unit -> factor to SI, per dimension
_UNITS = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9, "km": 1e3},
    "power": {"W": 1.0, "mW": 1e-3, "uW": 1e-6, "µW": 1e-6, "dBm": None},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6},
    "loss": {"dB": 1.0},
    "attenuation": {"dB/m": 1.0, "dB/km": 1e-3},
    "temperature": {"K": 1.0},
    "density": {"kg/m^3": 1.0, "kg/m3": 1.0, "g/cm^3": 1e3, "g/cm3": 1e3},
    "fraction": {"": 1.0, "%": 1e-2},
    "mass_fraction": {"wt": 1.0, "wt%": 1e-2, "%-wt": 1e-2},
    "number": {"": 1.0},
}

_PREFERRED = {
    "length": "m", "power": "W", "time": "s", "loss": "dB", "attenuation": "dB/m",
    "temperature": "K", "density": "kg/m^3", "fraction": "(none) or %",
    "mass_fraction": "wt%", "number": "(none)",
}


@dataclass(frozen=True)
class _Key:
    dim: str
    shape: str = "scalar"  # scalar | list | text | flag
    required: bool = False


RUN_SCHEMA = {
    "fiber": _Key("path", "text", True),
    "spectrum": _Key("path", "text", True),
    "amplifier.length": _Key("length", required=True),
    "amplifier.pairing": _Key("fraction"),
    "amplifier.port_loss_in": _Key("loss"),
    "amplifier.port_loss_out": _Key("loss"),
    "signal.wavelength": _Key("length", required=True),
    "signal.power": _Key("power", required=True),
    "pump.wavelength": _Key("length", required=True),
    "pump.power": _Key("power", required=True),
    "ase.enabled": _Key("flag", "flag"),
    "ase.band": _Key("length", "list"),
    "ase.bins": _Key("number"),
    "numerics.step": _Key("length"),
    "numerics.record_every": _Key("length"),
    "numerics.check_step": _Key("flag", "flag"),
    "numerics.jobs": _Key("number"),
    "sweep.pump_powers": _Key("power", "list"),
    "sweep.pump_power_wavelengths": _Key("length", "list"),
    "sweep.pump_wavelengths": _Key("length", "list"),
    "sweep.pairing_values": _Key("fraction", "list"),
    "sweep.pairing_pump_wavelengths": _Key("length", "list"),
    "invert.pump_wavelengths": _Key("length", "list"),
    "invert.pump_power": _Key("power"),
    "invert.measured_ratio": _Key("number"),
    "invert.k_max": _Key("fraction"),
    "optimize.bracket": _Key("length", "list"),
    "output.directory": _Key("path", "text"),
}

FIBER_SCHEMA = {
    "fiber.name": _Key("text", "text"),
    "fiber.core_diameter": _Key("length", required=True),
    "fiber.clad_diameter": _Key("length", required=True),
    "fiber.numerical_aperture": _Key("number", required=True),
    "fiber.index_step": _Key("number", required=True),
    "fiber.dopant_concentration": _Key("mass_fraction", required=True),
    "fiber.glass_density": _Key("density"),
    "fiber.upper_lifetime": _Key("time"),
    "fiber.background_loss": _Key("attenuation"),
    "fiber.temperature": _Key("temperature"),
    "fiber.zero_line_wavelength": _Key("length"),
}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_SCALAR_RE = re.compile(rf"^({_NUMBER})\s*(\S*)$")
_RANGE_RE = re.compile(rf"^({_NUMBER}):({_NUMBER}):({_NUMBER})$")


def data_path(name):
    """Path of a fixture shipped with the package."""
    return Path(str(resources.files("ionpair") / "data" / name))


def _convert(value, unit, key, spec):
    table = _UNITS[spec.dim]
    if unit not in table:
        raise ConfigError(
            f"unit {unit or '(none)'!r} does not match, expected {_PREFERRED[spec.dim]}", key
        )
    factor = table[unit]
    if factor is None:  # dBm
        return 1e-3 * 10.0 ** (value / 10.0)
    return value * factor


def _split_unit(text):
    text = text.strip()
    m = re.match(rf"^(.*?)(?:\s+([^\s\d,:.+-][^\s]*))?$", text)
    body, unit = m.group(1), m.group(2) or ""
    # allow units glued to the number, e.g. "4%"
    if not unit and body and body[-1] == "%":
        body, unit = body[:-1], "%"
    return body.strip(), unit


def _parse_value(raw, key, spec):
    if spec.shape == "text":
        if not raw:
            raise ConfigError("empty value", key)
        return raw
    if spec.shape == "flag":
        low = raw.lower()
        if low in ("on", "true", "yes", "1"):
            return True
        if low in ("off", "false", "no", "0"):
            return False
        raise ConfigError(f"expected on/off, got {raw!r}", key)
    if spec.shape == "scalar":
        m = _SCALAR_RE.match(raw)
        if not m:
            raise ConfigError(f"cannot parse {raw!r} as a number with unit", key)
        return _convert(float(m.group(1)), m.group(2), key, spec)
    body, unit = _split_unit(raw)
    body = body.replace(" ", "")
    m = _RANGE_RE.match(body)
    if m:
        start, stop, step = (float(g) for g in m.groups())
        if step <= 0 or stop < start:
            raise ConfigError(f"invalid range {body!r}", key)
        count = (stop - start) / step
        n = int(round(count))
        if abs(count - n) > 1e-9 * max(1.0, n):
            raise ConfigError(f"range {body!r} does not land on its stop value", key)
        values = np.round(np.linspace(start, stop, n + 1), 12)
    else:
        try:
            values = [float(v) for v in body.split(",") if v]
        except ValueError:
            raise ConfigError(f"cannot parse list {raw!r}", key) from None
        if not values:
            raise ConfigError("empty list", key)
    return tuple(_convert(float(v), unit, key, spec) for v in values)


def _read_pairs(text, schema, origin):
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in schema:
            raise ConfigError(f"unknown key (strict schema, see {origin}:{lineno})", key)
        if key in out:
            raise ConfigError(f"duplicate key ({origin}:{lineno})", key)
        out[key] = _parse_value(raw, key, schema[key])
    for key, spec in schema.items():
        if spec.required and key not in out:
            raise ConfigError("missing required key", key)
    return out


def _positive(values, key, allow_zero=False):
    vals = values if isinstance(values, tuple) else (values,)
    for v in vals:
        if not (v > 0 or (allow_zero and v == 0)) or not math.isfinite(v):
            raise ConfigError(f"value {v!r} out of range (must be {'>= 0' if allow_zero else '> 0'})", key)


def parse_fiber(path):
    """Read a fiber description file into a :class:`FiberSpec`."""
    path = Path(path)
    text = path.read_text()
    raw_zl = None
    # "auto" is the one non-numeric value a fiber file may hold
    lines = []
    for line in text.splitlines():
        stripped = line.split("#", 1)[0]
        if "=" in stripped:
            k, v = (p.strip() for p in stripped.split("=", 1))
            if k == "fiber.zero_line_wavelength" and v.lower() == "auto":
                raw_zl = "auto"
                continue
        lines.append(line)
    vals = _read_pairs("\n".join(lines), FIBER_SCHEMA, path.name)
    for key in ("fiber.core_diameter", "fiber.clad_diameter", "fiber.numerical_aperture"):
        _positive(vals[key], key)
    kwargs = dict(
        core_radius=vals["fiber.core_diameter"] / 2,
        clad_radius=vals["fiber.clad_diameter"] / 2,
        numerical_aperture=vals["fiber.numerical_aperture"],
        index_step=vals["fiber.index_step"],
        dopant_wt_fraction=vals["fiber.dopant_concentration"],
    )
    optional = {
        "fiber.glass_density": "glass_density",
        "fiber.upper_lifetime": "upper_lifetime",
        "fiber.background_loss": "background_loss",
        "fiber.temperature": "temperature",
        "fiber.zero_line_wavelength": "zero_line_wavelength",
    }
    for key, name in optional.items():
        if key in vals:
            kwargs[name] = vals[key]
    if raw_zl:
        kwargs["zero_line_wavelength"] = raw_zl
    try:
        return FiberSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), path.name) from None


@dataclass(frozen=True, eq=False)
class RunConfig:
    path: Path
    fiber_path: Path
    spectrum_path: Path
    fiber: FiberSpec
    absorption: SpectralTable
    amplifier: AmplifierConfig
    values: dict
    digest: str
    output_dir: Path = field(default=Path("out"))
    jobs: int = 1

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError("required for this command but not set", key)
        return self.values[key]

    @property
    def pump_power_wavelengths(self):
        return self.get("sweep.pump_power_wavelengths", (self.amplifier.pump.wavelength,))

    @property
    def pairing_values(self):
        return self.get("sweep.pairing_values", tuple(np.round(np.arange(0, 0.1601, 0.01), 12)))

    @property
    def invert_pump_wavelengths(self) -> Tuple[float, float]:
        wl = self.get("invert.pump_wavelengths", (1860e-9, 1940e-9))
        if len(wl) != 2:
            raise ConfigError("need exactly two wavelengths", "invert.pump_wavelengths")
        return tuple(wl)


def _resolve(ref, base):
    p = Path(ref)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError(f"referenced file {str(p)!r} does not exist")
    return p


def _apply_overrides(text, overrides):
    if not overrides:
        return text
    lines = [text.rstrip("\n")]
    keys = set()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not 'key=value'")
        k, v = (p.strip() for p in item.split("=", 1))
        keys.add(k)
        lines.append(f"{k} = {v}")
    # an override replaces the line for the same key
    kept = []
    for line in lines[0].splitlines():
        k = line.split("#", 1)[0].split("=", 1)[0].strip()
        if k in keys and "=" in line:
            continue
        kept.append(line)
    return "\n".join(kept + lines[1:]) + "\n"


# keys that change how a run executes but not what it computes
_EXECUTION_KEYS = ("numerics.jobs", "output.directory")


def _digest_text(text):
    kept = []
    for line in text.splitlines():
        key = line.split("#", 1)[0].split("=", 1)[0].strip()
        if key not in _EXECUTION_KEYS:
            kept.append(line)
    return "\n".join(kept)


def parse_config(path, overrides=(), output_dir: Optional[str] = None):
    """Read and fully validate a run configuration.

    ``overrides`` are extra ``key=value`` strings that replace entries of the
    file; they take part in the digest like any other input byte.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    text = _apply_overrides(path.read_text(), overrides)
    vals = _read_pairs(text, RUN_SCHEMA, path.name)
    base = path.parent

    fiber_path = _resolve(vals["fiber"], base)
    spectrum_path = _resolve(vals["spectrum"], base)
    fiber = parse_fiber(fiber_path)
    try:
        absorption = load_absorption_spectrum(spectrum_path)
    except IonPairError as exc:
        raise ConfigError(str(exc), "spectrum") from None

    length = vals["amplifier.length"]
    _positive(length, "amplifier.length", allow_zero=True)
    pairing = vals.get("amplifier.pairing", 0.0)
    if not 0 <= pairing <= 1:
        raise ConfigError(f"value {pairing!r} out of range [0, 1]", "amplifier.pairing")
    for key in ("signal.wavelength", "pump.wavelength"):
        _positive(vals[key], key)
        if not absorption.covers(vals[key]):
            lo, hi = absorption.span
            raise ConfigError(
                f"{vals[key] * 1e9:g} nm outside the spectrum [{lo * 1e9:g}, {hi * 1e9:g}] nm", key
            )
    for key in ("signal.power", "pump.power"):
        _positive(vals[key], key, allow_zero=True)
    for key in ("amplifier.port_loss_in", "amplifier.port_loss_out"):
        if key in vals:
            _positive(vals[key], key, allow_zero=True)
    for key in ("numerics.step", "numerics.record_every"):
        if key in vals:
            _positive(vals[key], key)
    if "sweep.pump_powers" in vals:
        _positive(vals["sweep.pump_powers"], "sweep.pump_powers", allow_zero=True)
    if "sweep.pairing_values" in vals:
        if any(not 0 <= k <= 1 for k in vals["sweep.pairing_values"]):
            raise ConfigError("pairing values must lie in [0, 1]", "sweep.pairing_values")
    if "invert.measured_ratio" in vals:
        _positive(vals["invert.measured_ratio"], "invert.measured_ratio")
    if "optimize.bracket" in vals:
        br = vals["optimize.bracket"]
        if len(br) != 2 or not 0 < br[0] < br[1]:
            raise ConfigError("expected two increasing positive lengths", "optimize.bracket")
    band = vals.get("ase.band", DEFAULT_ASE_BAND)
    if len(band) != 2:
        raise ConfigError("expected two wavelengths", "ase.band")
    bins = vals.get("ase.bins", DEFAULT_ASE_BINS)
    if bins < 0 or bins != int(bins):
        raise ConfigError("expected a non-negative integer", "ase.bins")

    try:
        amp = AmplifierConfig.co_pumped(
            fiber, absorption, length,
            vals["signal.wavelength"], vals["signal.power"],
            vals["pump.wavelength"], vals["pump.power"],
            pairing=PairingModel(pairing),
            ase_enabled=vals.get("ase.enabled", False),
            ase_band=tuple(band),
            ase_bin_count=int(bins),
            port_loss_in=vals.get("amplifier.port_loss_in", 0.0),
            port_loss_out=vals.get("amplifier.port_loss_out", 0.0),
            step=vals.get("numerics.step", 1e-3),
            record_every=vals.get("numerics.record_every", 10e-3),
            check_step=vals.get("numerics.check_step", True),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    digest = hashlib.sha256()
    for blob in (_digest_text(text).encode(), fiber_path.read_bytes(), spectrum_path.read_bytes()):
        digest.update(hashlib.sha256(blob).digest())
    out_dir = Path(output_dir) if output_dir else Path(vals.get("output.directory", "out"))
    jobs = int(vals.get("numerics.jobs", 1))
    if jobs < 1:
        raise ConfigError("expected a positive integer", "numerics.jobs")
    return RunConfig(path, fiber_path, spectrum_path, fiber, absorption, amp, vals,
                     digest.hexdigest(), out_dir, jobs)
