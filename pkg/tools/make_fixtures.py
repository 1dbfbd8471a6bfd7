"""Regenerate the absorption spectra shipped in ``src/ionpair/data``.

The spectra are sums of three Gaussian bands in wavenumber (a main band, a
short-wavelength shoulder and a long-wavelength tail). The main band centre
is solved for so that the composite maximum sits exactly at ``PEAK_NM``.
"""
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

DATA = Path(__file__).resolve().parents[1] / "src" / "ionpair" / "data"
GRID_NM = np.arange(1700, 2200.5, 1.0)
PEAK_NM = 1940.0

# (amplitude, width cm^-1, centre nm) for shoulder and tail, width of main band
NRL = dict(peak_db=51.0, main_width=112.4,
           shoulder=(0.548, 245.5, 1811.0), tail=(0.409, 142.0, 2020.0))
EXAIL = dict(peak_db=30.0, main_width=120.0,
             shoulder=(0.25, 150.0, 1860.0), tail=(0.45, 110.0, 2030.0))


def _bands(lnm, bands):
    out = np.zeros_like(np.asarray(lnm, dtype=float))
    for centre, width, amp in bands:
        out = out + amp * np.exp(-0.5 * ((1e7 / lnm - 1e7 / centre) / width) ** 2)
    return out


def spectrum(peak_db, main_width, shoulder, tail):
    rest = [(shoulder[2], shoulder[1], shoulder[0]), (tail[2], tail[1], tail[0])]

    def slope(c1):
        b = [(c1, main_width, 1.0)] + rest
        return _bands(np.array(PEAK_NM + 0.01), b) - _bands(np.array(PEAK_NM - 0.01), b)

    bands = [(brentq(slope, 1850.0, 1990.0), main_width, 1.0)] + rest
    s = _bands(GRID_NM, bands)
    s = peak_db * s / _bands(np.array(PEAK_NM), bands)
    assert GRID_NM[np.argmax(s)] == PEAK_NM
    return s


def write(name, values, note):
    with open(DATA / name, "w", newline="") as fh:
        fh.write(f"# {note}\n")
        fh.write("# regenerate with tools/make_fixtures.py\n")
        fh.write("wavelength_nm,alpha_dB_per_m\n")
        for w, a in zip(GRID_NM, values):
            fh.write(f"{w:.0f},{a:.6f}\n")


if __name__ == "__main__":
    write("nrl_absorption.csv", spectrum(**NRL),
          "synthetic Ho3+ 5I8->5I7 absorption, 51 dB/m peak at 1940 nm")
    write("exail_synthetic_absorption.csv", spectrum(**EXAIL),
          "synthetic stand-in for a commercial Ho-doped fiber, not measured data")
