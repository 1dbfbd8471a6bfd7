import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionpair.errors import (
    FiberSpecError,
    ModeApproximationError,
    SpectralRangeError,
    SpectrumFormatError,
)
from ionpair.spectra import (
    FiberSpec,
    SpectralTable,
    absorption_cross_section,
    cross_sections,
    estimate_zero_line,
    ion_density,
    load_absorption_spectrum,
    mccumber_emission,
    overlap_factor,
)

# CODATA values typed in by hand so the oracles do not share scipy's constants
H = 6.62607015e-34
C = 299792458.0
KB = 1.380649e-23


def fiber(**kw):
    base = dict(core_radius=5e-6, clad_radius=46e-6, numerical_aperture=0.186,
                index_step=0.012, dopant_wt_fraction=0.007)
    base.update(kw)
    return FiberSpec(**base)


def csv_bytes(rows, header="wavelength_nm,alpha_dB_per_m"):
    return ("\n".join([header] + [f"{a},{b}" for a, b in rows]) + "\n").encode()


class TestLoadSpectrum:
    def test_nrl_fixture_peak(self, nrl_absorption):
        i = int(np.argmax(nrl_absorption.values))
        assert nrl_absorption.values[i] == pytest.approx(51.0, abs=1e-9)
        assert nrl_absorption.wavelengths[i] == pytest.approx(1940e-9)
        lo, hi = nrl_absorption.span
        assert lo <= 1700e-9 + 1e-15 and hi >= 2200e-9 - 1e-15

    def test_zero_spectrum(self):
        tab = load_absorption_spectrum(io.BytesIO(csv_bytes([(1700, 0), (2200, 0)])))
        assert tab.unit == "dB/m"
        assert np.all(tab(np.linspace(1700e-9, 2200e-9, 11)) == 0)

    def test_duplicate_wavelength_cites_line(self):
        data = csv_bytes([(1700, 1), (1940, 2), (1940, 3), (2200, 0)])
        with pytest.raises(SpectrumFormatError) as err:
            load_absorption_spectrum(io.BytesIO(data))
        assert err.value.line == 4
        assert "line 4" in str(err.value)

    def test_comments_are_skipped(self):
        data = b"# digitised\nwavelength_nm,alpha_dB_per_m\n# mid comment\n1700,1\n2200,2\n"
        tab = load_absorption_spectrum(data)
        assert tab(1950e-9) == pytest.approx(1.5)

    @pytest.mark.parametrize("rows,line", [
        ([(1700, 1), (2200, -0.5)], 3),
        ([(1700, 1), ("abc", 2)], 3),
        ([(1800, 1), (1700, 1)], 3),
    ])
    def test_bad_rows(self, rows, line):
        with pytest.raises(SpectrumFormatError) as err:
            load_absorption_spectrum(csv_bytes(rows), band=None)
        assert err.value.line == line

    def test_bad_header(self):
        with pytest.raises(SpectrumFormatError):
            load_absorption_spectrum(csv_bytes([(1700, 0), (2200, 0)], header="nm,alpha"))

    def test_too_narrow_for_band(self):
        with pytest.raises(SpectrumFormatError, match="narrower"):
            load_absorption_spectrum(csv_bytes([(1750, 0), (2200, 0)]))


class TestSpectralTable:
    def test_no_extrapolation(self):
        tab = SpectralTable([1e-6, 2e-6], [1.0, 2.0])
        with pytest.raises(SpectralRangeError):
            tab(2.1e-6)
        with pytest.raises(SpectralRangeError):
            tab([1.5e-6, 0.9e-6])

    def test_nodes_exact(self, nrl_absorption):
        wl = nrl_absorption.wavelengths[::37]
        assert np.array_equal(nrl_absorption(wl), nrl_absorption.values[::37])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0, 100, allow_nan=False), min_size=2, max_size=20),
           st.floats(0, 1))
    def test_interpolation_within_bracket(self, values, frac):
        wl = np.linspace(1.7e-6, 2.2e-6, len(values))
        tab = SpectralTable(wl, values)
        i = min(int(frac * (len(values) - 1)), len(values) - 2)
        x = wl[i] + (frac * (len(values) - 1) - i) * (wl[i + 1] - wl[i])
        x = min(max(x, wl[i]), wl[i + 1])
        v = tab(x)
        assert min(values[i], values[i + 1]) - 1e-12 <= v <= max(values[i], values[i + 1]) + 1e-12

    def test_immutable(self):
        tab = SpectralTable([1e-6, 2e-6], [1.0, 2.0])
        with pytest.raises(ValueError):
            tab.values[0] = 3.0


class TestFiberSpec:
    @pytest.mark.parametrize("kw", [
        dict(core_radius=0),
        dict(clad_radius=4e-6),
        dict(numerical_aperture=1.2),
        dict(dopant_wt_fraction=0.2),
        dict(upper_lifetime=0),
        dict(temperature=-1),
        dict(background_loss=-0.1),
        dict(zero_line_wavelength="guess"),
    ])
    def test_invariants(self, kw):
        with pytest.raises(FiberSpecError):
            fiber(**kw)


class TestIonDensity:
    def test_nrl_value(self):
        # 0.007 * 2200 kg/m^3 / 0.16493 kg/mol * N_A
        assert ion_density(fiber()) == pytest.approx(5.623050e25, rel=1e-6)

    def test_zero(self):
        assert ion_density(fiber(dopant_wt_fraction=0.0)) == 0.0

    def test_linear(self):
        assert ion_density(fiber(dopant_wt_fraction=0.01)) == 2 * ion_density(fiber(dopant_wt_fraction=0.005))

    def test_pure(self):
        spec = fiber()
        assert ion_density(spec) == ion_density(spec)
        assert overlap_factor(spec, 2.05e-6) == overlap_factor(spec, 2.05e-6)


class TestOverlap:
    def test_marcuse_value(self):
        # V = 2.850421, w/a = 0.991789, Gamma = 0.869091 by hand
        assert overlap_factor(fiber(), 2050e-9) == pytest.approx(0.869091, abs=2e-6)

    def test_monotone_in_wavelength(self):
        wl = np.linspace(1700e-9, 2200e-9, 101)
        g = overlap_factor(fiber(), wl)
        assert np.all(np.diff(g) < 0)
        assert np.all((g > 0) & (g < 1))

    def test_near_cutoff_of_fit(self):
        spec = fiber()
        wl = 2 * math.pi * spec.core_radius * spec.numerical_aperture / 0.8001
        g = overlap_factor(spec, wl)
        assert 0 < g < 1
        assert g < overlap_factor(spec, 2200e-9)

    def test_invalid_v(self):
        spec = fiber()
        wl = 2 * math.pi * spec.core_radius * spec.numerical_aperture / 0.79
        with pytest.raises(ModeApproximationError):
            overlap_factor(spec, wl)


class TestCrossSections:
    def test_hand_value(self):
        # 51 dB/m at Gamma = 0.869 and N = 5.62e25 m^-3
        alpha = 51 * math.log(10) / 10
        assert alpha / (0.869 * 5.62e25) == pytest.approx(2.4045e-25, rel=1e-4)

    def test_table_value(self):
        spec = fiber()
        tab = SpectralTable([1900e-9, 2050e-9, 2100e-9], [20.0, 51.0, 0.0])
        sa = absorption_cross_section(tab, spec)
        expected = 51 * math.log(10) / 10 / (overlap_factor(spec, 2050e-9) * ion_density(spec))
        assert sa.values[1] == pytest.approx(expected, rel=1e-14)
        assert sa.values[2] == 0.0
        assert sa.unit == "m^2"

    def test_round_trip(self, nrl_absorption):
        spec = fiber()
        sa = absorption_cross_section(nrl_absorption, spec)
        gamma = overlap_factor(spec, sa.wavelengths)
        back = gamma * sa.values * ion_density(spec) * 10 / math.log(10)
        np.testing.assert_allclose(back, nrl_absorption.values, rtol=1e-12, atol=1e-12)

    def test_undoped(self):
        with pytest.raises(FiberSpecError, match="undoped"):
            absorption_cross_section(SpectralTable([1.7e-6, 2.2e-6], [1, 1]), fiber(dopant_wt_fraction=0))


class TestMcCumber:
    def test_zero_line_identity(self):
        spec = fiber(zero_line_wavelength=1950e-9)
        sa = SpectralTable([1900e-9, 1950e-9, 2000e-9], [1e-25, 2e-25, 1e-25], "m^2")
        se = mccumber_emission(sa, spec)
        assert se.values[1] == sa.values[1]
        assert se.values[0] < sa.values[0]
        assert se.values[2] > sa.values[2]

    def test_hand_ratio(self):
        # exp[(hc/2015nm - hc/1940nm) / (kB 295 K)] = 0.392295 by hand
        spec = fiber()
        sa = SpectralTable([1900e-9, 1940e-9, 2000e-9], [1e-25, 1e-25, 1e-25], "m^2")
        se = mccumber_emission(sa, spec)
        assert se.values[1] / sa.values[1] == pytest.approx(0.392295, rel=1e-5)

    def test_ratio_identity_every_node(self, nrl_absorption, nrl_fiber):
        xs = cross_sections(nrl_absorption, nrl_fiber)
        wl = xs.absorption.wavelengths
        zl = xs.zero_line_wavelength
        T = nrl_fiber.temperature
        expected = np.exp((H * C / zl - H * C / wl) / (KB * T))
        pos = xs.absorption.values > 0
        ratio = xs.emission.values[pos] / xs.absorption.values[pos]
        np.testing.assert_allclose(ratio, expected[pos], rtol=1e-12)

    def test_auto_needs_spectrum(self):
        spec = fiber(zero_line_wavelength="auto")
        sa = SpectralTable([1900e-9, 2000e-9], [1e-25, 1e-25], "m^2")
        with pytest.raises(FiberSpecError, match="auto"):
            mccumber_emission(sa, spec)

    def test_auto_from_absorption_edge(self, nrl_absorption):
        zl = estimate_zero_line(nrl_absorption)
        assert 1940e-9 < zl < 2100e-9
        xs = cross_sections(nrl_absorption, fiber(zero_line_wavelength="auto"))
        assert xs.zero_line_wavelength == zl

    def test_auto_without_edge(self):
        flat = SpectralTable([1.7e-6, 2.2e-6], [0.0, 0.0])
        assert estimate_zero_line(flat) is None
        with pytest.raises(FiberSpecError):
            cross_sections(SpectralTable([1.7e-6, 2.2e-6], [1.0, 2.0]), fiber(zero_line_wavelength="auto"))
