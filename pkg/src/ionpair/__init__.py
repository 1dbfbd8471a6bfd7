"""Simulation of in-band pumped doped-fiber amplifiers with ion-pair quenching.

Also infers the ion-pairing fraction from the ratio of signal output powers
measured with two pump wavelengths.
"""
from .analysis import (
    PairingEstimate,
    SlopeFit,
    SweepResult,
    fit_slope_efficiency,
    invert_pairing,
    optimize_length,
    sweep_pairing,
    sweep_pump_power,
    sweep_pump_wavelength,
)
from .config import RunConfig, data_path, parse_config, parse_fiber
from .errors import IonPairError
from .estimators import PairingRatioEstimator
from .gain_model import (
    Channel,
    ChannelSet,
    PairingModel,
    PopulationState,
    local_gain,
    steady_state_populations,
    transition_rates,
)
from .propagate import (
    AmplifierConfig,
    PropagationResult,
    integrate_forward,
    propagate,
    propagate_many,
    relax_bidirectional,
)
from .spectra import (
    FiberSpec,
    SpectralTable,
    absorption_cross_section,
    ion_density,
    load_absorption_spectrum,
    mccumber_emission,
    overlap_factor,
)

__version__ = "0.1.0"
