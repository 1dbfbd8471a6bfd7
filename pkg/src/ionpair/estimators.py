"""scikit-learn compatible front end for the two-pump pairing inversion."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import (
    INVERSION_GRID_STEP,
    INVERSION_K_MAX,
    INVERSION_TOL,
    bisect_ratio,
    tabulate_ratio_curve,
)


class PairingRatioEstimator(RegressorMixin, BaseEstimator):
    """Map measured output-power ratios to ion-pairing fractions.

    ``fit`` simulates the ratio curve ``R(k)`` for the amplifier described by
    ``config``; no training data is needed, so ``X`` and ``y`` are ignored.
    ``predict`` takes one ratio per sample (shape ``(n,)`` or ``(n, 1)``) and
    returns the pairing fraction for each.

    Parameters
    ----------
    config : AmplifierConfig
        Amplifier whose pump power is used unless ``pump_power`` is given.
    pump_wavelengths : tuple of float
        ``(lambda_1, lambda_2)`` in metres; the ratio is ``P(lambda_1) / P(lambda_2)``.
    pump_power : float, optional
    k_max, grid_step, tol : float
        Inversion grid and bisection tolerance.
    n_jobs : int
    """

    def __init__(self, config=None, pump_wavelengths=(1860e-9, 1940e-9), pump_power=None,
                 k_max=INVERSION_K_MAX, grid_step=INVERSION_GRID_STEP, tol=INVERSION_TOL,
                 n_jobs=1):
        self.config = config
        self.pump_wavelengths = pump_wavelengths
        self.pump_power = pump_power
        self.k_max = k_max
        self.grid_step = grid_step
        self.tol = tol
        self.n_jobs = n_jobs

    def _power(self):
        return self.config.pump.power if self.pump_power is None else float(self.pump_power)

    def fit(self, X=None, y=None):
        if self.config is None:
            raise ValueError("PairingRatioEstimator needs an amplifier config")
        if len(self.pump_wavelengths) != 2:
            raise ValueError("pump_wavelengths must hold exactly two wavelengths")
        ks, curve = tabulate_ratio_curve(self.config, self.pump_wavelengths, self._power(),
                                         self.k_max, self.grid_step, self.n_jobs)
        self.k_grid_ = ks
        self.ratio_curve_ = curve
        self.ratio_range_ = (float(curve.min()), float(curve.max()))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "ratio_curve_")
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError(f"expected one ratio per sample, got {X.shape[1]} features")
            X = X[:, 0]
        if np.any(X <= 0):
            raise ValueError("ratios must be positive")
        out = np.empty(X.shape[0])
        for i, r in enumerate(X):
            out[i], _, _ = bisect_ratio(self.config, self.pump_wavelengths, self._power(),
                                        self.k_grid_, self.ratio_curve_, float(r),
                                        self.tol, self.n_jobs)
        return out
