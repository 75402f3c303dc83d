"""Fine-structure splitting from a half-waveplate rotation scan.

Rotating a half-waveplate by theta rotates the analysed linear polarization
by 2 theta, so the measured X minus XX energy difference follows
``S cos(4 (theta - phi))`` about its angle average, peak-to-peak 2S.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import optimize

THRESHOLD_UEV = 0.5
MAX_FEV = 2000


class FitError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class SplittingScan:
    angle_deg: np.ndarray
    delta_E_ueV: np.ndarray
    sigma_ueV: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angle_deg, float)
        e = np.asarray(self.delta_E_ueV, float)
        s = np.broadcast_to(np.asarray(self.sigma_ueV, float), a.shape).copy()
        if a.ndim != 1 or e.shape != a.shape:
            raise ValueError("angle and energy arrays must be 1-d and equal length")
        if a.size < 4:
            raise ValueError("a scan needs at least 4 points to fit 3 parameters")
        if not (np.isfinite(a).all() and np.isfinite(e).all() and np.isfinite(s).all()):
            raise ValueError("scan contains non-finite values")
        if (s < 0).any():
            raise ValueError("sigma must be >= 0")
        object.__setattr__(self, "angle_deg", a)
        object.__setattr__(self, "delta_E_ueV", e)
        object.__setattr__(self, "sigma_ueV", s)

    def __len__(self):
        return self.angle_deg.size

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"angle_deg": self.angle_deg, "delta_E_ueV": self.delta_E_ueV,
                             "sigma_ueV": self.sigma_ueV})


@dataclass(frozen=True)
class SplittingFit:
    S_ueV: float
    phase_deg: float
    sigma_S: float
    offset_ueV: float
    chi2: float
    residuals: np.ndarray

    @property
    def verdict(self) -> bool:
        return below_threshold(self.S_ueV, self.sigma_S)

    def __iter__(self):
        # unpack as (S, phase, sigma_S)
        return iter((self.S_ueV, self.phase_deg, self.sigma_S))


def model(theta_deg, amplitude, phase_deg, offset=0.0):
    return amplitude * np.cos(np.deg2rad(4.0 * (np.asarray(theta_deg) - phase_deg))) + offset


def simulate_scan(S_ueV: float, phase_deg: float = 0.0, noise_sigma_ueV: float = 0.0,
                  angles=None, rng=None) -> SplittingScan:
    if S_ueV < 0:
        raise ValueError("S_ueV must be >= 0")
    if noise_sigma_ueV < 0:
        raise ValueError("noise_sigma_ueV must be >= 0")
    angles = np.linspace(0.0, 90.0, 20, endpoint=False) if angles is None else np.asarray(angles, float)
    rng = np.random.default_rng(rng)
    e = model(angles, S_ueV, phase_deg)
    if noise_sigma_ueV > 0:
        e = e + rng.normal(0.0, noise_sigma_ueV, angles.shape)
    return SplittingScan(angles, e, np.full(angles.shape, noise_sigma_ueV))


def _initial_guess(scan: SplittingScan):
    w = np.deg2rad(4.0 * scan.angle_deg)
    y = scan.delta_E_ueV
    design = np.column_stack([np.cos(w), np.sin(w), np.ones_like(w)])
    (a, b, c), *_ = np.linalg.lstsq(design, y, rcond=None)
    amp = float(np.hypot(a, b))
    phase = float(np.rad2deg(np.arctan2(b, a)) / 4.0)
    return amp, phase, float(c)


def fit_splitting(scan: SplittingScan) -> SplittingFit:
    """Least-squares fit of ``A cos(4(theta - phi)) + c``.

    Errors in the scan are used as weights when all are positive; otherwise
    the fit is unweighted and sigma_S comes from the residual scatter.
    """
    weighted = bool((scan.sigma_ueV > 0).all())
    sigma = scan.sigma_ueV if weighted else None
    p0 = _initial_guess(scan)
    try:
        with warnings.catch_warnings():
            # undefined covariance is handled below
            warnings.simplefilter("ignore", optimize.OptimizeWarning)
            popt, pcov = optimize.curve_fit(model, scan.angle_deg, scan.delta_E_ueV, p0=p0,
                                            sigma=sigma, absolute_sigma=weighted,
                                            maxfev=MAX_FEV)
    except RuntimeError as exc:
        res = scan.delta_E_ueV - model(scan.angle_deg, *p0)
        raise FitError(f"splitting fit did not converge: {exc}", res) from exc
    amp, phase, offset = (float(v) for v in popt)
    res = scan.delta_E_ueV - model(scan.angle_deg, amp, phase, offset)
    err = float(np.sqrt(pcov[0, 0])) if np.isfinite(pcov[0, 0]) else float("nan")
    if not np.isfinite(err):
        # a perfect fit leaves curve_fit with no scatter to scale by
        if np.allclose(res, 0.0, atol=1e-12):
            err = 0.0
        else:
            raise FitError("fit covariance undefined", res)
    if amp < 0:
        amp, phase = -amp, phase + 45.0
    phase = float(np.mod(phase, 90.0))
    chi2 = float(np.sum((res / scan.sigma_ueV) ** 2)) if weighted else float(np.sum(res**2))
    return SplittingFit(amp, phase, err, offset, chi2, res)


def below_threshold(S_ueV: float, sigma_S: float, threshold: float = THRESHOLD_UEV) -> bool:
    """True only when the splitting is below threshold by two standard errors."""
    return bool(S_ueV + 2.0 * sigma_S < threshold)


def read_scan(path) -> SplittingScan:
    df = pd.read_csv(path, comment="#")
    missing = {"angle_deg", "delta_E_ueV"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
    sigma = df["sigma_ueV"].to_numpy(float) if "sigma_ueV" in df else np.zeros(len(df))
    return SplittingScan(df["angle_deg"].to_numpy(float), df["delta_E_ueV"].to_numpy(float), sigma)


def write_scan(path, scan: SplittingScan) -> None:
    scan.to_frame().to_csv(Path(path), index=False, float_format="%.9g")
