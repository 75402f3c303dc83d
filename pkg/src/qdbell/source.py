"""Emitter model: cascade timing, fine-structure phase precession and the
uncorrelated-light budget, with closed-form or quadrature time averages.

Timing model (times relative to the start of the excitation pulse, ns):

* XX photon at ``t1 = U + Exp(tau_xx)`` with ``U ~ Uniform(0, pulse_width)``.
* X photon at ``t2 = t1 + Exp(tau_x)``; the delay ``t2 - t1`` sets the
  precession phase ``splitting * delay / hbar``.
* Cascades with ``t2`` past the end of the period are redrawn, so every
  distribution below is conditioned on ``t2 < rep_period - pulse_delay``.
* Background photons: ``U + Exp(tau_bg)``, independent per channel.
* Dark counts: uniform over the full period, Poisson per channel.

Recorded event times are ``pulse_delay_ns`` later than pulse-relative times.

Uncorrelated fraction of same-pulse coincidences (``b``)::

    pairs  = p_dot * eta**2 * q_pair
    total  = pairs + S_xx * S_x - s_dot_xx * s_dot_x
    b      = 1 - (1 - reexcite_prob) * pairs / total

where ``p_dot = emission_prob * (1 - background_fraction)``, ``q_pair`` is the
probability that both cascade photons fall inside their gates, ``S_c`` is the
expected number of accepted clicks per pulse in channel ``c`` from all
sources (dot, background, dark counts ``dark_rate * gate_width``) and
``s_dot_c`` the dot part of it.  Dark counts are counted per analysis channel.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy import integrate, optimize

from .polarization import TwoPhotonState, bell_state_psi_plus

HBAR_UEV_NS = 0.6582119
QUAD_TOL = 1e-9


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SourceConfig:
    """Physical parameters of the dot and the detection system."""

    splitting_ueV: float = 0.32
    tau_xx_ns: float = 0.4
    tau_x_ns: float = 0.8
    pulse_width_ns: float = 0.1
    rep_period_ns: float = 12.5
    background_fraction: float = 0.0
    tau_bg_ns: float = 0.2
    reexcite_prob: float = 0.0
    dark_rate_hz: float = 0.0
    detect_efficiency: float = 0.2
    emission_prob: float = 0.5
    pulse_delay_ns: float = 1.0

    def __post_init__(self):
        checks = [
            (self.splitting_ueV >= 0, "splitting_ueV must be >= 0"),
            (self.tau_xx_ns > 0, "tau_xx_ns must be > 0"),
            (self.tau_x_ns > 0, "tau_x_ns must be > 0"),
            (self.pulse_width_ns >= 0, "pulse_width_ns must be >= 0"),
            (self.rep_period_ns > 0, "rep_period_ns must be > 0"),
            (0 <= self.background_fraction <= 1, "background_fraction must be in [0, 1]"),
            (self.tau_bg_ns > 0, "tau_bg_ns must be > 0"),
            (0 <= self.reexcite_prob <= 1, "reexcite_prob must be in [0, 1]"),
            (self.dark_rate_hz >= 0, "dark_rate_hz must be >= 0"),
            (0 < self.detect_efficiency <= 1, "detect_efficiency must be in (0, 1]"),
            (0 <= self.emission_prob <= 1, "emission_prob must be in [0, 1]"),
            (self.pulse_delay_ns >= 0, "pulse_delay_ns must be >= 0"),
            (self.rep_period_ns > self.tau_xx_ns, "rep_period_ns must exceed tau_xx_ns"),
            (self.pulse_delay_ns + self.pulse_width_ns < self.rep_period_ns,
             "excitation pulse must end inside the period"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def emission_window_ns(self) -> float:
        """Pulse-relative time available before the period ends."""
        return self.rep_period_ns - self.pulse_delay_ns

    @property
    def dot_prob(self) -> float:
        return self.emission_prob * (1.0 - self.background_fraction)

    @property
    def background_prob(self) -> float:
        return self.emission_prob * self.background_fraction

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SourceConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown SourceConfig keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def replace(self, **changes) -> "SourceConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class GateWindows:
    """Acceptance windows, in recorded time within the period (ns)."""

    xx_center_ns: float
    xx_width_ns: float
    x_center_ns: float
    x_width_ns: float

    def __post_init__(self):
        if self.xx_width_ns <= 0 or self.x_width_ns <= 0:
            raise ValueError("gate widths must be > 0")

    @property
    def xx_window(self) -> tuple[float, float]:
        return (self.xx_center_ns - self.xx_width_ns / 2, self.xx_center_ns + self.xx_width_ns / 2)

    @property
    def x_window(self) -> tuple[float, float]:
        return (self.x_center_ns - self.x_width_ns / 2, self.x_center_ns + self.x_width_ns / 2)

    def check(self, rep_period_ns: float) -> None:
        for lo, hi in (self.xx_window, self.x_window):
            if lo < 0 or hi > rep_period_ns:
                raise ValueError(
                    f"gate window [{lo:.4g}, {hi:.4g}] ns lies outside the "
                    f"{rep_period_ns:g} ns period")


def phase_rate(splitting_ueV: float) -> float:
    """Precession angular frequency in rad/ns."""
    return splitting_ueV / HBAR_UEV_NS


def evolved_pure_state(splitting_ueV: float, delay_ns: float) -> TwoPhotonState:
    """(|HH> + exp(i S tau / hbar)|VV>)/sqrt(2) for an exciton delay ``tau``."""
    if delay_ns < 0:
        raise ValueError("delay_ns must be >= 0")
    phi = phase_rate(splitting_ueV) * delay_ns
    return TwoPhotonState.from_ket(np.array([1, 0, 0, np.exp(1j * phi)]) / np.sqrt(2))


def state_from_phase_average(coherence: complex) -> TwoPhotonState:
    """Cascade state whose HH/VV coherence is the average of exp(i phi)."""
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = rho[3, 3] = 0.5
    rho[3, 0] = coherence / 2
    rho[0, 3] = np.conj(coherence) / 2
    return TwoPhotonState(rho)


# ----- timing distributions (pulse-relative) -----

def _exp_cdf_integral(s, tau):
    """Integral of the Exp(tau) CDF from 0 to s (zero for s <= 0)."""
    s = np.maximum(s, 0.0)
    return s - tau * (-np.expm1(-s / tau))


def _hypo_cdf(t, a, b):
    t = np.maximum(t, 0.0)
    if math.isclose(a, b, rel_tol=1e-9):
        return 1.0 - np.exp(-t / a) * (1.0 + t / a)
    return 1.0 - (a * np.exp(-t / a) - b * np.exp(-t / b)) / (a - b)


def _hypo_cdf_integral(s, a, b):
    s = np.maximum(s, 0.0)
    if math.isclose(a, b, rel_tol=1e-9):
        return s - (2 * a * (-np.expm1(-s / a)) - s * np.exp(-s / a))
    return s - (a * a * (-np.expm1(-s / a)) - b * b * (-np.expm1(-s / b))) / (a - b)


def _hypo_pdf(t, a, b):
    t = np.asarray(t, dtype=float)
    if math.isclose(a, b, rel_tol=1e-9):
        out = t / a**2 * np.exp(-t / a)
    else:
        out = (np.exp(-t / a) - np.exp(-t / b)) / (a - b)
    return np.where(t > 0, out, 0.0)


def xx_cdf(t, cfg: SourceConfig):
    """Unconditioned CDF of the XX emission time."""
    w, tau = cfg.pulse_width_ns, cfg.tau_xx_ns
    if w == 0:
        return -np.expm1(-np.maximum(t, 0.0) / tau)
    return (_exp_cdf_integral(t, tau) - _exp_cdf_integral(np.asarray(t) - w, tau)) / w


def xx_pdf(t, cfg: SourceConfig):
    w, tau = cfg.pulse_width_ns, cfg.tau_xx_ns
    t = np.asarray(t, dtype=float)
    if w == 0:
        return np.where(t >= 0, np.exp(-np.maximum(t, 0) / tau) / tau, 0.0)
    rise = -np.expm1(-np.maximum(t, 0.0) / tau)
    tail = np.exp(-np.maximum(t - w, 0.0) / tau) - np.exp(-np.maximum(t, 0.0) / tau)
    return np.where(t < 0, 0.0, np.where(t < w, rise, tail)) / w


def x_cdf(t, cfg: SourceConfig):
    """Unconditioned CDF of the X emission time."""
    w, a, b = cfg.pulse_width_ns, cfg.tau_x_ns, cfg.tau_xx_ns
    if w == 0:
        return _hypo_cdf(np.asarray(t, float), a, b)
    return (_hypo_cdf_integral(t, a, b) - _hypo_cdf_integral(np.asarray(t) - w, a, b)) / w


def x_pdf(t, cfg: SourceConfig):
    w, a, b = cfg.pulse_width_ns, cfg.tau_x_ns, cfg.tau_xx_ns
    t = np.asarray(t, dtype=float)
    if w == 0:
        return _hypo_pdf(t, a, b)
    return (_hypo_cdf(t, a, b) - _hypo_cdf(t - w, a, b)) / w


def bg_cdf(t, cfg: SourceConfig):
    w, tau = cfg.pulse_width_ns, cfg.tau_bg_ns
    if w == 0:
        return -np.expm1(-np.maximum(t, 0.0) / tau)
    return (_exp_cdf_integral(t, tau) - _exp_cdf_integral(np.asarray(t) - w, tau)) / w


def _relative(window, cfg: SourceConfig):
    """Recorded-time window -> pulse-relative window clipped to the period."""
    if window is None:
        return 0.0, cfg.emission_window_ns
    lo = max(window[0] - cfg.pulse_delay_ns, 0.0)
    hi = min(window[1] - cfg.pulse_delay_ns, cfg.emission_window_ns)
    return lo, max(hi, lo)


def _cascade_moments(cfg: SourceConfig, xx_win, x_win, rate: complex):
    """Integrals over cascades with t1 in ``xx_win`` and t2 in ``x_win``.

    Returns ``(P, M)`` with ``P`` the unconditioned probability and ``M`` the
    unconditioned moment of ``exp(rate * delay)``.
    """
    a, b = xx_win
    xa, xb = x_win
    if b <= a or xb <= xa:
        return 0.0, 0j
    tx = cfg.tau_x_ns

    def inner(t1, k):
        lo = max(xa - t1, 0.0)
        hi = xb - t1
        if hi <= lo:
            return 0j
        if k == 0:
            return np.exp(-lo / tx) - np.exp(-hi / tx)
        kap = 1.0 / tx - k
        return (np.exp(-kap * lo) - np.exp(-kap * hi)) / (kap * tx)

    pts = sorted({p for p in (cfg.pulse_width_ns, xa, xb) if a < p < b})
    out = []
    for k in (0, rate):
        parts = []
        for part in (np.real, np.imag) if k != 0 else (np.real,):
            val, err = integrate.quad(
                lambda t: part(inner(t, k)) * float(xx_pdf(t, cfg)),
                a, b, points=pts or None, epsabs=1e-13, epsrel=1e-11, limit=200)
            if err > QUAD_TOL:
                raise IntegrationError(f"cascade integral did not converge (error {err:.2g})")
            parts.append(val)
        out.append(complex(*parts) if len(parts) == 2 else parts[0])
    return out[0], out[1]


@dataclass(frozen=True)
class CoincidenceBudget:
    """Expected clicks and same-pulse pairs per pulse inside the gates."""

    dot_pairs: float
    correlated_pairs: float
    singles_xx: dict
    singles_x: dict
    zero_peak_pairs: float
    side_peak_pairs: float
    coherence: complex

    @property
    def uncorrelated_fraction(self) -> float:
        if self.zero_peak_pairs <= 0:
            return 1.0
        return float(min(max(1.0 - self.correlated_pairs / self.zero_peak_pairs, 0.0), 1.0))


def coincidence_budget(cfg: SourceConfig, gate: GateWindows | None = None) -> CoincidenceBudget:
    """Per-pulse expected counts by origin, with the cascade coherence."""
    if gate is not None:
        gate.check(cfg.rep_period_ns)
    xx_win = _relative(gate.xx_window if gate else None, cfg)
    x_win = _relative(gate.x_window if gate else None, cfg)
    full = (0.0, cfg.emission_window_ns)
    eta = cfg.detect_efficiency
    omega = phase_rate(cfg.splitting_ueV)
    z_dot = float(x_cdf(cfg.emission_window_ns, cfg))
    z_bg = float(bg_cdf(cfg.emission_window_ns, cfg))

    if gate is None:
        q_pair = 1.0
        # truncation at the period end neglected: relative error ~exp(-T/tau_x)
        coherence = 1.0 / complex(1.0, -omega * cfg.tau_x_ns)
        p_xx = 1.0
        p_x = 1.0
    else:
        raw_pair, raw_m = _cascade_moments(cfg, xx_win, x_win, 1j * omega)
        q_pair = raw_pair / z_dot
        coherence = raw_m / raw_pair if raw_pair > 0 else 0j
        p_xx = _cascade_moments(cfg, xx_win, full, 0j)[0] / z_dot
        p_x = float(x_cdf(x_win[1], cfg) - x_cdf(x_win[0], cfg)) / z_dot

    def bg_in(win):
        return float(bg_cdf(win[1], cfg) - bg_cdf(win[0], cfg)) / z_bg

    def dark_in(window):
        width = cfg.rep_period_ns if window is None else window[1] - window[0]
        return cfg.dark_rate_hz * 1e-9 * width

    singles_xx = {
        "dot": cfg.dot_prob * eta * p_xx,
        "background": cfg.background_prob * eta * bg_in(xx_win),
        "dark": dark_in(gate.xx_window if gate else None),
    }
    singles_x = {
        "dot": cfg.dot_prob * eta * p_x,
        "background": cfg.background_prob * eta * bg_in(x_win),
        "dark": dark_in(gate.x_window if gate else None),
    }
    dot_pairs = cfg.dot_prob * eta**2 * q_pair
    total_xx = sum(singles_xx.values())
    total_x = sum(singles_x.values())
    zero = dot_pairs + total_xx * total_x - singles_xx["dot"] * singles_x["dot"]
    return CoincidenceBudget(
        dot_pairs=dot_pairs,
        correlated_pairs=dot_pairs * (1.0 - cfg.reexcite_prob),
        singles_xx=singles_xx,
        singles_x=singles_x,
        zero_peak_pairs=zero,
        side_peak_pairs=total_xx * total_x,
        coherence=complex(coherence),
    )


def uncorrelated_fraction(cfg: SourceConfig, gate: GateWindows | None = None) -> float:
    """Fraction of same-pulse coincidences carrying no polarization correlation."""
    return coincidence_budget(cfg, gate).uncorrelated_fraction


def time_averaged_state(cfg: SourceConfig, gate: GateWindows | None = None) -> TwoPhotonState:
    """Effective detected two-photon state ``(1-b) <rho(tau)> + b I/4``."""
    budget = coincidence_budget(cfg, gate)
    b = budget.uncorrelated_fraction
    if b >= 1.0:
        return TwoPhotonState.maximally_mixed()
    cascade = state_from_phase_average(budget.coherence)
    return cascade.mixed_with(TwoPhotonState.maximally_mixed(), b)


def dephasing_factor(cfg: SourceConfig) -> float:
    """Ungated real part of <exp(i S tau/hbar)>: 1/(1 + (S tau_x/hbar)^2)."""
    x = phase_rate(cfg.splitting_ueV) * cfg.tau_x_ns
    return 1.0 / (1.0 + x * x)


def emission_peaks(cfg: SourceConfig) -> tuple[float, float]:
    """Recorded times of the XX and X arrival-density maxima (ns)."""
    xx_mode = cfg.pulse_width_ns
    hi = cfg.pulse_width_ns + 10 * (cfg.tau_x_ns + cfg.tau_xx_ns)
    res = optimize.minimize_scalar(lambda t: -float(x_pdf(t, cfg)), bounds=(0.0, hi),
                                   method="bounded", options={"xatol": 1e-7})
    return cfg.pulse_delay_ns + xx_mode, cfg.pulse_delay_ns + float(res.x)


def peak_centred_gate(cfg: SourceConfig, xx_width_ns: float = 1.0,
                      x_width_ns: float = 1.5) -> GateWindows:
    """Windows of the given widths centred on the emission peaks."""
    xx_c, x_c = emission_peaks(cfg)
    return GateWindows(xx_c, xx_width_ns, x_c, x_width_ns)


def onset_gate(cfg: SourceConfig, xx_width_ns: float = 1.0,
               x_width_ns: float = 1.5) -> GateWindows:
    """Both windows open one background lifetime after the pump pulse ends.

    The prompt background has mostly decayed by then while the slower
    cascade photons are still arriving, so gating removes uncorrelated
    pairs faster than correlated ones.
    """
    start = cfg.pulse_delay_ns + cfg.pulse_width_ns + cfg.tau_bg_ns
    return GateWindows(start + xx_width_ns / 2, xx_width_ns, start + x_width_ns / 2, x_width_ns)


def calibrate(fidelity: float, s_rc: float, base: SourceConfig) -> SourceConfig:
    """Set ``tau_x_ns`` and ``reexcite_prob`` so the ungated source gives the
    requested fidelity and rectilinear/circular Bell parameter.

    Ungated, C_rect = r, C_diag = -C_circ = r D with r = 1 - b and D the
    dephasing factor, which fixes r and D from the two targets.  Background
    and dark counts of ``base`` are kept; re-excitation makes up the rest of b.
    """
    r = np.sqrt(2.0) * s_rc - 4.0 * fidelity + 1.0
    if not 0.0 < r <= 1.0:
        raise ValueError(f"targets imply correlated fraction {r:.4g} outside (0, 1]")
    d = s_rc / (np.sqrt(2.0) * r) - 1.0
    if not 0.0 < d <= 1.0:
        raise ValueError(f"targets imply dephasing factor {d:.4g} outside (0, 1]")
    omega = phase_rate(base.splitting_ueV)
    if omega <= 0 and d < 1.0:
        raise ValueError("zero splitting cannot produce dephasing")
    tau_x = np.sqrt(1.0 / d - 1.0) / omega if d < 1.0 else base.tau_x_ns
    cfg = base.replace(tau_x_ns=float(tau_x), reexcite_prob=0.0)
    b_target = 1.0 - r
    b0 = uncorrelated_fraction(cfg)
    if b0 > b_target + 1e-12:
        raise ValueError(f"background and dark counts alone give b = {b0:.4g} > {b_target:.4g}")
    if b_target - b0 <= 1e-12:
        return cfg
    q = optimize.brentq(lambda p: uncorrelated_fraction(cfg.replace(reexcite_prob=p)) - b_target,
                        0.0, 1.0, xtol=1e-14)
    return cfg.replace(reexcite_prob=float(q))


def ideal_config(**overrides) -> SourceConfig:
    """Noise-free, zero-splitting source (emits psi+ exactly)."""
    base = SourceConfig(splitting_ueV=0.0, background_fraction=0.0, reexcite_prob=0.0,
                        dark_rate_hz=0.0)
    return base.replace(**overrides)


__all__ = [
    "HBAR_UEV_NS", "SourceConfig", "GateWindows", "CoincidenceBudget", "IntegrationError",
    "evolved_pure_state", "time_averaged_state", "uncorrelated_fraction",
    "coincidence_budget", "dephasing_factor", "peak_centred_gate", "emission_peaks",
    "onset_gate", "calibrate",
    "ideal_config", "bell_state_psi_plus", "state_from_phase_average",
]
