"""Pulsed coincidence analysis: g2 histograms, degrees of correlation,
fidelity to psi+, two-setting Bell parameters and the four-setting CHSH sum.

Same-pulse pairs form the zero-delay peak; pairs ``k`` pulses apart form
side peak ``k``.  Normalisation uses side peaks with ``2 <= |k| <= K`` so the
neighbouring peaks (which re-excitation can contaminate) stay out.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .events import XX, X, AnalyzerSetting, Events, RunManifest, chsh_settings
from .polarization import (BasisPair, TwoPhotonState, bell_state_psi_plus, correlation_E,
                           degrees_of_correlation)
from .source import GateWindows

SQRT2 = np.sqrt(2.0)
SIDE_MIN = 2
DEFAULT_K = 10
UNPOLARIZED_TOL = 1e-9


class EmptyChannelError(ValueError):
    """No events left in a channel after selection/gating."""


class NormalizationError(ValueError):
    pass


class Measured(NamedTuple):
    value: float
    error: float

    def __format__(self, spec):
        spec = spec or ".4f"
        return f"{self.value:{spec}} +/- {self.error:{spec}}"


@dataclass
class PulseCounts:
    """Per-pulse click counts ``[xx_pass, xx_orth, x_pass, x_orth]``.

    Counts from disjoint event chunks merge exactly by addition.
    """

    counts: np.ndarray
    setting_id: int
    gated: bool = False

    @property
    def n_pulses(self) -> int:
        return self.counts.shape[0]

    def merge(self, other: "PulseCounts") -> "PulseCounts":
        n = max(self.n_pulses, other.n_pulses)
        out = np.zeros((n, 4), np.int64)
        out[: self.n_pulses] += self.counts
        out[: other.n_pulses] += other.counts
        return PulseCounts(out, self.setting_id, self.gated)


def gate_mask(events: Events, gate: GateWindows | None) -> np.ndarray:
    if gate is None:
        return np.ones(len(events), bool)
    lo_xx, hi_xx = gate.xx_window
    lo_x, hi_x = gate.x_window
    t = events.time
    in_xx = (events.channel == XX) & (t >= lo_xx) & (t < hi_xx)
    in_x = (events.channel == X) & (t >= lo_x) & (t < hi_x)
    return in_xx | in_x


def pulse_counts(events: Events, setting_id: int, gate: GateWindows | None = None,
                 n_pulses: int | None = None) -> PulseCounts:
    sel = (events.setting == setting_id) & gate_mask(events, gate)
    p = events.pulse[sel]
    if n_pulses is None:
        n_pulses = int(p.max()) + 1 if p.size else 0
    column = 2 * events.channel[sel].astype(np.int64) + (1 - events.outcome[sel].astype(np.int64))
    flat = np.bincount(p * 4 + column, minlength=4 * n_pulses)
    return PulseCounts(flat.reshape(n_pulses, 4), setting_id, gate is not None)


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Pair counts by pulse offset (X pulse minus XX pulse)."""

    offsets: np.ndarray
    counts: np.ndarray
    kind: str
    setting_id: int
    gated: bool
    total_pulses: int

    def __post_init__(self):
        if (np.asarray(self.counts) < 0).any():
            raise ValueError("histogram counts must be >= 0")
        if 0 not in self.offsets:
            raise ValueError("histogram must contain the zero-offset bin")

    def at(self, k: int) -> int:
        return int(self.counts[np.searchsorted(self.offsets, k)])

    @property
    def max_offset(self) -> int:
        return int(self.offsets.max())


def _shifted_dot(a: np.ndarray, b: np.ndarray, k: int) -> int:
    # float64 dot goes through BLAS and is exact for counts below 2**53
    n = len(a)
    if k >= 0:
        return int(round(np.dot(a[: n - k], b[k:])))
    return int(round(np.dot(a[-k:], b[: n + k])))


def histograms_from_counts(pc: PulseCounts, max_offset: int = DEFAULT_K):
    """(co, cross) histograms from per-pulse counts."""
    if max_offset < 10:
        raise ValueError("max_offset must be >= 10")
    c = pc.counts
    if c[:, :2].sum() == 0 or c[:, 2:].sum() == 0:
        empty = [name for name, s in (("XX", c[:, :2].sum()), ("X", c[:, 2:].sum())) if s == 0]
        raise EmptyChannelError(f"setting {pc.setting_id}: no events in channel(s) "
                                f"{', '.join(empty)}")
    offs = np.arange(-max_offset, max_offset + 1)
    xp, xo, yp, yo = (np.ascontiguousarray(c[:, j], dtype=np.float64) for j in range(4))
    co = [_shifted_dot(xp, yp, k) + _shifted_dot(xo, yo, k) for k in offs]
    cross = [_shifted_dot(xp, yo, k) + _shifted_dot(xo, yp, k) for k in offs]
    mk = lambda vals, kind: CoincidenceHistogram(offs, np.array(vals, np.int64), kind,
                                                 pc.setting_id, pc.gated, pc.n_pulses)
    return mk(co, "co"), mk(cross, "cross")


def build_histogram(events: Events, setting_id: int, gate: GateWindows | None = None,
                    max_offset: int = DEFAULT_K, n_pulses: int | None = None):
    """Co- and cross-polarised coincidence histograms for one setting.

    The gate, when given, drops XX clicks outside its XX window and X clicks
    outside its X window before pairing.
    """
    return histograms_from_counts(pulse_counts(events, setting_id, gate, n_pulses), max_offset)


@dataclass(frozen=True)
class G2:
    value: float
    error: float
    zero_count: int
    side_mean: float
    side_total: float


def g2_zero(hist: CoincidenceHistogram) -> G2:
    """Zero-delay peak over the mean of side peaks 2 <= |k| <= K."""
    k = hist.offsets
    side = np.abs(k) >= SIDE_MIN
    if side.sum() < 10:
        raise NormalizationError("need at least 10 side peaks")
    n = hist.total_pulses
    # each side offset has n - |k| candidate pulse pairs against n for offset 0
    weight = n / np.maximum(n - np.abs(k[side]), 1)
    side_counts = hist.counts[side] * weight
    side_total = float(hist.counts[side].sum())
    mean = float(side_counts.mean())
    if mean <= 0:
        raise NormalizationError("side-peak mean is zero; g2 normalisation undefined")
    n0 = hist.at(0)
    g = n0 / mean
    err = g * np.sqrt((1.0 / n0 if n0 else 0.0) + 1.0 / side_total)
    return G2(g, float(err), n0, mean, side_total)


@dataclass(frozen=True)
class CorrelationResult:
    g2_co_zero: float
    g2_cross_zero: float
    C: float
    sigma_C: float
    basis: str
    n_co: int = 0
    n_cross: int = 0

    @property
    def measured(self) -> Measured:
        return Measured(self.C, self.sigma_C)


def degree_of_correlation(g_co: G2, g_cross: G2, basis: str = "") -> CorrelationResult:
    """C = (g_co - g_cross)/(g_co + g_cross) with Poisson error propagation.

    With exact side-peak means the error reduces to
    2 sqrt(N_co N_cross / (N_co + N_cross)^3) of the zero-peak counts.
    """
    s = g_co.value + g_cross.value
    if s <= 0:
        raise NormalizationError("g2_co + g2_cross is zero; correlation undefined")
    c = (g_co.value - g_cross.value) / s
    d_co = 2 * g_cross.value / s**2
    d_cr = -2 * g_co.value / s**2
    sigma = float(np.hypot(d_co * g_co.error, d_cr * g_cross.error))
    return CorrelationResult(g_co.value, g_cross.value, float(c), sigma, basis,
                             g_co.zero_count, g_cross.zero_count)


def counts_correlation(n_co: int, n_cross: int, basis: str = "") -> CorrelationResult:
    """Correlation from raw zero-peak counts (equal side-peak levels)."""
    n = n_co + n_cross
    if n <= 0:
        raise NormalizationError("no coincidences; correlation undefined")
    c = (n_co - n_cross) / n
    sigma = 2 * np.sqrt(n_co * n_cross / n**3)
    return CorrelationResult(float(n_co), float(n_cross), float(c), float(sigma), basis,
                             n_co, n_cross)


def _as_measured(v) -> Measured:
    if isinstance(v, CorrelationResult):
        return v.measured
    if isinstance(v, Measured):
        return v
    if isinstance(v, tuple):
        return Measured(float(v[0]), float(v[1]))
    return Measured(float(v), 0.0)


def fidelity(c_rect, c_diag, c_circ) -> Measured:
    """(1 + C_rect + C_diag - C_circ)/4 with errors added in quadrature."""
    r, d, c = (_as_measured(v) for v in (c_rect, c_diag, c_circ))
    for m in (r, d, c):
        if not -1 - 1e-12 <= m.value <= 1 + 1e-12:
            raise ValueError("degrees of correlation must lie in [-1, 1]")
    val = (1 + r.value + d.value - c.value) / 4
    return Measured(val, float(np.sqrt(r.error**2 + d.error**2 + c.error**2) / 4))


def bell_two_setting(c_a, c_b, plane: str) -> Measured:
    """sqrt(2)(C_a - C_b) for planes RC and DC, sqrt(2)(C_a + C_b) for RD."""
    a, b = _as_measured(c_a), _as_measured(c_b)
    if plane in ("RC", "DC"):
        val = SQRT2 * (a.value - b.value)
    elif plane == "RD":
        val = SQRT2 * (a.value + b.value)
    else:
        raise ValueError(f"plane must be RC, DC or RD, got {plane!r}")
    return Measured(float(val), float(SQRT2 * np.hypot(a.error, b.error)))


@dataclass(frozen=True)
class BellResult:
    C_rect: Measured
    C_diag: Measured
    C_circ: Measured
    S_RC: Measured
    S_DC: Measured
    S_RD: Measured
    fidelity: Measured
    gated: bool = False
    correlations: dict = field(default_factory=dict, compare=False)

    def violations(self) -> dict[str, float]:
        """Number of standard errors by which each parameter exceeds 2."""
        out = {}
        for name in ("S_RC", "S_DC", "S_RD"):
            m = getattr(self, name)
            out[name] = (m.value - 2) / m.error if m.error > 0 else float("inf") * np.sign(m.value - 2)
        return out


def bell_parameters(c_rect, c_diag, c_circ, gated: bool = False) -> BellResult:
    r, d, c = (_as_measured(v) for v in (c_rect, c_diag, c_circ))
    corr = {k: v for k, v in zip(("rectilinear", "diagonal", "circular"),
                                 (c_rect, c_diag, c_circ)) if isinstance(v, CorrelationResult)}
    return BellResult(r, d, c,
                      bell_two_setting(r, c, "RC"),
                      bell_two_setting(d, c, "DC"),
                      bell_two_setting(r, d, "RD"),
                      fidelity(r, d, c), gated, corr)


@dataclass(frozen=True)
class ChshResult:
    labels: tuple
    E: tuple
    signs: tuple
    S: Measured

    @property
    def convention(self) -> str:
        terms = [f"{'+' if s > 0 else '-'}E({lab})" for s, lab in zip(self.signs, self.labels)]
        return " ".join(terms)


CHSH_SIGNS = (1, -1, 1, 1)


def chsh(correlations: Sequence, signs: Sequence[int] = CHSH_SIGNS,
         labels: Sequence[str] | None = None,
         expected_labels: Sequence[str] | None = None) -> ChshResult:
    """Signed sum of four correlation values, errors in quadrature.

    ``correlations`` holds CorrelationResults, Measured values or
    ``(value, error)`` tuples in CHSH order (a,b), (a',b), (a,b'), (a',b').
    """
    if len(correlations) != 4:
        raise ValueError("CHSH needs exactly four correlation values")
    if len(signs) != 4 or any(s not in (1, -1) for s in signs):
        raise ValueError("signs must be four values of +1/-1")
    if labels is None:
        labels = tuple(c.basis if isinstance(c, CorrelationResult) else f"E{k}"
                       for k, c in enumerate(correlations))
    if expected_labels is not None and tuple(labels) != tuple(expected_labels):
        raise ValueError(f"setting labels {tuple(labels)} do not match expected "
                         f"{tuple(expected_labels)}")
    ms = [_as_measured(c) for c in correlations]
    val = sum(s * m.value for s, m in zip(signs, ms))
    err = float(np.sqrt(sum(m.error**2 for m in ms)))
    return ChshResult(tuple(labels), tuple(ms), tuple(int(s) for s in signs), Measured(float(val), err))


def calibrated_signs(settings: Sequence[AnalyzerSetting]) -> tuple[int, ...]:
    """Signs that make the CHSH sum positive-maximal for ideal psi+."""
    psi = bell_state_psi_plus()
    signs = []
    for s in settings:
        e = correlation_E(psi, s.basis_pair())
        if abs(e) < 1e-9:
            raise ValueError(f"setting {s.label!r} has zero ideal correlation; sign undefined")
        signs.append(1 if e > 0 else -1)
    return tuple(signs)


# ----- analytic (probability-level) path -----

def analytic_bell(rho: TwoPhotonState) -> BellResult:
    c = degrees_of_correlation(rho)
    return bell_parameters(c["rectilinear"], c["diagonal"], c["circular"])


def analytic_chsh(rho: TwoPhotonState, settings: Sequence[AnalyzerSetting] | None = None,
                  signs: Sequence[int] | None = None) -> ChshResult:
    settings = list(settings) if settings is not None else chsh_settings(0)
    signs = calibrated_signs(settings) if signs is None else signs
    es = [Measured(correlation_E(rho, s.basis_pair()), 0.0) for s in settings]
    return chsh(es, signs, labels=[s.label for s in settings])


# Stokes directions: s1 = H, s2 = D, s3 = L
_DIAG = np.array([0.0, 1.0, 0.0])
_CIRC = np.array([0.0, 0.0, 1.0])


def optimal_dc_pairs() -> list[BasisPair]:
    """Diagonal/circular on photon 1 and elliptical bases on photon 2.

    Returned in CHSH order (a,b), (a',b), (a,b'), (a',b') with a = D,
    a' = circular, b = (D + C)/sqrt(2), b' = (D - C)/sqrt(2) on the sphere.
    """
    b = (_DIAG + _CIRC) / SQRT2
    b2 = (_DIAG - _CIRC) / SQRT2
    return [BasisPair.from_stokes(_DIAG, b), BasisPair.from_stokes(_CIRC, b),
            BasisPair.from_stokes(_DIAG, b2), BasisPair.from_stokes(_CIRC, b2)]


def bell_equivalence_check(rho: TwoPhotonState) -> tuple[float, float]:
    """(sqrt(2)(E(D,D) - E(C,C)), four-setting CHSH at the D/C optimum).

    Only defined for unpolarized input: both single-photon states must be
    maximally mixed.
    """
    pol = rho.polarization_magnitude()
    if pol > UNPOLARIZED_TOL:
        raise ValueError(f"state is polarized (degree of polarization {pol:.3g}); "
                         "the two-setting Bell form needs an unpolarized source")
    lhs = SQRT2 * (correlation_E(rho, BasisPair.named("diagonal"))
                   - correlation_E(rho, BasisPair.named("circular")))
    es = [correlation_E(rho, p) for p in optimal_dc_pairs()]
    rhs = es[0] - es[1] + es[2] + es[3]
    return float(lhs), float(rhs)


# ----- event-level analysis -----

def correlation_for_setting(events: Events, setting: AnalyzerSetting,
                            gate: GateWindows | None = None,
                            n_pulses: int | None = None) -> CorrelationResult:
    co, cross = build_histogram(events, setting.id, gate, n_pulses=n_pulses)
    return degree_of_correlation(g2_zero(co), g2_zero(cross), setting.label)


def analyze_bases(events: Events, manifest: RunManifest,
                  gate: GateWindows | None = None) -> BellResult:
    """Bell parameters from the rectilinear, diagonal and circular settings."""
    by_label = manifest.by_label()
    missing = [b for b in ("rectilinear", "diagonal", "circular") if b not in by_label]
    if missing:
        raise KeyError(f"event file lacks basis settings: {', '.join(missing)}")
    res = [correlation_for_setting(events, by_label[b], gate, manifest.n_pulses)
           for b in ("rectilinear", "diagonal", "circular")]
    return bell_parameters(*res, gated=gate is not None)


def find_chsh_settings(manifest: RunManifest) -> list[AnalyzerSetting]:
    expected = [s.label for s in chsh_settings(0)]
    by_label = manifest.by_label()
    missing = [lab for lab in expected if lab not in by_label]
    if missing:
        raise KeyError(f"event file lacks CHSH settings: {', '.join(missing)}")
    return [by_label[lab] for lab in expected]


def analyze_chsh(events: Events, manifest: RunManifest,
                 gate: GateWindows | None = None) -> ChshResult:
    settings = find_chsh_settings(manifest)
    res = [correlation_for_setting(events, s, gate, manifest.n_pulses) for s in settings]
    return chsh(res, calibrated_signs(settings), labels=[s.label for s in settings])


def peak_gate(events: Events, rep_period_ns: float, xx_width_ns: float = 1.0,
              x_width_ns: float = 1.5, bin_ns: float = 0.05) -> GateWindows:
    """Windows centred on the peak bin of each channel's arrival histogram."""
    edges = np.arange(0.0, rep_period_ns + bin_ns, bin_ns)
    centres = []
    for ch, width in ((XX, xx_width_ns), (X, x_width_ns)):
        t = events.time[events.channel == ch]
        if t.size == 0:
            raise EmptyChannelError("cannot centre a gate on an empty channel")
        h, _ = np.histogram(t, edges)
        k = int(np.argmax(h))
        c = 0.5 * (edges[k] + edges[k + 1])
        centres.append(float(np.clip(c, width / 2, rep_period_ns - width / 2)))
    return GateWindows(centres[0], xx_width_ns, centres[1], x_width_ns)
