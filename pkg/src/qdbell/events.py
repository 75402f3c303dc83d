"""Monte-Carlo generation of time-tagged detection events.

Each channel (XX = photon 1, X = photon 2) ends in a polarizing beam
splitter with a detector on both ports, so every click carries an outcome:
1 for the transmitted (pass) port, 0 for the reflected (orthogonal) port.

Per pulse and analyzer setting the generator draws, from counter-based
streams keyed by (seed, setting id, pulse index):

* a dot cascade with probability ``emission_prob * (1 - background_fraction)``,
  with emission times from :func:`sample_emission_times` and polarization
  outcomes sampled from the phase-precessed pure state for the actual
  exciton delay;
* with probability ``reexcite_prob`` the cascade's X photon is replaced by
  an unpolarized partner with the same timing;
* one background photon per channel with probability
  ``emission_prob * background_fraction`` (unpolarized, prompt transient);
* Poisson dark counts per channel, uniform in the period, random outcome.

Every photon is detected independently with ``detect_efficiency``.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .polarization import BasisPair, JonesOperator, polarizer, waveplate
from .rng import PulseStreams
from .source import SourceConfig, phase_rate

FORMAT_VERSION = "qdbell-events/1"
DEFAULT_SEED = 20080301

XX, X = 0, 1
CHANNEL_NAMES = ("XX", "X")
ORIGINS = ("dot", "background", "dark", "reexcite")
DOT, BACKGROUND, DARK, REEXCITE = range(4)

# stream slot layout per pulse
_SLOT_DOT = 0
_SLOT_REEXCITE = 1
_SLOT_DETECT = (2, 3)
_SLOT_OUTCOME = (4, 5)
_SLOT_BG = (10, 20)        # per channel: present, detected, outcome, then times
_SLOT_DARK_N = (30, 31)
_SLOT_TIMES = 100          # cascade timing attempts: 100 + 3k .. 100 + 3k + 2
_SLOT_BG_TIMES = (400, 600)
_SLOT_DARK = 1000          # 1000 + 4j + 2c (time), +1 (outcome)
MAX_ATTEMPTS = 64

_ELEMENT_CODES = {"hwp": "half", "qwp": "quarter", "pol": None}


def parse_chain(text: str) -> tuple[JonesOperator, ...]:
    """Analyzer chain from tokens like ``"hwp:22.5 pol:0"`` (beam order)."""
    ops = []
    for tok in text.replace(",", " ").split():
        try:
            name, angle = tok.split(":")
            angle = float(angle)
        except ValueError:
            raise ValueError(f"bad analyzer element {tok!r}; expected kind:angle") from None
        if name not in _ELEMENT_CODES:
            raise ValueError(f"unknown analyzer element {name!r}")
        kind = _ELEMENT_CODES[name]
        ops.append(polarizer(angle) if kind is None else waveplate(kind, angle))
    return tuple(ops)


def format_chain(chain: Sequence[JonesOperator]) -> str:
    names = {"half-wave": "hwp", "quarter-wave": "qwp", "polarizer": "pol"}
    return " ".join(f"{names[op.kind]}:{op.angle_deg:g}" for op in chain)


@dataclass(frozen=True)
class AnalyzerSetting:
    """Waveplate/polarizer chains for the XX (channel 1) and X (channel 2) arms."""

    id: int
    label: str
    channel1_chain: tuple
    channel2_chain: tuple

    def __post_init__(self):
        for chain in (self.channel1_chain, self.channel2_chain):
            kinds = [op.kind for op in chain]
            if not kinds or kinds[-1] != "polarizer" or kinds.count("polarizer") != 1:
                raise ValueError(f"setting {self.label!r}: each chain needs exactly one "
                                 "polarizer, placed last")
            if any(k not in ("half-wave", "quarter-wave", "polarizer") for k in kinds):
                raise ValueError(f"setting {self.label!r}: only waveplates and polarizers allowed")

    def basis_pair(self) -> BasisPair:
        return BasisPair.from_chains(self.channel1_chain, self.channel2_chain)

    def to_dict(self) -> dict:
        return {"id": self.id, "label": self.label,
                "xx": format_chain(self.channel1_chain), "x": format_chain(self.channel2_chain)}

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyzerSetting":
        return cls(int(d["id"]), d["label"], parse_chain(d["xx"]), parse_chain(d["x"]))


BASIS_CHAINS = {
    "rectilinear": "pol:0",
    "diagonal": "hwp:22.5 pol:0",
    "circular": "qwp:45 pol:0",
}
# half-waveplate angles: biexciton arm (alpha, alpha'), exciton arm (beta, beta')
CHSH_XX_ANGLES = (11.25, 33.75)
CHSH_X_ANGLES = (0.0, 22.5)


def basis_setting(label: str, setting_id: int) -> AnalyzerSetting:
    chain = parse_chain(BASIS_CHAINS[label])
    return AnalyzerSetting(setting_id, label, chain, chain)


def chsh_label(xx_deg: float, x_deg: float) -> str:
    return f"chsh-{xx_deg:g}-{x_deg:g}"


def chsh_settings(first_id: int, xx_angles=CHSH_XX_ANGLES, x_angles=CHSH_X_ANGLES):
    """The four settings in CHSH order (a,b), (a',b), (a,b'), (a',b')."""
    a, a2 = xx_angles
    b, b2 = x_angles
    out = []
    for k, (u, v) in enumerate([(a, b), (a2, b), (a, b2), (a2, b2)]):
        out.append(AnalyzerSetting(first_id + k, chsh_label(u, v),
                                   parse_chain(f"hwp:{u:g} pol:0"),
                                   parse_chain(f"hwp:{v:g} pol:0")))
    return out


def standard_settings(labels: Sequence[str]) -> list[AnalyzerSetting]:
    """Settings for labels among the named bases and ``"chsh"`` (four settings)."""
    out: list[AnalyzerSetting] = []
    for lab in labels:
        if lab == "chsh":
            out.extend(chsh_settings(len(out)))
        elif lab in BASIS_CHAINS:
            out.append(basis_setting(lab, len(out)))
        else:
            raise ValueError(f"unknown setting label {lab!r}")
    return out


class DetectionEvent(NamedTuple):
    pulse_index: int
    channel: str
    time_in_period_ns: float
    setting_id: int
    outcome: int
    origin: str | None = None


@dataclass
class Events:
    """Column store of detection events."""

    pulse: np.ndarray
    channel: np.ndarray
    time: np.ndarray
    setting: np.ndarray
    outcome: np.ndarray
    origin: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.pulse)

    def __iter__(self) -> Iterator[DetectionEvent]:
        for k in range(len(self)):
            origin = None if self.origin is None else ORIGINS[self.origin[k]]
            yield DetectionEvent(int(self.pulse[k]), CHANNEL_NAMES[self.channel[k]],
                                 float(self.time[k]), int(self.setting[k]),
                                 int(self.outcome[k]), origin)

    @classmethod
    def empty(cls, with_origin: bool = True) -> "Events":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(0),
                   np.zeros(0, np.int32), np.zeros(0, np.int8),
                   np.zeros(0, np.int8) if with_origin else None)

    @classmethod
    def concat(cls, parts: Sequence["Events"]) -> "Events":
        parts = list(parts)
        if not parts:
            return cls.empty()
        keep_origin = all(p.origin is not None for p in parts)
        return cls(
            np.concatenate([p.pulse for p in parts]),
            np.concatenate([p.channel for p in parts]),
            np.concatenate([p.time for p in parts]),
            np.concatenate([p.setting for p in parts]),
            np.concatenate([p.outcome for p in parts]),
            np.concatenate([p.origin for p in parts]) if keep_origin else None,
        )

    def take(self, idx) -> "Events":
        return Events(self.pulse[idx], self.channel[idx], self.time[idx], self.setting[idx],
                      self.outcome[idx], None if self.origin is None else self.origin[idx])

    def sorted(self) -> "Events":
        """Order by setting, pulse, channel, time, outcome."""
        order = np.lexsort((self.outcome, self.time, self.channel, self.pulse, self.setting))
        return self.take(order)

    def for_setting(self, setting_id: int) -> "Events":
        return self.take(self.setting == setting_id)

    def without_origin(self) -> "Events":
        return Events(self.pulse, self.channel, self.time, self.setting, self.outcome, None)


@dataclass(frozen=True)
class RunManifest:
    config: SourceConfig
    settings: tuple
    n_pulses: int
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.n_pulses <= 0:
            raise ValueError("n_pulses must be > 0")
        ids = [s.id for s in self.settings]
        if len(set(ids)) != len(ids):
            raise ValueError("setting ids must be unique")
        if not self.settings:
            raise ValueError("manifest needs at least one analyzer setting")

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(),
                "settings": [s.to_dict() for s in self.settings],
                "n_pulses": int(self.n_pulses), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(SourceConfig.from_dict(d["config"]),
                   tuple(AnalyzerSetting.from_dict(s) for s in d["settings"]),
                   int(d["n_pulses"]), int(d["seed"]))

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    def setting(self, setting_id: int) -> AnalyzerSetting:
        for s in self.settings:
            if s.id == setting_id:
                return s
        raise KeyError(setting_id)

    def by_label(self) -> dict[str, AnalyzerSetting]:
        return {s.label: s for s in self.settings}


@dataclass
class Diagnostics:
    """Counters collected during generation."""

    overflow_resamples: int = 0
    pulses: int = 0
    cascades: int = 0
    by_origin: dict = field(default_factory=lambda: {o: 0 for o in ORIGINS})

    def merge(self, other: "Diagnostics") -> None:
        self.overflow_resamples += other.overflow_resamples
        self.pulses += other.pulses
        self.cascades += other.cascades
        for k, v in other.by_origin.items():
            self.by_origin[k] += v


def _exp(u, tau):
    return -tau * np.log1p(-u)


def sample_emission_times(cfg: SourceConfig, streams: PulseStreams, keys: np.ndarray,
                          slot_base: int = _SLOT_TIMES):
    """Pulse-relative (t_xx, t_x) for each key, redrawing cascades that overflow.

    Returns ``(t_xx, t_x, resamples)``; cascades whose X photon would land past
    the end of the period are redrawn from fresh slots up to ``MAX_ATTEMPTS``.
    """
    n = len(keys)
    t_xx = np.empty(n)
    t_x = np.empty(n)
    todo = np.arange(n)
    resamples = 0
    limit = cfg.emission_window_ns
    for attempt in range(MAX_ATTEMPTS):
        k = keys[todo]
        s = slot_base + 3 * attempt
        a = cfg.pulse_width_ns * streams.uniform(k, s) + _exp(streams.uniform(k, s + 1), cfg.tau_xx_ns)
        b = a + _exp(streams.uniform(k, s + 2), cfg.tau_x_ns)
        ok = b < limit
        t_xx[todo[ok]] = a[ok]
        t_x[todo[ok]] = b[ok]
        todo = todo[~ok]
        if todo.size == 0:
            return t_xx, t_x, resamples
        resamples += todo.size
    raise RuntimeError(f"{todo.size} cascades still overflow the period after "
                       f"{MAX_ATTEMPTS} draws")


def _sample_background_times(cfg, streams, keys, slot_base):
    n = len(keys)
    t = np.empty(n)
    todo = np.arange(n)
    resamples = 0
    for attempt in range(MAX_ATTEMPTS):
        k = keys[todo]
        s = slot_base + 2 * attempt
        v = cfg.pulse_width_ns * streams.uniform(k, s) + _exp(streams.uniform(k, s + 1), cfg.tau_bg_ns)
        ok = v < cfg.emission_window_ns
        t[todo[ok]] = v[ok]
        todo = todo[~ok]
        if todo.size == 0:
            return t, resamples
        resamples += todo.size
    raise RuntimeError("background photons still overflow the period")


def _pair_amplitudes(pair: BasisPair):
    """Coefficients so that P[i,j] = |A[i,j] + exp(i phi) B[i,j]|^2 / 2."""
    A = np.empty((2, 2), complex)
    B = np.empty((2, 2), complex)
    for i in (0, 1):
        for j in (0, 1):
            a, b = pair.channel1[i], pair.channel2[j]
            A[i, j] = np.conj(a[0]) * np.conj(b[0])
            B[i, j] = np.conj(a[1]) * np.conj(b[1])
    return A, B


def joint_outcome_probabilities(pair: BasisPair, phi: np.ndarray) -> np.ndarray:
    """(n, 4) probabilities of (pass,pass), (pass,orth), (orth,pass), (orth,orth)."""
    A, B = _pair_amplitudes(pair)
    e = np.exp(1j * np.asarray(phi, float))[:, None]
    p = np.abs(A.reshape(1, 4) + e * B.reshape(1, 4)) ** 2 / 2
    return p / p.sum(axis=1, keepdims=True)


def generate_chunk(cfg: SourceConfig, setting: AnalyzerSetting, seed: int,
                   start: int, stop: int) -> tuple[Events, Diagnostics]:
    """Events for pulses ``start <= pulse < stop`` of one setting."""
    streams = PulseStreams(seed, setting.id)
    pulses = np.arange(start, stop, dtype=np.int64)
    keys = streams.pulse_keys(pulses)
    eta = cfg.detect_efficiency
    diag = Diagnostics(pulses=len(pulses))
    cols: list[tuple] = []   # (pulse, channel, t_rel_or_abs, outcome, origin, absolute?)

    # dot cascades
    dot = streams.uniform(keys, _SLOT_DOT) < cfg.dot_prob
    dk, dp = keys[dot], pulses[dot]
    diag.cascades = int(dot.sum())
    if dk.size:
        t1, t2, res = sample_emission_times(cfg, streams, dk)
        diag.overflow_resamples += res
        reex = streams.uniform(dk, _SLOT_REEXCITE) < cfg.reexcite_prob
        probs = joint_outcome_probabilities(setting.basis_pair(), phase_rate(cfg.splitting_ueV) * (t2 - t1))
        u = streams.uniform(dk, _SLOT_OUTCOME[0])
        joint = (u[:, None] >= np.cumsum(probs, axis=1)[:, :3]).sum(axis=1)
        out_xx = np.where(joint < 2, 1, 0)
        out_x = np.where(joint % 2 == 0, 1, 0)
        # re-excited pulses: independent unpolarized outcomes
        out_xx = np.where(reex, (u < 0.5).astype(int), out_xx)
        out_x = np.where(reex, (streams.uniform(dk, _SLOT_OUTCOME[1]) < 0.5).astype(int), out_x)
        det_xx = streams.uniform(dk, _SLOT_DETECT[0]) < eta
        det_x = streams.uniform(dk, _SLOT_DETECT[1]) < eta
        cols.append((dp[det_xx], XX, t1[det_xx], out_xx[det_xx], np.full(det_xx.sum(), DOT)))
        cols.append((dp[det_x], X, t2[det_x], out_x[det_x], np.where(reex[det_x], REEXCITE, DOT)))

    # background photons
    if cfg.background_prob > 0:
        for ch in (XX, X):
            base = _SLOT_BG[ch]
            has = (streams.uniform(keys, base) < cfg.background_prob) & \
                  (streams.uniform(keys, base + 1) < eta)
            bk, bp = keys[has], pulses[has]
            if bk.size:
                t, res = _sample_background_times(cfg, streams, bk, _SLOT_BG_TIMES[ch])
                diag.overflow_resamples += res
                out = (streams.uniform(bk, base + 2) < 0.5).astype(int)
                cols.append((bp, ch, t, out, np.full(bk.size, BACKGROUND)))

    parts = []
    for p, ch, t, out, org in cols:
        parts.append(Events(p, np.full(p.size, ch, np.int8), t + cfg.pulse_delay_ns,
                            np.full(p.size, setting.id, np.int32), out.astype(np.int8),
                            np.asarray(org, np.int8)))

    # dark counts, uniform over the recorded period
    mu = cfg.dark_rate_hz * 1e-9 * cfg.rep_period_ns
    if mu > 0:
        for ch in (XX, X):
            u = streams.uniform(keys, _SLOT_DARK_N[ch])
            n = np.zeros(u.size, np.int64)
            some = u >= np.exp(-mu)
            n[some] = stats.poisson.ppf(u[some], mu).astype(np.int64)
            for j in range(int(n.max()) if n.size else 0):
                sel = n > j
                kk = keys[sel]
                s = _SLOT_DARK + 4 * j + 2 * ch
                t = cfg.rep_period_ns * streams.uniform(kk, s)
                out = (streams.uniform(kk, s + 1) < 0.5).astype(np.int8)
                parts.append(Events(pulses[sel], np.full(kk.size, ch, np.int8), t,
                                    np.full(kk.size, setting.id, np.int32), out,
                                    np.full(kk.size, DARK, np.int8)))

    ev = Events.concat(parts).sorted() if parts else Events.empty()
    for k, name in enumerate(ORIGINS):
        diag.by_origin[name] = int((ev.origin == k).sum())
    return ev, diag


def generate_run(manifest: RunManifest, chunk_pulses: int = 250_000,
                 max_workers: int | None = None) -> tuple[Events, Diagnostics]:
    """All events of a manifest, ordered by setting, pulse and channel.

    Chunks are independent; ``max_workers > 1`` runs them on a thread pool and
    the ordered merge makes the result identical to serial generation.
    """
    for s in manifest.settings:
        if not isinstance(s, AnalyzerSetting):
            raise TypeError("manifest settings must be AnalyzerSetting instances")
        s.basis_pair()
    jobs = [(s, a, min(a + chunk_pulses, manifest.n_pulses))
            for s in manifest.settings for a in range(0, manifest.n_pulses, chunk_pulses)]

    def run(job):
        s, a, b = job
        return generate_chunk(manifest.config, s, manifest.seed, a, b)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    diag = Diagnostics()
    for _, d in results:
        diag.merge(d)
    # jobs run in (setting, pulse range) order and each chunk is sorted, so
    # concatenation already gives the ordered merge
    return Events.concat([e for e, _ in results]), diag


# ----- event files -----

def write_events(path, events: Events, manifest: RunManifest, truth: bool = False) -> str:
    """Write the comma-separated event file; returns the manifest digest."""
    path = Path(path)
    frame = pd.DataFrame({
        "pulse": events.pulse,
        "channel": np.asarray(CHANNEL_NAMES, dtype=object)[events.channel],
        "time": events.time,
        "setting": events.setting,
        "outcome": events.outcome,
    })
    if truth and events.origin is not None:
        frame["origin"] = np.asarray(ORIGINS, dtype=object)[events.origin]
    with open(path, "w", newline="") as fh:
        fh.write(f"# {FORMAT_VERSION} digest={manifest.digest}\n")
        fh.write(f"# manifest {manifest.serialize()}\n")
        frame.to_csv(fh, header=False, index=False, float_format="%.6f", lineterminator="\n")
    return manifest.digest


class EventFileError(ValueError):
    pass


def read_events(path) -> tuple[Events, RunManifest | None, str]:
    """Parse an event file into (events, manifest or None, digest)."""
    path = Path(path)
    manifest = None
    digest = ""
    n_header = 0
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith(f"# {FORMAT_VERSION}"):
            raise EventFileError(f"{path}: missing '{FORMAT_VERSION}' header line")
        n_header = 1
        for tok in first.split():
            if tok.startswith("digest="):
                digest = tok.split("=", 1)[1]
        second = fh.readline()
        if second.startswith("# manifest "):
            n_header = 2
            manifest = RunManifest.from_dict(json.loads(second[len("# manifest "):]))
            if digest and manifest.digest != digest:
                raise EventFileError(f"{path}: manifest does not match header digest")
    try:
        frame = pd.read_csv(path, skiprows=n_header, header=None, comment="#",
                            dtype={0: np.int64, 1: str, 2: np.float64, 3: np.int32, 4: np.int8})
    except pd.errors.EmptyDataError:
        return Events.empty(with_origin=False), manifest, digest
    if frame.shape[1] not in (5, 6):
        raise EventFileError(f"{path}: expected 5 or 6 columns, found {frame.shape[1]}")
    chan = frame[1].map({"XX": XX, "X": X})
    if chan.isna().any():
        raise EventFileError(f"{path}: channel must be XX or X")
    origin = None
    if frame.shape[1] == 6:
        origin = frame[5].map({o: k for k, o in enumerate(ORIGINS)}).to_numpy(np.int8)
    ev = Events(frame[0].to_numpy(np.int64), chan.to_numpy(np.int8), frame[2].to_numpy(),
                frame[3].to_numpy(np.int32), frame[4].to_numpy(np.int8), origin)
    return ev, manifest, digest
