"""Run configuration files: flat ``key = value`` lines, ``#`` comments.

Keys carry their units (``_ns``, ``_ueV``, ``_hz``, ``_deg``).  Source keys
map onto :class:`SourceConfig`; the remaining keys choose analyzer settings,
pulse count, seed, gates and output path.  Explicit analyzer chains use
``setting.<label> = <XX chain> | <X chain>``, e.g.
``setting.tilted = hwp:10 pol:0 | hwp:5 pol:0``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .events import DEFAULT_SEED, AnalyzerSetting, RunManifest, parse_chain, standard_settings
from .source import GateWindows, SourceConfig, onset_gate, peak_centred_gate

SOURCE_KEYS = tuple(f.name for f in fields(SourceConfig))
OPTIONAL_SOURCE_KEYS = ("emission_prob", "pulse_delay_ns")
REQUIRED_KEYS = tuple(k for k in SOURCE_KEYS if k not in OPTIONAL_SOURCE_KEYS) + ("n_pulses",)
RUN_KEYS = ("n_pulses", "seed", "settings", "gate_xx_ns", "gate_x_ns", "gate_placement",
            "events_out")
GATE_PLACEMENTS = ("onset", "peak")
PRESETS = ("ideal-psi-plus", "noise-calibrated", "separable", "uncorrelated")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    source: SourceConfig
    settings: tuple
    n_pulses: int
    seed: int = DEFAULT_SEED
    gate_xx_ns: float = 1.0
    gate_x_ns: float = 1.5
    gate_placement: str = "onset"
    events_out: str | None = None

    def manifest(self, seed: int | None = None) -> RunManifest:
        return RunManifest(self.source, self.settings, self.n_pulses,
                           self.seed if seed is None else seed)

    def gate(self, xx_ns: float | None = None, x_ns: float | None = None,
             placement: str | None = None) -> GateWindows:
        xx = self.gate_xx_ns if xx_ns is None else xx_ns
        x = self.gate_x_ns if x_ns is None else x_ns
        placement = placement or self.gate_placement
        if placement == "onset":
            return onset_gate(self.source, xx, x)
        if placement == "peak":
            return peak_centred_gate(self.source, xx, x)
        raise ConfigError(f"unknown gate placement {placement!r}")


def _number(key, text, lineno, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} expects a number, got {text!r}") from None


def parse_config(text: str, origin: str = "<config>") -> RunConfig:
    values: dict[str, tuple[str, int]] = {}
    chains: list[tuple[str, str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}: line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("setting."):
            chains.append((key[len("setting."):], value, lineno))
            continue
        if key not in SOURCE_KEYS and key not in RUN_KEYS:
            raise ConfigError(f"{origin}: line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{origin}: line {lineno}: duplicate key {key!r}")
        values[key] = (value, lineno)

    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{origin}: missing required key(s): {', '.join(missing)}")

    try:
        src = {k: _number(k, v, n) for k, (v, n) in values.items() if k in SOURCE_KEYS}
        source = SourceConfig(**src)
        run = {}
        if "n_pulses" in values:
            run["n_pulses"] = _number("n_pulses", *values["n_pulses"], kind=int)
        if "seed" in values:
            run["seed"] = _number("seed", *values["seed"], kind=int)
        for k in ("gate_xx_ns", "gate_x_ns"):
            if k in values:
                run[k] = _number(k, *values[k])
        if "gate_placement" in values:
            placement, n = values["gate_placement"]
            if placement not in GATE_PLACEMENTS:
                raise ConfigError(f"line {n}: gate_placement must be one of {GATE_PLACEMENTS}")
            run["gate_placement"] = placement
        if "events_out" in values:
            run["events_out"] = values["events_out"][0]

        labels = ["rectilinear", "diagonal", "circular", "chsh"]
        if "settings" in values:
            labels = [s.strip() for s in values["settings"][0].split(",") if s.strip()]
        try:
            settings = standard_settings(labels)
        except ValueError as exc:
            raise ConfigError(f"line {values['settings'][1]}: {exc}") from None
        for label, value, n in chains:
            parts = value.split("|")
            if len(parts) != 2:
                raise ConfigError(f"line {n}: setting.{label} needs '<XX chain> | <X chain>'")
            try:
                settings.append(AnalyzerSetting(len(settings), label, parse_chain(parts[0]),
                                                parse_chain(parts[1])))
            except ValueError as exc:
                raise ConfigError(f"line {n}: {exc}") from None
        if len({s.label for s in settings}) != len(settings):
            raise ConfigError("analyzer setting labels must be unique")
        cfg = RunConfig(source, tuple(settings), **run)
        cfg.manifest()
        cfg.gate().check(source.rep_period_ns)
    except ConfigError as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("qdbell.presets").joinpath(f"{name}.cfg").read_text()


def load_preset(name: str) -> RunConfig:
    return parse_config(preset_text(name), f"preset:{name}")


def resolve_config(spec: str) -> RunConfig:
    """A config path, or a preset name optionally written as ``preset:<name>``."""
    name = spec[len("preset:"):] if spec.startswith("preset:") else spec
    if name in PRESETS and not Path(spec).exists():
        return load_preset(name)
    return load_config(spec)

