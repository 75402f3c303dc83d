"""Counter-based random streams keyed by (seed, setting, pulse, slot).

Every random number used for a pulse is a pure function of its
coordinates, so any partition of the pulse range into chunks reproduces the
single-pass stream exactly.  The mixing function is the SplitMix64
finaliser applied twice (once per pulse, once per slot).
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SLOT_STEP = 0xD1B54A32D192ED03
_MASK = 0xFFFFFFFFFFFFFFFF
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0 ** -53


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class PulseStreams:
    """Uniform draws ``u(pulse, slot)`` in [0, 1) for one (seed, setting)."""

    def __init__(self, seed: int, setting_id: int):
        key = np.array([seed & _MASK], dtype=np.uint64)
        key = mix64(key ^ mix64(np.array([setting_id + 1], dtype=np.uint64) * _GOLDEN))
        self._key = key

    def pulse_keys(self, pulses: np.ndarray) -> np.ndarray:
        p = np.asarray(pulses, dtype=np.uint64)
        return mix64(p * _GOLDEN + self._key)

    def uniform(self, pulse_keys: np.ndarray, slot: int) -> np.ndarray:
        z = mix64(pulse_keys + np.uint64(((slot + 1) * _SLOT_STEP) & _MASK))
        return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT
