"""Jones-calculus layer for one- and two-photon polarization states.

Vectors are length-2 complex numpy arrays in the lab {H, V} basis and
two-photon density matrices are 4x4 arrays ordered {HH, HV, VH, VV}, with
the XX photon as the first factor.  All angles are in degrees measured from
the lab vertical; internally a direction at ``a`` degrees from vertical sits
at ``90 + a`` degrees from H.  See the package docstring for the circular
handedness convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NORM_TOL = 1e-12
PSD_TOL = 1e-10
PROB_TOL = 1e-9

_S = 1.0 / np.sqrt(2.0)
_BASIS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "L": np.array([_S, 1j * _S], dtype=complex),
    "R": np.array([_S, -1j * _S], dtype=complex),
}
_ORTHOGONAL = {"H": "V", "V": "H", "D": "A", "A": "D", "L": "R", "R": "L"}

# named measurement bases -> (pass, orthogonal) labels
NAMED_BASES = {
    "rectilinear": ("H", "V"),
    "diagonal": ("D", "A"),
    "circular": ("L", "R"),
}


def basis_vector(label: str) -> np.ndarray:
    """Unit Jones vector for one of H, V, D, A, L, R."""
    try:
        return _BASIS[label].copy()
    except KeyError:
        raise ValueError(f"unknown polarization label {label!r}") from None


def linear_vector(angle_deg: float) -> np.ndarray:
    """Linear polarization at ``angle_deg`` from the lab vertical."""
    psi = np.deg2rad(90.0 + angle_deg)
    return np.array([np.cos(psi), np.sin(psi)], dtype=complex)


def poincare_vector(stokes: Sequence[float]) -> np.ndarray:
    """Pure state whose Stokes direction is ``(s1, s2, s3)``.

    s1 points to H, s2 to D and s3 to L.
    """
    s = np.asarray(stokes, dtype=float)
    s = s / np.linalg.norm(s)
    theta = np.arccos(np.clip(s[0], -1.0, 1.0))
    phi = np.arctan2(s[2], s[1])
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])


def _rotation(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, s], [-s, c]], dtype=complex)


@dataclass(frozen=True, eq=False)
class JonesOperator:
    """2x2 Jones matrix with a kind tag and the angle it was built at."""

    matrix: np.ndarray
    kind: str = "composite"
    angle_deg: float | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("Jones operator must be 2x2")
        if self.kind in ("half-wave", "quarter-wave"):
            if not np.allclose(m.conj().T @ m, np.eye(2), atol=NORM_TOL, rtol=0):
                raise ValueError(f"{self.kind} operator must be unitary")
        elif self.kind == "polarizer":
            if not (np.allclose(m @ m, m, atol=NORM_TOL, rtol=0)
                    and np.allclose(m, m.conj().T, atol=NORM_TOL, rtol=0)
                    and abs(np.trace(m).real - 1.0) <= NORM_TOL):
                raise ValueError("polarizer must be a rank-1 Hermitian projector")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __eq__(self, other):
        if not isinstance(other, JonesOperator):
            return NotImplemented
        return (self.kind == other.kind and self.angle_deg == other.angle_deg
                and np.array_equal(self.matrix, other.matrix))

    def __hash__(self):
        return hash((self.kind, self.angle_deg, self.matrix.tobytes()))

    def __matmul__(self, other):
        if isinstance(other, JonesOperator):
            return JonesOperator(self.matrix @ other.matrix, "composite")
        return self.matrix @ np.asarray(other)

    def apply(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(vector, dtype=complex)

    @property
    def is_unitary(self) -> bool:
        m = self.matrix
        return np.allclose(m.conj().T @ m, np.eye(2), atol=NORM_TOL, rtol=0)


def waveplate(kind: str, angle_deg: float) -> JonesOperator:
    """Rotated retarder with its fast axis ``angle_deg`` from lab vertical.

    ``kind`` is ``"half"`` (retardance pi) or ``"quarter"`` (pi/2).  The
    matrix is only meaningful up to a global phase.
    """
    retardance = {"half": np.pi, "quarter": np.pi / 2}.get(kind)
    if retardance is None:
        raise ValueError(f"waveplate kind must be 'half' or 'quarter', got {kind!r}")
    psi = np.deg2rad(90.0 + angle_deg)
    core = np.diag([1.0, np.exp(1j * retardance)]).astype(complex)
    m = _rotation(-psi) @ core @ _rotation(psi)
    return JonesOperator(m, f"{kind}-wave", float(angle_deg))


def polarizer(angle_deg: float = 0.0) -> JonesOperator:
    """Ideal linear polarizer transmitting ``angle_deg`` from lab vertical."""
    p = linear_vector(angle_deg)
    return JonesOperator(np.outer(p, p.conj()), "polarizer", float(angle_deg))


def analysis_basis(chain: Sequence[JonesOperator]) -> tuple[np.ndarray, np.ndarray]:
    """Input states sent to the pass and orthogonal ports of an analyzer.

    ``chain`` is ordered along the beam and must end with a polarizer; the
    orthogonal port is the reflected arm of a polarizing beam splitter.
    """
    if not chain or chain[-1].kind != "polarizer":
        raise ValueError("analyzer chain must end with a polarizer")
    if any(op.kind == "polarizer" for op in chain[:-1]):
        raise ValueError("analyzer chain must contain exactly one polarizer")
    w = np.eye(2, dtype=complex)
    for op in chain[:-1]:
        w = op.matrix @ w
    axis = chain[-1].angle_deg
    pass_out = linear_vector(axis)
    orth_out = linear_vector(axis + 90.0)
    # <out| W |psi> = <W^dag out | psi>
    return w.conj().T @ pass_out, w.conj().T @ orth_out


@dataclass(frozen=True, eq=False)
class BasisPair:
    """Orthonormal measurement bases (alpha, alpha_bar) and (beta, beta_bar)."""

    channel1: tuple[np.ndarray, np.ndarray]
    channel2: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        for pair in (self.channel1, self.channel2):
            a, b = (np.asarray(v, dtype=complex) for v in pair)
            for v in (a, b):
                if abs(np.vdot(v, v).real - 1.0) > NORM_TOL:
                    raise ValueError("basis vectors must be normalised")
            if abs(np.vdot(a, b)) > NORM_TOL:
                raise ValueError("basis vectors within a channel must be orthogonal")

    @classmethod
    def from_labels(cls, first: str, second: str) -> "BasisPair":
        """Pair from single-photon labels, e.g. ``("D", "L")``."""
        return cls(
            (basis_vector(first), basis_vector(_ORTHOGONAL[first])),
            (basis_vector(second), basis_vector(_ORTHOGONAL[second])),
        )

    @classmethod
    def named(cls, basis: str) -> "BasisPair":
        """Same named basis ("rectilinear", "diagonal", "circular") on both photons."""
        first, _ = NAMED_BASES[basis]
        return cls.from_labels(first, first)

    @classmethod
    def from_stokes(cls, s_first, s_second) -> "BasisPair":
        a, b = np.asarray(s_first, float), np.asarray(s_second, float)
        return cls(
            (poincare_vector(a), poincare_vector(-a)),
            (poincare_vector(b), poincare_vector(-b)),
        )

    @classmethod
    def from_chains(cls, chain1, chain2) -> "BasisPair":
        return cls(analysis_basis(chain1), analysis_basis(chain2))


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    """Validated two-photon density matrix (Hermitian, unit trace, PSD)."""

    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=complex)
        if r.shape != (4, 4):
            raise ValueError("two-photon density matrix must be 4x4")
        if not np.allclose(r, r.conj().T, atol=NORM_TOL, rtol=0):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(r).real - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace {np.trace(r).real!r} != 1")
        w = np.linalg.eigvalsh(r)
        if w.min() < -PSD_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {w.min():.3g}")
        r = r.copy()
        r.setflags(write=False)
        object.__setattr__(self, "rho", r)

    @classmethod
    def from_ket(cls, ket) -> "TwoPhotonState":
        k = np.asarray(ket, dtype=complex).reshape(4)
        k = k / np.linalg.norm(k)
        return cls(np.outer(k, k.conj()))

    @classmethod
    def product(cls, first, second) -> "TwoPhotonState":
        return cls.from_ket(np.kron(first, second))

    @classmethod
    def maximally_mixed(cls) -> "TwoPhotonState":
        return cls(np.eye(4, dtype=complex) / 4)

    @property
    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    def reduced(self, photon: int) -> np.ndarray:
        """Single-photon reduced density matrix (photon 1 = XX, 2 = X)."""
        r = self.rho.reshape(2, 2, 2, 2)
        if photon == 1:
            return np.einsum("ajbj->ab", r)
        if photon == 2:
            return np.einsum("jajb->ab", r)
        raise ValueError("photon must be 1 or 2")

    def polarization_magnitude(self) -> float:
        """Largest single-photon degree of polarization of the two photons."""
        out = 0.0
        for k in (1, 2):
            m = self.reduced(k)
            s = np.array([
                (m[0, 0] - m[1, 1]).real,
                2 * m[0, 1].real,
                -2 * m[0, 1].imag,
            ])
            out = max(out, float(np.linalg.norm(s)))
        return out

    def transformed(self, op1: JonesOperator, op2: JonesOperator) -> "TwoPhotonState":
        """State after unitary elements ``op1`` (photon 1) and ``op2`` (photon 2)."""
        u = np.kron(op1.matrix, op2.matrix)
        r = u @ self.rho @ u.conj().T
        return TwoPhotonState(r / np.trace(r).real)

    def mixed_with(self, other: "TwoPhotonState", weight: float) -> "TwoPhotonState":
        """``(1 - weight) * self + weight * other``."""
        return TwoPhotonState((1 - weight) * self.rho + weight * other.rho)


def bell_state_psi_plus() -> TwoPhotonState:
    """(|L1 R2> + |R1 L2>)/sqrt(2), which is (|HH> + |VV>)/sqrt(2) here."""
    L, R = basis_vector("L"), basis_vector("R")
    return TwoPhotonState.from_ket((np.kron(L, R) + np.kron(R, L)) / np.sqrt(2))


def werner_state(p: float) -> TwoPhotonState:
    """p * psi+ + (1 - p) * I/4."""
    return bell_state_psi_plus().mixed_with(TwoPhotonState.maximally_mixed(), 1 - p)


def pair_projector(pair: BasisPair, element1: int, element2: int) -> np.ndarray:
    """Rank-1 projector onto the selected basis elements (0 = alpha, 1 = bar)."""
    k = np.kron(pair.channel1[element1], pair.channel2[element2])
    return np.outer(k, k.conj())


def probability(rho: TwoPhotonState, projector: np.ndarray) -> float:
    """Tr(rho P), clamped to [0, 1] once inside tolerance."""
    p = float(np.trace(rho.rho @ projector).real)
    if p < -PROB_TOL or p > 1 + PROB_TOL:
        raise ValueError(f"probability {p!r} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def outcome_probabilities(rho: TwoPhotonState, pair: BasisPair) -> np.ndarray:
    """2x2 array ``P[i, j]`` for channel-1 element i and channel-2 element j."""
    return np.array([[probability(rho, pair_projector(pair, i, j)) for j in (0, 1)]
                     for i in (0, 1)])


def correlation_E(rho: TwoPhotonState, pair: BasisPair) -> float:
    """E = P(a,b) + P(a',b') - P(a,b') - P(a',b) with primes for the bars."""
    p = outcome_probabilities(rho, pair)
    return float(p[0, 0] + p[1, 1] - p[0, 1] - p[1, 0])


def degrees_of_correlation(rho: TwoPhotonState) -> dict[str, float]:
    """Correlation function in the three named bases (same basis on both photons)."""
    return {name: correlation_E(rho, BasisPair.named(name)) for name in NAMED_BASES}
