"""
Gaussian-state machinery
Seeded squeezed and two-mode entangled quadrature samples, covariance algebra
and the numerical symplectic spectrum used to cross-check closed forms.

Quadratures are in shot-noise units: vacuum variance is 1. Covariance
matrices order their rows (x1, p1, x2, p2, ...).
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.errors import InvalidParams, NonPhysicalState
from app.schemas.params import SqueezingParams
from app.utils.logging_setup import get_logger
from app.utils.rng import RngSeed  # noqa: F401  (re-exported for callers)

logger = get_logger(__name__)

SPECTRUM_TOLERANCE = 1e-6
_PAULI_Z = np.diag([1.0, -1.0])


# =============================================================================
# SAMPLE CONTAINERS
# =============================================================================

@dataclass(frozen=True)
class QuadraturePair:
    """Position and momentum samples of one beam, one entry per pulse."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if x.shape != p.shape:
            raise InvalidParams(f"quadrature shapes differ: x{x.shape} vs p{p.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise InvalidParams("quadrature samples must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def size(self) -> int:
        return int(self.x.size)

    def __len__(self) -> int:
        return self.size

    def take(self, index) -> "QuadraturePair":
        return QuadraturePair(self.x[index], self.p[index])

    @staticmethod
    def concatenate(pairs: Sequence["QuadraturePair"]) -> "QuadraturePair":
        return QuadraturePair(
            np.concatenate([pair.x for pair in pairs]),
            np.concatenate([pair.p for pair in pairs]),
        )


@dataclass(frozen=True)
class TwoModeState:
    """Detection beam S_C and signal beam S_M, pulse-aligned."""

    sc: QuadraturePair
    sm: QuadraturePair

    def __post_init__(self):
        if self.sc.x.shape != self.sm.x.shape:
            raise InvalidParams("S_C and S_M must hold the same number of pulses")

    @property
    def size(self) -> int:
        return self.sc.size

    def take(self, index) -> "TwoModeState":
        return TwoModeState(self.sc.take(index), self.sm.take(index))


@dataclass(frozen=True)
class CovarianceMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidParams(f"covariance matrix must be square, got shape {entries.shape}")
        if entries.shape[0] % 2:
            raise InvalidParams(f"covariance dimension must be even, got {entries.shape[0]}")
        scale = max(1.0, float(np.max(np.abs(entries)))) if entries.size else 1.0
        if not np.allclose(entries, entries.T, atol=1e-9 * scale, rtol=0.0):
            raise InvalidParams("covariance matrix must be symmetric")
        entries = 0.5 * (entries + entries.T)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    @property
    def n_modes(self) -> int:
        return self.dim // 2

    def modes(self, indices: Sequence[int]) -> "CovarianceMatrix":
        """Reduced state on the listed modes, in the listed order."""
        rows = [2 * m + q for m in indices for q in (0, 1)]
        return CovarianceMatrix(self.entries[np.ix_(rows, rows)])


# =============================================================================
# SAMPLING
# =============================================================================

def sample_single_mode_squeezed(params: SqueezingParams, rng: np.random.Generator, size: int = 1) -> QuadraturePair:
    """
    Draw squeezed-vacuum quadratures.

    Args:
        params: Squeezing factor r
        rng: Stream owned by the caller
        size: Number of pulses

    Returns:
        QuadraturePair with x ~ N(0, e^{-2r}) and p ~ N(0, e^{2r}), independent
    """
    draws = rng.standard_normal((2, int(size)))
    return QuadraturePair(np.exp(-params.r) * draws[0], np.exp(params.r) * draws[1])


def make_two_mode_entangled(params: SqueezingParams, rng: np.random.Generator, size: int = 1) -> TwoModeState:
    """
    Combine two squeezed vacua on a balanced beam splitter.

    The second input is rotated by a quarter turn so its p quadrature is the
    squeezed one; the x difference and p sum of the outputs are then squeezed:
    (x_sc - x_sm)/sqrt(2) = x1 and (p_sc + p_sm)/sqrt(2) = p2.
    """
    first = sample_single_mode_squeezed(params, rng, size)
    raw = sample_single_mode_squeezed(params, rng, size)
    x1, p1 = first.x, first.p
    x2, p2 = -raw.p, raw.x

    root2 = np.sqrt(2.0)
    sc = QuadraturePair((x1 + x2) / root2, (p1 + p2) / root2)
    sm = QuadraturePair((x2 - x1) / root2, (p2 - p1) / root2)
    return TwoModeState(sc=sc, sm=sm)


def sample_covariance(pairs: Sequence[QuadraturePair]) -> CovarianceMatrix:
    """Population (ddof=0) covariance of several beams' samples."""
    rows = []
    for pair in pairs:
        rows.extend([pair.x.ravel(), pair.p.ravel()])
    return CovarianceMatrix(np.cov(np.vstack(rows), ddof=0))


# =============================================================================
# COVARIANCE ALGEBRA
# =============================================================================

def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_spectrum(cm: CovarianceMatrix) -> np.ndarray:
    """
    Symplectic eigenvalues of a covariance matrix, descending.

    The eigenvalues of i*Omega*sigma come in +/- pairs; their sorted moduli are
    collapsed to one value per mode.

    Raises:
        NonPhysicalState: if any value falls below 1 - 1e-6
    """
    omega = symplectic_form(cm.n_modes)
    moduli = np.sort(np.abs(np.linalg.eigvals(1j * omega @ cm.entries)))[::-1]
    spectrum = moduli[::2].copy()
    if np.any(spectrum < 1.0 - SPECTRUM_TOLERANCE):
        logger.error(f"Non-physical covariance, symplectic spectrum {spectrum}")
        raise NonPhysicalState(f"symplectic eigenvalue {spectrum.min():.9f} below 1")
    return spectrum


def thermal_covariance(nu: float, n_modes: int = 1) -> CovarianceMatrix:
    return CovarianceMatrix(float(nu) * np.eye(2 * n_modes))


def epr_covariance(v: float) -> CovarianceMatrix:
    """Two-mode squeezed vacuum with local variance v >= 1."""
    if v < 1.0:
        raise InvalidParams(f"EPR variance must be >= 1, got {v}")
    c = np.sqrt(max(v * v - 1.0, 0.0))
    eye = np.eye(2)
    return CovarianceMatrix(np.block([[v * eye, c * _PAULI_Z], [c * _PAULI_Z, v * eye]]))


def tmsv_covariance(params: SqueezingParams) -> CovarianceMatrix:
    return epr_covariance(float(np.cosh(2.0 * params.r)))


def direct_sum(*blocks: CovarianceMatrix) -> CovarianceMatrix:
    dim = sum(block.dim for block in blocks)
    out = np.zeros((dim, dim))
    offset = 0
    for block in blocks:
        out[offset:offset + block.dim, offset:offset + block.dim] = block.entries
        offset += block.dim
    return CovarianceMatrix(out)


def beam_splitter(cm: CovarianceMatrix, mode_a: int, mode_b: int, transmissivity: float) -> CovarianceMatrix:
    """
    Mix two modes: a' = sqrt(t) a + sqrt(1-t) b, b' = sqrt(t) b - sqrt(1-t) a.

    Args:
        cm: State on any number of modes
        mode_a: Index of the transmitted input
        mode_b: Index of the mixing input
        transmissivity: t in [0, 1]
    """
    if not 0.0 <= transmissivity <= 1.0:
        raise InvalidParams(f"transmissivity must lie in [0, 1], got {transmissivity}")
    if mode_a == mode_b:
        raise InvalidParams("beam splitter needs two distinct modes")
    s = np.eye(cm.dim)
    ct, st = np.sqrt(transmissivity), np.sqrt(1.0 - transmissivity)
    a, b = slice(2 * mode_a, 2 * mode_a + 2), slice(2 * mode_b, 2 * mode_b + 2)
    s[a, a] = ct * np.eye(2)
    s[a, b] = st * np.eye(2)
    s[b, a] = -st * np.eye(2)
    s[b, b] = ct * np.eye(2)
    return CovarianceMatrix(s @ cm.entries @ s.T)


def condition_on_heterodyne(cm: CovarianceMatrix, mode: int) -> CovarianceMatrix:
    """State of the other modes after heterodyning `mode`: g_R - s (g_B + I)^-1 s^T."""
    rest = [m for m in range(cm.n_modes) if m != mode]
    rest_rows = [2 * m + q for m in rest for q in (0, 1)]
    meas_rows = [2 * mode, 2 * mode + 1]
    g_r = cm.entries[np.ix_(rest_rows, rest_rows)]
    g_b = cm.entries[np.ix_(meas_rows, meas_rows)]
    cross = cm.entries[np.ix_(rest_rows, meas_rows)]
    return CovarianceMatrix(g_r - cross @ np.linalg.solve(g_b + np.eye(2), cross.T))
