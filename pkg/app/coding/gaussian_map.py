"""
Gaussian interval mapping
b-bit blocks <-> equiprobable intervals of Normal(0, V_a), labelled in ascending
natural binary order (no Gray code). Alice draws a value inside the interval of
each block; Bob maps a measured value back to the interval that contains it.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import ndtr, ndtri

from app.errors import InvalidParams, LengthMismatch
from app.schemas.params import MappingParams
from app.schemas.reports import BlockErrorProbabilities
from app.utils.logging_setup import get_logger

logger = get_logger(__name__)

DEFAULT_CLAMP = 7.0
_PROB_FLOOR = np.finfo(float).tiny
_PROB_CEIL = 1.0 - np.finfo(float).epsneg


# =============================================================================
# TABLE
# =============================================================================

@dataclass(frozen=True)
class GaussianSymbol:
    value: float
    block: int


@dataclass(frozen=True)
class MappingTable:
    """
    Thresholds sqrt(V_a) * ndtri(j / 2^b), j = 1 .. 2^b - 1, plus the outer bound.

    With tail_mode "clamp" the source stays an unbounded Gaussian whose values
    beyond +/-clamp are pinned to the bound; "truncate" redraws them inside.
    clamp=None disables both.
    """

    bits_per_block: int
    variance: float
    thresholds: np.ndarray
    clamp: Optional[float] = DEFAULT_CLAMP
    tail_mode: str = "clamp"

    @property
    def n_intervals(self) -> int:
        return 1 << self.bits_per_block

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.variance))

    @property
    def outer(self) -> float:
        return float(self.clamp) if self.clamp is not None else np.inf

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[-self.outer], self.thresholds, [self.outer]])

    @property
    def tail_mass(self) -> float:
        """Source probability beyond one outer bound."""
        return float(ndtr(-self.outer / self.sigma))

    def interval(self, block: int) -> Tuple[float, float]:
        edges = self.boundaries
        return float(edges[block]), float(edges[block + 1])

    def _probability_range(self, blocks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lo = blocks / self.n_intervals
        hi = (blocks + 1) / self.n_intervals
        if self.tail_mode == "truncate" and self.clamp is not None:
            lo = np.maximum(lo, self.tail_mass)
            hi = np.minimum(hi, 1.0 - self.tail_mass)
        return lo, hi

    def signal_variance(self) -> float:
        """Variance of the emitted values over uniformly random blocks."""
        s2 = self.variance
        if self.clamp is None:
            return s2
        a = self.outer / self.sigma
        phi_a = np.exp(-0.5 * a * a) / np.sqrt(2.0 * np.pi)
        inside = s2 * ((1.0 - 2.0 * ndtr(-a)) - 2.0 * a * phi_a)
        if self.tail_mode == "clamp":
            return float(inside + self.outer**2 * 2.0 * self.tail_mass)
        # each interval keeps probability 1/L; the outer two lose their tails
        outer_interval = _second_moment(-self.outer, self.thresholds[0], self.sigma)
        outer_mass = 1.0 / self.n_intervals - self.tail_mass
        inner = inside - 2.0 * outer_interval
        return float(inner + 2.0 * outer_interval * (1.0 / self.n_intervals) / outer_mass)


def _second_moment(lo: float, hi: float, sigma: float) -> float:
    """Integral of x^2 times the Normal(0, sigma^2) density over [lo, hi]."""

    def part(z):
        if np.isinf(z):
            return float(ndtr(z)), 0.0
        return float(ndtr(z)), z * np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)

    cdf_hi, tail_hi = part(hi / sigma)
    cdf_lo, tail_lo = part(lo / sigma)
    return sigma * sigma * ((cdf_hi - cdf_lo) - (tail_hi - tail_lo))


def build_table(
    bits_per_block: int,
    variance: float,
    clamp: Optional[float] = DEFAULT_CLAMP,
    tail_mode: str = "clamp",
) -> MappingTable:
    """
    Equal-probability partition of Normal(0, variance).

    Args:
        bits_per_block: b in 1..8
        variance: V_a in SNU, > 0
        clamp: Absolute outer bound, or None for an unbounded source
        tail_mode: "clamp" or "truncate"

    Raises:
        InvalidParams: b or V_a out of range, or the clamp inside the outer thresholds
    """
    if not isinstance(bits_per_block, (int, np.integer)) or not 1 <= bits_per_block <= 8:
        raise InvalidParams(f"bits_per_block must be an integer in 1..8, got {bits_per_block!r}")
    if not variance > 0:
        raise InvalidParams(f"variance must be > 0, got {variance!r}")
    if tail_mode not in ("clamp", "truncate"):
        raise InvalidParams(f"tail_mode must be 'clamp' or 'truncate', got {tail_mode!r}")

    n_intervals = 1 << int(bits_per_block)
    thresholds = np.sqrt(variance) * ndtri(np.arange(1, n_intervals) / n_intervals)
    if clamp is not None and not clamp > np.max(np.abs(thresholds)):
        raise InvalidParams(
            f"clamp {clamp} must exceed the outermost threshold {np.max(np.abs(thresholds)):.5f}"
        )
    thresholds.setflags(write=False)
    return MappingTable(int(bits_per_block), float(variance), thresholds, clamp, tail_mode)


def table_from_params(params: MappingParams) -> MappingTable:
    return build_table(params.bits_per_block, params.variance, params.clamp, params.tail_mode)


# =============================================================================
# MAP / DEMAP
# =============================================================================

def map_blocks(table: MappingTable, blocks, rng: np.random.Generator) -> np.ndarray:
    """Draw one value per block from the source law restricted to the block's interval."""
    blocks = np.asarray(blocks, dtype=np.int64)
    if blocks.size and (blocks.min() < 0 or blocks.max() >= table.n_intervals):
        raise InvalidParams(f"block labels must lie in 0..{table.n_intervals - 1}")
    lo, hi = table._probability_range(blocks)
    u = rng.random(blocks.shape)
    prob = np.clip(lo + u * (hi - lo), _PROB_FLOOR, _PROB_CEIL)
    values = table.sigma * ndtri(prob)
    return np.clip(values, -table.outer, table.outer)


def map_block(table: MappingTable, block: int, rng: np.random.Generator) -> GaussianSymbol:
    value = map_blocks(table, np.array([block]), rng)[0]
    return GaussianSymbol(value=float(value), block=int(block))


def demap_values(table: MappingTable, values) -> np.ndarray:
    """Interval labels; a value on a threshold belongs to the lower interval."""
    return np.searchsorted(table.thresholds, np.asarray(values, dtype=float), side="left")


def demap_value(table: MappingTable, value: float) -> int:
    return int(demap_values(table, np.array([value]))[0])


def labels_from_bits(bits: np.ndarray, bits_per_block: int) -> np.ndarray:
    """Group a bit stream MSB-first into labels; the length must be a multiple of b."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % bits_per_block:
        raise LengthMismatch(f"{bits.size} bits do not split into {bits_per_block}-bit blocks")
    weights = 1 << np.arange(bits_per_block - 1, -1, -1)
    return bits.reshape(-1, bits_per_block) @ weights


def bits_from_labels(labels, bits_per_block: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    shifts = np.arange(bits_per_block - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def popcount(values) -> np.ndarray:
    return np.unpackbits(np.asarray(values, dtype=np.uint8)[..., None], axis=-1).sum(axis=-1)


# =============================================================================
# ERROR ORACLE
# =============================================================================

def _integrate(func, lo: float, hi: float, width: float) -> np.ndarray:
    """quad_vec over [lo, hi] with the two edges resolved on their own."""
    pieces = []
    if np.isfinite(lo) and np.isfinite(hi):
        w = min(width, 0.5 * (hi - lo))
        pieces = [(lo, lo + w), (lo + w, hi - w), (hi - w, hi)]
    elif np.isfinite(hi):
        pieces = [(-np.inf, hi - width), (hi - width, hi)]
    elif np.isfinite(lo):
        pieces = [(lo, lo + width), (lo + width, np.inf)]
    else:
        pieces = [(-np.inf, np.inf)]
    total = 0.0
    for a, b in pieces:
        if b > a:
            value, _ = quad_vec(func, a, b, epsabs=1e-12, epsrel=1e-10)
            total = total + value
    return np.asarray(total)


def block_error_oracle(table: MappingTable, noise_variance: float) -> BlockErrorProbabilities:
    """
    Exact symbol and bit error probability of map -> add Normal(0, noise) -> demap.

    Args:
        table: Mapping in use
        noise_variance: Variance of the additive noise on the value, SNU

    Returns:
        BlockErrorProbabilities averaged over uniformly random blocks
    """
    if noise_variance < 0:
        raise InvalidParams(f"noise_variance must be >= 0, got {noise_variance}")
    if noise_variance == 0:
        return BlockErrorProbabilities(symbol_error=0.0, bit_error=0.0, noise_variance=0.0)

    sn = float(np.sqrt(noise_variance))
    sigma = table.sigma
    n_intervals = table.n_intervals
    edges = np.concatenate([[-np.inf], table.thresholds, [np.inf]])
    labels = np.arange(n_intervals)
    flips = popcount(labels[:, None] ^ labels[None, :]) / table.bits_per_block

    def transition(v: float) -> np.ndarray:
        return np.diff(ndtr((edges - v) / sn))

    def weighted(v: float) -> np.ndarray:
        density = np.exp(-0.5 * (v / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))
        return density * transition(v)

    symbol_error = 0.0
    bit_error = 0.0
    tail = table.tail_mass if table.clamp is not None else 0.0
    for j in labels:
        lo, hi = table.interval(j)
        probs = _integrate(weighted, lo, hi, 10.0 * sn)
        outermost = j in (0, n_intervals - 1)
        if table.clamp is not None and outermost:
            if table.tail_mode == "clamp":
                probs = probs + tail * transition(lo if j == 0 else hi)
            else:
                probs = probs * (1.0 / n_intervals) / (1.0 / n_intervals - tail)
        symbol_error += float(probs.sum() - probs[j])
        bit_error += float(probs @ flips[j])

    logger.debug(f"Oracle at noise {noise_variance:.6g}: SER={symbol_error:.6g} BER={bit_error:.6g}")
    return BlockErrorProbabilities(
        symbol_error=symbol_error, bit_error=bit_error, noise_variance=float(noise_variance)
    )
