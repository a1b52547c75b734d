"""
Toeplitz mask codec
Universal-hash mask encoding over GF(2): a seeded k x n Toeplitz matrix is row
reduced to [A | E] so a k-bit message m and fresh redundancy R give the masked
frame M = [R || m xor A.R], and T' . M recovers m.

Bit sequences are uint8 arrays of 0/1. File records pack bits MSB-first.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy.linalg import toeplitz

from app.errors import InvalidParams, LengthMismatch, MalformedData, SeedDegenerate
from app.utils.logging_setup import get_logger
from app.utils.rng import RngSeed, make_stream

logger = get_logger(__name__)

MAX_SEED_ATTEMPTS = 64

WhitenerSeed = Optional[Union[int, RngSeed]]


def as_bits(values, length: Optional[int] = None, name: str = "bits") -> np.ndarray:
    """Coerce a '0101' string or 0/1 sequence to a uint8 array, checking its length."""
    if isinstance(values, str):
        if set(values) - {"0", "1"}:
            raise MalformedData(f"{name} must contain only 0 and 1")
        bits = np.frombuffer(values.encode("ascii"), dtype=np.uint8) - ord("0")
    else:
        bits = np.asarray(values).astype(np.uint8, copy=True)
        if np.any(bits > 1):
            raise MalformedData(f"{name} must contain only 0 and 1")
    if length is not None and bits.shape[-1] != length:
        raise LengthMismatch(f"{name} has length {bits.shape[-1]}, expected {length}")
    return bits


def bits_to_string(bits: np.ndarray) -> str:
    return "".join(str(int(b)) for b in np.asarray(bits).ravel())


# =============================================================================
# TYPES
# =============================================================================

@dataclass(frozen=True)
class ToeplitzSeed:
    bits: np.ndarray
    k: int
    n: int

    def __post_init__(self):
        if not 0 < self.k < self.n:
            raise InvalidParams(f"codec needs 0 < k < n, got k={self.k}, n={self.n}")
        bits = as_bits(self.bits, self.k + self.n - 1, "seed")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)


@dataclass(frozen=True)
class MaskFrame:
    redundancy: np.ndarray
    payload: np.ndarray

    @property
    def masked(self) -> np.ndarray:
        return np.concatenate([self.redundancy, self.payload])


@dataclass(frozen=True)
class MaskCodec:
    """Seed, its Toeplitz matrix and the systematic form [A | E] with E in the rightmost k columns."""

    seed: ToeplitzSeed
    toeplitz: np.ndarray = field(repr=False)
    systematic: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return self.seed.k

    @property
    def n(self) -> int:
        return self.seed.n

    @property
    def a_sub(self) -> np.ndarray:
        return self.systematic[:, : self.n - self.k]


# =============================================================================
# CONSTRUCTION
# =============================================================================

def toeplitz_matrix(seed: ToeplitzSeed) -> np.ndarray:
    """
    First row is bits[0:n]; each later row is the previous one shifted right,
    its left cell read backwards from the end of the seed.
    """
    k, n, bits = seed.k, seed.n, seed.bits
    first_column = np.concatenate([bits[:1], bits[k + n - 2 : n - 1 : -1]])
    return toeplitz(first_column, bits[:n]).astype(np.uint8)


def systematic_form(matrix: np.ndarray) -> np.ndarray:
    """
    Gauss-Jordan over GF(2) pivoting on the rightmost k columns, rows only.

    Raises:
        SeedDegenerate: rightmost k x k block singular
    """
    k, n = matrix.shape
    work = matrix.astype(bool).copy()
    for j in range(k):
        col = n - k + j
        candidates = np.flatnonzero(work[j:, col])
        if candidates.size == 0:
            raise SeedDegenerate(f"rightmost {k}x{k} block is singular (no pivot in column {col})")
        pivot = j + int(candidates[0])
        if pivot != j:
            work[[j, pivot]] = work[[pivot, j]]
        rows = np.flatnonzero(work[:, col])
        rows = rows[rows != j]
        work[rows] ^= work[j]
    return work.astype(np.uint8)


def build_codec(seed: ToeplitzSeed) -> MaskCodec:
    matrix = toeplitz_matrix(seed)
    systematic = systematic_form(matrix)
    matrix.setflags(write=False)
    systematic.setflags(write=False)
    return MaskCodec(seed=seed, toeplitz=matrix, systematic=systematic)


def draw_codec(k: int, n: int, rng: np.random.Generator, max_attempts: int = MAX_SEED_ATTEMPTS) -> MaskCodec:
    """
    Draw seeds until one has a nonsingular pivot block (about half do).

    Args:
        k: Message length
        n: Masked frame length
        rng: Codec stream
        max_attempts: Give up after this many degenerate seeds
    """
    for attempt in range(1, max_attempts + 1):
        seed = ToeplitzSeed(rng.integers(0, 2, size=k + n - 1, dtype=np.uint8), k, n)
        try:
            codec = build_codec(seed)
        except SeedDegenerate:
            logger.debug(f"Degenerate Toeplitz seed on attempt {attempt}, redrawing")
            continue
        logger.debug(f"Mask codec ({k}, {n}) ready after {attempt} draw(s)")
        return codec
    raise SeedDegenerate(f"no usable ({k}, {n}) seed in {max_attempts} draws")


# =============================================================================
# ENCODE / DECODE
# =============================================================================

def encode(codec: MaskCodec, message, redundancy) -> MaskFrame:
    m = as_bits(message, codec.k, "message")
    r = as_bits(redundancy, codec.n - codec.k, "redundancy")
    payload = (m.astype(np.int64) + codec.a_sub.astype(np.int64) @ r) % 2
    return MaskFrame(redundancy=r, payload=payload.astype(np.uint8))


def decode(codec: MaskCodec, masked) -> np.ndarray:
    bits = as_bits(masked, codec.n, "masked frame")
    return ((codec.systematic.astype(np.int64) @ bits) % 2).astype(np.uint8)


def _gf2_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integer matrix product via float64; exact while row sums stay below 2**53."""
    return np.rint(a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64)


def encode_batch(codec: MaskCodec, messages: np.ndarray, redundancy: np.ndarray) -> np.ndarray:
    """Encode F frames at once; rows of the result are masked frames M."""
    m = as_bits(messages, codec.k, "messages").reshape(-1, codec.k)
    r = as_bits(redundancy, codec.n - codec.k, "redundancy").reshape(-1, codec.n - codec.k)
    if m.shape[0] != r.shape[0]:
        raise LengthMismatch(f"{m.shape[0]} messages but {r.shape[0]} redundancy rows")
    payload = (m + _gf2_product(r, codec.a_sub.T)) % 2
    return np.hstack([r, payload.astype(np.uint8)])


def decode_batch(codec: MaskCodec, masked: np.ndarray) -> np.ndarray:
    frames = as_bits(masked, codec.n, "masked frames").reshape(-1, codec.n)
    return (_gf2_product(frames, codec.systematic.T) % 2).astype(np.uint8)


# =============================================================================
# BALANCING
# =============================================================================

def whitening_stream(whitener: WhitenerSeed, length: int) -> np.ndarray:
    if whitener is None:
        return np.zeros(length, dtype=np.uint8)
    seed = whitener.seed if isinstance(whitener, RngSeed) else int(whitener)
    return make_stream(seed, "whitener").integers(0, 2, size=length, dtype=np.uint8)


def balance(masked, whitener: WhitenerSeed) -> np.ndarray:
    """XOR with the whitening stream; `whitener=None` leaves the bits unchanged."""
    bits = as_bits(masked, name="masked").ravel()
    return bits ^ whitening_stream(whitener, bits.size)


def unbalance(balanced, whitener: WhitenerSeed) -> np.ndarray:
    return balance(balanced, whitener)


# =============================================================================
# SEED RECORD
# =============================================================================

def seed_record(codec: MaskCodec, whitener_seed: Optional[int]) -> Dict[str, Any]:
    return {
        "k": codec.k,
        "n": codec.n,
        "seed_bits_hex": np.packbits(codec.seed.bits, bitorder="big").tobytes().hex(),
        "whitener_seed": whitener_seed,
    }


def codec_from_record(record: Dict[str, Any]) -> MaskCodec:
    try:
        k, n = int(record["k"]), int(record["n"])
        packed = np.frombuffer(bytes.fromhex(record["seed_bits_hex"]), dtype=np.uint8)
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedData(f"invalid codec seed record: {e}") from e
    bits = np.unpackbits(packed, bitorder="big")
    if bits.size < k + n - 1:
        raise LengthMismatch(f"seed record holds {bits.size} bits, need {k + n - 1}")
    return build_codec(ToeplitzSeed(bits[: k + n - 1], k, n))
