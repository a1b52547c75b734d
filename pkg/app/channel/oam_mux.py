"""
OAM subchannel multiplexing
Round-robin serial-to-parallel framing across N orthogonal modes. Mode
orthogonality is modelled as independent parallel channels; an optional
leakage c mixes c x (same position in the adjacent modes m-1 and m+1) into
mode m at demux. Modes sit in charge order, so the two end modes have a
single neighbour.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from app.core.gaussian_core import QuadraturePair
from app.errors import FrameMismatch
from app.schemas.params import OamConfig
from app.schemas.reports import FrameHeader
from app.utils.logging_setup import get_logger

logger = get_logger(__name__)

PROTOCOL_VERSION = 1

Pulses = Union[np.ndarray, QuadraturePair]


@dataclass(frozen=True)
class ModeFrame:
    mode_index: int
    pulses: Pulses

    def __len__(self) -> int:
        return len(self.pulses)


def mux(config: OamConfig, serial) -> Tuple[List[ModeFrame], FrameHeader]:
    """
    Deal a serial stream round-robin: index i goes to mode i mod N, position i div N.

    The tail is zero-padded to a multiple of N; the header records the padding.
    """
    serial = np.asarray(serial)
    n_modes = config.n_modes
    pad_len = (-serial.shape[0]) % n_modes
    padded = np.concatenate([serial, np.zeros(pad_len, dtype=serial.dtype)])
    frames = [ModeFrame(m, padded[m::n_modes].copy()) for m in range(n_modes)]
    header = FrameHeader(
        protocol_version=PROTOCOL_VERSION,
        n_modes=n_modes,
        charges=tuple(config.topological_charges),
        pad_len=pad_len,
        n_symbols=int(serial.shape[0]),
    )
    logger.debug(f"Muxed {serial.shape[0]} symbols over {n_modes} modes (pad {pad_len})")
    return frames, header


def apply_crosstalk(stacked: np.ndarray, crosstalk: float) -> np.ndarray:
    """Rows are modes in charge order; row m receives crosstalk x rows m-1 and m+1 where they exist."""
    if crosstalk == 0.0 or stacked.shape[0] < 2:
        return stacked
    out = stacked.astype(float, copy=True)
    out[:-1] += crosstalk * stacked[1:]
    out[1:] += crosstalk * stacked[:-1]
    return out


def leakage_weight(n_modes: int) -> float:
    """Mean neighbour count per mode, 2(N-1)/N; the end modes have one neighbour."""
    return 2.0 * (n_modes - 1) / n_modes if n_modes >= 2 else 0.0


def _check_frames(config: OamConfig, frames: Sequence[ModeFrame], header: FrameHeader) -> int:
    if header.protocol_version != PROTOCOL_VERSION or header.assignment != "round_robin":
        raise FrameMismatch(f"unsupported frame header {header.protocol_version}/{header.assignment}")
    if header.n_modes != config.n_modes or tuple(header.charges) != tuple(config.topological_charges):
        raise FrameMismatch("frame header does not match the receiver's mode configuration")
    if len(frames) != config.n_modes:
        raise FrameMismatch(f"expected {config.n_modes} frames, got {len(frames)}")
    if [f.mode_index for f in frames] != list(range(config.n_modes)):
        raise FrameMismatch("frames must arrive ordered by mode index")
    total = header.n_symbols + header.pad_len
    if total % config.n_modes:
        raise FrameMismatch(f"{total} padded symbols do not divide over {config.n_modes} modes")
    per_mode = total // config.n_modes
    lengths = {len(f) for f in frames}
    if lengths != {per_mode}:
        raise FrameMismatch(f"frame lengths {sorted(lengths)} inconsistent with header ({per_mode} per mode)")
    return per_mode


def _interleave(stacked: np.ndarray, header: FrameHeader) -> np.ndarray:
    return stacked.T.reshape(-1)[: header.n_symbols]


def demux(config: OamConfig, frames: Sequence[ModeFrame], header: FrameHeader) -> Pulses:
    """
    Apply mode leakage and restore serial order, dropping the padding.

    Frames holding QuadraturePairs are recombined quadrature by quadrature.

    Raises:
        FrameMismatch: frame count, order or lengths disagree with the header
    """
    _check_frames(config, frames, header)
    if isinstance(frames[0].pulses, QuadraturePair):
        xs = apply_crosstalk(np.vstack([f.pulses.x for f in frames]), config.crosstalk)
        ps = apply_crosstalk(np.vstack([f.pulses.p for f in frames]), config.crosstalk)
        return QuadraturePair(_interleave(xs, header), _interleave(ps, header))
    stacked = apply_crosstalk(np.vstack([np.asarray(f.pulses) for f in frames]), config.crosstalk)
    return _interleave(stacked, header)


def mode_of_index(config: OamConfig, index) -> np.ndarray:
    return np.asarray(index) % config.n_modes
