"""Uniform discretization of camera-frame positions into motion tokens.

Each axis is clamped to its range and split into k uniform bins.  The three
axes share one flat vocabulary of size 3k: x bins occupy ids [0, k), y bins
[k, 2k), z bins [2k, 3k).  Decoding returns bin centres, so a round trip
moves an in-range coordinate by at most half a bin width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, MalformedSequence, TokenOutOfRange
from .geometry import Vec3
from .hand_kinematics import WristTrajectory

K_BINS_DEFAULT = 1024
X_RANGE_DEFAULT = (-0.5, 0.5)
Y_RANGE_DEFAULT = (-0.5, 0.5)
Z_RANGE_DEFAULT = (0.0, 1.0)


@dataclass(frozen=True)
class TokenizerConfig:
    """Bin count and per-axis metric ranges of the motion vocabulary."""

    k_bins: int = K_BINS_DEFAULT
    x_range: tuple[float, float] = X_RANGE_DEFAULT
    y_range: tuple[float, float] = Y_RANGE_DEFAULT
    z_range: tuple[float, float] = Z_RANGE_DEFAULT

    def __post_init__(self) -> None:
        if int(self.k_bins) < 2:
            raise ValueError(f"k_bins must be >= 2, got {self.k_bins}")
        object.__setattr__(self, "k_bins", int(self.k_bins))
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = (float(b) for b in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} must be a finite ordered pair, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))

    @property
    def ranges(self) -> tuple[tuple[float, float], ...]:
        return (self.x_range, self.y_range, self.z_range)

    @property
    def vocabulary_size(self) -> int:
        return 3 * self.k_bins

    def half_bin_widths(self) -> tuple[float, float, float]:
        """Per-axis worst-case round-trip error for in-range coordinates."""
        return tuple((hi - lo) / (2.0 * self.k_bins) for lo, hi in self.ranges)


@dataclass(frozen=True)
class MotionTokenSequence:
    """A flat token sequence: one (x, y, z) token triple per trajectory point."""

    tokens: tuple[int, ...]
    k_bins: int = K_BINS_DEFAULT

    def __post_init__(self) -> None:
        tokens = tuple(int(t) for t in self.tokens)
        object.__setattr__(self, "tokens", tokens)
        if len(tokens) % 3 != 0:
            raise MalformedSequence(
                f"token count {len(tokens)} is not a multiple of 3")
        k = self.k_bins
        for pos, tok in enumerate(tokens):
            axis = pos % 3
            lo, hi = axis * k, (axis + 1) * k
            if not lo <= tok < hi:
                raise MalformedSequence(
                    f"token {tok} at position {pos} outside axis-{'xyz'[axis]} "
                    f"slot [{lo}, {hi})")

    def __len__(self) -> int:
        return len(self.tokens) // 3


def _bin_index(value: float, lo: float, hi: float, k: int) -> int:
    clamped = min(max(value, lo), hi)
    idx = int(math.floor((clamped - lo) / (hi - lo) * k))
    return min(max(idx, 0), k - 1)


def tokenize_point(p: Vec3, cfg: TokenizerConfig = TokenizerConfig()) -> tuple[int, int, int]:
    """Map a point to its (x, y, z) token ids, offsets included."""
    k = cfg.k_bins
    mx = _bin_index(p.x, *cfg.x_range, k)
    my = _bin_index(p.y, *cfg.y_range, k) + k
    mz = _bin_index(p.z, *cfg.z_range, k) + 2 * k
    return mx, my, mz


def detokenize_point(tokens: tuple[int, int, int],
                     cfg: TokenizerConfig = TokenizerConfig()) -> Vec3:
    """Map a token triple back to the corresponding bin centres.

    Raises:
        TokenOutOfRange: if any id falls outside its axis sub-vocabulary.
    """
    k = cfg.k_bins
    values = []
    for axis, (tok, (lo, hi)) in enumerate(zip(tokens, cfg.ranges)):
        tok = int(tok)
        slot_lo, slot_hi = axis * k, (axis + 1) * k
        if not slot_lo <= tok < slot_hi:
            raise TokenOutOfRange(
                f"token {tok} outside axis-{'xyz'[axis]} slot [{slot_lo}, {slot_hi})")
        bin_idx = tok - slot_lo
        values.append(lo + (bin_idx + 0.5) * (hi - lo) / k)
    return Vec3(values[0], values[1], values[2])


def encode_trajectory(traj: WristTrajectory,
                      cfg: TokenizerConfig = TokenizerConfig()) -> MotionTokenSequence:
    """Tokenize every trajectory point into one flat sequence."""
    tokens: list[int] = []
    for point in traj.points:
        tokens.extend(tokenize_point(Vec3.from_array(point), cfg))
    return MotionTokenSequence(tuple(tokens), cfg.k_bins)


def decode_trajectory(seq, cfg: TokenizerConfig = TokenizerConfig()) -> list[Vec3]:
    """Decode a token sequence back into bin-centre points.

    Accepts a MotionTokenSequence or a raw iterable of ints; raw input is
    validated first.

    Raises:
        MalformedSequence: on bad length, slot violations, or a bin-count
            mismatch with the config.
        EmptyInput: if the sequence holds no points.
    """
    if not isinstance(seq, MotionTokenSequence):
        seq = MotionTokenSequence(tuple(seq), cfg.k_bins)
    elif seq.k_bins != cfg.k_bins:
        raise MalformedSequence(
            f"sequence was built with k_bins={seq.k_bins}, config has {cfg.k_bins}")
    if len(seq) == 0:
        raise EmptyInput("cannot decode an empty token sequence")
    points = []
    for i in range(len(seq)):
        triple = seq.tokens[3 * i:3 * i + 3]
        points.append(detokenize_point(triple, cfg))
    return points
