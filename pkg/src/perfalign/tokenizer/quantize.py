"""Quantizers for onset, velocity, duration and score position.

All rounding is half away from zero.
"""
from __future__ import annotations

import bisect
import math

from ..errors import PositionOverflowError

T_STEP = 0.0625
T_MICRO_STEP = 0.00625
RESET_PERIOD = 2.0
MICRO_LIMIT = 5

POS_STEP = 40
POS_MICRO_STEP = 4
POS_VALUES = 32


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _clamp(x, lo, hi):
    return max(lo, min(hi, x))


def quantize_onset(t: float, window_origin: float) -> tuple[int, int, int]:
    """Return (reset count, T token, micro token) for onset ``t``.

    One reset is emitted per full 2 s crossed since ``window_origin``; T is
    relative to the advanced origin. Onsets in the last 31.25 ms before the
    next reset round to T=32 rather than losing micro precision.
    """
    x = max(0.0, t - window_origin)
    resets = int(x // RESET_PERIOD)
    x -= resets * RESET_PERIOD
    t_tok = round_half_away(x / T_STEP)
    micro = _clamp(round_half_away((x - t_tok * T_STEP) / T_MICRO_STEP), -MICRO_LIMIT, MICRO_LIMIT)
    return resets, t_tok, micro


def dequantize_onset(origin: float, t_tok: int, micro: int) -> float:
    return origin + t_tok * T_STEP + micro * T_MICRO_STEP


def quantize_velocity(v: int) -> int:
    return _clamp(math.ceil(v / 4), 1, 32)


def dequantize_velocity(tok: int) -> int:
    return 4 * tok - 2


def _three_tier_grid(step, boundary1=16, boundary2=32, top=47):
    grid = [i * step for i in range(boundary1 + 1)]
    grid += [grid[boundary1] + (i - boundary1) * 2 * step for i in range(boundary1 + 1, boundary2 + 1)]
    grid += [grid[boundary2] + (i - boundary2) * 4 * step for i in range(boundary2 + 1, top + 1)]
    return grid


PERF_DUR_GRID = _three_tier_grid(0.03125)  # seconds, tops out at 3.375 s
SCORE_DUR_GRID = _three_tier_grid(40)      # ticks, tops out at 4320


def _nearest(grid, value) -> int:
    if value >= grid[-1]:
        return len(grid) - 1
    i = bisect.bisect_right(grid, value) - 1
    if i < 0:
        return 0
    lo, hi = grid[i], grid[i + 1]
    return i + 1 if value - lo >= hi - value else i


def quantize_duration_perf(d: float) -> int:
    return _nearest(PERF_DUR_GRID, d)


def dequantize_duration_perf(tok: int) -> float:
    return PERF_DUR_GRID[tok]


def quantize_duration_score(dur_ticks: int) -> int:
    return _nearest(SCORE_DUR_GRID, dur_ticks)


def dequantize_duration_score(tok: int) -> int:
    return SCORE_DUR_GRID[tok]


def local_half_step(grid, tok: int):
    """Half the grid spacing around ``tok`` (the worst-case rounding error)."""
    if tok + 1 < len(grid):
        return (grid[tok + 1] - grid[tok]) / 2
    return (grid[tok] - grid[tok - 1]) / 2


def quantize_score_position(pos_ticks: int, bar=None) -> tuple[int, int]:
    if pos_ticks >= POS_VALUES * POS_STEP:
        where = f" in bar {bar}" if bar is not None else ""
        raise PositionOverflowError(f"position {pos_ticks} ticks{where} exceeds 32 thirty-second notes")
    pos_tok = min(round_half_away(pos_ticks / POS_STEP), POS_VALUES - 1)
    micro = _clamp(round_half_away((pos_ticks - POS_STEP * pos_tok) / POS_MICRO_STEP), -MICRO_LIMIT, MICRO_LIMIT)
    return pos_tok, micro


def dequantize_score_position(pos_tok: int, micro: int) -> int:
    return pos_tok * POS_STEP + micro * POS_MICRO_STEP
