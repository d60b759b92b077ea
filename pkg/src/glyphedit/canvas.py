"""Symbolic scene model and deterministic rasterizer.

A canvas holds at most one digit on a 3x3 grid of 28px cells (84x84
total).  Instructions edit the symbolic state; rendering scales the
28x28 source glyph to the state's size level and composites it at the
cell center.  All geometry is pure and glyph-content independent.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dsl import Direction, InstructionTriplet, NamedPosition, Verb

CANVAS_SIZE = 84
CELL = 28
TRAIN_SIZE = 64

# Pixel box edge for each size level; level 2 is the native glyph size's
# visual weight on the enlarged canvas.
SIZE_BOXES = {1: 14, 2: 21, 3: 28, 4: 35}
BASE_SIZE_LEVEL = 2

POSITION_CELLS = {
    NamedPosition.TOP: (2, 1),
    NamedPosition.LEFT: (1, 2),
    NamedPosition.RIGHT: (3, 2),
    NamedPosition.BOTTOM: (2, 3),
    NamedPosition.MIDDLE: (2, 2),
}

DIRECTION_DELTAS = {
    Direction.TOP: (0, -1),
    Direction.LEFT: (-1, 0),
    Direction.RIGHT: (1, 0),
    Direction.BOTTOM: (0, 1),
    Direction.TOP_LEFT: (-1, -1),
    Direction.TOP_RIGHT: (1, -1),
    Direction.BOTTOM_LEFT: (-1, 1),
    Direction.BOTTOM_RIGHT: (1, 1),
}

EMPTY_DIGIT_CLASS = 10  # aux label for "no digit on canvas"


class InvalidOperation(ValueError):
    """The instruction's precondition fails on this state; the pair is excluded."""


def cell_center(index: int) -> int:
    """Center pixel of grid cell `index` (1-3) along one axis: 14, 42, 70."""
    return CELL * (index - 1) + CELL // 2


def _box_start(center: int, box: int) -> int:
    return center - box // 2


def size_fits(size_level: int, col: int, row: int) -> bool:
    """Fit rule: the size box centered on the cell must lie inside the canvas."""
    box = SIZE_BOXES[size_level]
    for c in (cell_center(col), cell_center(row)):
        start = _box_start(c, box)
        if start < 0 or start + box > CANVAS_SIZE:
            return False
    return True


@dataclass(frozen=True)
class CanvasState:
    """Empty canvas (all fields None) or one digit at (col, row) with a size level."""

    digit: int | None = None
    glyph_id: int | None = None
    col: int | None = None
    row: int | None = None
    size_level: int | None = None

    @property
    def is_empty(self) -> bool:
        return self.digit is None

    def __post_init__(self):
        if self.is_empty:
            if any(v is not None for v in (self.glyph_id, self.col, self.row, self.size_level)):
                raise ValueError("empty state must have all fields None")
            return
        if not 0 <= self.digit <= 9:
            raise ValueError(f"digit must be 0-9, got {self.digit}")
        if self.col not in (1, 2, 3) or self.row not in (1, 2, 3):
            raise ValueError(f"cell ({self.col},{self.row}) off the 3x3 grid")
        if self.size_level not in SIZE_BOXES:
            raise ValueError(f"size level {self.size_level} out of range")
        if not size_fits(self.size_level, self.col, self.row):
            raise ValueError(
                f"size level {self.size_level} does not fit at ({self.col},{self.row})"
            )

    @staticmethod
    def empty() -> "CanvasState":
        return CanvasState()


@dataclass(frozen=True)
class AuxLabels:
    """Target-side categorical labels: 11-way digit, {3,3} position, {4,4} size (0 = absent)."""

    digit_class: int
    pos_x: int
    pos_y: int
    size_w: int
    size_h: int

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.digit_class, self.pos_x, self.pos_y, self.size_w, self.size_h)


# Cardinalities of the five auxiliary label heads, in as_tuple order.
AUX_HEAD_SIZES = (11, 4, 4, 5, 5)


def labels(state: CanvasState) -> AuxLabels:
    if state.is_empty:
        return AuxLabels(EMPTY_DIGIT_CLASS, 0, 0, 0, 0)
    return AuxLabels(state.digit, state.col, state.row, state.size_level, state.size_level)


def apply(state: CanvasState, triplet: InstructionTriplet, glyph_id: int | None = None) -> CanvasState:
    """Apply one instruction to a state; raises InvalidOperation when it cannot apply.

    `glyph_id` binds the glyph drawn by "put"; other verbs keep the state's glyph.
    """
    verb = triplet.verb

    if verb is Verb.PUT:
        if not state.is_empty:
            raise InvalidOperation("put requires an empty canvas")
        if glyph_id is None:
            raise ValueError("put requires a glyph_id")
        col, row = POSITION_CELLS[triplet.arg]
        return CanvasState(triplet.digit, glyph_id, col, row, BASE_SIZE_LEVEL)

    if state.is_empty:
        raise InvalidOperation(f"{verb.value} requires a digit on the canvas")
    if state.digit != triplet.digit:
        raise InvalidOperation(
            f"canvas holds digit {state.digit}, instruction names {triplet.digit}"
        )

    if verb is Verb.REMOVE:
        return CanvasState.empty()

    if verb in (Verb.EXPAND, Verb.COMPRESS):
        new_size = state.size_level + (1 if verb is Verb.EXPAND else -1)
        if new_size not in SIZE_BOXES:
            raise InvalidOperation(f"size level {new_size} out of range")
        if not size_fits(new_size, state.col, state.row):
            raise InvalidOperation(
                f"size level {new_size} does not fit at ({state.col},{state.row})"
            )
        return replace(state, size_level=new_size)

    # move
    dx, dy = DIRECTION_DELTAS[triplet.arg]
    col, row = state.col + dx, state.row + dy
    if not (1 <= col <= 3 and 1 <= row <= 3):
        raise InvalidOperation(f"destination cell ({col},{row}) off the grid")
    if not size_fits(state.size_level, col, row):
        raise InvalidOperation(
            f"size level {state.size_level} does not fit at ({col},{row})"
        )
    return replace(state, col=col, row=row)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-aligned centers."""
    in_h, in_w = img.shape
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    img = img.astype(np.float64)
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def render(state: CanvasState, glyphs: np.ndarray) -> np.ndarray:
    """Rasterize a state onto the 84x84 canvas.

    `glyphs` is the (N, 28, 28) pool indexed by glyph_id, values in [0, 1].
    """
    out = np.zeros((CANVAS_SIZE, CANVAS_SIZE), dtype=np.float32)
    if state.is_empty:
        return out
    box = SIZE_BOXES[state.size_level]
    patch = bilinear_resize(glyphs[state.glyph_id], box, box)
    y = _box_start(cell_center(state.row), box)
    x = _box_start(cell_center(state.col), box)
    out[y:y + box, x:x + box] = patch
    return np.clip(out, 0.0, 1.0)


def _box_filter_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Row-stochastic overlap weights mapping n_in pixels onto n_out intervals."""
    scale = n_in / n_out
    w = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


_DOWNSCALE_W = _box_filter_matrix(TRAIN_SIZE, CANVAS_SIZE)


def downscale(img: np.ndarray) -> np.ndarray:
    """Area-weighted (box filter) 84x84 -> 64x64 resampling; mean preserving."""
    if img.shape != (CANVAS_SIZE, CANVAS_SIZE):
        raise ValueError(f"expected {CANVAS_SIZE}x{CANVAS_SIZE} input, got {img.shape}")
    out = _DOWNSCALE_W @ img.astype(np.float64) @ _DOWNSCALE_W.T
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def reachable_states(digit: int, glyph_id: int) -> list[CanvasState]:
    """Breadth-first closure of {empty, put results} under all edits of one digit."""
    from .dsl import triplets_for_digit

    triplets = triplets_for_digit(digit)
    start = CanvasState.empty()
    seen = {start}
    order = [start]
    frontier = [start]
    while frontier:
        next_frontier = []
        for state in frontier:
            for t in triplets:
                try:
                    new = apply(state, t, glyph_id=glyph_id)
                except InvalidOperation:
                    continue
                if new not in seen:
                    seen.add(new)
                    order.append(new)
                    next_frontier.append(new)
        frontier = next_frontier
    return order


def valid_pairs(digit: int, glyph_id: int) -> list[tuple[CanvasState, InstructionTriplet, CanvasState]]:
    """Every (source state, instruction, target state) edit for one glyph, in closure order."""
    from .dsl import triplets_for_digit

    triplets = triplets_for_digit(digit)
    out = []
    for state in reachable_states(digit, glyph_id):
        for t in triplets:
            try:
                out.append((state, t, apply(state, t, glyph_id=glyph_id)))
            except InvalidOperation:
                continue
    return out
