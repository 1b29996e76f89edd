"""Head decoding with grid-sensitivity elimination, and anchor assignment.

The classic decode b_x = sigmoid(t_x) + c_x can only reach the cell
boundaries c_x and c_x + 1 at infinite logits. Scaling the sigmoid by a
factor s > 1 (recentred so the cell midpoint is fixed) lets the center land
exactly on, and slightly past, the boundaries at finite logits:

    b_x = (s * sigmoid(t_x) - (s - 1) / 2 + c_x) * stride

With s = 1 this reduces exactly to the classic equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from detbag.geometry import Box, CenterBox, iou

DEFAULT_SENSITIVITY_SCALE = 1.1
DEFAULT_ASSIGN_IOU_THRESHOLD = 0.213  # genetic-search value, library default


@dataclass(frozen=True)
class Anchor:
    """Prior box shape in pixels at network input resolution."""

    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"anchor sides must be positive: {self}")


@dataclass(frozen=True)
class RawPrediction:
    """Pre-decode head outputs for one grid cell and one anchor slot."""

    t_x: float
    t_y: float
    t_w: float
    t_h: float
    objectness: float
    class_scores: tuple[float, ...] = ()
    cell: tuple[int, int] = (0, 0)  # (c_x, c_y)
    anchor_index: int = 0


@dataclass(frozen=True)
class DecodeConfig:
    grid_w: int
    grid_h: int
    stride: float
    anchors: tuple[Anchor, ...]
    sensitivity_scale: float = DEFAULT_SENSITIVITY_SCALE

    def __post_init__(self):
        if self.stride <= 0:
            raise ValueError(f"stride must be positive: {self.stride}")
        if self.sensitivity_scale < 1.0:
            raise ValueError(
                f"sensitivity scale must be >= 1: {self.sensitivity_scale}")


@dataclass(frozen=True)
class Decoded:
    box: CenterBox  # pixel units
    objectness: float
    class_probs: np.ndarray = field(default_factory=lambda: np.zeros(0))


def sigmoid(x: float) -> float:
    # branch keeps exp() in the underflow-safe direction
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def decode(p: RawPrediction, cfg: DecodeConfig) -> Decoded:
    """Decode raw head outputs into a pixel-space box plus probabilities."""
    c_x, c_y = p.cell
    if not (0 <= c_x < cfg.grid_w and 0 <= c_y < cfg.grid_h):
        raise ValueError(f"cell {p.cell} outside {cfg.grid_w}x{cfg.grid_h} grid")
    anchor = cfg.anchors[p.anchor_index]
    s = cfg.sensitivity_scale
    half_expand = (s - 1.0) / 2.0
    b_x = (s * sigmoid(p.t_x) - half_expand + c_x) * cfg.stride
    b_y = (s * sigmoid(p.t_y) - half_expand + c_y) * cfg.stride
    b_w = anchor.w * math.exp(p.t_w)
    b_h = anchor.h * math.exp(p.t_h)
    probs = np.array([sigmoid(c) for c in p.class_scores])
    return Decoded(CenterBox(b_x, b_y, b_w, b_h), sigmoid(p.objectness), probs)


def shape_iou(w_a: float, h_a: float, w_b: float, h_b: float) -> float:
    """IoU of two box shapes centered at the same point."""
    half = Box(-w_a / 2, -h_a / 2, w_a / 2, h_a / 2)
    other = Box(-w_b / 2, -h_b / 2, w_b / 2, h_b / 2)
    return iou(half, other)


def assign_anchors(truth: CenterBox, cfg: DecodeConfig,
                   iou_threshold: float = DEFAULT_ASSIGN_IOU_THRESHOLD,
                   ) -> list[tuple[tuple[int, int], int]]:
    """Anchors responsible for a ground-truth box.

    Every anchor whose shape-IoU with the truth (both centered at the truth
    center) exceeds the threshold is assigned, paired with the grid cell
    containing the truth center. If no anchor clears the threshold the
    single best one is returned, so every ground truth stays trainable.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold outside (0, 1): {iou_threshold}")
    c_x = min(int(truth.x_c / cfg.stride), cfg.grid_w - 1)
    c_y = min(int(truth.y_c / cfg.stride), cfg.grid_h - 1)
    cell = (max(c_x, 0), max(c_y, 0))
    ious = [shape_iou(truth.w, truth.h, a.w, a.h) for a in cfg.anchors]
    chosen = [i for i, v in enumerate(ious) if v > iou_threshold]
    if not chosen:
        chosen = [max(range(len(ious)), key=lambda i: (ious[i], -i))]
    return [(cell, i) for i in chosen]
