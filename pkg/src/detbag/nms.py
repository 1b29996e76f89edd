"""Non-maximum suppression variants: greedy, soft (linear/gaussian), DIoU.

Suppression is strictly class-wise; detections of distinct classes never
affect one another. Score ties are broken by lower input index, so results
are deterministic across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from detbag.geometry import Box

DEFAULT_SCORE_FLOOR = 0.001


@dataclass(frozen=True)
class Detection:
    """A scored, class-labeled box."""

    box: Box
    score: float
    class_id: int

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score outside [0, 1]: {self.score}")
        if self.class_id < 0:
            raise ValueError(f"negative class id: {self.class_id}")


def _corners(dets: list[Detection]) -> np.ndarray:
    return np.array(
        [[d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max] for d in dets],
        dtype=float,
    ).reshape(len(dets), 4)


def _iou_row(b: np.ndarray, rest: np.ndarray) -> np.ndarray:
    """IoU of one corner-form box against an (n, 4) array of boxes."""
    iw = np.minimum(b[2], rest[:, 2]) - np.maximum(b[0], rest[:, 0])
    ih = np.minimum(b[3], rest[:, 3]) - np.maximum(b[1], rest[:, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    areas = (rest[:, 2] - rest[:, 0]) * (rest[:, 3] - rest[:, 1])
    union = area_b + areas - inter
    out = np.zeros(len(rest))
    np.divide(inter, union, out=out, where=union > 0)
    return out


def _diou_row(b: np.ndarray, rest: np.ndarray) -> np.ndarray:
    """DIoU of one corner-form box against an (n, 4) array of boxes."""
    ew = np.maximum(b[2], rest[:, 2]) - np.minimum(b[0], rest[:, 0])
    eh = np.maximum(b[3], rest[:, 3]) - np.minimum(b[1], rest[:, 1])
    c2 = ew * ew + eh * eh
    dx = (b[0] + b[2]) / 2 - (rest[:, 0] + rest[:, 2]) / 2
    dy = (b[1] + b[3]) / 2 - (rest[:, 1] + rest[:, 3]) / 2
    rho2 = dx * dx + dy * dy
    penalty = np.zeros(len(rest))
    np.divide(rho2, c2, out=penalty, where=c2 > 0)
    return _iou_row(b, rest) - penalty


def _class_order(dets: list[Detection]) -> dict[int, list[int]]:
    """Input indices per class, sorted by descending score then input index."""
    by_class: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        by_class.setdefault(d.class_id, []).append(i)
    for idxs in by_class.values():
        idxs.sort(key=lambda i: (-dets[i].score, i))
    return by_class


def _greedy(dets: list[Detection], overlap_row, threshold: float) -> list[Detection]:
    corners = _corners(dets)
    kept: list[int] = []
    for idxs in _class_order(dets).values():
        order = np.array(idxs, dtype=int)
        while order.size:
            top = order[0]
            kept.append(int(top))
            rest = order[1:]
            if not rest.size:
                break
            overlap = overlap_row(corners[top], corners[rest])
            order = rest[overlap <= threshold]
    kept.sort(key=lambda i: (-dets[i].score, i))
    return [dets[i] for i in kept]


def greedy_nms(dets: list[Detection], iou_threshold: float = 0.5) -> list[Detection]:
    """Classic greedy NMS: per class, keep the highest-scored detection and
    discard all remaining ones overlapping it with IoU above the threshold.

    Output is sorted by descending score.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold outside [0, 1]: {iou_threshold}")
    if not dets:
        return []
    return _greedy(dets, _iou_row, iou_threshold)


def diou_nms(dets: list[Detection], threshold: float = 0.45) -> list[Detection]:
    """Greedy NMS with DIoU as the suppression criterion.

    The center-distance penalty makes overlapping boxes with distant centers
    harder to suppress, which helps in crowded scenes. Since diou <= iou,
    the survivors are always a superset of greedy NMS at the same threshold.
    """
    if not -1.0 <= threshold <= 1.0:
        raise ValueError(f"threshold outside [-1, 1]: {threshold}")
    if not dets:
        return []
    return _greedy(dets, _diou_row, threshold)


def soft_nms(dets: list[Detection], iou_threshold: float = 0.5,
             sigma: float = 0.5, score_floor: float = DEFAULT_SCORE_FLOOR,
             mode: str = "linear") -> list[Detection]:
    """Soft NMS: decay overlapping same-class scores instead of discarding.

    linear mode rescores s' = s * (1 - iou) only when iou exceeds the
    threshold; gaussian mode rescores s' = s * exp(-iou^2 / sigma) for every
    pair. Detections whose decayed score falls below score_floor are
    dropped. Output carries the decayed scores, sorted descending.
    """
    if mode not in ("linear", "gaussian"):
        raise ValueError(f"unknown soft-nms mode: {mode!r}")
    if mode == "gaussian" and sigma <= 0.0:
        raise ValueError(f"sigma must be positive: {sigma}")
    if not 0.0 <= score_floor < 1.0:
        raise ValueError(f"score_floor outside [0, 1): {score_floor}")
    if not dets:
        return []

    corners = _corners(dets)
    scores = np.array([d.score for d in dets], dtype=float)
    out: list[tuple[float, int]] = []  # (final score, input index)
    for idxs in _class_order(dets).values():
        live = np.array(idxs, dtype=int)
        while live.size:
            # argmax on current scores; ties fall to the lower input index
            # because live stays sorted by input index after boolean masking
            live = live[np.lexsort((live, -scores[live]))]
            top, rest = live[0], live[1:]
            out.append((float(scores[top]), int(top)))
            if not rest.size:
                break
            overlap = _iou_row(corners[top], corners[rest])
            if mode == "linear":
                decay = np.where(overlap > iou_threshold, 1.0 - overlap, 1.0)
            else:
                decay = np.exp(-(overlap * overlap) / sigma)
            scores[rest] *= decay
            live = rest[scores[rest] >= score_floor]
    out.sort(key=lambda si: (-si[0], si[1]))
    return [replace(dets[i], score=s) for s, i in out]
