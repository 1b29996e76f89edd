"""Genetic hyperparameter search and anchor-shape optimization.

The evolution strategy is mutation-only: each generation samples a parent
from the current top performers (fitness-weighted), perturbs entries with
multiplicative gaussian noise, clamps to bounds, and keeps the best vector
ever seen. Anchor optimization is k-means under the 1 - IoU shape distance
with median centroid updates.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from detbag.decode import Anchor

logger = logging.getLogger(__name__)

# genetic-search values adopted as the seed vector defaults
SEARCHED_LEARNING_RATE = 0.00261
SEARCHED_MOMENTUM = 0.949
SEARCHED_IOU_THRESHOLD = 0.213
SEARCHED_LOSS_NORMALIZER = 0.07


@dataclass(frozen=True)
class HyperEntry:
    """One bounded hyperparameter with its mutation scale."""

    value: float
    low: float
    high: float
    mutate_scale: float = 0.2

    def __post_init__(self):
        if not self.low <= self.value <= self.high:
            raise ValueError(f"value outside bounds: {self}")
        if self.mutate_scale <= 0:
            raise ValueError(f"mutate_scale must be positive: {self}")


@dataclass(frozen=True)
class HyperVector:
    """Named, bounded hyperparameters; the unit of genetic evolution."""

    entries: dict[str, HyperEntry]

    def __getitem__(self, name: str) -> float:
        return self.entries[name].value

    def names(self) -> list[str]:
        return list(self.entries)

    def values(self) -> dict[str, float]:
        return {k: e.value for k, e in self.entries.items()}

    def with_values(self, values: dict[str, float]) -> "HyperVector":
        """New vector with updated values, clamped to each entry's bounds."""
        out = {}
        for k, e in self.entries.items():
            v = float(np.clip(values.get(k, e.value), e.low, e.high))
            out[k] = HyperEntry(v, e.low, e.high, e.mutate_scale)
        return HyperVector(out)


def default_hypervector() -> HyperVector:
    """Seed vector carrying the genetic-search training constants."""
    return HyperVector({
        "learning_rate": HyperEntry(SEARCHED_LEARNING_RATE, 1e-5, 0.1),
        "momentum": HyperEntry(SEARCHED_MOMENTUM, 0.6, 0.999, 0.05),
        "iou_assign_threshold": HyperEntry(SEARCHED_IOU_THRESHOLD, 0.05, 0.9),
        "loss_normalizer": HyperEntry(SEARCHED_LOSS_NORMALIZER, 0.005, 1.0),
    })


@dataclass(frozen=True)
class GAConfig:
    population: int = 10
    generations: int = 50
    parent_pool: int = 5
    mutation_prob: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.population < 1 or self.generations < 1 or self.parent_pool < 1:
            raise ValueError(f"population sizes must be positive: {self}")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError(f"mutation_prob outside [0, 1]: {self.mutation_prob}")


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best: float  # best-so-far fitness, nondecreasing across the history
    mean: float  # mean fitness of this generation's valid candidates


def _mutate(vec: HyperVector, rng: np.random.Generator, prob: float) -> HyperVector:
    values = {}
    for name, e in vec.entries.items():
        v = e.value
        if rng.random() < prob:
            v = v * (1.0 + rng.normal(0.0, e.mutate_scale))
        values[name] = v
    return vec.with_values(values)


def _sample_parent(pool: list[tuple[float, HyperVector]], k: int,
                   rng: np.random.Generator) -> HyperVector:
    ranked = sorted(range(len(pool)), key=lambda i: (-pool[i][0], i))[:k]
    fits = np.array([pool[i][0] for i in ranked])
    weights = fits - fits.min() + 1e-12
    weights /= weights.sum()
    return pool[ranked[int(rng.choice(len(ranked), p=weights))]][1]


def evolve(seed: HyperVector, fitness, cfg: GAConfig = GAConfig(),
           ) -> tuple[HyperVector, list[GenerationStats]]:
    """Mutation-based evolution of a hyperparameter vector.

    fitness maps a HyperVector to a float, higher is better, and must be
    deterministic. Candidates with non-finite fitness are discarded with a
    warning. Returns the best vector ever evaluated and the per-generation
    history; the best-so-far column is nondecreasing by construction.
    """
    rng = np.random.default_rng(cfg.seed)
    seed_fit = float(fitness(seed))
    if not np.isfinite(seed_fit):
        raise ValueError("seed vector has non-finite fitness")
    pool: list[tuple[float, HyperVector]] = [(seed_fit, seed)]
    best_fit, best_vec = seed_fit, seed
    history = [GenerationStats(0, best_fit, seed_fit)]

    for gen in range(1, cfg.generations + 1):
        gen_fits = []
        for _ in range(cfg.population):
            parent = _sample_parent(pool, cfg.parent_pool, rng)
            child = _mutate(parent, rng, cfg.mutation_prob)
            f = float(fitness(child))
            if not np.isfinite(f):
                logger.warning("discarding candidate with non-finite fitness: %s",
                               child.values())
                continue
            pool.append((f, child))
            gen_fits.append(f)
            if f > best_fit:
                best_fit, best_vec = f, child
        mean = float(np.mean(gen_fits)) if gen_fits else float("nan")
        history.append(GenerationStats(gen, best_fit, mean))
    return best_vec, history


def export_history_csv(history: list[GenerationStats], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best", "mean"])
        for row in history:
            writer.writerow([row.generation, repr(row.best), repr(row.mean)])


def sphere_fitness(target: dict[str, float]):
    """Synthetic test objective: negative squared distance to a target point
    in hyperparameter space (maximum 0 at the target)."""
    def fitness(vec: HyperVector) -> float:
        return -sum((vec[name] - t) ** 2 for name, t in target.items())
    return fitness


def wh_iou_matrix(shapes_a: np.ndarray, shapes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (w, h) shapes as if concentric. (n,2)x(m,2) -> (n,m)."""
    a = shapes_a[:, None, :]
    b = shapes_b[None, :, :]
    inter = np.minimum(a, b).prod(axis=2)
    return inter / (a.prod(axis=2) + b.prod(axis=2) - inter)


def anchor_recall(shapes, anchors: list[Anchor],
                  threshold: float) -> tuple[float, float]:
    """(recall at the assignment threshold, mean best IoU) of box shapes
    against a set of anchors; the desk-scale fitness behind --evolve."""
    arr = np.array([[a.w, a.h] for a in anchors], dtype=float)
    best = wh_iou_matrix(np.asarray(shapes, dtype=float), arr).max(axis=1)
    return float((best > threshold).mean()), float(best.mean())


@dataclass(frozen=True)
class KMeansResult:
    anchors: list[Anchor]  # sorted by area, ascending
    mean_best_iou: float
    # total 1 - IoU assignment distance recorded after each assignment step
    distance_per_iteration: list[float] = field(default_factory=list)


def kmeans_anchors(boxes, k: int, iters: int = 100,
                   rng: np.random.Generator | None = None) -> KMeansResult:
    """Cluster (w, h) box shapes into k anchors.

    Distance is 1 - IoU of concentric shapes; centroids update to the
    per-cluster median of w and h (robust to outliers). The median step is
    not the exact minimizer of the IoU distance, so near convergence the
    objective can tick up; the loop therefore stops at the first
    non-improving iteration (or when assignments stabilize, or after iters
    rounds) and returns the best centroids seen. Empty clusters are
    reseeded from the box farthest from its centroid.
    """
    shapes = np.asarray(boxes, dtype=float).reshape(-1, 2)
    if shapes.size == 0:
        raise ValueError("no boxes to cluster")
    if (shapes <= 0).any():
        raise ValueError("box shapes must be positive")
    distinct = np.unique(shapes, axis=0)
    if k < 1 or k > len(distinct):
        raise ValueError(f"k={k} but only {len(distinct)} distinct shapes")
    rng = rng if rng is not None else np.random.default_rng(0)

    centroids = distinct[rng.choice(len(distinct), size=k, replace=False)].copy()
    best_centroids = centroids.copy()
    assign = np.full(len(shapes), -1)
    distances: list[float] = []
    for _ in range(iters):
        dist = 1.0 - wh_iou_matrix(shapes, centroids)
        new_assign = dist.argmin(axis=1)
        per_box = dist[np.arange(len(shapes)), new_assign]
        # reseed empties from the farthest box so every cluster stays live
        for c in range(k):
            if not (new_assign == c).any():
                far = int(per_box.argmax())
                centroids[c] = shapes[far]
                new_assign[far] = c
                per_box[far] = 0.0
        total = float(per_box.sum())
        if distances and total >= distances[-1]:
            break
        distances.append(total)
        best_centroids = centroids.copy()
        if (new_assign == assign).all():
            break
        assign = new_assign
        for c in range(k):
            centroids[c] = np.median(shapes[assign == c], axis=0)

    final = 1.0 - wh_iou_matrix(shapes, best_centroids)
    mean_best = float((1.0 - final.min(axis=1)).mean())
    order = np.argsort(best_centroids[:, 0] * best_centroids[:, 1], kind="stable")
    anchors = [Anchor(float(w), float(h)) for w, h in best_centroids[order]]
    return KMeansResult(anchors, mean_best, distances)
