"""Active validation by upper-confidence-bound sampling over detection-score buckets.

Images are bucketed by their highest detection score (bucket 0 holds images
with no detection). Each round draws ``m`` buckets from ``pi`` with
replacement, shows one not-yet-labelled image from each to an annotator and
updates per-bucket success rates. The campaign stops once the confirmed
facilities reach 80% of the extrapolated total.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "UcbState",
    "default_edges",
    "assign_buckets",
    "new_campaign",
    "ucb_scores",
    "sampling_distribution",
    "run_round",
    "estimate_total",
    "run_campaign",
    "CampaignComplete",
]

STOP_FRACTION = 0.8


class CampaignComplete(Exception):
    """Every image has been labelled."""


def default_edges(scores: Iterable[float], k: int = 10) -> list[float]:
    """``k`` buckets over ``[1, inf)`` split at score quantiles (duplicates merged)."""
    values = np.asarray(list(scores), dtype=float)
    inner = np.quantile(values, np.arange(1, k) / k) if len(values) else np.array([])
    edges = [1.0] + sorted({float(v) for v in inner if v > 1.0}) + [math.inf]
    return edges


def assign_buckets(image_scores: Mapping[str, Sequence[float]], edges: Sequence[float]) -> dict[str, int]:
    """Bucket index per image: 0 for no detections, else ``i`` with max score in ``[edges[i-1], edges[i])``."""
    edges = list(edges)
    if edges[0] != 1.0 or edges[-1] != math.inf or any(a >= b for a, b in zip(edges, edges[1:])):
        raise ValueError("edges must ascend from 1 to inf")
    out = {}
    for image, scores in image_scores.items():
        if not scores:
            out[image] = 0
            continue
        top = max(scores)
        if min(scores) < 1.0:
            raise ValueError(f"image {image!r}: detection score below 1")
        out[image] = int(np.searchsorted(edges, top, side="right"))
    return out


@dataclass
class UcbState:
    edges: list[float]
    buckets: list[list[str]]  # images per bucket, index 0 = no detections
    alpha: float = 1.0
    visits: np.ndarray = None
    successes: np.ndarray = None
    found: int = 0
    examined: dict = field(default_factory=dict)  # image -> label
    rounds: int = 0
    seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        k = len(self.buckets)
        if self.visits is None:
            self.visits = np.zeros(k, dtype=np.int64)
        if self.successes is None:
            self.successes = np.zeros(k, dtype=np.int64)
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)
        if self.alpha < 0:
            raise ValueError("exploration parameter must be >= 0")

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(b) for b in self.buckets], dtype=np.int64)

    @property
    def mu(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            rate = self.successes / self.visits
        return np.where(self.visits > 0, rate, 0.0)

    def remaining(self, bucket: int) -> list[str]:
        return [img for img in self.buckets[bucket] if img not in self.examined]


def new_campaign(
    image_scores: Mapping[str, Sequence[float]],
    edges: Sequence[float] | None = None,
    alpha: float = 1.0,
    seed: int = 0,
    k: int = 10,
) -> UcbState:
    if edges is None:
        edges = default_edges((max(s) for s in image_scores.values() if s), k)
    assignment = assign_buckets(image_scores, edges)
    buckets: list[list[str]] = [[] for _ in range(len(edges))]
    for image in sorted(assignment):
        buckets[assignment[image]].append(image)
    return UcbState(list(edges), buckets, alpha=alpha, seed=seed)


def ucb_scores(state: UcbState) -> np.ndarray:
    """``mu_i + alpha * sqrt(ln(sum n) / n_i)``; unvisited buckets score +inf."""
    n = state.visits.astype(float)
    total = n.sum()
    scores = np.full(len(n), math.inf)
    seen = n > 0
    if total > 0:
        scores[seen] = state.mu[seen] + state.alpha * np.sqrt(math.log(total) / n[seen])
    return scores


def _normalise(scores: np.ndarray, active: np.ndarray) -> np.ndarray:
    pi = np.zeros(len(scores))
    if not active.any():
        return pi
    inf = active & np.isinf(scores)
    if inf.any():
        pi[inf] = 1.0 / inf.sum()
        return pi
    s = np.where(active, scores, 0.0)
    if s.sum() <= 0:
        pi[active] = 1.0 / active.sum()
        return pi
    return s / s.sum()


def sampling_distribution(state: UcbState, scores: np.ndarray | None = None) -> np.ndarray:
    """Bucket probabilities ``S_i / sum S``; uniform before any visit.

    Empty buckets get zero mass. Unvisited buckets (infinite score) share all
    the mass until each has been tried.
    """
    active = state.sizes > 0
    if state.visits.sum() == 0:
        pi = np.zeros(len(active))
        pi[active] = 1.0 / max(active.sum(), 1)
        return pi
    return _normalise(ucb_scores(state) if scores is None else scores, active)


def run_round(state: UcbState, m: int, oracle: Callable[[str], bool]):
    """One labelling round. Returns ``(pi, sampled_images, labels)``.

    Draws ``m`` buckets with replacement, then one unlabelled image per draw.
    A bucket with nothing left to label is dropped and the draw repeated.
    Labels are applied in image-id order.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    remaining = [state.remaining(b) for b in range(len(state.buckets))]
    if not any(remaining):
        raise CampaignComplete("every image has been labelled")
    pi = sampling_distribution(state)
    scores = ucb_scores(state)
    first_round = state.visits.sum() == 0
    open_ = np.array([bool(r) for r in remaining])
    draw_pi = pi.copy()
    picked: list[tuple[int, str]] = []
    for _ in range(m):
        if not open_.any():
            break
        if (draw_pi[~open_] > 0).any():
            # conditioning pi on the buckets that still have images
            if first_round:
                draw_pi = np.where(open_, 1.0, 0.0) / open_.sum()
            else:
                draw_pi = _normalise(scores, open_)
        b = int(state.rng.choice(len(draw_pi), p=draw_pi))
        pool = remaining[b]
        image = pool.pop(int(state.rng.integers(len(pool))))
        picked.append((b, image))
        if not pool:
            open_[b] = False

    labels = {}
    for b, image in sorted(picked, key=lambda t: t[1]):
        label = bool(oracle(image))
        labels[image] = label
        state.examined[image] = label
        state.visits[b] += 1
        state.successes[b] += label
        state.found += label
    state.rounds += 1
    return pi, [img for _, img in picked], labels


def estimate_total(state: UcbState, estimator: str = "mu") -> tuple[float, float, bool]:
    """``(N_mu, N_pi, stop)``.

    ``N_mu`` extrapolates each bucket's success rate over its size;
    ``N_pi`` weights bucket sizes by the current sampling distribution.
    ``stop`` compares the confirmed count with 80% of the chosen estimate.
    """
    if state.rounds == 0:
        raise ValueError("no rounds completed yet")
    sizes = state.sizes
    n_mu = float((sizes * state.mu).sum())
    n_pi = float((sizes * sampling_distribution(state)).sum())
    chosen = {"mu": n_mu, "pi": n_pi}
    if estimator not in chosen:
        raise ValueError(f"unknown estimator {estimator!r}")
    return n_mu, n_pi, state.found >= STOP_FRACTION * chosen[estimator]


def run_campaign(
    state: UcbState,
    m: int,
    oracle: Callable[[str], bool],
    max_rounds: int = 10_000,
    estimator: str = "mu",
    log=None,
) -> list[dict]:
    """Rounds until the stop rule fires or nothing is left to label.

    Each round's record is also written as a JSON line to ``log`` when given.
    """
    records = []
    for _ in range(max_rounds):
        try:
            pi, sampled, labels = run_round(state, m, oracle)
        except CampaignComplete:
            break
        n_mu, n_pi, stop = estimate_total(state, estimator)
        rec = {
            "round": state.rounds,
            "pi": [float(p) for p in pi],
            "sampled": sampled,
            "labels": labels,
            "found": int(state.found),
            "n": [int(v) for v in state.visits],
            "mu": [float(v) for v in state.mu],
            "N_c_mu": n_mu,
            "N_c_pi": n_pi,
            "stopped": bool(stop),
        }
        records.append(rec)
        if log is not None:
            log.write(json.dumps(rec) + "\n")
        if stop:
            break
    return records
