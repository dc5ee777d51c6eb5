"""Synthetic tasks: Gaussian-mixture data, ground-truth rewards, pairs.

The canonical task is a 2D two-mode mixture at (+-2, 0) with sigma = 0.3
and the right mode preferred. Rewards are exact functions of the
generating mixture, so preference labels never depend on any learned
component.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import RngStream, rng_gaussian


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture: k means sharing one sigma."""

    means: np.ndarray  # (k, d)
    sigma: float
    weights: np.ndarray  # (k,), sums to 1

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.means.ndim != 2:
            raise ValueError(f"means must be (k, d), got shape {self.means.shape}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.weights.shape != (len(self.means),) or np.min(self.weights) <= 0:
            raise ValueError("weights must be positive, one per component")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum()}, expected 1")

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class ToyDataset:
    points: np.ndarray  # (n, d)
    spec: MixtureSpec

    def __len__(self) -> int:
        return len(self.points)


def make_mixture(spec: MixtureSpec, n: int, rng: RngStream) -> ToyDataset:
    """n i.i.d. draws from the mixture."""
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    comps = rng.gen.choice(len(spec.means), size=n, p=spec.weights)
    points = spec.means[comps] + spec.sigma * rng_gaussian(rng, [n, spec.dim])
    return ToyDataset(points, spec)


def _log_responsibilities(spec: MixtureSpec, x2: np.ndarray) -> np.ndarray:
    # log of per-component posterior weights, (n, k), stable via logsumexp
    d2 = ((x2[:, None, :] - spec.means[None, :, :]) ** 2).sum(axis=2)
    logw = np.log(spec.weights)[None, :] - d2 / (2.0 * spec.sigma**2)
    return logw - np.logaddexp.reduce(logw, axis=1, keepdims=True)


@dataclass(frozen=True)
class GroundTruthReward:
    """Exact reward; either a mixture-mode indicator or a linear functional.

    mode_indicator returns the posterior probability that x came from one
    of the preferred components, a soft assignment in [0, 1]. linear
    returns <weight_vec, x>.
    """

    kind: str
    spec: MixtureSpec | None = None
    preferred: tuple[int, ...] = ()
    weight_vec: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "mode_indicator":
            if self.spec is None or len(self.preferred) == 0:
                raise ValueError("mode_indicator needs a mixture spec and preferred components")
            if not all(0 <= k < len(self.spec.means) for k in self.preferred):
                raise ValueError(f"preferred components {self.preferred} out of range")
        elif self.kind == "linear":
            if self.weight_vec is None:
                raise ValueError("linear reward needs a weight vector")
            object.__setattr__(self, "weight_vec", np.asarray(self.weight_vec, dtype=float))
        else:
            raise ValueError(f"unknown reward kind {self.kind!r}")

    def reward(self, x):
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "linear":
            out = x2 @ self.weight_vec
        else:
            logr = _log_responsibilities(self.spec, x2)
            out = np.exp(np.logaddexp.reduce(logr[:, list(self.preferred)], axis=1))
        return float(out[0]) if np.asarray(x).ndim == 1 else out


@dataclass(frozen=True)
class PreferencePairSet:
    """Winner/loser rows, aligned; reward(winner) > reward(loser) held at build."""

    winners: np.ndarray  # (m, d)
    losers: np.ndarray  # (m, d)

    def __post_init__(self):
        if self.winners.shape != self.losers.shape or self.winners.ndim != 2:
            raise ValueError(
                f"winners {self.winners.shape} and losers {self.losers.shape} must match as (m, d)"
            )

    def __len__(self) -> int:
        return len(self.winners)


def make_preference_pairs(
    ds: ToyDataset, reward: GroundTruthReward, n_pairs: int, rng: RngStream
) -> PreferencePairSet:
    """Draw distinct point pairs, rank by exact reward, discard ties.

    Gives up after 100 * n_pairs attempts, which only happens when the
    reward is (nearly) constant on the dataset.
    """
    n_pairs = int(n_pairs)
    if n_pairs < 0:
        raise ValueError(f"n_pairs must be non-negative, got {n_pairs}")
    n = len(ds)
    if n_pairs > 0 and n < 2:
        raise ValueError(f"need at least 2 points to form pairs, got {n}")
    rewards = reward.reward(ds.points) if n_pairs > 0 else None
    winners, losers = [], []
    attempts = 0
    while len(winners) < n_pairs:
        if attempts >= 100 * n_pairs:
            raise ValueError(
                f"gave up after {attempts} attempts with {len(winners)}/{n_pairs} pairs; "
                "is the reward constant on this dataset?"
            )
        attempts += 1
        i = int(rng.gen.integers(0, n))
        j = int(rng.gen.integers(0, n - 1))
        if j >= i:
            j += 1
        if rewards[i] == rewards[j]:
            continue
        if rewards[i] > rewards[j]:
            winners.append(ds.points[i])
            losers.append(ds.points[j])
        else:
            winners.append(ds.points[j])
            losers.append(ds.points[i])
    d = ds.points.shape[1]
    if n_pairs == 0:
        return PreferencePairSet(np.empty((0, d)), np.empty((0, d)))
    return PreferencePairSet(np.stack(winners), np.stack(losers))


def preferred_mode_mass(samples: np.ndarray, reward: GroundTruthReward) -> float:
    """Fraction of samples the reward assigns to the preferred side (> 0.5)."""
    r = reward.reward(np.atleast_2d(np.asarray(samples, dtype=float)))
    return float(np.mean(r > 0.5))


def win_rate(samples_a: np.ndarray, samples_b: np.ndarray, reward: GroundTruthReward) -> float:
    """Fraction of index-paired comparisons A wins; exact ties count 0.5."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or len(a) == 0:
        raise ValueError(f"need equal non-empty (n, d) arrays, got {a.shape} and {b.shape}")
    ra = reward.reward(a)
    rb = reward.reward(b)
    return float(np.mean(np.where(ra == rb, 0.5, (ra > rb).astype(float))))


# --- tasks ---------------------------------------------------------------


def _two_mode_spec(dim: int) -> MixtureSpec:
    means = np.zeros((2, dim))
    means[0, 0] = -2.0
    means[1, 0] = 2.0
    return MixtureSpec(means, 0.3, np.array([0.5, 0.5]))


def _two_moons_spec() -> MixtureSpec:
    # Two interleaved arcs approximated by 8 components each; the upper
    # moon (components 0..7) is preferred.
    theta = np.linspace(0.0, np.pi, 8)
    upper = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    lower = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
    means = np.concatenate([upper, lower])
    return MixtureSpec(means, 0.12, np.full(16, 1.0 / 16.0))


def task(name: str) -> tuple[MixtureSpec, GroundTruthReward]:
    """Named task -> (mixture spec, ground-truth reward)."""
    if name == "two-mode-2d":
        spec = _two_mode_spec(2)
        return spec, GroundTruthReward("mode_indicator", spec=spec, preferred=(1,))
    if name == "two-mode-1d":
        spec = _two_mode_spec(1)
        return spec, GroundTruthReward("mode_indicator", spec=spec, preferred=(1,))
    if name == "two-moons":
        spec = _two_moons_spec()
        return spec, GroundTruthReward("mode_indicator", spec=spec, preferred=tuple(range(8)))
    raise ValueError(f"unknown task {name!r}; expected two-mode-2d, two-mode-1d, or two-moons")


TASK_NAMES = ("two-mode-2d", "two-mode-1d", "two-moons")


def canonical_task() -> tuple[MixtureSpec, GroundTruthReward]:
    return task("two-mode-2d")


# --- delimited import/export ---------------------------------------------


def save_dataset_csv(points: np.ndarray, path: str | Path) -> None:
    points = np.asarray(points, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"dim_{i}" for i in range(points.shape[1])])
        for row in points:
            writer.writerow([repr(float(v)) for v in row])


def load_dataset_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not all(h == f"dim_{i}" for i, h in enumerate(header)):
            raise ValueError(f"unexpected dataset header {header}")
        rows = [[float(v) for v in row] for row in reader]
    return np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def save_pairs_csv(pairs: PreferencePairSet, path: str | Path) -> None:
    """Winner row then loser row per pair, role column last."""
    d = pairs.winners.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"dim_{i}" for i in range(d)] + ["role"])
        for w, l in zip(pairs.winners, pairs.losers):
            writer.writerow([repr(float(v)) for v in w] + ["winner"])
            writer.writerow([repr(float(v)) for v in l] + ["loser"])


def load_pairs_csv(path: str | Path) -> PreferencePairSet:
    """Rebuild a pair set from alternating winner/loser rows.

    No reward re-validation happens here; degenerate files (for example
    winner identical to loser) load as-is.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) < 2 or header[-1] != "role":
            raise ValueError(f"unexpected pairs header {header}")
        d = len(header) - 1
        winners, losers = [], []
        for idx, row in enumerate(reader):
            want = "winner" if idx % 2 == 0 else "loser"
            if row[-1] != want:
                raise ValueError(f"row {idx + 2}: expected role {want!r}, got {row[-1]!r}")
            vals = [float(v) for v in row[:-1]]
            (winners if want == "winner" else losers).append(vals)
    if len(winners) != len(losers):
        raise ValueError("dangling winner row without a loser")
    if not winners:
        return PreferencePairSet(np.empty((0, d)), np.empty((0, d)))
    return PreferencePairSet(np.asarray(winners), np.asarray(losers))
