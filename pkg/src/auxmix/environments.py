"""Synthetic multi-task environments with known ground truth.

Both families satisfy the same contract: ``step(task_id)`` trains a round of
mini-batches on one task, ``validation_metric()`` scores the primary task in
[0, 1], ``train_full(ratio, seed)`` runs a complete training under a cyclic
mixing schedule, and ``reset(seed)`` restarts the episode.  Everything is
deterministic given the seeds, which is what makes replay a byte-level
contract further up the stack.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .mixing import MixingRatio, ratio_cycle
from .runlog import derive_seed

PLANTED_METRIC_INCREMENT = 1e-3


class PlantedBanditEnv:
    """Environment whose per-task reward process is exactly Bernoulli(theta_star).

    Stepping task ``k`` raises the metric with probability ``theta_star[k]``
    and lowers it otherwise, so the improved-or-maintained reward upstream
    reproduces the planted Bernoulli draws bit for bit.  ``train_full``
    scores a mixing ratio by the share-weighted planted utilities, giving
    stage 2 a known landscape whose optimum puts weight on high-theta tasks.
    """

    def __init__(
        self,
        theta_star: Sequence[float],
        score_noise: float = 0.01,
    ):
        theta = [float(t) for t in theta_star]
        if len(theta) < 1:
            raise ValueError("theta_star must have at least one entry")
        if any(not (0.0 <= t <= 1.0) for t in theta):
            raise ValueError(f"theta_star entries must lie in [0, 1], got {theta}")
        if score_noise < 0:
            raise ValueError(f"score_noise must be >= 0, got {score_noise}")
        self.theta_star = tuple(theta)
        self.score_noise = float(score_noise)
        self._rng = np.random.default_rng(0)
        self._metric = 0.5

    @property
    def n_tasks(self) -> int:
        return len(self.theta_star)

    def reset(self, seed: int) -> None:
        self._rng = np.random.default_rng(seed)
        self._metric = 0.5

    def step(self, task_id: int) -> None:
        """Move the metric up on a planted success, down otherwise.

        The failure move halves the metric instead of subtracting when the
        metric is already below the decrement, so the metric stays positive
        and a failure can never register as improved-or-maintained.
        """
        if not (0 <= task_id < self.n_tasks):
            raise ValueError(f"task_id {task_id} out of range for {self.n_tasks} tasks")
        success = self._rng.random() < self.theta_star[task_id]
        if success:
            self._metric = min(1.0, self._metric + PLANTED_METRIC_INCREMENT)
        elif self._metric >= 2.0 * PLANTED_METRIC_INCREMENT:
            self._metric -= PLANTED_METRIC_INCREMENT
        else:
            self._metric /= 2.0

    def validation_metric(self) -> float:
        return self._metric

    def train_full(self, ratio: MixingRatio, seed: int) -> float:
        """Share-weighted utility score, pure in (ratio, seed).

        ``0.5 + sum_k share_k (theta_k - 0.5)`` plus small seeded Gaussian
        noise, clamped to [0, 1]; ``share_k`` is task k's fraction of the
        cycle.  Maximized by concentrating the ratio on high-utility tasks
        and zeroing low-utility ones.
        """
        if ratio.n_tasks != self.n_tasks:
            raise ValueError(f"ratio has {ratio.n_tasks} entries for {self.n_tasks} tasks")
        counts = np.asarray(ratio.counts, dtype=float)
        shares = counts / counts.sum()
        base = 0.5 + float(shares @ (np.asarray(self.theta_star) - 0.5))
        noise = self.score_noise * float(np.random.default_rng(seed).standard_normal())
        return float(min(max(base + noise, 0.0), 1.0))


class SharedParamMtlEnv:
    """Linear-regression surrogate for multi-task training with shared weights.

    One weight vector ``w`` is shared by every task.  The primary task and
    each useful auxiliary draw labels from (noisy copies of) the same hidden
    ``w*``; harmful auxiliaries use independent random weights, so training
    on them drags ``w`` away from ``w*``.  The metric is one minus the
    normalized MSE of the primary held-out set, clamped to [0, 1].

    ``task_profile`` lists one kind per task: entry 0 must be "primary",
    the rest "useful" or "harmful".
    """

    def __init__(
        self,
        task_profile: Sequence[str] = ("primary", "useful", "harmful"),
        dim: int = 16,
        n_primary_train: int = 256,
        n_primary_heldout: int = 256,
        n_aux: int = 128,
        total_batches: int = 2000,
        batch_size: int = 8,
        learning_rate: float = 0.05,
        batches_per_round: int = 10,
        primary_label_noise: float = 0.0,
        aux_label_noise: float = 0.0,
        useful_shift: float = 0.1,
        harmful_scale: float = 1.5,
        data_seed: int = 0,
    ):
        profile = tuple(str(k) for k in task_profile)
        if len(profile) < 1 or profile[0] != "primary":
            raise ValueError(f"task_profile must start with 'primary', got {profile}")
        if any(k not in ("useful", "harmful") for k in profile[1:]):
            raise ValueError(f"auxiliary kinds must be 'useful' or 'harmful', got {profile}")
        if dim < 1 or n_primary_train < 1 or n_primary_heldout < 1 or n_aux < 1:
            raise ValueError("dim and dataset sizes must be positive")
        if total_batches < 1 or batch_size < 1 or batches_per_round < 1:
            raise ValueError("batch budget knobs must be positive")
        if not (math.isfinite(learning_rate) and learning_rate > 0):
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        self.task_profile = profile
        self.dim = int(dim)
        self.total_batches = int(total_batches)
        self.batch_size = int(batch_size)
        self.learning_rate = float(learning_rate)
        self.batches_per_round = int(batches_per_round)

        data_rng = np.random.default_rng(derive_seed(data_seed, "mtl-data"))
        self.w_star = data_rng.standard_normal(dim)
        self._x: list[np.ndarray] = []
        self._y: list[np.ndarray] = []
        for k, kind in enumerate(profile):
            if kind == "primary":
                n = n_primary_train
                w_task = self.w_star
                label_noise = primary_label_noise
            elif kind == "useful":
                n = n_aux
                w_task = self.w_star + useful_shift * data_rng.standard_normal(dim)
                label_noise = aux_label_noise
            else:
                n = n_aux
                w_task = harmful_scale * data_rng.standard_normal(dim)
                label_noise = aux_label_noise
            x = data_rng.standard_normal((n, dim))
            y = x @ w_task + label_noise * data_rng.standard_normal(n)
            self._x.append(x)
            self._y.append(y)
        self._x_heldout = data_rng.standard_normal((n_primary_heldout, dim))
        self._y_heldout = self._x_heldout @ self.w_star
        self._heldout_var = float(np.var(self._y_heldout))

        self._w = np.zeros(dim)
        self._rng = np.random.default_rng(0)

    @property
    def n_tasks(self) -> int:
        return len(self.task_profile)

    def reset(self, seed: int) -> None:
        self._w = np.zeros(self.dim)
        self._rng = np.random.default_rng(seed)

    def _sgd_batch(self, task_id: int, rng: np.random.Generator, w: np.ndarray) -> None:
        x, y = self._x[task_id], self._y[task_id]
        idx = rng.integers(0, x.shape[0], size=self.batch_size)
        xb, yb = x[idx], y[idx]
        grad = xb.T @ (xb @ w - yb) / self.batch_size
        w -= self.learning_rate * grad

    def step(self, task_id: int) -> None:
        """Train one round (``batches_per_round`` mini-batches) of one task."""
        if not (0 <= task_id < self.n_tasks):
            raise ValueError(f"task_id {task_id} out of range for {self.n_tasks} tasks")
        for _ in range(self.batches_per_round):
            self._sgd_batch(task_id, self._rng, self._w)

    def _metric_of(self, w: np.ndarray) -> float:
        mse = float(np.mean((self._x_heldout @ w - self._y_heldout) ** 2))
        return float(min(max(1.0 - mse / self._heldout_var, 0.0), 1.0))

    def validation_metric(self) -> float:
        return self._metric_of(self._w)

    def train_full(self, ratio: MixingRatio, seed: int) -> float:
        """Train fresh weights under the cyclic schedule; pure in (ratio, seed).

        The cycle (count_0 batches of task 0, count_1 of task 1, ...) repeats
        until ``total_batches`` mini-batches have run, truncating the final
        cycle if needed.  Episode state is untouched.
        """
        if ratio.n_tasks != self.n_tasks:
            raise ValueError(f"ratio has {ratio.n_tasks} entries for {self.n_tasks} tasks")
        cycle = ratio_cycle(ratio.counts)
        rng = np.random.default_rng(seed)
        w = np.zeros(self.dim)
        for b in range(self.total_batches):
            self._sgd_batch(cycle[b % len(cycle)], rng, w)
        return self._metric_of(w)


ENVIRONMENT_FAMILIES = ("planted", "shared-linear")


def make_environment(settings: dict, batches_per_round: int = 10):
    """Build an environment from its config-file description.

    ``settings["family"]`` picks the class; remaining keys are constructor
    arguments.  ``batches_per_round`` comes from the bandit configuration so
    one stage-1 round means the same amount of training in both stages.
    """
    settings = dict(settings)
    family = settings.pop("family", None)
    if family == "planted":
        return PlantedBanditEnv(**settings)
    if family == "shared-linear":
        return SharedParamMtlEnv(batches_per_round=batches_per_round, **settings)
    raise ValueError(
        f"unknown environment family {family!r}; expected one of {ENVIRONMENT_FAMILIES}"
    )
