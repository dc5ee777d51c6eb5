"""Pointwise preference score S(x) in (0, 1) and its pairwise training loss.

The classifier is a sigmoid head on a small tanh trunk, optionally fed the
same timestep embedding as the diffusion net so one model scores every
noise level. Training never sees absolute labels, only (winner, loser)
pairs noised through the forward process.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ddpm import EMBED_DIM, NoiseSchedule, _q_sample_any, timestep_embedding
from .nn import (
    AdamwState,
    Mlp,
    RngStream,
    adamw_step,
    make_mlp,
    mlp_backward,
    mlp_forward,
    mlp_params,
    rng_gaussian,
    warmup_lr,
)

# Keeps the score strictly inside (0, 1): sigmoid(30) ~ 1 - 9.4e-14.
LOGIT_CLAMP = 30.0

# Damps the timestep embedding before it enters the trunk. The pairwise
# loss carries far more signal about the shape of the score in x than
# about its dependence on t, so the embedding acts as a mild modulation
# of one shared shape rather than an invitation to learn T separate ones.
EMBED_SCALE = 0.2


class ClampSaturationWarning(UserWarning):
    """The logit hit the clamp, so the returned gradient is zero there."""


@dataclass
class PreferenceClassifier:
    trunk: Mlp
    data_dim: int
    T: int  # diffusion horizon used to normalize the timestep embedding
    time_conditioned: bool = True


def make_classifier(
    data_dim: int,
    T: int,
    rng: RngStream,
    hidden: tuple[int, ...] = (384, 384),
    time_conditioned: bool = True,
) -> PreferenceClassifier:
    data_dim = int(data_dim)
    T = int(T)
    if data_dim < 1:
        raise ValueError(f"data_dim must be positive, got {data_dim}")
    if T < 1:
        raise ValueError(f"T must be positive, got {T}")
    d_in = data_dim + (EMBED_DIM if time_conditioned else 0)
    trunk = make_mlp([d_in, *hidden, 1], rng)
    # A zeroed head makes the untrained score exactly 1/2 everywhere, so
    # noise levels the pairwise loss never pins down stay neutral instead
    # of inheriting arbitrary shapes from the random init.
    trunk.weights[-1][:] = 0.0
    return PreferenceClassifier(trunk, data_dim, T, time_conditioned)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _as_batch(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape != (d,):
            raise ValueError(f"expected point of shape ({d},), got {x.shape}")
        return x[None, :], True
    if x.ndim == 2 and x.shape[1] == d:
        return x, False
    raise ValueError(f"expected shape ({d},) or (n, {d}), got {x.shape}")


def _check_times(clf: PreferenceClassifier, t, n: int) -> np.ndarray:
    # There is no level-0 embedding: clean samples use the t = 1 one.
    t = np.asarray(t, dtype=int)
    if not np.all((t >= 1) & (t <= clf.T)):
        raise ValueError(f"t must lie in [1, {clf.T}]")
    if t.ndim == 0:
        t = np.full(n, int(t))
    elif t.shape != (n,):
        raise ValueError(f"expected one timestep per row, got shape {t.shape}")
    return t


def _trunk_input(clf: PreferenceClassifier, x2: np.ndarray, t) -> np.ndarray:
    if not clf.time_conditioned:
        return x2
    t = _check_times(clf, t, len(x2))
    return np.concatenate([x2, EMBED_SCALE * timestep_embedding(t, clf.T)], axis=1)


def _raw_logits(clf: PreferenceClassifier, x2: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
    """Unclamped trunk logits plus the trunk input rows they came from."""
    inp = _trunk_input(clf, x2, t)
    return mlp_forward(clf.trunk, inp)[:, 0], inp


def score(clf: PreferenceClassifier, x, t: int = 1):
    """S(x) = sigmoid(clamped trunk logit), strictly inside (0, 1)."""
    x2, single = _as_batch(x, clf.data_dim)
    z, _ = _raw_logits(clf, x2, t)
    s = _sigmoid(np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP))
    return float(s[0]) if single else s


def log_score(clf: PreferenceClassifier, x, t: int = 1):
    """log S(x), computed stably; bounded below by roughly -30."""
    x2, single = _as_batch(x, clf.data_dim)
    z, _ = _raw_logits(clf, x2, t)
    ls = -np.logaddexp(0.0, -np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP))
    return float(ls[0]) if single else ls


def log_score_grad(clf: PreferenceClassifier, x, t: int = 1):
    """Gradient of log S w.r.t. x: (1 - S) * dlogit/dx.

    Where the logit sits at the clamp the score is locally constant, so
    the gradient is zero there and a ClampSaturationWarning is issued.
    """
    x2, single = _as_batch(x, clf.data_dim)
    z, inp = _raw_logits(clf, x2, t)
    saturated = np.abs(z) >= LOGIT_CLAMP
    s = _sigmoid(np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP))
    upstream = ((1.0 - s) * ~saturated)[:, None]
    _, in_grad = mlp_backward(clf.trunk, inp, upstream)
    if saturated.any():
        warnings.warn(
            "logit clamped at +-30; returning zero gradient there", ClampSaturationWarning
        )
    grad = in_grad[:, : clf.data_dim]
    return grad[0] if single else grad


@dataclass(frozen=True)
class NoisedTuple:
    """A preference pair pushed through the forward process at one t."""

    x_t_w: np.ndarray
    x_tm1_w: np.ndarray
    x_t_l: np.ndarray
    x_tm1_l: np.ndarray
    t: int


@dataclass(frozen=True)
class PcLossConfig:
    beta: float = 0.1
    T: int = 50


def _check_loss_cfg(cfg: PcLossConfig) -> None:
    if not cfg.beta > 0:
        raise ValueError(f"beta must be positive, got {cfg.beta}")
    if int(cfg.T) < 1:
        raise ValueError(f"T must be positive, got {cfg.T}")


def _loss_core(
    clf: PreferenceClassifier,
    w_prev: np.ndarray,
    w_cur: np.ndarray,
    l_prev: np.ndarray,
    l_cur: np.ndarray,
    t: np.ndarray,
    cfg: PcLossConfig,
    with_grads: bool,
) -> tuple[float, list[np.ndarray] | None]:
    """Mean of -log sigmoid(c * [dlogS(winner) - dlogS(loser)]) with c = beta * T.

    dlogS(side) = log S(x_{t-1}, t-1) - log S(x_t, t); at t = 1 the
    x_{t-1} rows are clean samples and fall back to the t = 1 embedding.
    """
    n = len(t)
    c = cfg.beta * cfg.T
    t_prev = np.maximum(t - 1, 1)
    rows = np.concatenate([w_prev, w_cur, l_prev, l_cur], axis=0)
    times = np.concatenate([t_prev, t, t_prev, t])
    z, inp = _raw_logits(clf, rows, times)
    saturated = np.abs(z) >= LOGIT_CLAMP
    zc = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    logs = -np.logaddexp(0.0, -zc)
    lw_prev, lw_cur, ll_prev, ll_cur = logs.reshape(4, n)
    arg = c * ((lw_prev - lw_cur) - (ll_prev - ll_cur))
    loss = float(np.mean(np.logaddexp(0.0, -arg)))
    if not with_grads:
        return loss, None
    # d loss / d arg, fanned out to the four score blocks
    darg = -_sigmoid(-arg) / n
    sign = np.concatenate([darg, -darg, -darg, darg]) * c
    dlogs_dz = (1.0 - _sigmoid(zc)) * ~saturated
    grads, _ = mlp_backward(clf.trunk, inp, (sign * dlogs_dz)[:, None])
    return loss, grads


def pc_loss(clf: PreferenceClassifier, batch: list[NoisedTuple], cfg: PcLossConfig) -> float:
    """Preference-consistency loss over a batch of noised tuples.

    Identical winner and loser give exactly log 2 regardless of the model.
    """
    _check_loss_cfg(cfg)
    if len(batch) == 0:
        raise ValueError("batch is empty")
    w_prev = np.stack([tu.x_tm1_w for tu in batch])
    w_cur = np.stack([tu.x_t_w for tu in batch])
    l_prev = np.stack([tu.x_tm1_l for tu in batch])
    l_cur = np.stack([tu.x_t_l for tu in batch])
    t = np.asarray([tu.t for tu in batch], dtype=int)
    loss, _ = _loss_core(clf, w_prev, w_cur, l_prev, l_cur, t, cfg, with_grads=False)
    return loss


def train_classifier(
    clf: PreferenceClassifier,
    pairs,
    sched: NoiseSchedule,
    cfg: PcLossConfig,
    opt: AdamwState,
    steps: int,
    batch: int,
    rng: RngStream,
) -> list[float]:
    """Minimize pc_loss on freshly noised pairs; returns the loss curve.

    Each drawn pair shares one t ~ Uniform{1..T}; the winner and loser are
    noised independently (own joint draw per side, winner first).
    """
    _check_loss_cfg(cfg)
    steps = int(steps)
    batch = int(batch)
    if steps < 1 or batch < 1:
        raise ValueError(f"steps and batch must be positive, got ({steps}, {batch})")
    winners = np.asarray(pairs.winners, dtype=float)
    losers = np.asarray(pairs.losers, dtype=float)
    if winners.shape != losers.shape or winners.ndim != 2 or winners.shape[1] != clf.data_dim:
        raise ValueError(
            f"expected matching (n, {clf.data_dim}) winner/loser arrays, "
            f"got {winners.shape} and {losers.shape}"
        )
    if len(winners) == 0:
        raise ValueError("no preference pairs to train on")
    if int(cfg.T) != sched.T:
        raise ValueError(f"cfg.T = {cfg.T} does not match schedule T = {sched.T}")

    def joint(x0: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # Vectorized q_joint_pair: marginal to t-1, one forward step to t.
        eps1 = rng_gaussian(rng, list(x0.shape))
        x_prev = _q_sample_any(x0, t - 1, eps1, sched)
        beta_t = sched.beta[t - 1][:, None]
        eps2 = rng_gaussian(rng, list(x0.shape))
        return x_prev, np.sqrt(1.0 - beta_t) * x_prev + np.sqrt(beta_t) * eps2

    params = mlp_params(clf.trunk)
    base_lr = opt.lr
    curve: list[float] = []
    for step in range(1, steps + 1):
        idx = rng.gen.integers(0, len(winners), size=batch)
        t = rng.gen.integers(1, sched.T + 1, size=batch)
        w_prev, w_cur = joint(winners[idx], t)
        l_prev, l_cur = joint(losers[idx], t)
        loss, grads = _loss_core(clf, w_prev, w_cur, l_prev, l_cur, t, cfg, with_grads=True)
        curve.append(loss)
        opt.lr = warmup_lr(base_lr, step, steps)
        adamw_step(opt, params, grads)
    opt.lr = base_lr
    return curve
