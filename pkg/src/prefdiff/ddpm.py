"""Gaussian denoising diffusion on low-dimensional data.

Timesteps are 1-based: t runs over {1, ..., T}, t = 0 is clean data.
Schedule arrays beta/alpha/sigma2 are indexed [t-1]; alpha_bar has length
T + 1 and is indexed [t] directly, with alpha_bar[0] = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import AdamwState, Mlp, RngStream, adamw_step, make_mlp, mlp_backward, mlp_forward, mlp_params, rng_gaussian, warmup_lr

# Four sine/cosine pairs over t/T in (0, 1]; geometric frequencies chosen so
# the slowest pair covers half a period and the fastest still resolves
# adjacent timesteps at T = 50.
EMBED_DIM = 8
_EMBED_FREQS = np.pi * 2.0 ** np.arange(EMBED_DIM // 2)


def timestep_embedding(t, T: int) -> np.ndarray:
    """Sinusoidal embedding of t/T; scalar t -> (8,), array (n,) -> (n, 8)."""
    s = np.asarray(t, dtype=float) / T
    ang = s[..., None] * _EMBED_FREQS
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray  # (T,), beta[t-1] = beta_t
    alpha: np.ndarray  # (T,), 1 - beta
    alpha_bar: np.ndarray  # (T+1,), running product, alpha_bar[0] = 1
    sigma2: np.ndarray  # (T,), posterior variance of the reverse step; sigma2[0] = 0

    @property
    def T(self) -> int:
        return len(self.beta)


def make_schedule(T: int = 50, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule with the reverse-posterior variances."""
    T = int(T)
    if T < 2:
        raise ValueError(f"T must be at least 2, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha)])
    sigma2 = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta
    return NoiseSchedule(beta, alpha, alpha_bar, sigma2)


def _check_t(sched: NoiseSchedule, t: int) -> int:
    t = int(t)
    if not 1 <= t <= sched.T:
        raise ValueError(f"t must lie in [1, {sched.T}], got {t}")
    return t


def _q_sample_any(
    x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    # Closed-form marginal; t may be a scalar or a per-row array, and t = 0
    # is allowed here (alpha_bar[0] = 1 makes it the identity).
    a = np.sqrt(sched.alpha_bar[t])
    b = np.sqrt(1.0 - sched.alpha_bar[t])
    if np.ndim(t) > 0:
        a = a[:, None]
        b = b[:, None]
    return a * x0 + b * eps


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Noise x0 to timestep t in one shot: sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    t = _check_t(sched, t)
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 shape {x0.shape} and eps shape {eps.shape} differ")
    return _q_sample_any(x0, t, eps, sched)


def q_joint_pair(
    x0: np.ndarray, t: int, sched: NoiseSchedule, rng: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (x_{t-1}, x_t) jointly from the forward process given x0.

    x_{t-1} comes from the closed-form marginal (x0 itself when t = 1, no
    draw consumed), then x_t from the single-step transition, so the pair
    is a genuine sample of the joint law rather than two independent
    marginals.
    """
    t = _check_t(sched, t)
    x0 = np.asarray(x0, dtype=float)
    if t == 1:
        x_tm1 = x0.copy()
    else:
        x_tm1 = q_sample(x0, t - 1, rng_gaussian(rng, list(x0.shape)), sched)
    beta_t = sched.beta[t - 1]
    x_t = np.sqrt(1.0 - beta_t) * x_tm1 + np.sqrt(beta_t) * rng_gaussian(rng, list(x0.shape))
    return x_tm1, x_t


@dataclass
class DiffusionModel:
    """Noise-prediction net plus the schedule it was trained under."""

    net: Mlp
    schedule: NoiseSchedule
    data_dim: int


def make_diffusion_model(
    data_dim: int,
    sched: NoiseSchedule,
    rng: RngStream,
    hidden: tuple[int, ...] = (64, 64, 64),
) -> DiffusionModel:
    data_dim = int(data_dim)
    if data_dim < 1:
        raise ValueError(f"data_dim must be positive, got {data_dim}")
    net = make_mlp([data_dim + EMBED_DIM, *hidden, data_dim], rng)
    return DiffusionModel(net, sched, data_dim)


def predict_eps(model: DiffusionModel, x: np.ndarray, t) -> np.ndarray:
    """Predicted noise for a batch; t is a scalar or one value per row."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.data_dim:
        raise ValueError(f"expected x of shape (batch, {model.data_dim}), got {x.shape}")
    emb = timestep_embedding(t, model.schedule.T)
    if emb.ndim == 1:
        emb = np.broadcast_to(emb, (x.shape[0], EMBED_DIM))
    return mlp_forward(model.net, np.concatenate([x, emb], axis=1))


def ddpm_step(x_t: np.ndarray, t: int, model: DiffusionModel, rng: RngStream) -> np.ndarray:
    """One ancestral reverse step for a single sample of shape (d,).

    At t = 1 the posterior variance is zero and no noise is drawn, so the
    stream is only advanced for t > 1.
    """
    sched = model.schedule
    t = _check_t(sched, t)
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape != (model.data_dim,):
        raise ValueError(f"expected x_t of shape ({model.data_dim},), got {x_t.shape}")
    eps = predict_eps(model, x_t[None, :], t)[0]
    alpha_t = sched.alpha[t - 1]
    mean = (x_t - (1.0 - alpha_t) / np.sqrt(1.0 - sched.alpha_bar[t]) * eps) / np.sqrt(alpha_t)
    if t == 1:
        return mean
    return mean + np.sqrt(sched.sigma2[t - 1]) * rng_gaussian(rng, [model.data_dim])


def train_ddpm(
    data: np.ndarray,
    model: DiffusionModel,
    opt: AdamwState,
    steps: int,
    batch: int,
    rng: RngStream,
) -> list[float]:
    """Standard noise-prediction training; returns the per-step MSE curve.

    Timesteps are drawn uniformly from {1, ..., T} per example; t = 0 is
    never trained on. opt.lr is treated as the base rate and follows the
    linear warm-up.
    """
    steps = int(steps)
    batch = int(batch)
    if steps < 1 or batch < 1:
        raise ValueError(f"steps and batch must be positive, got ({steps}, {batch})")
    points = np.asarray(data, dtype=float)
    if points.ndim != 2 or points.shape[1] != model.data_dim:
        raise ValueError(f"expected data of shape (n, {model.data_dim}), got {points.shape}")
    if len(points) < 1:
        raise ValueError("training data is empty")

    sched = model.schedule
    params = mlp_params(model.net)
    base_lr = opt.lr
    curve: list[float] = []
    for step in range(1, steps + 1):
        idx = rng.gen.integers(0, len(points), size=batch)
        x0 = points[idx]
        t = rng.gen.integers(1, sched.T + 1, size=batch)
        eps = rng_gaussian(rng, [batch, model.data_dim])
        x_t = _q_sample_any(x0, t, eps, sched)
        inp = np.concatenate([x_t, timestep_embedding(t, sched.T)], axis=1)
        pred = mlp_forward(model.net, inp)
        diff = pred - eps
        curve.append(float(np.mean(diff * diff)))
        grads, _ = mlp_backward(model.net, inp, 2.0 * diff / diff.size)
        opt.lr = warmup_lr(base_lr, step, steps)
        adamw_step(opt, params, grads)
    opt.lr = base_lr
    return curve


def _sample_one(model: DiffusionModel, stream: RngStream) -> np.ndarray:
    x = rng_gaussian(stream, [model.data_dim])
    for t in range(model.schedule.T, 0, -1):
        x = ddpm_step(x, t, model, stream)
    return x


def sample_ddpm(
    model: DiffusionModel, n_samples: int, rng: RngStream, threads: int = 1
) -> np.ndarray:
    """Run the full reverse chain for n_samples points.

    Sample i consumes only its own derived stream rng.spawn(i), so the
    result is identical for any thread count.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    streams = [rng.spawn(i) for i in range(n_samples)]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            rows = list(pool.map(lambda s: _sample_one(model, s), streams))
    else:
        rows = [_sample_one(model, s) for s in streams]
    return np.stack(rows)
