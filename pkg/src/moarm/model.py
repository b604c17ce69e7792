"""Training: order-context sampling, the single-step observed-data estimator,
the Bernoulli missingness likelihood, annealing, and the minibatch loop.

The observed-data term asks the model to predict the not-yet-revealed part of
each row's observed set from a uniformly random revealed prefix; its
prefactor L_o / (L_o - i + 1) makes the single sampled step an unbiased
estimate of the full order-marginalized objective.  Under MNAR training, the
missingness head is fit on Monte-Carlo completions, and gradient flow from
that term into the generative parameters ramps up linearly over the warmup.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import streams
from .backbone import (
    NetConfig,
    forward_infer,
    forward_tape,
    grads_of,
    head_logits_infer,
    head_tape,
    init_params,
    wrap_params,
)
from .checkpoint import ModelBundle
from .data import FeatureSchema, Standardization
from .optim import EmaState, OptimizerState, PlateauScheduler, optimizer_step
from .sampling import _mask_loglik, sample_completions_tape


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class OrderContext:
    """A sampled step: reveal `context` (i-1 observed elements), predict the rest."""

    step_index: int  # i, 1-based
    context: np.ndarray  # indices revealed before step i, subset of observed
    targets: np.ndarray  # observed indices not yet revealed

    def context_binary(self, width: int) -> np.ndarray:
        b = np.zeros(width, dtype=np.uint8)
        b[self.context] = 1
        return b


def sample_order_context(mask_binary: np.ndarray, rng: np.random.Generator) -> OrderContext | None:
    """i ~ Unif{1..L_o}; the context is a uniform (i-1)-subset of the observed set.

    Returns None for rows with nothing observed (the row is skipped).
    """
    observed = np.flatnonzero(mask_binary)
    n_obs = observed.size
    if n_obs == 0:
        return None
    i = int(rng.integers(1, n_obs + 1))
    perm = rng.permutation(observed)
    return OrderContext(i, np.sort(perm[: i - 1]), np.sort(perm[i - 1 :]))


def observed_loss(
    x_row: np.ndarray,
    mask_binary: np.ndarray,
    ctx: OrderContext,
    params: dict[str, np.ndarray],
    cfg: NetConfig,
) -> float:
    """Single-row value of the prefactored observed-data estimator."""
    width = x_row.shape[0]
    n_obs = int(mask_binary.sum())
    ctx_bin = ctx.context_binary(width).astype(np.float64)
    t = np.array([ctx.step_index / width])
    mu, logs = forward_infer(params, x_row[None, :], ctx_bin[None, :], t, cfg)
    inv = np.exp(-logs[0, ctx.targets])
    r = (x_row[ctx.targets] - mu[0, ctx.targets]) * inv
    logp = -0.5 * r * r - logs[0, ctx.targets] - 0.5 * math.log(2.0 * math.pi)
    prefactor = n_obs / (n_obs - ctx.step_index + 1)
    return float(prefactor * logp.sum())


def missingness_loss(
    completed_row: np.ndarray,
    mask_binary: np.ndarray,
    params: dict[str, np.ndarray],
    cfg: NetConfig,
) -> float:
    """Log-likelihood of the observation mask given a completed row."""
    logits = head_logits_infer(params, completed_row[None, :], cfg)
    return float(_mask_loglik(logits, mask_binary[None, :])[0])


def anneal_factor(step: int, warmup: int) -> float:
    """Linear ramp from 0 to 1 over `warmup` steps; 1 everywhere if warmup == 0."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    if warmup <= 0:
        return 1.0
    return min(1.0, step / warmup)


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 256
    lr: float = 4e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    clip_norm: float = 1.0
    mode: str = "mcar"  # "mcar" | "mnar"
    k_train: int = 10  # completions per row for the missingness term
    anneal_warmup: int | None = None  # steps; None -> 30% of total steps
    sample_steps: int | None = None  # schedule length for training completions
    hidden: tuple[int, ...] = (512, 1024, 512)
    temb_dim: int = 512
    head_hidden: tuple[int, ...] = (256, 256)
    ema_decay: float = 0.999
    plateau: bool = True
    plateau_factor: float = 0.9
    plateau_patience: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("mcar", "mnar"):
            raise ValueError(f"unknown training mode {self.mode!r}")
        if self.mode == "mnar" and self.k_train < 1:
            raise ValueError("MNAR training needs k_train >= 1")
        if self.anneal_warmup is not None and self.anneal_warmup < 0:
            raise ValueError("anneal_warmup must be >= 0")

    def net_config(self, width: int) -> NetConfig:
        return NetConfig(width, tuple(self.hidden), self.temb_dim, tuple(self.head_hidden))


@dataclass
class LossBreakdown:
    obs_term: float
    miss_term: float
    alpha: float

    @property
    def total(self) -> float:
        return self.obs_term + self.miss_term


def _batch_contexts(masks: np.ndarray, seed: int, step: int):
    """Sample (i, context) per row; rows with empty observed sets are skipped.

    One stream per training step: the batch is processed as a unit, so rows
    draw sequentially from the step's generator.
    """
    rng = streams.stream(seed, streams.CONTEXT, step)
    rows, i_vals, ctx = [], [], np.zeros_like(masks, dtype=np.float64)
    width = masks.shape[1]
    weights = np.zeros((masks.shape[0], width))
    for r in range(masks.shape[0]):
        oc = sample_order_context(masks[r], rng)
        if oc is None:
            continue
        rows.append(r)
        i_vals.append(oc.step_index)
        ctx[r, oc.context] = 1.0
        n_obs = int(masks[r].sum())
        weights[r, oc.targets] = n_obs / (n_obs - oc.step_index + 1)
    return np.array(rows, dtype=np.int64), np.array(i_vals, dtype=np.float64), ctx, weights


def train_step(
    x: np.ndarray,
    masks: np.ndarray,
    params: dict[str, np.ndarray],
    opt: OptimizerState,
    ema: EmaState,
    cfg: TrainConfig,
    net: NetConfig,
    step: int,
    warmup: int,
) -> LossBreakdown:
    """One gradient-ascent step of the minibatch objective."""
    rows, i_vals, ctx, weights = _batch_contexts(masks, cfg.seed, step)
    if rows.size == 0:
        raise TrainingError("batch has no rows with observed entries")
    pt = wrap_params(params)
    xb, mb = x[rows], masks[rows]
    t_norm = i_vals / x.shape[1]
    mu, logs = forward_tape(pt, xb, ctx[rows], t_norm, net)
    obs = ad.gauss_wsum(mu, logs, xb, weights[rows] / rows.size)

    alpha = anneal_factor(step, warmup)
    if cfg.mode == "mnar":
        completions, traj_row = sample_completions_tape(
            pt, x, masks, cfg.k_train, net, cfg.seed, step, cfg.sample_steps
        )
        logits = head_tape(pt, ad.anneal(completions, alpha), net)
        labels = masks[traj_row].astype(np.float64)
        miss = ad.bce_wsum(logits, labels, np.full(labels.shape, 1.0 / labels.shape[0]))
        total = ad.add(obs, miss)
        miss_val = float(miss.data)
    else:
        total = obs
        miss_val = 0.0

    if not math.isfinite(float(total.data)):
        raise TrainingError(f"non-finite loss at step {step}: obs={obs.data} miss={miss_val}")
    loss = ad.scale(total, -1.0)
    loss.backward()
    # clip the backbone and head families separately: the head's gradient
    # magnitude must not perturb the generative update (alpha gating)
    optimizer_step(params, grads_of(pt), opt, cfg.clip_norm, clip_groups=("bb.", "mh."))
    ema.update(params)
    return LossBreakdown(float(obs.data), miss_val, alpha)


def fit(
    values: np.ndarray,
    masks: np.ndarray,
    schema: FeatureSchema,
    stats: Standardization,
    cfg: TrainConfig,
    on_epoch=None,
) -> tuple[ModelBundle, list[dict]]:
    """Train on standardized encoded rows under the given observation masks.

    Returns the model bundle (live + EMA parameters) and one metrics record
    per epoch.
    """
    x = np.asarray(values, dtype=np.float64)
    m = np.asarray(masks, dtype=np.uint8)
    if x.shape != m.shape:
        raise ValueError("values and masks must have the same shape")
    n_rows, width = x.shape
    net = cfg.net_config(width)
    params = init_params(net, cfg.seed)
    opt = OptimizerState(lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)
    ema = EmaState.from_params(params, cfg.ema_decay)
    plateau = PlateauScheduler(cfg.plateau_factor, cfg.plateau_patience)

    batches_per_epoch = max(1, math.ceil(n_rows / cfg.batch_size))
    total_steps = cfg.epochs * batches_per_epoch
    warmup = cfg.anneal_warmup if cfg.anneal_warmup is not None else int(0.3 * total_steps)

    history: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = streams.stream(cfg.seed, streams.SHUFFLE, epoch).permutation(n_rows)
        obs_sum = miss_sum = 0.0
        alpha = anneal_factor(step, warmup)
        for b in range(batches_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            if idx.size == 0:
                continue
            breakdown = train_step(x[idx], m[idx], params, opt, ema, cfg, net, step, warmup)
            obs_sum += breakdown.obs_term
            miss_sum += breakdown.miss_term
            alpha = breakdown.alpha
            step += 1
        record = {
            "epoch": epoch,
            "obs_term": obs_sum / batches_per_epoch,
            "miss_term": miss_sum / batches_per_epoch,
            "alpha": alpha,
            "lr": opt.lr,
            "wall_time": time.perf_counter() - t0,
        }
        if cfg.plateau:
            plateau.step(-(record["obs_term"] + record["miss_term"]), opt)
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)

    bundle = ModelBundle(
        schema=schema,
        net=net,
        params=params,
        ema=ema.shadow,
        standardization=stats,
        meta={
            "mode": cfg.mode,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "lr": cfg.lr,
            "seed": cfg.seed,
            "k_train": cfg.k_train,
            "anneal_warmup": warmup,
        },
    )
    return bundle, history


def write_metrics_log(history: list[dict], path: str) -> None:
    """One structured-text record per epoch."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(
                f"epoch={rec['epoch']} obs_term={rec['obs_term']:.6f} "
                f"miss_term={rec['miss_term']:.6f} alpha={rec['alpha']:.4f} "
                f"lr={rec['lr']:.3e} wall_time={rec['wall_time']:.3f}\n"
            )
