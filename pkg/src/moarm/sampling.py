"""Conditional generation: blocked unmasking schedules, trajectory sampling,
Monte-Carlo imputation with optional importance reweighting, and the
cardinality-bucketed batch engine.

Reproducibility contract: every random draw of trajectory (n, k) at reveal
count s comes from the counter-based stream keyed (seed, n, k, s), and the
network forward is row-stable, so outputs are bitwise independent of how
trajectories are grouped into buckets or threads.  Running rows one at a time
and running the whole batch through the bucketed engine produce identical
bytes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import streams
from .backbone import ForwardCounter, NetConfig, forward_infer, forward_tape, head_logits_infer
from .checkpoint import ModelBundle

DEFAULT_MAX_STEPS = 64


@dataclass(frozen=True)
class UnmaskingSchedule:
    """Block sizes k_t with cumulative reveal targets s_t."""

    sizes: tuple[int, ...]

    @property
    def n_steps(self) -> int:
        return len(self.sizes)

    @property
    def cumulative(self) -> tuple[int, ...]:
        out, acc = [], 0
        for k in self.sizes:
            acc += k
            out.append(acc)
        return tuple(out)

    @property
    def total(self) -> int:
        return sum(self.sizes)


def make_schedule(n_reveal: int, n_steps: int) -> UnmaskingSchedule:
    """Exponential blocked-unmasking schedule.

    Cumulative targets follow round(M**(t/S)), monotonized so every step
    reveals at least one element and the last step lands exactly on M.
    S == M degenerates to one element per step.
    """
    m, s = int(n_reveal), int(n_steps)
    if s < 1 or s > m:
        raise ValueError(f"need 1 <= steps <= {m}, got {s}")
    cum = []
    prev = 0
    for t in range(1, s + 1):
        target = int(np.floor(m ** (t / s) + 0.5))
        prev = max(prev + 1, target)
        cum.append(prev)
    cum[-1] = m
    for t in range(s - 2, -1, -1):
        cum[t] = min(cum[t], cum[t + 1] - 1)
    sizes = [cum[0]] + [cum[t] - cum[t - 1] for t in range(1, s)]
    return UnmaskingSchedule(tuple(sizes))


def default_steps(n_missing: int, requested: int | None) -> int:
    if n_missing == 0:
        return 0
    cap = DEFAULT_MAX_STEPS if requested is None else requested
    return max(1, min(n_missing, cap))


@dataclass
class ImputationResult:
    point_estimate: np.ndarray  # (L,) observed entries echoed exactly
    samples: np.ndarray  # (K, L) completions, observed entries echoed
    reveal_means: np.ndarray  # (K, L) reveal-time conditional means
    weights: np.ndarray  # (K,) simplex
    posterior_std: np.ndarray  # (L,) weighted std of samples, 0 at observed
    mode: str


def _step_stream(seed: int, n_id: int, k_id: int, reveal_count: int) -> np.random.Generator:
    return streams.stream(seed, streams.TRAJECTORY, n_id, k_id, reveal_count)


def _draw_block(g: np.random.Generator, revealed_row: np.ndarray, k: int, width: int):
    """Uniform k-subset of unrevealed indices plus per-element noise.

    The permutation and the noise are drawn over all of [L] so each element's
    draw depends only on the stream key and reveal count, not on block size.
    """
    perm = g.permutation(width)
    block = perm[revealed_row[perm] == 0][:k]
    eps = g.standard_normal(width)
    return block, eps[block]


def run_bucketed(
    values: np.ndarray,
    masks: np.ndarray,
    n_replicas: int,
    bundle: ModelBundle,
    n_steps: int | None = None,
    seed: int = 0,
    row_ids: np.ndarray | None = None,
    params: dict | None = None,
    counter: ForwardCounter | None = None,
):
    """Advance N x K imputation trajectories grouped by reveal cardinality.

    Returns (reveal_means, samples) with shape (N, K, L).  Missing positions
    hold the trajectory outputs; observed positions hold zeros here and are
    echoed by the callers that assemble completions.
    """
    x = np.asarray(values, dtype=np.float64)
    m = np.asarray(masks, dtype=np.uint8)
    n_rows, width = x.shape
    if row_ids is None:
        row_ids = np.arange(n_rows, dtype=np.int64)
    params = bundle.infer_params if params is None else params
    cfg = bundle.net

    n_traj = n_rows * n_replicas
    traj_row = np.repeat(np.arange(n_rows), n_replicas)
    traj_rep = np.tile(np.arange(n_replicas), n_rows)
    work = (x * m)[traj_row].copy()
    revealed = m[traj_row].copy()
    reveal_count = revealed.sum(axis=1).astype(np.int64)
    means = np.zeros((n_traj, width))
    samples = np.zeros((n_traj, width))

    schedules: list[tuple[int, ...]] = []
    step_idx = np.zeros(n_traj, dtype=np.int64)
    buckets: dict[int, list[int]] = {}
    for tr in range(n_traj):
        missing = width - int(reveal_count[tr])
        if missing == 0:
            schedules.append(())
            continue
        schedules.append(make_schedule(missing, default_steps(missing, n_steps)).sizes)
        buckets.setdefault(int(reveal_count[tr]), []).append(tr)

    while buckets:
        s = min(buckets)
        members = buckets.pop(s)
        t_norm = np.full(len(members), (s + 1) / width)
        mu, logs = forward_infer(params, work[members], revealed[members], t_norm, cfg, counter)
        sig = np.exp(logs)
        for j, tr in enumerate(members):
            k_t = schedules[tr][step_idx[tr]]
            g = _step_stream(seed, int(row_ids[traj_row[tr]]), int(traj_rep[tr]), s)
            block, eps = _draw_block(g, revealed[tr], k_t, width)
            means[tr, block] = mu[j, block]
            samples[tr, block] = mu[j, block] + sig[j, block] * eps
            work[tr, block] = samples[tr, block]
            revealed[tr, block] = 1
            step_idx[tr] += 1
            new_count = s + k_t
            reveal_count[tr] = new_count
            if new_count < width:
                buckets.setdefault(new_count, []).append(tr)

    shape = (n_rows, n_replicas, width)
    return means.reshape(shape), samples.reshape(shape)


def _mask_loglik(logits: np.ndarray, mask_binary: np.ndarray) -> np.ndarray:
    """Per-row log p(mask | completion) under element-wise Bernoulli logits."""
    z = logits
    mf = mask_binary.astype(np.float64)
    return np.sum((mf - 1.0) * z - np.logaddexp(0.0, -z), axis=-1)


def _simplex_weights(log_w: np.ndarray) -> np.ndarray:
    shifted = log_w - log_w.max()
    w = np.exp(shifted)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:  # unreachable after max-shift
        warnings.warn("importance weights underflowed; falling back to uniform")
        return np.full(log_w.shape, 1.0 / log_w.size)
    return w / total


def impute_batch(
    values: np.ndarray,
    masks: np.ndarray,
    n_samples: int,
    bundle: ModelBundle,
    mode: str = "mcar",
    n_steps: int | None = None,
    seed: int = 0,
    row_ids: np.ndarray | None = None,
    counter: ForwardCounter | None = None,
) -> list[ImputationResult]:
    """Impute a batch through the bucketed engine.

    Point estimates average the reveal-time conditional means over replicas
    (conditioning uses the sampled values; the recorded mean is the
    lower-variance per-element contribution).  In ``mnar`` mode replicas are
    weighted by the missingness head's likelihood of the actually observed
    mask, self-normalized in log space.
    """
    if mode not in ("mcar", "mnar"):
        raise ValueError(f"unknown imputation mode {mode!r}")
    if n_samples < 1:
        raise ValueError("need at least one replica")
    x = np.asarray(values, dtype=np.float64)
    m = np.asarray(masks, dtype=np.uint8)
    means, samples = run_bucketed(x, m, n_samples, bundle, n_steps, seed, row_ids, counter=counter)
    obs = m.astype(bool)
    results = []
    for n in range(x.shape[0]):
        row_obs = obs[n]
        full_samples = np.where(row_obs, x[n], samples[n])
        full_means = np.where(row_obs, x[n], means[n])
        if mode == "mnar":
            logits = head_logits_infer(bundle.infer_params, full_samples, bundle.net)
            weights = _simplex_weights(_mask_loglik(logits, m[n]))
        else:
            weights = _simplex_weights(np.zeros(n_samples))
        point = weights @ full_means
        point[row_obs] = x[n, row_obs]
        spread = np.sqrt(np.maximum(weights @ (full_samples - point) ** 2, 0.0))
        spread[row_obs] = 0.0
        results.append(
            ImputationResult(point, full_samples, full_means, weights, spread, mode)
        )
    return results


def impute(
    values_row: np.ndarray,
    mask_row: np.ndarray,
    n_samples: int,
    bundle: ModelBundle,
    mode: str = "mcar",
    n_steps: int | None = None,
    seed: int = 0,
    row_id: int = 0,
) -> ImputationResult:
    return impute_batch(
        values_row[None, :],
        mask_row[None, :],
        n_samples,
        bundle,
        mode,
        n_steps,
        seed,
        row_ids=np.array([row_id], dtype=np.int64),
    )[0]


def point_estimate_matrix(results: list[ImputationResult]) -> np.ndarray:
    return np.stack([r.point_estimate for r in results])


# ---------------------------------------------------------------------------
# differentiable completions for training


def sample_completions_tape(
    pt: dict,
    values: np.ndarray,
    masks: np.ndarray,
    n_replicas: int,
    cfg: NetConfig,
    seed: int,
    step_salt: int,
    n_steps: int | None = None,
):
    """Sample K completions per row on the autodiff tape.

    Draws are reparameterized (mu + sigma * eps with eps constant), so the
    missingness objective can push gradients through every reveal back into
    the generative parameters.  Rows advance their own exponential schedules
    in lockstep; rows that finish early contribute weight-zero inserts.
    """
    x = np.asarray(values, dtype=np.float64)
    m = np.asarray(masks, dtype=np.uint8)
    n_rows, width = x.shape
    n_traj = n_rows * n_replicas
    traj_row = np.repeat(np.arange(n_rows), n_replicas)

    revealed = m[traj_row].astype(np.uint8).copy()
    reveal_count = revealed.sum(axis=1).astype(np.int64)
    schedules = []
    for tr in range(n_traj):
        missing = width - int(reveal_count[tr])
        sizes = () if missing == 0 else make_schedule(missing, default_steps(missing, n_steps)).sizes
        schedules.append(sizes)
    max_steps = max((len(s) for s in schedules), default=0)

    work = ad.Tensor((x * m)[traj_row])
    for t in range(max_steps):
        k_sizes = np.array([s[t] if t < len(s) else 0 for s in schedules], dtype=np.int64)
        k_max = int(k_sizes.max())
        if k_max == 0:
            break
        # training is one sequential loop, so a single stream per sync step
        # suffices (the inference engine keeps per-trajectory streams)
        g = streams.stream(seed, streams.COMPLETION, step_salt, t)
        perms = g.permuted(np.tile(np.arange(width), (n_traj, 1)), axis=1)
        eps_full = g.standard_normal((n_traj, width))
        idx = np.zeros((n_traj, k_max), dtype=np.int64)
        wt = np.zeros((n_traj, k_max))
        eps = np.zeros((n_traj, k_max))
        for tr in range(n_traj):
            k_t = int(k_sizes[tr])
            if k_t == 0:
                continue
            row_perm = perms[tr]
            block = row_perm[revealed[tr, row_perm] == 0][:k_t]
            idx[tr, :k_t] = block
            eps[tr, :k_t] = eps_full[tr, block]
            wt[tr, :k_t] = 1.0
        t_norm = (reveal_count + 1) / width
        mu, logs = forward_tape(pt, work, revealed, t_norm, cfg)
        draws = ad.gauss_sample(ad.gather_rows(mu, idx), ad.gather_rows(logs, idx), eps)
        work = ad.scatter_add_rows(work, ad.mul(draws, wt), idx)
        for tr in range(n_traj):
            k_t = int(k_sizes[tr])
            if k_t:
                revealed[tr, idx[tr, :k_t]] = 1
                reveal_count[tr] += k_t
    return work, traj_row
