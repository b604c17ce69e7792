"""Time-conditioned MLP backbone with Gaussian output heads, plus the
missingness head that scores which elements of a completed row are observed.

Two forward paths share the same math:

* ``forward_tape`` builds an autodiff graph for training (batched BLAS).
* ``forward_infer`` is gradient-free and row-stable: each row is evaluated
  with a fixed accumulation order (see :func:`moarm.kernels.affine_rows`), so
  results do not depend on how rows are batched.  The bucketed sampler's
  reproducibility guarantees rest on this property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels, streams

LOGSIG_MIN = -7.0
LOGSIG_MAX = 2.0
LOGIT_CLIP = 15.0


@dataclass(frozen=True)
class NetConfig:
    width: int  # encoded dimension L
    hidden: tuple[int, ...] = (512, 1024, 512)
    temb_dim: int = 512
    head_hidden: tuple[int, ...] = (256, 256)

    def __post_init__(self):
        if self.temb_dim % 2:
            raise ValueError("temb_dim must be even")

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "hidden": list(self.hidden),
            "temb_dim": self.temb_dim,
            "head_hidden": list(self.head_hidden),
        }

    @staticmethod
    def from_dict(d: dict) -> "NetConfig":
        return NetConfig(d["width"], tuple(d["hidden"]), d["temb_dim"], tuple(d["head_hidden"]))


def _uniform_fan_in(g: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(n_in)
    return g.uniform(-bound, bound, size=(n_in, n_out))


def init_params(cfg: NetConfig, seed: int) -> dict[str, np.ndarray]:
    """Fan-in-scaled uniform hidden layers; zero output heads.

    Zero heads make the untrained model predict N(0, 1) for every element,
    i.e. the standardized prior.
    """
    g = streams.stream(seed, streams.INIT)
    L = cfg.width
    p: dict[str, np.ndarray] = {}
    sizes = [2 * L, *cfg.hidden]
    for i in range(len(cfg.hidden)):
        p[f"bb.w{i}"] = _uniform_fan_in(g, sizes[i], sizes[i + 1])
        p[f"bb.b{i}"] = np.zeros(sizes[i + 1])
    p["bb.tw"] = _uniform_fan_in(g, cfg.temb_dim, cfg.hidden[0])
    p["bb.tb"] = np.zeros(cfg.hidden[0])
    p["bb.wmu"] = np.zeros((cfg.hidden[-1], L))
    p["bb.bmu"] = np.zeros(L)
    p["bb.wls"] = np.zeros((cfg.hidden[-1], L))
    p["bb.bls"] = np.zeros(L)

    hsizes = [L, *cfg.head_hidden]
    for i in range(len(cfg.head_hidden)):
        p[f"mh.w{i}"] = _uniform_fan_in(g, hsizes[i], hsizes[i + 1])
        p[f"mh.b{i}"] = np.zeros(hsizes[i + 1])
    p["mh.wo"] = np.zeros((hsizes[-1], L))
    p["mh.bo"] = np.zeros(L)
    return p


def param_count(params: dict[str, np.ndarray]) -> int:
    return sum(int(v.size) for v in params.values())


def time_features(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal features of the normalized step t in [0, 1]."""
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, math.log(10_000.0), half))
    ang = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def wrap_params(params: dict[str, np.ndarray]) -> dict[str, ad.Tensor]:
    return {k: ad.Tensor(v) for k, v in params.items()}


def grads_of(wrapped: dict[str, ad.Tensor]) -> dict[str, np.ndarray]:
    return {
        k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in wrapped.items()
    }


# ---------------------------------------------------------------------------
# training path (autodiff graph)


def forward_tape(pt: dict, x, mask: np.ndarray, t: np.ndarray, cfg: NetConfig):
    """Gaussian parameters (mu, log-sigma) for every element.

    ``x`` may be a Tensor (differentiable completions) or an ndarray.  The
    value vector is gated by the context mask before entering the network, so
    entries at masked-out positions cannot influence the output.
    """
    maskf = np.asarray(mask, dtype=np.float64)
    gated = ad.mul(x, maskf)
    inp = ad.hstack([gated, maskf])
    temb = ad.silu(ad.add(ad.matmul(time_features(t, cfg.temb_dim), pt["bb.tw"]), pt["bb.tb"]))
    h = ad.add(ad.add(ad.matmul(inp, pt["bb.w0"]), pt["bb.b0"]), temb)
    h = ad.silu(h)
    for i in range(1, len(cfg.hidden)):
        h = ad.silu(ad.add(ad.matmul(h, pt[f"bb.w{i}"]), pt[f"bb.b{i}"]))
    mu = ad.add(ad.matmul(h, pt["bb.wmu"]), pt["bb.bmu"])
    logs = ad.clamp(ad.add(ad.matmul(h, pt["bb.wls"]), pt["bb.bls"]), LOGSIG_MIN, LOGSIG_MAX)
    return mu, logs


def head_tape(pt: dict, xhat, cfg: NetConfig):
    """Observation logits for a completed row; clamped to +/- LOGIT_CLIP."""
    h = xhat
    for i in range(len(cfg.head_hidden)):
        h = ad.silu(ad.add(ad.matmul(h, pt[f"mh.w{i}"]), pt[f"mh.b{i}"]))
    return ad.clamp(ad.add(ad.matmul(h, pt["mh.wo"]), pt["mh.bo"]), -LOGIT_CLIP, LOGIT_CLIP)


# ---------------------------------------------------------------------------
# inference path (row-stable, no gradients)


class ForwardCounter:
    """Counts batched forward calls; the sampler exposes it for speedup checks."""

    def __init__(self):
        self.calls = 0
        self.rows = 0

    def tick(self, n_rows: int) -> None:
        self.calls += 1
        self.rows += int(n_rows)


def forward_infer(
    params: dict[str, np.ndarray],
    x: np.ndarray,
    mask: np.ndarray,
    t: np.ndarray,
    cfg: NetConfig,
    counter: ForwardCounter | None = None,
):
    maskf = np.asarray(mask, dtype=np.float64)
    inp = np.ascontiguousarray(np.concatenate([x * maskf, maskf], axis=1))
    temb = kernels.silu_fwd(
        kernels.affine_rows(
            np.ascontiguousarray(time_features(t, cfg.temb_dim)), params["bb.tw"], params["bb.tb"]
        )
    )
    h = kernels.affine_rows(inp, params["bb.w0"], params["bb.b0"])
    h = kernels.silu_fwd(h + temb)
    for i in range(1, len(cfg.hidden)):
        h = kernels.silu_fwd(kernels.affine_rows(h, params[f"bb.w{i}"], params[f"bb.b{i}"]))
    mu = kernels.affine_rows(h, params["bb.wmu"], params["bb.bmu"])
    logs = np.clip(kernels.affine_rows(h, params["bb.wls"], params["bb.bls"]), LOGSIG_MIN, LOGSIG_MAX)
    if counter is not None:
        counter.tick(x.shape[0])
    return mu, logs


def head_infer(params: dict[str, np.ndarray], xhat: np.ndarray, cfg: NetConfig) -> np.ndarray:
    """Observation probabilities pi in (sigmoid(-15), sigmoid(15))."""
    h = np.ascontiguousarray(xhat)
    for i in range(len(cfg.head_hidden)):
        h = kernels.silu_fwd(kernels.affine_rows(h, params[f"mh.w{i}"], params[f"mh.b{i}"]))
    logits = np.clip(kernels.affine_rows(h, params["mh.wo"], params["mh.bo"]), -LOGIT_CLIP, LOGIT_CLIP)
    return kernels.sigmoid(logits)


def head_logits_infer(params: dict[str, np.ndarray], xhat: np.ndarray, cfg: NetConfig) -> np.ndarray:
    h = np.ascontiguousarray(xhat)
    for i in range(len(cfg.head_hidden)):
        h = kernels.silu_fwd(kernels.affine_rows(h, params[f"mh.w{i}"], params[f"mh.b{i}"]))
    return np.clip(kernels.affine_rows(h, params["mh.wo"], params["mh.bo"]), -LOGIT_CLIP, LOGIT_CLIP)
