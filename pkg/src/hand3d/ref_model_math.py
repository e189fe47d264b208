"""Deterministic reference math for the downstream policy model.

Two pieces live here: a single-head cross-attention fusion of semantic and
spatial feature matrices, and the interpolation/target/loss triplet of
conditional flow matching over action chunks.  Everything is pure numpy and
deterministic: dropout takes an explicit caller-supplied mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, TauOutOfRange

LAYERNORM_EPS = 1e-5
ALPHA_DEFAULT = 0.5


def _as_matrix(x, name: str) -> np.ndarray:
    m = np.asarray(x, dtype=float)
    if m.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    return m


@dataclass(frozen=True, eq=False)
class FusionParams:
    """Projection weights and scalars for the cross-attention fusion.

    Bias-free by design: w_q maps semantic features to the attention width,
    w_k / w_v map spatial features to the same width, and w_o maps the
    attended context back to the semantic width.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    alpha: float = ALPHA_DEFAULT
    dropout_rate: float = 0.0
    ln_eps: float = LAYERNORM_EPS

    def __post_init__(self) -> None:
        for name in ("w_q", "w_k", "w_v", "w_o"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        d_att = self.w_q.shape[1]
        d_sem = self.w_q.shape[0]
        if self.w_k.shape[1] != d_att or self.w_v.shape[1] != d_att:
            raise ShapeMismatch("w_k and w_v must share the attention width of w_q")
        if self.w_k.shape[0] != self.w_v.shape[0]:
            raise ShapeMismatch("w_k and w_v must share the spatial feature width")
        if self.w_o.shape != (d_att, d_sem):
            raise ShapeMismatch(
                f"w_o must map attention width back to semantic width "
                f"({d_att}, {d_sem}), got {self.w_o.shape}")
        for name in ("ln_gain", "ln_bias"):
            vec = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if vec.shape != (d_sem,):
                raise ShapeMismatch(f"{name} must have shape ({d_sem},)")
            object.__setattr__(self, name, vec)
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


def random_params(rng: np.random.Generator, d_sem: int, d_spa: int, d_att: int,
                  alpha: float = ALPHA_DEFAULT,
                  dropout_rate: float = 0.0) -> FusionParams:
    """Gaussian projections with identity layer-norm, for tests and checks."""
    scale = 1.0 / math.sqrt(d_att)
    return FusionParams(
        w_q=rng.normal(scale=scale, size=(d_sem, d_att)),
        w_k=rng.normal(scale=scale, size=(d_spa, d_att)),
        w_v=rng.normal(scale=scale, size=(d_spa, d_att)),
        w_o=rng.normal(scale=scale, size=(d_att, d_sem)),
        ln_gain=np.ones(d_sem),
        ln_bias=np.zeros(d_sem),
        alpha=alpha,
        dropout_rate=dropout_rate,
    )


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
               eps: float = LAYERNORM_EPS) -> np.ndarray:
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gain + bias


def fuse(v_sem, v_spa, params: FusionParams, dropout_mask=None,
         return_attention: bool = False):
    """Fuse spatial features into semantic ones via cross-attention.

    The semantic rows query the spatial rows; the attended context is
    projected back, optionally dropout-masked (inverted scaling), scaled by
    alpha, added to the semantic input, and layer-normalized per row.

    With alpha = 0 the output is exactly the layer norm of v_sem.

    Args:
        dropout_mask: 0/1 array shaped like v_sem; required when
            params.dropout_rate > 0 so the operation stays deterministic.
        return_attention: also return the (n_sem, n_spa) attention weights.
    """
    sem = _as_matrix(v_sem, "v_sem")
    spa = _as_matrix(v_spa, "v_spa")
    if sem.shape[1] != params.w_q.shape[0]:
        raise ShapeMismatch(
            f"v_sem width {sem.shape[1]} does not match w_q rows {params.w_q.shape[0]}")
    if spa.shape[1] != params.w_k.shape[0]:
        raise ShapeMismatch(
            f"v_spa width {spa.shape[1]} does not match w_k rows {params.w_k.shape[0]}")
    if spa.shape[0] == 0:
        raise ShapeMismatch("v_spa must contain at least one row")

    d_att = params.w_q.shape[1]
    q = sem @ params.w_q
    k = spa @ params.w_k
    v = spa @ params.w_v
    attn = softmax_rows(q @ k.T / math.sqrt(d_att))
    f_spa = (attn @ v) @ params.w_o

    if params.dropout_rate > 0.0 and dropout_mask is None:
        raise ValueError("dropout_rate > 0 requires an explicit dropout_mask")
    if dropout_mask is not None:
        mask = _as_matrix(dropout_mask, "dropout_mask")
        if mask.shape != f_spa.shape:
            raise ShapeMismatch(
                f"dropout_mask shape {mask.shape} does not match features {f_spa.shape}")
        f_spa = f_spa * mask / (1.0 - params.dropout_rate)

    fused = layer_norm(sem + params.alpha * f_spa, params.ln_gain,
                       params.ln_bias, params.ln_eps)
    if return_attention:
        return fused, attn
    return fused


# --- conditional flow matching ---------------------------------------------

def flow_interpolate(action, noise, tau: float) -> np.ndarray:
    """Linear path from noise (tau = 0) to the action chunk (tau = 1)."""
    a = _as_matrix(action, "action")
    eps = _as_matrix(noise, "noise")
    if a.shape != eps.shape:
        raise ShapeMismatch(f"action {a.shape} and noise {eps.shape} differ")
    if not 0.0 <= tau <= 1.0:
        raise TauOutOfRange(f"tau must lie in [0, 1], got {tau}")
    return (1.0 - tau) * eps + tau * a


def flow_target(action, noise) -> np.ndarray:
    """The constant velocity of the linear path: action - noise."""
    a = _as_matrix(action, "action")
    eps = _as_matrix(noise, "noise")
    if a.shape != eps.shape:
        raise ShapeMismatch(f"action {a.shape} and noise {eps.shape} differ")
    return a - eps


def flow_loss(prediction, action, noise) -> float:
    """Mean squared error between a velocity prediction and the flow target."""
    pred = _as_matrix(prediction, "prediction")
    target = flow_target(action, noise)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff * diff))


def self_check(seed: int = 0, trials: int = 20) -> list[tuple[str, bool, str]]:
    """Run the fusion/flow property suite; returns (name, passed, detail) rows."""
    rng = np.random.default_rng(seed)
    results: list[tuple[str, bool, str]] = []

    worst_collapse = 0.0
    worst_rowsum = 0.0
    worst_fd = 0.0
    worst_loss = 0.0
    for _ in range(trials):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        d_sem, d_spa, d_att = (int(rng.integers(2, 9)) for _ in range(3))
        sem = rng.normal(size=(n, d_sem))
        spa = rng.normal(size=(m, d_spa))

        params0 = random_params(rng, d_sem, d_spa, d_att, alpha=0.0)
        collapse = np.abs(
            fuse(sem, spa, params0)
            - layer_norm(sem, params0.ln_gain, params0.ln_bias)).max()
        worst_collapse = max(worst_collapse, float(collapse))

        params = random_params(rng, d_sem, d_spa, d_att, alpha=0.5)
        _, attn = fuse(sem, spa, params, return_attention=True)
        worst_rowsum = max(worst_rowsum, float(np.abs(attn.sum(axis=1) - 1.0).max()))

        a = rng.normal(size=(4, 3))
        eps = rng.normal(size=(4, 3))
        h = 1e-6
        for tau in (0.1, 0.3, 0.5, 0.7, 0.9):
            fd = (flow_interpolate(a, eps, tau + h)
                  - flow_interpolate(a, eps, tau - h)) / (2.0 * h)
            worst_fd = max(worst_fd, float(np.abs(fd - flow_target(a, eps)).max()))
        worst_loss = max(worst_loss, abs(flow_loss(flow_target(a, eps), a, eps)))

    results.append(("alpha_zero_collapse", worst_collapse <= 1e-12,
                    f"max |fuse - layernorm(v_sem)| = {worst_collapse:.3e}"))
    results.append(("softmax_rows_sum_to_one", worst_rowsum <= 1e-12,
                    f"max row-sum error = {worst_rowsum:.3e}"))
    results.append(("flow_velocity_matches_derivative", worst_fd <= 1e-8,
                    f"max finite-difference error = {worst_fd:.3e}"))
    results.append(("loss_zero_at_target", worst_loss == 0.0,
                    f"max loss at exact target = {worst_loss:.3e}"))
    return results
