"""Attention blocks and the noise-prediction objective, NumPy only.

The centerpiece is a small hand-differentiated denoiser used to exercise
the conditioning pathways end to end: reference tokens enter through
concatenated self-attention, text and depth-image tokens through a pair of
cross-attention streams sharing one query projection, and the whole thing
trains against a mean-squared noise-prediction loss. Gradients are written
out manually and checked against finite differences in the tests.
"""

from __future__ import annotations

import numpy as np


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Scaled dot-product attention: softmax(q k^T / sqrt(d)) v."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.shape[1] != k.shape[1]:
        raise ValueError("q and k feature widths differ")
    if k.shape[0] != v.shape[0]:
        raise ValueError("k and v row counts differ")
    scores = q @ k.T / np.sqrt(q.shape[1])
    return softmax(scores, axis=1) @ v


def self_attention(z: np.ndarray) -> np.ndarray:
    return attention(z, z, z)


def reference_self_attention(
    z: np.ndarray,
    reference: np.ndarray,
    wq: np.ndarray | None = None,
    wk: np.ndarray | None = None,
    wv: np.ndarray | None = None,
) -> np.ndarray:
    """Self-attention over latent rows concatenated with reference rows.

    Both halves share the projections; only the rows belonging to ``z``
    are returned. Feeding the latent itself as the reference reproduces
    plain self-attention exactly (duplicated key/value pairs renormalize
    away), which the tests pin down.
    """
    z = np.asarray(z, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if z.shape[1] != reference.shape[1]:
        raise ValueError("latent and reference widths differ")
    joint = np.vstack([z, reference])
    q = joint if wq is None else joint @ wq
    k = joint if wk is None else joint @ wk
    v = joint if wv is None else joint @ wv
    return attention(q, k, v)[: z.shape[0]]


def dual_cross_attention(
    z: np.ndarray,
    text_kv: tuple[np.ndarray, np.ndarray],
    image_kv: tuple[np.ndarray, np.ndarray],
) -> np.ndarray:
    """Sum of two cross-attention reads driven by one set of queries.

    ``text_kv`` and ``image_kv`` are (keys, values) pairs. The two streams
    are attended independently and added, so each conditioning source
    contributes its own convex combination of values.
    """
    return attention(z, *text_kv) + attention(z, *image_kv)


# ---------------------------------------------------------------------------
# forward diffusion
# ---------------------------------------------------------------------------


def make_alpha_bar(n_steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> np.ndarray:
    """Cumulative signal-retention schedule for a linear beta ramp."""
    betas = np.linspace(beta_start, beta_end, n_steps)
    return np.cumprod(1.0 - betas)


def ddpm_forward(z0: np.ndarray, t: int, alpha_bar: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Noised latent: sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != z0.shape:
        raise ValueError("noise must match the latent shape")
    ab = float(alpha_bar[t])
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def noise_prediction_loss(eps_hat: np.ndarray, eps: np.ndarray) -> float:
    """Mean squared error between predicted and true noise."""
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps_hat.shape != eps.shape:
        raise ValueError("shape mismatch between prediction and target")
    diff = eps_hat - eps
    return float(np.mean(diff * diff))


# ---------------------------------------------------------------------------
# hand-differentiated toy denoiser
# ---------------------------------------------------------------------------


def _attention_forward(q, k, v):
    d = q.shape[1]
    s = q @ k.T / np.sqrt(d)
    p = softmax(s, axis=1)
    return p @ v, (q, k, v, p)


def _attention_backward(d_out, cache):
    q, k, v, p = cache
    d = q.shape[1]
    dv = p.T @ d_out
    dp = d_out @ v.T
    # softmax Jacobian applied row-wise
    ds = p * (dp - np.sum(dp * p, axis=1, keepdims=True))
    dq = ds @ k / np.sqrt(d)
    dk = ds.T @ q / np.sqrt(d)
    return dq, dk, dv


class ToyDenoiser:
    """Tiny noise-prediction network with explicit NumPy gradients.

    Token layout per sample: latent (n_tokens, dim), reference tokens
    (n_tokens, dim), text tokens (n_text, dim), depth tokens
    (n_tokens, dim), timestep index into a learned embedding table.

    forward:
        u0 = z_t + depth + time_emb[t]
        u1 = u0 + ref_self_attention(u0, reference)       (Wq_s, Wk_s, Wv_s)
        u2 = u1 + cross(text) + cross(depth image crops)  (shared Wq_c)
        eps_hat = tanh(u2 @ W1 + b1) @ W2 + b2
    """

    def __init__(self, dim: int = 8, hidden: int = 16, n_steps: int = 10, seed: int = 0):
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(dim)

        def mat(rows, cols, s=scale):
            return (s * rng.standard_normal((rows, cols))).astype(np.float64)

        self.dim = dim
        self.n_steps = n_steps
        self.params: dict[str, np.ndarray] = {
            "time_emb": 0.1 * rng.standard_normal((n_steps, dim)),
            "wq_s": mat(dim, dim),
            "wk_s": mat(dim, dim),
            "wv_s": mat(dim, dim),
            "wq_c": mat(dim, dim),
            "wk_t": mat(dim, dim),
            "wv_t": mat(dim, dim),
            "wk_i": mat(dim, dim),
            "wv_i": mat(dim, dim),
            "w1": mat(dim, hidden),
            "b1": np.zeros(hidden),
            "w2": mat(hidden, dim, s=1.0 / np.sqrt(hidden)),
            "b2": np.zeros(dim),
        }

    def predict(self, z_t, t, reference, text, depth):
        eps_hat, _ = self._forward(z_t, t, reference, text, depth)
        return eps_hat

    def _forward(self, z_t, t, reference, text, depth):
        p = self.params
        u0 = z_t + depth + p["time_emb"][t]

        joint = np.vstack([u0, reference])
        q_s = joint @ p["wq_s"]
        k_s = joint @ p["wk_s"]
        v_s = joint @ p["wv_s"]
        attn_s, cache_s = _attention_forward(q_s, k_s, v_s)
        u1 = u0 + attn_s[: z_t.shape[0]]

        q_c = u1 @ p["wq_c"]
        k_t = text @ p["wk_t"]
        v_t = text @ p["wv_t"]
        k_i = depth @ p["wk_i"]
        v_i = depth @ p["wv_i"]
        attn_t, cache_t = _attention_forward(q_c, k_t, v_t)
        attn_i, cache_i = _attention_forward(q_c, k_i, v_i)
        u2 = u1 + attn_t + attn_i

        a = u2 @ p["w1"] + p["b1"]
        h = np.tanh(a)
        eps_hat = h @ p["w2"] + p["b2"]

        cache = (z_t, t, reference, text, depth, u0, joint, cache_s, u1,
                 cache_t, cache_i, u2, h)
        return eps_hat, cache

    def loss_and_gradients(self, batch):
        """Mean loss and summed-then-averaged gradients over a batch.

        ``batch`` is a list of (z_t, t, reference, text, depth, eps) tuples.
        """
        p = self.params
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}
        total = 0.0
        for z_t, t, reference, text, depth, eps in batch:
            eps_hat, cache = self._forward(z_t, t, reference, text, depth)
            diff = eps_hat - eps
            total += float(np.mean(diff * diff))
            d_eps_hat = 2.0 * diff / diff.size

            (z_t, t, reference, text, depth, u0, joint, cache_s, u1,
             cache_t, cache_i, u2, h) = cache
            n = z_t.shape[0]

            # head
            grads["b2"] += d_eps_hat.sum(axis=0)
            grads["w2"] += h.T @ d_eps_hat
            dh = d_eps_hat @ p["w2"].T
            da = dh * (1.0 - h * h)
            grads["b1"] += da.sum(axis=0)
            grads["w1"] += u2.T @ da
            du2 = da @ p["w1"].T

            # dual cross-attention (residual)
            du1 = du2.copy()
            dq_c = np.zeros_like(du2)
            for cache_x, wk_name, wv_name, tokens in (
                (cache_t, "wk_t", "wv_t", text),
                (cache_i, "wk_i", "wv_i", depth),
            ):
                dq, dk, dv = _attention_backward(du2, cache_x)
                dq_c += dq
                grads[wk_name] += tokens.T @ dk
                grads[wv_name] += tokens.T @ dv
            grads["wq_c"] += u1.T @ dq_c
            du1 += dq_c @ p["wq_c"].T

            # reference self-attention (residual); reference rows get no
            # gradient of their own — they are inputs
            d_attn_full = np.zeros((joint.shape[0], self.dim))
            d_attn_full[:n] = du1
            dq_s, dk_s, dv_s = _attention_backward(d_attn_full, cache_s)
            grads["wq_s"] += joint.T @ dq_s
            grads["wk_s"] += joint.T @ dk_s
            grads["wv_s"] += joint.T @ dv_s
            d_joint = dq_s @ p["wq_s"].T + dk_s @ p["wk_s"].T + dv_s @ p["wv_s"].T
            du0 = du1 + d_joint[:n]

            grads["time_emb"][t] += du0.sum(axis=0)

        n_batch = len(batch)
        for name in grads:
            grads[name] /= n_batch
        return total / n_batch, grads


def make_training_batch(
    denoiser: ToyDenoiser,
    n_samples: int = 16,
    n_tokens: int = 4,
    n_text: int = 3,
    seed: int = 0,
):
    """Fixed synthetic batch of noised latents with their conditioning."""
    rng = np.random.default_rng(seed)
    alpha_bar = make_alpha_bar(denoiser.n_steps)
    batch = []
    for _ in range(n_samples):
        z0 = rng.standard_normal((n_tokens, denoiser.dim))
        eps = rng.standard_normal((n_tokens, denoiser.dim))
        t = int(rng.integers(0, denoiser.n_steps))
        z_t = ddpm_forward(z0, t, alpha_bar, eps)
        reference = rng.standard_normal((n_tokens, denoiser.dim))
        text = rng.standard_normal((n_text, denoiser.dim))
        depth = rng.standard_normal((n_tokens, denoiser.dim))
        batch.append((z_t, t, reference, text, depth, eps))
    return batch


def train_toy(denoiser: ToyDenoiser, batch, steps: int = 200, lr: float = 0.5):
    """Plain gradient descent; returns the loss trace (length steps + 1).

    Raises DivergenceError as soon as the loss stops being finite.
    """
    loss, grads = denoiser.loss_and_gradients(batch)
    trace = [loss]
    for step in range(steps):
        for name, g in grads.items():
            denoiser.params[name] -= lr * g
        loss, grads = denoiser.loss_and_gradients(batch)
        if not np.isfinite(loss):
            raise DivergenceError(step)
        trace.append(loss)
    return trace
