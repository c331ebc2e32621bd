"""Quantized color assignment over a fixed palette via Gumbel-Softmax.

Each area carries a logit vector over K palette colors.  During optimization
colors are soft mixtures a' V with a = softmax((logits + gumbel)/tau) and the
temperature annealed exponentially; exports take the hard argmax.  A balance
regularizer keeps the mean assignment near uniform so all palette entries
stay in play.
"""

from __future__ import annotations

import numpy as np


class PaletteError(ValueError):
    """Invalid palette operation."""


DEFAULT_GUMBEL_SCALE = 0.15  # noise scale that avoids excessive assignment churn


def sample_gumbel(shape, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Gumbel(0, scale) noise via -scale * log(-log U)."""
    if scale == 0.0:
        return np.zeros(shape)
    u = rng.uniform(1e-12, 1.0, size=shape)
    return -scale * np.log(-np.log(u))


def soft_assign(
    logits: np.ndarray,
    palette: np.ndarray,
    tau: float,
    beta: float = DEFAULT_GUMBEL_SCALE,
    rng: np.random.Generator | None = None,
):
    """Soft palette assignment: returns (assignments a, soft colors a' V).

    logits may be (K,) or (N, K).  With beta=0 the result is deterministic
    softmax(logits / tau); otherwise i.i.d. Gumbel(0, beta) noise perturbs the
    logits before the temperature-scaled softmax.
    """
    if tau <= 0:
        raise PaletteError(f"temperature must be positive, got {tau}")
    ell = np.atleast_2d(np.asarray(logits, dtype=float))
    v = np.asarray(palette, dtype=float)
    if ell.shape[1] != v.shape[0]:
        raise PaletteError(
            f"logit length {ell.shape[1]} != palette size {v.shape[0]}"
        )
    if beta > 0.0:
        if rng is None:
            raise PaletteError("gumbel sampling needs an rng when beta > 0")
        ell = ell + sample_gumbel(ell.shape, beta, rng)
    z = ell / tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    a = e / e.sum(axis=1, keepdims=True)
    colors = a @ v
    if np.asarray(logits).ndim == 1:
        return a[0], colors[0]
    return a, colors


def soft_assign_backward(a: np.ndarray, grad_a: np.ndarray, tau: float) -> np.ndarray:
    """Softmax Jacobian chain: gradient w.r.t. the (pre-noise) logits."""
    a = np.atleast_2d(a)
    g = np.atleast_2d(grad_a)
    inner = (g * a).sum(axis=1, keepdims=True)
    out = a * (g - inner) / tau
    return out[0] if np.asarray(grad_a).ndim == 1 else out


def color_grad_to_logits(
    a: np.ndarray, palette: np.ndarray, grad_color: np.ndarray, tau: float
) -> np.ndarray:
    """Route a soft-color gradient (dL/dv) back to the logits."""
    grad_a = np.atleast_2d(grad_color) @ np.asarray(palette, dtype=float).T
    out = soft_assign_backward(np.atleast_2d(a), grad_a, tau)
    return out[0] if np.asarray(grad_color).ndim == 1 else out


def balance_reg(assignments: np.ndarray, weight: float = 1.0):
    """Squared deviation of the mean assignment from uniform, scaled by weight.

    Returns (value, gradient w.r.t. each assignment row).
    """
    a = np.atleast_2d(np.asarray(assignments, dtype=float))
    n, k = a.shape
    diff = a.mean(axis=0) - 1.0 / k
    value = weight * float(np.dot(diff, diff))
    grad = np.tile(weight * 2.0 * diff / n, (n, 1))
    return value, grad


def anneal_temperature(step: int, total: int, tau_start: float, tau_end: float) -> float:
    """Exponential schedule from tau_start to tau_end over `total` steps."""
    if not 0 <= step <= total or total < 1:
        raise PaletteError(f"step {step} outside [0, {total}]")
    if not tau_start >= tau_end > 0:
        raise PaletteError("need tau_start >= tau_end > 0")
    return float(tau_start * (tau_end / tau_start) ** (step / total))


def hard_assign(logits: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Palette color of the argmax logit; ties break to the lowest index."""
    ell = np.asarray(logits, dtype=float)
    v = np.asarray(palette, dtype=float)
    return v[np.argmax(ell, axis=-1)]


def parse_hex_palette(spec: str) -> np.ndarray:
    """Parse "#rrggbb,#rrggbb,..." into a (K, 3) array in [0, 1]."""
    rows = []
    for token in spec.split(","):
        token = token.strip().lstrip("#")
        if len(token) != 6:
            raise PaletteError(f"bad hex color {token!r}")
        rows.append([int(token[i : i + 2], 16) / 255.0 for i in (0, 2, 4)])
    if len(rows) < 2:
        raise PaletteError("palette needs at least 2 colors")
    return np.array(rows)


def palette_to_hex(palette: np.ndarray) -> str:
    vals = np.clip(np.round(np.asarray(palette) * 255), 0, 255).astype(int)
    return ",".join("#%02x%02x%02x" % tuple(row) for row in vals)


def kmeans_palette(
    image: np.ndarray, k: int, rng: np.random.Generator, iterations: int = 20
) -> np.ndarray:
    """Extract a K-color palette from an image by seeded Lloyd k-means."""
    px = np.asarray(image, dtype=float).reshape(-1, np.asarray(image).shape[-1])
    if px.shape[1] == 1:
        px = np.repeat(px, 3, axis=1)
    if k < 2 or k > len(px):
        raise PaletteError(f"palette size {k} out of range")
    centers = px[rng.choice(len(px), size=k, replace=False)].copy()
    for _ in range(iterations):
        d2 = ((px[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for j in range(k):
            mask = labels == j
            if np.any(mask):
                centers[j] = px[mask].mean(axis=0)
            else:
                centers[j] = px[d2.min(axis=1).argmax()]
    return centers
