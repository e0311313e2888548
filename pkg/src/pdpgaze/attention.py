"""Token preparation, patch self-attention and temporal attention."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Module, uniform_fan_in
from .tensor import ShapeError, Tensor


class Tokenizer(Module):
    """Flatten a (N, C, H, W) encoding to (N, H*W+1, C) tokens with a learned outside token last."""

    def __init__(self, rng, channels: int, grid: tuple[int, int]):
        super().__init__()
        self.grid = tuple(grid)
        n_tokens = grid[0] * grid[1] + 1
        self.x_out = self.add_param("x_out", rng.normal(0.0, 0.02, size=(channels,)))
        self.pos_emb = self.add_param("pos_emb", rng.normal(0.0, 0.02, size=(n_tokens, channels)))

    def __call__(self, f_enc: Tensor) -> Tensor:
        return tokenize(f_enc, self.x_out, self.pos_emb)


def tokenize(f_enc: Tensor, x_out: Tensor, pos_emb: Tensor) -> Tensor:
    n, c, h, w = f_enc.shape
    if pos_emb.shape != (h * w + 1, c) or x_out.shape != (c,):
        raise ShapeError(f"token parameters {x_out.shape}, {pos_emb.shape} do not fit {f_enc.shape}")
    inside = f_enc.reshape(n, c, h * w).transpose(0, 2, 1)
    outside = T.broadcast_to(x_out.reshape(1, 1, c), (n, 1, c))
    tokens = T.concat([inside, outside], axis=1)
    return tokens + T.broadcast_to(pos_emb.reshape(1, h * w + 1, c), tokens.shape)


class PatchAttention(Module):
    def __init__(self, rng, channels: int, scaled: bool = False):
        super().__init__()
        self.scaled = scaled
        self.w_q = self.add_param("w_q", uniform_fan_in(rng, (channels, channels), channels))
        self.w_k = self.add_param("w_k", uniform_fan_in(rng, (channels, channels), channels))
        self.w_v = self.add_param("w_v", uniform_fan_in(rng, (channels, channels), channels))

    def attention_weights(self, x: Tensor) -> Tensor:
        q = T.linear(x, self.w_q)
        k = T.linear(x, self.w_k)
        logits = T.matmul(q, T.swapaxes(k, -1, -2))
        if self.scaled:
            logits = logits * (1.0 / np.sqrt(x.shape[-1]))
        return T.softmax(logits, axis=-1)

    def __call__(self, x: Tensor) -> Tensor:
        return patch_attention(x, self.w_q, self.w_k, self.w_v, self.scaled)


def patch_attention(x: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor, scaled: bool = False) -> Tensor:
    """x + softmax(q k^T) v with q = x W_q^T etc. Works on (L, C) or (N, L, C)."""
    q, k, v = T.linear(x, w_q), T.linear(x, w_k), T.linear(x, w_v)
    logits = T.matmul(q, T.swapaxes(k, -1, -2))
    if scaled:
        logits = logits * (1.0 / np.sqrt(x.shape[-1]))
    return x + T.matmul(T.softmax(logits, axis=-1), v)


class TemporalAttention(Module):
    """Attention across T frames on a one-channel compression of every token.

    Input/output are (B, T, L, C). With T == 1 the module is skipped and the
    input tensor itself is returned.
    """

    def __init__(self, rng, channels: int, n_tokens: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.compress_w = self.add_param("compress_w", uniform_fan_in(rng, (1, channels), channels))
        self.compress_b = self.add_param("compress_b", np.zeros(1))
        self.w_q = self.add_param("w_q", uniform_fan_in(rng, (n_tokens, n_tokens), n_tokens))
        self.w_k = self.add_param("w_k", uniform_fan_in(rng, (n_tokens, n_tokens), n_tokens))
        self.w_v = self.add_param("w_v", uniform_fan_in(rng, (n_tokens, n_tokens), n_tokens))
        self.expand_w = self.add_param("expand_w", uniform_fan_in(rng, (channels, 1), 1))
        self.expand_b = self.add_param("expand_b", np.zeros(channels))
        self.ln_gain = self.add_param("ln_gain", np.ones(channels))
        self.ln_bias = self.add_param("ln_bias", np.zeros(channels))

    def compress(self, x: Tensor) -> Tensor:
        b, t, l, _ = x.shape
        return T.linear(x, self.compress_w, self.compress_b).reshape(b, t, l)

    def attention_weights(self, x: Tensor) -> Tensor:
        """(B, T, T) weights; they see the input only through :meth:`compress`."""
        return self._weights(self.compress(x))

    def _weights(self, f: Tensor) -> Tensor:
        q = T.linear(f, self.w_q)
        k = T.linear(f, self.w_k)
        return T.softmax(T.matmul(q, T.swapaxes(k, -1, -2)), axis=-1)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"temporal attention expects (B, T, L, C), got {x.shape}")
        b, t, l, c = x.shape
        if t == 1:
            return x
        if l != self.w_q.shape[0] or c != self.expand_w.shape[0]:
            raise ShapeError(f"frame shape {(l, c)} does not match module")
        f = self.compress(x)
        m_att = self._weights(f)
        mixed = T.matmul(m_att, T.linear(f, self.w_v))  # (B, T, L)
        expanded = T.linear(mixed.reshape(b, t, l, 1), self.expand_w, self.expand_b)
        return T.layer_norm(x + expanded, -1, self.ln_gain, self.ln_bias, self.eps)
