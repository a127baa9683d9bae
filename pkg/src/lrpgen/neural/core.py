"""Differentiable building blocks shared by the routing policy and the depot generator.

Autograd comes from torch. This module adds the small set of primitives the
models need (masked softmax, the Cholesky quadratic form), the attention
encoder, and a pickle-free checkpoint container.
"""
from __future__ import annotations

import json
import math

import numpy as np
import torch
from torch import nn

from ..errors import ShapeMismatch

FORMAT_VERSION = 1
EMBED_DIM = 128
N_HEADS = 8
N_LAYERS = 3
FF_DIM = 512


def use_single_thread() -> None:
    """Pin torch to one thread so reductions are reproducible."""
    torch.set_num_threads(1)


def _init_linear(layer: nn.Linear) -> nn.Linear:
    bound = 1.0 / math.sqrt(layer.in_features)
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound)
        if layer.bias is not None:
            layer.bias.uniform_(-bound, bound)
    return layer


def linear(fan_in: int, fan_out: int, bias: bool = True) -> nn.Linear:
    return _init_linear(nn.Linear(fan_in, fan_out, bias=bias))


# -- primitives -------------------------------------------------------------

def masked_fill(x: torch.Tensor, mask: torch.Tensor, value: float) -> torch.Tensor:
    return x.masked_fill(mask, value)


def masked_softmax(logits: torch.Tensor, mask: torch.Tensor | None = None, dim: int = -1) -> torch.Tensor:
    """Softmax where masked entries (True) get exactly zero probability."""
    if mask is not None:
        logits = logits.masked_fill(mask, float("-inf"))
    return torch.softmax(logits, dim=dim)


def masked_log_softmax(logits: torch.Tensor, mask: torch.Tensor | None = None, dim: int = -1) -> torch.Tensor:
    if mask is not None:
        logits = logits.masked_fill(mask, float("-inf"))
    return torch.log_softmax(logits, dim=dim)


def elu(x: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.elu(x, alpha=1.0)


def cholesky_quadratic(L: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
    """``||L^{-1} r||^2`` for lower-triangular ``L`` of shape ``(..., d, d)`` and ``r`` of shape ``(..., d)``."""
    if L.shape[-1] != L.shape[-2] or L.shape[-1] != r.shape[-1]:
        raise ShapeMismatch(f"factor {tuple(L.shape)} incompatible with residual {tuple(r.shape)}")
    z = torch.linalg.solve_triangular(L, r.unsqueeze(-1), upper=False).squeeze(-1)
    return (z * z).sum(-1)


def gather_rows(x: torch.Tensor, index: torch.Tensor) -> torch.Tensor:
    """``x[b, index[b]]`` for ``x`` of shape ``(B, N, D)``."""
    return x.gather(1, index.view(-1, 1, 1).expand(-1, 1, x.shape[-1])).squeeze(1)


PRIMITIVES = {
    "matmul": lambda a, b: a @ b,
    "add": lambda a, b: a + b,
    "concat": lambda a, b: torch.cat([a, b], dim=-1),
    "softmax": lambda a: torch.softmax(a, dim=-1),
    "tanh": torch.tanh,
    "elu": elu,
    "sigmoid": torch.sigmoid,
    "mean": lambda a: a.mean(dim=-1),
    "log": lambda a: torch.log(a),
    "exp": torch.exp,
}


# -- attention --------------------------------------------------------------

class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int = EMBED_DIM, heads: int = N_HEADS):
        super().__init__()
        if dim % heads:
            raise ShapeMismatch(f"width {dim} not divisible by {heads} heads")
        self.dim, self.heads, self.head_dim = dim, heads, dim // heads
        self.wq = linear(dim, dim, bias=False)
        self.wk = linear(dim, dim, bias=False)
        self.wv = linear(dim, dim, bias=False)
        self.wo = linear(dim, dim, bias=False)

    def split(self, x: torch.Tensor) -> torch.Tensor:
        B, N, _ = x.shape
        return x.view(B, N, self.heads, self.head_dim).transpose(1, 2)  # (B, H, N, dk)

    def attend(self, q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
               mask: torch.Tensor | None = None) -> torch.Tensor:
        """Scaled dot-product over pre-split heads; ``mask`` (B, Nq, Nk) hides True entries."""
        compat = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if mask is not None:
            compat = compat.masked_fill(mask[:, None], float("-inf"))
        out = torch.softmax(compat, dim=-1) @ v  # (B, H, Nq, dk)
        B, _, Nq, _ = out.shape
        return self.wo(out.transpose(1, 2).reshape(B, Nq, self.dim))

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        return self.attend(self.split(self.wq(x)), self.split(self.wk(x)), self.split(self.wv(x)), mask)


class InstanceNorm(nn.Module):
    """Normalise each feature over the node axis, with a learned affine map."""

    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mu = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, unbiased=False, keepdim=True)
        return (x - mu) / torch.sqrt(var + self.eps) * self.weight + self.bias


class AttentionBlock(nn.Module):
    def __init__(self, dim: int = EMBED_DIM, heads: int = N_HEADS, ff: int = FF_DIM):
        super().__init__()
        self.mha = MultiHeadAttention(dim, heads)
        self.norm1 = InstanceNorm(dim)
        self.ff = nn.Sequential(linear(dim, ff), nn.ReLU(), linear(ff, dim))
        self.norm2 = InstanceNorm(dim)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        x = self.norm1(x + self.mha(x, mask))
        return self.norm2(x + self.ff(x))


class Encoder(nn.Module):
    """``layers`` stacked attention blocks without positional features."""

    def __init__(self, dim: int = EMBED_DIM, heads: int = N_HEADS, layers: int = N_LAYERS, ff: int = FF_DIM):
        super().__init__()
        self.dim = dim
        self.blocks = nn.ModuleList(AttentionBlock(dim, heads, ff) for _ in range(layers))

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        if x.dim() != 3 or x.shape[-1] != self.dim:
            raise ShapeMismatch(f"expected (batch, nodes, {self.dim}), got {tuple(x.shape)}")
        for block in self.blocks:
            x = block(x, mask)
        return x


def attention_encode(encoder: Encoder, features: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    return encoder(features, mask)


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(path, model: nn.Module, config: dict) -> None:
    """Write named little-endian float32 arrays plus a JSON header; no pickling."""
    arrays = {}
    shapes = {}
    for name, t in model.state_dict().items():
        a = t.detach().cpu().numpy().astype("<f4")
        arrays["p:" + name] = a
        shapes[name] = list(a.shape)
    meta = {"format_version": FORMAT_VERSION, "dtype": "float32-le", "config": config, "shapes": shapes}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(meta, state_dict)`` from :func:`save_checkpoint` output."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        state = {k[2:]: torch.from_numpy(z[k].astype(np.float32)) for k in z.files if k.startswith("p:")}
    for name, shape in meta["shapes"].items():
        if list(state[name].shape) != shape:
            raise ShapeMismatch(f"parameter {name} stored with shape {list(state[name].shape)}, header says {shape}")
    return meta, state


def parameter_digest(model: nn.Module) -> str:
    """Hash of all parameter bytes, for checking that a model stayed frozen."""
    import hashlib

    h = hashlib.sha256()
    for name, t in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
