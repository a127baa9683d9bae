"""Depot generator: customer-only encoder with an exact head and a Gaussian head."""
from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from ..depots import DepotDistribution
from ..errors import ShapeMismatch, SingularFactor
from ..instance import InstanceBatch
from .core import EMBED_DIM, FF_DIM, N_HEADS, N_LAYERS, Encoder, cholesky_quadratic, elu, linear


def gaussian_width(m: int) -> int:
    """Raw output width: ``2m`` means, ``2m`` diagonal entries, ``C(2m, 2)`` off-diagonal entries."""
    return 4 * m + math.comb(2 * m, 2)


def customer_features(batch: InstanceBatch, dtype=torch.float32) -> torch.Tensor:
    q = torch.as_tensor(batch.demand / batch.capacity[:, None], dtype=dtype)
    return torch.cat([torch.as_tensor(batch.customer_xy, dtype=dtype), q.unsqueeze(-1)], dim=-1)


def assemble_factor(raw: torch.Tensor, m: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Split a raw head output ``(..., 4m + C(2m,2))`` into the mean and Cholesky factor."""
    d = 2 * m
    if raw.shape[-1] != gaussian_width(m):
        raise ShapeMismatch(f"raw width {raw.shape[-1]} does not fit m={m}")
    mu = raw[..., :d]
    diag = 1.0 + elu(raw[..., d:2 * d])
    rows, cols = torch.tril_indices(d, d, offset=-1)
    batch_shape = raw.shape[:-1]
    flat = raw.new_zeros((int(np.prod(batch_shape, dtype=np.int64)), d, d))
    flat[:, rows, cols] = raw[..., 2 * d:].reshape(-1, rows.numel())
    L = flat.reshape(batch_shape + (d, d)) + torch.diag_embed(diag)
    return mu, L


def gaussian_log_prob(mu: torch.Tensor, L: torch.Tensor, X: torch.Tensor) -> torch.Tensor:
    """Normal log-density of pre-sigmoid draws.

    ``mu`` (..., d), ``L`` (..., d, d), ``X`` (..., k, d) or (..., d).
    """
    d = mu.shape[-1]
    diag = torch.diagonal(L, dim1=-2, dim2=-1)
    if bool((diag <= 0).any()):
        raise SingularFactor("Cholesky factor has a non-positive diagonal")
    extra = X.dim() - mu.dim()
    for _ in range(extra):
        mu, L, diag = mu.unsqueeze(-2), L.unsqueeze(-3), diag.unsqueeze(-2)
    quad = cholesky_quadratic(L.expand(X.shape[:-1] + (d, d)), X - mu)
    return -0.5 * quad - torch.log(diag).sum(-1) - 0.5 * d * math.log(2 * math.pi)


def sample_depots(mu: torch.Tensor, L: torch.Tensor, k: int, generator: torch.Generator | None = None):
    """``k`` reparameterised draws per distribution.

    Returns ``(depots, X)`` with depots of shape ``(B, k, m, 2)`` in the open
    unit square and pre-sigmoid draws ``X`` of shape ``(B, k, 2m)``.
    """
    if k < 1:
        raise ValueError("need at least one sample")
    B, d = mu.shape
    z = torch.randn(B, k, d, generator=generator, dtype=mu.dtype)
    X = mu.unsqueeze(1) + (L.unsqueeze(1) @ z.unsqueeze(-1)).squeeze(-1)
    return torch.sigmoid(X).view(B, k, d // 2, 2), X


class Dgm(nn.Module):
    def __init__(self, m: int, dim: int = EMBED_DIM, heads: int = N_HEADS, layers: int = N_LAYERS, ff: int = FF_DIM):
        super().__init__()
        self.m = m
        self.config = {"m": m, "dim": dim, "heads": heads, "layers": layers, "ff": ff}
        self.customer_embed = linear(3, dim)
        self.encoder = Encoder(dim, heads, layers, ff)
        self.hidden = linear(dim, dim)
        self.gaussian_out = linear(dim, gaussian_width(m))
        self.exact_out = linear(dim, 2 * m)

    @property
    def dtype(self):
        return self.hidden.weight.dtype

    def dgm_encode(self, cust_feats: torch.Tensor) -> torch.Tensor:
        """Mean-pooled customer embeddings ``(B, dim)``."""
        if cust_feats.dim() != 3 or cust_feats.shape[-1] != 3:
            raise ShapeMismatch("customer inputs must be (batch, n, 3)")
        return self.encoder(self.customer_embed(cust_feats)).mean(dim=1)

    def gaussian_raw(self, h_serve: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.gaussian_out(torch.tanh(self.hidden(h_serve))))

    def gaussian_head(self, h_serve: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return assemble_factor(self.gaussian_raw(h_serve), self.m)

    def exact_raw(self, h_serve: torch.Tensor) -> torch.Tensor:
        return self.exact_out(torch.tanh(self.hidden(h_serve)))

    def exact_head(self, h_serve: torch.Tensor) -> torch.Tensor:
        """Depot coordinates ``(B, m, 2)`` strictly inside the unit square."""
        return torch.sigmoid(self.exact_raw(h_serve)).view(-1, self.m, 2)

    def distributions(self, batch: InstanceBatch) -> list[DepotDistribution]:
        with torch.no_grad():
            mu, L = self.gaussian_head(self.dgm_encode(customer_features(batch, self.dtype)))
        return [DepotDistribution(mu[b].double().numpy(), L[b].double().numpy()) for b in range(batch.size)]

    def exact_depots(self, batch: InstanceBatch) -> np.ndarray:
        with torch.no_grad():
            return self.exact_head(self.dgm_encode(customer_features(batch, self.dtype))).double().numpy()
