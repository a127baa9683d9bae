import math

import numpy as np
import pytest
import torch
from scipy import stats

from lrpgen.depots import DepotDistribution, DepotSet
from lrpgen.errors import ShapeMismatch, SingularFactor
from lrpgen.instance import get_preset, sample_batch
from lrpgen.neural.dgm import Dgm, assemble_factor, gaussian_log_prob, gaussian_width, sample_depots


def test_head_width():
    assert gaussian_width(1) == 4 + 1
    assert gaussian_width(2) == 8 + 6
    assert gaussian_width(3) == 12 + 15


def test_assemble_factor_layout():
    m = 2
    raw = torch.arange(gaussian_width(m), dtype=torch.float64) / 100
    mu, L = assemble_factor(raw, m)
    assert mu.tolist() == pytest.approx([0.0, 0.01, 0.02, 0.03])
    d = torch.diagonal(L)
    assert d.tolist() == pytest.approx([1 + 0.04, 1 + 0.05, 1 + 0.06, 1 + 0.07])
    # strict lower triangle filled row by row
    assert [float(L[1, 0]), float(L[2, 0]), float(L[2, 1]), float(L[3, 0])] == pytest.approx([0.08, 0.09, 0.10, 0.11])
    assert torch.all(torch.triu(L, 1) == 0)
    with pytest.raises(ShapeMismatch):
        assemble_factor(torch.zeros(5), 2)


def test_diagonal_is_positive_for_negative_raw():
    mu, L = assemble_factor(-torch.ones(3, gaussian_width(2)), 2)
    assert torch.all(torch.diagonal(L, dim1=-2, dim2=-1) > 0)


def test_log_prob_matches_scipy():
    rng = np.random.default_rng(0)
    mu = rng.normal(size=4)
    L = np.tril(rng.normal(scale=0.3, size=(4, 4)), -1) + np.diag(rng.uniform(0.5, 1.5, 4))
    X = rng.normal(size=(5, 4))
    ref = stats.multivariate_normal(mu, L @ L.T).logpdf(X)
    got = gaussian_log_prob(torch.as_tensor(mu), torch.as_tensor(L), torch.as_tensor(X)).numpy()
    np.testing.assert_allclose(got, ref, rtol=1e-10)
    np.testing.assert_allclose(DepotDistribution(mu, L).log_prob(X), ref, rtol=1e-10)


def test_singular_factor_rejected():
    L = torch.eye(2, dtype=torch.float64)
    L[1, 1] = 0.0
    with pytest.raises(SingularFactor):
        gaussian_log_prob(torch.zeros(2, dtype=torch.float64), L, torch.zeros(2, dtype=torch.float64))
    with pytest.raises(SingularFactor):
        DepotDistribution(np.zeros(2), L.numpy()).log_prob(np.zeros(2))


def test_torch_sampler_statistics():
    mu = torch.tensor([[0.5, -0.25, 0.0, 1.0]], dtype=torch.float64)
    L = torch.eye(4, dtype=torch.float64).unsqueeze(0)
    L[0, 1, 0] = 0.6
    depots, X = sample_depots(mu, L, 50_000, torch.Generator().manual_seed(0))
    assert depots.shape == (1, 50_000, 2, 2)
    assert torch.all((depots > 0) & (depots < 1))
    x = X[0].numpy()
    np.testing.assert_allclose(x.mean(0), mu[0].numpy(), atol=0.03)
    np.testing.assert_allclose(np.cov(x, rowvar=False), (L[0] @ L[0].T).numpy(), atol=0.03)


def test_model_heads():
    torch.manual_seed(0)
    dgm = Dgm(2, dim=32, heads=4, layers=1, ff=64)
    batch = sample_batch(get_preset("toy"), 3, np.random.default_rng(1))
    depots = dgm.exact_depots(batch)
    assert depots.shape == (3, 2, 2) and np.all((depots > 0) & (depots < 1))
    dists = dgm.distributions(batch)
    assert len(dists) == 3 and dists[0].m == 2
    assert np.all(np.linalg.eigvalsh(dists[0].covariance) > 0)
    with pytest.raises(ShapeMismatch):
        dgm.dgm_encode(torch.zeros(3, 10, 2))


def test_generator_ignores_customer_order():
    torch.manual_seed(1)
    dgm = Dgm(2, dim=32, heads=4, layers=1, ff=64).double()
    feats = torch.rand(1, 8, 3, dtype=torch.float64)
    h1 = dgm.dgm_encode(feats)
    h2 = dgm.dgm_encode(feats[:, torch.randperm(8)])
    assert torch.allclose(h1, h2, atol=1e-10)


def test_depot_containers_round_trip():
    ds = DepotSet([[0.1, 0.2], [0.3, 0.4]], 1.5)
    assert DepotSet.from_dict(ds.to_dict()).positions.tolist() == ds.positions.tolist()
    dist = DepotDistribution(np.zeros(2), [[1.0, 0.0], [0.5, 2.0]])
    back = DepotDistribution.from_dict({"mean": [0, 0], "covariance": dist.covariance.tolist()})
    np.testing.assert_allclose(back.factor, dist.factor)
    mu, cov = dist.marginal(0)
    assert cov.shape == (2, 2) and mu.shape == (2,)
    with pytest.raises(ValueError):
        DepotDistribution(np.zeros(4), np.eye(2))
