import numpy as np
import pytest
import torch

from lrpgen.cost import cost_sel
from lrpgen.errors import AllMasked, ShapeMismatch
from lrpgen.instance import InstanceBatch, get_preset, sample_batch, sample_instance
from lrpgen.neural.mdlram import (Mdlram, batch_features, greedy_argmax, rollout_batch, solve_greedy,
                                  solve_sampling, trace_log_prob)
from lrpgen.solution import trace_to_plan, validate


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(5)
    return Mdlram(dim=32, heads=4, layers=2, ff=64).eval()


def test_features_scale_demand_by_capacity():
    batch = sample_batch(get_preset("toy"), 2, np.random.default_rng(0))
    depot, cust = batch_features(batch)
    assert depot.shape == (2, 2, 2) and cust.shape == (2, 10, 3)
    assert torch.allclose(cust[..., 2].double(), torch.as_tensor(batch.demand / 20.0))


def test_greedy_argmax_lowest_index_on_ties():
    s = torch.tensor([[0.5, 1.0, 1.0, -1.0], [2.0, 2.0, 2.0, 2.0]])
    assert greedy_argmax(s).tolist() == [1, 0]


def test_rollouts_are_feasible(model):
    batch = sample_batch(get_preset("toy"), 16, np.random.default_rng(1))
    for mode in ("greedy", "sample"):
        out = rollout_batch(model, batch, mode, torch.Generator().manual_seed(0))
        for b in range(batch.size):
            assert validate(trace_to_plan(out.trajectory.trace(b), batch[b]), batch[b]).ok
        assert torch.all(out.log_prob <= 0)


def test_log_prob_matches_teacher_forcing(model):
    batch = sample_batch(get_preset("toy"), 4, np.random.default_rng(2))
    with torch.no_grad():
        out = rollout_batch(model, batch, "sample", torch.Generator().manual_seed(1))
        again = trace_log_prob(model, batch, out.trajectory.actions)
    assert torch.allclose(out.log_prob, again, atol=1e-5)


def test_greedy_is_deterministic_and_mask_respected(model):
    inst = sample_instance(get_preset("toy"), 3)
    assert solve_greedy(inst, model) == solve_greedy(inst, model)


def test_decode_step_rejects_fully_masked_rows(model):
    batch = sample_batch(get_preset("toy"), 1, np.random.default_rng(3))
    fixed = model.precompute(model.encode_batch(batch))
    ctx = torch.zeros(1, 32)
    with pytest.raises(AllMasked):
        model.decode_step(fixed, ctx, torch.ones(1, 12, dtype=torch.bool))


def test_encode_checks_inputs(model):
    with pytest.raises(ShapeMismatch):
        model.encode(torch.zeros(1, 2, 3), torch.zeros(1, 5, 3))


def test_tanh_clip_bounds_logits():
    torch.manual_seed(0)
    clipped = Mdlram(dim=16, heads=2, layers=1, ff=32, tanh_clip=10.0)
    batch = sample_batch(get_preset("toy"), 2, np.random.default_rng(4))
    fixed = clipped.precompute(clipped.encode_batch(batch))
    mask = torch.zeros(2, 12, dtype=torch.bool)
    u = clipped.logits(fixed, torch.randn(2, 16) * 100, mask)
    assert torch.all(u.abs() <= 10.0)


@pytest.mark.parametrize("seed", range(5))
def test_sampling_includes_greedy(model, seed):
    inst = sample_instance(get_preset("toy"), 100 + seed)
    g = cost_sel(solve_greedy(inst, model), inst).total
    s = cost_sel(solve_sampling(inst, model, 8, seed), inst).total
    assert s <= g
    with pytest.raises(ValueError):
        solve_sampling(inst, model, 0)


def test_policy_works_on_other_sizes(model):
    inst = sample_instance(get_preset("20"), 0)
    assert validate(solve_greedy(inst, model), inst).ok
