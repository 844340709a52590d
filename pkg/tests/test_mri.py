import numpy as np
import pytest
import torch

from rui_enhance.compute import ParamStore, grad_check
from rui_enhance.config import default_config
from rui_enhance.errors import ConfigError
from rui_enhance.mri import RefineStack, audit_ledger, ledger_from_flows, refine
from rui_enhance.network import build_model
from rui_enhance.uie import comb_matrix_from_config


def _stack(n, seed=0, randomize_out=False):
    cfg = default_config()
    comb = torch.tensor(comb_matrix_from_config(cfg).weights, dtype=torch.float32)
    stack = RefineStack(n, cfg["mri.channels"], comb, cfg["uie.temperature"])
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in sorted(stack.named_parameters(), key=lambda kv: kv[0]):
            if randomize_out or "out" not in name:
                p.uniform_(-0.2, 0.2, generator=gen)
    return stack


def _inputs(rng, frames=12, channels=14):
    p = torch.tensor(rng.normal(size=(1, frames, 514)), dtype=torch.float32)
    a = torch.tensor(rng.normal(size=(1, channels, frames, 257)), dtype=torch.float32)
    return p, a


def test_n_zero_is_identity(rng):
    stack = _stack(0)
    p, a = _inputs(rng)
    ledger = refine(p, a, stack)
    assert np.array_equal(ledger.output, ledger.p)
    assert ledger.f == []
    assert ledger.s_inputs == []
    assert audit_ledger(ledger).passed


def test_zero_init_output_projections(rng):
    stack = _stack(3, randomize_out=False)  # out projections stay zero
    p, a = _inputs(rng)
    ledger = refine(p, a, stack)
    for f_i in ledger.f:
        assert np.all(f_i == 0.0)
    assert np.array_equal(ledger.output, ledger.p)


@pytest.mark.parametrize("kind", ["mask", "crn"])
def test_untrained_model_equals_pem(kind, rng):
    model = build_model(default_config().replaced(**{"pem.kind": kind}))
    x = torch.tensor(rng.normal(size=(1, 16, 514)) * 0.5, dtype=torch.float32)
    with torch.no_grad():
        assert torch.equal(model(x), model.pem(x))


def test_identities_hold_for_random_parameters(rng):
    for n in (1, 3, 8):
        stack = _stack(n, seed=n, randomize_out=True)
        p, a = _inputs(rng)
        ledger = refine(p, a, stack)
        assert len(ledger.f) == n
        report = audit_ledger(ledger)
        assert report.passed, str(report)
        assert len(report.correction_energy) == n


def test_injected_flows_match_independent_sums(rng):
    p = rng.normal(size=(9, 514)).astype(np.float32)
    flows = [rng.normal(size=(9, 514)).astype(np.float32) for _ in range(4)]
    ledger = ledger_from_flows(p, flows)
    # independent summation oracle, same fixed order, same dtype
    acc = p.copy()
    for i, f in enumerate(flows):
        assert np.array_equal(ledger.s_inputs[i], acc)
        acc = acc - f
    total = p.copy()
    for f in flows:
        total = total + f
    assert np.array_equal(ledger.output, total)
    assert audit_ledger(ledger).passed


def test_corrupted_flow_flagged_at_index(rng):
    p = rng.normal(size=(6, 514)).astype(np.float32)
    flows = [rng.normal(size=(6, 514)).astype(np.float32) for _ in range(4)]
    ledger = ledger_from_flows(p, flows)
    ledger.f[2] = ledger.f[2] + 1e-3
    report = audit_ledger(ledger)
    assert not report.passed
    # first inconsistency surfaces at the iteration fed by the corrupted flow
    assert "iteration 4" in report.failures[0]
    assert any("A-path" in msg for msg in report.failures)


def test_corrupted_last_flow_hits_a_path(rng):
    p = rng.normal(size=(6, 514)).astype(np.float32)
    flows = [rng.normal(size=(6, 514)).astype(np.float32) for _ in range(2)]
    ledger = ledger_from_flows(p, flows)
    ledger.f[1] = ledger.f[1] * 1.0001
    report = audit_ledger(ledger)
    assert not report.passed
    assert any("A-path" in msg for msg in report.failures)


def test_too_many_refinements_rejected():
    cfg = default_config()
    comb = torch.tensor(comb_matrix_from_config(cfg).weights, dtype=torch.float32)
    with pytest.raises(ConfigError):
        RefineStack(9, 14, comb, 0.1)


def test_gradients_reach_every_component(rng):
    model = build_model(default_config().replaced(**{"mri.n_refinements": 2}))
    gen = torch.Generator().manual_seed(1)
    with torch.no_grad():  # non-zero projections so corrections participate
        for blk in model.mri.blocks:
            blk.out.conv.weight.uniform_(-0.05, 0.05, generator=gen)
            blk.out.conv.bias.uniform_(-0.05, 0.05, generator=gen)
    x = torch.tensor(rng.normal(size=(1, 10, 514)) * 0.5, dtype=torch.float32)
    loss = model(x).square().mean()
    loss.backward()
    dead = [
        name
        for name, p in model.named_parameters()
        if p.grad is None or float(p.grad.abs().max()) == 0.0
    ]
    assert dead == []


def test_refine_gradcheck_n2(rng):
    cfg = default_config().replaced(**{"mri.n_refinements": 2, "mri.channels": 4})
    comb = torch.tensor(comb_matrix_from_config(cfg).weights, dtype=torch.float64)
    stack = RefineStack(2, 4, comb, cfg["uie.temperature"]).double()
    gen = torch.Generator().manual_seed(2)
    with torch.no_grad():
        for name, p in sorted(stack.named_parameters(), key=lambda kv: kv[0]):
            p.uniform_(-0.2, 0.2, generator=gen)
    p_in = torch.tensor(rng.normal(size=(1, 5, 514)) * 0.5, requires_grad=True)
    a_in = torch.tensor(rng.normal(size=(1, 4, 5, 257)) * 0.5, requires_grad=True)
    params = {"p": p_in, "a": a_in}
    params.update(dict(stack.named_parameters()))
    report = grad_check(
        lambda: stack(p_in, a_in)[0].square().mean(),
        ParamStore.from_dict(params),
        tol=1e-4,
        coords_per_param=6,
    )
    assert report.passed, str(report)
