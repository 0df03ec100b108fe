"""Loss functions: closed-form values, masked-mean semantics, sampling
contracts, and dense finite-difference gradient checks in float64."""

import math

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from fdcheck import check_dense
from srunet.objectives import (ClassSamples, ConfidenceMask, ReCoConfig,
                               combine, loss_reco, loss_sup, loss_unsup,
                               pseudo_labels_from, sample_reco)

CLAMP = 1e-7


def rand_probs(shape, seed, lo=0.05, hi=0.95, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return lo + (hi - lo) * torch.rand(shape, generator=g, dtype=dtype)


def rand_labels(shape, seed):
    g = torch.Generator().manual_seed(seed)
    return torch.randint(0, 2, shape, generator=g)


# ---------------------------------------------------------------- loss_sup

def test_sup_uniform_half_is_ln2():
    p = torch.full((8, 8), 0.5, dtype=torch.float64)
    y = rand_labels((8, 8), 0)
    assert abs(float(loss_sup(p, y)) - math.log(2.0)) < 1e-12


def test_sup_matches_elementwise_oracle():
    p = rand_probs((3, 8, 8), 1)
    y = rand_labels((3, 8, 8), 2).to(torch.float64)
    acc = 0.0
    for pi, yi in zip(p.reshape(-1).tolist(), y.reshape(-1).tolist()):
        acc += -(yi * math.log(pi) + (1 - yi) * math.log(1 - pi))
    assert abs(float(loss_sup(p, y)) - acc / p.numel()) < 1e-12


def test_sup_clamps_saturated_probabilities():
    y = torch.ones((4, 4))
    p = torch.zeros((4, 4), dtype=torch.float64)
    val = float(loss_sup(p, y))
    assert math.isfinite(val)
    assert abs(val - (-math.log(CLAMP))) < 1e-9
    # and the mirrored case
    assert abs(float(loss_sup(torch.ones((4, 4), dtype=torch.float64),
                              torch.zeros((4, 4)))) - (-math.log(CLAMP))) < 1e-9


def test_sup_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        loss_sup(torch.rand(4, 4), torch.zeros(4, 5))


def test_sup_gradient_matches_finite_differences():
    p = rand_probs((8, 8), 3).requires_grad_(True)
    y = rand_labels((8, 8), 4)
    worst = check_dense(lambda: loss_sup(p, y), p)
    assert worst < 1e-4, worst


@given(st.integers(0, 10_000))
def test_sup_label_flip_symmetry(seed):
    p = rand_probs((6, 6), seed)
    y = rand_labels((6, 6), seed + 1).to(torch.float64)
    a = float(loss_sup(p, y))
    b = float(loss_sup(1.0 - p, 1.0 - y))
    assert abs(a - b) < 1e-10
    assert a >= 0.0


# -------------------------------------------------------------- loss_unsup

def test_unsup_empty_mask_is_exact_zero():
    p = rand_probs((2, 8, 8), 5)
    pl = rand_labels((2, 8, 8), 6)
    mask = ConfidenceMask(w=torch.zeros(2, 8, 8, dtype=torch.float64))
    assert float(loss_unsup(p, pl, mask)) == 0.0


def test_unsup_is_masked_mean():
    p = rand_probs((8, 8), 7)
    pl = rand_labels((8, 8), 8)
    g = torch.Generator().manual_seed(9)
    w = (torch.rand(8, 8, generator=g) > 0.5).to(torch.float64)
    got = float(loss_unsup(p, pl, ConfidenceMask(w=w)))
    acc, n = 0.0, 0
    for pi, yi, wi in zip(p.reshape(-1).tolist(), pl.reshape(-1).tolist(),
                          w.reshape(-1).tolist()):
        if wi:
            acc += -(yi * math.log(pi) + (1 - yi) * math.log(1 - pi))
            n += 1
    assert n > 0
    assert abs(got - acc / n) < 1e-12


def test_unsup_full_mask_equals_sup():
    p = rand_probs((8, 8), 10)
    pl = rand_labels((8, 8), 11)
    full = ConfidenceMask(w=torch.ones(8, 8, dtype=torch.float64))
    assert abs(float(loss_unsup(p, pl, full)) - float(loss_sup(p, pl))) < 1e-12


def test_unsup_gradient_matches_finite_differences():
    p = rand_probs((8, 8), 12).requires_grad_(True)
    pl = rand_labels((8, 8), 13)
    g = torch.Generator().manual_seed(14)
    mask = ConfidenceMask(w=(torch.rand(8, 8, generator=g) > 0.4).double())
    worst = check_dense(lambda: loss_unsup(p, pl, mask), p)
    assert worst < 1e-4, worst


def test_unsup_gradient_zero_outside_mask():
    p = rand_probs((8, 8), 15).requires_grad_(True)
    pl = rand_labels((8, 8), 16)
    w = torch.zeros(8, 8, dtype=torch.float64)
    w[:4] = 1.0
    loss_unsup(p, pl, ConfidenceMask(w=w)).backward()
    assert torch.all(p.grad[4:] == 0)
    assert torch.any(p.grad[:4] != 0)


# --------------------------------------------------- confidence mask & argmax

def test_mask_threshold_is_strict():
    probs = torch.tensor([[[[0.95]], [[0.05]]],
                          [[[0.96]], [[0.04]]]])  # B=2, C=2, 1x1
    m = ConfidenceMask.from_probs(probs, threshold=0.95)
    assert m.w.shape == (2, 1, 1)
    assert m.w[0, 0, 0] == 0.0    # exactly at the threshold: excluded
    assert m.w[1, 0, 0] == 1.0
    assert m.coverage == 0.5


def test_mask_reduces_class_axis():
    probs = torch.rand(3, 2, 5, 5)
    probs = probs / probs.sum(dim=1, keepdim=True)
    m = ConfidenceMask.from_probs(probs, threshold=0.5)
    assert m.w.shape == (3, 5, 5)
    # with two classes the max prob is always > 0.5 unless exactly 0.5
    assert m.w.dtype == probs.dtype


def test_pseudo_labels_are_argmax():
    probs = torch.tensor([[[[0.3, 0.8]], [[0.7, 0.2]]]])  # 1 x 2 x 1 x 2
    assert pseudo_labels_from(probs).tolist() == [[[1, 0]]]


# -------------------------------------------------------------- sample_reco

def two_class_inputs(seed, d=8, h=8, w=8, n_classes=2):
    g = torch.Generator().manual_seed(seed)
    rep = torch.randn(1, d, h, w, generator=g, dtype=torch.float64)
    logits = torch.randn(1, n_classes, h, w, generator=g, dtype=torch.float64)
    probs = torch.softmax(logits, dim=1)
    labels = torch.randint(0, n_classes, (1, h, w), generator=g)
    labels[0, 0, 0] = 0  # guarantee both classes exist
    labels[0, 0, 1] = 1
    return rep, probs, labels


def test_sample_reco_counts_and_norms():
    rep, probs, labels = two_class_inputs(0)
    cfg = ReCoConfig(num_queries=16, num_keys=32)
    samples = sample_reco(rep, probs, labels, cfg,
                          torch.Generator().manual_seed(1))
    assert [s.class_id for s in samples] == [0, 1]
    for s in samples:
        n_class = int((labels == s.class_id).sum())
        assert s.queries.shape == (min(16, n_class), 8)
        assert s.neg_keys.shape == (32, 8)
        assert torch.allclose(s.queries.norm(dim=1),
                              torch.ones(s.queries.shape[0],
                                         dtype=torch.float64), atol=1e-10)
        assert abs(float(s.pos_key.norm()) - 1.0) < 1e-10
        assert torch.allclose(s.neg_keys.norm(dim=1),
                              torch.ones(32, dtype=torch.float64), atol=1e-10)


def test_sample_reco_negatives_come_from_other_classes():
    # distinctive representations: class 0 pixels map to e0, class 1 to e1
    labels = rand_labels((1, 8, 8), 2)
    labels[0, 0, 0] = 0
    labels[0, 0, 1] = 1
    rep = torch.zeros(1, 2, 8, 8, dtype=torch.float64)
    rep[0, 0][labels[0] == 0] = 1.0
    rep[0, 1][labels[0] == 1] = 1.0
    probs = torch.full((1, 2, 8, 8), 0.5, dtype=torch.float64)
    samples = sample_reco(rep, probs, labels, ReCoConfig(num_queries=4,
                                                         num_keys=8),
                          torch.Generator().manual_seed(3))
    by_id = {s.class_id: s for s in samples}
    e0 = torch.tensor([1.0, 0.0], dtype=torch.float64)
    e1 = torch.tensor([0.0, 1.0], dtype=torch.float64)
    assert torch.all(by_id[0].neg_keys == e1)
    assert torch.all(by_id[1].neg_keys == e0)
    assert torch.all(by_id[0].queries == e0)
    assert torch.allclose(by_id[0].pos_key, e0)


def test_sample_reco_prefers_hard_queries():
    # class 0 at prob 0.99 (easy) except two hard pixels at 0.5
    labels = torch.zeros(1, 4, 4, dtype=torch.long)
    labels[0, 2:, 2:] = 1
    probs = torch.zeros(1, 2, 4, 4, dtype=torch.float64)
    probs[0, 0] = 0.99
    probs[0, 1] = 0.01
    probs[0, 0, 0, 0] = 0.5
    probs[0, 0, 0, 1] = 0.5
    probs[0, 1, 0, 0] = 0.5
    probs[0, 1, 0, 1] = 0.5
    rep = torch.randn(1, 4, 4, 4, generator=torch.Generator().manual_seed(4),
                      dtype=torch.float64)
    import torch.nn.functional as F
    flat = F.normalize(rep.permute(0, 2, 3, 1).reshape(-1, 4), dim=1)
    samples = sample_reco(rep, probs, labels, ReCoConfig(num_queries=2,
                                                         num_keys=4),
                          torch.Generator().manual_seed(5))
    s0 = next(s for s in samples if s.class_id == 0)
    hard_reps = flat[[0, 1]]  # flattened indices of the two hard pixels
    for q in s0.queries:
        assert any(torch.allclose(q, hr) for hr in hard_reps)


def test_sample_reco_deterministic_under_seed():
    rep, probs, labels = two_class_inputs(6)
    cfg = ReCoConfig(num_queries=8, num_keys=16)
    a = sample_reco(rep, probs, labels, cfg, torch.Generator().manual_seed(7))
    b = sample_reco(rep, probs, labels, cfg, torch.Generator().manual_seed(7))
    for sa, sb in zip(a, b):
        assert torch.equal(sa.queries, sb.queries)
        assert torch.equal(sa.neg_keys, sb.neg_keys)
        assert torch.equal(sa.pos_key, sb.pos_key)


def test_sample_reco_single_class_skipped():
    rep, probs, _ = two_class_inputs(8)
    labels = torch.zeros(1, 8, 8, dtype=torch.long)
    assert sample_reco(rep, probs, labels, ReCoConfig()) == []
    with pytest.raises(ValueError):
        loss_reco([])


def test_sample_reco_zero_representation_raises():
    _, probs, labels = two_class_inputs(9)
    rep = torch.zeros(1, 8, 8, 8, dtype=torch.float64)
    with pytest.raises(ValueError):
        sample_reco(rep, probs, labels, ReCoConfig())


# ---------------------------------------------------------------- loss_reco

def test_reco_orthogonal_scalar_case():
    e1 = torch.tensor([1.0, 0.0], dtype=torch.float64)
    e2 = torch.tensor([0.0, 1.0], dtype=torch.float64)
    s = ClassSamples(class_id=0, queries=e1.unsqueeze(0), pos_key=e1,
                     neg_keys=e2.unsqueeze(0))
    expect = math.log(1.0 + math.exp(-2.0))  # logsumexp([2, 0]) - 2
    assert abs(float(loss_reco([s], temperature=0.5)) - expect) < 1e-12


def test_reco_identical_pos_and_neg_gives_ln2_margin():
    # when k+ == k-, the positive wins exactly half the mass
    e = torch.tensor([1.0, 0.0], dtype=torch.float64)
    s = ClassSamples(class_id=0, queries=e.unsqueeze(0), pos_key=e,
                     neg_keys=e.unsqueeze(0))
    assert abs(float(loss_reco([s])) - math.log(2.0)) < 1e-12


def unit_rows(n, d, seed):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(n, d, generator=g, dtype=torch.float64)
    return torch.nn.functional.normalize(x, dim=1)


def test_reco_permutation_invariance():
    qs = unit_rows(6, 8, 0)
    ks = unit_rows(10, 8, 1)
    pos = unit_rows(1, 8, 2)[0]
    qs2 = unit_rows(5, 8, 3)
    ks2 = unit_rows(7, 8, 4)
    pos2 = unit_rows(1, 8, 5)[0]
    a = ClassSamples(0, qs, pos, ks)
    b = ClassSamples(1, qs2, pos2, ks2)
    base = float(loss_reco([a, b]))
    gq = torch.randperm(6, generator=torch.Generator().manual_seed(6))
    gk = torch.randperm(10, generator=torch.Generator().manual_seed(7))
    shuffled = ClassSamples(0, qs[gq], pos, ks[gk])
    assert abs(float(loss_reco([shuffled, b])) - base) < 1e-12
    assert abs(float(loss_reco([b, a])) - base) < 1e-12


def test_reco_zero_norm_vector_rejected():
    qs = unit_rows(3, 4, 8)
    ks = unit_rows(3, 4, 9)
    bad = qs.clone()
    bad[1] = 0.0
    pos = unit_rows(1, 4, 10)[0]
    with pytest.raises(ValueError):
        loss_reco([ClassSamples(0, bad, pos, ks)])


def test_reco_pipeline_gradient_matches_finite_differences():
    rep, probs, labels = two_class_inputs(11)
    rep.requires_grad_(True)
    cfg = ReCoConfig(num_queries=8, num_keys=16)

    def f():
        gen = torch.Generator().manual_seed(123)
        return loss_reco(sample_reco(rep, probs, labels, cfg, gen),
                         cfg.temperature)

    worst = check_dense(f, rep)
    assert worst < 1e-4, worst


# ------------------------------------------------------------------ combine

def test_combine_weights_and_floats():
    sup = torch.tensor(1.0)
    unsup = torch.tensor(2.0)
    ctr = torch.tensor(3.0)
    bundle = combine(sup, unsup, ctr, alpha_unsup=0.7, alpha_ctr=0.2)
    assert abs(float(bundle.total) - (1.0 + 0.7 * 2.0 + 0.2 * 3.0)) < 1e-7
    vals = bundle.floats()
    assert vals["loss_sup"] == 1.0 and vals["loss_total"] == float(bundle.total)


def test_combine_rejects_nonfinite_and_names_component():
    ok = torch.tensor(0.5)
    with pytest.raises(ValueError, match="unsup"):
        combine(ok, torch.tensor(float("nan")), ok)
    with pytest.raises(ValueError, match="ctr"):
        combine(ok, ok, torch.tensor(float("inf")))


def test_reco_config_validation():
    with pytest.raises(ValueError):
        ReCoConfig(temperature=0.0).validate()
    with pytest.raises(ValueError):
        ReCoConfig(num_queries=0).validate()
    assert ReCoConfig().validate().num_queries == 128
