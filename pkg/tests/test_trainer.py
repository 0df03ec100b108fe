"""Training loop: LR schedule values, EMA exactness, teacher freezing,
supervised-degenerate equivalence with a hand-rolled loop, and run
determinism."""

import json
import math

import numpy as np
import pytest
import torch

from srunet.dataio.types import DatasetSplit, Sample
from srunet.experiments import build_synth_samples, tiny_network_config
from srunet.network.model import build_model
from srunet.objectives import loss_sup
from srunet.trainer import (TrainConfig, assert_teacher_frozen, build_state,
                            ema_update, evaluate_model, fit, lr_schedule,
                            samples_to_batch, train_step)

SIZE = 64


def quick_cfg(**kw):
    base = dict(lr0=0.01, epochs=2, batch_labeled=2, batch_unlabeled=2,
                augment=False, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def tiles():
    return build_synth_samples(6, size=SIZE, base_seed=21)


# ------------------------------------------------------------- lr schedule

def test_lr_schedule_endpoints_and_midpoint():
    cfg = TrainConfig(lr0=0.001, poly_power=0.9)
    assert lr_schedule(0, 300, cfg) == 0.001
    assert lr_schedule(300, 300, cfg) == 0.0
    mid = lr_schedule(150, 300, cfg)
    assert abs(mid - 0.001 * 0.5 ** 0.9) < 1e-12
    assert abs(mid - 5.358867312681466e-04) < 1e-9


def test_lr_schedule_monotone_decreasing():
    cfg = TrainConfig(lr0=0.01, poly_power=0.9)
    vals = [lr_schedule(s, 100, cfg) for s in range(101)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_lr_schedule_rejects_bad_arguments():
    cfg = TrainConfig()
    with pytest.raises(ValueError):
        lr_schedule(0, 0, cfg)
    with pytest.raises(ValueError):
        lr_schedule(-1, 10, cfg)
    with pytest.raises(ValueError):
        lr_schedule(11, 10, cfg)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(ema_decay=1.0).validate()
    with pytest.raises(ValueError):
        TrainConfig(lr0=0.0).validate()
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop").validate()
    assert TrainConfig().validate().ema_decay == 0.99


# ---------------------------------------------------------------- EMA & state

def test_build_state_teacher_starts_as_student_copy():
    state = build_state(tiny_network_config(SIZE), quick_cfg())
    s, t = state.student.state_dict(), state.teacher.state_dict()
    assert s.keys() == t.keys()
    for k in s:
        assert torch.equal(s[k], t[k]), k
    assert all(not p.requires_grad for p in state.teacher.parameters())
    assert_teacher_frozen(state)


def test_frozen_assertion_detects_optimized_teacher():
    state = build_state(tiny_network_config(SIZE), quick_cfg())
    state.optimizer.add_param_group(
        {"params": list(state.teacher.parameters())})
    with pytest.raises(AssertionError):
        assert_teacher_frozen(state)


def test_optimizer_selection():
    sgd = build_state(tiny_network_config(SIZE), quick_cfg(optimizer="sgd"))
    adam = build_state(tiny_network_config(SIZE), quick_cfg(optimizer="adam"))
    assert isinstance(sgd.optimizer, torch.optim.SGD)
    assert isinstance(adam.optimizer, torch.optim.Adam)


def test_ema_matches_manual_recomputation_bitwise():
    net_cfg = tiny_network_config(SIZE)
    teacher = build_model(net_cfg, seed=1)
    student = build_model(net_cfg, seed=2)
    snapshot = {k: v.clone() for k, v in teacher.state_dict().items()}
    decay = 0.99
    ema_update(teacher, student, decay)
    s_state = student.state_dict()
    for name, prev in snapshot.items():
        got = teacher.state_dict()[name]
        if prev.dtype.is_floating_point:
            expect = prev * decay + s_state[name] * (1.0 - decay)
        else:
            expect = s_state[name]
        assert torch.equal(got, expect), name


def test_ema_decay_zero_copies_student():
    net_cfg = tiny_network_config(SIZE)
    teacher = build_model(net_cfg, seed=3)
    student = build_model(net_cfg, seed=4)
    ema_update(teacher, student, 0.0)
    for k, v in student.state_dict().items():
        assert torch.equal(v, teacher.state_dict()[k]), k


def test_ema_updates_float_buffers_and_copies_int_buffers():
    net_cfg = tiny_network_config(SIZE)
    teacher = build_model(net_cfg, seed=5)
    student = build_model(net_cfg, seed=6)
    # provoke nontrivial batchnorm state on the student
    student.train()
    student(torch.rand(2, 3, SIZE, SIZE), torch.rand(2, 3, SIZE, SIZE))
    before = {k: v.clone() for k, v in teacher.state_dict().items()}
    ema_update(teacher, student, 0.5)
    s_state = student.state_dict()
    saw_float_buffer = saw_int_buffer = False
    for name, buf in teacher.named_buffers():
        if buf.dtype.is_floating_point:
            saw_float_buffer = True
            expect = before[name] * 0.5 + s_state[name] * 0.5
            assert torch.equal(buf, expect), name
        else:
            saw_int_buffer = True
            assert torch.equal(buf, s_state[name]), name
    assert saw_float_buffer and saw_int_buffer


def test_ema_rejects_mismatched_models():
    a = build_model(tiny_network_config(SIZE), seed=7)
    b = build_model(tiny_network_config(SIZE, use_map=False), seed=8)
    with pytest.raises(ValueError):
        ema_update(a, b, 0.9)


# ------------------------------------------------------------------ batches

def test_samples_to_batch_shapes_and_scaling(tiles):
    images, maps, labels = samples_to_batch(tiles[:3])
    assert images.shape == (3, 3, SIZE, SIZE)
    assert maps.shape == (3, 3, SIZE, SIZE)
    assert labels.shape == (3, SIZE, SIZE) and labels.dtype == torch.long
    assert 0.0 <= float(images.min()) and float(images.max()) <= 1.0


def test_samples_to_batch_without_labels(tiles):
    stripped = [Sample(image=s.image, map=s.map, label=None, tile_id=s.tile_id)
                for s in tiles[:2]]
    _, _, labels = samples_to_batch(stripped)
    assert labels is None


# --------------------------------------------------------------- train_step

def test_train_step_requires_labeled_tiles(tiles):
    state = build_state(tiny_network_config(SIZE), quick_cfg())
    with pytest.raises(ValueError):
        train_step(state, [], tiles[:2], quick_cfg())


def test_train_step_advances_and_reports_finite_losses(tiles):
    cfg = quick_cfg()
    state = build_state(tiny_network_config(SIZE), cfg)
    bundle = train_step(state, tiles[:2], tiles[2:4], cfg, lr=0.01)
    assert state.step == 1
    vals = bundle.floats()
    assert all(math.isfinite(v) for v in vals.values())
    assert vals["loss_sup"] > 0.0
    assert abs(vals["loss_total"] - (vals["loss_sup"] + 0.7 * vals["loss_unsup"]
                                     + 0.2 * vals["loss_ctr"])) < 1e-5


def test_teacher_moves_toward_student_after_step(tiles):
    cfg = quick_cfg()
    state = build_state(tiny_network_config(SIZE), cfg)
    train_step(state, tiles[:2], tiles[2:4], cfg, lr=0.01)
    diffs = [float((t - s.detach()).abs().max()) for (_, t), (_, s)
             in zip(state.teacher.named_parameters(),
                    state.student.named_parameters())]
    assert max(diffs) > 0.0  # teacher lags the student
    assert_teacher_frozen(state)


def test_supervised_degenerate_step_matches_reference_loop(tiles):
    """With augmentation and both extra losses off, train_step must reduce to
    plain supervised SGD; compare against an independently written loop."""
    net_cfg = tiny_network_config(SIZE)
    cfg = quick_cfg(alpha_unsup=0.0, alpha_ctr=0.0, ema_decay=0.9)
    state = build_state(net_cfg, cfg)

    ref_model = build_model(net_cfg, seed=cfg.seed)
    ref_opt = torch.optim.SGD(ref_model.parameters(), lr=cfg.lr0,
                              momentum=cfg.momentum,
                              weight_decay=cfg.weight_decay)
    batches = [tiles[:2], tiles[2:4], tiles[4:6]]
    for batch in batches:
        train_step(state, batch, [], cfg, lr=cfg.lr0)

        imgs, maps, labels = samples_to_batch(batch)
        ref_model.train()
        probs = torch.softmax(ref_model(imgs, maps).logits, dim=1)
        loss = loss_sup(probs[:, 1], labels)
        ref_opt.zero_grad(set_to_none=True)
        loss.backward()
        ref_opt.step()

    for (k, v), (k2, v2) in zip(state.student.state_dict().items(),
                                ref_model.state_dict().items()):
        assert k == k2
        assert torch.allclose(v, v2, atol=1e-6, rtol=0.0), k


def test_unsup_loss_is_zero_without_unlabeled(tiles):
    cfg = quick_cfg()
    state = build_state(tiny_network_config(SIZE), cfg)
    bundle = train_step(state, tiles[:2], [], cfg, lr=0.01)
    assert float(bundle.unsup) == 0.0
    assert float(bundle.ctr.detach()) != 0.0  # labeled-only contrast still applies


def test_ssl_scale_multiplies_unlabeled_weights(tiles):
    cfg = quick_cfg()
    state = build_state(tiny_network_config(SIZE), cfg)
    bundle = train_step(state, tiles[:2], tiles[2:4], cfg, lr=0.01,
                        ssl_scale=0.5)
    vals = bundle.floats()
    assert bundle.alpha_unsup == pytest.approx(0.35)
    assert bundle.alpha_ctr == pytest.approx(0.1)
    assert vals["loss_total"] == pytest.approx(
        vals["loss_sup"] + 0.35 * vals["loss_unsup"] + 0.1 * vals["loss_ctr"],
        abs=1e-5)


def test_ssl_scale_zero_is_supervised_only(tiles):
    cfg = quick_cfg()
    state = build_state(tiny_network_config(SIZE), cfg)
    bundle = train_step(state, tiles[:2], tiles[2:4], cfg, lr=0.01,
                        ssl_scale=0.0)
    assert float(bundle.unsup) == 0.0
    assert float(bundle.ctr) == 0.0


def test_warmup_frac_validation():
    with pytest.raises(ValueError):
        TrainConfig(unsup_warmup_frac=1.5).validate()
    with pytest.raises(ValueError):
        TrainConfig(unsup_warmup_frac=-0.1).validate()


# ---------------------------------------------------------------------- fit

def make_split(tiles, n_labeled):
    return DatasetSplit(labeled=tiles[:n_labeled], unlabeled=tiles[n_labeled:],
                        lab_ratio=n_labeled / len(tiles), seed=0)


def test_fit_history_logs_and_checkpoints(tiles, tmp_path):
    cfg = quick_cfg(epochs=2)
    result = fit(make_split(tiles, 4), tiny_network_config(SIZE), cfg,
                 val_samples=tiles[4:], out_dir=tmp_path)
    assert len(result.history) == 2
    for rec in result.history:
        for key in ("epoch", "loss_sup", "loss_unsup", "loss_ctr", "val_iou",
                    "lr"):
            assert key in rec
        assert math.isfinite(rec["loss_sup"])
    assert (tmp_path / "best.pt").exists()
    assert (tmp_path / "last.pt").exists()
    lines = [json.loads(ln) for ln in
             (tmp_path / "metrics.ndjson").read_text().splitlines()]
    assert [ln["epoch"] for ln in lines] == [0, 1]
    assert result.best_iou == max(r["val_iou"] for r in result.history)
    assert result.state.step == 2 * math.ceil(4 / cfg.batch_labeled)


def test_fit_respects_max_steps(tiles):
    cfg = quick_cfg(epochs=50, max_steps=3)
    result = fit(make_split(tiles, 4), tiny_network_config(SIZE), cfg,
                 val_samples=tiles[4:])
    assert result.state.step == 3


def test_fit_is_deterministic(tiles):
    cfg = quick_cfg(epochs=2, augment=True)
    split = make_split(tiles, 4)
    a = fit(split, tiny_network_config(SIZE), cfg, val_samples=tiles[4:])
    b = fit(split, tiny_network_config(SIZE), cfg, val_samples=tiles[4:])
    assert a.history == b.history
    for k, v in a.state.student.state_dict().items():
        assert torch.equal(v, b.state.student.state_dict()[k]), k


def test_supervised_only_never_touches_unlabeled_pool(tiles):
    # corrupt unlabeled tiles would crash any code path that batches them
    junk = np.zeros((1, 1, 3), dtype=np.uint8)
    poisoned = [Sample(image=junk, map=junk, label=None, tile_id=f"junk{i}")
                for i in range(4)]
    split = DatasetSplit(labeled=tiles[:4], unlabeled=poisoned,
                         lab_ratio=0.5, seed=0)
    cfg = quick_cfg(alpha_unsup=0.0, alpha_ctr=0.0, epochs=1)
    result = fit(split, tiny_network_config(SIZE), cfg, val_samples=tiles[4:])
    assert len(result.history) == 1


def test_fit_validates_inputs(tiles):
    split = make_split(tiles, 4)
    with pytest.raises(ValueError):
        fit(split, tiny_network_config(SIZE), quick_cfg(), val_samples=[])
    unlabeled_val = [Sample(image=s.image, map=s.map, label=None,
                            tile_id=s.tile_id) for s in tiles[4:]]
    with pytest.raises(ValueError):
        fit(split, tiny_network_config(SIZE), quick_cfg(),
            val_samples=unlabeled_val)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_loss_history_finite_across_seeds(tiles, seed):
    cfg = quick_cfg(epochs=1, seed=seed, augment=True)
    result = fit(make_split(tiles, 4), tiny_network_config(SIZE), cfg,
                 val_samples=tiles[4:])
    for rec in result.history:
        assert all(math.isfinite(rec[k]) for k in
                   ("loss_sup", "loss_unsup", "loss_ctr", "val_iou"))


def test_evaluate_model_aggregates_pixels(tiles):
    model = build_model(tiny_network_config(SIZE), seed=30)
    out = evaluate_model(model, tiles[:3])
    assert out["n_pixels"] == 3 * SIZE * SIZE
    assert 0.0 <= out["iou_road"] <= 1.0
    assert 0.0 <= out["miou"] <= 1.0
