import copy

import numpy as np
import pandas as pd
import pytest
import torch

from phenom.core.exceptions import DimensionMismatchError, InvalidConfigError, InvalidLabelError, TrainingDivergedError
from phenom.imaging.synthetic import SynthConfig, generate_synthetic_dataset
from phenom.models.ca_mae import build_ca_mae
from phenom.models.checkpoint import load_checkpoint, save_checkpoint
from phenom.models.classifier import build_classifier
from phenom.models.mae import build_mae
from phenom.training.config import TrainConfig
from phenom.training.datasets import (
    CropDataset,
    EpochSampler,
    WeightedLabelSampler,
    label_index,
    split_validation,
    step_mask_seeds,
)
from phenom.training.optimizers import Lion, optimizer_step
from phenom.training.schedule import lr_at
from phenom.training.trainer import LossCurve, Trainer, fit


# --------------------------------------------------
# Schedule
# --------------------------------------------------
def test_schedule_landmarks():
    config = TrainConfig(max_lr=1e-3, warmup_fraction=0.1)
    assert lr_at(0, 100, config) == 0.0
    assert lr_at(5, 100, config) == pytest.approx(5e-4)
    assert lr_at(10, 100, config) == pytest.approx(1e-3)
    assert lr_at(55, 100, config) == pytest.approx(5e-4)
    assert lr_at(100, 100, config) == pytest.approx(0.0, abs=1e-15)


def test_schedule_is_monotone_after_warmup():
    config = TrainConfig(max_lr=2e-3, warmup_fraction=0.2)
    lrs = [lr_at(s, 50, config) for s in range(51)]
    assert all(a <= b for a, b in zip(lrs[:10], lrs[1:11]))
    assert all(a >= b for a, b in zip(lrs[10:], lrs[11:]))
    assert max(lrs) == pytest.approx(2e-3)


def test_schedule_rejects_out_of_range_step():
    with pytest.raises(InvalidConfigError):
        lr_at(11, 10, TrainConfig())


# --------------------------------------------------
# Optimizers
# --------------------------------------------------
def test_zero_gradient_leaves_params_unchanged():
    config = TrainConfig(optimizer="LION", weight_decay=0.0, max_lr=0.1)
    params = [np.array([1.0, -2.0]), np.ones((2, 2))]
    new, state = optimizer_step(params, [np.zeros(2), np.zeros((2, 2))], None, config)
    for p, q in zip(params, new):
        np.testing.assert_array_equal(p, q)
    assert state["step"] == 1


def test_lion_moves_by_learning_rate():
    config = TrainConfig(optimizer="LION", weight_decay=0.0, max_lr=0.1)
    new, _ = optimizer_step([np.array([1.0, 1.0])], [np.array([0.5, -3.0])], None, config)
    np.testing.assert_allclose(new[0], [0.9, 1.1])


def test_decoupled_weight_decay():
    config = TrainConfig(optimizer="LION", weight_decay=0.1, max_lr=0.1)
    new, _ = optimizer_step([np.array([2.0])], [np.array([0.0])], None, config)
    np.testing.assert_allclose(new[0], [2.0 * (1 - 0.01)])


def test_optimizer_step_does_not_mutate_inputs():
    config = TrainConfig(optimizer="ADAMW")
    params = [np.array([1.0, 2.0])]
    optimizer_step(params, [np.array([0.3, 0.3])], None, config)
    np.testing.assert_array_equal(params[0], [1.0, 2.0])


def test_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        optimizer_step([np.zeros(3)], [np.zeros(2)], None, TrainConfig())


def _reference_trajectory(optimizer_cls, kwargs, params, grads_seq):
    tensors = [torch.tensor(p, requires_grad=True) for p in params]
    opt = optimizer_cls(tensors, **kwargs)
    for grads in grads_seq:
        for t, g in zip(tensors, grads):
            t.grad = torch.tensor(g)
        opt.step()
    return [t.detach().numpy() for t in tensors]


@pytest.mark.parametrize("kind", ["ADAMW", "LION"])
def test_functional_step_matches_torch_optimizer(kind):
    rng = np.random.default_rng(0)
    params = [rng.normal(size=(3, 4)), rng.normal(size=5)]
    grads_seq = [[rng.normal(size=p.shape) for p in params] for _ in range(4)]
    config = TrainConfig(optimizer=kind, max_lr=1e-2, weight_decay=0.05, beta1=0.9, beta2=0.95)
    if kind == "ADAMW":
        expected = _reference_trajectory(torch.optim.AdamW, dict(lr=1e-2, betas=(0.9, 0.95), weight_decay=0.05,
                                                                 eps=config.eps), params, grads_seq)
    else:
        expected = _reference_trajectory(Lion, dict(lr=1e-2, betas=(0.9, 0.95), weight_decay=0.05),
                                         params, grads_seq)
    current, state = params, None
    for grads in grads_seq:
        current, state = optimizer_step(current, grads, state, config)
    for a, b in zip(current, expected):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


# --------------------------------------------------
# Datasets and samplers
# --------------------------------------------------
def test_crop_dataset_items_are_keyed_on_epoch_and_index(synth_images):
    dataset = CropDataset(synth_images, 16, seed=1)
    a, _ = dataset[3]
    b, _ = CropDataset(synth_images, 16, seed=1)[3]
    assert torch.equal(a, b)
    dataset.set_epoch(1)
    assert not torch.equal(dataset[3][0], a)


def test_epoch_sampler_is_a_permutation():
    sampler = EpochSampler(10, seed=2)
    first = list(sampler)
    sampler.set_epoch(1)
    second = list(sampler)
    assert sorted(first) == sorted(second) == list(range(10))
    assert first != second


def test_weighted_sampler_balances_labels():
    labels = [0] * 30 + [1] * 10
    sampler = WeightedLabelSampler(labels, seed=0)
    draws = []
    for epoch in range(100):
        sampler.set_epoch(epoch)
        draws.extend(labels[i] for i in sampler)
    assert abs(np.mean(draws) - 0.5) < 0.03


def test_validation_split_is_deterministic(synth_images):
    train_a, val_a = split_validation(synth_images, 0.25, seed=3)
    train_b, val_b = split_validation(synth_images, 0.25, seed=3)
    assert [im.well_id for im in val_a] == [im.well_id for im in val_b]
    assert len(val_a) == round(0.25 * len(synth_images))
    assert len(train_a) + len(val_a) == len(synth_images)


# --------------------------------------------------
# Training loop
# --------------------------------------------------
def test_one_epoch_with_full_batch_is_one_step(small_config, synth_images):
    config = TrainConfig(batch_size=len(synth_images), epochs=1, seed=0)
    _, curve = fit(synth_images, build_mae(small_config), config)
    assert curve.steps == [0]
    assert curve.lrs == [0.0]


def test_training_is_deterministic(small_config, synth_images, train_config):
    _, a = fit(synth_images, build_mae(small_config, seed=0), train_config)
    _, b = fit(synth_images, build_mae(small_config, seed=0), train_config)
    assert a.losses == b.losses
    assert a.steps == list(range(2 * 5))


def _first_batch(images, crop_size, config):
    """The step-0 batch of a single-batch epoch, rebuilt the way ``fit`` draws it."""
    labels = label_index(images)
    dataset = CropDataset(images, crop_size, seed=config.seed, crops_per_image=config.crops_per_image,
                          augment=config.augment, labels=labels)
    sampler = EpochSampler(len(dataset), seed=config.seed)
    dataset.set_epoch(0)
    sampler.set_epoch(0)
    items = [dataset[i] for i in sampler]
    return torch.stack([x for x, _ in items]), torch.tensor([y for _, y in items])


def test_step_zero_loss_uses_initial_weights(small_config, synth_images):
    config = TrainConfig(batch_size=len(synth_images), epochs=1, warmup_fraction=0.0, seed=2)
    model = build_mae(small_config, seed=4)
    initial = copy.deepcopy(model)
    _, curve = fit(synth_images, model, config)

    imgs, labels = _first_batch(synth_images, small_config.img_size, config)
    torch.manual_seed(config.seed)
    with torch.no_grad():
        expected = Trainer(initial, config).batch_loss(imgs, labels, step_mask_seeds(config.seed, 0, len(imgs)))
    assert curve.losses[0] == pytest.approx(float(expected), rel=1e-6)
    assert not torch.equal(model.decoder_pred.weight, initial.decoder_pred.weight)


@pytest.mark.parametrize("optimizer", ["LION", "ADAMW"])
def test_every_parameter_with_a_gradient_moves(small_config, synth_images, optimizer):
    config = TrainConfig(optimizer=optimizer, batch_size=len(synth_images), epochs=1, warmup_fraction=0.0, seed=0)
    model = build_mae(small_config, seed=1)

    reference = copy.deepcopy(model)
    imgs, labels = _first_batch(synth_images, small_config.img_size, config)
    torch.manual_seed(config.seed)
    Trainer(reference, config).batch_loss(imgs, labels, step_mask_seeds(config.seed, 0, len(imgs))).backward()
    live = [name for name, p in reference.named_parameters() if p.grad is not None and p.grad.abs().sum() > 0]
    assert "encoder.patch_embed.weight" in live
    assert "decoder_pred.weight" in live

    before = {name: p.detach().clone() for name, p in model.named_parameters()}
    fit(synth_images, model, config)
    after = dict(model.named_parameters())
    frozen = [name for name in live if torch.equal(after[name].detach(), before[name])]
    assert frozen == []


@pytest.mark.slow
def test_tiny_mae_halves_its_loss(small_config):
    synth = SynthConfig(n_genes=30, n_replicates_per_gene=2, n_plates=1, n_experiments=1,
                        n_controls_per_plate=4, image_size=32, seed=0)
    images, _ = generate_synthetic_dataset(synth)
    config = TrainConfig(batch_size=32, epochs=30, max_lr=1e-3, crops_per_image=8, seed=0)
    assert len(images) * config.crops_per_image == 512
    _, curve = fit(images, build_mae(small_config, seed=0), config)
    assert len(curve) == 30 * 16
    assert curve.losses[-1] <= 0.5 * curve.losses[0]



def test_resume_matches_uninterrupted_run(tmp_path, small_config, synth_images, train_config):
    _, full = fit(synth_images, build_mae(small_config, seed=0), train_config, output_dir=tmp_path / "full")
    first_epoch = tmp_path / "full" / "checkpoints" / "epoch_001.pt"
    assert first_epoch.exists()

    trainer = Trainer(build_mae(small_config, seed=99), train_config, tmp_path / "resumed")
    _, resumed = trainer.fit(synth_images, resume_from=first_epoch)
    assert resumed.steps == full.steps
    np.testing.assert_allclose(resumed.losses, full.losses, rtol=0, atol=1e-6)
    assert trainer.last_checkpoint.name == "epoch_002.pt"


def test_ca_mae_trains_on_three_channels(small_config, synth_images, train_config):
    images = [im.select_channels([0, 2, 4]) for im in synth_images]
    model = build_ca_mae(small_config.model_copy(update={"in_chans": 3}))
    _, curve = fit(images, model, train_config.model_copy(update={"objective": "CA_MAE"}))
    assert len(curve) == 10
    assert all(np.isfinite(curve.losses))


def test_nan_pixels_stop_training(small_config, make_well):
    pixels = np.full((16, 16, 6), np.nan, dtype=np.float32)
    images = [make_well(pixels, well_id=f"w{i}") for i in range(2)]
    with pytest.raises(TrainingDivergedError):
        fit(images, build_mae(small_config), TrainConfig(batch_size=2, epochs=1))


def test_objective_must_match_model(small_config):
    with pytest.raises(InvalidConfigError):
        Trainer(build_mae(small_config), TrainConfig(objective="WSL"))


def test_classifier_needs_one_class_per_perturbation(small_config, synth_images):
    model = build_classifier(small_config, n_classes=2)
    with pytest.raises(InvalidLabelError):
        fit(synth_images, model, TrainConfig(objective="WSL", alpha=None, epochs=1))


def test_validation_loss_is_recorded(small_config, synth_images):
    config = TrainConfig(batch_size=4, epochs=2, val_fraction=0.25, seed=1)
    _, curve = fit(synth_images, build_mae(small_config), config)
    assert sorted(curve.val_losses) == [0, 1]
    assert all(np.isfinite(v) for v in curve.val_losses.values())


def test_early_stopping_state_survives_resume(tmp_path, small_config, synth_images):
    config = TrainConfig(batch_size=4, epochs=3, val_fraction=0.25, seed=1, early_stopping_patience=5)
    _, full = fit(synth_images, build_mae(small_config, seed=0), config, output_dir=tmp_path / "full")
    checkpoints = tmp_path / "full" / "checkpoints"
    assert load_checkpoint(checkpoints / "epoch_001.pt").early_stopping == {
        "best_val": full.val_losses[0], "stale_epochs": 0,
    }
    saved = load_checkpoint(checkpoints / "epoch_003.pt").early_stopping
    assert saved["best_val"] == min(full.val_losses.values())

    trainer = Trainer(build_mae(small_config, seed=99), config, tmp_path / "resumed")
    trainer.fit(synth_images, resume_from=checkpoints / "epoch_003.pt")
    assert trainer.best_val == saved["best_val"]
    assert trainer.stale_epochs == saved["stale_epochs"]



# --------------------------------------------------
# Loss curves and checkpoints
# --------------------------------------------------
def test_loss_curve_csv(tmp_path):
    curve = LossCurve()
    curve.append(0, 1.5, 0.0)
    curve.append(1, 1.25, 1e-3)
    curve.val_losses[0] = 1.4
    path = curve.to_csv(tmp_path / "loss_curve.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["step", "loss", "lr"]
    assert frame["loss"].tolist() == [1.5, 1.25]
    assert pd.read_csv(tmp_path / "loss_curve_val.csv")["val_loss"].tolist() == [1.4]


def test_loss_curve_steps_must_increase():
    curve = LossCurve()
    curve.append(3, 1.0, 0.0)
    with pytest.raises(ValueError):
        curve.append(3, 1.0, 0.0)


@pytest.mark.parametrize("objective", ["MAE", "CA_MAE", "WSL"])
def test_checkpoint_round_trip_is_exact(tmp_path, small_config, objective):
    model = {
        "MAE": lambda: build_mae(small_config, seed=5),
        "CA_MAE": lambda: build_ca_mae(small_config, seed=5),
        "WSL": lambda: build_classifier(small_config, n_classes=4, seed=5),
    }[objective]()
    path = save_checkpoint(tmp_path / "model.pt", model, step=7, epoch=2, labels={"a": 0})
    restored = load_checkpoint(path)
    assert restored.objective == objective
    assert restored.channel_agnostic == (objective == "CA_MAE")
    assert (restored.step, restored.epoch, restored.labels) == (7, 2, {"a": 0})
    assert restored.model_config == small_config
    original = model.state_dict()
    for key, value in restored.model.state_dict().items():
        assert torch.equal(value, original[key]), key
