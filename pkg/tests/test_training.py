import json

import numpy as np
import pytest

from freqest import io
from freqest.nets import CounterConfig, FRNetConfig, FrequencyRepresentationNet, fr_forward
from freqest.signal import GeneratorConfig, Grid, SinusoidMixture, generate_dataset, ground_truth_fr, synthesize
from freqest.training import (
    TrainConfig,
    TrainingData,
    TrainingDiverged,
    _FRTrainer,
    epoch_batches,
    train_counter,
    train_fr,
)

GEN = GeneratorConfig(m_max=3, sigma_range=(0, 0.2), seed=3)
SMALL = FRNetConfig(conv_layers=1, channels=4, conv_channels=4)
SMALL_COUNTER = CounterConfig(conv_layers=1, conv_filters=4, m_max=3)


def cfg(**kw):
    base = dict(n_signals=40, epochs=2, batch_size=8, lr=1e-3, sigma_range=(0, 0.2), seed=5)
    base.update(kw)
    return TrainConfig(**base)


def initial_state(net_cfg, seed):
    return {k: v.copy() for k, v in FrequencyRepresentationNet(net_cfg, seed=seed).state_dict().items()}


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(n_signals=10, batch_size=20)
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)
    assert TrainConfig().batch_size == 256 and TrainConfig().lr == 3e-4


def test_lr_zero_keeps_weights_bit_for_bit():
    bundle = train_fr(cfg(lr=0.0, epochs=1, val_fraction=0.0), GEN, SMALL)
    init = initial_state(SMALL, 5)
    for name, p in bundle.model.named_parameters():
        assert np.array_equal(p.data, init[name]), name


def test_seeded_runs_repeat_exactly(tmp_path):
    a = train_fr(cfg(), GEN, SMALL, log_path=tmp_path / "a.jsonl")
    b = train_fr(cfg(), GEN, SMALL, log_path=tmp_path / "b.jsonl")
    assert a.metadata["train_losses"] == b.metadata["train_losses"]
    for (k, va), vb in zip(a.model.state_dict().items(), b.model.state_dict().values()):
        assert np.array_equal(va, vb), k
    rows = [json.loads(line) for line in (tmp_path / "a.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [0, 1]
    assert set(rows[0]) >= {"epoch", "train_loss", "val_loss", "wall_time"}


def test_noise_is_fresh_each_epoch_and_fixed_for_validation():
    c = cfg()
    data = TrainingData.build(c, GEN, Grid(1000), 0.3 / 50)
    train_idx = np.arange(5)
    hashes = {hash(data.noisy(c, train_idx, e).tobytes()) for e in range(4)}
    assert len(hashes) == 4
    assert np.array_equal(data.noisy(c, train_idx, 2), data.noisy(c, train_idx, 2))
    val_idx = np.arange(data.n_train, 40)
    assert np.array_equal(data.noisy(c, val_idx, 0), data.noisy(c, val_idx, 7))
    assert data.n_train == 38


def test_augmentation_moves_signal_and_target_together():
    c = cfg(augment=True, sigma_range=(0, 0))
    records = generate_dataset(GEN, 40, sigma=0.0)
    data = TrainingData.build(c, GEN, Grid(1000), 0.3 / 50, records)
    idx = np.arange(6)
    shifts = data.shifts(c, idx, 3)
    assert np.all(shifts[:, 0] != 0)
    noisy = data.noisy(c, idx, 3, shifts=shifts)
    targets = data.shifted_targets(idx, shifts)
    for row, i in enumerate(idx):
        delta, phase = shifts[row]
        truth = records[i].truth
        moved = SinusoidMixture(np.mod(truth.frequencies + delta, 1.0), truth.amplitudes * np.exp(1j * phase))
        np.testing.assert_allclose(noisy[row], synthesize(moved, 50), atol=1e-9)
        np.testing.assert_allclose(targets[row], ground_truth_fr(moved, Grid(1000), 0.3 / 50).values, atol=1e-12)
    assert not np.array_equal(shifts, data.shifts(c, idx, 4))


def test_augmentation_off_and_validation_rows_untouched():
    c = cfg(augment=True)
    data = TrainingData.build(c, GEN, Grid(1000), 0.3 / 50)
    val_idx = np.arange(data.n_train, 40)
    assert not data.shifts(c, val_idx, 5).any()
    plain = cfg()
    assert not data.shifts(plain, np.arange(10), 5).any()
    np.testing.assert_array_equal(data.shifted_targets(np.arange(3), np.zeros((3, 2))), data.targets[:3])


def test_augmentation_respects_interval_without_wraparound():
    gen = GeneratorConfig(m_max=3, seed=3, circular=False)
    c = cfg(augment=True)
    data = TrainingData.build(c, gen, Grid(1000), 0.3 / 50)
    idx = np.arange(data.n_train)
    for e in range(5):
        shifts = data.shifts(c, idx, e)
        for row, i in enumerate(idx):
            moved = data.frequencies[i] + shifts[row, 0]
            assert moved.min() >= 0 and moved.max() < 1


def test_augmented_runs_repeat_exactly():
    a = train_fr(cfg(augment=True), GEN, SMALL)
    b = train_fr(cfg(augment=True), GEN, SMALL)
    assert a.metadata["train_losses"] == b.metadata["train_losses"]
    assert a.metadata["train_losses"] != train_fr(cfg(), GEN, SMALL).metadata["train_losses"]


def test_batches_partition_training_set():
    c = cfg()
    batches = epoch_batches(c, 38, 0)
    assert sorted(np.concatenate(batches).tolist()) == list(range(38))
    assert not np.array_equal(np.concatenate(batches), np.concatenate(epoch_batches(c, 38, 1)))


def test_one_step_changes_almost_all_parameters():
    c = cfg(epochs=1, n_signals=16, batch_size=16, val_fraction=0.0)
    net_cfg = FRNetConfig(conv_layers=2)
    init = initial_state(net_cfg, 5)
    bundle = train_fr(c, GEN, net_cfg)
    changed = total = 0
    for name, p in bundle.model.named_parameters():
        changed += int(np.sum(p.data != init[name]))
        total += p.data.size
    assert changed / total >= 0.99


def test_divergence_guard():
    c = cfg(epochs=1)
    data = TrainingData.build(c, GEN, Grid(1000), 0.3 / 50)
    data.targets[:] = np.inf
    trainer = _FRTrainer(c, FrequencyRepresentationNet(SMALL, seed=5), data)
    with pytest.raises(TrainingDiverged):
        trainer.fit()


def test_resume_retraces_trajectory(tmp_path):
    full = train_fr(cfg(epochs=3), GEN, SMALL)
    ck = tmp_path / "state.sfrq"
    train_fr(cfg(epochs=2), GEN, SMALL, checkpoint_path=ck)
    resumed = train_fr(cfg(epochs=3), GEN, SMALL, resume_from=ck)
    assert resumed.metadata["train_losses"] == full.metadata["train_losses"]
    assert resumed.metadata["best_epoch"] == full.metadata["best_epoch"]
    for (k, va), vb in zip(full.model.state_dict().items(), resumed.model.state_dict().values()):
        assert np.array_equal(va, vb), k


def test_resume_rejects_other_architecture(tmp_path):
    ck = tmp_path / "state.sfrq"
    train_fr(cfg(epochs=1), GEN, SMALL, checkpoint_path=ck)
    with pytest.raises(io.IntegrityError):
        train_fr(cfg(epochs=2), GEN, FRNetConfig(conv_layers=2, channels=4, conv_channels=4), resume_from=ck)


def test_checkpoint_roundtrip_reproduces_validation_loss(tmp_path):
    c = cfg()
    bundle = train_fr(c, GEN, SMALL)
    path = tmp_path / "m.sfrq"
    io.save_model(path, bundle)
    loaded = io.load_model(path)
    data = TrainingData.build(c, GEN, Grid(1000), SMALL.kernel_std)
    val = lambda m: _FRTrainer(c, m, data).validate()  # noqa: E731
    assert val(bundle.model) == val(loaded.model)
    assert val(loaded.model) == bundle.metadata["best_val_loss"]


def test_records_drive_training():
    from freqest.signal import generate_dataset

    recs = generate_dataset(GEN, 24)
    a = train_fr(cfg(n_signals=999, epochs=1), GEN, SMALL, records=recs)
    assert a.metadata["train_config"]["n_signals"] == 24


def test_counter_training_keeps_fr_frozen():
    fr = train_fr(cfg(epochs=1), GEN, SMALL)
    before = {k: v.copy() for k, v in fr.model.state_dict().items()}
    grads_before = [p.grad.copy() for p in fr.model.parameters()]
    counter = train_counter(cfg(epochs=2), fr, GEN, SMALL_COUNTER)
    for k, v in fr.model.state_dict().items():
        assert np.array_equal(v, before[k]), k
    for g0, p in zip(grads_before, fr.model.parameters()):
        assert np.array_equal(p.grad, g0)
    assert counter.model.cfg.m_max == 3
    assert len(counter.metadata["train_losses"]) == 2


def test_counter_lr_zero_unchanged():
    from freqest.nets import FrequencyCounterNet

    fr = train_fr(cfg(epochs=1), GEN, SMALL)
    counter = train_counter(cfg(epochs=1, lr=0.0, seed=9), fr, GEN, SMALL_COUNTER)
    init = FrequencyCounterNet(SMALL_COUNTER, seed=9)
    for (name, p), q in zip(counter.model.named_parameters(), init.parameters()):
        assert np.array_equal(p.data, q.data), name
