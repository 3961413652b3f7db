import math

import numpy as np
import pytest

from miaprune import admm, trainer
from miaprune.admm import PruneSpec
from miaprune.data import synth_overfit_toy
from miaprune.errors import ConfigError, NumericError
from miaprune.metrics import GainReport
from miaprune.nn import mlp
from miaprune.trainer import ExperimentData, RunRecord, TrainConfig

from conftest import numeric_grad, rel_error
from test_attack import constant_attacker, small_attacker


def toy_data(seed=0, n=64, holdout=0):
    parts = synth_overfit_toy(n, n, 5, 3, seed, separation=2.0, n_holdout=holdout)
    return ExperimentData.build(parts[0], parts[1], seed, parts[2] if holdout else None)


def quick(**kw):
    base = dict(hidden=(8,), epochs=2, pretrain_epochs=1, admm_epochs=1, batch_size=16,
                eval_attacker_epochs=2, attacker_batch=16, keep_grid=[1.0])
    base.update(kw)
    return TrainConfig(**base)


def batch(seed, k=3, b=5, d=4):
    rng = np.random.default_rng(seed)
    return ((rng.normal(size=(b, d)), rng.integers(0, k, b)), (rng.normal(size=(b + 1, d)), rng.integers(0, k, b + 1)))


def test_gamma_zero_is_plain_cross_entropy_bitwise():
    (x, y), nb = batch(0)
    a = mlp((4, 6, 3), np.random.default_rng(1))
    b = mlp((4, 6, 3), np.random.default_rng(1))
    la, ga = trainer.minmax_objective(a, small_attacker(3, 0), (x, y), 0.0, nb)
    from miaprune.nn import cross_entropy
    lb = cross_entropy(b.forward(x), y)
    gb = b.backward(y)
    assert la == lb
    assert all(np.array_equal(p, q) for p, q in zip(ga, gb))


def test_constant_attacker_adds_minus_log4_and_no_gradient():
    (x, y), nb = batch(1)
    net = mlp((4, 6, 3), np.random.default_rng(2))
    l0, g0 = trainer.minmax_objective(net, None, (x, y), 0.0)
    g0 = [g.copy() for g in g0]
    l1, g1 = trainer.minmax_objective(net, constant_attacker(3), (x, y), 1.0, nb)
    assert l1 == pytest.approx(l0 - math.log(4), abs=1e-12)
    for p, q in zip(g0, g1):
        np.testing.assert_allclose(p, q, atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_gamma_term_gradient_matches_finite_differences(seed):
    (x, y), nb = batch(seed)
    net = mlp((4, 6, 3), np.random.default_rng(seed + 10))
    fa = small_attacker(3, seed)
    _, grads = trainer.minmax_objective(net, fa, (x, y), 0.7, nb)
    grads = [g.copy() for g in grads]
    f = lambda: trainer.minmax_objective(net, fa, (x, y), 0.7, nb)[0]
    for p, g in zip(net.params(), grads):
        assert rel_error(g, numeric_grad(f, p)) < 1e-4


def test_negative_gamma_rejected():
    (x, y), nb = batch(0)
    with pytest.raises(ConfigError):
        trainer.minmax_objective(mlp((4, 3), np.random.default_rng(0)), None, (x, y), -1.0)
    with pytest.raises(ConfigError):
        TrainConfig(gamma=-0.1)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(keep_grid=[])
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(prune_mode="sometimes")


def test_profiles():
    d, p = TrainConfig.desk(), TrainConfig.paper()
    assert (d.pretrain_epochs, d.epochs, d.batch_size) == (20, 30, 64)
    assert (p.pretrain_epochs, p.epochs, p.batch_size) == (200, 300, 64)
    assert p.attacker_lr == 1e-5 and p.eval_attacker_epochs == 100


def test_all_mechanisms_off_equals_plain_training():
    data = toy_data()
    cfg = quick(admm_lambda=0.0, epochs=3)
    pruned = trainer.run_single(cfg, data, PruneSpec(keep_ratios=[1.0, 1.0]), evaluate=False)
    plain = trainer.run_single(cfg, data, None, evaluate=False)
    for p, q in zip(pruned.net.params(), plain.net.params()):
        assert np.array_equal(p, q)


def test_one_epoch_sparsity_matches_spec():
    data = toy_data()
    spec = PruneSpec(keep_ratios=[0.5, 0.25])
    cfg = quick(epochs=1, admm_epochs=0)
    rec = trainer.run_single(cfg, data, spec, evaluate=False)
    assert rec.sparsity.kept == spec.counts_for(rec.net)


@pytest.mark.parametrize("mode", ["warm", "per_epoch"])
def test_cardinality_holds_after_every_prune_epoch(mode):
    data = toy_data()
    spec = PruneSpec(keep_ratios=[0.4, 0.2])
    run = trainer.Run(quick(prune_mode=mode, admm_epochs=2, gamma=1.0), data, spec)
    for _ in range(5):
        trainer.train_epoch(run)
        if run.pruned:
            for layer, n in zip(run.net.dense_layers(), spec.counts_for(run.net)):
                assert np.count_nonzero(layer.W) <= n
        if run.admm_state is not None:
            for Z, n in zip(run.admm_state.Z, run.admm_state.n):
                assert np.count_nonzero(Z) <= n


def test_defender_batches_avoid_attacker_batch(monkeypatch):
    data = toy_data()
    seen = {}
    real = trainer.train_attack

    def spy(*a, **kw):
        hist = real(*a, **kw)
        seen["S"] = set(data.in_loop.member_idx[hist.member_batches[-1]])
        return hist

    used = []
    real_step = admm.admm_w_step

    def step_spy(net, batch_, *a, **kw):
        x = batch_[0]
        rows = {int(i) for i in np.flatnonzero((data.train.features[:, None, :] == x[None]).all(axis=2).any(axis=1))}
        used.append(rows)
        return real_step(net, batch_, *a, **kw)

    monkeypatch.setattr(trainer, "train_attack", spy)
    monkeypatch.setattr(admm, "admm_w_step", step_spy)
    run = trainer.Run(quick(gamma=1.0), data, None)
    m = trainer.train_epoch(run)
    assert m.defender_overlap == 0
    assert seen["S"] and all(not (rows & seen["S"]) for rows in used)
    assert set().union(*used) == set(range(len(data.train))) - seen["S"]


def test_epoch_records_are_monotone():
    rec = trainer.run_single(quick(epochs=3), toy_data(), PruneSpec(keep_ratios=[0.5, 0.5]), evaluate=False)
    assert [m.epoch for m in rec.epochs] == [0, 1, 2]
    assert [m.phase for m in rec.epochs] == ["admm", "prune", "prune"]


def test_numeric_error_carries_epoch(monkeypatch):
    run = trainer.Run(quick(), toy_data(), None)

    def boom(*a, **kw):
        raise NumericError("non-finite loss nan")

    monkeypatch.setattr(admm, "admm_w_step", boom)
    with pytest.raises(NumericError, match="epoch 0"):
        trainer.train_epoch(run)


def test_same_seed_same_run():
    data = toy_data()
    a = trainer.run_single(quick(gamma=1.0), data, PruneSpec(keep_ratios=[0.5, 0.5]))
    b = trainer.run_single(quick(gamma=1.0), data, PruneSpec(keep_ratios=[0.5, 0.5]))
    assert a.final.gain == b.final.gain
    assert all(np.array_equal(p, q) for p, q in zip(a.net.params(), b.net.params()))


def test_evaluate_privacy_report_fields():
    r = trainer.run_single(quick(), toy_data(), None).final
    assert math.isfinite(r.gain) and 0 <= r.attack_accuracy <= 1
    assert 0 <= r.js_estimate <= math.log(2)
    assert r.accuracy_gap == pytest.approx(r.train_accuracy - r.test_accuracy, abs=1e-15)
    assert len(r.per_class_gap) == 3


def test_holdout_supplies_test_accuracy():
    data = toy_data(holdout=50)
    rec = trainer.run_single(quick(), data, None)
    from miaprune.nn import accuracy
    assert rec.final.test_accuracy == accuracy(rec.net, data.holdout.features, data.holdout.labels)


def _rec(label, gain, kept, status="ok"):
    from miaprune.admm import SparsityReport
    final = GainReport(gain, 0.5, 0.0, 0.0) if status == "ok" else None
    return RunRecord(label, final=final, sparsity=SparsityReport([kept], [100]), status=status)


def test_selection_is_argmin_gain_with_sparser_tie_break():
    recs = [_rec("a", -1.2, 100), _rec("b", -1.3, 50), _rec("c", -1.3, 20), _rec("d", -2.0, 5, "failed")]
    assert trainer.select_spec(recs) == 2
    assert trainer.select_spec([_rec("a", -1.0, 10)]) == 0


def test_single_point_grid_equals_single_run():
    data = toy_data()
    cfg = quick(keep_grid=[0.5])
    g = trainer.grid_search(cfg, data)
    r = trainer.run_single(cfg, data, cfg.spec_for(0.5, 2))
    assert g.chosen == 0 and g.best.final.gain == r.final.gain


def test_failed_grid_point_is_recorded_and_skipped(monkeypatch):
    data = toy_data()
    real = trainer.run_single

    def flaky(config, data_, spec, evaluate=True):
        if spec.keep_ratios[-1] == 0.5:
            raise NumericError("diverged")
        return real(config, data_, spec, evaluate)

    monkeypatch.setattr(trainer, "run_single", flaky)
    g = trainer.grid_search(quick(keep_grid=[1.0, 0.5]), data)
    assert [r.status for r in g.records] == ["ok", "failed"]
    assert g.chosen == 0 and "diverged" in g.records[1].error


def test_spec_for_vector_entry():
    cfg = quick()
    assert cfg.spec_for([0.9, 0.3], 2).keep_ratios == [0.9, 0.3]
    assert cfg.spec_for(0.1, 3).keep_ratios == [0.6, 0.1, 0.1]
