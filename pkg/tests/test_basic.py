import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advtrack import scenes
from advtrack import tracker as trk
from advtrack.basic import (BasicAttackConfig, BasicAttacker, anchor_frame, attacked_steps,
                            fgsm_step, iterative_attack)
from advtrack.runs import run_online


class Quadratic:
    """f(E) = 0.5 * ||E - c||^2 - offset."""

    def __init__(self, c, offset=1e9):
        self.c, self.offset, self.calls = c, offset, 0

    def value_and_grad(self, pert):
        self.calls += 1
        d = pert - self.c
        return 0.5 * float(np.sum(d * d)) - self.offset, d


class Constant:
    def __init__(self, value, grad):
        self.v, self.g = value, grad

    def value_and_grad(self, pert):
        return self.v, self.g


def test_defaults():
    assert BasicAttackConfig().step == 0.3
    assert BasicAttackConfig(method="fgsm").step == 1.0
    with pytest.raises(ValueError):
        BasicAttackConfig(method="pgd")
    with pytest.raises(ValueError):
        BasicAttackConfig(step=0.0)
    with pytest.raises(ValueError):
        BasicAttackConfig(iters_anchor=-1)


def test_fgsm_zero_gradient():
    region = np.full((4, 4, 3), 100.0)
    assert not fgsm_step(region, np.zeros_like(region)).any()


def test_fgsm_positive_gradient_gives_map_one():
    region = np.full((4, 4, 3), 100.0)
    pert = fgsm_step(region, np.ones_like(region), step=1.0)
    assert np.all(pert == -1.0)
    assert np.mean(np.abs(pert)) == 1.0


def test_fgsm_sign_matches_loop(rng):
    region = np.full((5, 5, 3), 128.0)
    g = rng.normal(size=region.shape)
    g[0, 0, 0] = 0.0
    pert = fgsm_step(region, g, step=1.0)
    for idx in np.ndindex(g.shape):
        s = 1 if g[idx] > 0 else -1 if g[idx] < 0 else 0
        assert pert[idx] == -s


def test_fgsm_respects_range():
    region = np.zeros((3, 3, 3))
    assert not fgsm_step(region, np.ones_like(region)).any()


def test_early_exit_at_entry():
    region = np.full((3, 3, 3), 50.0)
    res = iterative_attack(region, Constant(-0.5, np.ones_like(region)), BasicAttackConfig())
    assert res.iterations_used == 0 and not res.perturbation.any() and res.succeeded


def test_no_early_exit_runs_all_iterations():
    region = np.full((3, 3, 3), 50.0)
    res = iterative_attack(region, Constant(-0.5, np.ones_like(region)),
                           BasicAttackConfig(early_exit=False), iters=10)
    assert res.iterations_used == 10


def test_bim_one_iteration_equals_fgsm(rng):
    region = rng.uniform(20, 230, (6, 6, 3))
    g = rng.normal(size=region.shape)
    res = iterative_attack(region, Constant(1.0, g), BasicAttackConfig(method="bim", step=0.7), iters=1)
    assert np.array_equal(res.perturbation, fgsm_step(region, g, step=0.7))


def test_cw_matches_reference_descent(rng):
    region = np.full((4, 4, 3), 128.0)
    c = rng.normal(0, 2, region.shape)
    cfg = BasicAttackConfig(method="cw", cw_lr=0.1, cw_penalty=0.05, eps_max=1e9, early_exit=False)
    res = iterative_attack(region, Quadratic(c), cfg, iters=25)
    e = np.zeros_like(region)
    for _ in range(25):
        e = e - 0.1 * ((e - c) + 2 * 0.05 * e)
    assert np.max(np.abs(res.perturbation - e)) < 1e-8


def test_mifgsm_velocity(rng):
    region = np.full((3, 3, 3), 128.0)
    g1 = rng.normal(size=region.shape)

    class Seq:
        def __init__(self):
            self.k = 0

        def value_and_grad(self, pert):
            self.k += 1
            return 1.0, g1 if self.k == 1 else -2 * g1

    cfg = BasicAttackConfig(method="mifgsm", step=0.5, momentum_decay=1.0)
    res = iterative_attack(region, Seq(), cfg, iters=2)
    v = g1 / np.abs(g1).sum()
    v = v + (-2 * g1) / np.abs(2 * g1).sum()          # = 0 everywhere
    expected = -0.5 * np.sign(g1) - 0.5 * np.sign(v)
    assert np.allclose(res.perturbation, expected)


def test_nonfinite_gradient_flagged():
    region = np.full((3, 3, 3), 10.0)
    g = np.full_like(region, np.nan)
    res = iterative_attack(region, Constant(1.0, g), BasicAttackConfig())
    assert res.flagged and not res.perturbation.any()


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["bim", "mifgsm", "cw"]), st.floats(0.5, 20))
def test_budget_and_range_respected(seed, method, eps):
    rng = np.random.default_rng(seed)
    region = rng.uniform(0, 255, (5, 5, 3))
    cfg = BasicAttackConfig(method=method, step=3.0, eps_max=eps, cw_lr=50.0)
    res = iterative_attack(region, Quadratic(rng.normal(0, 100, region.shape)), cfg, iters=8)
    assert np.max(np.abs(res.perturbation)) <= eps + 1e-12
    assert (region + res.perturbation).min() >= -1e-12
    assert (region + res.perturbation).max() <= 255 + 1e-12


def test_schedules():
    assert [k for k in attacked_steps(BasicAttackConfig(schedule="ba_r2"), 101)] == list(range(1, 100, 10))
    assert attacked_steps(BasicAttackConfig(), 100) == list(range(1, 100))
    a = attacked_steps(BasicAttackConfig(schedule="ba_r1", seed=3), 100)
    assert a == attacked_steps(BasicAttackConfig(schedule="ba_r1", seed=3), 100)


def test_ba_r1_mean_count():
    # Monte Carlo over 200 seeds: 99 attackable frames at p = 0.1
    counts = [len(attacked_steps(BasicAttackConfig(schedule="ba_r1", seed=s), 100)) for s in range(200)]
    assert abs(np.mean(counts) - 9.9) <= 1.0


def test_anchor_frames():
    assert [t for t in range(1, 101) if anchor_frame(t)] == [30, 60, 90]


def _small_video():
    cfg = scenes.SceneConfig(frame_h=96, frame_w=96, object_w=16, object_h=16, num_frames=25)
    return scenes.suite_video(0, cfg, master_seed=3)


def test_ba_r_reuses_perturbation_bytes():
    v = _small_video()
    seen = []
    attacker = BasicAttacker(BasicAttackConfig(schedule="ba_r2", r2_interval=5), trk.FeatureKernel(), 25)
    run_online(v, attacker, "ta", trk.FeatureKernel(), v.targets, 3.0,
               on_frame=lambda t, adv, pert: seen.append((t, pert.copy())))
    by_t = dict(seen)
    # counter k = t - 1 is attacked when (k - 1) % 5 == 0: frames 2, 7, 12, ...
    for t in range(3, 7):
        assert by_t[t].tobytes() == by_t[2].tobytes()
    assert by_t[7].tobytes() != by_t[2].tobytes() or not by_t[2].any()


def test_basic_run_deterministic():
    v = _small_video()
    runs = []
    for _ in range(2):
        attacker = BasicAttacker(BasicAttackConfig(schedule="ba_r1", r1_prob=0.5, seed=9),
                                 trk.FeatureKernel(), 25)
        runs.append(run_online(v, attacker, "ua", trk.FeatureKernel(), None, 3.0).to_json())
    assert runs[0] == runs[1]
