"""Acceptance suite: ten numbered criteria, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines; every
criterion asserts its pinned tolerance, so a red test is a failed criterion.
The heavyweight entries (1, 2, 7) are marked `slow` and can be deselected
with `-m "not slow"`.
"""
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats as scipy_stats

import tspkit.autodiff as ad
from tspkit.canonical import PreprocessConfig, Step, apply_steps
from tspkit.core import Instance, brute_force_optimal, random_instance, random_tour
from tspkit.local_search import (
    InsertionVariant,
    LocalSearchConfig,
    combined_local_search,
    insertion_heuristic,
    plain_two_opt_baseline,
)
from tspkit.policy import (
    DecodeMode,
    gnn_encode,
    init_params,
    mlp_encode,
    decode_step,
    rollout,
)
from tspkit.rng import RngStream
from tspkit.training import TrainConfig, curriculum_dist, train
from tspkit.tsplib import KNOWN_OPTIMA, load_tsplib_file, normalize_to_unit_square, tsplib_length

import importlib.resources as resources

import tspkit

DATA = resources.files(tspkit) / "data"


def report(num: int, detail: str):
    print(f"[criterion {num:2d}] PASS  {detail}")


def heuristic_mean(method, n, count, seed):
    rng = RngStream(seed)
    total = 0.0
    for i in range(count):
        inst = random_instance(n, rng.derive(0, i))
        total += method(inst, rng.derive(1, i)).length
    return total / count


@pytest.mark.slow
def test_criterion_01_heuristic_means():
    count = 1000

    def rand_ins(inst, rng):
        return insertion_heuristic(inst, InsertionVariant.RANDOM, rng)

    def far_ins(inst, rng):
        return insertion_heuristic(inst, InsertionVariant.FARTHEST, rng)

    checks = [
        ("random insertion TSP20", rand_ins, 20, 4.005, 0.015),
        ("farthest insertion TSP20", far_ins, 20, 3.932, 0.015),
        ("farthest insertion TSP50", far_ins, 50, 6.010, 0.015),
        ("plain 2-opt TSP20", plain_two_opt_baseline, 20, 4.082, 0.02),
        ("plain 2-opt TSP100", plain_two_opt_baseline, 100, 9.100, 0.02),
    ]
    details = []
    for name, fn, n, target, tol in checks:
        mean = heuristic_mean(fn, n, count, seed=1234)
        assert abs(mean - target) / target <= tol, (name, mean, target)
        details.append(f"{name} {mean:.3f}~{target}")
    report(1, "; ".join(details))


@pytest.mark.slow
def test_criterion_02_combined_ls_strength():
    params = init_params(RngStream(2).derive(0))
    ls = LocalSearchConfig()
    for n, bound in ((20, 3.90), (50, 5.95)):
        rng = RngStream(1000 + n)
        total = 0.0
        count = 1000
        for i in range(count):
            inst = random_instance(n, rng.derive(0, i))
            res = rollout(inst, params, mode=DecodeMode.SAMPLE, rng=rng.derive(1, i))
            total += combined_local_search(inst, res.tour, ls, rng=rng.derive(2, i)).length
        mean = total / count
        assert mean <= bound, (n, mean, bound)
        if n == 20:
            d20 = mean
        else:
            d50 = mean
    report(2, f"w/o-RL mean TSP20 {d20:.3f} <= 3.90, TSP50 {d50:.3f} <= 5.95")


def test_criterion_03_oracle_equivalence():
    ls = LocalSearchConfig(alpha=0.5, beta=1.5, iterations=10)
    rng = RngStream(77)
    hits = 0
    count = 200
    for i in range(count):
        n = 6 + i % 4
        inst = random_instance(n, rng.derive(0, i))
        start = random_tour(inst, rng.derive(1, i))
        out = combined_local_search(inst, start, ls, rng=rng.derive(2, i))
        assert out.length <= start.length + 1e-12
        if out.length <= brute_force_optimal(inst).length + 1e-9:
            hits += 1
    assert hits >= 0.95 * count, hits
    report(3, f"oracle hits {hits}/{count} (>= 95%), never longer than input")


def test_criterion_04_gradient_correctness():
    eps = 1e-5
    params = init_params(RngStream(4).derive(0), h=8, n_gnn=3, mlp_hidden=(8, 8))
    inst = random_instance(6, RngStream(5))
    forced = rollout(inst, params, mode=DecodeMode.SAMPLE, rng=RngStream(6)).tour.order

    def logp():
        return rollout(inst, params, forced_order=forced).log_prob_sum

    res = rollout(inst, params, forced_order=forced, record=True)
    params.zero_grad()
    ad.backward(res.tape, res.log_prob_tensor)
    worst = 0.0
    checked = 0
    for name, t in params.named():
        assert t.grad is not None, name
        for idx in np.ndindex(*t.shape):
            orig = t.value[idx]
            t.value[idx] = orig + eps
            hi = logp()
            t.value[idx] = orig - eps
            lo = logp()
            t.value[idx] = orig
            fd = (hi - lo) / (2 * eps)
            an = t.grad[idx]
            # denominator floored at 1e-6: for near-zero entries the pure
            # relative error is dominated by finite-difference roundoff
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            worst = max(worst, rel)
            checked += 1
            assert rel < 1e-4, (name, idx, fd, an, rel)
    report(4, f"FD check over {checked} parameters, worst rel err {worst:.2e} < 1e-4")


def test_criterion_05_equivariance_suite():
    params = init_params(RngStream(7).derive(0), h=8, n_gnn=2, mlp_hidden=(8, 8))
    # (a) exact permutation equivariance of the GNN encoder
    gen = np.random.default_rng(8)
    coords = gen.random((9, 2))
    perm = gen.permutation(9)
    assert np.array_equal(gnn_encode(None, coords, params).value[perm],
                          gnn_encode(None, coords[perm], params).value)
    # (b) masked probability exactly zero
    emb = gnn_encode(None, coords, params)
    query = mlp_encode(None, np.array([0.1, 0.4]), params)
    mask = np.array([True, False] * 4 + [True])
    _, _, probs = decode_step(None, emb, query, mask, params, DecodeMode.GREEDY, None)
    assert np.all(probs[~mask] == 0.0)
    # (c) greedy argmax invariance under translation + positive scaling
    for seed in range(100):
        inst = random_instance(10, RngStream(seed))
        moved = Instance(coords=1.7 * np.asarray(inst.coords) + np.array([4.0, -9.0]))
        assert np.array_equal(rollout(inst, params).tour.order,
                              rollout(moved, params).tour.order), seed
    # (d) canonicalization idempotence
    steps = (Step.ROTATION, Step.SCALE_TRANSLATE)
    for seed in range(20):
        once = apply_steps(RngStream(seed).generator.random((15, 2)), steps)
        twice = apply_steps(once, steps)
        assert np.abs(twice - once).max() <= 1e-12
    report(5, "GNN equivariance exact; masked prob 0; 100/100 greedy invariances; "
              "idempotence <= 1e-12")


def test_criterion_06_curriculum_distribution():
    for e in (1, 5, 10, 30, 50, 120, 200):
        p = curriculum_dist(e, 3.0, 10, 50)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert 10 + int(p.argmax()) == min(max(e, 10), 50), e
    p = curriculum_dist(30, 3.0, 10, 50)
    draws = RngStream(9).generator.choice(p.shape[0], size=10_000, p=p)
    observed = np.bincount(draws, minlength=p.shape[0])
    gof = scipy_stats.chisquare(observed, f_exp=10_000 * p)
    assert gof.pvalue > 0.01, gof.pvalue
    report(6, f"sum/argmax checks over 7 epochs; chi-square p = {gof.pvalue:.3f} > 0.01")


@pytest.mark.slow
def test_criterion_07_training_progress():
    # Desk scale is 250 updates, so the learning rate is raised above the
    # full-scale default; at lr=1e-3 the updates are too small to change any
    # sampled action and the run is behaviorally a no-op.
    config = TrainConfig(epochs=5, steps_per_epoch=50, batch_size=32,
                         size_min=10, size_max=20, h=64, n_gnn=3,
                         mlp_hidden=(64, 128), lr=0.03)
    rng = RngStream(0)
    held_out = [random_instance(20, RngStream(500_000 + i)) for i in range(500)]

    def greedy_ls_mean(params):
        ls = LocalSearchConfig()
        total = 0.0
        for i, inst in enumerate(held_out):
            tour = rollout(inst, params).tour
            total += combined_local_search(inst, tour, ls,
                                           rng=RngStream(600_000 + i)).length
        return total / len(held_out)

    untrained = init_params(rng.derive(0), h=config.h, n_gnn=config.n_gnn,
                            mlp_hidden=config.mlp_hidden)
    before = greedy_ls_mean(untrained)
    params, log = train(config, RngStream(0))
    after = greedy_ls_mean(params)
    adv1 = np.mean([abs(r["mean_advantage"]) for r in log if r["epoch"] == 1])
    adv5 = np.mean([abs(r["mean_advantage"]) for r in log if r["epoch"] == 5])
    assert after <= before + 1e-12, (after, before)
    assert adv5 < adv1, (adv1, adv5)
    report(7, f"held-out mean {after:.4f} <= untrained {before:.4f}; "
              f"|A| epoch1 {adv1:.4f} -> epoch5 {adv5:.4f}")


def test_criterion_08_smoothed_gradient_sign_contract():
    # zero improvement -> exactly zero update
    from tspkit.training import smoothed_policy_gradient_step

    tri = Instance(coords=[[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]])
    params = init_params(RngStream(10).derive(0), h=8, n_gnn=2, mlp_hidden=(8, 8))
    before = {name: t.value.copy() for name, t in params.named()}
    cfg = TrainConfig(epochs=1, steps_per_epoch=1, batch_size=2, size_min=3,
                      size_max=3, h=8, n_gnn=2, mlp_hidden=(8, 8),
                      ls=LocalSearchConfig(iterations=2))
    out = smoothed_policy_gradient_step([tri, tri], params, cfg, RngStream(11), 1e-3)
    assert not out.updated and out.mean_advantage == 0.0
    for name, t in params.named():
        assert np.array_equal(t.value, before[name]), name

    # synthetic two-trajectory case: the trajectory credited with the larger
    # improvement must receive the larger log-probability increase
    inst = random_instance(8, RngStream(12))
    t1 = rollout(inst, params, mode=DecodeMode.SAMPLE, rng=RngStream(13)).tour.order
    t2 = rollout(inst, params, mode=DecodeMode.SAMPLE, rng=RngStream(14)).tour.order
    assert not np.array_equal(t1, t2)
    advantages = {"t1": -1.0, "t2": -0.05}  # t1 saw the larger improvement
    params.zero_grad()
    for order, adv in ((t1, advantages["t1"]), (t2, advantages["t2"])):
        res = rollout(inst, params, forced_order=order, record=True)
        ad.backward(res.tape, res.log_prob_tensor, seed=-adv / 2)
    lp1_before = rollout(inst, params, forced_order=t1).log_prob_sum
    lp2_before = rollout(inst, params, forced_order=t2).log_prob_sum
    for _, t in params.named():
        if t.grad is not None:
            t.value += 1e-3 * t.grad
    d1 = rollout(inst, params, forced_order=t1).log_prob_sum - lp1_before
    d2 = rollout(inst, params, forced_order=t2).log_prob_sum - lp2_before
    assert d1 > d2, (d1, d2)
    report(8, f"zero-improvement update exactly zero; dlogp {d1:.5f} > {d2:.5f}")


def test_criterion_09_tsplib_pipeline():
    ls = LocalSearchConfig()
    details = []
    for name, dim in (("eil51", 51), ("berlin52", 52)):
        rec = load_tsplib_file(str(DATA / f"{name}.tsp"))
        assert rec.dimension == dim
        opt = KNOWN_OPTIMA[name]
        inst = normalize_to_unit_square(rec)
        start = insertion_heuristic(inst, InsertionVariant.FARTHEST, RngStream(15))
        assert tsplib_length(rec, start) >= opt
        tour = combined_local_search(inst, start, ls, rng=RngStream(16))
        int_len = tsplib_length(rec, tour)
        assert int_len >= opt
        gap = 100.0 * (int_len - opt) / opt
        assert gap <= 5.0, (name, int_len, opt)
        details.append(f"{name} {int_len}/{opt} gap {gap:.2f}%")
    report(9, "; ".join(details))


def test_criterion_10_cli_determinism(tmp_path):
    cfg = tmp_path / "smoke.cfg"
    cfg.write_text("epochs = 1\nsteps_per_epoch = 1\nbatch_size = 2\n"
                   "size_min = 6\nsize_max = 8\nh = 8\nn_gnn = 2\n"
                   "mlp_hidden = 8,8\niterations = 2\n")
    out = tmp_path / "run"
    res = subprocess.run([sys.executable, "-m", "tspkit.cli", "train", str(cfg),
                          "--seed", "3", "--out", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    ckpt = out / "checkpoint_epoch0001.ckpt"
    solve_args = [sys.executable, "-m", "tspkit.cli", "solve", "--random", "12",
                  "--checkpoint", str(ckpt), "--seed", "5", "--iterations", "2"]
    bench_args = [sys.executable, "-m", "tspkit.cli", "bench", "--suite", "random20",
                  "--methods", "farthest-insert,2opt,emagic", "--instances", "5",
                  "--seed", "6", "--iterations", "2", "--checkpoint", str(ckpt)]
    for args in (solve_args, bench_args):
        a = subprocess.run(args, capture_output=True)
        b = subprocess.run(args, capture_output=True)
        assert a.returncode == b.returncode == 0
        assert a.stdout == b.stdout
    report(10, "solve and bench stdout byte-identical across repeated seeded runs")
