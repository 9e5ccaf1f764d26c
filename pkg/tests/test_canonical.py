import numpy as np
import pytest

from tspkit.canonical import (
    PreprocessConfig,
    Step,
    apply_steps,
    build_view,
    reflect_canonical,
    rotate_canonical,
    scale_translate_canonical,
)
from tspkit.core import Instance, InvalidArgument, random_instance
from tspkit.rng import RngStream

DEFAULT_STEPS = (Step.ROTATION, Step.SCALE_TRANSLATE)


def rand_pts(seed, n=20):
    return RngStream(seed).generator.random((n, 2))


def test_scale_translate_unit_square():
    out = scale_translate_canonical(np.array([[2.0, 3.0], [6.0, 5.0], [4.0, 3.0]]))
    assert out.min() == 0.0
    assert out.max() == 1.0
    # larger range (x: 4) sets the shared scale
    assert out[:, 1].max() == pytest.approx(0.5)


def test_scale_translate_degenerate_unchanged():
    pts = np.ones((4, 2))
    assert np.array_equal(scale_translate_canonical(pts), pts)


def test_scale_translate_idempotent():
    pts = rand_pts(0)
    once = scale_translate_canonical(pts)
    twice = scale_translate_canonical(once)
    assert np.abs(twice - once).max() < 1e-12


def test_rotation_aligns_principal_axis_to_diagonal():
    # points along the x axis must end up on the 45-degree diagonal
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    out = rotate_canonical(pts)
    assert np.allclose(out[:, 0], out[:, 1], atol=1e-12)


def test_rotation_invariant_to_input_rotation_up_to_half_turn():
    # PCA fixes the axis, not its direction, so representatives of a rotated
    # input can differ by a 180-degree turn; anything else is a bug
    for seed, theta in [(1, 1.1), (11, 0.7), (12, 2.9), (13, -2.0)]:
        pts = rand_pts(seed)
        c, s = np.cos(theta), np.sin(theta)
        rotated = pts @ np.array([[c, -s], [s, c]]).T
        a = rotate_canonical(pts)
        b = rotate_canonical(rotated)
        half_turn = a.max(axis=0) - a  # 180-degree turn refitted to the box
        diff = min(np.abs(a - b).max(), np.abs(half_turn - b).max())
        assert diff < 1e-9


def test_rotation_idempotent():
    pts = rand_pts(2)
    once = rotate_canonical(pts)
    twice = rotate_canonical(once)
    assert np.abs(twice - once).max() < 1e-9


def test_reflect_majority_rule():
    pts = np.array([[0.2, 0.9], [0.4, 0.8], [0.3, 0.1]])
    out = reflect_canonical(pts, Step.REFLECT_H)
    # majority above the midline, so the flip happens
    assert np.allclose(out[:, 1], 1.0 - pts[:, 1])
    # after flipping, the majority is below: no further change
    assert np.array_equal(reflect_canonical(out, Step.REFLECT_H), out)


def test_reflect_tie_unchanged():
    pts = np.array([[0.1, 0.9], [0.9, 0.1]])
    for which in (Step.REFLECT_H, Step.REFLECT_V, Step.REFLECT_DIAG):
        assert np.array_equal(reflect_canonical(pts, which), pts)


def test_reflect_diag_swaps_coordinates():
    pts = np.array([[0.1, 0.9], [0.2, 0.8], [0.3, 0.7]])
    out = reflect_canonical(pts, Step.REFLECT_DIAG)
    assert np.array_equal(out, pts[:, ::-1])


def test_reflect_rejects_non_reflection_step():
    with pytest.raises(InvalidArgument):
        reflect_canonical(rand_pts(3), Step.ROTATION)


def test_apply_steps_idempotent_default_chain():
    for seed in range(10):
        once = apply_steps(rand_pts(seed), DEFAULT_STEPS)
        twice = apply_steps(once, DEFAULT_STEPS)
        assert np.abs(twice - once).max() < 1e-12


def test_reflections_individually_idempotent():
    for which in (Step.REFLECT_H, Step.REFLECT_V, Step.REFLECT_DIAG):
        for seed in range(10):
            once = reflect_canonical(rand_pts(seed), which)
            twice = reflect_canonical(once, which)
            assert np.array_equal(twice, once)


def test_apply_steps_translation_scale_invariance():
    # translation + positive uniform scaling collapse to one output
    for seed in range(5):
        pts = rand_pts(seed)
        moved = 3.5 * pts + np.array([7.0, -2.0])
        a = apply_steps(pts, DEFAULT_STEPS)
        b = apply_steps(moved, DEFAULT_STEPS)
        assert np.abs(a - b).max() < 1e-9


def test_config_rejects_duplicates():
    with pytest.raises(InvalidArgument):
        PreprocessConfig(steps=(Step.ROTATION, Step.ROTATION))


def test_build_view_initial_step():
    inst = random_instance(8, RngStream(4))
    view = build_view(inst, [], PreprocessConfig())
    assert view.size == 8
    assert np.allclose(view.rel_coords.mean(axis=0), 0.0, atol=1e-12)
    assert np.array_equal(view.first_rel, np.zeros(2))


def test_build_view_row_layout():
    inst = random_instance(8, RngStream(5))
    cfg = PreprocessConfig()
    # t=2: first == last, a single extra row
    v2 = build_view(inst, [0], cfg)
    assert v2.size == 8
    assert v2.last_row == v2.first_row == 7
    assert v2.remaining_ids[-1] == 0
    # t=4: first and last both present
    v4 = build_view(inst, [0, 3, 5], cfg)
    assert v4.size == 8 - 3 + 2
    assert v4.remaining_ids[v4.first_row] == 0
    assert v4.remaining_ids[v4.last_row] == 5
    assert np.allclose(v4.rel_coords[v4.last_row], 0.0)


def test_build_view_candidate_mask():
    inst = random_instance(8, RngStream(6))
    v = build_view(inst, [0, 3, 5], PreprocessConfig())
    mask = v.candidate_mask()
    assert mask.sum() == 5
    assert not mask[v.first_row] and not mask[v.last_row]
    assert set(v.remaining_ids[mask]) == {1, 2, 4, 6, 7}


def test_build_view_rejects_bad_visited():
    inst = random_instance(5, RngStream(7))
    with pytest.raises(InvalidArgument):
        build_view(inst, [0, 0], PreprocessConfig())
    with pytest.raises(InvalidArgument):
        build_view(inst, [9], PreprocessConfig())


def test_build_view_disabled_gives_absolute_coords():
    inst = random_instance(6, RngStream(8))
    v = build_view(inst, [0, 2], PreprocessConfig.disabled())
    assert v.size == 6
    assert np.array_equal(v.rel_coords, inst.coords)
    assert np.array_equal(v.first_rel, inst.coords[0])


def test_build_view_one_shot_matches_instance_level_preprocess():
    inst = random_instance(9, RngStream(9))
    cfg = PreprocessConfig(per_step=False)
    v = build_view(inst, [0, 4], cfg)
    pts = apply_steps(inst.coords, cfg.steps)
    expect = pts[v.remaining_ids] - pts[v.remaining_ids][v.last_row]
    assert np.allclose(v.rel_coords, expect)


def test_build_view_translation_invariance_per_step():
    base = random_instance(10, RngStream(10))
    shifted = Instance(coords=np.asarray(base.coords) + np.array([5.0, -3.0]))
    cfg = PreprocessConfig()
    va = build_view(base, [0, 2, 7], cfg)
    vb = build_view(shifted, [0, 2, 7], cfg)
    assert np.abs(va.rel_coords - vb.rel_coords).max() < 1e-9
    assert np.abs(va.first_rel - vb.first_rel).max() < 1e-9
