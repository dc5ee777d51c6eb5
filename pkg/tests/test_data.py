"""Synthetic mixtures, exact rewards, preference pairs, delimited files."""

import numpy as np
import pytest

from prefdiff.data import (
    GroundTruthReward,
    MixtureSpec,
    PreferencePairSet,
    TASK_NAMES,
    canonical_task,
    load_dataset_csv,
    load_pairs_csv,
    make_mixture,
    make_preference_pairs,
    preferred_mode_mass,
    save_dataset_csv,
    save_pairs_csv,
    task,
    win_rate,
)
from prefdiff.nn import RngStream


# --- mixture spec and sampling ---------------------------------------------


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        MixtureSpec(np.array([-2.0, 2.0]), 0.3, np.array([0.5, 0.5]))  # 1D means
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 1)), 0.0, np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 1)), 0.3, np.array([0.6, 0.6]))
    with pytest.raises(ValueError):
        MixtureSpec(np.zeros((2, 1)), 0.3, np.array([1.2, -0.2]))
    spec = MixtureSpec(np.zeros((3, 4)), 0.3, np.full(3, 1.0 / 3.0))
    assert spec.dim == 4


def test_make_mixture_count_shape_and_determinism():
    spec, _ = canonical_task()
    a = make_mixture(spec, 500, RngStream(1))
    b = make_mixture(spec, 500, RngStream(1))
    assert a.points.shape == (500, 2) and len(a) == 500
    assert np.array_equal(a.points, b.points)
    c = make_mixture(spec, 500, RngStream(2))
    assert not np.array_equal(a.points, c.points)
    with pytest.raises(ValueError):
        make_mixture(spec, 0, RngStream(0))


def test_make_mixture_balance_and_concentration():
    spec, _ = canonical_task()
    ds = make_mixture(spec, 10_000, RngStream(3))
    right = float(np.mean(ds.points[:, 0] > 0))
    assert 0.47 < right < 0.53
    # every point sits near one of the two means (sigma = 0.3)
    dist = np.minimum(
        np.linalg.norm(ds.points - np.array([2.0, 0.0]), axis=1),
        np.linalg.norm(ds.points - np.array([-2.0, 0.0]), axis=1),
    )
    assert dist.max() < 2.0
    assert np.mean(dist < 1.0) > 0.99


def test_named_tasks_cover_the_menu():
    assert TASK_NAMES == ("two-mode-2d", "two-mode-1d", "two-moons")
    for name in TASK_NAMES:
        spec, reward = task(name)
        assert reward.kind == "mode_indicator"
        assert spec.weights.sum() == pytest.approx(1.0, abs=1e-12)
    spec1d, _ = task("two-mode-1d")
    assert spec1d.dim == 1
    moons, moons_reward = task("two-moons")
    assert len(moons.means) == 16 and moons_reward.preferred == tuple(range(8))
    with pytest.raises(ValueError):
        task("three-rings")


# --- ground-truth rewards ----------------------------------------------------


def test_mode_indicator_reward_at_centers_and_boundary():
    spec, reward = canonical_task()
    assert reward.reward(np.array([2.0, 0.0])) > 0.999999
    assert reward.reward(np.array([-2.0, 0.0])) < 1e-6
    # equidistant points split the posterior evenly
    assert reward.reward(np.array([0.0, 0.7])) == pytest.approx(0.5, abs=1e-15)
    out = reward.reward(np.array([[2.0, 0.0], [-2.0, 0.0]]))
    assert out.shape == (2,)
    assert np.all((out >= 0.0) & (out <= 1.0))


def test_linear_reward_is_the_inner_product():
    reward = GroundTruthReward("linear", weight_vec=np.array([2.0, -1.0]))
    assert reward.reward(np.array([3.0, 4.0])) == 2.0
    got = reward.reward(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert np.array_equal(got, np.array([2.0, -1.0]))


def test_reward_validation():
    spec, _ = canonical_task()
    with pytest.raises(ValueError):
        GroundTruthReward("banana")
    with pytest.raises(ValueError):
        GroundTruthReward("mode_indicator", spec=spec, preferred=())
    with pytest.raises(ValueError):
        GroundTruthReward("mode_indicator", spec=None, preferred=(1,))
    with pytest.raises(ValueError):
        GroundTruthReward("mode_indicator", spec=spec, preferred=(0, 5))
    with pytest.raises(ValueError):
        GroundTruthReward("linear")


def test_preferred_mode_mass_counts_strictly_above_half():
    _, reward = canonical_task()
    samples = np.array([[2.0, 0.0], [-2.0, 0.0], [1.5, 0.3]])
    assert preferred_mode_mass(samples, reward) == pytest.approx(2.0 / 3.0)
    # strictness cuts just past the boundary; the posterior logit slope there
    # is ~44/unit, so x = -1e-6 puts the posterior ~1e-5 below one half,
    # far outside float noise (the knife edge itself rounds either way)
    assert preferred_mode_mass(np.array([[-1e-6, 0.0]]), reward) == 0.0
    assert preferred_mode_mass(np.array([[1e-6, 0.0]]), reward) == 1.0


# --- preference pairs ------------------------------------------------------------


def test_pairs_are_reward_sound_and_deterministic():
    spec, reward = canonical_task()
    ds = make_mixture(spec, 800, RngStream(4))
    pairs = make_preference_pairs(ds, reward, 300, RngStream(5))
    again = make_preference_pairs(ds, reward, 300, RngStream(5))
    assert len(pairs) == 300
    assert pairs.winners.shape == (300, 2) and pairs.losers.shape == (300, 2)
    assert np.array_equal(pairs.winners, again.winners)
    assert np.array_equal(pairs.losers, again.losers)
    rw = reward.reward(pairs.winners)
    rl = reward.reward(pairs.losers)
    assert np.all(rw > rl)
    # pairs draw distinct indices, so winner and loser never coincide
    assert np.all(np.any(pairs.winners != pairs.losers, axis=1))


def test_zero_pairs_yields_an_empty_set():
    spec, reward = canonical_task()
    ds = make_mixture(spec, 10, RngStream(6))
    pairs = make_preference_pairs(ds, reward, 0, RngStream(7))
    assert len(pairs) == 0
    assert pairs.winners.shape == (0, 2)


def test_constant_reward_gives_up_with_a_clear_error():
    spec, _ = canonical_task()
    ds = make_mixture(spec, 50, RngStream(8))
    flat = GroundTruthReward("linear", weight_vec=np.array([0.0, 0.0]))
    with pytest.raises(ValueError, match="constant"):
        make_preference_pairs(ds, flat, 5, RngStream(9))


def test_pair_validation():
    spec, reward = canonical_task()
    ds = make_mixture(spec, 5, RngStream(10))
    with pytest.raises(ValueError):
        make_preference_pairs(ds, reward, -1, RngStream(0))
    tiny = make_mixture(spec, 1, RngStream(11))
    with pytest.raises(ValueError):
        make_preference_pairs(tiny, reward, 3, RngStream(0))
    with pytest.raises(ValueError):
        PreferencePairSet(np.zeros((3, 2)), np.zeros((4, 2)))


# --- win rate ------------------------------------------------------------------


def test_win_rate_is_exactly_half_against_itself():
    spec, reward = canonical_task()
    a = make_mixture(spec, 64, RngStream(12)).points
    assert win_rate(a, a, reward) == 0.5


def test_win_rate_dominance_and_complement():
    _, reward = canonical_task()
    right = np.tile(np.array([[2.0, 0.0]]), (8, 1)) + 0.01 * np.arange(8)[:, None]
    left = np.tile(np.array([[-2.0, 0.0]]), (8, 1)) + 0.01 * np.arange(8)[:, None]
    assert win_rate(right, left, reward) == 1.0
    assert win_rate(left, right, reward) == 0.0
    spec, _ = canonical_task()
    a = make_mixture(spec, 8, RngStream(13)).points
    b = make_mixture(spec, 8, RngStream(14)).points
    assert win_rate(a, b, reward) + win_rate(b, a, reward) == 1.0


def test_win_rate_validation():
    _, reward = canonical_task()
    with pytest.raises(ValueError):
        win_rate(np.zeros((3, 2)), np.zeros((4, 2)), reward)
    with pytest.raises(ValueError):
        win_rate(np.zeros((0, 2)), np.zeros((0, 2)), reward)


# --- delimited files ----------------------------------------------------------------


def test_dataset_csv_round_trip_is_exact(tmp_path):
    spec, _ = canonical_task()
    pts = make_mixture(spec, 64, RngStream(15)).points
    path = tmp_path / "data.csv"
    save_dataset_csv(pts, path)
    text = path.read_text()
    assert text.splitlines()[0] == "dim_0,dim_1"
    assert np.array_equal(load_dataset_csv(path), pts)


def test_dataset_csv_rejects_foreign_headers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1.0,2.0\n")
    with pytest.raises(ValueError, match="header"):
        load_dataset_csv(path)


def test_pairs_csv_round_trip_and_layout(tmp_path):
    spec, reward = canonical_task()
    ds = make_mixture(spec, 200, RngStream(16))
    pairs = make_preference_pairs(ds, reward, 40, RngStream(17))
    path = tmp_path / "pairs.csv"
    save_pairs_csv(pairs, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "dim_0,dim_1,role"
    assert len(lines) == 1 + 2 * 40
    roles = [line.rsplit(",", 1)[1] for line in lines[1:]]
    assert roles == ["winner", "loser"] * 40
    back = load_pairs_csv(path)
    assert np.array_equal(back.winners, pairs.winners)
    assert np.array_equal(back.losers, pairs.losers)


def test_pairs_csv_rejects_malformed_files(tmp_path):
    good_header = "dim_0,role\n"
    p1 = tmp_path / "h.csv"
    p1.write_text("dim_0,dim_1\n1.0,2.0\n")
    with pytest.raises(ValueError, match="header"):
        load_pairs_csv(p1)
    p2 = tmp_path / "seq.csv"
    p2.write_text(good_header + "1.0,winner\n2.0,winner\n")
    with pytest.raises(ValueError, match="role"):
        load_pairs_csv(p2)
    p3 = tmp_path / "dangling.csv"
    p3.write_text(good_header + "1.0,winner\n")
    with pytest.raises(ValueError, match="dangling"):
        load_pairs_csv(p3)
    p4 = tmp_path / "empty.csv"
    p4.write_text(good_header)
    empty = load_pairs_csv(p4)
    assert len(empty) == 0 and empty.winners.shape == (0, 1)
