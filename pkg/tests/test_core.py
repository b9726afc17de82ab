import numpy as np
import pytest
from hypothesis import given, strategies as st

from cosnet.core import (ActionSpace, AgentConfiguration, ClipTrack, DegenerateInputError, coarsen_track,
                         max_agents, random_configuration, training_agents, validate_track)

from conftest import make_track


def test_valid_track_has_empty_report(rng):
    assert validate_track(make_track(rng.standard_normal((10, 8)))) == []


def test_zero_vector_is_reported_by_index(rng):
    feats = rng.standard_normal((10, 8))
    feats[7] = 0
    report = validate_track(make_track(feats))
    assert len(report) == 1 and "clip 7" in report[0]


def test_annotation_length_mismatch(rng):
    track = make_track(rng.standard_normal((10, 8)), annotations=np.zeros(159, dtype=np.int8))
    assert any("annotation length" in p for p in validate_track(track))


def test_short_tracks_and_bad_totals_are_reported():
    assert any("at least 2 clips" in p for p in validate_track(make_track(np.ones((1, 3)))))
    track = ClipTrack(np.ones((4, 2)), f_clip=16, f_total=40)
    assert any("too small" in p for p in validate_track(track))
    # a partial last clip is allowed
    assert validate_track(ClipTrack(np.ones((4, 2)), f_clip=16, f_total=49)) == []


def test_non_binary_annotations_reported():
    track = make_track(np.ones((2, 2)), f_clip=2, annotations=np.array([0, 1, 2, 0]))
    assert any("binary" in p for p in validate_track(track))


@pytest.mark.parametrize("f_total,f_clip,expected", [(2500, 16, 23), (160, 16, 1), (19406, 16, 181)])
def test_max_agents_examples(f_total, f_clip, expected):
    assert max_agents(f_total, f_clip) == expected


def test_max_agents_degenerate():
    with pytest.raises(DegenerateInputError):
        max_agents(100, 16)
    with pytest.raises(DegenerateInputError):
        max_agents(8, 16)


@given(st.integers(1, 64), st.integers(1, 200_000))
def test_max_agents_is_the_largest_feasible(f_clip, f_total):
    if 0.15 * f_total < f_clip or f_total < f_clip:
        with pytest.raises(DegenerateInputError):
            max_agents(f_total, f_clip)
        return
    n = max_agents(f_total, f_clip)
    assert n >= 1
    assert 20 * n * f_clip <= 3 * f_total
    assert 20 * (n + 1) * f_clip > 3 * f_total


def test_training_agents_clamps_to_two():
    assert training_agents(160, 16) == 2
    assert training_agents(2500, 16) == 23


def test_action_space_defaults():
    space = ActionSpace()
    assert space.steps == (-16, -8, -4, -2, -1, 0, 1, 2, 4, 8, 16)
    assert space.reach == 16 and space.steps[space.stay_index] == 0
    assert list(space.offsets([0, 5, 10])) == [-16, 0, 16]
    with pytest.raises(ValueError):
        ActionSpace((1, 2))


@given(st.lists(st.integers(0, 99), min_size=1, max_size=20, unique=True))
def test_sorting_is_idempotent_and_preserves_positions(positions):
    conf = AgentConfiguration(positions).sorted()
    again = conf.sorted()
    assert list(conf.positions) == sorted(positions)
    assert np.array_equal(again.positions, conf.positions)


def test_configuration_neighbors_are_cyclic():
    conf = AgentConfiguration([2, 5, 8])
    assert (conf.left(0), conf.right(0)) == (8, 5)
    assert (conf.left(2), conf.right(2)) == (5, 2)


def test_random_configuration_is_sorted_and_distinct(rng):
    for _ in range(50):
        conf = random_configuration(12, 5, rng)
        assert conf.is_valid(12)
    with pytest.raises(DegenerateInputError):
        random_configuration(3, 4, rng)


def test_key_counts_ignore_tail_frames():
    ann = np.zeros(50, dtype=np.int8)
    ann[14:20] = 1
    ann[48:] = 1
    track = ClipTrack(np.ones((3, 2)), f_clip=16, f_total=50, annotations=ann)
    assert list(track.key_counts()) == [2, 4, 0]


def test_coarsen_averages_consecutive_clips():
    feats = np.arange(14, dtype=float).reshape(7, 2) + 1
    track = ClipTrack(feats, f_clip=16, annotations=np.zeros(112, dtype=np.int8))
    c = coarsen_track(track, 3)
    assert (c.M, c.f_clip, c.f_total) == (2, 48, 112)
    assert np.allclose(c.features[0], feats[:3].mean(axis=0))
    assert np.allclose(c.features[1], feats[3:6].mean(axis=0))
    assert coarsen_track(track, 1) is track


def test_track_equality():
    a = ClipTrack(np.ones((3, 2)))
    assert a == ClipTrack(np.ones((3, 2)))
    assert a != ClipTrack(np.ones((3, 2)), video_id="other")
