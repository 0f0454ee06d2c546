"""
Tests for the synthetic trajectory generator.
"""

import unittest
from dataclasses import replace

import pytest

from drive_context.errors import RegimeSpecError
from drive_context.evaluation import load_annotations, write_annotations
from drive_context.synth import (
    RegimeSpec,
    SynthSpec,
    default_synth_spec,
    generate_synthetic,
    load_synth_spec,
    with_sequence,
)
from drive_context.trajectory import haversine, load_trajectories, write_trajectories


class TestRegimeSpec(unittest.TestCase):
    def test_duration_below_five_points_is_rejected(self):
        with self.assertRaises(RegimeSpecError):
            RegimeSpec("blip", 40.0, duration=(3, 10))

    def test_inverted_duration_is_rejected(self):
        with self.assertRaises(RegimeSpecError):
            RegimeSpec("odd", 40.0, duration=(20, 10))

    def test_unknown_regime_in_sequence_is_rejected(self):
        with self.assertRaises(RegimeSpecError):
            SynthSpec(sequence=("cruise-60", "warp-speed"))


class TestGenerate(unittest.TestCase):
    """Trajectories and their planted borders."""

    def test_same_seed_same_corpus(self):
        first = generate_synthetic(5, seed=9)
        second = generate_synthetic(5, seed=9)
        self.assertEqual(first, second)

    def test_different_seed_different_corpus(self):
        self.assertNotEqual(generate_synthetic(3, seed=1)[0], generate_synthetic(3, seed=2)[0])

    def test_ids_and_start_times(self):
        trajs, ants = generate_synthetic(3)
        spec = default_synth_spec()
        self.assertEqual([t.id for t in trajs], ["syn-0000", "syn-0001", "syn-0002"])
        self.assertEqual([a.trajectory_id for a in ants], ["syn-0000", "syn-0001", "syn-0002"])
        self.assertEqual(trajs[1].t_start - trajs[0].t_start, spec.trip_spacing_s)

    def test_annotations_sit_at_regime_transitions(self):
        spec = with_sequence(default_synth_spec(), ["cruise-60", "stop", "cruise-60"], duration=(20, 20))
        trajs, ants = generate_synthetic(1, spec, seed=0)
        self.assertEqual(len(trajs[0]), 60)
        self.assertEqual([a.point_index for a in ants[0].annotations], [20, 40])
        first = ants[0].annotations[0]
        self.assertEqual(first.latlng, trajs[0].points[19].latlng)

    def test_stop_regime_reaches_zero_speed(self):
        spec = with_sequence(default_synth_spec(), ["cruise-60", "stop"], duration=(20, 20))
        traj = generate_synthetic(1, spec, seed=0)[0][0]
        self.assertEqual(traj.points[-1].speed, 0.0)

    def test_positions_follow_speed(self):
        spec = replace(default_synth_spec(), speed_noise_kmh=0.0)
        trajs, _ = generate_synthetic(5, spec, seed=4)
        for traj in trajs:
            for prev, cur in zip(traj.points, traj.points[1:]):
                expected = cur.speed / 3.6
                travelled = haversine(prev.latlng, cur.latlng)
                self.assertAlmostEqual(travelled, expected, delta=max(0.01 * expected, 1e-6))

    def test_fixed_regime_count_gives_one_border_per_transition(self):
        spec = replace(default_synth_spec(), n_regimes=(6, 6))
        _, ants = generate_synthetic(20, spec, seed=6)
        for ant in ants:
            self.assertEqual(len(ant), 5)


def test_corpus_round_trips_through_csv(tmp_path):
    trajs, ants = generate_synthetic(4, seed=2)
    traj_path, ann_path = tmp_path / "t.csv", tmp_path / "a.csv"

    write_trajectories(str(traj_path), trajs, echo={"seed": 2})
    write_annotations(str(ann_path), ants, echo={"seed": 2})
    loaded, loaded_ants = load_trajectories(str(traj_path)), load_annotations(str(ann_path))

    assert [t.id for t in loaded] == [t.id for t in trajs]
    assert [len(t) for t in loaded] == [len(t) for t in trajs]
    assert [[a.point_index for a in s.annotations] for s in loaded_ants] == [
        [a.point_index for a in s.annotations] for s in ants
    ]
    assert loaded[0].points[5].speed == pytest.approx(trajs[0].points[5].speed)


def test_spec_file_extends_the_library(tmp_path):
    path = tmp_path / "synth.toml"
    path.write_text(
        "[synth]\n"
        "sequence = [\"crawl\", \"cruise-60\"]\n"
        "speed_noise_kmh = 1.5\n"
        "\n"
        "[[synth.regimes]]\n"
        "name = \"crawl\"\n"
        "speed_kmh = 8.0\n"
        "duration = [10, 12]\n"
    )

    spec = load_synth_spec(str(path))

    assert spec.sequence == ("crawl", "cruise-60")
    assert spec.speed_noise_kmh == 1.5
    assert spec.regime("crawl").duration == (10, 12)
    assert spec.regime("stop").speed_kmh == 0.0


def test_unknown_spec_key_is_rejected(tmp_path):
    path = tmp_path / "synth.json"
    path.write_text('{"speed_noise": 1.0}')
    with pytest.raises(RegimeSpecError):
        load_synth_spec(str(path))
