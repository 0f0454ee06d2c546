"""
Tests for the Wedding-Cake Markov model: counting, back-off and the model file.
"""

import struct
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import pytest

from drive_context.config import ModelConfig
from drive_context.errors import BuildError, ModelFormatError, ModelVersionError, UnknownStateError
from drive_context.markov import (
    DrivingState,
    build_model,
    export_json,
    load_model,
    lookup_transitions,
    save_model,
)
from drive_context.synth import default_synth_spec, generate_synthetic
from drive_context.trajectory import preprocess

from builders import make_trajectory

A = DrivingState(10.0, 0.0, 0.0)
B = DrivingState(20.0, 0.0, 0.0)
C = DrivingState(30.0, 0.0, 0.0)


def noisy_corpus(n=20):
    spec = replace(default_synth_spec(), speed_noise_kmh=2.0, accel_noise_mps2=0.3, heading_noise_deg=2.0)
    trajs, _ = generate_synthetic(n, spec, seed=11)
    return trajs


class TestBuildModel(unittest.TestCase):
    """Transition counting and normalisation."""

    def test_alternating_states_give_certain_transitions(self):
        model = build_model([make_trajectory("ab", [10.0, 20.0, 10.0, 20.0])], ModelConfig())
        probs = model.levels[0].probs
        self.assertEqual(probs[(A, B)], 1.0)
        self.assertEqual(probs[(B, A)], 1.0)

    def test_probabilities_follow_observed_frequencies(self):
        trajs = [
            make_trajectory("1", [10.0, 20.0]),
            make_trajectory("2", [10.0, 20.0]),
            make_trajectory("3", [10.0, 30.0]),
        ]
        model = build_model(trajs, ModelConfig())
        probs = model.levels[0].probs
        self.assertAlmostEqual(probs[(A, B)], 2 / 3)
        self.assertAlmostEqual(probs[(A, C)], 1 / 3)
        self.assertEqual(model.counts[0][A], 3)

    def test_coarser_level_has_transitions_the_finest_lacks(self):
        model = build_model([make_trajectory("c", [10.0, 15.0])], ModelConfig())
        coarse_loop = (A, A)
        self.assertNotIn(coarse_loop, model.levels[0].probs)
        self.assertIn(coarse_loop, model.levels[1].probs)

    def test_empty_corpus_is_rejected(self):
        with self.assertRaises(BuildError):
            build_model([], ModelConfig())


def test_outgoing_probabilities_sum_to_one():
    model = build_model(noisy_corpus(), ModelConfig())
    for table in model.levels:
        for edges in table.outgoing.values():
            assert sum(p for _, p in edges) == pytest.approx(1.0, abs=1e-9)


def test_observation_count_matches_cleaned_steps():
    trajs = noisy_corpus()
    cfg = ModelConfig()
    model = build_model(trajs, cfg)
    steps = sum(len(preprocess(t, cfg.quantization)) - 1 for t in trajs)
    assert sum(model.counts[0].values()) == steps


def test_normalisation_holds_on_a_thousand_trajectories():
    spec = default_synth_spec()
    short = tuple(replace(r, duration=(5, 10)) for r in spec.regimes)
    spec = replace(spec, regimes=short, speed_noise_kmh=2.0, accel_noise_mps2=0.3, heading_noise_deg=2.0)
    trajs, _ = generate_synthetic(1000, spec, seed=13)
    cfg = ModelConfig()

    model = build_model(trajs, cfg)

    steps = sum(len(preprocess(t, cfg.quantization, cfg.max_noise_speed_mps)) - 1 for t in trajs)
    for level, table in enumerate(model.levels):
        assert sum(model.counts[level].values()) == steps
        for edges in table.outgoing.values():
            assert sum(p for _, p in edges) == pytest.approx(1.0, abs=1e-9)


def test_model_does_not_depend_on_trajectory_order():
    trajs = noisy_corpus(10)
    assert build_model(trajs, ModelConfig()) == build_model(list(reversed(trajs)), ModelConfig())


def test_parallel_build_matches_serial():
    trajs = noisy_corpus(10)
    assert build_model(trajs, ModelConfig(), jobs=2) == build_model(trajs, ModelConfig(), jobs=1)


class TestLookup(unittest.TestCase):
    """Back-off through the levels."""

    def setUp(self):
        self.model = build_model([make_trajectory("ab", [10.0, 20.0, 10.0])], ModelConfig())

    def test_known_state_answers_at_finest_level(self):
        level, edges = lookup_transitions(self.model, A)
        self.assertEqual(level, 0)
        self.assertEqual(edges, ((B, 1.0),))

    def test_unseen_state_backs_off_to_coarser_level(self):
        level, _ = lookup_transitions(self.model, (15.0, 0.0, 0.0))
        self.assertEqual(level, 1)

    def test_state_unknown_everywhere_raises(self):
        with self.assertRaises(UnknownStateError):
            lookup_transitions(self.model, (120.0, 0.0, 0.0))


class TestModelFile(unittest.TestCase):
    """Binary persistence."""

    def setUp(self):
        self.model = build_model(noisy_corpus(5), ModelConfig())

    def test_save_then_load_gives_equal_model(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = str(Path(tmp) / "m.dcmm")
            save_model(self.model, path)
            self.assertEqual(load_model(path), self.model)

    def test_saving_twice_writes_identical_bytes(self):
        with tempfile.TemporaryDirectory() as tmp:
            a, b = Path(tmp) / "a.dcmm", Path(tmp) / "b.dcmm"
            save_model(self.model, str(a))
            save_model(self.model, str(b))
            self.assertEqual(a.read_bytes(), b.read_bytes())


def test_bad_magic_is_a_format_error(tmp_path):
    path = tmp_path / "m.dcmm"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ModelFormatError):
        load_model(str(path))


def test_newer_version_names_both_versions(tmp_path):
    model = build_model([make_trajectory("ab", [10.0, 20.0])], ModelConfig())
    path = tmp_path / "m.dcmm"
    save_model(model, str(path))
    data = bytearray(path.read_bytes())
    data[4:8] = struct.pack("<I", 2)
    path.write_bytes(bytes(data))

    with pytest.raises(ModelVersionError) as exc:
        load_model(str(path))
    assert "version 2" in str(exc.value)
    assert "version 1" in str(exc.value)


def test_truncated_file_is_a_format_error(tmp_path):
    model = build_model([make_trajectory("ab", [10.0, 20.0])], ModelConfig())
    path = tmp_path / "m.dcmm"
    save_model(model, str(path))
    path.write_bytes(path.read_bytes()[:-5])

    with pytest.raises(ModelFormatError):
        load_model(str(path))


def test_json_export_lists_every_transition():
    model = build_model([make_trajectory("ab", [10.0, 20.0, 10.0])], ModelConfig())
    payload = export_json(model)
    assert len(payload["levels"]) == 3
    finest = payload["levels"][0]
    assert len(finest["transitions"]) == model.levels[0].n_transitions
    assert finest["transitions"][0] == {"from": [10.0, 0.0, 0.0], "to": [20.0, 0.0, 0.0], "prob": 1.0}
