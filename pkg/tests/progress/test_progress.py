"""
Tests for stage progress output.
"""

import io

import pytest
from rich.console import Console

from drive_context.progress import ProgressIndicator


def make_indicator(enabled=True):
    buffer = io.StringIO()
    console = Console(file=buffer, highlight=False, force_terminal=False, width=200)
    return ProgressIndicator(console=console, enabled=enabled), buffer


def test_format_params_joins_key_values():
    assert ProgressIndicator.format_params({"n": 3, "seed": 0}) == "n=3, seed=0"
    assert ProgressIndicator.format_params({}) == ""


def test_format_params_truncates_long_values():
    text = ProgressIndicator.format_params({"path": "x" * 80}, max_length=200)
    assert text == "path=" + "x" * 47 + "..."


def test_format_params_truncates_whole_line():
    text = ProgressIndicator.format_params({"a": "1" * 40, "b": "2" * 40})
    assert len(text) == 60
    assert text.endswith("...")


def test_stage_prints_start_and_completion():
    progress, buffer = make_indicator()

    with progress.stage("segment", trajectories=4) as status:
        status["detail"] = "cuts=12"

    output = buffer.getvalue()
    assert "⏺ segment(trajectories=4)" in output
    assert "✓" in output
    assert "cuts=12" in output
    assert progress.stage_count == 1


def test_failing_stage_marks_error_and_reraises():
    progress, buffer = make_indicator()

    with pytest.raises(RuntimeError):
        with progress.stage("build-model"):
            raise RuntimeError("boom")

    assert "✗" in buffer.getvalue()
    assert "✓" not in buffer.getvalue()


def test_disabled_indicator_prints_nothing():
    progress, buffer = make_indicator(enabled=False)
    with progress.stage("describe", mode="all"):
        pass
    progress.print_summary()
    assert buffer.getvalue() == ""
