"""
Progress output for DriveContext pipeline stages.

Shows what the pipeline is doing on stderr so stdout stays machine-readable:
`⏺ stage(params)` when a stage starts, then `✓ (1.2s)` or `✗ Error: ...`.
"""

import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

from rich.console import Console
from rich.markup import escape


class ProgressIndicator:
    """Handles progress output for pipeline stages."""

    def __init__(self, console: Optional[Console] = None, enabled: bool = True):
        # rich drops colour by itself when stderr is not a terminal
        self.console = console or Console(stderr=True, highlight=False)
        self.enabled = enabled
        self.stage_count = 0

    @staticmethod
    def format_params(params: Dict[str, Any], max_length: int = 60) -> str:
        """Format parameters for display, truncating if too long."""
        if not params:
            return ""

        parts = []
        for key, value in params.items():
            value_str = str(value)
            if len(value_str) > 50:
                value_str = value_str[:47] + "..."
            parts.append(f"{key}={value_str}")

        result = ", ".join(parts)
        if len(result) > max_length:
            result = result[:max_length - 3] + "..."
        return result

    def print_stage_start(self, stage: str, params: Dict[str, Any]) -> None:
        if not self.enabled:
            return
        params_str = escape(self.format_params(params))
        self.console.print(f"[blue]⏺[/blue] {escape(stage)}({params_str})", end="")

    def print_stage_complete(self, elapsed_seconds: float, detail: str = "") -> None:
        if not self.enabled:
            return
        suffix = f" {escape(detail)}" if detail else ""
        self.console.print(f" [green]✓[/green] ({elapsed_seconds:.1f}s){suffix}")

    def print_stage_error(self, error_msg: str = "") -> None:
        if not self.enabled:
            return
        suffix = f" Error: {escape(error_msg)}" if error_msg else ""
        self.console.print(f" [red]✗[/red]{suffix}")

    def print_summary(self) -> None:
        if not self.enabled:
            return
        plural = "s" if self.stage_count != 1 else ""
        self.console.print(f"[green]✓[/green] Ran {self.stage_count} stage{plural}")

    @contextmanager
    def stage(self, name: str, **params: Any) -> Iterator[Dict[str, str]]:
        """
        Time a stage; the yielded dict's "detail" is appended on success.

        A failing stage is marked and the exception re-raised; the caller reports it.
        """
        info: Dict[str, str] = {"detail": ""}
        self.print_stage_start(name, params)
        started = time.monotonic()
        try:
            yield info
        except Exception:
            self.print_stage_error()
            raise
        self.stage_count += 1
        self.print_stage_complete(time.monotonic() - started, info["detail"])
