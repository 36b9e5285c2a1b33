import time
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from rich.console import Console
from rich.table import Table

from .errors import OcclusionAEError
from .logger import get_logger

console = Console()
logger = get_logger("runner")

StageFunction = Callable[[Dict[str, Any]], Any]


@dataclass
class StageResult:
    """Outcome of one named stage of a command"""
    name: str
    success: bool = False
    message: str = ""
    skipped: bool = False
    executed: bool = False
    time_taken: float = 0.0
    exception: Optional[BaseException] = None
    metrics: Dict[str, Any] = field(default_factory=dict)


class StageRunner:
    """
    Runs named stages in order over a shared context dict.

    A stage returns either None, a message string, or a (message, metrics)
    pair. Exceptions are captured into the StageResult; later stages are
    skipped once one fails when stop_on_failure is set.
    """

    def __init__(self, stop_on_failure: bool = True, verbose: bool = False, quiet: bool = False):
        self.context: Dict[str, Any] = {}
        self.stop_on_failure = stop_on_failure
        self.verbose = verbose
        self.quiet = quiet
        self.stages: List[Dict[str, Any]] = []
        self.results: List[StageResult] = []

    def add_stage(self, name: str, func: StageFunction) -> 'StageRunner':
        """Add a stage to the run."""
        self.stages.append({"name": name, "func": func})
        return self

    def run_stage(self, stage: Dict[str, Any]) -> StageResult:
        """Execute a single stage."""
        result = StageResult(stage["name"])

        if self.stop_on_failure and self.failed:
            result.skipped = True
            result.message = "Skipped due to previous failure"
            return result

        start_time = time.perf_counter()
        result.executed = True
        try:
            outcome = stage["func"](self.context)
            if isinstance(outcome, tuple):
                result.message, metrics = outcome
                result.metrics.update(metrics or {})
            elif isinstance(outcome, str):
                result.message = outcome
            result.success = True
        except Exception as e:
            result.exception = e
            result.success = False
            result.message = f"Error: {e}"
            if self.verbose or not isinstance(e, OcclusionAEError):
                logger.debug(traceback.format_exc())
        finally:
            result.time_taken = time.perf_counter() - start_time
        return result

    def run(self) -> List[StageResult]:
        """Execute every stage in order."""
        for stage in self.stages:
            result = self.run_stage(stage)
            self.results.append(result)
            if self.quiet:
                continue
            if result.skipped:
                console.print(f"{result.name}: [yellow]↷ Skipped[/]")
            elif result.success:
                console.print(f"{result.name}: [green]✓ Success[/] (took {result.time_taken:.2f}s)")
            else:
                error_msg = result.message
                if len(error_msg) > 200 and not self.verbose:
                    error_msg = error_msg[:200] + "... [truncated]"
                console.print(f"{result.name}: [red]✗ Failed[/] (took {result.time_taken:.2f}s)")
                console.print(f"   → {error_msg}", style="red")
        return self.results

    @property
    def failed(self) -> bool:
        return any(r.executed and not r.success for r in self.results)

    @property
    def first_exception(self) -> Optional[BaseException]:
        for r in self.results:
            if r.exception is not None:
                return r.exception
        return None


def print_summary(results: List[StageResult], title: str = "Run Summary", verbose: bool = False):
    """Print summary table with timing and metrics"""
    table = Table(title=f"\n{title}", show_header=True, header_style="bold blue")
    table.add_column("Stage", style="dim", width=20)
    table.add_column("Status", width=10)
    table.add_column("Time (s)", justify="right", width=10)
    table.add_column("Details", width=48)
    table.add_column("Metrics", width=36)

    for result in results:
        time_taken = f"{result.time_taken:.2f}" if result.executed else "-"
        details = result.message
        if not verbose and len(details) > 100:
            details = details[:100] + "..."
        metrics_str = ", ".join(
            f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
            for k, v in result.metrics.items()
        )
        if result.skipped:
            status = "[yellow]Skipped[/]"
        elif result.success:
            status = "[green]Success[/]"
        else:
            status = "[red]Failed[/]"
        table.add_row(result.name, status, time_taken, details, metrics_str)

    console.print(table)

    executed = [r for r in results if r.executed]
    total_time = sum(r.time_taken for r in executed)
    console.print(f"Total execution time: [bold]{total_time:.2f}s[/]")
