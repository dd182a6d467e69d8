"""Mixing-weight sweep harness.

Runs a scorer over a grid of mixing weights (default 0.00 to 1.00 in
0.05 steps) for two task sets and emits one row per weight with the
per-set average scores, their sum, and a failure count.  Scorers are
deliberately simple string predicates; anything heavier (code
execution, answer extraction, classifiers) plugs in as an external
process speaking a one-line-in, one-line-out protocol.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import __version__
from .decoder import DecoderConfig, TERM_PROVIDER_ERROR, decode
from .errors import ProviderUnavailable
from .providers import ProviderDescriptor, TokenProvider, build_provider

CSV_HEADER = "alpha,score_task1,score_task2,sum,failures"


def default_grid() -> tuple[float, ...]:
    return tuple(i / 20 for i in range(21))


@dataclass(frozen=True)
class SweepTask:
    """One decode to score: a prompt for each model plus a scorer id."""

    prompts: tuple[str, str]
    scorer: str


@dataclass(frozen=True)
class SweepSpec:
    tasks: tuple[tuple[SweepTask, ...], tuple[SweepTask, ...]]
    grid: tuple[float, ...] = field(default_factory=default_grid)
    mode: str = "greedy"
    seed: int = 0
    max_atoms: int = 64
    repetitions: int = 1

    def __post_init__(self):
        if not self.grid:
            raise ValueError("empty grid")
        if any(not (0.0 <= a <= 1.0) for a in self.grid):
            raise ValueError("grid values must lie in [0, 1]")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    score_task1: float
    score_task2: float
    total: float
    failures: int


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    best_alpha: float


class ExternalScorer:
    """Long-running scorer process: one JSON line in, one float line out."""

    def __init__(self, command: str):
        self.command = command
        self._proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )

    def __call__(self, text: str) -> float:
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps({"text": text}, ensure_ascii=False) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError(f"scorer process {self.command!r} closed its output")
        return float(line.strip())

    def close(self):
        if self._proc.poll() is None:
            self._proc.terminate()
            self._proc.wait(timeout=5)


def resolve_scorer(scorer_id: str, procs: dict[str, ExternalScorer]) -> Callable[[str], float]:
    """Map a scorer id to a callable.

    ``exact:<target>`` and ``contains:<needle>`` are built in;
    ``proc:<command>`` delegates to an external process (one instance
    per distinct command, shared across the sweep).
    """
    kind, sep, arg = scorer_id.partition(":")
    if not sep:
        raise ValueError(f"scorer id {scorer_id!r} has no kind prefix")
    if kind == "exact":
        return lambda text: 1.0 if text == arg else 0.0
    if kind == "contains":
        return lambda text: 1.0 if arg in text else 0.0
    if kind == "proc":
        if arg not in procs:
            procs[arg] = ExternalScorer(arg)
        return procs[arg]
    raise ValueError(f"unknown scorer kind {kind!r}")


ProviderFactory = Callable[[str], TokenProvider]


def _factory(p: "ProviderDescriptor | ProviderFactory") -> ProviderFactory:
    if isinstance(p, ProviderDescriptor):
        from dataclasses import replace

        return lambda prompt: build_provider(replace(p, prompt=prompt))
    return p


def _format_alpha(alpha: float) -> str:
    two = f"{alpha:.2f}"
    return two if float(two) == alpha else repr(alpha)


def _row_line(row: SweepRow) -> str:
    return ",".join(
        (
            _format_alpha(row.alpha),
            repr(row.score_task1),
            repr(row.score_task2),
            repr(row.total),
            str(row.failures),
        )
    )


def run_sweep(
    spec: SweepSpec,
    providers: tuple["ProviderDescriptor | ProviderFactory", "ProviderDescriptor | ProviderFactory"],
    csv_path: str | Path | None = None,
) -> SweepResult:
    """Decode and score every (weight, task) cell of the grid.

    A scorer failure zeroes that item and increments the row's failure
    count; a provider failure aborts the whole sweep after flushing the
    rows already written.
    """
    factories = (_factory(providers[0]), _factory(providers[1]))
    procs: dict[str, ExternalScorer] = {}
    scorers = [
        [resolve_scorer(task.scorer, procs) for task in task_set] for task_set in spec.tasks
    ]
    csv_file = None
    if csv_path is not None:
        _write_manifest(spec, providers, Path(csv_path))
        csv_file = open(csv_path, "w", encoding="utf-8", newline="\n")
        csv_file.write(CSV_HEADER + "\n")
    rows: list[SweepRow] = []
    try:
        for grid_index, alpha in enumerate(spec.grid):
            set_scores = []
            failures = 0
            for set_index, task_set in enumerate(spec.tasks):
                item_scores = []
                for task_index, task in enumerate(task_set):
                    rep_scores = []
                    for rep in range(spec.repetitions):
                        seed = (
                            spec.seed
                            + 1_000_003 * grid_index
                            + 101 * (2 * task_index + set_index)
                            + rep
                        )
                        config = DecoderConfig(
                            alpha=alpha,
                            mode=spec.mode,
                            seed=seed,
                            max_atoms=spec.max_atoms,
                        )
                        record = decode(
                            config,
                            providers=(
                                factories[0](task.prompts[0]),
                                factories[1](task.prompts[1]),
                            ),
                        )
                        if record.termination == TERM_PROVIDER_ERROR:
                            raise ProviderUnavailable(
                                f"provider failed at alpha={alpha}, task {task.scorer!r}"
                            )
                        try:
                            score = float(scorers[set_index][task_index](record.text))
                            if not (0.0 <= score <= 1.0):
                                raise ValueError(f"score {score} outside [0, 1]")
                        except ProviderUnavailable:
                            raise
                        except Exception:
                            score = 0.0
                            failures += 1
                        rep_scores.append(score)
                    item_scores.append(sum(rep_scores) / len(rep_scores))
                set_scores.append(sum(item_scores) / len(item_scores))
            row = SweepRow(alpha, set_scores[0], set_scores[1], set_scores[0] + set_scores[1], failures)
            rows.append(row)
            if csv_file is not None:
                csv_file.write(_row_line(row) + "\n")
                csv_file.flush()
    finally:
        if csv_file is not None:
            csv_file.close()
        for proc in procs.values():
            proc.close()
    best = max(rows, key=lambda r: (r.total, -r.alpha))
    return SweepResult(tuple(rows), best.alpha)


def _describe_provider(p) -> str:
    if isinstance(p, ProviderDescriptor):
        return f"{p.kind}:{p.location}"
    return getattr(p, "__name__", repr(p))


def _write_manifest(spec: SweepSpec, providers, csv_path: Path) -> None:
    manifest = {
        "version": __version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "grid": list(spec.grid),
        "mode": spec.mode,
        "seed": spec.seed,
        "max_atoms": spec.max_atoms,
        "repetitions": spec.repetitions,
        "providers": [_describe_provider(p) for p in providers],
        "tasks": [
            [{"prompts": list(t.prompts), "scorer": t.scorer} for t in task_set]
            for task_set in spec.tasks
        ],
        "csv": csv_path.name,
    }
    sidecar = csv_path.with_name(csv_path.name + ".manifest.json")
    sidecar.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
