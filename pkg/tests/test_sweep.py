import sys
from pathlib import Path

import pytest

from chared.errors import ProviderUnavailable
from chared.fixtures import specialist_models
from chared.providers import ProviderDescriptor, ToyProvider
from chared.sweep import (
    CSV_HEADER,
    SweepSpec,
    SweepTask,
    default_grid,
    resolve_scorer,
    run_sweep,
)

SCORER_SCRIPT = Path(__file__).resolve().parent / "line_scorer.py"


def specialist_factories():
    m1, m2 = specialist_models()
    return (lambda p: ToyProvider(m1, p), lambda p: ToyProvider(m2, p))


def specialist_spec(**kwargs):
    return SweepSpec(
        tasks=(
            (SweepTask(("A:", "A:"), "exact:aa"),),
            (SweepTask(("B:", "B:"), "exact:bb"),),
        ),
        **kwargs,
    )


class TestGrid:
    def test_default_grid_has_21_points(self):
        grid = default_grid()
        assert len(grid) == 21
        assert grid[0] == 0.0 and grid[-1] == 1.0
        assert all(b - a == pytest.approx(0.05, abs=1e-12) for a, b in zip(grid, grid[1:]))

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            SweepSpec(tasks=((), ()), grid=(0.5, 0.5))

    def test_grid_must_stay_in_range(self):
        with pytest.raises(ValueError):
            SweepSpec(tasks=((), ()), grid=(0.0, 1.5))


class TestSpecialistSweep:
    def test_frozen_score_table(self):
        # derived before building: model 1 wins its task for alpha >= 1/6,
        # model 2 for alpha <= 5/6, so the grid splits 4 / 13 / 4
        result = run_sweep(specialist_spec(), specialist_factories())
        assert len(result.rows) == 21
        for row in result.rows:
            expected_1 = 1.0 if row.alpha >= 1 / 6 else 0.0
            expected_2 = 1.0 if row.alpha <= 5 / 6 else 0.0
            assert row.score_task1 == expected_1
            assert row.score_task2 == expected_2
            assert row.total == row.score_task1 + row.score_task2
            assert row.failures == 0
        assert result.best_alpha == 0.2

    def test_interior_peak_beats_endpoints(self):
        result = run_sweep(specialist_spec(), specialist_factories())
        peak = max(r.total for r in result.rows[1:-1])
        assert peak == 2.0
        assert peak > result.rows[0].total == 1.0
        assert peak > result.rows[-1].total == 1.0

    def test_deterministic(self):
        a = run_sweep(specialist_spec(), specialist_factories())
        b = run_sweep(specialist_spec(), specialist_factories())
        assert a == b

    def test_csv_emission(self, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        run_sweep(specialist_spec(), specialist_factories(), csv_path=csv_path)
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 22
        assert lines[1] == "0.00,0.0,1.0,1.0,0"
        assert lines[5] == "0.20,1.0,1.0,2.0,0"
        assert lines[-1] == "1.00,1.0,0.0,1.0,0"
        manifest = csv_path.with_name(csv_path.name + ".manifest.json")
        assert manifest.exists()
        import json

        doc = json.loads(manifest.read_text())
        assert len(doc["grid"]) == 21
        assert doc["mode"] == "greedy"

    def test_descriptor_providers(self, fixtures_dir, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        providers = (
            ProviderDescriptor("toy", str(fixtures_dir / "specialist_m1.json")),
            ProviderDescriptor("toy", str(fixtures_dir / "specialist_m2.json")),
        )
        result = run_sweep(specialist_spec(), providers, csv_path=csv_path)
        assert result.best_alpha == 0.2


class TestScorers:
    def test_contains(self):
        scorer = resolve_scorer("contains:at", {})
        assert scorer("cats") == 1.0
        assert scorer("dog") == 0.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            resolve_scorer("fancy:thing", {})

    def test_external_process_scorer(self):
        spec = SweepSpec(
            tasks=(
                (SweepTask(("A:", "A:"), f"proc:{sys.executable} {SCORER_SCRIPT} aa"),),
                (SweepTask(("B:", "B:"), "exact:bb"),),
            ),
            grid=(0.0, 0.5, 1.0),
        )
        result = run_sweep(spec, specialist_factories())
        assert [r.score_task1 for r in result.rows] == [0.0, 1.0, 1.0]
        assert all(r.failures == 0 for r in result.rows)

    def test_broken_scorer_counts_failures(self):
        spec = SweepSpec(
            tasks=(
                (SweepTask(("A:", "A:"), f"proc:{sys.executable} -c pass"),),
                (SweepTask(("B:", "B:"), "exact:bb"),),
            ),
            grid=(0.0, 1.0),
        )
        result = run_sweep(spec, specialist_factories())
        assert all(r.score_task1 == 0.0 for r in result.rows)
        assert all(r.failures == 1 for r in result.rows)


class TestRepetitions:
    def test_sampled_repetitions_average_per_item(self):
        spec = specialist_spec(mode="sample", repetitions=4, seed=9)
        result = run_sweep(spec, specialist_factories())
        assert len(result.rows) == 21
        for row in result.rows:
            assert 0.0 <= row.score_task1 <= 1.0
            assert row.score_task1 * 4 == int(row.score_task1 * 4)  # mean of 4 binaries
            assert row.total == row.score_task1 + row.score_task2

    def test_rejects_zero_repetitions(self):
        with pytest.raises(ValueError):
            specialist_spec(repetitions=0)


class TestProviderFailure:
    def test_aborts_with_partial_csv(self, tmp_path):
        m1, m2 = specialist_models()
        calls = {"n": 0}

        class CountingToy(ToyProvider):
            def next_token_distribution(self, prefix):
                calls["n"] += 1
                if calls["n"] > 14:
                    raise ProviderUnavailable("down", retries=3)
                return super().next_token_distribution(prefix)

        csv_path = tmp_path / "sweep.csv"
        with pytest.raises(ProviderUnavailable):
            run_sweep(
                specialist_spec(),
                (lambda p: CountingToy(m1, p), lambda p: ToyProvider(m2, p)),
                csv_path=csv_path,
            )
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == CSV_HEADER
        assert 1 <= len(lines) - 1 < 21  # some but not all rows flushed
