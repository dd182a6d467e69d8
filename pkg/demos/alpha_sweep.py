# Sweep the mixing weight over two complementary specialists.
#
# Model 1 solves task "A:" and flubs "B:"; model 2 is the mirror image.
# At the endpoints only one task scores, but for a wide interior band of
# weights the ensemble answers both, so the summed score peaks strictly
# inside the grid.

from pathlib import Path

from chared import SweepSpec, SweepTask, ToyProvider, run_sweep
from chared.fixtures import specialist_models

m1, m2 = specialist_models()
spec = SweepSpec(
    tasks=(
        (SweepTask(("A:", "A:"), "exact:aa"),),
        (SweepTask(("B:", "B:"), "exact:bb"),),
    ),
)

out = Path(__file__).with_name("alpha_sweep.csv")
result = run_sweep(spec, (lambda p: ToyProvider(m1, p), lambda p: ToyProvider(m2, p)), csv_path=out)

print("alpha  task1  task2  sum")
for row in result.rows:
    bar = "#" * int(10 * row.total)
    print(f"{row.alpha:5.2f}  {row.score_task1:5.2f}  {row.score_task2:5.2f}  {row.total:4.2f}  {bar}")
print(f"\nbest weight by summed score: {result.best_alpha}")
print(f"rows written to {out} (manifest sidecar alongside)")
