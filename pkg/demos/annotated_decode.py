# Per-character provenance: which model "wrote" each character?
#
# Runs the same decode twice through the command-line entry point, once
# plain and once with colors (magenta = model 1's argmax, green =
# model 2's, plain = both agreed).

from pathlib import Path

from chared.cli import main

fixtures = Path(__file__).resolve().parent.parent / "fixtures"
args = [
    "--alpha", "0.45",
    "--mode", "greedy",
    "--model1", f"toy:{fixtures / 'demo_m1.json'}",
    "--model2", f"toy:{fixtures / 'demo_m2.json'}",
]

print("plain run:")
main(args)

print("annotated run (colors in a capable terminal):")
main(args + ["--annotate"])

print("per-step log lines:")
log = Path(__file__).with_name("annotated_decode.jsonl")
main(args + ["--log", str(log)])
for line in log.read_text().splitlines():
    print(" ", line)
