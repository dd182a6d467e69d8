# Executable versions of the two correctness guarantees, on toy models
# small enough to enumerate every decode path exactly.
#
# 1. Decoding equivalence: with all weight on model 1, the ensemble's
#    distribution over output strings equals model 1's own.
# 2. Tokenization invariance: replacing model 1 by a single-character
#    retokenization with the same output distribution changes nothing,
#    at any weight.

from chared import (
    characterize_toy_lm,
    exact_chared_distribution,
    exact_lm_string_distribution,
    total_variation,
)
from chared.fixtures import theorem_suite

suite = theorem_suite()
print(f"{len(suite)} model pairs\n")

print("decoding equivalence (weight 1.0):")
for pair in suite:
    lm = exact_lm_string_distribution(pair.m1, pair.prompts[0], pair.horizon)
    ens = exact_chared_distribution(pair.m1, pair.m2, 1.0, pair.prompts, pair.horizon)
    print(f"  {pair.name:26s} total variation = {total_variation(ens, lm):.2e}")

print("\ntokenization invariance (weights 0, 0.25, 0.5, 0.75, 1):")
for pair in suite:
    flat = characterize_toy_lm(pair.m1, pair.horizon, pair.prompts[0])
    worst = max(
        total_variation(
            exact_chared_distribution(pair.m1, pair.m2, a, pair.prompts, pair.horizon),
            exact_chared_distribution(flat, pair.m2, a, pair.prompts, pair.horizon),
        )
        for a in (0.0, 0.25, 0.5, 0.75, 1.0)
    )
    print(f"  {pair.name:26s} worst total variation = {worst:.2e}")

# The retokenized model really is different plumbing: every token is a
# single character, yet the string distribution is untouched.
pair = suite[0]
flat = characterize_toy_lm(pair.m1, pair.horizon)
print(f"\noriginal vocabulary:    {sorted(t for t in pair.m1.vocab)[:8]}")
print(f"retokenized vocabulary: {sorted(t for t in flat.vocab)[:8]}")
