# Step through one ensemble decode and watch the lookup tables evolve.
#
# Model 1 thinks the next token is "cat" (0.9) or "cats" (0.1); model 2
# thinks "cats" (0.85) or "ca" (0.15).  Both tables marginalize to the
# same first character, so the ensemble walks c-a-t deterministically,
# and then the interesting part happens: model 1's token probably ends
# ("" carries 0.9 of its table) while model 2 wants to continue to "s".

from chared import DecoderConfig, marginal_char_distribution, mix
from chared.core import render_atom
from chared.decoder import init, step
from chared.fixtures import walkthrough_pair
from chared.providers import ToyProvider


def show_table(name, table):
    entries = ", ".join(f"{r!r}: {p:.3f}" for r, p in sorted(table.entries.items()))
    print(f"  {name} = {{{entries}}}")


m1, m2 = walkthrough_pair()
config = DecoderConfig(alpha=0.5, mode="greedy")
state = init(config, providers=(ToyProvider(m1), ToyProvider(m2)))

while state.termination is None:
    print(f"step {state.t}: emitted so far = {state.emitted!r}")
    show_table("d1", state.d1)
    show_table("d2", state.d2)
    p1 = marginal_char_distribution(state.d1)
    p2 = marginal_char_distribution(state.d2)
    j = mix(p1, p2, config.alpha)
    print("  next-char marginals:")
    for atom in j.atoms_in_order():
        print(
            f"    {render_atom(atom)!r}: P1={p1.get(atom):.3f} "
            f"P2={p2.get(atom):.3f} J={j.get(atom):.3f}"
        )
    outcome = step(state)
    print(
        f"  -> chose {render_atom(outcome.atom)!r} (argmax of: {outcome.provenance}), "
        f"refreshed={outcome.refreshed}"
    )
    print()

print(f"finished: {state.emitted!r} ({state.termination})")
