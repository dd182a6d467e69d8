"""The character-wise ensemble decoding state machine.

One step does, in order:

1. marginalize both residual tables into next-atom distributions
   ``P1``, ``P2`` (always free of end-of-token mass at this point);
2. mix them into ``J = alpha * P1 + (1 - alpha) * P2``;
3. pick an atom from ``J`` (greedy or sampled) -- a stop atom
   terminates here;
4. per model, keep only table entries consistent with the chosen atom
   and strip it; a model whose table empties is force-refreshed with
   the full prefix (prompt plus everything emitted);
5. per surviving model, split off the end-of-token mass ``q`` and
   decide whether the token ended (greedy: ``q`` at least the largest
   single-atom mass, ties refreshing; sampled: Bernoulli(q)); a refresh
   re-queries the model with the full prefix, otherwise the remainder
   table carries over;
6. advance the step counter.

Randomness is consumed in a fixed order (atom draw, model-1 token-end
draw, model-2 token-end draw) regardless of provider behavior, so a
seed fully determines a run.  The exact-enumeration oracle reuses
:func:`advance_table` and the same mixing path rather than
reimplementing any of this.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from .core import (
    CHAR_MODE,
    EOS_ATOM,
    CharDistribution,
    ResidualTable,
    TableOrigin,
    as_weight,
    atoms_to_text,
    filter_and_strip,
    marginal_char_distribution,
    mix,
    renormalize,
    select_atom,
    split_eot,
    ZERO_MASS,
)
from .errors import DecodeFinished, ProviderUnavailable
from .providers import ProviderDescriptor, TokenProvider, build_provider

TERM_EOS = "eos"
TERM_MAX_ATOMS = "max_atoms"
TERM_PROVIDER_ERROR = "provider_error"


@dataclass(frozen=True)
class DecoderConfig:
    alpha: float
    mode: str = "greedy"  # "greedy" | "sample"
    seed: int = 0
    max_atoms: int = 2048
    providers: tuple[ProviderDescriptor, ProviderDescriptor] | None = None
    stop_atoms: frozenset[str] = frozenset({EOS_ATOM})
    atom_mode: str = CHAR_MODE
    # Expert knob: decide token ends with a different rule than atom
    # selection (None couples it to `mode`).  Not used by theorem tests.
    eot_mode: str | None = None

    def __post_init__(self):
        as_weight(self.alpha)
        if self.mode not in ("greedy", "sample"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.eot_mode not in (None, "greedy", "sample"):
            raise ValueError(f"unknown eot_mode {self.eot_mode!r}")
        if self.max_atoms < 1:
            raise ValueError("max_atoms must be at least 1")

    @property
    def effective_eot_mode(self) -> str:
        return self.eot_mode or self.mode


@dataclass(frozen=True)
class StepOutcome:
    """What one step emitted and why.

    ``provenance`` says whether the atom attained maximal mass in
    model 1's marginal, model 2's, both, or neither -- computed from the
    pre-mix marginals of this step.  ``p1``/``p2``/``j`` are the atom's
    masses in those three distributions.
    """

    t: int
    atom: str
    provenance: str  # "m1" | "m2" | "both" | "neither"
    p1: float
    p2: float
    j: float
    refreshed: tuple[bool, bool] = (False, False)
    forced_refresh: tuple[bool, bool] = (False, False)


@dataclass(frozen=True)
class GenerationRecord:
    """Everything a decode produced.

    ``atoms`` holds every chosen atom including a terminal stop atom,
    one outcome per atom; ``text`` exposes the emitted output with stop
    atoms removed (and bytes decoded in byte mode).
    """

    atoms: tuple[str, ...]
    outcomes: tuple[StepOutcome, ...]
    termination: str
    stop_atoms: frozenset[str] = frozenset({EOS_ATOM})
    atom_mode: str = CHAR_MODE

    @property
    def atom_text(self) -> str:
        """Emitted text in atom space, stop atoms excluded."""
        return "".join(a for a in self.atoms if a not in self.stop_atoms)

    @property
    def text(self) -> str:
        return atoms_to_text(self.atom_text, self.atom_mode)


class GreedyDecisions:
    """Deterministic decisions; consumes no randomness."""

    def pick_atom(self, mixture: CharDistribution) -> str:
        return select_atom(mixture, "greedy")

    def pick_refresh(self, q_eot: float, marginal: CharDistribution) -> bool:
        # Token ends iff its mass is at least the best single-atom mass;
        # a tie refreshes (re-querying is neutral for a deterministic model).
        return q_eot >= marginal.max_text_mass()


class SampledDecisions:
    """Stochastic decisions drawing from one shared stream."""

    def __init__(self, rng: random.Random):
        self.rng = rng

    def pick_atom(self, mixture: CharDistribution) -> str:
        return select_atom(mixture, "sample", self.rng)

    def pick_refresh(self, q_eot: float, marginal: CharDistribution) -> bool:
        return self.rng.random() < q_eot


def _decisions_for(config: DecoderConfig, rng: random.Random):
    sampled = SampledDecisions(rng)
    atom_src = GreedyDecisions() if config.mode == "greedy" else sampled
    eot_src = GreedyDecisions() if config.effective_eot_mode == "greedy" else sampled
    return atom_src, eot_src


@dataclass
class TableAdvance:
    """Outcome of filtering one model's table by the chosen atom.

    Either the table emptied (``forced``: the only valid continuation is
    a fresh query), or it survived with end-of-token mass ``q_eot``, the
    post-split remainder ``continue_table``, and the post-filter
    marginal used by the greedy token-end rule.  ``mandatory`` marks the
    q == 1 case where no remainder exists.  ``fresh()`` lazily performs
    (and caches) the refresh query.
    """

    forced: bool
    mandatory: bool
    q_eot: float
    marginal: CharDistribution | None
    continue_table: ResidualTable | None
    _fetch: Callable[[], ResidualTable]
    _fresh: ResidualTable | None = None

    def fresh(self) -> ResidualTable:
        if self._fresh is None:
            self._fresh = self._fetch()
        return self._fresh

    def branches(self) -> list[tuple[float, ResidualTable | None, bool]]:
        """(probability, refresh?) branches for exact enumeration.

        Returns (weight, table-or-None, refreshed) triples where a
        ``None`` table stands for "fetch fresh"; weights sum to 1.
        """
        if self.forced or self.mandatory:
            return [(1.0, None, True)]
        out: list[tuple[float, ResidualTable | None, bool]] = []
        if 1.0 - self.q_eot > 0.0:
            out.append((1.0 - self.q_eot, self.continue_table, False))
        if self.q_eot > 0.0:
            out.append((self.q_eot, None, True))
        return out


def advance_table(
    table: ResidualTable, atom: str, fetch: Callable[[], ResidualTable]
) -> TableAdvance:
    """Filter/strip one table by the chosen atom and classify what follows.

    This is the single implementation of the per-model step-4/step-5
    bookkeeping; both the live decoder and the exact enumerator go
    through it.
    """
    filtered = filter_and_strip(table, atom)
    if filtered.total() <= ZERO_MASS:
        # The chosen atom had no support in this model: only a fresh
        # query can restore a valid table, and no token-end decision is
        # made this step.
        return TableAdvance(True, False, 0.0, None, None, fetch)
    normalized = renormalize(filtered)
    marginal = marginal_char_distribution(normalized)
    q_eot, remainder, mandatory = split_eot(normalized)
    return TableAdvance(False, mandatory, q_eot, marginal, remainder if not mandatory else None, fetch)


class DecoderState:
    """Mutable per-decode state, confined to one logical thread."""

    def __init__(
        self,
        config: DecoderConfig,
        providers: tuple[TokenProvider, TokenProvider],
        rng: random.Random | None = None,
    ):
        self.config = config
        self.providers = providers
        self.prompts = (providers[0].prompt, providers[1].prompt)
        self.rng = rng if rng is not None else random.Random(config.seed)
        self._atom_decisions, self._eot_decisions = _decisions_for(config, self.rng)
        self.z: list[str] = []
        self.t = 0
        self.d1 = self._fetch(0, "")
        self.d2 = self._fetch(1, "")
        self.termination: str | None = None

    def _fetch(self, slot: int, emitted: str) -> ResidualTable:
        prefix = self.prompts[slot] + emitted
        dist = self.providers[slot].next_token_distribution(prefix)
        return dist.as_residual_table(TableOrigin(f"m{slot + 1}", len(prefix)))

    @property
    def tables(self) -> tuple[ResidualTable, ResidualTable]:
        return (self.d1, self.d2)

    @property
    def emitted(self) -> str:
        return "".join(self.z)


def init(
    config: DecoderConfig,
    providers: tuple[TokenProvider, TokenProvider] | None = None,
    rng: random.Random | None = None,
) -> DecoderState:
    """Query both models with their own prompts and set up the stream."""
    if providers is None:
        if config.providers is None:
            raise ValueError("config carries no provider descriptors and none were given")
        providers = (build_provider(config.providers[0]), build_provider(config.providers[1]))
    return DecoderState(config, providers, rng)


def provenance_of(atom: str, p1: CharDistribution, p2: CharDistribution) -> str:
    in1 = p1.get(atom) == p1.max_mass() if p1.mass else False
    in2 = p2.get(atom) == p2.max_mass() if p2.mass else False
    if in1 and in2:
        return "both"
    if in1:
        return "m1"
    if in2:
        return "m2"
    return "neither"


def step(state: DecoderState) -> StepOutcome:
    """Advance one atom.  State mutates only if the step completes."""
    if state.termination is not None:
        raise DecodeFinished(f"decode already terminated ({state.termination})")
    config = state.config
    p1 = marginal_char_distribution(state.d1)
    p2 = marginal_char_distribution(state.d2)
    mixture = mix(p1, p2, config.alpha)
    atom = state._atom_decisions.pick_atom(mixture)
    prov = provenance_of(atom, p1, p2)

    if atom in config.stop_atoms:
        outcome = StepOutcome(state.t, atom, prov, p1.get(atom), p2.get(atom), mixture.get(atom))
        state.termination = TERM_EOS
        return outcome

    emitted = state.emitted + atom
    refreshed = [False, False]
    forced = [False, False]
    new_tables: list[ResidualTable] = []
    for slot, table in enumerate(state.tables):
        adv = advance_table(table, atom, lambda s=slot: state._fetch(s, emitted))
        if adv.forced or adv.mandatory:
            new_tables.append(adv.fresh())
            refreshed[slot] = True
            forced[slot] = adv.forced
        elif state._eot_decisions.pick_refresh(adv.q_eot, adv.marginal):
            new_tables.append(adv.fresh())
            refreshed[slot] = True
        else:
            new_tables.append(adv.continue_table)

    outcome = StepOutcome(
        state.t,
        atom,
        prov,
        p1.get(atom),
        p2.get(atom),
        mixture.get(atom),
        refreshed=(refreshed[0], refreshed[1]),
        forced_refresh=(forced[0], forced[1]),
    )
    state.z.append(atom)
    state.d1, state.d2 = new_tables
    state.t += 1
    return outcome


def decode(
    config: DecoderConfig,
    providers: tuple[TokenProvider, TokenProvider] | None = None,
    rng: random.Random | None = None,
    on_step: Callable[[StepOutcome], None] | None = None,
) -> GenerationRecord:
    """Run steps until a stop atom, the atom budget, or a provider failure."""
    outcomes: list[StepOutcome] = []
    atoms: list[str] = []
    try:
        state = init(config, providers, rng)
        while state.termination is None and state.t < config.max_atoms:
            outcome = step(state)
            outcomes.append(outcome)
            atoms.append(outcome.atom)
            if on_step is not None:
                on_step(outcome)
        termination = state.termination or TERM_MAX_ATOMS
    except ProviderUnavailable:
        termination = TERM_PROVIDER_ERROR
    return GenerationRecord(
        atoms=tuple(atoms),
        outcomes=tuple(outcomes),
        termination=termination,
        stop_atoms=config.stop_atoms,
        atom_mode=config.atom_mode,
    )
