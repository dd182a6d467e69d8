"""Exact brute-force machinery over toy models.

Two enumerators, exact up to float arithmetic:

* :func:`exact_lm_string_distribution` -- the full output-string
  distribution of a toy token model, summing over every tokenization of
  every string.
* :func:`exact_chared_distribution` -- the full output-string
  distribution of the two-model character ensemble, expanding every
  stochastic branch (atom choice, then each model's token-end decision,
  including forced refreshes) instead of drawing from an rng.

The second one certifies the shipped decoder: it goes through the very
same :func:`chared.decoder.advance_table` bookkeeping and the same
marginalize/mix path, replacing only the randomness with branch
enumeration.  Mass that would need strings longer than the horizon is
reported separately as ``truncated_mass``, never renormalized away.

Expansion is breadth-first by emitted length with lexicographically
sorted processing inside a depth, so runs are bit-reproducible and any
failure has a deterministic witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .core import (
    EOS_ATOM,
    ResidualTable,
    Weight,
    as_weight,
    marginal_char_distribution,
    mix,
)
from .decoder import DecoderConfig, TERM_EOS, advance_table, decode
from .errors import CombinatorialBudgetExceeded, HorizonMismatch, ZeroMass
from .providers import ToyLanguageModel, TokenDistribution, ToyProvider

DEFAULT_NODE_CAP = 10**6


@dataclass(frozen=True)
class StringDistribution:
    """Probabilities of whole output strings up to a length horizon."""

    mass: Mapping[str, float]
    horizon: int
    truncated_mass: float = 0.0

    def total(self) -> float:
        return sum(self.mass.values()) + self.truncated_mass

    def get(self, text: str, default: float = 0.0) -> float:
        return self.mass.get(text, default)


@dataclass(frozen=True)
class BranchNode:
    """One live state of the enumeration: text so far, both tables, path mass."""

    z: str
    d1: ResidualTable
    d2: ResidualTable
    path_probability: float


@dataclass
class EnumerationTrace:
    """Optional diagnostics collected during exact ensemble enumeration."""

    track_martingale: bool = False
    # (depth, live mass, emitted mass, truncated mass) per expansion depth
    depth_mass: list[tuple[int, float, float, float]] = field(default_factory=list)
    # count of zero-support forced refreshes per model slot
    forced_refreshes: list[int] = field(default_factory=lambda: [0, 0])
    eot_refreshes: list[int] = field(default_factory=lambda: [0, 0])
    # (scope id, original token) -> {age in steps: sum of path * entry mass}
    martingale: dict[tuple[int, str], dict[int, float]] = field(default_factory=dict)


def total_variation(a: StringDistribution, b: StringDistribution) -> float:
    """Half the L1 distance over the union of supports plus the truncation gap."""
    if a.horizon != b.horizon:
        raise HorizonMismatch(f"horizons differ: {a.horizon} vs {b.horizon}")
    keys = set(a.mass) | set(b.mass)
    dist = sum(abs(a.get(k) - b.get(k)) for k in keys)
    return 0.5 * dist + 0.5 * abs(a.truncated_mass - b.truncated_mass)


def string_distribution_to_array(dist: StringDistribution) -> list[dict]:
    """Frozen-output form: a JSON-ready array of {"text", "p"} objects."""
    return [{"text": text, "p": dist.mass[text]} for text in sorted(dist.mass)]


def string_distribution_from_array(items: list[dict], horizon: int) -> StringDistribution:
    """Rebuild a distribution from its frozen array (truncated mass is the gap to 1)."""
    mass = {item["text"]: float(item["p"]) for item in items}
    return StringDistribution(mass, horizon, truncated_mass=max(0.0, 1.0 - sum(mass.values())))


def exact_lm_string_distribution(
    m: ToyLanguageModel, prompt: str, horizon: int
) -> StringDistribution:
    """P(text) for a toy model, summed over all tokenizations of each text.

    Texts longer than ``horizon`` contribute to ``truncated_mass``.
    """
    mass: dict[str, float] = {}
    truncated = 0.0
    frontier: dict[str, float] = {"": 1.0}
    while frontier:
        text = min(frontier, key=lambda s: (len(s), s))
        path = frontier.pop(text)
        dist = m.conditional(prompt + text)
        for token, p in dist.entries.items():
            if p <= 0.0:
                continue
            if token == EOS_ATOM:
                mass[text] = mass.get(text, 0.0) + path * p
                continue
            grown = text + token
            if len(grown) > horizon:
                truncated += path * p
            else:
                frontier[grown] = frontier.get(grown, 0.0) + path * p
    return StringDistribution(mass, horizon, truncated)


def _reach_mass(m: ToyLanguageModel, prompt: str, w: str) -> float:
    """Mass of token paths whose concatenation is exactly ``w``."""
    if w == "":
        return 1.0
    frontier: dict[str, float] = {"": 1.0}
    reached = 0.0
    while frontier:
        text = min(frontier, key=len)
        path = frontier.pop(text)
        dist = m.conditional(prompt + text)
        for token, p in dist.entries.items():
            if p <= 0.0 or token == EOS_ATOM:
                continue
            grown = text + token
            if grown == w:
                reached += path * p
            elif len(grown) < len(w) and w.startswith(grown):
                frontier[grown] = frontier.get(grown, 0.0) + path * p
    return reached


def prefix_mass(m: ToyLanguageModel, prompt: str, w: str) -> float:
    """Probability that the model's output text starts with ``w``.

    Exact and horizon-free: once a token path covers ``w`` its whole
    continuation mass counts, so the walk visits only proper prefixes.
    """
    if w == "":
        return 1.0
    frontier: dict[str, float] = {"": 1.0}
    covered = 0.0
    while frontier:
        text = min(frontier, key=len)
        path = frontier.pop(text)
        dist = m.conditional(prompt + text)
        for token, p in dist.entries.items():
            if p <= 0.0 or token == EOS_ATOM:
                continue
            grown = text + token
            k = min(len(grown), len(w))
            if grown[:k] != w[:k]:
                continue
            if len(grown) >= len(w):
                covered += path * p
            else:
                frontier[grown] = frontier.get(grown, 0.0) + path * p
    return covered


def char_level_conditional(m: ToyLanguageModel, prompt: str, w: str) -> TokenDistribution:
    """Next-atom conditional of the model's text process at output ``w``.

    Ratios of prefix masses; raises ZeroMass when ``w`` itself has no
    mass (the conditional does not exist there).
    """
    denom = prefix_mass(m, prompt, w)
    if denom <= 0.0:
        raise ZeroMass(f"prefix {w!r} is unreachable (mass {denom})")
    entries: dict[str, float] = {}
    for atom in sorted(m.alphabet):
        num = prefix_mass(m, prompt, w + atom)
        if num > 0.0:
            entries[atom] = num / denom
    ends = _reach_mass(m, prompt, w)
    if ends > 0.0:
        eos = ends * m.conditional(prompt + w).entries.get(EOS_ATOM, 0.0)
        if eos > 0.0:
            entries[EOS_ATOM] = eos / denom
    total = sum(entries.values())
    return TokenDistribution({t: p / total for t, p in entries.items()})


def characterize_toy_lm(
    m: ToyLanguageModel, horizon: int, prompt: str = ""
) -> ToyLanguageModel:
    """Rebuild a toy model with single-atom tokens and the same text process.

    Conditionals are prefix-mass ratios of ``m``'s string distribution,
    so up to ``horizon`` the two models induce identical output
    distributions while tokenizing completely differently.  Contexts are
    materialized for every reachable prefix of length at most
    ``horizon``; anything else stays unknown.
    """
    contexts: dict[str, TokenDistribution] = {}
    vocab: set[str] = {EOS_ATOM}
    queue = [""]
    seen = {""}
    while queue:
        w = queue.pop(0)
        dist = char_level_conditional(m, prompt, w)
        contexts[prompt + w] = dist
        for token in dist.entries:
            vocab.add(token)
            grown = w + token
            if token != EOS_ATOM and len(grown) <= horizon and grown not in seen:
                seen.add(grown)
                queue.append(grown)
    return ToyLanguageModel(
        alphabet=m.alphabet,
        vocab=frozenset(vocab),
        contexts=contexts,
        default=None,
    )


class _ScopeTracker:
    """Follows model-1 tables from each fresh query for the invariant check.

    A scope starts whenever model 1's table is freshly populated.  While
    a branch stays inside a scope, the entry that originated from token
    ``T`` of the fresh query is exactly the residual ``T[k:]`` after k
    more atoms, so ``sum over live branches of path * entry`` can be
    accumulated per (scope, token) and per age.
    """

    def __init__(self):
        self.roots: list[dict[str, float]] = []
        self.sums: dict[tuple[int, str], dict[int, float]] = {}

    def new_scope(self, table: ResidualTable) -> int:
        self.roots.append(dict(table.entries))
        return len(self.roots) - 1

    def collect(self, scope: int, birth: int, node: BranchNode) -> None:
        consumed = node.z[birth:]
        age = len(consumed)
        for token in self.roots[scope]:
            if len(token) > age and token.startswith(consumed):
                entry = node.d1.entries.get(token[age:], 0.0)
                ages = self.sums.setdefault((scope, token), {})
                ages[age] = ages.get(age, 0.0) + node.path_probability * entry


def exact_chared_distribution(
    m1: ToyLanguageModel,
    m2: ToyLanguageModel,
    w: Weight | float,
    prompts: tuple[str, str] = ("", ""),
    horizon: int = 8,
    mode: str = "sample",
    node_cap: int = DEFAULT_NODE_CAP,
    trace: EnumerationTrace | None = None,
) -> StringDistribution:
    """Full output-string distribution of the two-model character ensemble.

    Sampling mode expands every branch a live decode could take, with
    the branch weight the decode would give it; greedy mode is the point
    mass on the deterministic decode.  Branch bookkeeping goes through
    the decoder's own :func:`advance_table`.
    """
    alpha = as_weight(w).alpha
    providers = (
        ToyProvider(m1, prompts[0], top_k=None),
        ToyProvider(m2, prompts[1], top_k=None),
    )
    if mode == "greedy":
        record = decode(
            DecoderConfig(alpha=alpha, mode="greedy", max_atoms=horizon),
            providers=providers,
        )
        if record.termination == TERM_EOS and len(record.atom_text) <= horizon:
            return StringDistribution({record.atom_text: 1.0}, horizon, 0.0)
        return StringDistribution({}, horizon, 1.0)
    if mode != "sample":
        raise ValueError(f"unknown mode {mode!r}")

    tracking = trace is not None and trace.track_martingale
    scopes = _ScopeTracker() if tracking else None

    def fetch(slot: int, emitted: str) -> ResidualTable:
        return providers[slot].next_token_distribution(prompts[slot] + emitted).as_residual_table()

    d1_root = fetch(0, "")
    d2_root = fetch(1, "")
    root_scope = scopes.new_scope(d1_root) if tracking else 0
    # node key: (z, d1 entries, d2 entries, m1 scope id, scope birth length)
    frontier: dict[tuple, float] = {
        ("", d1_root.key(), d2_root.key(), root_scope, 0): 1.0
    }
    emitted_mass: dict[str, float] = {}
    truncated = 0.0

    for depth in range(horizon + 1):
        if not frontier:
            break
        if trace is not None:
            live = sum(frontier.values())
            trace.depth_mass.append(
                (depth, live, sum(emitted_mass.values()), truncated)
            )
        next_frontier: dict[tuple, float] = {}
        for key in sorted(frontier):
            z, d1_key, d2_key, scope, birth = key
            path = frontier[key]
            node = BranchNode(z, ResidualTable(dict(d1_key)), ResidualTable(dict(d2_key)), path)
            if tracking:
                scopes.collect(scope, birth, node)
            p1 = marginal_char_distribution(node.d1)
            p2 = marginal_char_distribution(node.d2)
            mixture = mix(p1, p2, alpha)
            if depth == horizon:
                # Out of length budget: only the stop branch still yields a string.
                for atom, weight_a in mixture.mass.items():
                    if atom == EOS_ATOM:
                        emitted_mass[z] = emitted_mass.get(z, 0.0) + path * weight_a
                    else:
                        truncated += path * weight_a
                continue
            for atom in mixture.atoms_in_order():
                weight_a = mixture.get(atom)
                if atom == EOS_ATOM:
                    emitted_mass[z] = emitted_mass.get(z, 0.0) + path * weight_a
                    continue
                grown = z + atom
                adv1 = advance_table(node.d1, atom, lambda g=grown: fetch(0, g))
                adv2 = advance_table(node.d2, atom, lambda g=grown: fetch(1, g))
                if trace is not None:
                    for slot, adv in ((0, adv1), (1, adv2)):
                        if adv.forced:
                            trace.forced_refreshes[slot] += 1
                        elif any(refreshed for _, _, refreshed in adv.branches()):
                            trace.eot_refreshes[slot] += 1
                for w1, t1, refreshed1 in adv1.branches():
                    if t1 is None:
                        t1 = adv1.fresh()
                    if refreshed1:
                        child_scope = scopes.new_scope(t1) if tracking else 0
                        child_birth = len(grown)
                    else:
                        child_scope, child_birth = scope, birth
                    for w2, t2, refreshed2 in adv2.branches():
                        if t2 is None:
                            t2 = adv2.fresh()
                        child = (grown, t1.key(), t2.key(), child_scope, child_birth)
                        next_frontier[child] = (
                            next_frontier.get(child, 0.0) + path * weight_a * w1 * w2
                        )
        if len(next_frontier) > node_cap:
            raise CombinatorialBudgetExceeded(
                f"{len(next_frontier)} live branches exceed the cap of {node_cap}"
            )
        frontier = next_frontier

    if trace is not None:
        trace.depth_mass.append(
            (horizon + 1, 0.0, sum(emitted_mass.values()), truncated)
        )
        if tracking:
            trace.martingale = scopes.sums
    return StringDistribution(emitted_mass, horizon, truncated)
