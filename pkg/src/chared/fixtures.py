"""Canonical toy models and generators for desk-scale verification.

The theorem suite needs pairs of token models that (a) share an output
language, (b) tokenize it differently, and (c) never strand the
ensemble: at every reachable point both models must give positive mass
to the same set of next atoms, otherwise one model's table can empty
and its behavior beyond that point is no longer pinned down by its
output distribution (equal output distributions say nothing about
continuations of zero-probability prefixes).

:func:`model_on_language` builds such models constructively.  Token
sets chosen at each context are prefix-complete within the language
trie -- whenever a chosen token can be extended, sibling extensions
cover every continuation char -- so residual tables always expose the
full continuation support, and tokens that are proper prefixes of other
tokens give genuinely stochastic end-of-token decisions.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import EOS_ATOM
from .providers import TokenDistribution, ToyLanguageModel


def _toy(alphabet: str, contexts: dict[str, dict[str, float]],
         default: dict[str, float] | None = None) -> ToyLanguageModel:
    """Assemble a model from plain dicts (tokens may use EOS_ATOM directly)."""
    vocab: set[str] = set()
    built: dict[str, TokenDistribution] = {}
    for text, dist in contexts.items():
        vocab.update(dist)
        built[text] = TokenDistribution(dict(dist)).validate(f"context {text!r}")
    default_dist = None
    if default is not None:
        vocab.update(default)
        default_dist = TokenDistribution(dict(default)).validate("default")
    return ToyLanguageModel(frozenset(alphabet), frozenset(vocab), built, default_dist)


def walkthrough_pair() -> tuple[ToyLanguageModel, ToyLanguageModel]:
    """The cat/cats pair: one model favors the short token, one the long."""
    m1 = _toy(
        "acst",
        {
            "": {"cat": 0.9, "cats": 0.1},
            "cat": {"s": 0.6, EOS_ATOM: 0.4},
            "cats": {EOS_ATOM: 1.0},
        },
    )
    m2 = _toy(
        "acst",
        {
            "": {"cats": 0.85, "ca": 0.15},
            "ca": {"t": 0.8, "ts": 0.2},
            "cat": {"s": 0.85, EOS_ATOM: 0.15},
            "cats": {EOS_ATOM: 1.0},
        },
    )
    return m1, m2


def two_tokenization_pair() -> tuple[ToyLanguageModel, ToyLanguageModel]:
    """P("ab") = 1 on both sides: two tokenizations vs a pure char model."""
    m1 = _toy(
        "ab",
        {
            "": {"ab": 0.5, "a": 0.5},
            "a": {"b": 1.0},
            "ab": {EOS_ATOM: 1.0},
        },
    )
    m2 = _toy(
        "ab",
        {
            "": {"a": 1.0},
            "a": {"b": 1.0},
            "ab": {EOS_ATOM: 1.0},
        },
    )
    return m1, m2


def looping_pair() -> tuple[ToyLanguageModel, ToyLanguageModel]:
    """Infinite-support models (every horizon leaves truncated mass)."""
    m1 = _toy("ab", {}, default={"ab": 0.6, EOS_ATOM: 0.4})
    m2 = _toy("ab", {}, default={"a": 0.5, "b": 0.2, EOS_ATOM: 0.3})
    return m1, m2


def _trie_children(prefixes: set[str], w: str) -> list[str]:
    return sorted({p[len(w)] for p in prefixes if len(p) > len(w) and p.startswith(w)})


def _token_set(
    prefixes: set[str],
    terminals: set[str],
    w: str,
    rng: random.Random,
    budget: int,
    stop_prob: float,
    both_prob: float,
) -> set[str]:
    """Prefix-complete token set covering every continuation char at ``w``.

    A token boundary is always available at a terminal node, so every
    language string keeps positive stopping mass no matter how the
    longer tokens span it.
    """
    tokens: set[str] = set()
    for a in _trie_children(prefixes, w):
        node = w + a
        grandchildren = _trie_children(prefixes, node)
        if budget <= 1 or not grandchildren or rng.random() < stop_prob:
            tokens.add(a)
        else:
            sub = _token_set(prefixes, terminals, node, rng, budget - 1, stop_prob, both_prob)
            tokens.update(a + s for s in sub)
            if node in terminals or rng.random() < both_prob:
                tokens.add(a)  # both "ends here" and extensions: stochastic token end
    return tokens


def model_on_language(
    strings: list[str],
    seed: int,
    max_token_len: int = 2,
    stop_prob: float = 0.35,
    both_prob: float = 0.5,
    prompt: str = "",
) -> ToyLanguageModel:
    """Random token model whose output support is exactly ``strings``.

    Context keys carry ``prompt`` so the model can be queried the way
    the decoder queries it.  All probabilities are small integer ratios.
    """
    if not strings or any(not s for s in strings):
        raise ValueError("need nonempty strings")
    rng = random.Random(seed)
    prefixes = {s[:i] for s in strings for i in range(len(s) + 1)}
    terminal = set(strings)
    alphabet = sorted({c for s in strings for c in s} | set(prompt))
    contexts: dict[str, dict[str, float]] = {}
    for w in sorted(prefixes, key=lambda p: (len(p), p)):
        children = _trie_children(prefixes, w)
        if not children:
            contexts[prompt + w] = {EOS_ATOM: 1.0}
            continue
        tokens = sorted(
            _token_set(prefixes, terminal, w, rng, max_token_len, stop_prob, both_prob)
        )
        weights = {t: rng.randint(1, 9) for t in tokens}
        if w in terminal:
            weights[EOS_ATOM] = rng.randint(1, 9)
        total = sum(weights.values())
        contexts[prompt + w] = {t: n / total for t, n in weights.items()}
    return _toy("".join(alphabet), contexts)


@dataclass(frozen=True)
class FixturePair:
    name: str
    m1: ToyLanguageModel
    m2: ToyLanguageModel
    prompts: tuple[str, str] = ("", "")
    horizon: int = 6


def theorem_suite() -> list[FixturePair]:
    """The standing desk-scale verification suite (small vocabularies,
    short horizons, varied languages and tokenizations)."""
    pairs: list[FixturePair] = []
    m1, m2 = walkthrough_pair()
    pairs.append(FixturePair("catcats", m1, m2, horizon=5))
    a1, a2 = two_tokenization_pair()
    pairs.append(FixturePair("two_tokenization_ab", a1, a2, horizon=3))
    pairs.append(FixturePair("two_tokenization_swapped", a2, a1, horizon=3))

    languages: list[tuple[str, list[str], int]] = [
        ("fork", ["aa", "ab", "b"], 3),
        ("braid", ["aba", "abb", "bab", "bb"], 4),
        ("chain", ["xy", "xyx", "xyxy"], 5),
        ("feline", ["cat", "cab", "cb"], 4),
        ("runs", ["aaaa", "aab", "ba"], 5),
        ("single_deep", ["aabb"], 5),
        ("square", ["ab", "ba", "aa", "bb"], 3),
        ("triple", ["abc", "ac", "bc"], 4),
    ]
    for i, (name, strings, horizon) in enumerate(languages):
        m1 = model_on_language(strings, seed=101 + 7 * i, max_token_len=2)
        m2 = model_on_language(strings, seed=500 + 13 * i, max_token_len=3)
        pairs.append(FixturePair(name, m1, m2, horizon=horizon))

    prompted_m1 = model_on_language(["on", "off"], seed=41, prompt="Q:")
    prompted_m2 = model_on_language(["on", "off"], seed=42, max_token_len=3, prompt="A ")
    pairs.append(
        FixturePair("prompted", prompted_m1, prompted_m2, prompts=("Q:", "A "), horizon=4)
    )

    for pair in pairs:
        for model in (pair.m1, pair.m2):
            assert len(model.vocab) <= 12, f"{pair.name}: vocab too large"
        assert pair.horizon <= 10
    return pairs


def specialist_models() -> tuple[ToyLanguageModel, ToyLanguageModel]:
    """Two prompt-sensitive specialists for sweep tests.

    Model 1 nails the "A:" task and leans wrong on "B:";
    model 2 is the mirror image.  Under greedy mixing both answers come
    out right for weights in (1/6, 5/6), so the summed score peaks
    strictly inside the grid.
    """
    m1 = _toy(
        "abAB:",
        {
            "A:": {"aa": 1.0},
            "A:aa": {EOS_ATOM: 1.0},
            "B:": {"bb": 0.4, "ba": 0.6},
            "B:bb": {EOS_ATOM: 1.0},
            "B:ba": {EOS_ATOM: 1.0},
        },
        default={EOS_ATOM: 1.0},
    )
    m2 = _toy(
        "abAB:",
        {
            "B:": {"bb": 1.0},
            "B:bb": {EOS_ATOM: 1.0},
            "A:": {"aa": 0.4, "ab": 0.6},
            "A:aa": {EOS_ATOM: 1.0},
            "A:ab": {EOS_ATOM: 1.0},
        },
        default={EOS_ATOM: 1.0},
    )
    return m1, m2


def annotated_demo_models() -> tuple[ToyLanguageModel, ToyLanguageModel]:
    """A pair whose greedy mix at weight 0.45 alternates provenance.

    Decoding emits "so 6." with every atom the argmax of at least one
    model; token ends cover the whole range (mid-token continues,
    stochastic ends, forced-by-construction ends).
    """
    m1 = _toy(
        " .,67alost",
        {
            "": {"so": 0.42, "sa": 0.18, "t": 0.4},
            "so": {"l": 0.55, " ": 0.36, " 6": 0.09},
            "so ": {"6": 0.8, "7": 0.2},
            "so 6": {".": 0.9, ",": 0.1},
            "so 6.": {EOS_ATOM: 1.0},
        },
        default={EOS_ATOM: 1.0},
    )
    m2 = _toy(
        " !.68losuw",
        {
            "": {"s": 0.5, "w": 0.5},
            "s": {"u": 0.6, "o": 0.4},
            "so": {" ": 0.9, "l": 0.1},
            "so ": {"6": 0.6, "8": 0.4},
            "so 6": {"!": 0.55, ".": 0.45},
            "so 6.": {EOS_ATOM: 1.0},
        },
        default={EOS_ATOM: 1.0},
    )
    return m1, m2
