"""Probability-table and distribution primitives.

Everything here is a pure function on small immutable values: lookup
tables mapping residual token strings to probabilities, and per-atom
marginal distributions derived from them.  An "atom" is the unit of
emission: one Unicode scalar value in char mode, one byte in byte mode
(bytes are carried as latin-1 code points so atoms are always length-1
Python strings).  Two reserved atoms never appear in text:

* ``EOS_ATOM`` -- end of sequence; choosing it terminates decoding.
* ``EOT_MARK`` -- end of token; only ever a key of a marginal
  distribution (it carries the mass of the empty residual string) and
  never emitted.

Probabilities are kept in linear space, double precision.  Tables are
small (at most top-k entries) so there is no underflow concern, and
linear space keeps exact-oracle comparisons exact.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, NamedTuple

from .errors import EmptySupport, InvalidWeight, ZeroMass

# Reserved atoms live in the Unicode private use area so that tokens and
# residuals stay ordinary strings.  Providers reject text containing them.
EOS_ATOM = ""
EOT_MARK = ""
RESERVED_ATOMS = frozenset((EOS_ATOM, EOT_MARK))

# Rendered forms for files and logs.
EOS_LITERAL = "<eos>"

# Below this total mass a table is considered empty (distinguishes true
# empty support from float noise).
ZERO_MASS = 1e-12

# Normalization checks allow this much drift.
NORMALIZATION_TOL = 1e-9

CHAR_MODE = "char"
BYTE_MODE = "byte"
ATOM_MODES = (CHAR_MODE, BYTE_MODE)


def is_text_atom(atom: str) -> bool:
    return len(atom) == 1 and atom not in RESERVED_ATOMS


def atom_sort_key(atom: str) -> tuple[int, int]:
    """Canonical ordering: text atoms by code point, then EOT, then EOS."""
    if atom == EOS_ATOM:
        return (2, 0)
    if atom == EOT_MARK:
        return (1, 0)
    return (0, ord(atom))


def render_atom(atom: str) -> str:
    """Human/file-facing form of an atom (sentinels get literals)."""
    if atom == EOS_ATOM:
        return EOS_LITERAL
    if atom == EOT_MARK:
        return "<eot>"
    return atom


def text_to_atoms(text: str, atom_mode: str = CHAR_MODE) -> str:
    """Map text into atom space (identity for char mode, utf-8 bytes for byte mode)."""
    if atom_mode == CHAR_MODE:
        return text
    if atom_mode == BYTE_MODE:
        return text.encode("utf-8").decode("latin-1")
    raise ValueError(f"unknown atom mode: {atom_mode!r}")


def atoms_to_text(atoms: str, atom_mode: str = CHAR_MODE, errors: str = "replace") -> str:
    """Inverse of :func:`text_to_atoms`; byte mode may hold partial characters."""
    if atom_mode == CHAR_MODE:
        return atoms
    if atom_mode == BYTE_MODE:
        return atoms.encode("latin-1").decode("utf-8", errors=errors)
    raise ValueError(f"unknown atom mode: {atom_mode!r}")


@dataclass(frozen=True)
class Weight:
    """Mixing weight for model 1; model 2 receives the complement."""

    alpha: float

    def __post_init__(self):
        a = self.alpha
        if not isinstance(a, (int, float)) or not (0.0 <= a <= 1.0):
            raise InvalidWeight(f"alpha must lie in [0, 1], got {a!r}")


def as_weight(w: "Weight | float | int") -> Weight:
    return w if isinstance(w, Weight) else Weight(float(w))


@dataclass(frozen=True)
class TableOrigin:
    """Which query produced a table: model slot plus prefix length at query time."""

    model: str
    context_len: int = 0


@dataclass(frozen=True)
class ResidualTable:
    """A model's current lookup table: residual token string -> probability.

    Residuals are what remains of each candidate token after the atoms
    already emitted have been stripped; the empty string marks a token
    that ends exactly here.
    """

    entries: Mapping[str, float]
    origin: TableOrigin | None = None

    def total(self) -> float:
        return sum(self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def items(self) -> Iterable[tuple[str, float]]:
        return self.entries.items()

    def key(self) -> tuple[tuple[str, float], ...]:
        """Canonical hashable form (used for node merging in enumeration)."""
        return tuple(sorted(self.entries.items()))


@dataclass(frozen=True)
class CharDistribution:
    """Marginal next-atom distribution (may include EOT_MARK mass)."""

    mass: Mapping[str, float]

    @classmethod
    def from_mass(cls, mass: Mapping[str, float]) -> "CharDistribution":
        """Build, dropping exact-zero entries so support is meaningful."""
        return cls({a: m for a, m in mass.items() if m > 0.0})

    def total(self) -> float:
        return sum(self.mass.values())

    def get(self, atom: str, default: float = 0.0) -> float:
        return self.mass.get(atom, default)

    def support(self) -> frozenset[str]:
        return frozenset(self.mass)

    def atoms_in_order(self) -> list[str]:
        return sorted(self.mass, key=atom_sort_key)

    def max_mass(self) -> float:
        if not self.mass:
            raise EmptySupport("empty distribution has no maximum")
        return max(self.mass.values())

    def argmax_set(self) -> frozenset[str]:
        """All atoms attaining the maximal mass (exact float comparison)."""
        top = self.max_mass()
        return frozenset(a for a, m in self.mass.items() if m == top)

    def max_text_mass(self) -> float:
        """Largest mass over non-EOT keys; 0.0 if only EOT remains."""
        return max((m for a, m in self.mass.items() if a != EOT_MARK), default=0.0)

    def __len__(self) -> int:
        return len(self.mass)

    def __iter__(self) -> Iterator[str]:
        return iter(self.mass)


def marginal_char_distribution(d: ResidualTable) -> CharDistribution:
    """Sum table mass by first atom; an empty-string entry feeds EOT_MARK.

    Total mass is preserved, so a normalized table yields a normalized
    distribution.
    """
    if not d.entries:
        raise EmptySupport("cannot marginalize an empty table")
    mass: dict[str, float] = {}
    for residual, p in d.entries.items():
        atom = residual[0] if residual else EOT_MARK
        mass[atom] = mass.get(atom, 0.0) + p
    return CharDistribution.from_mass(mass)


def mix(p1: CharDistribution, p2: CharDistribution, w: "Weight | float") -> CharDistribution:
    """Convex combination ``alpha * p1 + (1 - alpha) * p2``.

    At the boundaries the result equals the surviving distribution
    exactly (bit-for-bit), and its support shrinks accordingly.
    """
    alpha = as_weight(w).alpha
    beta = 1.0 - alpha
    mass: dict[str, float] = {}
    for atom in set(p1.mass) | set(p2.mass):
        m = alpha * p1.get(atom) + beta * p2.get(atom)
        if m > 0.0:
            mass[atom] = m
    return CharDistribution(mass)


def select_atom(
    dist: CharDistribution,
    mode: str = "greedy",
    rng: random.Random | None = None,
) -> str:
    """Pick the next atom greedily or by sampling.

    Greedy consumes no randomness; ties break toward the smallest code
    point, with EOT_MARK after all text atoms and EOS_ATOM last.
    Sampling consumes exactly one draw from ``rng``.
    """
    if not dist.mass:
        raise EmptySupport("cannot select from an empty distribution")
    if mode == "greedy":
        top = dist.max_mass()
        return min((a for a, m in dist.mass.items() if m == top), key=atom_sort_key)
    if mode == "sample":
        if rng is None:
            raise ValueError("sampling requires an rng")
        target = rng.random() * dist.total()
        cumulative = 0.0
        atoms = dist.atoms_in_order()
        for atom in atoms:
            cumulative += dist.mass[atom]
            if cumulative > target:
                return atom
        return atoms[-1]  # float-edge fallback: target landed at/after total
    raise ValueError(f"unknown selection mode: {mode!r}")


def filter_and_strip(d: ResidualTable, a: str) -> ResidualTable:
    """Keep entries starting with atom ``a`` and strip that first atom.

    Probabilities are untouched, so the result is unnormalized; it may
    be empty when no entry matches (caller must then force a refresh).
    An entry equal to ``a`` becomes the empty string.
    """
    if not is_text_atom(a):
        raise ValueError(f"filter atom must be a text atom, got {render_atom(a)!r}")
    entries = {r[1:]: p for r, p in d.entries.items() if r.startswith(a)}
    return ResidualTable(entries, d.origin)


def renormalize(d: ResidualTable) -> ResidualTable:
    """Scale entries so they sum to 1; raises ZeroMass below the noise floor."""
    total = d.total()
    if total <= ZERO_MASS:
        raise ZeroMass(f"table mass {total} too small to renormalize")
    return ResidualTable({r: p / total for r, p in d.entries.items()}, d.origin)


class EotSplit(NamedTuple):
    """Result of removing the end-of-token entry from a table."""

    q_eot: float
    table: ResidualTable
    mandatory_refresh: bool


def split_eot(d: ResidualTable) -> EotSplit:
    """Split off the empty-string entry and renormalize the remainder.

    ``q_eot`` is the probability that the model's current token ends
    here.  When effectively all mass ends here the remainder cannot be
    renormalized and the split is flagged mandatory-refresh.
    """
    q = d.entries.get("", 0.0)
    rest = {r: p for r, p in d.entries.items() if r != ""}
    remaining = sum(rest.values())
    if remaining <= ZERO_MASS:
        return EotSplit(q, ResidualTable({}, d.origin), True)
    scaled = {r: p / remaining for r, p in rest.items()}
    return EotSplit(q, ResidualTable(scaled, d.origin), False)
