"""Full shift over a finite alphabet: words, cylinders and locally constant potentials.

A word is a plain tuple of symbol indices; it doubles as the cylinder of
sequences that start with it. Potentials are tables over words of length
``memory`` indexed big-endian (``sum(w[i] * q**(m-1-i))``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, LengthError, QPressError, UsageError

Word = tuple


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple
    aliases: Mapping[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        symbols = tuple(str(s) for s in self.symbols)
        if len(symbols) < 2:
            raise UsageError("alphabet needs at least two symbols")
        if len(set(symbols)) != len(symbols):
            raise UsageError(f"duplicate alphabet labels in {symbols}")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "aliases", dict(self.aliases))

    @property
    def q(self) -> int:
        return len(self.symbols)

    def index(self, label: str) -> int:
        try:
            return self.symbols.index(label)
        except ValueError:
            if label in self.aliases:
                return self.aliases[label]
            raise UsageError(f"unknown symbol {label!r} for alphabet {self.symbols}") from None

    def label(self, i: int) -> str:
        return self.symbols[i]

    def parse(self, text: str) -> Word:
        """Tokenize concatenated labels (longest match first) into a word."""
        tokens = sorted(set(self.symbols) | set(self.aliases), key=len, reverse=True)
        out = []
        pos = 0
        while pos < len(text):
            for tok in tokens:
                if text.startswith(tok, pos):
                    out.append(self.index(tok))
                    pos += len(tok)
                    break
            else:
                raise UsageError(f"cannot parse {text!r} at position {pos} against {self.symbols}")
        return tuple(out)

    def render(self, word: Sequence[int]) -> str:
        return "".join(self.symbols[i] for i in word)

    def check(self, word: Sequence[int]) -> Word:
        word = tuple(int(i) for i in word)
        for i in word:
            if not 0 <= i < self.q:
                raise UsageError(f"symbol index {i} outside [0, {self.q})")
        return word


CW_ALPHABET = Alphabet(("-1", "+1"), aliases={"-": 0, "+": 1})


def potts_alphabet(q: int) -> Alphabet:
    return Alphabet(tuple(str(k) for k in range(1, q + 1)))


def all_words(q: int, length: int) -> np.ndarray:
    """Every word of the given length as rows of an integer array, in index order."""
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(q**length, dtype=np.int64)
    powers = q ** np.arange(length - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % q


def word_index(word: Sequence[int], q: int) -> int:
    out = 0
    for s in word:
        out = out * q + int(s)
    return out


def window_indices(words: np.ndarray, q: int, m: int) -> np.ndarray:
    """Table indices of every length-``m`` window of each row of ``words``.

    Returns an array of shape ``(rows, cols - m + 1)``.
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    n = words.shape[1] - m + 1
    idx = np.zeros((words.shape[0], max(n, 0)), dtype=np.int64)
    for j in range(m):
        idx = idx * q + words[:, j : j + n]
    return idx


@dataclass(frozen=True, eq=False)
class LocallyConstantPotential:
    """Real function on the full shift depending on the first ``memory`` symbols."""

    alphabet: Alphabet
    memory: int
    table: np.ndarray

    def __post_init__(self):
        if self.memory < 1:
            raise FormatError("memory must be >= 1")
        table = np.array(self.table, dtype=float).ravel()
        expected = self.alphabet.q**self.memory
        if table.size != expected:
            raise FormatError(
                f"table has {table.size} entries, expected q^m = {self.alphabet.q}^{self.memory} = {expected}"
            )
        if not np.all(np.isfinite(table)):
            raise ValueError("potential table contains non-finite values")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def q(self) -> int:
        return self.alphabet.q

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.table)))

    A = sup_norm

    def __call__(self, word: Sequence[int]) -> float:
        if len(word) < self.memory:
            raise LengthError(f"potential of memory {self.memory} needs a word of length >= {self.memory}")
        return float(self.table[word_index(word[: self.memory], self.q)])

    def lifted(self, memory: int) -> "LocallyConstantPotential":
        """Same function viewed as a potential of larger memory."""
        if memory < self.memory:
            raise UsageError("cannot lift to a smaller memory")
        if memory == self.memory:
            return self
        table = np.repeat(self.table, self.q ** (memory - self.memory))
        return LocallyConstantPotential(self.alphabet, memory, table)

    def negated(self) -> "LocallyConstantPotential":
        return LocallyConstantPotential(self.alphabet, self.memory, -self.table)

    def relabeled(self, perm: Sequence[int]) -> "LocallyConstantPotential":
        """Potential composed with the symbol map ``i -> perm[i]``."""
        words = all_words(self.q, self.memory)
        src = window_indices(np.asarray(perm)[words], self.q, self.memory)[:, 0]
        return LocallyConstantPotential(self.alphabet, self.memory, self.table[src])

    def __eq__(self, other):
        if not isinstance(other, LocallyConstantPotential):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.memory == other.memory
            and np.array_equal(self.table, other.table)
        )

    __hash__ = None


def birkhoff_sum(pot: LocallyConstantPotential, w: Sequence[int], n: int) -> float:
    """Sum of the potential along the first ``n`` shifts of ``w``."""
    if n < 1:
        raise LengthError("n must be >= 1")
    if len(w) < n + pot.memory - 1:
        raise LengthError(f"word of length {len(w)} too short for n={n} with memory {pot.memory}")
    words = np.asarray(w[: n + pot.memory - 1], dtype=np.int64)[None, :]
    return float(np.sum(pot.table[window_indices(words, pot.q, pot.memory)]))


def hamiltonian(pot: LocallyConstantPotential, w: Sequence[int], n: int) -> float:
    s = birkhoff_sum(pot, w, n)
    return -(s * s) / (2.0 * n)


def cw_potential() -> LocallyConstantPotential:
    return LocallyConstantPotential(CW_ALPHABET, 1, [-1.0, 1.0])


def potts_indicator(q: int, k: int) -> LocallyConstantPotential:
    """Indicator of the cylinder of the k-th symbol (1-based) on q symbols."""
    if not 1 <= k <= q:
        raise UsageError(f"need 1 <= k <= q, got k={k}, q={q}")
    table = np.zeros(q)
    table[k - 1] = 1.0
    return LocallyConstantPotential(potts_alphabet(q), 1, table)


def from_table(alphabet: Alphabet, memory: int, values) -> LocallyConstantPotential:
    """Validate a user table given either in index order or keyed by label strings."""
    if isinstance(values, Mapping):
        q = alphabet.q
        table = np.full(q**memory, np.nan)
        seen = set()
        for key, value in values.items():
            word = alphabet.parse(key)
            if len(word) != memory:
                raise FormatError(f"key {key!r} is not a word of length {memory}")
            idx = word_index(word, q)
            if idx in seen:
                raise FormatError(f"word {key!r} appears twice")
            seen.add(idx)
            table[idx] = float(value)
        if len(seen) != q**memory:
            raise FormatError(f"table lists {len(seen)} words, expected {q**memory}")
        return LocallyConstantPotential(alphabet, memory, table)
    return LocallyConstantPotential(alphabet, memory, np.asarray(values, dtype=float))


def random_potential(q: int = 2, memory: int = 2, seed: int = 0, scale: float = 1.0):
    rng = np.random.default_rng(seed)
    alphabet = CW_ALPHABET if q == 2 else potts_alphabet(q)
    return LocallyConstantPotential(alphabet, memory, rng.uniform(-scale, scale, q**memory))


def builtin_potential(kind: str, q: int | None = None, k: int | None = None, **kwargs):
    if kind == "cw":
        return cw_potential()
    if kind == "potts_indicator":
        return potts_indicator(q, k)
    if kind == "from_table":
        return from_table(kwargs["alphabet"], kwargs["memory"], kwargs["values"])
    if kind == "random":
        return random_potential(q or 2, kwargs.get("memory", 2), kwargs.get("seed", 0))
    raise UsageError(f"unknown builtin potential {kind!r}")


def potential_to_dict(pot: LocallyConstantPotential) -> dict:
    words = all_words(pot.q, pot.memory)
    return {
        "alphabet": list(pot.alphabet.symbols),
        "memory": pot.memory,
        "values": {pot.alphabet.render(w): float(v) for w, v in zip(words, pot.table)},
    }


def potential_from_dict(doc: Mapping) -> LocallyConstantPotential:
    try:
        labels = doc["alphabet"]
        memory = int(doc["memory"])
        values = doc["values"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"potential document missing or bad field: {exc}") from None
    if not isinstance(values, Mapping):
        raise FormatError("'values' must map concatenated labels to reals")
    alphabet = Alphabet(tuple(labels))
    if alphabet.symbols == CW_ALPHABET.symbols:
        alphabet = CW_ALPHABET
    return from_table(alphabet, memory, values)


def load_potential(path: str | os.PathLike) -> LocallyConstantPotential:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise QPressError(f"cannot read potential {path}: {exc.strerror}") from None
    return potential_from_dict(doc)


def dump_potential(pot: LocallyConstantPotential, path: str | os.PathLike) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(potential_to_dict(pot), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise QPressError(f"cannot write potential to {path}: {exc.strerror}") from None


def parse_potential_spec(text: str) -> LocallyConstantPotential:
    """Resolve a CLI potential argument: ``cw``, ``potts:q:k``, ``random:q:m:seed`` or a JSON path."""
    if os.path.isfile(text):
        return load_potential(text)
    head, _, rest = text.partition(":")
    try:
        args = [int(a) for a in rest.split(":")] if rest else []
        if head == "cw" and not args:
            return cw_potential()
        if head == "potts" and len(args) == 2:
            return potts_indicator(*args)
        if head == "random" and len(args) == 3:
            return random_potential(args[0], args[1], args[2])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad potential {text!r}: {exc}") from None
    raise UsageError(f"unknown potential {text!r} (expected cw, potts:q:k, random:q:m:seed or a JSON file)")

