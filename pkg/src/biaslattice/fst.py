"""Word-level weighted biasing automata built from personal phrase catalogs.

A catalog (contact names, device names, application names) compiles into a
trie-shaped automaton whose arcs are labelled with whole words.  Arcs leaving
a state are kept in strict lexicographic order so prefix lookups can use
binary search.  The start state carries a zero-cost "phi" self-loop that
absorbs any word not listed on its outgoing arcs.

Automata are immutable after construction and safe to share across threads;
all mutation happens inside the builder.
"""

from __future__ import annotations

import bisect
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple

from .errors import InputFormatError

DEFAULT_WEIGHT = -1.0
DEFAULT_DELIMITER = "_"

_MAGIC = b"BLFST1"


class CatalogError(InputFormatError, ValueError):
    """A phrase catalog violates the builder's preconditions."""


class Arc(NamedTuple):
    word: str
    weight: float
    nextstate: int


@dataclass(frozen=True)
class CatalogEntry:
    """One catalog phrase; ``weight`` is applied to every word arc of it."""

    phrase: tuple[str, ...]
    weight: float = DEFAULT_WEIGHT

    def __post_init__(self):
        if not self.phrase:
            raise CatalogError("catalog phrase must contain at least one word")
        if any(not w or w != w.strip() or " " in w for w in self.phrase):
            raise CatalogError(f"malformed catalog phrase: {self.phrase!r}")
        if not math.isfinite(self.weight):
            raise CatalogError(f"non-finite weight for phrase {self.phrase!r}")

    @classmethod
    def from_text(cls, text: str, weight: float = DEFAULT_WEIGHT) -> "CatalogEntry":
        """Lowercase and whitespace-split ``text`` into a phrase."""
        return cls(tuple(text.lower().split()), float(weight))

    @property
    def text(self) -> str:
        return " ".join(self.phrase)


@dataclass(frozen=True)
class WordFst:
    """Trie-shaped weighted automaton over whole words.

    ``arcs[s]`` holds the outgoing arcs of state ``s`` in strict lexicographic
    order of their input word (no duplicate words at one state).  ``finals``
    mark phrase ends; ``phi_states`` mark states carrying the zero-cost
    any-word self-loop (the start state, by construction).
    """

    start: int
    finals: frozenset[int]
    arcs: tuple[tuple[Arc, ...], ...]
    phi_states: frozenset[int]

    @cached_property
    def words(self) -> tuple[tuple[str, ...], ...]:
        """Per-state sorted input words, parallel to ``arcs`` (for bisect)."""
        return tuple(tuple(a.word for a in state) for state in self.arcs)

    @property
    def num_states(self) -> int:
        return len(self.arcs)

    @property
    def num_arcs(self) -> int:
        return sum(len(state) for state in self.arcs)

    def find_arc(self, state: int, word: str) -> Arc | None:
        """Exact-match lookup of ``word`` among the arcs of ``state``."""
        ws = self.words[state]
        i = bisect.bisect_left(ws, word)
        if i < len(ws) and ws[i] == word:
            return self.arcs[state][i]
        return None

    def phrase_path(self, phrase: Iterable[str]) -> tuple[int, float] | None:
        """Follow whole-word arcs from the start state.

        Returns ``(end_state, summed_weight)``, or None if some word has no
        arc along the way.
        """
        state = self.start
        total = 0.0
        for word in phrase:
            arc = self.find_arc(state, word)
            if arc is None:
                return None
            total += arc.weight
            state = arc.nextstate
        return state, total

    def iter_phrases(self):
        """Yield ``(phrase_words, end_state)`` for every path ending final."""
        stack = [(self.start, ())]
        while stack:
            state, words = stack.pop()
            if state in self.finals and words:
                yield words, state
            for arc in reversed(self.arcs[state]):
                stack.append((arc.nextstate, words + (arc.word,)))


class _Node:
    __slots__ = ("edges", "final")

    def __init__(self):
        self.edges: dict[str, tuple[float, "_Node"]] = {}
        self.final = False


def build_catalog_fst(
    entries: Iterable[CatalogEntry], *, delimiter: str = DEFAULT_DELIMITER
) -> WordFst:
    """Compile catalog entries into a prefix-sharing word automaton.

    Phrases sharing leading words share arcs, so their per-word weights must
    agree on the shared prefix.  Each phrase ends in a final state and the sum
    of arc weights along its path equals ``len(phrase) * entry.weight``.

    Raises CatalogError on an empty catalog, duplicate phrases, words
    containing the subword delimiter, or conflicting weights on a shared
    prefix arc.
    """
    entries = list(entries)
    if not entries:
        raise CatalogError("catalog is empty")
    seen: set[tuple[str, ...]] = set()
    root = _Node()
    for entry in entries:
        if entry.phrase in seen:
            raise CatalogError(f"duplicate catalog phrase: {entry.text!r}")
        seen.add(entry.phrase)
        node = root
        for word in entry.phrase:
            if delimiter in word:
                raise CatalogError(
                    f"word {word!r} contains the subword delimiter {delimiter!r}"
                )
            edge = node.edges.get(word)
            if edge is None:
                child = _Node()
                node.edges[word] = (entry.weight, child)
            else:
                weight, child = edge
                if weight != entry.weight:
                    raise CatalogError(
                        f"conflicting weights {weight} vs {entry.weight} on shared "
                        f"prefix arc {word!r} (phrase {entry.text!r})"
                    )
            node = node.edges[word][1]
        node.final = True

    # Deterministic numbering: preorder walk with edges in sorted order.
    order: list[_Node] = []
    ids: dict[int, int] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        ids[id(node)] = len(order)
        order.append(node)
        for word in sorted(node.edges, reverse=True):
            stack.append(node.edges[word][1])

    arcs = tuple(
        tuple(
            Arc(word, node.edges[word][0], ids[id(node.edges[word][1])])
            for word in sorted(node.edges)
        )
        for node in order
    )
    finals = frozenset(ids[id(n)] for n in order if n.final)
    return WordFst(start=0, finals=finals, arcs=arcs, phi_states=frozenset({0}))


def empty_fst() -> WordFst:
    """A single-state automaton accepting nothing (used for empty corpora)."""
    return WordFst(start=0, finals=frozenset(), arcs=((),), phi_states=frozenset({0}))


def arcs_in_range(fst: WordFst, state: int, lo: int, hi: int) -> tuple[Arc, ...]:
    """The half-open slice [lo, hi) of the sorted arc list of ``state``."""
    if not 0 <= state < fst.num_states:
        raise IndexError(f"state {state} out of range (0..{fst.num_states - 1})")
    arcs = fst.arcs[state]
    if lo > hi:
        raise ValueError(f"invalid arc range: lo={lo} > hi={hi}")
    if lo < 0 or hi > len(arcs):
        raise ValueError(f"arc range [{lo}, {hi}) out of bounds for {len(arcs)} arcs")
    return arcs[lo:hi]


def validate_fst(fst: WordFst) -> None:
    """Check structural invariants; raises ValueError on the first violation."""
    n = fst.num_states
    if not 0 <= fst.start < n:
        raise ValueError(f"start state {fst.start} out of range")
    for s, arcs in enumerate(fst.arcs):
        prev = None
        for arc in arcs:
            if not arc.word:
                raise ValueError(f"state {s}: empty arc word")
            if prev is not None and arc.word <= prev:
                raise ValueError(f"state {s}: arcs not strictly sorted at {arc.word!r}")
            prev = arc.word
            if not math.isfinite(arc.weight):
                raise ValueError(f"state {s}: non-finite weight on {arc.word!r}")
            if not 0 <= arc.nextstate < n:
                raise ValueError(f"state {s}: next state {arc.nextstate} out of range")
        if not arcs and s not in fst.finals and s != fst.start:
            raise ValueError(f"state {s} is a non-final dead end")
    for s in fst.finals | fst.phi_states:
        if not 0 <= s < n:
            raise ValueError(f"state {s} out of range")
    reached = {fst.start}
    frontier = [fst.start]
    while frontier:
        s = frontier.pop()
        for arc in fst.arcs[s]:
            if arc.nextstate not in reached:
                reached.add(arc.nextstate)
                frontier.append(arc.nextstate)
    if len(reached) != n:
        raise ValueError(f"{n - len(reached)} states unreachable from start")


# -- catalog files ----------------------------------------------------------
#
# UTF-8 text, one entry per line: ``phrase<TAB>weight``.  The weight is
# optional (default -1); lines starting with ``#`` and blank lines are
# ignored.  Phrases are lowercased and whitespace-split.


def read_catalog(lines: Iterable[str], *, source: str = "<catalog>") -> list[CatalogEntry]:
    entries = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        phrase_part, sep, weight_part = line.rpartition("\t")
        if not sep:
            phrase_part, weight = line, DEFAULT_WEIGHT
        else:
            try:
                weight = float(weight_part)
            except ValueError:
                raise InputFormatError(
                    f"{source}:{lineno}: bad weight {weight_part.strip()!r}"
                ) from None
        if not phrase_part.strip():
            raise InputFormatError(f"{source}:{lineno}: empty phrase")
        try:
            entries.append(CatalogEntry.from_text(phrase_part, weight))
        except CatalogError as exc:
            raise InputFormatError(f"{source}:{lineno}: {exc}") from None
    if not entries:
        raise InputFormatError(f"{source}: no catalog entries found")
    return entries


def load_catalog(path) -> list[CatalogEntry]:
    with open(path, encoding="utf-8") as f:
        return read_catalog(f, source=str(path))


# -- binary serialization ----------------------------------------------------
#
# Versioned layout, magic ``BLFST1``, little-endian integers, length-prefixed
# UTF-8 strings:
#
#   magic | u32 num_states | u32 start |
#   per state: u8 flags (bit0 final, bit1 phi) | u32 num_arcs |
#     per arc: u32 len | bytes word | f64 weight | u32 nextstate

_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise InputFormatError(
                f"truncated automaton: needed {n} bytes at offset {self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def f64(self) -> float:
        return _F64.unpack(self.take(8))[0]

    def string(self) -> str:
        n = self.u32()
        at = self.pos
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise InputFormatError(f"invalid UTF-8 string at offset {at}") from None


def serialize(fst: WordFst) -> bytes:
    out = bytearray(_MAGIC)
    out += _U32.pack(fst.num_states)
    out += _U32.pack(fst.start)
    for s in range(fst.num_states):
        flags = (1 if s in fst.finals else 0) | (2 if s in fst.phi_states else 0)
        out.append(flags)
        out += _U32.pack(len(fst.arcs[s]))
        for arc in fst.arcs[s]:
            raw = arc.word.encode("utf-8")
            out += _U32.pack(len(raw))
            out += raw
            out += _F64.pack(arc.weight)
            out += _U32.pack(arc.nextstate)
    return bytes(out)


def deserialize(data: bytes) -> WordFst:
    r = _Reader(data)
    if r.take(len(_MAGIC)) != _MAGIC:
        raise InputFormatError("bad magic: not a serialized biasing automaton")
    num_states = r.u32()
    start = r.u32()
    finals = set()
    phi = set()
    arcs = []
    for s in range(num_states):
        at = r.pos
        flags = r.u8()
        if flags & ~3:
            raise InputFormatError(f"unknown state flags {flags:#x} at offset {at}")
        if flags & 1:
            finals.add(s)
        if flags & 2:
            phi.add(s)
        state_arcs = []
        for _ in range(r.u32()):
            word = r.string()
            weight = r.f64()
            nextstate = r.u32()
            state_arcs.append(Arc(word, weight, nextstate))
        arcs.append(tuple(state_arcs))
    if r.pos != len(data):
        raise InputFormatError(f"{len(data) - r.pos} trailing bytes at offset {r.pos}")
    fst = WordFst(
        start=start, finals=frozenset(finals), arcs=tuple(arcs), phi_states=frozenset(phi)
    )
    try:
        validate_fst(fst)
    except ValueError as exc:
        raise InputFormatError(f"malformed automaton: {exc}") from None
    return fst


def save_fst(fst: WordFst, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize(fst))


def load_fst(path) -> WordFst:
    with open(path, "rb") as f:
        return deserialize(f.read())
