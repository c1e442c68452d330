"""Class-template automata and contextual injection of personalized models.

An annotated corpus ("call @contactname(ada lovelace)") is reduced to class
templates ("call @contactname"), and templates frequent enough are compiled
into an unweighted trie.  At scoring time each class tag is backed by a
personalized biasing automaton: while a hypothesis walks a template, words
under a tag are scored by a nested subword lookahead session over the bound
automaton, and the template skeleton itself contributes exactly zero.  Words
that leave the template reset the walk at no cost, so contextual biasing
boosts catalog phrases only where a template licenses them.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import InputFormatError
from .fst import (
    DEFAULT_DELIMITER,
    CatalogEntry,
    WordFst,
    build_catalog_fst,
    empty_fst,
    load_fst,
)
from .lookahead import PhraseSession, WordOutcome

_SPAN = re.compile(r"@([A-Za-z0-9]+)\(([^()]*)\)")


class Span(NamedTuple):
    tag: str
    words: tuple[str, ...]


def parse_annotated(line: str, *, where: str = "line") -> list[str | Span]:
    """Tokenize one corpus line; spans are written ``@tag(word word ...)``."""
    out: list[str | Span] = []
    i = 0
    n = len(line)
    while i < n:
        if line[i].isspace():
            i += 1
            continue
        if line[i] == "@":
            m = _SPAN.match(line, i)
            if m is None:
                raise InputFormatError(f"{where}: malformed class annotation at column {i + 1}")
            words = tuple(m.group(2).split())
            if not words:
                raise InputFormatError(f"{where}: empty span for @{m.group(1)}")
            out.append(Span("@" + m.group(1), words))
            i = m.end()
            if i < n and not line[i].isspace():
                raise InputFormatError(f"{where}: trailing characters after span at column {i + 1}")
        else:
            j = i
            while j < n and not line[j].isspace():
                j += 1
            tok = line[i:j]
            if any(c in tok for c in "@()"):
                raise InputFormatError(f"{where}: stray annotation character in {tok!r}")
            out.append(tok)
            i = j
    return out


@dataclass(frozen=True)
class ClassFst:
    """Unweighted template trie whose labels are plain words or class tags."""

    fst: WordFst
    tags: frozenset[str]


def build_class_fst(
    lines: Iterable[str], min_count: int = 10, *, source: str = "<corpus>"
) -> ClassFst:
    """Count tag-substituted utterance templates and keep the frequent ones.

    Each annotated span collapses to its class tag; templates occurring at
    least ``min_count`` times become zero-weight trie paths.  The result is
    independent of corpus line order.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    templates: Counter[tuple[str, ...]] = Counter()
    tags: set[str] = set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip().lower()
        if not line or line.startswith("#"):
            continue
        tokens = parse_annotated(line, where=f"{source}:{lineno}")
        template = []
        for tok in tokens:
            if isinstance(tok, Span):
                template.append(tok.tag)
                tags.add(tok.tag)
            else:
                template.append(tok)
        if template:
            templates[tuple(template)] += 1
    kept = sorted(t for t, c in templates.items() if c >= min_count)
    if not kept:
        return ClassFst(empty_fst(), frozenset())
    entries = [CatalogEntry(t, 0.0) for t in kept]
    fst = build_catalog_fst(entries)
    used = frozenset(tag for t in kept for tag in t if tag.startswith("@"))
    return ClassFst(fst, used)


def load_class_fst(path) -> ClassFst:
    fst = load_fst(path)
    tags = frozenset(
        arc.word for arcs in fst.arcs for arc in arcs if arc.word.startswith("@")
    )
    return ClassFst(fst, tags)


def read_bindings(lines: Iterable[str], *, source: str = "<bindings>") -> dict[str, str]:
    """Parse a binding manifest: ``@tag<TAB>path`` per line."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, sep, path = line.partition("\t")
        if not sep or not tag.startswith("@") or not path.strip():
            raise InputFormatError(f"{source}:{lineno}: expected '@tag<TAB>path'")
        out[tag] = path.strip()
    if not out:
        raise InputFormatError(f"{source}: no bindings found")
    return out


def load_bindings(path, class_fst: ClassFst | None = None) -> dict[str, WordFst]:
    import os

    with open(path, encoding="utf-8") as f:
        manifest = read_bindings(f, source=str(path))
    base = os.path.dirname(os.fspath(path))
    bindings = {
        tag: load_fst(p if os.path.isabs(p) else os.path.join(base, p))
        for tag, p in manifest.items()
    }
    if class_fst is not None:
        missing = class_fst.tags - bindings.keys()
        if missing:
            raise InputFormatError(f"{path}: no binding for {sorted(missing)}")
    return bindings


class RaceResult(NamedTuple):
    increment: float
    resolved: bool
    tag: str | None      # winning tag; None when the whole tag attempt failed
    consumed: bool       # False: the closing word still needs a skeleton step


class _TagRace:
    """Parallel nested walks over the automata bound to one template position.

    When a template position offers several class tags, each tag's automaton
    walks the incoming word independently; the race emits the running minimum
    of their cumulative scores so the strongest candidate is paid out early,
    and trues up when a winner completes.  With a single tag this reduces to
    passing the nested session's increments straight through.  A walk that
    completed a phrase keeps that banked score even if it is later dropped in
    favor of a sibling that ultimately dies.
    """

    __slots__ = ("entries", "a_prev", "dropped_bank")

    def __init__(self, contenders: list[tuple[str, PhraseSession]]):
        self.entries = [[tag, session, 0.0] for tag, session in contenders]
        self.a_prev = 0.0
        self.dropped_bank: tuple[float, str] | None = None

    def clone(self) -> "_TagRace":
        r = _TagRace.__new__(_TagRace)
        r.entries = [[tag, s.clone(), t] for tag, s, t in self.entries]
        r.a_prev = self.a_prev
        r.dropped_bank = self.dropped_bank
        return r

    def _settle(self) -> float:
        agg = min(t for _, _, t in self.entries)
        increment = agg - self.a_prev
        self.a_prev = agg
        return increment

    def _remember_bank(self, entry) -> None:
        candidate = (entry[2], entry[0])
        if self.dropped_bank is None or candidate < self.dropped_bank:
            self.dropped_bank = candidate

    def expand(self, subword: str) -> float:
        for entry in self.entries:
            entry[2] += entry[1].expand(subword)
        return self._settle()

    def finish_word(self, token: str) -> RaceResult:
        outcomes = []
        for entry in self.entries:
            inc, outcome = entry[1].finish_word(token)
            entry[2] += inc
            outcomes.append(outcome)
        completed = [e for e, o in zip(self.entries, outcomes) if o is WordOutcome.COMPLETED]
        if completed:
            winner = min(completed, key=lambda e: (e[2], e[0]))
            return RaceResult(winner[2] - self.a_prev, True, winner[0], True)
        kept = []
        for entry, outcome in zip(self.entries, outcomes):
            if outcome in (WordOutcome.CONTINUED, WordOutcome.COMPLETED_OPEN):
                kept.append(entry)
            elif entry[1].phrases_done > 0:
                self._remember_bank(entry)
        if kept:
            self.entries = kept
            return RaceResult(self._settle(), False, None, False)
        candidates = [(e[2], e[0]) for e in self.entries if e[1].phrases_done > 0]
        if self.dropped_bank is not None:
            candidates.append(self.dropped_bank)
        if candidates:
            total, tag = min(candidates)
            return RaceResult(total - self.a_prev, True, tag, False)
        return RaceResult(0.0 - self.a_prev, True, None, False)

    def finalize(self) -> float:
        # Keep the best banked total; pay back everything unsettled.
        best_banked = min(t - s.emitted for _, s, t in self.entries)
        if self.dropped_bank is not None:
            best_banked = min(best_banked, self.dropped_bank[0])
        return best_banked - self.a_prev


class ContextSession:
    """Scores one hypothesis against the template trie with tag injection.

    The session holds a single template position per hypothesis.  Outside a
    tag, completed words step the position along plain arcs at weight zero
    (missing words reset it, and cost nothing at the start state).  When the
    position offers class tags, the next word opens nested lookahead walks
    over the bound automata and their increments pass through.
    """

    __slots__ = ("biaser", "pos", "race", "race_targets", "word_chars", "caches")

    def __init__(self, biaser: "ContextualBiaser", caches: dict):
        self.biaser = biaser
        self.pos = biaser.class_fst.fst.start
        self.race: _TagRace | None = None
        self.race_targets: dict[str, int] = {}
        self.word_chars = ""
        self.caches = caches  # id(fst) -> LookaheadCache, shared across clones

    def clone(self) -> "ContextSession":
        s = ContextSession.__new__(ContextSession)
        s.biaser = self.biaser
        s.pos = self.pos
        s.race = self.race.clone() if self.race is not None else None
        s.race_targets = self.race_targets
        s.word_chars = self.word_chars
        s.caches = self.caches
        return s

    def _word_start(self) -> None:
        # A dead-end template position can match nothing: restart the walk
        # before this word rather than after it.
        fst = self.biaser.class_fst.fst
        if not fst.arcs[self.pos]:
            self.pos = fst.start
        self._open_race_if_tagged()

    def _open_race_if_tagged(self) -> None:
        tag_arcs = self.biaser.tag_arcs(self.pos)
        if not tag_arcs:
            return
        contenders = []
        for tag, target in tag_arcs:
            fst = self.biaser.bindings[tag]
            cache = self.caches.setdefault(id(fst), {})
            contenders.append(
                (tag, PhraseSession(fst, delimiter=self.biaser.delimiter, cache=cache))
            )
        self.race = _TagRace(contenders)
        self.race_targets = dict(tag_arcs)

    def expand(self, subword: str) -> float:
        if self.race is None and not self.word_chars:
            self._word_start()
        self.word_chars += subword
        if self.race is not None:
            return self.race.expand(subword)
        return 0.0

    def finish_word(self, token: str) -> float:
        d = self.biaser.delimiter
        content = "" if token == d else token[: -len(d)] if token.endswith(d) else None
        if content is None:
            raise ValueError(f"{token!r} does not carry the delimiter {d!r}")
        if self.race is None and not self.word_chars and content:
            self._word_start()
        word = self.word_chars + content
        self.word_chars = ""
        if self.race is None:
            if word:
                self._skeleton_step(word)
            return 0.0
        result = self.race.finish_word(token)
        if not result.resolved:
            return result.increment
        self.race = None
        if result.tag is not None:
            self.pos = self.race_targets[result.tag]
        if not result.consumed and word:
            self._skeleton_step(word)
        return result.increment

    def finalize(self) -> float:
        if self.race is None:
            return 0.0
        increment = self.race.finalize()
        self.race = None
        return increment

    def _skeleton_step(self, word: str) -> None:
        arc = self.biaser.class_fst.fst.find_arc(self.pos, word)
        if arc is not None:
            self.pos = arc.nextstate
        else:
            self.pos = self.biaser.class_fst.fst.start


class ContextualBiaser:
    """A class-template trie with a personalized automaton bound to each tag."""

    def __init__(
        self,
        class_fst: ClassFst,
        bindings: dict[str, WordFst],
        *,
        delimiter: str = DEFAULT_DELIMITER,
    ):
        missing = class_fst.tags - bindings.keys()
        if missing:
            raise ValueError(f"unbound class tags: {sorted(missing)}")
        self.class_fst = class_fst
        self.bindings = dict(bindings)
        self.delimiter = delimiter
        self._tag_arcs: dict[int, tuple[tuple[str, int], ...]] = {}
        for state, arcs in enumerate(class_fst.fst.arcs):
            tagged = tuple(
                (arc.word, arc.nextstate) for arc in arcs if arc.word.startswith("@")
            )
            if tagged:
                self._tag_arcs[state] = tagged

    def tag_arcs(self, state: int) -> tuple[tuple[str, int], ...]:
        return self._tag_arcs.get(state, ())

    def open_session(self) -> ContextSession:
        return ContextSession(self, caches={})


def open_context_session(biaser: ContextualBiaser) -> ContextSession:
    return biaser.open_session()
