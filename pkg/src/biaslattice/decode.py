"""Simulated subword beam-search decoding with shallow fusion.

The first-pass acoustic model is a pluggable emission oracle mapping a token
history to normalized next-token log-probabilities.  Beam search extends
hypotheses breadth-synchronously; each extension's fused score adds the
emission log-probability and ``lam`` times the biaser increment for the
token, and finished hypotheses keep their main-model and biasing score
components separated so a second pass can re-weight them.

Biasing scores are conventional automaton path weights: the fused score adds
them as-is, so with descending-score beam search a positive catalog weight
boosts matching words and a negative one penalizes them.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol

from .context import ContextualBiaser
from .errors import InputFormatError
from .fst import WordFst
from .lookahead import PhraseSession
from .wordpiece import WordpieceVocab, detokenize, is_delimiter, segment

END = "</s>"

_NORM_TOL = 1e-6


class OracleError(ValueError):
    """An emission oracle broke its contract (e.g. unnormalized scores)."""


class EmissionOracle(Protocol):
    """Next-token scorer standing in for the first-pass model."""

    def score(self, utt_id: str, history: tuple[str, ...]) -> Mapping[str, float]:
        """Log-probabilities over candidate next tokens (and ``END``).

        Only tokens with nonzero probability need appear; the values must
        log-sum-exp to 0 within 1e-6.
        """
        ...


def fuse_step(rnnt_logp: float, sf_increment: float, lam: float) -> float:
    """One shallow-fusion combination: main score plus scaled biasing score."""
    if lam < 0:
        raise ValueError("fusion scale must be >= 0")
    if not (math.isfinite(rnnt_logp) and math.isfinite(sf_increment) and math.isfinite(lam)):
        raise ValueError("non-finite input to fuse_step")
    return rnnt_logp + lam * sf_increment


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[str, ...]
    text: str
    rnnt_logp: float
    sf_score: float   # accumulated biasing increments, unscaled by lam
    fused: float      # rnnt_logp + lam * sf_score under the decode-time lam


@dataclass
class NBestList:
    utt_id: str
    ref: str
    lam: float
    hyps: list[Hypothesis]

    def best(self) -> Hypothesis:
        return self.hyps[0]


# -- biasers ------------------------------------------------------------------
#
# A biaser opens one scoring session per decoded utterance; beam search clones
# the session at every hypothesis extension.  Sessions expose expand /
# finish_word / finalize, all returning score increments.


class _NullSession:
    def expand(self, subword):
        return 0.0

    def finish_word(self, token):
        return 0.0

    def finalize(self):
        return 0.0

    def clone(self):
        return self  # stateless


class NullBiaser:
    """Biasing disabled: every increment is exactly zero."""

    def open_session(self):
        return _NullSession()


class _SubwordSession:
    __slots__ = ("walker",)

    def __init__(self, walker: PhraseSession):
        self.walker = walker

    def expand(self, subword):
        return self.walker.expand(subword)

    def finish_word(self, token):
        increment, _ = self.walker.finish_word(token)
        return increment

    def finalize(self):
        return self.walker.finalize()

    def clone(self):
        return _SubwordSession(self.walker.clone())


class SubwordBiaser:
    """Applies a biasing automaton at the subword level with lookahead."""

    def __init__(self, fst: WordFst, *, delimiter: str = "_"):
        self.fst = fst
        self.delimiter = delimiter

    def open_session(self):
        cache = {}  # scoped to this decoded utterance, shared by clones
        return _SubwordSession(PhraseSession(self.fst, delimiter=self.delimiter, cache=cache))


class _WordSession:
    """Word-boundary biasing: the full arc weight lands on the delimiter."""

    __slots__ = ("fst", "delimiter", "state", "chars", "pending")

    def __init__(self, fst, delimiter, state, chars="", pending=0.0):
        self.fst = fst
        self.delimiter = delimiter
        self.state = state
        self.chars = chars
        self.pending = pending

    def expand(self, subword):
        self.chars += subword
        return 0.0

    def finish_word(self, token):
        d = self.delimiter
        word = self.chars + (token[: -len(d)] if token != d else "")
        self.chars = ""
        if not word:
            return 0.0
        arc = self.fst.find_arc(self.state, word)
        if arc is None:
            increment = -self.pending  # unwind any unfinished phrase
            self.pending = 0.0
            self.state = self.fst.start
            return increment
        increment = arc.weight
        self.pending += arc.weight
        if arc.nextstate in self.fst.finals:
            self.pending = 0.0
            self.state = arc.nextstate if self.fst.arcs[arc.nextstate] else self.fst.start
        else:
            self.state = arc.nextstate
        return increment

    def finalize(self):
        increment = -self.pending
        self.pending = 0.0
        self.state = self.fst.start
        return increment

    def clone(self):
        return _WordSession(self.fst, self.delimiter, self.state, self.chars, self.pending)


class WordBiaser:
    """Applies a biasing automaton at word boundaries only (no lookahead)."""

    def __init__(self, fst: WordFst, *, delimiter: str = "_"):
        self.fst = fst
        self.delimiter = delimiter

    def open_session(self):
        return _WordSession(self.fst, self.delimiter, self.fst.start)


# ContextualBiaser already implements open_session() with the same session
# surface, so it plugs in directly.
Biaser = NullBiaser | SubwordBiaser | WordBiaser | ContextualBiaser


# -- synthetic emission oracle -------------------------------------------------


class SynthOracle:
    """Deterministic seeded oracle emitting reference tokens with confusions.

    At each content position of a confusable word, the reference piece gets
    the probability peak and a sampled set of similar pieces shares the rest;
    with probability ``noise`` the peak swaps onto one confusable and the
    reference piece drops near the bottom of the candidate list, which is
    what creates recognition errors for the decoder to fix.  Words outside
    ``noisy_words`` (when given), delimiters, and end-of-sequence are emitted
    cleanly.  Score maps depend only on (seed, utterance, position), so
    decoding is bit-reproducible.
    """

    def __init__(
        self,
        vocab: WordpieceVocab,
        refs: Mapping[str, str] | Iterable[tuple[str, str]] | str,
        noise: float = 0.0,
        seed: int = 0,
        *,
        peak: float = 0.75,
        swap_peak: float = 0.5,
        swap_true: float = 0.045,
        confusables: int = 8,
        noisy_words: frozenset[str] | None = None,
    ):
        if isinstance(refs, str):
            refs = {"utt-0": refs}
        self.vocab = vocab
        self.refs = dict(refs)
        if not 0.0 <= noise <= 1.0:
            raise ValueError("noise must be in [0, 1]")
        self.noise = noise
        self.seed = seed
        self.peak = peak
        self.swap_peak = swap_peak
        self.swap_true = swap_true
        self.n_confusables = confusables
        self.noisy_words = noisy_words
        self.tokens: dict[str, tuple[str, ...]] = {}
        self._noisy_pos: dict[str, frozenset[int]] = {}
        for utt, ref in self.refs.items():
            toks: list[str] = []
            noisy: set[int] = set()
            for word in ref.lower().split():
                pieces = segment(vocab, word)
                eligible = noisy_words is None or word in noisy_words
                for piece in pieces:
                    if eligible and not is_delimiter(vocab, piece):
                        noisy.add(len(toks))
                    toks.append(piece)
            toks.append(END)
            self.tokens[utt] = tuple(toks)
            self._noisy_pos[utt] = frozenset(noisy)
        self._confusions = _confusion_sets(vocab)

    def utterances(self) -> list[tuple[str, str]]:
        return list(self.refs.items())

    def max_steps(self, utt_id: str) -> int:
        return len(self.tokens[utt_id]) + 2

    def score(self, utt_id: str, history: tuple[str, ...]) -> dict[str, float]:
        toks = self.tokens[utt_id]
        pos = len(history)
        intended = toks[pos] if pos < len(toks) else END
        if self.noise == 0.0 or pos not in self._noisy_pos[utt_id]:
            return {intended: 0.0}
        rng = random.Random(f"{self.seed}:{utt_id}:{pos}:{intended}")
        pool = self._confusions.get(intended, ())
        others = rng.sample(pool, min(self.n_confusables, len(pool))) if pool else []
        if not others:
            return {intended: 0.0}
        if rng.random() < self.noise:
            # The peak lands on one confusable and the true piece sinks to the
            # bottom: without mid-word biasing it falls off narrow beams.
            lucky = rng.choice(others)
            rest = [t for t in others if t != lucky]
            weights = {lucky: self.swap_peak, intended: self.swap_true}
            share = (1.0 - self.swap_peak - self.swap_true) / len(rest) if rest else 0.0
            for t in rest:
                weights[t] = share
        else:
            weights = {intended: self.peak}
            for t in others:
                weights[t] = (1.0 - self.peak) / len(others)
        total = sum(weights.values())
        return {t: math.log(w / total) for t, w in sorted(weights.items()) if w > 0.0}


def _confusion_sets(vocab: WordpieceVocab) -> dict[str, tuple[str, ...]]:
    """Pieces at edit distance one from each piece, same or adjacent length."""
    pieces = sorted(p for p in vocab.pieces if p != vocab.delimiter)
    out: dict[str, tuple[str, ...]] = {}
    for p in pieces:
        near = [q for q in pieces if q != p and abs(len(q) - len(p)) <= 1 and _edit1(p, q)]
        out[p] = tuple(near)
    return out


def _edit1(a: str, b: str) -> bool:
    if a == b:
        return False
    la, lb = len(a), len(b)
    if abs(la - lb) > 1:
        return False
    if la == lb:
        return sum(x != y for x, y in zip(a, b)) == 1
    if la > lb:
        a, b = b, a
        la, lb = lb, la
    # b is one longer: deleting one char of b must give a
    return any(b[:i] + b[i + 1 :] == a for i in range(lb))


def synth_oracle(
    vocab: WordpieceVocab, refs, noise: float = 0.0, seed: int = 0, **kwargs
) -> SynthOracle:
    """Build a deterministic synthetic emission oracle (see SynthOracle)."""
    return SynthOracle(vocab, refs, noise, seed, **kwargs)


# -- beam search ---------------------------------------------------------------


class _Beam:
    __slots__ = ("tokens", "rnnt", "sf", "session")

    def __init__(self, tokens, rnnt, sf, session):
        self.tokens = tokens
        self.rnnt = rnnt
        self.sf = sf
        self.session = session


def _check_normalized(scores: Mapping[str, float], utt_id: str) -> None:
    if not scores:
        raise OracleError(f"{utt_id}: oracle returned no candidates")
    m = max(scores.values())
    lse = m + math.log(sum(math.exp(v - m) for v in scores.values()))
    if abs(lse) > _NORM_TOL:
        raise OracleError(f"{utt_id}: oracle scores log-sum-exp to {lse:.3g}, not 0")


def beam_search(
    oracle: EmissionOracle,
    biaser: Biaser | None,
    vocab: WordpieceVocab,
    lam: float,
    beam_size: int = 16,
    n_best: int = 8,
    *,
    utt_id: str = "utt-0",
    ref: str = "",
    max_steps: int = 512,
) -> NBestList:
    """Breadth-synchronous beam search over subword tokens with shallow fusion.

    Finished hypotheses carry separated score components; the fused score is
    always ``rnnt_logp + lam * sf_score``.  Ties in the fused score break by
    token-sequence lexicographic order, so decoding is fully deterministic.
    """
    if n_best < 1 or beam_size < n_best:
        raise ValueError(f"need beam_size >= n_best >= 1, got {beam_size}, {n_best}")
    if not vocab.pieces:
        raise ValueError("empty vocabulary")
    if biaser is None:
        biaser = NullBiaser()
    live = [_Beam((), 0.0, 0.0, biaser.open_session())]
    done: list[_Beam] = []
    for _ in range(max_steps):
        if not live:
            break
        extended: list[_Beam] = []
        for beam in live:
            scores = oracle.score(utt_id, beam.tokens)
            _check_normalized(scores, utt_id)
            for token in sorted(scores):
                logp = scores[token]
                session = beam.session.clone()
                if token == END:
                    increment = session.finalize()
                    done.append(
                        _Beam(beam.tokens, beam.rnnt + logp, beam.sf + increment, session)
                    )
                    continue
                if is_delimiter(vocab, token):
                    increment = session.finish_word(token)
                else:
                    increment = session.expand(token)
                extended.append(
                    _Beam(
                        beam.tokens + (token,),
                        beam.rnnt + logp,
                        beam.sf + increment,
                        session,
                    )
                )
        extended.sort(key=lambda b: (-fuse_step(b.rnnt, b.sf, lam), b.tokens))
        live = extended[:beam_size]
    else:
        # Step cap reached: settle whatever is still on the beam.
        for beam in live:
            beam.sf += beam.session.finalize()
            done.append(beam)
    done.sort(key=lambda b: (-fuse_step(b.rnnt, b.sf, lam), b.tokens))
    hyps = [
        Hypothesis(
            tokens=b.tokens,
            text=detokenize(vocab, b.tokens),
            rnnt_logp=b.rnnt,
            sf_score=b.sf,
            fused=fuse_step(b.rnnt, b.sf, lam),
        )
        for b in done[:n_best]
    ]
    return NBestList(utt_id=utt_id, ref=ref, lam=lam, hyps=hyps)


def decode_corpus(
    oracle: SynthOracle,
    biaser: Biaser | None,
    vocab: WordpieceVocab,
    lam: float,
    beam_size: int = 16,
    n_best: int = 8,
) -> list[NBestList]:
    """Decode every utterance the oracle knows about, in id order."""
    out = []
    for utt_id, ref in sorted(oracle.utterances()):
        out.append(
            beam_search(
                oracle, biaser, vocab, lam, beam_size, n_best,
                utt_id=utt_id, ref=ref, max_steps=oracle.max_steps(utt_id),
            )
        )
    return out


# -- n-best files --------------------------------------------------------------
#
# One JSON object per line:
#   {"id": ..., "ref": ..., "lambda": ...,
#    "hyps": [{"text", "tokens", "rnnt_logp", "sf_score"}, ...]}
# sf_score is stored unscaled; the decode-time fusion scale is recorded so a
# second pass can re-weight the biasing contribution exactly.


def write_nbest(lists: Iterable[NBestList], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for nb in lists:
            obj = {
                "id": nb.utt_id,
                "ref": nb.ref,
                "lambda": nb.lam,
                "hyps": [
                    {
                        "text": h.text,
                        "tokens": list(h.tokens),
                        "rnnt_logp": h.rnnt_logp,
                        "sf_score": h.sf_score,
                    }
                    for h in nb.hyps
                ],
            }
            f.write(json.dumps(obj) + "\n")


def read_nbest(path) -> list[NBestList]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                lam = float(obj.get("lambda", 1.0))
                hyps = [
                    Hypothesis(
                        tokens=tuple(h["tokens"]),
                        text=h["text"],
                        rnnt_logp=float(h["rnnt_logp"]),
                        sf_score=float(h["sf_score"]),
                        fused=fuse_step(float(h["rnnt_logp"]), float(h["sf_score"]), lam),
                    )
                    for h in obj["hyps"]
                ]
                out.append(NBestList(utt_id=obj["id"], ref=obj["ref"], lam=lam, hyps=hyps))
            except (KeyError, TypeError, ValueError) as exc:
                raise InputFormatError(f"{path}:{lineno}: bad n-best record: {exc}") from None
    if not out:
        raise InputFormatError(f"{path}: no n-best records found")
    return out
