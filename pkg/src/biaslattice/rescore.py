"""Second-pass n-best rescoring and (alpha, beta) optimization.

Each hypothesis is rescored as

    score = rnnt_logp + alpha * (lam * sf_score) + beta * lm_logprob(text)

where ``lam`` is the first-pass fusion scale stored with the n-best list, so
alpha = 1, beta = 0 reproduces first-pass ranking exactly, and alpha != 1
re-weights ("de-biases") the first-pass biasing contribution.  A simple
domain router picks the contacts model whenever any hypothesis mentions a
catalog word.  The (alpha, beta) pair is tuned by simulated annealing against
corpus WER of the rescored 1-best, with a coarse seed grid evaluated first so
the result can never be worse than the seeds.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field

from .decode import Hypothesis, NBestList
from .lm import NGramLM
from .metrics import normalize_words, wer

log = logging.getLogger(__name__)

DEFAULT_BOUNDS = (-2.0, 4.0, 0.0, 4.0)  # alpha_lo, alpha_hi, beta_lo, beta_hi


@dataclass(frozen=True)
class RescoreConfig:
    alpha: float = 1.0   # re-weight of the first-pass biasing contribution
    beta: float = 0.0    # rescoring LM weight
    router: str = "catalog-hit"

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("non-finite rescoring weights")


@dataclass
class DomainLms:
    """The rescoring models plus the catalog words that trigger routing.

    Any scorer with a ``logprob(words) -> float`` method plugs in; the
    bundled back-off n-gram model is just the default choice.
    """

    generic: NGramLM
    contacts: NGramLM | None = None
    catalog_words: frozenset[str] = frozenset()


def route_lm(nbest: NBestList, lms: DomainLms) -> NGramLM:
    """Pick the contacts model iff any hypothesis mentions a catalog word."""
    if lms.contacts is None:
        raise ValueError("contacts domain is unbound")
    for hyp in nbest.hyps:
        if any(w in lms.catalog_words for w in hyp.text.split()):
            log.debug("utt %s routed to contacts LM (%r)", nbest.utt_id, hyp.text)
            return lms.contacts
    log.debug("utt %s routed to generic LM", nbest.utt_id)
    return lms.generic


def second_pass_score(hyp: Hypothesis, lam: float, config: RescoreConfig, lm_lp: float) -> float:
    return hyp.rnnt_logp + config.alpha * (lam * hyp.sf_score) + config.beta * lm_lp


def rescore(nbest: NBestList, config: RescoreConfig, lm: NGramLM) -> NBestList:
    """Re-rank one n-best list; pure, stable under score ties."""
    scored = []
    for hyp in nbest.hyps:
        lm_lp = lm.logprob(hyp.text.split())
        scored.append((second_pass_score(hyp, nbest.lam, config, lm_lp), hyp))
    # sorted() is stable: ties keep first-pass order.
    reranked = [h for _, h in sorted(scored, key=lambda sh: -sh[0])]
    return NBestList(utt_id=nbest.utt_id, ref=nbest.ref, lam=nbest.lam, hyps=reranked)


def rescore_corpus(
    lists: list[NBestList], config: RescoreConfig, lms: DomainLms
) -> list[NBestList]:
    picked = (
        (route_lm(nb, lms) for nb in lists)
        if config.router == "catalog-hit" and lms.contacts is not None
        else (lms.generic for _ in lists)
    )
    return [rescore(nb, config, lm) for nb, lm in zip(lists, picked)]


# -- tuning ---------------------------------------------------------------------


@dataclass
class TuneResult:
    config: RescoreConfig
    wer: float
    evaluated: list[tuple[float, float, float]] = field(default_factory=list)


class _Objective:
    """Corpus WER of the rescored 1-best as a function of (alpha, beta).

    LM log-probabilities, error counts, and reference lengths do not depend
    on (alpha, beta), so they are computed once; each probe is then just an
    argmax per utterance.
    """

    def __init__(self, dev: list[NBestList], refs: dict[str, str], lms: DomainLms):
        self.items = []
        self.total_ref = 0
        for nb in dev:
            ref = refs.get(nb.utt_id, nb.ref)
            ref_words = normalize_words(ref)
            lm = route_lm(nb, lms) if lms.contacts is not None else lms.generic
            rows = []
            for rank, hyp in enumerate(nb.hyps):
                b = wer(ref_words, normalize_words(hyp.text))
                rows.append(
                    (
                        hyp.rnnt_logp,
                        nb.lam * hyp.sf_score,
                        lm.logprob(hyp.text.split()),
                        rank,
                        b.errors,
                    )
                )
            self.items.append(rows)
            self.total_ref += max(len(ref_words), 1)

    def __call__(self, alpha: float, beta: float) -> float:
        errors = 0
        for rows in self.items:
            best = min(rows, key=lambda r: (-(r[0] + alpha * r[1] + beta * r[2]), r[3]))
            errors += best[4]
        return errors / self.total_ref


def _seed_points(bounds, fix_alpha: bool, grid: int = 5) -> list[tuple[float, float]]:
    a_lo, a_hi, b_lo, b_hi = bounds
    clip = lambda v, lo, hi: min(max(v, lo), hi)
    points = [(clip(1.0, a_lo, a_hi), clip(0.0, b_lo, b_hi)),
              (clip(0.0, a_lo, a_hi), clip(0.0, b_lo, b_hi))]
    alphas = (
        [clip(1.0, a_lo, a_hi)]
        if fix_alpha
        else [a_lo + (a_hi - a_lo) * i / (grid - 1) for i in range(grid)]
    )
    betas = [b_lo + (b_hi - b_lo) * i / (grid - 1) for i in range(grid)]
    points.extend((a, b) for a in alphas for b in betas)
    seen = set()
    out = []
    for p in points:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


def tune(
    dev: list[NBestList],
    refs: dict[str, str],
    lms: DomainLms,
    *,
    bounds: tuple[float, float, float, float] = DEFAULT_BOUNDS,
    budget: int = 400,
    seed: int = 0,
    fix_alpha: bool = False,
    extra_seeds: tuple[tuple[float, float], ...] = (),
) -> TuneResult:
    """Minimize dev-set WER of the rescored 1-best over (alpha, beta).

    Seed points — (1, 0), (0, 0), a coarse grid, and any ``extra_seeds`` —
    are always evaluated first, then simulated annealing (geometric cooling,
    Gaussian proposals, restarts at the incumbent) spends the remaining
    budget.  The returned config is the best point evaluated, so it is never
    worse than any seed.  WER plateaus break toward alpha closest to 1, then
    beta closest to 0.  With ``fix_alpha`` alpha stays pinned at 1 and only
    beta moves (the no-de-biasing baseline).
    """
    if not dev:
        raise ValueError("empty dev set")
    a_lo, a_hi, b_lo, b_hi = bounds
    if not (a_lo <= a_hi and b_lo <= b_hi) or not all(
        math.isfinite(v) for v in bounds
    ):
        raise ValueError(f"invalid bounds {bounds}")

    objective = _Objective(dev, refs, lms)
    key = lambda a, b, w: (w, abs(a - 1.0), abs(b))
    evaluated: list[tuple[float, float, float]] = []

    def probe(a: float, b: float) -> float:
        w = objective(a, b)
        evaluated.append((a, b, w))
        return w

    seeds = _seed_points(bounds, fix_alpha)
    seeds.extend(
        (min(max(a, a_lo), a_hi), min(max(b, b_lo), b_hi)) for a, b in extra_seeds
    )
    if budget < len(seeds):
        raise ValueError(f"budget {budget} smaller than the seed grid ({len(seeds)})")
    best = None
    for a, b in seeds:
        if fix_alpha:
            a = min(max(1.0, a_lo), a_hi)
        w = probe(a, b)
        if best is None or key(a, b, w) < key(*best):
            best = (a, b, w)

    rng = random.Random(seed)
    cur = best
    temperature = 0.05
    cooling = 0.97
    stall = 0
    a_scale = 0.25 * (a_hi - a_lo) or 0.1
    b_scale = 0.25 * (b_hi - b_lo) or 0.1
    for _ in range(budget - len(seeds)):
        if fix_alpha:
            a = cur[0]
        else:
            a = min(max(cur[0] + rng.gauss(0.0, a_scale), a_lo), a_hi)
        b = min(max(cur[1] + rng.gauss(0.0, b_scale), b_lo), b_hi)
        w = probe(a, b)
        if key(a, b, w) < key(*best):
            best = (a, b, w)
            stall = 0
        else:
            stall += 1
        delta = w - cur[2]
        if delta <= 0 or rng.random() < math.exp(-delta / max(temperature, 1e-9)):
            cur = (a, b, w)
        temperature *= cooling
        if stall >= max(20, budget // 8):
            cur = best  # restart at the incumbent
            stall = 0
    alpha, beta, best_wer = best
    return TuneResult(
        config=RescoreConfig(alpha=alpha, beta=beta),
        wer=best_wer,
        evaluated=evaluated,
    )
