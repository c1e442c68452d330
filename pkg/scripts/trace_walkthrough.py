#!/usr/bin/env python3
"""Step-by-step trace of subword lookahead scoring on a tiny catalog.

Shows how the word-level weights of {play, player, playground} are paid out
while the token stream ``pl ay er_`` is consumed, and how a failed prefix
pays everything back.

    python3 scripts/trace_walkthrough.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from biaslattice.fst import CatalogEntry, build_catalog_fst
from biaslattice.lookahead import ExpandSession


def show(title, tokens, weight=-8.0):
    fst = build_catalog_fst(
        [CatalogEntry((w,), weight) for w in ("play", "player", "playground")]
    )
    trace = []
    session = ExpandSession(fst, fst.start, trace=trace)
    increments = []
    for tok in tokens[:-1]:
        increments.append(session.expand(tok))
    final, nxt = session.finish_word(tokens[-1])
    increments.append(final)

    print(f"\n{title}")
    print(f"  tokens: {' '.join(tokens)}")
    header = f"  {'prefix':<12}{'band':>6}{'len':>5}{'longest':>9}{'ahead':>7}{'pushed':>8}{'incr':>8}"
    print(header)
    for row in trace:
        lo, hi = row["range"]
        print(
            f"  {row['prefix']:<12}{hi - lo:>6}{row['length']:>5}"
            f"{row['longest'] if row['longest'] else '-':>9}"
            f"{row['lookahead'] if row['lookahead'] is not None else '-':>7}"
            f"{row['pushed'] if row['pushed'] is not None else '-':>8}"
            f"{row['increment']:>8.3g}"
        )
    print(f"  word state reached: {nxt}   total: {sum(increments):g}")


def main():
    show("completing a catalog word trues up to its arc weight", ["pl", "ay", "er_"])
    show("a full-length match settles exactly", ["play", "gr", "ou", "nd", "_"])
    show("an abandoned prefix is paid back to zero", ["pl", "az", "a_"])


if __name__ == "__main__":
    main()
