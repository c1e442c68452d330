"""Command-line driver: build-fst | decode | rescore | tune | eval | train-lm.

Exit codes: 0 on success, 2 on input-format errors.  The environment
variable ``BIASLATTICE_SEED`` overrides every ``--seed``/``--oracle-seed``
default for full-pipeline reproducibility.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import context, decode, fst, lm, metrics, rescore, wordpiece
from .errors import InputFormatError


def _env_seed(default: int) -> int:
    raw = os.environ.get("BIASLATTICE_SEED")
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise InputFormatError(f"BIASLATTICE_SEED={raw!r} is not an integer") from None


def _cmd_build_fst(args) -> int:
    if bool(args.catalog) == bool(args.class_corpus):
        raise InputFormatError("build-fst needs exactly one of --catalog / --class-corpus")
    if args.catalog:
        entries = fst.load_catalog(args.catalog)
        automaton = fst.build_catalog_fst(entries)
        print(f"built catalog automaton: {len(entries)} phrases, "
              f"{automaton.num_states} states, {automaton.num_arcs} arcs")
    else:
        with open(args.class_corpus, encoding="utf-8") as f:
            cfst = context.build_class_fst(f, args.min_count, source=args.class_corpus)
        automaton = cfst.fst
        print(f"built class automaton: tags {sorted(cfst.tags)}, "
              f"{automaton.num_states} states, {automaton.num_arcs} arcs")
    fst.save_fst(automaton, args.out)
    return 0


def _load_biaser(args, vocab, entries):
    delimiter = vocab.delimiter
    if args.class_fst:
        if not args.bindings:
            raise InputFormatError("--class-fst requires --bindings")
        cfst = context.load_class_fst(args.class_fst)
        bindings = context.load_bindings(args.bindings, cfst)
        return context.ContextualBiaser(cfst, bindings, delimiter=delimiter)
    if entries is None:
        return None
    automaton = fst.build_catalog_fst(entries, delimiter=delimiter)
    if args.word_level:
        return decode.WordBiaser(automaton, delimiter=delimiter)
    return decode.SubwordBiaser(automaton, delimiter=delimiter)


def _cmd_decode(args) -> int:
    vocab = wordpiece.load_vocab(args.vocab)
    refs = metrics.read_refs(args.refs)
    entries = fst.load_catalog(args.catalog) if args.catalog else None
    noisy = None
    if entries is not None:
        noisy = frozenset(w for e in entries for w in e.phrase)
    oracle = decode.synth_oracle(
        vocab, refs, noise=args.noise, seed=_env_seed(args.oracle_seed),
        noisy_words=noisy,
    )
    biaser = _load_biaser(args, vocab, entries)
    lists = decode.decode_corpus(
        oracle, biaser, vocab, args.lam, beam_size=args.beam, n_best=args.nbest
    )
    decode.write_nbest(lists, args.out)
    print(f"decoded {len(lists)} utterances -> {args.out}")
    return 0


def _load_domain_lms(args) -> rescore.DomainLms:
    generic = lm.load_lm(args.lm_generic)
    contacts = None
    if args.lm_contacts:
        members = args.lm_members if getattr(args, "lm_members", None) else None
        contacts = lm.load_lm(args.lm_contacts, members)
    catalog_words = frozenset()
    if args.catalog:
        entries = fst.load_catalog(args.catalog)
        catalog_words = frozenset(w for e in entries for w in e.phrase)
    return rescore.DomainLms(generic=generic, contacts=contacts, catalog_words=catalog_words)


def _cmd_rescore(args) -> int:
    lists = decode.read_nbest(args.nbest)
    lms = _load_domain_lms(args)
    config = rescore.RescoreConfig(alpha=args.alpha, beta=args.beta)
    out = rescore.rescore_corpus(lists, config, lms)
    decode.write_nbest(out, args.out)
    print(f"rescored {len(out)} utterances with alpha={args.alpha} beta={args.beta}")
    return 0


def _cmd_tune(args) -> int:
    dev = decode.read_nbest(args.dev)
    refs = metrics.read_refs(args.refs) if args.refs else {nb.utt_id: nb.ref for nb in dev}
    lms = _load_domain_lms(args)
    try:
        a_lo, a_hi, b_lo, b_hi = (float(x) for x in args.bounds.split(","))
    except ValueError:
        raise InputFormatError(f"--bounds must be 'a0,a1,b0,b1', got {args.bounds!r}") from None
    result = rescore.tune(
        dev, refs, lms,
        bounds=(a_lo, a_hi, b_lo, b_hi),
        budget=args.budget,
        seed=_env_seed(args.seed),
        fix_alpha=args.fix_alpha,
    )
    payload = {
        "alpha": result.config.alpha,
        "beta": result.config.beta,
        "dev_wer": result.wer,
        "evaluations": len(result.evaluated),
    }
    print(json.dumps(payload))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f)
            f.write("\n")
    return 0


def _cmd_eval(args) -> int:
    lists = decode.read_nbest(args.nbest)
    refs = metrics.read_refs(args.refs) if args.refs else None
    baseline = decode.read_nbest(args.baseline) if args.baseline else None
    report = metrics.evaluate(lists, refs, baseline=baseline)
    print(metrics.format_report(report))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump(metrics.report_to_json(report), f, indent=2)
            f.write("\n")
    return 0


def _cmd_train_lm(args) -> int:
    with open(args.corpus, encoding="utf-8") as f:
        model = lm.train_kn_lm(f, order=args.order, source=args.corpus)
    lm.write_arpa(model, args.out)
    if args.members:
        lm.write_members(model, args.members)
    print(f"trained order-{args.order} model: {len(model.vocab)} tokens, "
          f"{len(model.logprobs)} grams -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biaslattice",
        description="Personalized-phrase biasing toolkit: biasing automata, "
        "subword-level shallow fusion decoding, and second-pass rescoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-fst", help="compile a catalog or class corpus into an automaton")
    p.add_argument("--catalog", help="catalog file: 'phrase<TAB>weight' per line")
    p.add_argument("--class-corpus", help="annotated corpus with @tag(...) spans")
    p.add_argument("--min-count", type=int, default=10,
                   help="template count threshold for --class-corpus")
    p.add_argument("--out", required=True, help="output automaton path")
    p.set_defaults(func=_cmd_build_fst)

    p = sub.add_parser("decode", help="beam-decode a synthetic task with shallow fusion")
    p.add_argument("--vocab", required=True, help="wordpiece vocabulary file")
    p.add_argument("--catalog", help="biasing catalog file (also marks confusable words)")
    p.add_argument("--class-fst", help="serialized class-template automaton")
    p.add_argument("--bindings", help="manifest binding '@tag<TAB>automaton-path'")
    p.add_argument("--refs", required=True, help="references: 'id<TAB>transcript'")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="shallow-fusion scale")
    p.add_argument("--beam", type=int, default=16)
    p.add_argument("--nbest", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.3, help="oracle confusion level")
    p.add_argument("--oracle-seed", type=int, default=0)
    p.add_argument("--word-level", action="store_true",
                   help="apply biasing at word boundaries only")
    p.add_argument("--out", required=True, help="output n-best file (JSON lines)")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("rescore", help="second-pass rescoring of an n-best file")
    p.add_argument("--nbest", required=True)
    p.add_argument("--lm-generic", required=True, help="generic back-off model file")
    p.add_argument("--lm-contacts", help="contacts back-off model file")
    p.add_argument("--lm-members", help="class members sidecar for --lm-contacts")
    p.add_argument("--catalog", help="catalog whose words route to the contacts model")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rescore)

    p = sub.add_parser("tune", help="optimize (alpha, beta) on a dev n-best file")
    p.add_argument("--dev", required=True, help="dev n-best file")
    p.add_argument("--refs", help="references; defaults to transcripts in the dev file")
    p.add_argument("--lm-generic", required=True)
    p.add_argument("--lm-contacts")
    p.add_argument("--lm-members")
    p.add_argument("--catalog")
    p.add_argument("--bounds", default="-2,4,0,4", help="alpha/beta box: a0,a1,b0,b1")
    p.add_argument("--budget", type=int, default=400, help="objective evaluations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fix-alpha", action="store_true",
                   help="pin alpha at 1 (tune beta only)")
    p.add_argument("--out", help="write the tuned config as JSON")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("eval", help="WER/oracle-WER report for an n-best file")
    p.add_argument("--nbest", required=True)
    p.add_argument("--refs", help="references; defaults to transcripts in the file")
    p.add_argument("--baseline", help="baseline n-best file for relative change")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("train-lm", help="train a Kneser-Ney back-off model")
    p.add_argument("--corpus", required=True, help="text corpus, @tag(...) spans allowed")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--members", help="also write the class members sidecar")
    p.set_defaults(func=_cmd_train_lm)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
