"""Command-line entry point: ``ctcprior {loss,align,priors,eval,train-toy}``.

Exit codes:
  0 success
  1 unexpected internal error
  2 usage error (unknown flag, bad argument combination)
  3 input file or directory not found
  4 transcript infeasible for the number of frames
  5 zero likelihood / no feasible alignment path
  6 malformed input file
  7 other invalid input (unknown token, tier mismatch, unsegmentable transcript)
  8 toy training diverged
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io
from .align import AlignConstraints, spans_to_words, viterbi_align
from .errors import (
    CTCPriorError,
    Diverged,
    FormatError,
    InfeasibleLength,
    NoFeasiblePath,
    ZeroLikelihood,
)
from .loss import ctc_loss_and_grad, ctc_loss_from_posteriorgram
from .metrics import UtteranceAlignment, corpus_metrics
from .priors import PriorAccumulator, accumulate_posteriorgram, accumulate_viterbi, finalize
from .types import BLANK, DEFAULT_PRIOR_FLOOR, Priors, Vocabulary

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_INFEASIBLE = 4
EXIT_ZERO = 5
EXIT_FORMAT = 6
EXIT_INVALID = 7
EXIT_DIVERGED = 8

log = logging.getLogger("ctcprior")


class UsageError(Exception):
    pass


def _existing(path: Optional[str]) -> Optional[Path]:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    return p


def _vocab(args, num_classes: int) -> Vocabulary:
    if args.vocab:
        vocab = io.read_vocabulary(_existing(args.vocab))
        if vocab.size != num_classes:
            raise UsageError(f"vocabulary has {vocab.size} tokens, grid has {num_classes} columns")
        return vocab
    return Vocabulary.numbered(num_classes)


def _priors(args, vocab: Vocabulary) -> Optional[Priors]:
    """Priors from ``--priors`` with ``--alpha`` overriding the file's exponent.

    Without a priors file a positive ``--alpha`` means uniform priors.
    """
    if args.priors:
        priors, _ = io.read_priors(_existing(args.priors), vocab)
        if args.alpha is not None:
            priors = priors.with_alpha(args.alpha)
        return priors
    if args.alpha:
        return Priors.uniform(vocab.size, args.alpha)
    return None


# -- subcommands ----------------------------------------------------------------

def cmd_loss(args) -> int:
    if args.grad and not args.logits:
        raise UsageError("--grad needs --logits input")
    if bool(args.logits) == bool(args.posteriorgram):
        raise UsageError("give exactly one of --posteriorgram or --logits")
    grid = io.read_posteriorgram(_existing(args.logits or args.posteriorgram))
    vocab = _vocab(args, grid.num_classes)
    w = vocab.encode(args.tokens.split())
    priors = _priors(args, vocab)
    if args.logits:
        result, grad = ctc_loss_and_grad(grid.log_values, w, priors)
        if args.grad:
            io.write_grid(grad, args.grad, grid.frame_shift_ms, grid.utt_id)
    else:
        result = ctc_loss_from_posteriorgram(grid, w, priors)
    print(repr(result.loss))
    return EXIT_OK


def _align_inputs(args):
    src = _existing(args.posteriorgram)
    if src.is_dir():
        if not args.text:
            raise UsageError("aligning a directory needs --text")
        texts = io.read_transcripts(_existing(args.text))
        for f in io.posteriorgram_files(src):
            pg = io.read_posteriorgram(f)
            if pg.utt_id not in texts:
                raise UsageError(f"no transcript for {pg.utt_id}")
            yield pg, texts[pg.utt_id]
    else:
        pg = io.read_posteriorgram(src)
        if args.tokens is not None:
            yield pg, args.tokens.split()
        elif args.text:
            yield pg, io.read_transcripts(_existing(args.text))[pg.utt_id]
        else:
            raise UsageError("give --tokens or --text")


def cmd_align(args) -> int:
    if args.no_intra_word_blanks and not args.lexicon:
        raise UsageError("--no-intra-word-blanks needs --lexicon")
    constraints = AlignConstraints(
        use_priors_at_decode=not args.no_decode_priors,
        blank_only_penalty=args.blank_only,
        forbid_intra_word_blanks=args.no_intra_word_blanks,
    )
    results, word_records = [], []
    vocab = lexicon = None
    for pg, tokens in _align_inputs(args):
        if vocab is None:
            vocab = _vocab(args, pg.num_classes)
            priors = _priors(args, vocab)
            if args.lexicon:
                lexicon = io.read_lexicon(_existing(args.lexicon), vocab)
        res = viterbi_align(pg, vocab.encode(tokens), priors, constraints, lexicon, vocab=vocab)
        results.append(res)
        if args.word_ctm and lexicon is not None and res.words:
            word_records += io.word_ctm_records(
                res.utt_id, spans_to_words(res.spans, res.words, lexicon))
    if vocab is None:
        raise UsageError("no posteriorgrams found")
    io.write_ctm(results, vocab, args.ctm)
    if args.word_ctm:
        io.write_ctm_records(word_records, args.word_ctm)
    return EXIT_OK


def cmd_priors(args) -> int:
    src = _existing(args.inputs)
    files = sorted(src.iterdir()) if src.is_dir() else [src]
    if args.source == "posteriorgrams":
        pg_files = [f for f in files if f.suffix in io.BINARY_SUFFIXES + io.TEXT_SUFFIXES]
        if not pg_files:
            raise UsageError(f"no posteriorgrams in {src}")
        acc = vocab = None
        for f in pg_files:
            pg = io.read_posteriorgram(f)
            if acc is None:
                vocab = _vocab(args, pg.num_classes)
                acc = PriorAccumulator.empty(vocab.size)
            acc = accumulate_posteriorgram(acc, pg)
    else:
        if not args.vocab or not args.posteriorgrams:
            raise UsageError("--from ctm needs --vocab and --posteriorgrams for utterance lengths")
        vocab = io.read_vocabulary(_existing(args.vocab))
        lengths = {}
        for f in io.posteriorgram_files(_existing(args.posteriorgrams)):
            pg = io.read_posteriorgram(f)
            lengths[pg.utt_id] = (pg.num_frames, pg.frame_shift_ms)
        acc = PriorAccumulator.empty(vocab.size)
        records = [r for f in files if f.suffix == ".ctm" for r in io.read_ctm(f)]
        for utt_id, spans in io.ctm_to_spans(records, vocab).items():
            T, shift = lengths[utt_id]
            path = np.full(T, BLANK)
            for s in spans:
                a, b = int(round(s.onset_ms / shift)), int(round(s.offset_ms / shift))
                path[a:b] = s.token_id
            acc = accumulate_viterbi(acc, path)
    priors = finalize(acc, args.floor, args.alpha or 0.0)
    io.write_priors(priors, vocab, args.out)
    return EXIT_OK


def _tiers(directory: Path):
    phones, words = [], []
    for f in sorted(directory.glob("*.ctm")):
        (words if "word" in f.name else phones).extend(io.read_ctm(f))
    return io.ctm_to_spans(phones), io.ctm_to_spans(words)


def cmd_eval(args) -> int:
    ref_p, ref_w = _tiers(_existing(args.ref))
    hyp_p, hyp_w = _tiers(_existing(args.hyp))
    pairs = []
    for utt in sorted(set(ref_p) | set(ref_w)):
        ref = UtteranceAlignment(utt, tuple(ref_p.get(utt, ())), tuple(ref_w.get(utt, ())))
        hyp = UtteranceAlignment(utt, tuple(hyp_p.get(utt, ())), tuple(hyp_w.get(utt, ())))
        pairs.append((ref, hyp))
    report = corpus_metrics(pairs)
    io.write_report(report, args.report)
    sys.stdout.write(report.format())
    return EXIT_OK


def cmd_train_toy(args) -> int:
    from . import toy

    cfg_text = _existing(args.config).read_text() if args.config else ""
    corpus_cfg, train_cfg = toy.parse_config(cfg_text)
    alphas = [train_cfg.alpha]
    if args.compare_alpha:
        alphas = [float(a) for a in args.compare_alpha.split(",")]
    out = Path(args.out_dir)
    arms = toy.run_comparison(corpus_cfg, train_cfg, alphas, out)
    reports = {a: arm.report for a, arm in arms.items()}
    (out / "peakiness.txt").write_text(format_peakiness(reports))
    sys.stdout.write(format_peakiness(reports))
    return EXIT_OK


def format_peakiness(reports) -> str:
    alphas = list(reports)
    rows = [
        ("blank_prior", lambda r: f"{r.blank_prior:.3f}"),
        ("blank_frame_fraction", lambda r: f"{r.blank_frame_fraction:.3f}"),
        ("pdur_frames", lambda r: f"{r.pdur_frames:.2f}"),
        ("pbe_ms", lambda r: f"{r.metrics.pbe_ms:.1f}"),
        ("phone_onset_ms", lambda r: f"{r.metrics.phone_onset_ms:.1f}"),
        ("phone_offset_ms", lambda r: f"{r.metrics.phone_offset_ms:.1f}"),
        ("pdur_ms", lambda r: f"{r.metrics.pdur_ms:.1f}"),
    ]
    head = f"{'metric':<22}" + "".join(f"{'alpha=' + format(a, 'g'):>12}" for a in alphas)
    lines = [head]
    for name, fmt in rows:
        lines.append(f"{name:<22}" + "".join(f"{fmt(reports[a]):>12}" for a in alphas))
    return "\n".join(lines) + "\n"


# -- parser ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctcprior", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("loss", help="CTC loss (with optional priors) of one utterance")
    p.add_argument("--posteriorgram")
    p.add_argument("--logits")
    p.add_argument("--tokens", required=True, help="space-separated transcript tokens")
    p.add_argument("--vocab")
    p.add_argument("--priors")
    p.add_argument("--alpha", type=float)
    p.add_argument("--grad", metavar="OUT", help="write d loss / d logits (needs --logits)")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("align", help="Viterbi forced alignment to CTM")
    p.add_argument("--posteriorgram", required=True, help="file or directory")
    p.add_argument("--tokens")
    p.add_argument("--text", help="transcript file: utt_id tok tok ...")
    p.add_argument("--vocab")
    p.add_argument("--priors")
    p.add_argument("--alpha", type=float)
    p.add_argument("--no-decode-priors", action="store_true")
    p.add_argument("--blank-only", action="store_true")
    p.add_argument("--no-intra-word-blanks", action="store_true")
    p.add_argument("--lexicon")
    p.add_argument("--ctm", required=True)
    p.add_argument("--word-ctm")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("priors", help="estimate label priors")
    p.add_argument("--from", dest="source", choices=("posteriorgrams", "ctm"), required=True)
    p.add_argument("--inputs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--floor", type=float, default=DEFAULT_PRIOR_FLOOR)
    p.add_argument("--alpha", type=float)
    p.add_argument("--vocab")
    p.add_argument("--posteriorgrams", help="posteriorgram dir giving utterance lengths (ctm mode)")
    p.set_defaults(func=cmd_priors)

    p = sub.add_parser("eval", help="boundary-error metrics between CTM directories")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train-toy", help="synthetic training experiment")
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--compare-alpha", help="comma-separated alphas, e.g. 0,0.3")
    p.set_defaults(func=cmd_train_toy)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as err:
        print(f"not found: {err}", file=sys.stderr)
        return EXIT_MISSING
    except InfeasibleLength as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ZeroLikelihood, NoFeasiblePath) as err:
        print(f"no path: {err}", file=sys.stderr)
        return EXIT_ZERO
    except FormatError as err:
        print(f"malformed input: {err}", file=sys.stderr)
        return EXIT_FORMAT
    except Diverged as err:
        print(str(err), file=sys.stderr)
        return EXIT_DIVERGED
    except (CTCPriorError, ValueError, KeyError) as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
