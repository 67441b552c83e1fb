import io
import struct

import numpy as np
import pytest

from ctcprior.align import viterbi_align
from ctcprior.errors import BadMagic, MalformedHeader, TrailingData, TruncatedPayload
from ctcprior.io import (
    CtmRecord,
    ctm_to_spans,
    read_ctm,
    read_lexicon,
    read_posteriorgram,
    read_priors,
    read_report,
    write_ctm,
    write_posteriorgram,
    write_priors,
    write_report,
)
from ctcprior.metrics import MetricsReport, UtteranceAlignment, corpus_metrics
from ctcprior.types import Posteriorgram, Priors, Vocabulary


@pytest.fixture
def gram():
    rng = np.random.default_rng(0)
    return Posteriorgram(np.log(rng.dirichlet(np.ones(4), size=7)), 12.5, "utt7")


class TestPosteriorgram:

    def test_binary_round_trip(self, gram, tmp_path):
        write_posteriorgram(gram, tmp_path / "a.pgb")
        back = read_posteriorgram(tmp_path / "a.pgb")
        assert back.log_values.tobytes() == gram.log_values.tobytes()
        assert (back.frame_shift_ms, back.utt_id) == (12.5, "utt7")

    def test_text_matches_binary(self, gram, tmp_path):
        write_posteriorgram(gram, tmp_path / "a.pgb")
        write_posteriorgram(gram, tmp_path / "a.pgt")
        b = read_posteriorgram(tmp_path / "a.pgb").log_values
        t = read_posteriorgram(tmp_path / "a.pgt").log_values
        np.testing.assert_allclose(t, b, rtol=0, atol=1e-12)

    def test_neg_inf_survives_text(self, tmp_path):
        p = Posteriorgram.from_probs([[1.0, 0.0], [0.5, 0.5]])
        write_posteriorgram(p, tmp_path / "x.pgt")
        assert read_posteriorgram(tmp_path / "x.pgt").log_values[0, 1] == -np.inf

    def test_trailing_rows(self, tmp_path):
        f = tmp_path / "x.pgt"
        f.write_text("2 2 10 u\n0 0\n0 0\n0 0\n")
        with pytest.raises(TrailingData):
            read_posteriorgram(f)

    def test_missing_rows(self, tmp_path):
        f = tmp_path / "x.pgt"
        f.write_text("3 2 10 u\n0 0\n")
        with pytest.raises(TruncatedPayload):
            read_posteriorgram(f)

    @pytest.mark.parametrize("head", ["2 2 10", "two 2 10 u", "0 2 10 u"])
    def test_bad_text_header(self, tmp_path, head):
        f = tmp_path / "x.pgt"
        f.write_text(head + "\n0 0\n0 0\n")
        with pytest.raises(MalformedHeader):
            read_posteriorgram(f)

    def test_binary_errors(self, gram, tmp_path):
        write_posteriorgram(gram, tmp_path / "a.pgb")
        data = (tmp_path / "a.pgb").read_bytes()
        cases = [
            (b"XXXXXX" + data[6:], BadMagic),
            (data[:-8], TruncatedPayload),
            (data[:12], TruncatedPayload),
            (data + b"\0", TrailingData),
        ]
        for blob, err in cases:
            (tmp_path / "b.pgb").write_bytes(blob)
            with pytest.raises(err):
                read_posteriorgram(tmp_path / "b.pgb")

    def test_binary_layout(self, tmp_path):
        write_posteriorgram(Posteriorgram(np.zeros((1, 2)), 10.0, "u"), tmp_path / "a.pgb")
        data = (tmp_path / "a.pgb").read_bytes()
        assert data[:6] == b"CTCPG1"
        assert struct.unpack_from("<IIdI", data, 6) == (1, 2, 10.0, 1)
        assert data[26:27] == b"u" and len(data) == 27 + 16


VOCAB = Vocabulary(("<b>", "a"))


class TestCtm:

    def test_line_format(self):
        p = Posteriorgram.from_probs([[0.4, 0.6], [0.4, 0.6], [0.9, 0.1]], frame_shift_ms=20.0, utt_id="utt")
        res = viterbi_align(p, (1,))
        buf = io.StringIO()
        write_ctm([res], VOCAB, buf)
        assert buf.getvalue() == "utt 1 0.000 0.040 a 0.600\n"

    def test_sorted_and_grouped(self):
        p1 = Posteriorgram.from_probs([[0, 1], [1, 0], [0, 1]], frame_shift_ms=10.0, utt_id="b")
        p2 = Posteriorgram.from_probs([[1, 0], [0, 1]], frame_shift_ms=10.0, utt_id="a")
        results = [viterbi_align(p1, (1, 1)), viterbi_align(p2, (1,))]
        buf = io.StringIO()
        write_ctm(results, VOCAB, buf)
        assert buf.getvalue().splitlines() == [
            "a 1 0.010 0.010 a 1.000",
            "b 1 0.000 0.010 a 1.000",
            "b 1 0.020 0.010 a 1.000",
        ]

    def test_read_back(self, tmp_path):
        f = tmp_path / "x.ctm"
        f.write_text(";; comment\nu 1 0.010 0.020 a 0.500\nu 1 0.000 0.010 a\n")
        recs = read_ctm(f)
        assert recs[0] == CtmRecord("u", 0.01, 0.02, "a", 0.5)
        assert recs[1].confidence == 1.0
        spans = ctm_to_spans(recs, VOCAB)["u"]
        assert [(s.onset_ms, s.offset_ms) for s in spans] == [(0.0, 10.0), (10.0, 30.0)]

    def test_bad_line(self, tmp_path):
        f = tmp_path / "x.ctm"
        f.write_text("u 1 0.0\n")
        with pytest.raises(MalformedHeader):
            read_ctm(f)

    def test_reevaluation_within_half_ms(self, tmp_path):
        rng = np.random.default_rng(3)
        vocab = Vocabulary.numbered(4)
        ref, hyp, results = [], [], []
        for i in range(20):
            T = int(rng.integers(6, 15))
            w = tuple(int(x) for x in rng.integers(1, 4, size=3))
            shift = float(rng.choice([10.0, 12.5, 20.0]))
            p = Posteriorgram(np.log(rng.dirichlet(np.ones(4), size=T)), shift, f"u{i:02d}")
            a = viterbi_align(p, w)
            b = viterbi_align(Posteriorgram(np.log(rng.dirichlet(np.ones(4), size=T)), shift, p.utt_id), w)
            results.append(b)
            ref.append(UtteranceAlignment(p.utt_id, a.spans))
            hyp.append(UtteranceAlignment(p.utt_id, b.spans))
        in_memory = corpus_metrics(zip(ref, hyp))
        write_ctm(results, vocab, tmp_path / "h.ctm")
        parsed = ctm_to_spans(read_ctm(tmp_path / "h.ctm"), vocab)
        reread = corpus_metrics((r, UtteranceAlignment(r.utt_id, tuple(parsed[r.utt_id]))) for r in ref)
        assert abs(reread.pbe_ms - in_memory.pbe_ms) <= 0.5
        assert abs(reread.pdur_ms - in_memory.pdur_ms) <= 0.5


class TestPriorsAndReports:

    def test_priors_round_trip(self, tmp_path):
        vocab = Vocabulary.numbered(3)
        pr = Priors.from_probs([0.7, 0.2, 0.1], alpha=0.3)
        write_priors(pr, vocab, tmp_path / "p.txt")
        back, file_vocab = read_priors(tmp_path / "p.txt")
        assert file_vocab == vocab and back.alpha == 0.3
        np.testing.assert_allclose(back.log_p, pr.log_p, rtol=0, atol=1e-15)

    def test_priors_reordered(self, tmp_path):
        (tmp_path / "p.txt").write_text("a 0.25\n<b> 0.75\n")
        pr, _ = read_priors(tmp_path / "p.txt", VOCAB)
        np.testing.assert_allclose(pr.probs, [0.75, 0.25])

    def test_report_round_trip(self, tmp_path):
        rep = MetricsReport(pbe_ms=22.5, pdur_ms=20.0, phone_onset_ms=15.0,
                            phone_offset_ms=30.0, n_utterances=2)
        write_report(rep, tmp_path / "r.txt")
        back = read_report(tmp_path / "r.txt")
        assert back.pbe_ms == 22.5 and back.n_utterances == 2 and np.isnan(back.wbe_ms)
        assert (tmp_path / "r.txt.json").read_text().count("null") == 4


def test_lexicon(tmp_path):
    vocab = Vocabulary(("<b>", "h", "i"))
    (tmp_path / "lex").write_text("hi h i\n\nih i h\n")
    lex = read_lexicon(tmp_path / "lex", vocab)
    assert lex["hi"] == (1, 2) and lex["ih"] == (2, 1)
    (tmp_path / "bad").write_text("hi\n")
    with pytest.raises(MalformedHeader):
        read_lexicon(tmp_path / "bad", vocab)
