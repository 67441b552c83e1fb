"""Desk-scale experiment: synthetic corpus, windowed MLP, SGD through the
prior-augmented CTC gradient, and peakiness evaluation.

A run is fully determined by a :class:`SyntheticCorpusConfig` and a
:class:`TrainConfig`; both round-trip through flat ``key = value`` files.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax

from . import io
from .align import AlignConstraints, viterbi_align
from .errors import Diverged, ShapeMismatch, ZeroLikelihood
from .loss import ctc_loss_and_grad
from .metrics import MetricsReport, UtteranceAlignment, corpus_metrics
from .priors import (
    PriorAccumulator,
    accumulate_posteriorgram,
    accumulate_viterbi,
    finalize,
    update_schedule,
)
from .types import BLANK, Posteriorgram, Priors, TokenSpan, Vocabulary

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = "ctcprior-toy-1"


# -- corpus -------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticCorpusConfig:
    n_utterances: int = 200
    vocab_size: int = 5
    feature_dim: int = 8
    min_tokens: int = 6
    max_tokens: int = 10
    min_duration: int = 3
    max_duration: int = 8
    silence_insertion_prob: float = 0.3
    min_silence: int = 2
    max_silence: int = 6
    noise_std: float = 2.5
    mean_scale: float = 1.0
    frame_shift_ms: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.min_duration < 1 or self.max_duration < self.min_duration:
            raise ValueError("need 1 <= min_duration <= max_duration")
        if self.min_tokens < 1 or self.max_tokens < self.min_tokens:
            raise ValueError("need 1 <= min_tokens <= max_tokens")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be at least 2")


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    features: np.ndarray
    tokens: Tuple[int, ...]
    spans: Tuple[TokenSpan, ...]

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


def toy_vocabulary(cfg: SyntheticCorpusConfig) -> Vocabulary:
    return Vocabulary.from_tokens([f"p{i}" for i in range(1, cfg.vocab_size + 1)])


def generate_corpus(cfg: SyntheticCorpusConfig) -> List[Utterance]:
    """Utterances built from token-specific Gaussian frame means.

    Row 0 of the mean table is silence. Adjacent tokens never repeat, and
    silence runs (no label) may appear before, between and after tokens.
    """
    rng = np.random.default_rng(cfg.seed)
    means = rng.normal(scale=cfg.mean_scale, size=(cfg.vocab_size + 1, cfg.feature_dim))
    corpus = []
    for n in range(cfg.n_utterances):
        u = int(rng.integers(cfg.min_tokens, cfg.max_tokens + 1))
        tokens = []
        for _ in range(u):
            choices = [k for k in range(1, cfg.vocab_size + 1) if not tokens or k != tokens[-1]]
            tokens.append(int(rng.choice(choices)))
        labels, spans = [], []

        def silence():
            if rng.random() < cfg.silence_insertion_prob:
                labels.extend([BLANK] * int(rng.integers(cfg.min_silence, cfg.max_silence + 1)))

        silence()
        for tok in tokens:
            d = int(rng.integers(cfg.min_duration, cfg.max_duration + 1))
            start = len(labels)
            labels.extend([tok] * d)
            spans.append(TokenSpan(tok, start * cfg.frame_shift_ms, (start + d) * cfg.frame_shift_ms))
            silence()
        labels = np.array(labels)
        feats = means[labels] + cfg.noise_std * rng.normal(size=(labels.size, cfg.feature_dim))
        corpus.append(Utterance(f"utt{n:04d}", feats, tuple(tokens), tuple(spans)))
    return corpus


# -- model --------------------------------------------------------------------

@dataclass
class ToyModel:
    """Frame classifier on a ``2c+1`` frame window: window -> tanh hidden -> K logits."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    context: int = 2

    PARAMS = ("w1", "b1", "w2", "b2")

    @classmethod
    def init(cls, feature_dim: int, num_classes: int, hidden: int = 32,
             context: int = 2, seed: int = 0, scale: float = 1.0) -> "ToyModel":
        rng = np.random.default_rng(seed)
        fan_in = (2 * context + 1) * feature_dim
        w1 = rng.normal(scale=scale / np.sqrt(fan_in), size=(hidden, fan_in))
        w2 = rng.normal(scale=scale / np.sqrt(hidden), size=(num_classes, hidden))
        return cls(w1, np.zeros(hidden), w2, np.zeros(num_classes), context)

    @classmethod
    def zeros(cls, feature_dim: int, num_classes: int, hidden: int = 32, context: int = 2):
        fan_in = (2 * context + 1) * feature_dim
        return cls(np.zeros((hidden, fan_in)), np.zeros(hidden),
                   np.zeros((num_classes, hidden)), np.zeros(num_classes), context)

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1] // (2 * self.context + 1)

    @property
    def num_classes(self) -> int:
        return self.w2.shape[0]

    @property
    def num_parameters(self) -> int:
        return sum(getattr(self, k).size for k in self.PARAMS)

    def params(self) -> Dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.PARAMS}

    def copy(self) -> "ToyModel":
        return ToyModel(*(getattr(self, k).copy() for k in self.PARAMS), context=self.context)


def window(features: np.ndarray, context: int) -> np.ndarray:
    """Stack each frame with ``context`` neighbours on both sides (zero padded)."""
    T, D = features.shape
    padded = np.zeros((T + 2 * context, D))
    padded[context:context + T] = features
    return np.concatenate([padded[i:i + T] for i in range(2 * context + 1)], axis=1)


def _forward(m: ToyModel, features: np.ndarray):
    if features.ndim != 2 or features.shape[1] != m.feature_dim:
        raise ShapeMismatch(f"expected T x {m.feature_dim} features, got {features.shape}")
    x = window(features, m.context)
    h = np.tanh(x @ m.w1.T + m.b1)
    return h @ m.w2.T + m.b2, (x, h)


def model_forward(m: ToyModel, features: np.ndarray) -> np.ndarray:
    """Per-frame logits, shape T x K."""
    return _forward(m, features)[0]


def model_backward(m: ToyModel, cache, dlogits: np.ndarray) -> Dict[str, np.ndarray]:
    x, h = cache
    dh = (dlogits @ m.w2) * (1.0 - h * h)
    return {"w1": dh.T @ x, "b1": dh.sum(axis=0), "w2": dlogits.T @ h, "b2": dlogits.sum(axis=0)}


# -- training -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.0
    epochs: int = 20
    learning_rate: float = 0.05
    clip_norm: float = 5.0
    hidden: int = 32
    context: int = 2
    estimator: str = "marginal"
    update_mode: str = "replace"
    ema_gamma: float = 0.5
    prior_floor: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.estimator not in ("marginal", "viterbi"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.update_mode not in ("replace", "ema"):
            raise ValueError(f"unknown update mode {self.update_mode!r}")


@dataclass
class TrainState:
    epoch: int
    priors: Priors
    prior_history: List[Priors] = field(default_factory=list)
    viterbi_prior_history: List[Priors] = field(default_factory=list)
    marginal_prior_history: List[Priors] = field(default_factory=list)
    loss_history: List[float] = field(default_factory=list)
    skipped: List[int] = field(default_factory=list)
    learning_rate: float = 0.0


def _clip(grads: Dict[str, np.ndarray], max_norm: float) -> Dict[str, np.ndarray]:
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm and norm > max_norm:
        return {k: g * (max_norm / norm) for k, g in grads.items()}
    return grads


def train(corpus: Sequence[Utterance], model: ToyModel, config: TrainConfig,
          init_checkpoint: Union[None, str, Path, ToyModel] = None) -> Tuple[ToyModel, TrainState]:
    """Per-utterance SGD on the prior-augmented CTC loss.

    Priors are frozen within an epoch. Both estimators accumulate during the
    epoch; ``config.estimator`` picks the one that feeds the next epoch.
    """
    if init_checkpoint is not None:
        if isinstance(init_checkpoint, ToyModel):
            model = init_checkpoint
        else:
            model = load_checkpoint(init_checkpoint)[0]
    model = model.copy()
    K = model.num_classes
    rng = np.random.default_rng(config.seed + 1)
    uniform = Priors.uniform(K, config.alpha)
    state = TrainState(0, uniform, [uniform], [uniform], [uniform], learning_rate=config.learning_rate)

    for epoch in range(1, config.epochs + 1):
        priors = state.priors
        acc_marg = acc_vit = PriorAccumulator.empty(K)
        total, count, skipped = 0.0, 0, 0
        for i in rng.permutation(len(corpus)):
            utt = corpus[i]
            logits, cache = _forward(model, utt.features)
            if not np.all(np.isfinite(logits)):
                raise Diverged(epoch)
            try:
                result, dlogits = ctc_loss_and_grad(logits, utt.tokens, priors)
            except ZeroLikelihood:
                skipped += 1
                log.warning("epoch %d: skipping %s (zero likelihood)", epoch, utt.utt_id)
                continue
            if not np.isfinite(result.loss) or not np.all(np.isfinite(dlogits)):
                raise Diverged(epoch)
            total += result.loss
            count += 1

            logp = log_softmax(logits, axis=1)
            acc_marg = accumulate_posteriorgram(acc_marg, logp)
            path = viterbi_align(logp, utt.tokens, priors).best_path
            acc_vit = accumulate_viterbi(acc_vit, path)

            grads = _clip(model_backward(model, cache, dlogits), config.clip_norm)
            for k, g in grads.items():
                getattr(model, k).__isub__(config.learning_rate * g)

        if count == 0:
            raise Diverged(epoch, f"every utterance skipped at epoch {epoch}")
        mean_loss = total / count
        if not np.isfinite(mean_loss):
            raise Diverged(epoch)
        est_marg = finalize(acc_marg, config.prior_floor, config.alpha)
        est_vit = finalize(acc_vit, config.prior_floor, config.alpha)
        new = est_marg if config.estimator == "marginal" else est_vit
        state.priors = update_schedule(epoch, state.priors, new, config.update_mode,
                                       config.ema_gamma)
        state.epoch = epoch
        state.prior_history.append(state.priors)
        state.marginal_prior_history.append(est_marg)
        state.viterbi_prior_history.append(est_vit)
        state.loss_history.append(mean_loss)
        state.skipped.append(skipped)
        log.info("epoch %d alpha %.2f loss %.4f blank prior %.3f", epoch, config.alpha,
                 mean_loss, state.priors.probs[BLANK])
    return model, state


# -- evaluation ---------------------------------------------------------------

@dataclass
class PeakinessReport:
    blank_prior: float
    blank_posterior_mass: float
    blank_frame_fraction: float
    pdur_frames: float
    metrics: MetricsReport

    @property
    def pbe_ms(self) -> float:
        return self.metrics.pbe_ms


def evaluate_peakiness(m: ToyModel, corpus: Sequence[Utterance], priors: Optional[Priors],
                       alpha: Optional[float] = None,
                       constraints: Optional[AlignConstraints] = None,
                       frame_shift_ms: float = 10.0) -> PeakinessReport:
    """Align every utterance and measure peakiness against ground truth.

    ``alpha`` overrides the exponent carried by ``priors``; decoding uses the
    priors unless ``constraints`` says otherwise.
    """
    if priors is not None and alpha is not None:
        priors = priors.with_alpha(alpha)
    pairs = []
    blank_mass, blank_frames, frames = 0.0, 0, 0
    for utt in corpus:
        logp = log_softmax(model_forward(m, utt.features), axis=1)
        pg = Posteriorgram(logp, frame_shift_ms, utt.utt_id, normalized=True)
        res = viterbi_align(pg, utt.tokens, priors, constraints)
        blank_mass += float(np.exp(logp[:, BLANK]).sum())
        blank_frames += res.num_blank_frames
        frames += utt.num_frames
        pairs.append((UtteranceAlignment(utt.utt_id, utt.spans),
                      UtteranceAlignment(utt.utt_id, res.spans)))
    report = corpus_metrics(pairs)
    return PeakinessReport(
        blank_prior=float(priors.probs[BLANK]) if priors is not None else float("nan"),
        blank_posterior_mass=blank_mass / frames,
        blank_frame_fraction=blank_frames / frames,
        pdur_frames=report.pdur_ms / frame_shift_ms,
        metrics=report,
    )


# -- persistence ----------------------------------------------------------------

def save_checkpoint(path: Union[str, Path], model: ToyModel, priors: Priors, epoch: int):
    with open(path, "wb") as fh:
        np.savez(fh, version=np.array(CHECKPOINT_VERSION), context=np.array(model.context),
                 epoch=np.array(epoch), prior_log_p=priors.log_p, alpha=np.array(priors.alpha),
                 **model.params())


def load_checkpoint(path: Union[str, Path]) -> Tuple[ToyModel, Priors, int]:
    with np.load(path, allow_pickle=False) as z:
        version = str(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version!r}")
        model = ToyModel(*(z[k].copy() for k in ToyModel.PARAMS), context=int(z["context"]))
        priors = Priors(z["prior_log_p"], float(z["alpha"]))
        return model, priors, int(z["epoch"])


def _coerce(value: str, typ):
    if typ is bool:
        return value.lower() in ("1", "true", "yes", "on")
    return typ(value)


def parse_config(text: str) -> Tuple[SyntheticCorpusConfig, TrainConfig]:
    """Parse flat ``key = value`` lines; keys prefixed ``corpus.`` or ``train.``
    are routed explicitly, bare keys go to whichever config defines them."""
    corpus_fields = {f.name: f for f in dataclasses.fields(SyntheticCorpusConfig)}
    train_fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    corpus_kw, train_kw = {}, {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        section = None
        if "." in key:
            section, key = key.split(".", 1)
        if section in (None, "corpus") and key in corpus_fields:
            f = corpus_fields[key]
            corpus_kw[key] = _coerce(value, type(f.default))
        elif section in (None, "train") and key in train_fields:
            f = train_fields[key]
            train_kw[key] = _coerce(value, type(f.default))
        else:
            raise ValueError(f"config line {n}: unknown key {key!r}")
    return SyntheticCorpusConfig(**corpus_kw), TrainConfig(**train_kw)


def format_config(corpus_cfg: SyntheticCorpusConfig, train_cfg: TrainConfig) -> str:
    lines = [f"corpus.{k} = {v}" for k, v in dataclasses.asdict(corpus_cfg).items()]
    lines += [f"train.{k} = {v}" for k, v in dataclasses.asdict(train_cfg).items()]
    return "\n".join(lines) + "\n"


def run_experiment(corpus_cfg: SyntheticCorpusConfig, train_cfg: TrainConfig,
                   corpus: Optional[Sequence[Utterance]] = None):
    """Generate (or reuse) the corpus, train one arm and evaluate it."""
    if corpus is None:
        corpus = generate_corpus(corpus_cfg)
    model = ToyModel.init(corpus_cfg.feature_dim, corpus_cfg.vocab_size + 1,
                          train_cfg.hidden, train_cfg.context, seed=train_cfg.seed)
    model, state = train(corpus, model, train_cfg)
    report = evaluate_peakiness(model, corpus, state.priors if train_cfg.alpha > 0 else None,
                                frame_shift_ms=corpus_cfg.frame_shift_ms)
    report.blank_prior = float(state.priors.probs[BLANK])
    return model, state, report


@dataclass
class Arm:
    model: ToyModel
    state: TrainState
    report: PeakinessReport


def run_comparison(corpus_cfg: SyntheticCorpusConfig, train_cfg: TrainConfig,
                   alphas: Sequence[float], out_dir: Union[None, str, Path] = None) -> Dict[float, Arm]:
    """Train one arm per alpha on a shared corpus, optionally writing run artifacts.

    ``out_dir`` receives ``config.txt``, ``reference.ctm`` and one
    ``alpha_<a>/`` folder per arm with loss history, priors and checkpoint.
    """
    corpus = generate_corpus(corpus_cfg)
    vocab = toy_vocabulary(corpus_cfg)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(format_config(corpus_cfg, train_cfg))
        io.write_ctm_records(
            [io.CtmRecord(u.utt_id, s.onset_ms / 1000.0, s.duration_ms / 1000.0,
                          vocab.tokens[s.token_id]) for u in corpus for s in u.spans],
            out / "reference.ctm")
    arms = {}
    for alpha in alphas:
        arm_cfg = dataclasses.replace(train_cfg, alpha=float(alpha))
        model, state, report = run_experiment(corpus_cfg, arm_cfg, corpus)
        arms[float(alpha)] = Arm(model, state, report)
        if out is None:
            continue
        d = out / f"alpha_{alpha:g}"
        d.mkdir(exist_ok=True)
        (d / "loss_history.txt").write_text("".join(f"{x!r}\n" for x in state.loss_history))
        io.write_priors(state.priors, vocab, d / "priors.txt")
        io.write_priors(state.viterbi_prior_history[-1], vocab, d / "priors_viterbi.txt")
        save_checkpoint(d / "checkpoint.npz", model, state.priors, state.epoch)
    return arms
