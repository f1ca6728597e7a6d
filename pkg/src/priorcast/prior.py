"""Stage one: learn candidate label-space transformations, keep the best.

Every modality trains its own encoder jointly with a transformation matrix
that starts from one shared random orthogonal initialization. After training,
each candidate gets a quality score on its training split; the highest-scoring
transformation becomes the shared prior for stage two, and its pseudo-inverse
is the recasting matrix. The stage-one encoders are throwaway.
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .config import RunConfig
from .data import ModalityData, MultimodalDataset, minibatch_iter, read_features_from, write_features_to
from .encoder import backward, forward, init_params, sgd_step
from .errors import FormatError
from .losses import QSchedule, prior_loss, q_at, quality_score
from .numerics import make_rng, pseudo_inverse, random_orthogonal, split_seed


@dataclass
class PriorMatrix:
    """Selected transformation w (embed_dim x classes) and its recaster l."""

    w: np.ndarray
    l: np.ndarray
    score: Optional[float] = None
    source_modality: Optional[str] = None

    @property
    def embed_dim(self) -> int:
        return self.w.shape[0]

    @property
    def num_classes(self) -> int:
        return self.w.shape[1]


@dataclass
class SplReport:
    scores: Dict[str, float] = field(default_factory=dict)
    selected: Optional[str] = None
    epochs: int = 0
    seed: int = 0
    skipped: bool = False
    wall_seconds: float = 0.0


def train_prior_for_modality(mod: ModalityData, w0: np.ndarray, cfg: RunConfig,
                             rng: np.random.Generator):
    """Joint SGD over one modality's encoder and its candidate transformation.

    Returns (w, params, score) with the score measured on the full split.
    """
    x = mod.features
    y = mod.one_hot(w0.shape[1])
    params = init_params(x.shape[1], cfg.hidden_dim, cfg.embed_dim, rng)
    w = w0.copy()
    sched = QSchedule(cfg.q_start, 1.0, cfg.spl_epochs)
    sched.validate()
    for epoch in range(cfg.spl_epochs):
        q = q_at(sched, epoch)
        for idx in minibatch_iter(mod, cfg.batch_size, rng):
            f, cache = forward(params, x[idx])
            _, d_f, d_w = prior_loss(f, y[idx], w, q)
            grads = backward(params, cache, d_f)
            params = sgd_step(params, grads, cfg.lr)
            w = w - cfg.lr * d_w
    f_all, _ = forward(params, x)
    return w, params, quality_score(f_all, y, w)


def select_prior(candidates: Dict[str, np.ndarray], scores: Dict[str, float]) -> str:
    """Name of the best-scoring candidate; first-listed wins ties."""
    if not candidates:
        raise ValueError("no candidates to select from")
    best = None
    for name in candidates:
        if best is None or scores[name] > scores[best]:
            best = name
    return best


def run_spl(dataset: MultimodalDataset, cfg: RunConfig, seed: int,
            threads: int = 1):
    """Learn and select the shared prior from the training split.

    With cfg.skip_spl the shared random orthogonal initialization is used
    directly (unscored). Per-modality trainings are independent (own encoder,
    own derived seed), so the thread count cannot change the selection.
    Returns (PriorMatrix, SplReport).
    """
    t0 = time.perf_counter()
    w0 = random_orthogonal(cfg.embed_dim, dataset.num_classes,
                           make_rng(split_seed(seed, "spl", "shared-w")))
    if cfg.skip_spl:
        prior = PriorMatrix(w=w0, l=pseudo_inverse(w0))
        report = SplReport(seed=seed, skipped=True,
                           wall_seconds=time.perf_counter() - t0)
        return prior, report

    mods = dataset.splits["train"]
    jobs = [(mod, make_rng(split_seed(seed, "spl", mod.name))) for mod in mods]

    def one(job):
        mod, rng = job
        return train_prior_for_modality(mod, w0, cfg, rng)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(job) for job in jobs]

    candidates: Dict[str, np.ndarray] = {}
    scores: Dict[str, float] = {}
    for mod, (w, _, score) in zip(mods, results):
        candidates[mod.name] = w
        scores[mod.name] = score
    best = select_prior(candidates, scores)
    prior = PriorMatrix(w=candidates[best], l=pseudo_inverse(candidates[best]),
                        score=scores[best], source_modality=best)
    report = SplReport(scores=scores, selected=best, epochs=cfg.spl_epochs,
                       seed=seed, wall_seconds=time.perf_counter() - t0)
    return prior, report


def save_prior(path, prior: PriorMatrix) -> None:
    """One JSON header line, then the w and l tensors as feature blocks."""
    header = {
        "format": "PRIOR1",
        "embed_dim": prior.embed_dim,
        "num_classes": prior.num_classes,
        "score": prior.score,
        "source_modality": prior.source_modality,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        write_features_to(fh, prior.w)
        write_features_to(fh, prior.l)


def load_prior(path) -> PriorMatrix:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad prior header in {path}: {exc}") from exc
        if not isinstance(header, dict) or header.get("format") != "PRIOR1":
            raise FormatError(f"{path} is not a prior file")
        w = read_features_from(fh)
        l = read_features_from(fh)
    d, c = header.get("embed_dim"), header.get("num_classes")
    if w.shape != (d, c) or l.shape != (c, d):
        raise FormatError(f"prior tensor shapes {w.shape}/{l.shape} do not match "
                          f"header ({d}, {c})")
    return PriorMatrix(w=w, l=l, score=header.get("score"),
                       source_modality=header.get("source_modality"))
