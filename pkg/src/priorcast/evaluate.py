"""Retrieval evaluation: ranking, average precision, MAP tables, PR curves.

Relevance is class equality. Ranking is by cosine similarity with a
deterministic tie-break (ascending gallery index), so results are
bit-reproducible across runs and platforms.
"""

import json
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .data import MultimodalDataset
from .encoder import EncoderParams, forward
from .numerics import NORM_EPS


@dataclass
class RetrievalResult:
    aps: np.ndarray  # per-query average precision, index order
    n_rank: int
    map: float

    @property
    def n_queries(self) -> int:
        return len(self.aps)


@dataclass
class PrCurve:
    rank: np.ndarray
    recall: np.ndarray
    precision: np.ndarray


def embed(params: EncoderParams, features: np.ndarray) -> np.ndarray:
    """Row embeddings for a feature matrix. Rows come back unit-norm."""
    f, _ = forward(params, features)
    return f


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms <= NORM_EPS, 1.0, norms)
    out = x / safe[:, None]
    out[norms <= NORM_EPS] = 0.0
    return out


def rank_gallery(query: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Gallery indices by descending cosine to the query; ties keep index order."""
    if gallery.ndim != 2 or gallery.shape[0] == 0:
        raise ValueError("gallery must be a nonempty matrix")
    qn = _unit_rows(query[None, :])[0]
    sims = _unit_rows(gallery) @ qn
    return np.argsort(-sims, kind="stable")


def average_precision(relevance, n_rank: int) -> float:
    """AP over the top n_rank of an ordered 0/1 relevance list.

    Each relevant position k contributes (relevant-in-top-k)/k; the sum is
    divided by the number of relevant items in the window. No relevant items
    means AP = 0 by convention.
    """
    rel = np.asarray(relevance)
    if rel.size == 0:
        raise ValueError("relevance list is empty")
    if not 1 <= n_rank <= rel.size:
        raise ValueError(f"n_rank {n_rank} outside [1, {rel.size}]")
    window = rel[:n_rank].astype(np.float64)
    cum = np.cumsum(window)
    total = cum[-1]
    if total == 0:
        return 0.0
    k = np.arange(1, n_rank + 1, dtype=np.float64)
    return float(np.sum((cum / k) * window) / total)


def _resolve_n_rank(n_rank, gallery_size: int) -> int:
    if n_rank == "all":
        return gallery_size
    if isinstance(n_rank, bool) or not isinstance(n_rank, int):
        raise ValueError(f"n_rank must be 'all' or a positive integer, got {n_rank!r}")
    if n_rank < 1:
        raise ValueError(f"n_rank must be >= 1, got {n_rank}")
    return min(n_rank, gallery_size)


def map_score(queries: np.ndarray, query_labels: np.ndarray,
              gallery: np.ndarray, gallery_labels: np.ndarray,
              n_rank="all") -> RetrievalResult:
    """Mean AP over all queries against one gallery.

    n_rank is "all" (whole gallery) or a positive depth, clamped to the
    gallery size. APs are accumulated in query index order.
    """
    if gallery.ndim != 2 or gallery.shape[0] == 0:
        raise ValueError("gallery must be a nonempty matrix")
    if len(query_labels) != len(queries) or len(gallery_labels) != len(gallery):
        raise ValueError("labels do not match embeddings")
    depth = _resolve_n_rank(n_rank, gallery.shape[0])
    sims = _unit_rows(queries) @ _unit_rows(gallery).T
    g_labels = np.asarray(gallery_labels)
    aps = np.empty(len(queries))
    for i in range(len(queries)):
        order = np.argsort(-sims[i], kind="stable")
        rel = (g_labels[order] == query_labels[i]).astype(np.float64)
        aps[i] = average_precision(rel, depth)
    return RetrievalResult(aps=aps, n_rank=depth, map=float(np.mean(aps)))


def pr_curve(queries: np.ndarray, query_labels: np.ndarray,
             gallery: np.ndarray, gallery_labels: np.ndarray) -> PrCurve:
    """Precision and recall per rank cutoff, averaged over queries.

    At cutoff k: recall = retrieved-relevant / total-relevant and precision =
    retrieved-relevant / k, each averaged across queries at that k. Queries
    with no relevant gallery item have no defined recall and are left out.
    """
    if gallery.ndim != 2 or gallery.shape[0] == 0:
        raise ValueError("gallery must be a nonempty matrix")
    n_g = gallery.shape[0]
    sims = _unit_rows(queries) @ _unit_rows(gallery).T
    g_labels = np.asarray(gallery_labels)
    k = np.arange(1, n_g + 1, dtype=np.float64)
    recall_sum = np.zeros(n_g)
    precision_sum = np.zeros(n_g)
    count = 0
    for i in range(len(queries)):
        order = np.argsort(-sims[i], kind="stable")
        rel = (g_labels[order] == query_labels[i]).astype(np.float64)
        total = rel.sum()
        if total == 0:
            continue
        cum = np.cumsum(rel)
        recall_sum += cum / total
        precision_sum += cum / k
        count += 1
    if count == 0:
        raise ValueError("no query has any relevant gallery item")
    return PrCurve(rank=np.arange(1, n_g + 1),
                   recall=recall_sum / count,
                   precision=precision_sum / count)


def embed_split(encoders: Dict[str, EncoderParams], dataset: MultimodalDataset,
                split: str = "test"):
    """Per-modality (embeddings, labels) for one split, in modality order."""
    out = {}
    for mod in dataset.splits[split]:
        if mod.name not in encoders:
            raise ValueError(f"no encoder for modality {mod.name!r}")
        out[mod.name] = (embed(encoders[mod.name], mod.features), mod.labels)
    return out


def table_from_embeddings(embedded: dict, n_rank="all") -> dict:
    """MAP for every ordered modality pair, plus the grand average."""
    names = list(embedded)
    pairs = []
    for a in names:
        for b in names:
            if a == b:
                continue
            qe, ql = embedded[a]
            ge, gl = embedded[b]
            result = map_score(qe, ql, ge, gl, n_rank)
            pairs.append({"query": a, "gallery": b, "map": result.map})
    if not pairs:
        raise ValueError("need at least two modalities for cross-modal retrieval")
    avg = float(np.mean([p["map"] for p in pairs]))
    label = "all" if n_rank == "all" else int(n_rank)
    return {"pairs": pairs, "avg": avg, "n_rank": label}


def cross_modal_eval(encoders: Dict[str, EncoderParams],
                     dataset: MultimodalDataset, split: str = "test",
                     n_rank="all") -> dict:
    """Embed one split and score every ordered cross-modal pair."""
    return table_from_embeddings(embed_split(encoders, dataset, split), n_rank)


def write_map_table(path, table: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_pr_csv(path, curve: PrCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("rank,recall,precision\n")
        for r, rec, prec in zip(curve.rank, curve.recall, curve.precision):
            fh.write(f"{int(r)},{float(rec)!r},{float(prec)!r}\n")
