"""Acquisition strategies and their numerical primitives.

Four ways to pick the next annotation batch from the unlabeled pool:

* confidence  -- lowest decoded span score (uncertainty sampling)
* clustering  -- k-means over pool embeddings, proportional per-cluster draw
* diversity   -- farthest from the labeled set's embedding centroids
* pal         -- perturbation robustness: append a distractor sentence
                 harvested from similar labeled contexts and score the shift
                 of the span distributions on the original tokens with a
                 symmetrized KL divergence

All tie-breaks are by ascending instance id so runs replay exactly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .backend import Backend, decode_answer
from .data import Dataset, QAInstance

PROB_FLOOR = 1e-12
SKIP_SCORE = math.inf


class NoEligibleNeighborsError(ValueError):
    """Every corpus entry was excluded (or the corpus was empty)."""


class PALStarvedError(RuntimeError):
    """Every candidate was skip-signaled; the caller should fall back."""


@dataclass(frozen=True)
class ScoredCandidate:
    id: str
    score: float
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NeighborSet:
    query_id: str | None
    neighbors: tuple[tuple[str, float], ...]  # (id, distance), ascending

    def ids(self) -> list[str]:
        return [nid for nid, _ in self.neighbors]


@dataclass(frozen=True)
class PerturbedInstance:
    original_id: str
    perturbed_context: str
    distractor: str
    distractor_source_id: str


@dataclass
class AcquisitionRequest:
    """Everything a strategy needs: the pool split, the batch size, and knobs."""

    dataset: Dataset
    labeled_ids: Sequence[str]
    unlabeled_ids: Sequence[str]
    batch_size: int
    backend: Backend
    rng_seed: int | Sequence[int] = 0
    kmeans_k: int = 10
    knn_k: int = 5
    max_span_tokens: int = 30

    def __post_init__(self):
        overlap = set(self.labeled_ids) & set(self.unlabeled_ids)
        if overlap:
            raise ValueError(f"labeled and unlabeled ids overlap: {sorted(overlap)[:3]}")
        if not 1 <= self.batch_size <= len(self.unlabeled_ids):
            raise ValueError(
                f"batch size {self.batch_size} out of range for "
                f"{len(self.unlabeled_ids)} unlabeled candidates"
            )


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def knn(
    query: np.ndarray,
    corpus: Sequence[tuple[str, np.ndarray]],
    k: int,
    excluded_context: str,
    contexts: Mapping[str, str],
    query_id: str | None = None,
) -> NeighborSet:
    """k nearest corpus entries by Euclidean distance, excluding entries whose
    context string equals excluded_context exactly. Ties break by id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = [
        (euclidean(query, vec), cid)
        for cid, vec in corpus
        if contexts[cid] != excluded_context
    ]
    if not scored:
        raise NoEligibleNeighborsError(
            "no eligible neighbors: corpus empty after context exclusion"
        )
    scored.sort(key=lambda pair: (pair[0], pair[1]))
    return NeighborSet(
        query_id=query_id,
        neighbors=tuple((cid, dist) for dist, cid in scored[:k]),
    )


def _kmeans_pp_init(
    vectors: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = vectors.shape[0]
    chosen = [int(rng.integers(n))]
    min_sq = np.sum((vectors - vectors[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = float(min_sq.sum())
        if total <= 0.0:
            # all remaining points coincide with a centroid; pick any unchosen
            remaining = [i for i in range(n) if i not in set(chosen)]
            chosen.append(int(rng.choice(remaining)))
        else:
            idx = int(rng.choice(n, p=min_sq / total))
            chosen.append(idx)
        min_sq = np.minimum(
            min_sq, np.sum((vectors - vectors[chosen[-1]]) ** 2, axis=1)
        )
    return vectors[chosen].copy()


def kmeans(
    points: Sequence[tuple[str, np.ndarray]],
    k: int,
    rng_seed: int | Sequence[int],
    max_iters: int = 100,
) -> tuple[dict[str, int], np.ndarray]:
    """Seeded k-means++ initialization followed by Lloyd iterations.

    Converges when no assignment changes. Empty clusters are repaired by
    moving in the point farthest from its current centroid. Distortion is
    checked non-increasing every iteration.
    """
    if not 1 <= k <= len(points):
        raise ValueError(f"k={k} out of range for {len(points)} points")
    ids = [pid for pid, _ in points]
    vectors = np.stack([np.asarray(v, dtype=np.float64) for _, v in points])
    rng = np.random.default_rng(rng_seed)
    centroids = _kmeans_pp_init(vectors, k, rng)

    assignments = np.full(len(ids), -1, dtype=np.int64)
    last_distortion = math.inf
    for _ in range(max_iters):
        dists = np.linalg.norm(vectors[:, None, :] - centroids[None, :, :], axis=2)
        new_assignments = np.argmin(dists, axis=1)

        # repair empty clusters with the globally farthest-from-own-centroid point
        for cluster in range(k):
            if not np.any(new_assignments == cluster):
                own = dists[np.arange(len(ids)), new_assignments]
                donors = np.array(
                    [
                        own[i] if np.sum(new_assignments == new_assignments[i]) > 1 else -1.0
                        for i in range(len(ids))
                    ]
                )
                farthest = int(np.argmax(donors))
                new_assignments[farthest] = cluster
                centroids[cluster] = vectors[farthest]
                dists[:, cluster] = np.linalg.norm(vectors - centroids[cluster], axis=1)

        distortion = float(
            np.sum(dists[np.arange(len(ids)), new_assignments] ** 2)
        )
        assert distortion <= last_distortion + 1e-9, "k-means distortion increased"
        last_distortion = distortion

        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for cluster in range(k):
            members = vectors[assignments == cluster]
            if len(members):
                centroids[cluster] = members.mean(axis=0)

    return {pid: int(c) for pid, c in zip(ids, assignments)}, centroids


def proportional_sample(
    assignments: Mapping[str, int],
    b: int,
    rng_seed: int | Sequence[int],
) -> list[str]:
    """Draw b ids with per-cluster quotas from largest-remainder apportionment.

    Remainder seats go to the larger fractional parts; equal remainders go to
    the lower cluster id. Within a cluster the draw is uniform without
    replacement, seeded.
    """
    total = len(assignments)
    if b > total:
        raise ValueError(f"cannot sample {b} ids from {total} points")
    clusters: dict[int, list[str]] = {}
    for pid, cluster in assignments.items():
        clusters.setdefault(cluster, []).append(pid)
    cluster_ids = sorted(clusters)

    quotas = {}
    remainders = []
    assigned = 0
    for cid in cluster_ids:
        exact = b * len(clusters[cid]) / total
        quotas[cid] = int(math.floor(exact))
        assigned += quotas[cid]
        remainders.append((-(exact - quotas[cid]), cid))
    remainders.sort()
    for _, cid in remainders[: b - assigned]:
        quotas[cid] += 1

    rng = np.random.default_rng(rng_seed)
    selected: list[str] = []
    for cid in cluster_ids:
        members = sorted(clusters[cid])
        quota = quotas[cid]
        if quota == 0:
            continue
        picks = rng.choice(len(members), size=quota, replace=False)
        selected.extend(members[i] for i in sorted(picks))
    return selected


_SENTENCE_END = re.compile(r"[.?!]")


def split_sentences(context: str) -> list[str]:
    """Split after '.', '?' or '!' when followed by whitespace plus an
    uppercase letter, or by end-of-text. Deliberately naive: abbreviations
    like "Dr." split when a capitalized word follows."""
    boundaries = []
    n = len(context)
    for m in _SENTENCE_END.finditer(context):
        j = m.end()
        while j < n and context[j].isspace():
            j += 1
        if j == n or (j > m.end() and context[j].isupper()):
            boundaries.append(m.end())
    sentences = []
    prev = 0
    for b in boundaries:
        piece = context[prev:b].strip()
        if piece:
            sentences.append(piece)
        prev = b
    tail = context[prev:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def restrict_renormalize(dist_vector: np.ndarray, n_original: int) -> np.ndarray:
    """First n_original entries, floored at PROB_FLOOR, renormalized to sum 1."""
    v = np.asarray(dist_vector, dtype=np.float64)
    if not 1 <= n_original <= len(v):
        raise ValueError(f"n_original={n_original} out of range for length {len(v)}")
    head = np.maximum(v[:n_original], PROB_FLOOR)
    return head / head.sum()


def sym_kl(p: np.ndarray, q: np.ndarray) -> float:
    """Symmetrized KL divergence D(P||Q) + D(Q||P), natural log.

    Computed as sum_i (p_i - q_i) * (ln p_i - ln q_i), which is algebraically
    the same and exactly symmetric in floating point. Inputs must already be
    floored away from zero.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.sum((p - q) * (np.log(p) - np.log(q))))


class _PALScratch:
    """Per-call caches shared across candidates: labeled context embeddings,
    sentence splits, and sentence embeddings keyed by text."""

    def __init__(self, backend: Backend, labeled: Sequence[QAInstance]):
        self.backend = backend
        self.labeled = list(labeled)
        self.contexts = {inst.id: inst.context for inst in self.labeled}
        self.context_embeddings = [
            (inst.id, backend.embed(inst.context)) for inst in self.labeled
        ]
        self._sentences: dict[str, list[str]] = {}
        self._sentence_vecs: dict[str, np.ndarray] = {}

    def sentences(self, context: str) -> list[str]:
        if context not in self._sentences:
            self._sentences[context] = split_sentences(context)
        return self._sentences[context]

    def sentence_vec(self, sentence: str) -> np.ndarray:
        if sentence not in self._sentence_vecs:
            self._sentence_vecs[sentence] = self.backend.embed(sentence)
        return self._sentence_vecs[sentence]


def build_perturbation(
    u: QAInstance,
    labeled: Sequence[QAInstance],
    backend: Backend,
    k: int,
    _scratch: _PALScratch | None = None,
) -> PerturbedInstance | None:
    """Append the distractor sentence harvested from the k most similar
    labeled contexts (exact-context duplicates excluded).

    The distractor is the sentence closest in embedding space to the
    candidate's context; ties break by (neighbor rank, sentence index).
    Returns None as the skip signal when no eligible neighbor or no sentence
    exists.
    """
    scratch = _scratch or _PALScratch(backend, labeled)
    query_vec = backend.embed(u.context)
    try:
        hood = knn(
            query_vec,
            scratch.context_embeddings,
            k,
            excluded_context=u.context,
            contexts=scratch.contexts,
            query_id=u.id,
        )
    except NoEligibleNeighborsError:
        return None

    best: tuple[float, int, int] | None = None  # (distance, rank, sentence index)
    best_sentence = None
    best_source = None
    for rank, (nid, _) in enumerate(hood.neighbors):
        for si, sentence in enumerate(scratch.sentences(scratch.contexts[nid])):
            dist = euclidean(scratch.sentence_vec(sentence), query_vec)
            key = (dist, rank, si)
            if best is None or key < best:
                best = key
                best_sentence = sentence
                best_source = nid
    if best_sentence is None:
        return None
    return PerturbedInstance(
        original_id=u.id,
        perturbed_context=u.context + " " + best_sentence,
        distractor=best_sentence,
        distractor_source_id=best_source,
    )


def pal_score(
    u: QAInstance,
    backend: Backend,
    labeled: Sequence[QAInstance],
    k: int,
    _scratch: _PALScratch | None = None,
) -> ScoredCandidate:
    """Negative symmetrized-KL shift of the span distributions under the
    distractor, restricted to the original context tokens. 0 means fully
    robust; more negative means more sensitive. Skips score +inf."""
    perturbed = build_perturbation(u, labeled, backend, k, _scratch=_scratch)
    if perturbed is None:
        return ScoredCandidate(id=u.id, score=SKIP_SCORE, detail={"skipped": True})
    base = backend.predict(u.question, u.context)
    shifted = backend.predict(u.question, perturbed.perturbed_context)
    n = len(base)
    if len(shifted) < n:
        # adapters that truncate may return fewer tokens than the original
        return ScoredCandidate(id=u.id, score=SKIP_SCORE, detail={"skipped": True})
    kl_start = sym_kl(
        restrict_renormalize(base.start_probs, n),
        restrict_renormalize(shifted.start_probs, n),
    )
    kl_end = sym_kl(
        restrict_renormalize(base.end_probs, n),
        restrict_renormalize(shifted.end_probs, n),
    )
    return ScoredCandidate(
        id=u.id,
        score=-(kl_start + kl_end),
        detail={
            "distractor": perturbed.distractor,
            "distractor_source_id": perturbed.distractor_source_id,
            "kl_start": kl_start,
            "kl_end": kl_end,
        },
    )


def _instances(dataset: Dataset, ids: Sequence[str]) -> list[QAInstance]:
    return [dataset.get(i) for i in ids]


def select_least_confidence(req: AcquisitionRequest) -> list[ScoredCandidate]:
    """The b candidates whose decoded answer span scores lowest."""
    scored = []
    for uid in req.unlabeled_ids:
        inst = req.dataset.get(uid)
        dist = req.backend.predict(inst.question, inst.context)
        span = decode_answer(dist, inst.context, req.max_span_tokens)
        scored.append(
            ScoredCandidate(
                id=uid,
                score=span.score,
                detail={"span_text": span.text, "token_start": span.token_start},
            )
        )
    scored.sort(key=lambda c: (c.score, c.id))
    return scored[: req.batch_size]


def _pool_embedding_text(inst: QAInstance) -> str:
    return inst.question + " " + inst.context


def select_clustering(req: AcquisitionRequest) -> list[ScoredCandidate]:
    """k-means over question+context embeddings of the pool, then a
    cluster-size-proportional draw of b ids."""
    points = [
        (uid, req.backend.embed(_pool_embedding_text(req.dataset.get(uid))))
        for uid in req.unlabeled_ids
    ]
    k = min(req.kmeans_k, len(points))
    seed = list(req.rng_seed) if isinstance(req.rng_seed, (list, tuple)) else [req.rng_seed]
    assignments, centroids = kmeans(points, k, seed + [0])
    chosen = set(proportional_sample(assignments, req.batch_size, seed + [1]))
    vectors = dict(points)
    out = []
    for uid in sorted(chosen):
        cluster = assignments[uid]
        out.append(
            ScoredCandidate(
                id=uid,
                score=euclidean(vectors[uid], centroids[cluster]),
                detail={"cluster": cluster},
            )
        )
    return out


def select_diversity(req: AcquisitionRequest) -> list[ScoredCandidate]:
    """The b candidates farthest from their closest labeled-set centroid."""
    if not req.labeled_ids:
        raise ValueError("diversity selection needs at least one labeled instance")
    labeled_points = [
        (lid, req.backend.embed(_pool_embedding_text(req.dataset.get(lid))))
        for lid in req.labeled_ids
    ]
    k = min(req.kmeans_k, len(labeled_points))
    _, centroids = kmeans(labeled_points, k, req.rng_seed)
    scored = []
    for uid in req.unlabeled_ids:
        vec = req.backend.embed(_pool_embedding_text(req.dataset.get(uid)))
        score = float(np.min(np.linalg.norm(centroids - vec, axis=1)))
        scored.append(ScoredCandidate(id=uid, score=score))
    scored.sort(key=lambda c: (-c.score, c.id))
    return scored[: req.batch_size]


def select_pal(req: AcquisitionRequest, k: int | None = None) -> list[ScoredCandidate]:
    """The b candidates with the lowest robustness score.

    Raises PALStarvedError when every candidate was skip-signaled so the
    loop can fall back to least confidence for the iteration.
    """
    if not req.labeled_ids:
        raise ValueError("perturbation selection needs at least one labeled instance")
    k = req.knn_k if k is None else k
    labeled = _instances(req.dataset, req.labeled_ids)
    scratch = _PALScratch(req.backend, labeled)
    scored = [
        pal_score(req.dataset.get(uid), req.backend, labeled, k, _scratch=scratch)
        for uid in req.unlabeled_ids
    ]
    if all(c.score == SKIP_SCORE for c in scored):
        raise PALStarvedError(
            "every candidate was skip-signaled; fall back to least confidence"
        )
    scored.sort(key=lambda c: (c.score, c.id))
    return scored[: req.batch_size]


def select_random(req: AcquisitionRequest) -> list[ScoredCandidate]:
    """Uniform seeded draw; a non-strategy baseline control."""
    rng = np.random.default_rng(req.rng_seed)
    ordered = sorted(req.unlabeled_ids)
    picks = rng.choice(len(ordered), size=req.batch_size, replace=False)
    return [
        ScoredCandidate(id=ordered[i], score=0.0, detail={"baseline": "random"})
        for i in sorted(picks)
    ]


STRATEGIES: dict[str, Callable[[AcquisitionRequest], list[ScoredCandidate]]] = {
    "confidence": select_least_confidence,
    "clustering": select_clustering,
    "diversity": select_diversity,
    "pal": select_pal,
    "random": select_random,
}
