"""The acquisition loop: seed, then fine-tune / select / label until the pool
is empty, logging every iteration.

Batch sizes default to a fraction of the *current* unlabeled pool, so they
shrink as the pool drains; constant-batch mode (a fraction of the original
dataset size) is available for comparison runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .acquisition import (
    STRATEGIES,
    AcquisitionRequest,
    PALStarvedError,
    ScoredCandidate,
    select_least_confidence,
)
from .backend import Backend
from .data import Dataset, oracle_label
from .metrics import EvalResult, LearningCurve, auc, evaluate
from .wire import RemoteBackendError, TransportError

STRATEGY_NAMES = tuple(STRATEGIES)


class ConfigError(ValueError):
    """Raised for unusable experiment configuration."""


class MidRunBackendFailure(RuntimeError):
    """Backend died during a run; carries the partial log for flushing."""

    def __init__(self, t: int, partial_log: "ExperimentLog", cause: Exception):
        super().__init__(f"backend failed at iteration {t}: {cause}")
        self.t = t
        self.partial_log = partial_log
        self.cause = cause


@dataclass
class ALConfig:
    strategy: str = "confidence"
    seed_fraction: float = 0.01
    batch_fraction: float = 0.10
    knn_k: int = 5
    kmeans_k: int = 10
    rng_seed: int = 42
    max_span_tokens: int = 30
    eval_checkpoints: list[int] | None = None  # None = every iteration
    batch_mode: str = "shrinking"  # or "constant"
    refeed_all: bool = False  # fine-tune on all labeled data, not just the new batch
    one_per_context: bool = True

    def validate(self) -> "ALConfig":
        if self.strategy not in STRATEGY_NAMES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; expected one of {STRATEGY_NAMES}"
            )
        if not 0 < self.seed_fraction < 1:
            raise ConfigError(f"seed_fraction must be in (0, 1), got {self.seed_fraction}")
        if not 0 < self.batch_fraction <= 1:
            raise ConfigError(f"batch_fraction must be in (0, 1], got {self.batch_fraction}")
        if self.batch_mode not in ("shrinking", "constant"):
            raise ConfigError(f"batch_mode must be shrinking or constant, got {self.batch_mode}")
        if self.knn_k < 1 or self.kmeans_k < 1:
            raise ConfigError("knn_k and kmeans_k must be >= 1")
        if self.max_span_tokens < 1:
            raise ConfigError("max_span_tokens must be >= 1")
        return self

    def as_flat_dict(self) -> dict[str, str]:
        out = {
            "strategy": self.strategy,
            "seed_fraction": repr(self.seed_fraction),
            "batch_fraction": repr(self.batch_fraction),
            "knn_k": str(self.knn_k),
            "kmeans_k": str(self.kmeans_k),
            "rng_seed": str(self.rng_seed),
            "max_span_tokens": str(self.max_span_tokens),
            "batch_mode": self.batch_mode,
            "refeed_all": str(self.refeed_all).lower(),
            "one_per_context": str(self.one_per_context).lower(),
        }
        if self.eval_checkpoints is not None:
            out["eval_checkpoints"] = ",".join(str(t) for t in self.eval_checkpoints)
        return out


_BOOLS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def parse_config(text: str) -> ALConfig:
    """Parse the flat key=value config format; '#' starts a comment line."""
    cfg = ALConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            if key == "strategy":
                cfg.strategy = value
            elif key == "seed_fraction":
                cfg.seed_fraction = float(value)
            elif key == "batch_fraction":
                cfg.batch_fraction = float(value)
            elif key in ("knn_k", "kmeans_k", "rng_seed", "max_span_tokens"):
                setattr(cfg, key, int(value))
            elif key == "eval_checkpoints":
                cfg.eval_checkpoints = (
                    [int(v) for v in value.split(",") if v.strip()] if value else []
                )
            elif key == "batch_mode":
                cfg.batch_mode = value
            elif key in ("refeed_all", "one_per_context"):
                setattr(cfg, key, _BOOLS[value.lower()])
            else:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        except (ValueError, KeyError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"config line {lineno}: bad value for {key}: {value!r}") from e
    return cfg.validate()


def format_config(cfg: ALConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in cfg.as_flat_dict().items())


@dataclass
class PoolState:
    labeled: list[str]
    unlabeled: list[str]
    t: int = 0

    def check(self, total: int) -> None:
        overlap = set(self.labeled) & set(self.unlabeled)
        assert not overlap, f"pool overlap: {sorted(overlap)[:3]}"
        assert len(self.labeled) + len(self.unlabeled) == total, "pool leaked instances"


@dataclass
class IterationRecord:
    t: int
    strategy: str
    fallback: bool
    selected: list[ScoredCandidate]
    n_labeled: int
    n_unlabeled: int
    f1: float | None
    em: float | None
    wall_seconds: float

    def as_dict(self, include_timing: bool = True) -> dict:
        out = {
            "type": "iteration",
            "t": self.t,
            "strategy": self.strategy,
            "fallback": self.fallback,
            "selected": [
                {"id": c.id, "score": _json_safe(c.score), "detail": c.detail}
                for c in self.selected
            ],
            "n_labeled": self.n_labeled,
            "n_unlabeled": self.n_unlabeled,
            "f1": self.f1,
            "em": self.em,
        }
        if include_timing:
            out["wall_seconds"] = self.wall_seconds
        return out


def _json_safe(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class ExperimentLog:
    config: ALConfig
    n_total: int
    records: list[IterationRecord] = field(default_factory=list)
    auc: float | None = None

    def curve(self) -> LearningCurve:
        points = [(r.t, r.f1) for r in self.records if r.f1 is not None]
        return LearningCurve(points)

    def validate(self) -> "ExperimentLog":
        labeled_sizes = [r.n_labeled for r in self.records]
        unlabeled_sizes = [r.n_unlabeled for r in self.records]
        assert all(a < b for a, b in zip(labeled_sizes, labeled_sizes[1:])), (
            "labeled set must strictly grow"
        )
        assert all(a > b for a, b in zip(unlabeled_sizes, unlabeled_sizes[1:])), (
            "unlabeled set must strictly shrink"
        )
        assert unlabeled_sizes[-1] == 0, "run did not exhaust the pool"
        return self


def seed_pool(d: Dataset, cfg: ALConfig) -> PoolState:
    """Uniform seeded draw of max(1, round(seed_fraction * N)) ids to label."""
    if len(d) == 0:
        raise ValueError("cannot seed an empty dataset")
    ids = d.ids()
    n_seed = max(1, int(round(cfg.seed_fraction * len(ids))))
    rng = np.random.default_rng([cfg.rng_seed])
    chosen = set(rng.choice(len(ids), size=n_seed, replace=False).tolist())
    labeled = [ids[i] for i in sorted(chosen)]
    unlabeled = [ids[i] for i in range(len(ids)) if i not in chosen]
    return PoolState(labeled=labeled, unlabeled=unlabeled, t=0)


def batch_size(pool: PoolState, cfg: ALConfig, n_total: int | None = None) -> int:
    """Size of the next acquisition batch; always >= 1, never above the pool."""
    n_u = len(pool.unlabeled)
    if n_u <= 0:
        raise ValueError("unlabeled pool is empty")
    if cfg.batch_mode == "constant":
        base = n_total if n_total is not None else n_u
        return min(n_u, max(1, math.ceil(cfg.batch_fraction * base)))
    return min(n_u, math.ceil(cfg.batch_fraction * n_u))


def run_experiment(
    d: Dataset,
    cfg: ALConfig,
    backend: Backend,
    eval_set: Dataset | None = None,
    progress=None,
) -> ExperimentLog:
    """Run the full loop: seed, then fine-tune / select / label until the
    unlabeled pool is empty.

    Each iteration fine-tunes on the batch labeled in the previous iteration
    (the seed set at iteration 0), selects with the configured strategy,
    labels via the dataset oracle, and moves the ids. Evaluation runs at the
    configured checkpoints (every iteration when unset) against eval_set,
    defaulting to the full dataset.
    """
    cfg.validate()
    if eval_set is None:
        eval_set = d
    pool = seed_pool(d, cfg)
    log = ExperimentLog(config=cfg, n_total=len(d))
    to_tune = [d.get(i) for i in pool.labeled]

    while pool.unlabeled:
        started = time.perf_counter()
        try:
            new_batch = _run_iteration(d, cfg, backend, eval_set, pool, log, to_tune, started)
        except (TransportError, RemoteBackendError) as e:
            raise MidRunBackendFailure(pool.t, log, e) from e
        to_tune = (
            [d.get(i) for i in pool.labeled] if cfg.refeed_all else new_batch
        )
        if progress is not None:
            progress(log.records[-1])

    curve = log.curve()
    if len(curve):
        log.auc = auc(curve)
    return log.validate()


def _run_iteration(d, cfg, backend, eval_set, pool, log, to_tune, started):
    """One loop body: fine-tune, select, label, move, record. Returns the
    freshly labeled batch for the next iteration's fine-tune."""
    backend.fine_tune(to_tune)

    b = batch_size(pool, cfg, n_total=len(d))
    request = AcquisitionRequest(
        dataset=d,
        labeled_ids=list(pool.labeled),
        unlabeled_ids=list(pool.unlabeled),
        batch_size=b,
        backend=backend,
        rng_seed=[cfg.rng_seed, pool.t],
        kmeans_k=cfg.kmeans_k,
        knn_k=cfg.knn_k,
        max_span_tokens=cfg.max_span_tokens,
    )
    strategy = cfg.strategy
    fallback = False
    try:
        selected = STRATEGIES[strategy](request)
    except PALStarvedError:
        strategy = "confidence"
        fallback = True
        selected = select_least_confidence(request)

    selected_ids = [c.id for c in selected]
    assert len(set(selected_ids)) == b, "strategy returned duplicate ids"
    unlabeled_set = set(pool.unlabeled)
    assert all(i in unlabeled_set for i in selected_ids), (
        "strategy selected ids outside the unlabeled pool"
    )

    # oracle labeling: look up the gold answers for the chosen ids
    new_batch = []
    for cid in selected_ids:
        answer_text, answer_start = oracle_label(cid, d)
        inst = d.get(cid)
        assert (answer_text, answer_start) == (
            inst.gold_answer_text,
            inst.gold_answer_char_start,
        )
        new_batch.append(inst)

    chosen = set(selected_ids)
    pool.labeled.extend(selected_ids)
    pool.unlabeled = [i for i in pool.unlabeled if i not in chosen]
    pool.t += 1
    pool.check(len(d))

    completed_t = pool.t - 1
    result: EvalResult | None = None
    if cfg.eval_checkpoints is None or completed_t in cfg.eval_checkpoints:
        result = evaluate(backend, eval_set, cfg.max_span_tokens)

    log.records.append(
        IterationRecord(
            t=completed_t,
            strategy=strategy,
            fallback=fallback,
            selected=selected,
            n_labeled=len(pool.labeled),
            n_unlabeled=len(pool.unlabeled),
            f1=result.f1 if result else None,
            em=result.em if result else None,
            wall_seconds=time.perf_counter() - started,
        )
    )
    return new_batch
