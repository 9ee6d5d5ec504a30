"""Shared builders for synthetic datasets used across the test suite."""


import json

import numpy as np

from palqa.data import Dataset, QAInstance

WORDS = [f"w{i:03d}" for i in range(400)]


def make_instance(i: int, words: list[str], answer_idx: int = 2) -> QAInstance:
    """Two capitalized sentences from the given words.

    The question names the word AFTER the answer, so an untrained lexical
    backend decodes the cue word (wrong) while a backend that memorized the
    gold span decodes the answer (right) -- giving learning curves that rise.
    """
    half = len(words) // 2
    s1 = " ".join(words[:half])
    s2 = " ".join(words[half:])
    context = s1[0].upper() + s1[1:] + ". " + s2[0].upper() + s2[1:] + "."
    answer = words[answer_idx]
    cue = words[answer_idx + 1]
    start = context.find(answer)
    assert start > 0, (answer, context)
    return QAInstance(
        id=f"i{i:04d}",
        question=f"find {cue} please",
        context=context,
        gold_answer_text=answer,
        gold_answer_char_start=start,
    )


def make_dataset(n: int, seed: int = 0) -> Dataset:
    """n instances over a shared vocabulary, each carrying one unique word so
    contexts are pairwise distinct."""
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(n):
        picks = rng.choice(len(WORDS), size=10, replace=False)
        words = [WORDS[j] for j in picks]
        words[-1] = f"u{i:04d}"
        instances.append(make_instance(i, words, answer_idx=int(rng.integers(1, 5))))
    return Dataset(instances)


def make_grouped_dataset(n_groups: int, per_group: int) -> Dataset:
    """Planted topic groups with disjoint vocabularies, for clustering tests."""
    instances = []
    i = 0
    for g in range(n_groups):
        vocab = [f"g{g}t{k:02d}" for k in range(12)]
        rng = np.random.default_rng(1000 + g)
        for _ in range(per_group):
            picks = rng.choice(len(vocab), size=8, replace=False)
            words = [vocab[j] for j in picks]
            words[-1] = f"g{g}u{i:04d}"
            instances.append(make_instance(i, words, answer_idx=1))
            i += 1
    return Dataset(instances)


def make_pal_pool(n_sensitive: int, n_robust: int) -> tuple[Dataset, list[str], list[str], list[str]]:
    """Pool where exactly the sensitive candidates react to their distractor.

    Each sensitive candidate has a dedicated labeled neighbor whose first
    sentence is the candidate's context verbatim, so the distractor repeats
    the candidate's question keyword and dilutes its affinity. Robust
    candidates use keywords that occur nowhere else, so any appended
    distractor leaves their span distributions untouched.

    Returns (dataset, labeled_ids, sensitive_ids, robust_ids).
    """
    instances = []
    sensitive_ids = []
    robust_ids = []
    labeled_ids = []
    for i in range(n_sensitive):
        ctx = f"Ka{i:02d} kb{i:02d} kc{i:02d} trig{i:02d} kd{i:02d} ke{i:02d}."
        answer = f"trig{i:02d}"
        cand = QAInstance(
            id=f"s{i:03d}",
            question=f"find {answer} please",
            context=ctx,
            gold_answer_text=answer,
            gold_answer_char_start=ctx.find(answer),
        )
        neighbor_ctx = ctx + f" Zq{i:02d} zr{i:02d} zs{i:02d}."
        neighbor = QAInstance(
            id=f"l{i:03d}",
            question=f"find zr{i:02d} please",
            context=neighbor_ctx,
            gold_answer_text=f"zr{i:02d}",
            gold_answer_char_start=neighbor_ctx.find(f"zr{i:02d}"),
        )
        instances.extend([cand, neighbor])
        sensitive_ids.append(cand.id)
        labeled_ids.append(neighbor.id)
    for j in range(n_robust):
        ctx = f"Ra{j:02d} rb{j:02d} rc{j:02d} key{j:02d} rd{j:02d} re{j:02d}."
        answer = f"key{j:02d}"
        robust = QAInstance(
            id=f"r{j:03d}",
            question=f"find {answer} please",
            context=ctx,
            gold_answer_text=answer,
            gold_answer_char_start=ctx.find(answer),
        )
        instances.append(robust)
        robust_ids.append(robust.id)
    return Dataset(instances), labeled_ids, sensitive_ids, robust_ids


def squad_payload(records: list[dict]) -> dict:
    """Assemble a SQuAD v1.1 JSON payload from flat records, one article with
    one paragraph per record."""
    paragraphs = []
    for r in records:
        paragraphs.append(
            {
                "context": r["context"],
                "qas": [
                    {
                        "id": r["qa_id"],
                        "question": r["question"],
                        "answers": [
                            {"text": r["answer"], "answer_start": r["answer_start"]}
                        ],
                    }
                ],
            }
        )
    return {"data": [{"title": "synthetic", "paragraphs": paragraphs}]}


def dataset_to_squad_json(d: Dataset, path) -> None:
    """Write a dataset out as SQuAD v1.1 JSON (one paragraph per instance)."""
    records = [
        {
            "context": inst.context,
            "qa_id": inst.id,
            "question": inst.question,
            "answer": inst.gold_answer_text,
            "answer_start": inst.gold_answer_char_start,
        }
        for inst in d
    ]
    with open(path, "w") as fh:
        json.dump(squad_payload(records), fh)
