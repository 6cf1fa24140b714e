"""Zero-shot, retrieval and multi-label ranking metrics."""
from __future__ import annotations

import numpy as np

from omnilens.errors import ConfigurationError, InputError


def rank_desc(scores):
    """Column order by descending score; ties keep the lower index first."""
    return np.argsort(-np.asarray(scores), axis=-1, kind="stable")


def zero_shot_topk(embeddings, class_matrix, labels, k):
    """Fraction of queries whose true class is among the ``k`` highest dot products."""
    scores = np.asarray(embeddings) @ np.asarray(class_matrix).T
    return topk_accuracy(scores, labels, k)


def topk_accuracy(scores, labels, k):
    scores = np.asarray(scores)
    n_classes = scores.shape[1]
    if k > n_classes:
        raise ConfigurationError(f"K={k} exceeds the {n_classes} classes")
    if k < 1:
        raise ConfigurationError("K must be at least 1")
    top = rank_desc(scores)[:, :k]
    hits = (top == np.asarray(labels)[:, None]).any(axis=1)
    return float(hits.mean()) if len(hits) else 0.0


def merge_class_scores(scores, class_names, merge):
    """Collapse member classes into one column scored by their maximum similarity.

    ``merge`` maps merged label -> member class names. Returns (scores, names).
    """
    scores = np.asarray(scores)
    members = {m for group in merge.values() for m in group}
    keep = [i for i, n in enumerate(class_names) if n not in members]
    cols = [scores[:, keep]]
    names = [class_names[i] for i in keep]
    for label, group in merge.items():
        idx = [class_names.index(m) for m in group]
        cols.append(scores[:, idx].max(axis=1, keepdims=True))
        names.append(label)
    return np.concatenate(cols, axis=1), names


def retrieval_recall(query_emb, gallery_emb, ground_truth, k):
    """Fraction of queries with a ground-truth gallery item in the top ``k`` by cosine.

    ``ground_truth[i]`` is one gallery index or a collection of acceptable indices.
    """
    gallery_emb = np.asarray(gallery_emb)
    if gallery_emb.shape[0] == 0:
        raise InputError("empty gallery")
    k = min(k, gallery_emb.shape[0])
    scores = np.asarray(query_emb) @ gallery_emb.T
    top = rank_desc(scores)[:, :k]
    hits = 0
    for row, truth in zip(top, ground_truth):
        truth = {int(truth)} if np.isscalar(truth) else {int(t) for t in truth}
        hits += bool(truth.intersection(row.tolist()))
    return hits / len(top) if len(top) else 0.0


def average_precision(scores, positives):
    """Mean of precision@rank over the ranks of the positives (descending scores, stable ties)."""
    order = rank_desc(scores)
    rel = np.asarray(positives, dtype=bool)[order]
    if not rel.any():
        raise InputError("no positives for this class")
    ranks = np.flatnonzero(rel) + 1
    precisions = np.arange(1, len(ranks) + 1) / ranks
    return float(precisions.mean())


def mean_average_precision(scores, labels):
    """Average over classes of per-class AP; classes without positives are skipped."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    aps = [
        average_precision(scores[:, c], labels[:, c])
        for c in range(scores.shape[1])
        if labels[:, c].any()
    ]
    if not aps:
        raise InputError("no class has a positive example")
    return float(np.mean(aps))


def one_hot(labels, n_classes):
    out = np.zeros((len(labels), n_classes), dtype=bool)
    out[np.arange(len(labels)), labels] = True
    return out
