"""Matching-based evaluation of generated summaries.

Selected shots are matched one-to-one against ground-truth shots by
maximum-weight bipartite matching, with concept-set IoU as the edge
weight.  Precision, recall and F1 count matched pairs; queries are
averaged uniformly within each video and videos uniformly across the
split.  The report also carries the summary-length distance d (mean
over queries of the signed selected-minus-truth shot count) and the
mean per-query deviation of summary length from the target fraction.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Corpus, embed_query
from .errors import ContractError, FormatError
from .generator import GeneratorParams, generator_forward, select_shots

__all__ = [
    "QueryResult",
    "EvalReport",
    "iou",
    "max_weight_matching",
    "prf",
    "evaluate",
    "write_report_csv",
    "write_report_json",
    "write_length_study",
]


def iou(a, b) -> float:
    """Intersection over union of two concept sets; two empty sets give 0."""
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def _hungarian_min(cost: np.ndarray) -> list:
    """Optimal assignment on a square cost matrix, potentials method.

    Rows are inserted one at a time; each insertion grows an alternating
    tree over columns until a free column is found, updating the dual
    potentials by the minimum reduced cost.  O(n^3) total.  Scan order
    (rows ascending, columns ascending, strict improvement) fixes which
    optimal assignment is returned when several exist.
    """
    n = cost.shape[0]
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j, 1-based
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return [(int(p[j]) - 1, j - 1) for j in range(1, n + 1)]


def max_weight_matching(weights) -> list:
    """Maximum-weight pairs (i, j) of a rectangular weight matrix.

    The matrix is zero-padded to square and solved as a minimization of
    negated weights; pairs whose weight is exactly 0 are pruned, so the
    result only contains edges that share at least one concept.  Pairs
    come back sorted by (i, j).
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ContractError(f"max_weight_matching: need a matrix, got shape {w.shape}")
    n_gen, n_gt = w.shape
    if n_gen == 0 or n_gt == 0:
        return []
    if not np.isfinite(w).all():
        raise ContractError("max_weight_matching: weights must be finite")
    n = max(n_gen, n_gt)
    square = np.zeros((n, n))
    square[:n_gen, :n_gt] = w
    assignment = _hungarian_min(-square)
    pairs = [
        (i, j)
        for i, j in assignment
        if i < n_gen and j < n_gt and w[i, j] > 0.0
    ]
    pairs.sort()
    return pairs


def prf(n_matched: int, n_gen: int, n_gt: int):
    """Precision, recall, F1 from matched-pair counts, with 0 conventions."""
    if n_matched < 0 or n_gen < 0 or n_gt < 0 or n_matched > min(n_gen, n_gt):
        raise ContractError(
            f"prf: need 0 <= n_matched <= min(n_gen, n_gt), "
            f"got matched={n_matched} gen={n_gen} gt={n_gt}"
        )
    p = n_matched / n_gen if n_gen > 0 else 0.0
    r = n_matched / n_gt if n_gt > 0 else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


@dataclass
class QueryResult:
    video_id: str
    query_index: int
    scenario: str
    precision: float
    recall: float
    f1: float
    n_selected: int
    n_gt: int
    length_dev: float
    length_delta: float


@dataclass
class EvalReport:
    split: str
    threshold: float
    rows: list
    per_video: dict
    precision: float
    recall: float
    f1: float
    d: float
    length_dev: float


def evaluate(
    gparams: GeneratorParams,
    corpus: Corpus,
    split: str,
    threshold: float = 0.5,
    predict=None,
) -> EvalReport:
    """Score every (video, query) of a split with the generator in eval mode.

    Queries with an empty ground-truth summary (the none-present scenario)
    appear in the per-query rows and in the length statistics, but are
    left out of the precision/recall/F1 averages: with nothing to recover,
    any prediction would score 0 by the zero conventions and drag the
    averages down for the wrong reason.

    predict, when given, replaces the generator: called as
    predict(video, query) and expected to return a binary mask over the
    video's shots.  Evaluation hooks and oracle tests use it.
    """
    videos = corpus.split_videos(split)
    if not videos:
        raise ContractError(f"evaluate: split {split!r} is empty")
    rows = []
    per_video = {}
    deltas = []
    devs = []
    for video in videos:
        if len(video.annotations) != video.n_shots:
            raise FormatError(
                f"evaluate: video {video.video_id} has {len(video.annotations)} "
                f"annotation entries for {video.n_shots} shots"
            )
        scored = []
        for qi, query in enumerate(video.queries):
            if predict is not None:
                mask = np.asarray(predict(video, query)).astype(np.uint8)
            else:
                fwd = generator_forward(
                    gparams, video.frame_feats, video.shot_feats,
                    embed_query(query, corpus.concepts), train=False,
                )
                mask = select_shots(fwd.s, threshold)
            gen_idx = np.flatnonzero(mask)
            gt_idx = np.flatnonzero(query.gt_mask)
            weights = np.zeros((gen_idx.size, gt_idx.size))
            for a, gi in enumerate(gen_idx):
                for b, gj in enumerate(gt_idx):
                    weights[a, b] = iou(video.annotations[gi], video.annotations[gj])
            matched = len(max_weight_matching(weights))
            p, r, f1 = prf(matched, gen_idx.size, gt_idx.size)
            gamma_q = float(query.gt_mask.mean())
            dev = abs(float(mask.mean()) - gamma_q)
            delta = float(mask.sum()) - float(gt_idx.size)
            rows.append(
                QueryResult(
                    video_id=video.video_id,
                    query_index=qi,
                    scenario=query.scenario,
                    precision=p,
                    recall=r,
                    f1=f1,
                    n_selected=int(gen_idx.size),
                    n_gt=int(gt_idx.size),
                    length_dev=dev,
                    length_delta=delta,
                )
            )
            deltas.append(delta)
            devs.append(dev)
            if gt_idx.size > 0:
                scored.append((p, r, f1))
        if scored:
            arr = np.array(scored)
            per_video[video.video_id] = {
                "precision": float(arr[:, 0].mean()),
                "recall": float(arr[:, 1].mean()),
                "f1": float(arr[:, 2].mean()),
                "n_queries": len(scored),
            }
    if not per_video:
        raise ContractError(
            f"evaluate: no query in split {split!r} has a nonempty ground truth"
        )
    means = np.array(
        [[v["precision"], v["recall"], v["f1"]] for v in per_video.values()]
    )
    return EvalReport(
        split=split,
        threshold=threshold,
        rows=rows,
        per_video=per_video,
        precision=float(means[:, 0].mean()),
        recall=float(means[:, 1].mean()),
        f1=float(means[:, 2].mean()),
        d=abs(float(np.mean(deltas))),
        length_dev=float(np.mean(devs)),
    )


def _atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_report_csv(report: EvalReport, path) -> None:
    """Per-query rows, then per-video means, then the corpus mean."""
    lines = ["video_id,query_id,scenario,precision,recall,f1"]
    for r in report.rows:
        lines.append(
            f"{r.video_id},{r.query_index},{r.scenario},"
            f"{r.precision!r},{r.recall!r},{r.f1!r}"
        )
    for vid, v in report.per_video.items():
        lines.append(
            f"{vid},,video-mean,{v['precision']!r},{v['recall']!r},{v['f1']!r}"
        )
    lines.append(
        f",,corpus-mean,{report.precision!r},{report.recall!r},{report.f1!r}"
    )
    _atomic_write_text(path, "\n".join(lines) + "\n")


def write_report_json(report: EvalReport, path) -> None:
    payload = {
        "split": report.split,
        "threshold": report.threshold,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "d": report.d,
        "length_dev": report.length_dev,
        "per_video": report.per_video,
        "rows": [asdict(r) for r in report.rows],
    }
    _atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def write_length_study(report: EvalReport, path) -> None:
    """The summary-length distances on their own, one metric per row."""
    lines = [
        "metric,value",
        f"d,{report.d!r}",
        f"length_dev,{report.length_dev!r}",
    ]
    _atomic_write_text(path, "\n".join(lines) + "\n")
