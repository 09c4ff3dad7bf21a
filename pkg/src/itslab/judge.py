"""Reward-weighted accuracy on externally supplied judge-scored records.

Records pair a per-sample scalar reward with a binary correctness flag,
grouped by question. For a subset of k samples the metric is

    delta = - E_question [ sum_i softmax(r_i / T)_i * correct_i ],

so delta lies in [-1, 0] and -delta is an expected accuracy. T = 0 selects
the argmax reward (ties to the lowest sample_id). Record files are fixed, so
the resampling over candidate sets that fresh generation would provide is
approximated by bootstrap subsets drawn without replacement; subsets for
growing k extend a common permutation, which keeps curves in k smooth at a
fixed seed.

Input format: one JSON object per line with fields question_id, sample_id,
reward, correct.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mc import ErrorEstimate


class JudgeRecordError(ValueError):
    """A judge record file failed validation."""


@dataclass(frozen=True)
class JudgeRecord:
    question_id: str
    sample_id: str
    reward: float
    correct: int


@dataclass(frozen=True)
class _Question:
    sample_ids: tuple
    rewards: np.ndarray   # aligned with sample_ids, which are sorted
    correct: np.ndarray


@dataclass(frozen=True)
class JudgeDataset:
    """Validated records grouped by question."""

    questions: dict

    @property
    def n_questions(self) -> int:
        return len(self.questions)

    @property
    def counts(self) -> dict:
        return {qid: len(q.sample_ids) for qid, q in self.questions.items()}

    def eligible(self, k: int) -> list:
        """Question ids with at least k samples, in sorted order."""
        return [qid for qid in sorted(self.questions) if len(self.questions[qid].sample_ids) >= k]

    @classmethod
    def from_records(cls, records) -> "JudgeDataset":
        """Group an iterable of JudgeRecord; rejects an empty list and duplicates."""
        grouped: dict = {}
        seen: set = set()
        for rec in records:
            key = (rec.question_id, rec.sample_id)
            if key in seen:
                raise JudgeRecordError(f"duplicate record {key!r}")
            if rec.correct not in (0, 1):
                raise JudgeRecordError(f"correct must be 0 or 1, got {rec.correct!r}")
            if not math.isfinite(rec.reward):
                raise JudgeRecordError(f"reward is not finite for {key!r}")
            seen.add(key)
            grouped.setdefault(rec.question_id, []).append(
                (rec.sample_id, float(rec.reward), int(rec.correct))
            )
        if not grouped:
            raise JudgeRecordError("no records")
        questions = {}
        for qid, rows in grouped.items():
            rows.sort(key=lambda r: r[0])
            questions[qid] = _Question(
                sample_ids=tuple(r[0] for r in rows),
                rewards=np.array([r[1] for r in rows]),
                correct=np.array([r[2] for r in rows], dtype=float),
            )
        return cls(questions=questions)


_REQUIRED = ("question_id", "sample_id", "reward", "correct")


def load_records(path) -> JudgeDataset:
    """Parse and validate a newline-delimited record file.

    Raises JudgeRecordError with the offending line number for malformed
    JSON, missing fields, non-finite rewards, non-binary correctness flags
    and duplicate (question_id, sample_id) pairs.
    """
    records = []
    seen: set = set()
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JudgeRecordError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise JudgeRecordError(f"{path}:{lineno}: expected a JSON object")
            for fieldname in _REQUIRED:
                if fieldname not in obj:
                    raise JudgeRecordError(f"{path}:{lineno}: missing field {fieldname!r}")
            qid = str(obj["question_id"])
            sid = str(obj["sample_id"])
            try:
                reward = float(obj["reward"])
            except (TypeError, ValueError) as exc:
                raise JudgeRecordError(f"{path}:{lineno}: reward is not a number") from exc
            if not math.isfinite(reward):
                raise JudgeRecordError(f"{path}:{lineno}: reward is not finite")
            correct = obj["correct"]
            if isinstance(correct, bool):
                correct = int(correct)
            if correct not in (0, 1):
                raise JudgeRecordError(
                    f"{path}:{lineno}: correct must be 0 or 1, got {obj['correct']!r}"
                )
            if (qid, sid) in seen:
                raise JudgeRecordError(f"{path}:{lineno}: duplicate record ({qid!r}, {sid!r})")
            seen.add((qid, sid))
            records.append(JudgeRecord(qid, sid, reward, int(correct)))
    if not records:
        raise JudgeRecordError(f"{path}: no records")
    return JudgeDataset.from_records(records)


def _subset_value(rewards: np.ndarray, correct: np.ndarray, T: float) -> float:
    """Softmax-weighted accuracy of one candidate subset (arrays in sample_id order)."""
    if T == 0:
        return float(correct[np.argmax(rewards)])
    w = np.exp((rewards - rewards.max()) / T)
    # sum/sum keeps the all-correct case exactly 1.0
    return float(np.sum(w * correct) / np.sum(w))


def judge_delta(
    ds: JudgeDataset, k: int, T: float, n_resample: int, rng: np.random.Generator
) -> ErrorEstimate:
    """Negated expected accuracy of reward-weighted selection at (k, T).

    For every question with at least k samples, ``n_resample`` subsets of
    size k are drawn without replacement; questions with fewer samples are
    excluded. The stderr is taken across per-question means, so resampling
    noise is folded in. Raises when no question is eligible.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if n_resample < 1:
        raise ValueError(f"n_resample must be >= 1, got {n_resample}")
    eligible = ds.eligible(k)
    if not eligible:
        raise ValueError(f"no question has >= {k} samples")
    per_question = np.empty(len(eligible))
    for qi, qid in enumerate(eligible):
        q = ds.questions[qid]
        nq = len(q.sample_ids)
        acc = 0.0
        for _ in range(n_resample):
            idx = np.sort(rng.permutation(nq)[:k])
            acc += _subset_value(q.rewards[idx], q.correct[idx], T)
        per_question[qi] = acc / n_resample
    mean = -float(per_question.mean())
    stderr = (
        float(per_question.std(ddof=1) / math.sqrt(len(eligible)))
        if len(eligible) > 1
        else math.inf
    )
    return ErrorEstimate(
        mean=mean, stderr=stderr, n_outer=len(eligible), n_inner=n_resample, mode="judge"
    )


def judge_sweep(
    ds: JudgeDataset, k_grid, T_grid, n_resample: int, rng: np.random.Generator
) -> list[dict]:
    """Grid evaluation of the judge metric, sharing permutations across cells.

    Returns one row dict per (k, T) with keys k, T, delta, stderr,
    n_questions_used, n_resample. Each question draws one permutation per
    resample; the size-k subset is its first k entries, so estimates are
    positively coupled along k.
    """
    k_grid = [int(k) for k in k_grid]
    T_grid = [float(T) for T in T_grid]
    if any(k < 1 for k in k_grid):
        raise ValueError("every k must be >= 1")
    if any(T < 0 for T in T_grid):
        raise ValueError("every T must be >= 0")
    qids = sorted(ds.questions)
    perms = {
        qid: [rng.permutation(len(ds.questions[qid].sample_ids)) for _ in range(n_resample)]
        for qid in qids
    }
    rows = []
    for k in k_grid:
        eligible = [qid for qid in qids if len(ds.questions[qid].sample_ids) >= k]
        if not eligible:
            raise ValueError(f"no question has >= {k} samples")
        for T in T_grid:
            per_question = np.empty(len(eligible))
            for qi, qid in enumerate(eligible):
                q = ds.questions[qid]
                acc = 0.0
                for perm in perms[qid]:
                    idx = np.sort(perm[:k])
                    acc += _subset_value(q.rewards[idx], q.correct[idx], T)
                per_question[qi] = acc / n_resample
            mean = -float(per_question.mean())
            stderr = (
                float(per_question.std(ddof=1) / math.sqrt(len(eligible)))
                if len(eligible) > 1
                else math.inf
            )
            rows.append(
                {
                    "k": k,
                    "T": T,
                    "delta": mean,
                    "stderr": stderr,
                    "n_questions_used": len(eligible),
                    "n_resample": n_resample,
                }
            )
    return rows
