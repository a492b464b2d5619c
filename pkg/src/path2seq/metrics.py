"""Task metrics: case-insensitive subtoken precision/recall/F1 and corpus
BLEU-4 with add-one smoothing, plus the ablation comparison harness.

F1 matches subtokens as multisets (a repeated subtoken must be predicted
the right number of times). The corpus aggregate is micro (counts summed
before the ratio); a macro mean over examples is carried along for
diagnostics.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import Path2SeqError


class EmptyCandidateSet(Path2SeqError):
    kind = "empty-candidate-set"


class MissingCheckpoint(Path2SeqError):
    kind = "missing-checkpoint"


@dataclass
class F1Report:
    precision: float
    recall: float
    f1: float
    macro_precision: float = 0.0
    macro_recall: float = 0.0
    macro_f1: float = 0.0


def _prf(matched: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    if n_pred == 0 and n_gold == 0:
        return 1.0, 1.0, 1.0
    precision = matched / n_pred if n_pred else 0.0
    recall = matched / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _fold(tokens) -> list[str]:
    return [t.lower() for t in tokens]


def subtoken_f1(predicted, gold) -> tuple[float, float, float]:
    """Precision, recall and F1 of one prediction against its gold
    sequence, order-insensitive, matching multisets case-insensitively."""
    pred_counts = Counter(_fold(predicted))
    gold_counts = Counter(_fold(gold))
    matched = sum(min(pred_counts[t], gold_counts[t]) for t in pred_counts)
    return _prf(matched, sum(pred_counts.values()), sum(gold_counts.values()))


def corpus_f1(pairs) -> F1Report:
    """Micro-aggregated F1 over (predicted, gold) pairs, with the macro
    mean reported alongside."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("corpus_f1 needs at least one pair")
    matched = n_pred = n_gold = 0
    macro = [0.0, 0.0, 0.0]
    for predicted, gold in pairs:
        pred_counts = Counter(_fold(predicted))
        gold_counts = Counter(_fold(gold))
        m = sum(min(pred_counts[t], gold_counts[t]) for t in pred_counts)
        matched += m
        n_pred += sum(pred_counts.values())
        n_gold += sum(gold_counts.values())
        for slot, value in enumerate(_prf(m, sum(pred_counts.values()),
                                          sum(gold_counts.values()))):
            macro[slot] += value
    precision, recall, f1 = _prf(matched, n_pred, n_gold)
    n = len(pairs)
    return F1Report(precision, recall, f1,
                    macro_precision=macro[0] / n, macro_recall=macro[1] / n,
                    macro_f1=macro[2] / n)


@dataclass
class BleuReport:
    bleu: float                 # corpus BLEU in [0, 100]
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    candidate_length: int
    reference_length: int


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def smoothed_bleu(candidates, reference_sets, max_order: int = 4) -> BleuReport:
    """Corpus BLEU with multi-reference clipping and add-one smoothing.

    Tokens are case-folded. Modified n-gram precision clips each candidate
    n-gram count by the best reference count. For orders >= 2 a zero match
    count is smoothed to (0+1)/(total+1) so short or disjoint corpora stay
    finite; unigram precision is left alone, so zero unigram overlap still
    scores ~0. The brevity penalty uses the closest reference length per
    candidate (ties to the shorter one).
    """
    candidates = [_fold(c) for c in candidates]
    reference_sets = [[_fold(r) for r in refs] for refs in reference_sets]
    if not candidates:
        raise EmptyCandidateSet("no candidates to score")
    if len(candidates) != len(reference_sets):
        raise ValueError("candidate/reference count mismatch")
    if any(not refs for refs in reference_sets):
        raise ValueError("every candidate needs at least one reference")

    matches = [0] * max_order
    totals = [0] * max_order
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, reference_sets):
        cand_len += len(cand)
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for n in range(1, max_order + 1):
            cand_ngrams = _ngrams(cand, n)
            if not cand_ngrams:
                continue
            best = Counter()
            for ref in refs:
                for gram, count in _ngrams(ref, n).items():
                    if count > best[gram]:
                        best[gram] = count
            matches[n - 1] += sum(min(count, best[gram])
                                  for gram, count in cand_ngrams.items())
            totals[n - 1] += sum(cand_ngrams.values())

    precisions = []
    for n in range(1, max_order + 1):
        m, t = matches[n - 1], totals[n - 1]
        if n >= 2 and m == 0:
            precisions.append((m + 1) / (t + 1))
        else:
            precisions.append(m / t if t else 0.0)

    if precisions[0] == 0.0:
        geo_mean = 0.0
    else:
        geo_mean = math.exp(sum(math.log(p) for p in precisions) / max_order)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    if cand_len == 0:
        bp = 0.0
    return BleuReport(bleu=100.0 * bp * geo_mean, precisions=tuple(precisions),
                      brevity_penalty=bp, candidate_length=cand_len,
                      reference_length=ref_len)


# --- prediction dumps and reports ---
#
# Dump line: `gold subtokens | predicted subtokens | score`, tokens
# space-separated inside each field.

def format_prediction_line(gold, predicted, score: float) -> str:
    return f"{' '.join(gold)} | {' '.join(predicted)} | {score:.6f}"


def parse_prediction_line(line: str) -> tuple[list[str], list[str], float]:
    parts = line.rstrip("\n").split(" | ")
    if len(parts) != 3:
        raise ValueError(f"bad prediction dump line: {line[:60]!r}")
    gold = parts[0].split() if parts[0].strip() else []
    predicted = parts[1].split() if parts[1].strip() else []
    return gold, predicted, float(parts[2])


def f1_report_lines(report: F1Report) -> list[str]:
    return [
        "metric\tmicro\tmacro",
        f"precision\t{report.precision:.6f}\t{report.macro_precision:.6f}",
        f"recall\t{report.recall:.6f}\t{report.macro_recall:.6f}",
        f"f1\t{report.f1:.6f}\t{report.macro_f1:.6f}",
    ]


def bleu_report_lines(report: BleuReport) -> list[str]:
    precisions = "\t".join(f"{p:.6f}" for p in report.precisions)
    return [
        "bleu\tp1\tp2\tp3\tp4\tbrevity_penalty",
        f"{report.bleu:.4f}\t{precisions}\t{report.brevity_penalty:.6f}",
    ]


ABLATION_ORDER = ("full", "no_ast_nodes", "no_decoder", "no_token_split",
                  "no_tokens", "no_attention", "no_random")


def ablation_report(checkpoints: dict[str, object], examples) -> list[dict]:
    """Score each trained variant on a dataset and tabulate F1 deltas
    against the full model.

    `checkpoints` maps each variant name to a checkpoint path; all seven
    must be present. Rows come back in canonical order with precision,
    recall, f1 and delta_f1 fields.
    """
    from .decoding import greedy_decode
    from .training import restore

    missing = [v for v in ABLATION_ORDER if v not in checkpoints]
    if missing:
        raise MissingCheckpoint(f"no checkpoint for variant(s): {', '.join(missing)}")
    rows = []
    for variant in ABLATION_ORDER:
        params, _, _, _, _ = restore(checkpoints[variant])
        preds = [greedy_decode(ex, params, params.cfg) for ex in examples]
        report = corpus_f1([(p.subtokens, ex.target) for p, ex in zip(preds, examples)])
        rows.append({"variant": variant, "precision": report.precision,
                     "recall": report.recall, "f1": report.f1})
    base = rows[0]["f1"]
    for row in rows:
        row["delta_f1"] = row["f1"] - base
    return rows


def ablation_report_lines(rows: list[dict]) -> list[str]:
    out = ["variant\tprecision\trecall\tf1\tdelta_f1"]
    for row in rows:
        out.append(f"{row['variant']}\t{row['precision']:.4f}\t{row['recall']:.4f}"
                   f"\t{row['f1']:.4f}\t{row['delta_f1']:+.4f}")
    return out
