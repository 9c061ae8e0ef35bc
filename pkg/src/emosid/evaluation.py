"""Scoring of identification runs: per-emotion/per-gender speaker accuracy
tables, column-normalized confusion matrices, a two-sample t statistic,
alpha sweeps and the false-input (worst case) evaluation.

CSV report schemas
------------------
performance  ``emotion,male,female,average``; one row per emotion, then a
             ``grand_average`` row with the value in the last column.
confusion    ``predicted,<class...>``; one row per predicted class, columns
             are the true classes and each sums to 100.
sweep        ``alpha,<emotion...>,overall,emotion_stage,gender_stage``.
ttest        ``field,value`` pairs.
summary      ``mean,sd,n``; a single data row (input to the t test).

All percentages are written with two decimals.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import GENDERS, UtteranceRecord
from .errors import EmptyEvaluation, ParseError, UndefinedColumn
from .pipeline import IdentificationResult, Label, identify, identify_three_stage, prime_cache
from .registry import ModelRegistry, Observation
from .sphmm import check_alpha

CRITICAL_T_05 = 1.645
ALPHA_GRID = tuple(round(0.1 * k, 1) for k in range(11))


@dataclass(frozen=True)
class LabeledResult:
    truth: Label
    result: IdentificationResult


def truth_of(record: UtteranceRecord) -> Label:
    return Label(record.gender, record.emotion, record.speaker_id)


def derange(emotions: Sequence[str], emotion: str) -> str:
    """Fixed cyclic derangement: emotion i maps to emotion i + 1 (mod m)."""
    return emotions[(list(emotions).index(emotion) + 1) % len(emotions)]


def opposite_gender(gender: str) -> str:
    return GENDERS[1 - GENDERS.index(gender)]


# -- running evaluations -----------------------------------------------


def _map(fn, items, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def evaluate(registry: ModelRegistry, records: Sequence[UtteranceRecord],
             observations: Sequence[Observation], approach: str = "three-stage", alpha: float = 0.5,
             normalize: bool = True, ablation: str | None = None, overrides: str = "none",
             threads: int = 1) -> list[LabeledResult]:
    """Identify every utterance and pair the result with its ground truth.

    ``overrides`` applies to the three-stage cascade only: ``"oracle"`` feeds
    the true gender and emotion forward, ``"worst"`` feeds the opposite
    gender and the deranged emotion.
    """
    alpha = check_alpha(alpha)
    if len(records) != len(observations):
        raise ValueError("records and observations must align")
    if overrides not in ("none", "oracle", "worst"):
        raise ValueError(f"unknown override mode {overrides!r}")
    if overrides != "none" and (approach != "three-stage" or ablation is not None):
        raise ValueError("overrides apply to the three-stage cascade only")
    prime_cache(registry, observations)

    def one(pair) -> LabeledResult:
        rec, obs = pair
        truth = truth_of(rec)
        if overrides == "oracle":
            res = identify_three_stage(registry, obs, alpha, normalize, truth.gender, truth.emotion)
        elif overrides == "worst":
            res = identify_three_stage(registry, obs, alpha, normalize, opposite_gender(truth.gender),
                                       derange(registry.emotions, truth.emotion))
        else:
            res = identify(registry, obs, approach, alpha, normalize, ablation)
        return LabeledResult(truth, res)

    return _map(one, list(zip(records, observations)), threads)


# -- performance tables ------------------------------------------------


@dataclass(frozen=True)
class PerformanceRow:
    emotion: str
    male: float
    female: float

    @property
    def average(self) -> float:
        return (self.male + self.female) / 2.0


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    n: int


def summary_statistics(values: Sequence[float], n: int | None = None) -> Summary:
    """Mean and sample standard deviation (n - 1 denominator)."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        raise EmptyEvaluation("need at least two values for a standard deviation")
    return Summary(float(x.mean()), float(x.std(ddof=1)), int(n if n is not None else x.size))


@dataclass(frozen=True)
class PerformanceTable:
    rows: tuple[PerformanceRow, ...]
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if not self.rows:
            raise EmptyEvaluation("performance table has no rows")
        for r in self.rows:
            if not (0.0 <= r.male <= 100.0 and 0.0 <= r.female <= 100.0):
                raise ValueError(f"cell outside [0, 100] in row {r.emotion}")

    @property
    def emotions(self) -> tuple[str, ...]:
        return tuple(r.emotion for r in self.rows)

    @property
    def row_averages(self) -> np.ndarray:
        return np.array([r.average for r in self.rows])

    @property
    def cells(self) -> np.ndarray:
        return np.array([(r.male, r.female) for r in self.rows])

    @property
    def grand_average(self) -> float:
        return float(np.mean(self.row_averages))

    def summary(self) -> Summary:
        """Mean and SD over the per-emotion row averages; n counts the cells."""
        return summary_statistics(self.row_averages, n=2 * len(self.rows))

    @classmethod
    def from_cells(cls, emotions: Sequence[str], cells, tag: str = "") -> "PerformanceTable":
        cells = np.asarray(cells, dtype=np.float64).reshape(len(emotions), 2)
        return cls(tuple(PerformanceRow(e, float(m), float(f)) for e, (m, f) in zip(emotions, cells)), tag)


def _speaker_correct(item: LabeledResult, match: str) -> bool:
    p, t = item.result.label, item.truth
    if match == "index":
        return p.speaker_id == t.speaker_id
    return p.speaker == t.speaker


def performance_table(results: Sequence[LabeledResult], emotions: Sequence[str] | None = None,
                      match: str = "speaker", tag: str = "") -> PerformanceTable:
    """Speaker accuracy (%) per (emotion, gender) cell of the true labels.

    ``match="speaker"`` requires gender and speaker index to agree;
    ``match="index"`` compares the speaker index within the conditioned
    gender, which is what a forced-gender evaluation can be scored on.
    """
    if not results:
        raise EmptyEvaluation("no results to tabulate")
    if match not in ("speaker", "index"):
        raise ValueError(f"unknown match rule {match!r}")
    if emotions is None:
        seen = []
        for item in results:
            if item.truth.emotion not in seen:
                seen.append(item.truth.emotion)
        emotions = seen
    hits = {(e, g): [0, 0] for e in emotions for g in GENDERS}
    for item in results:
        cell = hits[(item.truth.emotion, item.truth.gender)]
        cell[0] += _speaker_correct(item, match)
        cell[1] += 1
    rows = []
    for e in emotions:
        pct = []
        for g in GENDERS:
            ok, total = hits[(e, g)]
            if total == 0:
                raise EmptyEvaluation(f"no test utterances for emotion={e} gender={g}")
            pct.append(100.0 * ok / total)
        rows.append(PerformanceRow(e, *pct))
    return PerformanceTable(tuple(rows), tag)


def stage_accuracy(results: Sequence[LabeledResult], stage: str) -> float:
    """Percentage of utterances whose gender, emotion or speaker is right."""
    if not results:
        raise EmptyEvaluation("no results")
    pick = {"gender": lambda l: l.gender, "emotion": lambda l: l.emotion, "speaker": lambda l: l.speaker}[stage]
    return 100.0 * float(np.mean([pick(r.result.label) == pick(r.truth) for r in results]))


# -- confusion matrices ------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    """cells[i, j]: percentage of true class j identified as class i."""

    classes: tuple[str, ...]
    cells: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.shape != (len(self.classes), len(self.classes)):
            raise ValueError("confusion cells must be square over the classes")
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "cells", cells)

    def column(self, name: str) -> np.ndarray:
        return self.cells[:, self.classes.index(name)]

    def column_sums(self) -> np.ndarray:
        return self.cells.sum(axis=0)

    def rounded(self) -> np.ndarray:
        return np.rint(self.cells).astype(int)

    @classmethod
    def from_columns(cls, classes: Sequence[str], columns: Sequence[Sequence[float]]) -> "ConfusionMatrix":
        return cls(tuple(classes), np.asarray(columns, dtype=np.float64).T)


def confusion_matrix(results: Sequence[LabeledResult], stage: str, classes: Sequence[str] | None = None,
                     gender: str | None = None) -> ConfusionMatrix:
    """Column-normalized confusion of the gender or emotion decision.

    ``gender`` restricts the matrix to utterances of one true gender.
    """
    if stage not in ("gender", "emotion"):
        raise ValueError("stage must be 'gender' or 'emotion'")
    items = [r for r in results if gender is None or r.truth.gender == gender]
    if classes is None:
        classes = GENDERS if stage == "gender" else tuple(dict.fromkeys(r.truth.emotion for r in items))
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for r in items:
        true = getattr(r.truth, stage)
        pred = getattr(r.result.label, stage)
        if pred in index:
            counts[index[pred], index[true]] += 1
    totals = np.array([sum(getattr(r.truth, stage) == c for r in items) for c in classes])
    empty = [c for c, n in zip(classes, totals) if n == 0]
    if empty:
        raise UndefinedColumn(f"no test utterances of true class {empty}")
    return ConfusionMatrix(classes, 100.0 * counts / totals[None, :], counts)


# -- significance ------------------------------------------------------


@dataclass(frozen=True)
class TTestResult:
    t_value: float
    method: str
    inputs: tuple[Summary, Summary]
    dof: float
    critical_value_0_05: float = CRITICAL_T_05
    reference_t: float | None = None

    @property
    def significant(self) -> bool:
        return self.t_value > self.critical_value_0_05

    @property
    def note(self) -> str:
        if self.reference_t is None:
            return ""
        a, b = self.inputs
        values = {m: students_t(a.mean, a.sd, a.n, b.mean, b.sd, b.n, m).t_value for m in ("welch", "pooled")}
        recovered = [m for m, v in values.items() if abs(v - self.reference_t) < 5e-4]
        verdict = (f"matched by the {recovered[0]} formula" if recovered else
                   "not recoverable from these summary statistics by either formula")
        return (f"reference t = {self.reference_t:g} vs welch {values['welch']:.3f}, "
                f"pooled {values['pooled']:.3f}; {verdict}")


def students_t(mean1: float, sd1: float, n1: int, mean2: float, sd2: float, n2: int,
               method: str = "welch", reference_t: float | None = None) -> TTestResult:
    """Two-sample t for sample 2 over sample 1 from summary statistics."""
    if n1 < 2 or n2 < 2:
        raise ValueError("each sample needs n >= 2")
    if sd1 < 0 or sd2 < 0:
        raise ValueError("standard deviations must be non-negative")
    diff = mean2 - mean1
    v1, v2 = sd1 * sd1 / n1, sd2 * sd2 / n2
    if method == "welch":
        se2 = v1 + v2
        dof = se2 ** 2 / (v1 ** 2 / (n1 - 1) + v2 ** 2 / (n2 - 1)) if se2 > 0 else float(n1 + n2 - 2)
    elif method == "pooled":
        sp2 = ((n1 - 1) * sd1 ** 2 + (n2 - 1) * sd2 ** 2) / (n1 + n2 - 2)
        se2 = sp2 * (1.0 / n1 + 1.0 / n2)
        dof = float(n1 + n2 - 2)
    else:
        raise ValueError(f"method must be 'welch' or 'pooled', got {method!r}")
    if se2 == 0.0:
        t = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        t = diff / math.sqrt(se2)
    return TTestResult(float(t), method, (Summary(mean1, sd1, n1), Summary(mean2, sd2, n2)), float(dof),
                       reference_t=reference_t)


# -- alpha sweeps and conditioned runs ---------------------------------


@dataclass(frozen=True)
class SweepPoint:
    alpha: float
    per_emotion: dict
    overall: float
    emotion_stage: float
    gender_stage: float


@dataclass(frozen=True)
class AlphaSweep:
    points: tuple[SweepPoint, ...]
    approach: str = "three-stage"

    def __post_init__(self):
        alphas = [p.alpha for p in self.points]
        if not alphas or any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ValueError("sweep alphas must be non-empty and strictly increasing")

    @property
    def alphas(self) -> list[float]:
        return [p.alpha for p in self.points]

    def at(self, alpha: float) -> SweepPoint:
        for p in self.points:
            if math.isclose(p.alpha, alpha):
                return p
        raise KeyError(alpha)


def alpha_sweep(registry: ModelRegistry, records: Sequence[UtteranceRecord],
                observations: Sequence[Observation], grid: Sequence[float] = ALPHA_GRID,
                approach: str = "three-stage", normalize: bool = True, threads: int = 1) -> AlphaSweep:
    """Re-score the split at each alpha; sub-scores are computed once and reused."""
    points = []
    for alpha in grid:
        results = evaluate(registry, records, observations, approach, alpha, normalize, threads=threads)
        table = performance_table(results, registry.emotions)
        points.append(SweepPoint(float(alpha), {r.emotion: r.average for r in table.rows}, table.grand_average,
                                 stage_accuracy(results, "emotion"), stage_accuracy(results, "gender")))
    return AlphaSweep(tuple(points), approach)


def oracle_eval(registry: ModelRegistry, records, observations, alpha: float = 0.5,
                normalize: bool = True, threads: int = 1) -> PerformanceTable:
    """Speaker accuracy with the true gender and emotion fed to the speaker stage."""
    results = evaluate(registry, records, observations, alpha=alpha, normalize=normalize,
                       overrides="oracle", threads=threads)
    return performance_table(results, registry.emotions, match="index", tag="oracle")


def worst_case_eval(registry: ModelRegistry, records, observations, alpha: float = 0.5,
                    normalize: bool = True, threads: int = 1) -> PerformanceTable:
    """Speaker accuracy when the later stages receive a false gender and emotion."""
    results = evaluate(registry, records, observations, alpha=alpha, normalize=normalize,
                       overrides="worst", threads=threads)
    return performance_table(results, registry.emotions, match="index", tag="worst_case")


# -- reports -----------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def report_name(kind: str, tag: str, alpha: float | None = None) -> str:
    suffix = "" if alpha is None else f"_alpha{alpha:.2f}"
    return f"{kind}_{tag}{suffix}.csv"


def performance_csv(table: PerformanceTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["emotion", "male", "female", "average"])
    for r in table.rows:
        w.writerow([r.emotion, _fmt(r.male), _fmt(r.female), _fmt(r.average)])
    w.writerow(["grand_average", "", "", _fmt(table.grand_average)])
    return buf.getvalue()


def performance_text(table: PerformanceTable, title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'emotion':<12}{'male %':>10}{'female %':>10}{'average %':>11}")
    for r in table.rows:
        lines.append(f"{r.emotion:<12}{_fmt(r.male):>10}{_fmt(r.female):>10}{_fmt(r.average):>11}")
    s = table.summary()
    lines.append(f"grand average {_fmt(table.grand_average)}  (sd over rows {_fmt(s.sd)})")
    return "\n".join(lines)


def confusion_csv(cm: ConfusionMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["predicted", *cm.classes])
    for name, row in zip(cm.classes, cm.cells):
        w.writerow([name, *map(_fmt, row)])
    return buf.getvalue()


def confusion_text(cm: ConfusionMatrix, title: str = "") -> str:
    width = max(10, *(len(c) + 2 for c in cm.classes))
    lines = [title] if title else []
    lines.append("predicted \\ true".ljust(18) + "".join(c.rjust(width) for c in cm.classes))
    for name, row in zip(cm.classes, cm.cells):
        lines.append(name.ljust(18) + "".join(_fmt(x).rjust(width) for x in row))
    return "\n".join(lines)


def sweep_csv(sweep: AlphaSweep) -> str:
    emotions = list(sweep.points[0].per_emotion)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", *emotions, "overall", "emotion_stage", "gender_stage"])
    for p in sweep.points:
        w.writerow([f"{p.alpha:.1f}", *(_fmt(p.per_emotion[e]) for e in emotions), _fmt(p.overall),
                    _fmt(p.emotion_stage), _fmt(p.gender_stage)])
    return buf.getvalue()


def sweep_text(sweep: AlphaSweep) -> str:
    lines = [f"{'alpha':>6}{'speaker %':>11}{'emotion %':>11}{'gender %':>10}"]
    for p in sweep.points:
        lines.append(f"{p.alpha:>6.1f}{_fmt(p.overall):>11}{_fmt(p.emotion_stage):>11}{_fmt(p.gender_stage):>10}")
    return "\n".join(lines)


def ttest_csv(res: TTestResult) -> str:
    a, b = res.inputs
    rows = [("method", res.method), ("t_value", f"{res.t_value:.4f}"), ("dof", f"{res.dof:.2f}"),
            ("critical_value_0_05", f"{res.critical_value_0_05:.3f}"),
            ("significant_0_05", str(res.significant).lower()),
            ("mean1", _fmt(a.mean)), ("sd1", _fmt(a.sd)), ("n1", a.n),
            ("mean2", _fmt(b.mean)), ("sd2", _fmt(b.sd)), ("n2", b.n)]
    if res.reference_t is not None:
        rows += [("reference_t", f"{res.reference_t:g}"), ("note", res.note)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "value"])
    w.writerows(rows)
    return buf.getvalue()


def ttest_text(res: TTestResult) -> str:
    a, b = res.inputs
    lines = [f"{res.method} t = {res.t_value:.3f} (dof {res.dof:.1f}); critical t_0.05 = "
             f"{res.critical_value_0_05:.3f}; {'significant' if res.significant else 'not significant'}",
             f"sample 1: mean {_fmt(a.mean)}, sd {_fmt(a.sd)}, n {a.n}",
             f"sample 2: mean {_fmt(b.mean)}, sd {_fmt(b.sd)}, n {b.n}"]
    if res.note:
        lines.append(res.note)
    return "\n".join(lines)


def read_performance_csv(text: str, tag: str = "") -> PerformanceTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["emotion", "male", "female", "average"]:
        raise ParseError("not a performance report")
    try:
        body = [PerformanceRow(r[0], float(r[1]), float(r[2])) for r in rows[1:] if r and r[0] != "grand_average"]
    except (ValueError, IndexError) as exc:
        raise ParseError(f"bad performance row: {exc}") from exc
    return PerformanceTable(tuple(body), tag)


def summary_csv(s: Summary) -> str:
    return f"mean,sd,n\n{s.mean!r},{s.sd!r},{s.n}\n"


def read_summary(path: str | Path) -> Summary:
    """A t-test input: either a summary file or a performance report."""
    text = Path(path).read_text(encoding="utf-8")
    first = text.splitlines()[0].strip() if text.strip() else ""
    if first == "mean,sd,n":
        rows = list(csv.reader(io.StringIO(text)))
        try:
            mean, sd, n = rows[1]
            return Summary(float(mean), float(sd), int(n))
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: bad summary row") from exc
    return read_performance_csv(text).summary()
