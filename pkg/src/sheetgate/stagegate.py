"""Questionnaire scoring and the three stop/go gates.

A review runs in stages: first the money at stake is banded, then a
control questionnaire turns judgments into a likelihood score, and the
two combine into a risk score that decides whether detailed testing is
worth its estimated cost.  A Stop verdict at any stage ends the run, so
a profile never carries decisions past its first Stop.

All arithmetic is exact (fractions); scores are quantized to six
decimal places only at the reporting boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Mapping, Optional, Tuple

QUESTIONNAIRE_VERSION = 1
ANSWERS_VERSION = 1
IMPACT_VERSION = 1

WORST_SCORE = 4

_SIX_PLACES = Decimal("0.000001")


def quantize_score(value: Fraction) -> Decimal:
    """A score fraction as a six-place decimal (banker's rounding)."""
    return (Decimal(value.numerator) / Decimal(value.denominator)).quantize(
        _SIX_PLACES
    )


# --- questionnaire -----------------------------------------------------

@dataclass(frozen=True, slots=True)
class Question:
    id: str
    text: str
    weight: Decimal = Decimal(1)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("question id must be non-empty")
        if self.weight <= 0:
            raise ValueError(f"question {self.id}: weight must be positive")


@dataclass(frozen=True, slots=True)
class Category:
    id: str
    title: str
    questions: Tuple[Question, ...]
    weight: Decimal = Decimal(1)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("category id must be non-empty")
        if self.weight <= 0:
            raise ValueError(f"category {self.id}: weight must be positive")
        if not self.questions:
            raise ValueError(f"category {self.id}: needs at least one question")


@dataclass(frozen=True, slots=True)
class Questionnaire:
    categories: Tuple[Category, ...]

    def __post_init__(self) -> None:
        seen = set()
        for cat in self.categories:
            if cat.id in seen:
                raise ValueError(f"duplicate category id {cat.id!r}")
            seen.add(cat.id)
        qseen = set()
        for cat in self.categories:
            for q in cat.questions:
                if q.id in qseen:
                    raise ValueError(f"duplicate question id {q.id!r}")
                qseen.add(q.id)

    def question_ids(self) -> Tuple[str, ...]:
        return tuple(q.id for cat in self.categories for q in cat.questions)


@dataclass(frozen=True, slots=True)
class Answer:
    score: int
    note: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.score <= WORST_SCORE:
            raise ValueError(f"answer score must be 0..{WORST_SCORE}, got {self.score}")


@dataclass(frozen=True)
class AnswerSet:
    """Graded answers by question id; unanswered questions score worst."""

    answers: Mapping[str, Answer] = field(default_factory=dict)

    def score_for(self, question_id: str) -> int:
        answer = self.answers.get(question_id)
        return answer.score if answer is not None else WORST_SCORE


def score_likelihood(questionnaire: Questionnaire, answers: AnswerSet) -> Fraction:
    """Weighted likelihood of error, 0 (well controlled) to 1 (uncontrolled).

    Each category contributes its weighted mean answer; the category
    means combine by category weight and the result is normalized by the
    worst possible score.  Raises on answers to unknown question ids.
    """
    known = set(questionnaire.question_ids())
    unknown = sorted(set(answers.answers) - known)
    if unknown:
        raise ValueError(f"answers to unknown question id(s): {', '.join(unknown)}")

    total = Fraction(0)
    weight_sum = Fraction(0)
    for cat in questionnaire.categories:
        q_total = Fraction(0)
        q_weights = Fraction(0)
        for q in cat.questions:
            w = Fraction(q.weight)
            q_total += w * answers.score_for(q.id)
            q_weights += w
        cat_weight = Fraction(cat.weight)
        total += cat_weight * (q_total / q_weights)
        weight_sum += cat_weight
    return total / (WORST_SCORE * weight_sum)


# --- impact ------------------------------------------------------------

class ImpactBand(Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    CRITICAL = "Critical"

    @property
    def rank(self) -> int:
        return _BAND_RANK[self]


_BAND_RANK = {
    ImpactBand.LOW: 1,
    ImpactBand.MEDIUM: 2,
    ImpactBand.HIGH: 3,
    ImpactBand.CRITICAL: 4,
}
_BAND_BY_RANK = {rank: band for band, rank in _BAND_RANK.items()}


class ConsequenceBand(Enum):
    NONE = "None"
    MINOR = "Minor"
    MAJOR = "Major"


@dataclass(frozen=True, slots=True)
class ImpactAssessment:
    amount_at_risk: Decimal
    uses_per_period: int = 1
    regulatory: ConsequenceBand = ConsequenceBand.NONE
    reputational: ConsequenceBand = ConsequenceBand.NONE

    def __post_init__(self) -> None:
        if self.amount_at_risk < 0:
            raise ValueError("amount_at_risk must be non-negative")
        if self.uses_per_period < 1:
            raise ValueError("uses_per_period must be at least 1")

    @property
    def effective_amount(self) -> Decimal:
        """Amount at risk scaled by how often the workbook is reused."""
        return self.amount_at_risk * self.uses_per_period


# --- configuration -----------------------------------------------------

@dataclass(frozen=True)
class GateConfig:
    """Every judgment threshold in one place.

    ``impact_thresholds`` are the lower bounds (inclusive) of Medium,
    High, and Critical; below the first is Low.  ``risk_threshold``
    gates both the likelihood and testing stages; ``value_floor`` is the
    minimum currency value per estimated review minute that makes
    detailed testing worthwhile.
    """

    impact_thresholds: Tuple[Decimal, Decimal, Decimal] = (
        Decimal(10_000),
        Decimal(100_000),
        Decimal(1_000_000),
    )
    impact_gate_floor: ImpactBand = ImpactBand.MEDIUM
    risk_threshold: Decimal = Decimal("0.25")
    value_floor: Decimal = Decimal(50)

    def __post_init__(self) -> None:
        lo, mid, hi = self.impact_thresholds
        if not (0 < lo < mid < hi):
            raise ValueError("impact thresholds must be positive and ascending")
        if not 0 <= self.risk_threshold <= 1:
            raise ValueError("risk_threshold must be within [0, 1]")
        if self.value_floor < 0:
            raise ValueError("value_floor must be non-negative")


DEFAULT_GATE_CONFIG = GateConfig()


def score_impact(
    impact: ImpactAssessment, config: GateConfig = DEFAULT_GATE_CONFIG
) -> ImpactBand:
    """Band the effective amount, then raise one step for Major consequences."""
    amount = impact.effective_amount
    lo, mid, hi = config.impact_thresholds
    if amount >= hi:
        band = ImpactBand.CRITICAL
    elif amount >= mid:
        band = ImpactBand.HIGH
    elif amount >= lo:
        band = ImpactBand.MEDIUM
    else:
        band = ImpactBand.LOW
    if ConsequenceBand.MAJOR in (impact.regulatory, impact.reputational):
        band = _BAND_BY_RANK[min(band.rank + 1, ImpactBand.CRITICAL.rank)]
    return band


# --- decisions ----------------------------------------------------------

class GateStage(Enum):
    IMPACT = "ImpactGate"
    LIKELIHOOD = "LikelihoodGate"
    TESTING = "TestingGate"


class Verdict(Enum):
    GO = "Go"
    STOP = "Stop"


@dataclass(frozen=True, slots=True)
class GateScores:
    impact_band: ImpactBand
    likelihood: Optional[Decimal] = None
    risk_score: Optional[Decimal] = None
    effort_minutes: Optional[Decimal] = None


@dataclass(frozen=True, slots=True)
class GateDecision:
    stage: GateStage
    verdict: Verdict
    scores: GateScores
    rationale: str


@dataclass(frozen=True, slots=True)
class GateProfile:
    """The decisions actually taken; ends at the first Stop."""

    decisions: Tuple[GateDecision, ...]

    def __post_init__(self) -> None:
        for decision in self.decisions[:-1]:
            if decision.verdict is Verdict.STOP:
                raise ValueError("a Stop decision must be the last in a profile")

    @property
    def verdict(self) -> Verdict:
        return self.decisions[-1].verdict

    def decision(self, stage: GateStage) -> Optional[GateDecision]:
        for d in self.decisions:
            if d.stage is stage:
                return d
        return None


def gate_impact(
    band: ImpactBand, config: GateConfig = DEFAULT_GATE_CONFIG
) -> GateDecision:
    """Stop when the banded amount does not justify any further work."""
    go = band.rank >= config.impact_gate_floor.rank
    rationale = (
        f"impact band {band.value} "
        f"{'meets' if go else 'is below'} the {config.impact_gate_floor.value} floor"
    )
    return GateDecision(
        GateStage.IMPACT,
        Verdict.GO if go else Verdict.STOP,
        GateScores(impact_band=band),
        rationale,
    )


def risk_score(band: ImpactBand, likelihood: Fraction) -> Fraction:
    """Likelihood scaled by the impact band, normalized to [0, 1]."""
    return likelihood * Fraction(band.rank, ImpactBand.CRITICAL.rank)


def gate_likelihood(
    band: ImpactBand,
    likelihood: Fraction,
    config: GateConfig = DEFAULT_GATE_CONFIG,
) -> GateDecision:
    """Stop when combined likelihood and impact fall below the risk threshold."""
    risk = risk_score(band, likelihood)
    threshold = Fraction(config.risk_threshold)
    go = risk >= threshold
    risk6 = quantize_score(risk)
    rationale = (
        f"risk score {risk6} "
        f"{'meets' if go else 'is below'} the threshold {config.risk_threshold}"
    )
    return GateDecision(
        GateStage.LIKELIHOOD,
        Verdict.GO if go else Verdict.STOP,
        GateScores(
            impact_band=band,
            likelihood=quantize_score(likelihood),
            risk_score=risk6,
        ),
        rationale,
    )


def gate_testing(
    band: ImpactBand,
    likelihood: Fraction,
    amount_effective: Decimal,
    effort_minutes: Decimal,
    config: GateConfig = DEFAULT_GATE_CONFIG,
) -> GateDecision:
    """Stop when detailed testing is not worth its estimated cost.

    Goes ahead only when the risk score still clears the threshold and
    each estimated review minute covers at least ``config.value_floor``
    of the amount at stake (an effort of zero clamps to one minute).
    """
    risk = risk_score(band, likelihood)
    threshold = Fraction(config.risk_threshold)
    denominator = max(Fraction(effort_minutes), Fraction(1))
    ratio = Fraction(amount_effective) / denominator
    floor = Fraction(config.value_floor)
    risk_ok = risk >= threshold
    ratio_ok = ratio >= floor
    go = risk_ok and ratio_ok
    risk6 = quantize_score(risk)
    ratio6 = quantize_score(ratio)
    rationale = (
        f"risk score {risk6} {'meets' if risk_ok else 'is below'} the threshold "
        f"{config.risk_threshold}; value per review minute {ratio6} "
        f"{'meets' if ratio_ok else 'is below'} the floor {config.value_floor}"
    )
    return GateDecision(
        GateStage.TESTING,
        Verdict.GO if go else Verdict.STOP,
        GateScores(
            impact_band=band,
            likelihood=quantize_score(likelihood),
            risk_score=risk6,
            effort_minutes=effort_minutes,
        ),
        rationale,
    )


def run_gates(
    questionnaire: Questionnaire,
    answers: AnswerSet,
    impact: ImpactAssessment,
    effort_minutes: Decimal,
    config: GateConfig = DEFAULT_GATE_CONFIG,
) -> GateProfile:
    """Run the stages in order, stopping at the first Stop verdict."""
    band = score_impact(impact, config)
    first = gate_impact(band, config)
    if first.verdict is Verdict.STOP:
        return GateProfile((first,))
    likelihood = score_likelihood(questionnaire, answers)
    second = gate_likelihood(band, likelihood, config)
    if second.verdict is Verdict.STOP:
        return GateProfile((first, second))
    third = gate_testing(
        band, likelihood, impact.effective_amount, effort_minutes, config
    )
    return GateProfile((first, second, third))


# --- shipped questionnaire and sidecar documents -------------------------

def questionnaire_from_doc(doc: dict) -> Questionnaire:
    """Build a questionnaire from its JSON document form."""
    if not isinstance(doc, dict):
        raise ValueError("questionnaire document must be an object")
    if doc.get("version") != QUESTIONNAIRE_VERSION:
        raise ValueError(
            f"questionnaire version must be {QUESTIONNAIRE_VERSION}, "
            f"got {doc.get('version')!r}"
        )
    cats = doc.get("categories")
    if not isinstance(cats, list) or not cats:
        raise ValueError("questionnaire needs a non-empty categories list")
    categories = []
    for cat in cats:
        questions = tuple(
            Question(q["id"], q["text"], _decimal_field(q, "weight"))
            for q in cat.get("questions", ())
        )
        categories.append(
            Category(cat["id"], cat["title"], questions, _decimal_field(cat, "weight"))
        )
    return Questionnaire(tuple(categories))


def _decimal_field(obj: dict, key: str) -> Decimal:
    raw = obj.get(key, "1")
    try:
        return Decimal(str(raw))
    except InvalidOperation as exc:
        raise ValueError(f"bad decimal for {key!r}: {raw!r}") from exc


@lru_cache(maxsize=1)
def default_questionnaire() -> Questionnaire:
    """The questionnaire shipped with the package."""
    text = resources.files("sheetgate.data").joinpath("questionnaire.json").read_text(
        encoding="utf-8"
    )
    return questionnaire_from_doc(json.loads(text))


def parse_answer_set(doc: dict) -> AnswerSet:
    """Parse the sidecar answers document: versioned map of id → score/note."""
    if not isinstance(doc, dict):
        raise ValueError("answers document must be an object")
    if doc.get("version") != ANSWERS_VERSION:
        raise ValueError(
            f"answers version must be {ANSWERS_VERSION}, got {doc.get('version')!r}"
        )
    raw = doc.get("answers", {})
    if not isinstance(raw, dict):
        raise ValueError("answers must be an object keyed by question id")
    answers = {}
    for qid, entry in raw.items():
        if isinstance(entry, int):
            answers[qid] = Answer(entry)
        elif isinstance(entry, dict):
            score = entry.get("score")
            if not isinstance(score, int):
                raise ValueError(f"answer {qid}: score must be an integer")
            answers[qid] = Answer(score, str(entry.get("note", "")))
        else:
            raise ValueError(f"answer {qid}: must be a score or an object")
    return AnswerSet(answers)


def parse_impact(doc: dict) -> ImpactAssessment:
    """Parse the sidecar impact document."""
    if not isinstance(doc, dict):
        raise ValueError("impact document must be an object")
    if doc.get("version") != IMPACT_VERSION:
        raise ValueError(
            f"impact version must be {IMPACT_VERSION}, got {doc.get('version')!r}"
        )
    if "amount_at_risk" not in doc:
        raise ValueError("impact document needs amount_at_risk")
    try:
        amount = Decimal(str(doc["amount_at_risk"]))
    except InvalidOperation as exc:
        raise ValueError(f"bad amount_at_risk: {doc['amount_at_risk']!r}") from exc
    uses = doc.get("uses_per_period", 1)
    if not isinstance(uses, int):
        raise ValueError("uses_per_period must be an integer")
    try:
        regulatory = ConsequenceBand(doc.get("regulatory", "None"))
        reputational = ConsequenceBand(doc.get("reputational", "None"))
    except ValueError as exc:
        raise ValueError(f"bad consequence band: {exc}") from exc
    return ImpactAssessment(amount, uses, regulatory, reputational)
