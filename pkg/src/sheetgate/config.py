"""One-file configuration bundles covering every analysis knob.

A bundle is a versioned JSON document with a section per concern:
questionnaire, gate thresholds, effort coefficients, inspection rule
settings, and setup-review severities.  The package ships its complete
defaults as such a document, so a bundle on its own is enough to
reproduce a review's parameters.  User bundles may omit sections (the
defaults fill in) but unknown keys are rejected, with the offending
path named.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Mapping, Optional, Tuple

from .catalogs import BUILTIN_FUNCTIONS
from .inspection import DEFAULT_SEVERITIES, RuleConfig
from .scoping import EffortCoefficients
from .setup_risk import CONFIGURABLE_SEVERITIES, SetupConfig
from .severity import Severity
from .stagegate import (
    GateConfig,
    ImpactBand,
    Questionnaire,
    default_questionnaire,
    questionnaire_from_doc,
)

CONFIG_VERSION = 1

_SECTIONS = ("version", "questionnaire", "gates", "effort_minutes", "rules", "setup")


class ConfigError(ValueError):
    """A bundle document that cannot be used, naming the bad field."""


@dataclass(frozen=True)
class ConfigBundle:
    """Everything tunable, resolved and validated."""

    questionnaire: Questionnaire
    gates: GateConfig
    effort: EffortCoefficients
    rules: RuleConfig
    setup: SetupConfig


def default_config() -> ConfigBundle:
    return ConfigBundle(
        questionnaire=default_questionnaire(),
        gates=GateConfig(),
        effort=EffortCoefficients(),
        rules=RuleConfig(),
        setup=SetupConfig(),
    )


# --- parsing ---------------------------------------------------------------

def _reject_unknown(obj: dict, allowed: Tuple[str, ...], where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _decimal(raw: object, where: str) -> Decimal:
    if isinstance(raw, float):
        raise ConfigError(f"{where}: write decimals as strings, not floats")
    try:
        return Decimal(str(raw))
    except InvalidOperation:
        raise ConfigError(f"{where}: {raw!r} is not a decimal") from None


def _severity(raw: object, where: str) -> Severity:
    try:
        return Severity(str(raw))
    except ValueError:
        options = ", ".join(s.value for s in Severity)
        raise ConfigError(f"{where}: {raw!r} is not one of {options}") from None


def _string_list(raw: object, where: str) -> List[str]:
    if not isinstance(raw, list) or any(not isinstance(x, str) for x in raw):
        raise ConfigError(f"{where}: expected a list of strings")
    return raw


def _gates_from(doc: dict) -> GateConfig:
    _reject_unknown(
        doc,
        ("impact_thresholds", "impact_gate_floor", "risk_threshold", "value_floor"),
        "gates",
    )
    kwargs: Dict[str, object] = {}
    if "impact_thresholds" in doc:
        raw = doc["impact_thresholds"]
        if not isinstance(raw, list) or len(raw) != 3:
            raise ConfigError("gates.impact_thresholds: expected three values")
        kwargs["impact_thresholds"] = tuple(
            _decimal(x, f"gates.impact_thresholds[{i}]") for i, x in enumerate(raw)
        )
    if "impact_gate_floor" in doc:
        try:
            kwargs["impact_gate_floor"] = ImpactBand(str(doc["impact_gate_floor"]))
        except ValueError:
            raise ConfigError(
                f"gates.impact_gate_floor: {doc['impact_gate_floor']!r} is not a band"
            ) from None
    if "risk_threshold" in doc:
        kwargs["risk_threshold"] = _decimal(doc["risk_threshold"], "gates.risk_threshold")
    if "value_floor" in doc:
        kwargs["value_floor"] = _decimal(doc["value_floor"], "gates.value_floor")
    try:
        return GateConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"gates: {exc}") from None


def _effort_from(doc: dict) -> EffortCoefficients:
    fields = ("unique", "original", "copy", "external_ref", "sheet")
    _reject_unknown(doc, fields, "effort_minutes")
    kwargs = {
        name: _decimal(doc[name], f"effort_minutes.{name}")
        for name in fields
        if name in doc
    }
    try:
        return EffortCoefficients(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"effort_minutes: {exc}") from None


def _rules_from(doc: dict) -> RuleConfig:
    fields = (
        "enabled", "severities", "constant_allowlist", "positional_functions",
        "high_risk_functions", "lookup_functions", "aggregation_functions",
        "output_ranges", "pattern_neighbors",
    )
    _reject_unknown(doc, fields, "rules")
    kwargs: Dict[str, object] = {}
    if "enabled" in doc:
        kwargs["enabled"] = frozenset(_string_list(doc["enabled"], "rules.enabled"))
    if "severities" in doc:
        raw = doc["severities"]
        if not isinstance(raw, dict):
            raise ConfigError("rules.severities: expected an object")
        merged = dict(DEFAULT_SEVERITIES)
        for rule, sev in raw.items():
            merged[rule] = _severity(sev, f"rules.severities.{rule}")
        kwargs["severities"] = merged
    if "constant_allowlist" in doc:
        kwargs["constant_allowlist"] = frozenset(
            _decimal(x, f"rules.constant_allowlist[{i}]")
            for i, x in enumerate(doc["constant_allowlist"])
        )
    for name in ("positional_functions", "high_risk_functions",
                 "lookup_functions", "aggregation_functions"):
        if name in doc:
            kwargs[name] = frozenset(
                fn.upper() for fn in _string_list(doc[name], f"rules.{name}")
            )
    if "output_ranges" in doc:
        kwargs["output_ranges"] = tuple(
            _string_list(doc["output_ranges"], "rules.output_ranges")
        )
    if "pattern_neighbors" in doc:
        raw = doc["pattern_neighbors"]
        if not isinstance(raw, int) or isinstance(raw, bool):
            raise ConfigError("rules.pattern_neighbors: expected an integer")
        kwargs["pattern_neighbors"] = raw
    try:
        return RuleConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"rules: {exc}") from None


def _setup_from(doc: dict) -> SetupConfig:
    _reject_unknown(doc, ("severities", "builtin_functions"), "setup")
    kwargs: Dict[str, object] = {}
    if "severities" in doc:
        raw = doc["severities"]
        if not isinstance(raw, dict):
            raise ConfigError("setup.severities: expected an object")
        merged = dict(CONFIGURABLE_SEVERITIES)
        for kind, sev in raw.items():
            merged[kind] = _severity(sev, f"setup.severities.{kind}")
        kwargs["severities"] = merged
    if "builtin_functions" in doc:
        kwargs["builtin_functions"] = frozenset(
            fn.upper()
            for fn in _string_list(doc["builtin_functions"], "setup.builtin_functions")
        )
    try:
        return SetupConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"setup: {exc}") from None


def config_from_doc(doc: object) -> ConfigBundle:
    """Build a bundle from its parsed JSON document form."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be an object")
    _reject_unknown(doc, _SECTIONS, "configuration")
    if doc.get("version") != CONFIG_VERSION:
        raise ConfigError(
            f"version: expected {CONFIG_VERSION}, got {doc.get('version')!r}"
        )
    if "questionnaire" in doc:
        try:
            questionnaire = questionnaire_from_doc(doc["questionnaire"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"questionnaire: {exc}") from None
    else:
        questionnaire = default_questionnaire()
    return ConfigBundle(
        questionnaire=questionnaire,
        gates=_gates_from(doc.get("gates", {})),
        effort=_effort_from(doc.get("effort_minutes", {})),
        rules=_rules_from(doc.get("rules", {})),
        setup=_setup_from(doc.get("setup", {})),
    )


def load_config(text: str) -> ConfigBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}") from None
    return config_from_doc(doc)


# --- rendering --------------------------------------------------------------

def _num(value: Decimal) -> str:
    return str(value)


def config_to_doc(bundle: ConfigBundle) -> dict:
    """The document form of a bundle, every setting explicit."""
    q = bundle.questionnaire
    questionnaire_doc = {
        "version": 1,
        "categories": [
            {
                "id": cat.id,
                "title": cat.title,
                "weight": _num(cat.weight),
                "questions": [
                    {"id": que.id, "text": que.text, "weight": _num(que.weight)}
                    for que in cat.questions
                ],
            }
            for cat in q.categories
        ],
    }
    rules = bundle.rules
    setup = bundle.setup
    return {
        "version": CONFIG_VERSION,
        "questionnaire": questionnaire_doc,
        "gates": {
            "impact_thresholds": [_num(t) for t in bundle.gates.impact_thresholds],
            "impact_gate_floor": bundle.gates.impact_gate_floor.value,
            "risk_threshold": _num(bundle.gates.risk_threshold),
            "value_floor": _num(bundle.gates.value_floor),
        },
        "effort_minutes": {
            "unique": _num(bundle.effort.unique),
            "original": _num(bundle.effort.original),
            "copy": _num(bundle.effort.copy),
            "external_ref": _num(bundle.effort.external_ref),
            "sheet": _num(bundle.effort.sheet),
        },
        "rules": {
            "enabled": sorted(rules.enabled),
            "severities": {
                rule: rules.severity_of(rule).value for rule in sorted(DEFAULT_SEVERITIES)
            },
            "constant_allowlist": sorted(
                (_num(c) for c in rules.constant_allowlist), key=Decimal
            ),
            "positional_functions": sorted(rules.positional_functions),
            "high_risk_functions": sorted(rules.high_risk_functions),
            "lookup_functions": sorted(rules.lookup_functions),
            "aggregation_functions": sorted(rules.aggregation_functions),
            "output_ranges": list(rules.output_ranges),
            "pattern_neighbors": rules.pattern_neighbors,
        },
        "setup": {
            "severities": {
                kind: setup.severity_of(kind).value
                for kind in sorted(CONFIGURABLE_SEVERITIES)
            },
            "builtin_functions": sorted(setup.builtin_functions),
        },
    }


def render_config(bundle: ConfigBundle) -> str:
    return json.dumps(config_to_doc(bundle), indent=2, sort_keys=True) + "\n"


@lru_cache(maxsize=1)
def shipped_default_text() -> str:
    """The packaged default bundle document, verbatim."""
    return resources.files("sheetgate.data").joinpath("default_config.json").read_text(
        encoding="utf-8"
    )
