"""Per-feature perturbation model and attacker class selection.

A numerical feature's perturbation is a pair (eps_left, eps_right): a
sample with value o can be moved anywhere in [o - eps_left, o + eps_right].
Unbounded sides use math.inf and are resolved against the feature's global
range when an interval is requested.  A categorical feature either cannot
be perturbed or can be switched to any category in a fixed reachable set.

Token grammar for numerical features:
    ""          no perturbation, (0, 0)
    ">"         increase only, (0, inf)
    "<"         decrease only, (inf, 0)
    "<>"        anything, (inf, inf)
    "0.1"       symmetric, (0.1, 0.1)
    "(a, b)"    asymmetric, finite a, b >= 0

Token grammar for categorical features:
    ""          not perturbable
    "<>"        any category reachable
    "{1,4}"     reachable category ids
"""

import dataclasses
import hashlib
import json
import math
from typing import Optional, Union

UNBOUNDED = math.inf


class ThreatSpecError(ValueError):
    """Raised for malformed perturbation specs."""


@dataclasses.dataclass(frozen=True)
class NumericPerturbation:
    eps_left: float = 0.0
    eps_right: float = 0.0

    def is_trivial(self) -> bool:
        return self.eps_left == 0.0 and self.eps_right == 0.0


@dataclasses.dataclass(frozen=True)
class CategoricalPerturbation:
    # None means every category is reachable
    reachable: Optional[frozenset] = frozenset()

    def is_trivial(self) -> bool:
        return self.reachable is not None and len(self.reachable) == 0


FeaturePerturbation = Union[NumericPerturbation, CategoricalPerturbation]


@dataclasses.dataclass(frozen=True)
class ThreatModel:
    perturbations: tuple
    attacked_classes: frozenset

    @property
    def n_features(self) -> int:
        return len(self.perturbations)

    def is_null(self) -> bool:
        if not self.attacked_classes:
            return True
        return all(p.is_trivial() for p in self.perturbations)


def _parse_number(text: str, index: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ThreatSpecError(
            "feature %d: unknown perturbation token %r" % (index, text)
        ) from None
    if math.isnan(value) or math.isinf(value):
        raise ThreatSpecError("feature %d: perturbation must be finite" % index)
    if value < 0:
        raise ThreatSpecError("feature %d: perturbation must be non-negative" % index)
    return value


def parse_numeric_token(token: str, index: int = 0) -> NumericPerturbation:
    token = token.strip()
    if token == "":
        return NumericPerturbation(0.0, 0.0)
    if token == ">":
        return NumericPerturbation(0.0, UNBOUNDED)
    if token == "<":
        return NumericPerturbation(UNBOUNDED, 0.0)
    if token == "<>":
        return NumericPerturbation(UNBOUNDED, UNBOUNDED)
    if token.startswith("(") and token.endswith(")"):
        parts = token[1:-1].split(",")
        if len(parts) != 2:
            raise ThreatSpecError(
                "feature %d: expected two values in %r" % (index, token)
            )
        left = _parse_number(parts[0].strip(), index)
        right = _parse_number(parts[1].strip(), index)
        return NumericPerturbation(left, right)
    eps = _parse_number(token, index)
    return NumericPerturbation(eps, eps)


def parse_categorical_token(token: str, index: int = 0) -> CategoricalPerturbation:
    token = token.strip()
    if token == "":
        return CategoricalPerturbation(frozenset())
    if token == "<>":
        return CategoricalPerturbation(None)
    if token.startswith("{") and token.endswith("}"):
        body = token[1:-1].strip()
        if not body:
            raise ThreatSpecError("feature %d: empty category set" % index)
        try:
            ids = frozenset(int(part.strip()) for part in body.split(","))
        except ValueError:
            raise ThreatSpecError(
                "feature %d: category ids must be integers in %r" % (index, token)
            ) from None
        if any(i < 0 for i in ids):
            raise ThreatSpecError("feature %d: category ids must be >= 0" % index)
        return CategoricalPerturbation(ids)
    raise ThreatSpecError("feature %d: unknown perturbation token %r" % (index, token))


def parse_threat_spec(tokens, categorical=(), attacked_classes=(0, 1),
                      n_features: Optional[int] = None) -> ThreatModel:
    """Parse one token per feature into a normalized ThreatModel.

    categorical lists the indices parsed with the categorical grammar.
    """
    tokens = list(tokens)
    if n_features is not None and len(tokens) != n_features:
        raise ThreatSpecError(
            "expected %d perturbation tokens, got %d" % (n_features, len(tokens))
        )
    categorical = set(categorical)
    out_of_range = sorted(i for i in categorical if i < 0 or i >= len(tokens))
    if out_of_range:
        raise ThreatSpecError("feature %d: index out of range" % out_of_range[0])
    attacked = frozenset(attacked_classes)
    if not attacked <= {0, 1}:
        raise ThreatSpecError("attacked_classes must be a subset of {0, 1}")
    perturbations = []
    for i, token in enumerate(tokens):
        if i in categorical:
            perturbations.append(parse_categorical_token(token, i))
        else:
            perturbations.append(parse_numeric_token(token, i))
    if not attacked and any(not p.is_trivial() for p in perturbations):
        raise ThreatSpecError(
            "attacked_classes must be non-empty for a non-trivial threat model"
        )
    return ThreatModel(tuple(perturbations), attacked)


def split_token_list(text: str):
    """Split a comma-separated token list, honoring parens and braces."""
    tokens = []
    depth = 0
    current = []
    for ch in text:
        if ch in "({":
            depth += 1
        elif ch in ")}":
            depth -= 1
            if depth < 0:
                raise ThreatSpecError("unbalanced %r in %r" % (ch, text))
        if ch == "," and depth == 0:
            tokens.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    if depth != 0:
        raise ThreatSpecError("unbalanced parentheses in %r" % text)
    tokens.append("".join(current).strip())
    return tokens


def _format_number(value: float) -> str:
    return repr(float(value))


def emit_token(p: FeaturePerturbation) -> str:
    if isinstance(p, CategoricalPerturbation):
        if p.reachable is None:
            return "<>"
        if not p.reachable:
            return ""
        return "{%s}" % ",".join(str(i) for i in sorted(p.reachable))
    left, right = p.eps_left, p.eps_right
    if left == 0.0 and right == 0.0:
        return ""
    if left == 0.0 and right == UNBOUNDED:
        return ">"
    if left == UNBOUNDED and right == 0.0:
        return "<"
    if left == UNBOUNDED and right == UNBOUNDED:
        return "<>"
    if math.isinf(left) or math.isinf(right):
        raise ThreatSpecError("mixed unbounded perturbation has no token form")
    if left == right:
        return _format_number(left)
    return "(%s, %s)" % (_format_number(left), _format_number(right))


def emit_tokens(model: ThreatModel):
    return [emit_token(p) for p in model.perturbations]


def perturbation_interval(model: ThreatModel, feature: int, value: float,
                          feature_range=(0.0, 1.0)):
    """Closed interval of values reachable from value, clamped to the range."""
    if feature < 0 or feature >= model.n_features:
        raise IndexError("feature index %d out of range" % feature)
    p = model.perturbations[feature]
    if isinstance(p, CategoricalPerturbation):
        raise ThreatSpecError("feature %d is categorical" % feature)
    range_lo, range_hi = feature_range
    lo = value - p.eps_left
    hi = value + p.eps_right
    lo = min(max(lo, range_lo), range_hi)
    hi = min(max(hi, range_lo), range_hi)
    return lo, hi


def reachable_categories(model: ThreatModel, feature: int, value: int,
                         n_categories: int):
    """Set of category ids reachable from value for a categorical feature."""
    if feature < 0 or feature >= model.n_features:
        raise IndexError("feature index %d out of range" % feature)
    p = model.perturbations[feature]
    if not isinstance(p, CategoricalPerturbation):
        raise ThreatSpecError("feature %d is numerical" % feature)
    if p.reachable is None:
        return frozenset({value}) | frozenset(range(n_categories))
    return frozenset({value}) | frozenset(c for c in p.reachable if c < n_categories)


def null_threat(n_features: int, categorical=()) -> ThreatModel:
    categorical = set(categorical)
    perturbations = tuple(
        CategoricalPerturbation(frozenset()) if i in categorical
        else NumericPerturbation(0.0, 0.0)
        for i in range(n_features)
    )
    return ThreatModel(perturbations, frozenset())


def effective_threat(model: ThreatModel, rho: float) -> ThreatModel:
    """Canonical form of the attacker actually faced during fitting.

    A zero attacker fraction, an empty attacked class set, and all-trivial
    perturbations all mean the same thing; they collapse to one null model
    so equivalent configurations serialize identically.
    """
    if rho == 0.0 or model.is_null():
        categorical = tuple(
            i for i, p in enumerate(model.perturbations)
            if isinstance(p, CategoricalPerturbation)
        )
        return null_threat(model.n_features, categorical)
    return model


def threat_digest(model: ThreatModel) -> str:
    doc = {
        "perturbations": emit_tokens(model),
        "attacked_classes": sorted(model.attacked_classes),
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_threat_file(path, categorical=()) -> ThreatModel:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "perturbations" not in doc:
        raise ThreatSpecError("threat file must contain a perturbations list")
    attacked = doc.get("attacked_classes", [0, 1])
    return parse_threat_spec(doc["perturbations"], categorical, attacked)


def dump_threat(model: ThreatModel) -> dict:
    return {
        "perturbations": emit_tokens(model),
        "attacked_classes": sorted(model.attacked_classes),
    }
