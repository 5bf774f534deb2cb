"""
mixsel.serializers.run_config

Schema for RunConfig documents (configs/*.cfg, JSON). Validation happens before any
compute; unknown keys are rejected at every nesting level and reported with their
dotted key paths. validated_data is plain JSON (penalties, sieves and grids come back
in their normalized dict form) so it can be echoed losslessly into manifest.json.

CHANGE LOG
- 2026-08-24: Initial schema: truth/family/sieve/fit/grid + per-study sections.
- 2026-09-02: Penalties accept the CLI mini-language as well as dicts.  # CHANGED:
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Union

from rest_framework import serializers

from ..config import setting
from ..exceptions import ConfigError, MixselError
from ..services.density import FAMILY_KINDS, SIEVE_RULES, LocationFamily, MixtureParams, SieveSchedule
from ..services.divergence import GRID_SCHEMES, GridSpec
from ..services.entropy import local_global_precondition
from ..services.experiments import ORDER_STUDIES, STUDIES, STUDY_ALIASES, canonical_study
from ..services.likelihood import LIL_MIN_N, LIL_MODELS
from ..services.order_select import Penalty


class StrictSerializer(serializers.Serializer):
    """Plain serializer that refuses keys it does not declare."""

    def to_internal_value(self, data):
        unknown = sorted(set(data) - set(self.fields)) if isinstance(data, dict) else []
        errors = {key: ["Unknown key."] for key in unknown}
        try:
            value = super().to_internal_value(data)
        except serializers.ValidationError as exc:
            if not isinstance(exc.detail, dict):
                raise
            errors = {**exc.detail, **errors}
        if errors:
            raise serializers.ValidationError(errors)
        return value


def _check(builder, *args, **kwargs):
    try:
        return builder(*args, **kwargs)
    except MixselError as exc:
        raise serializers.ValidationError(exc.message)


class LocationsField(serializers.Field):
    """A list of rows, or a flat list of scalars (one 1-D location each)."""

    def to_internal_value(self, data):
        if not isinstance(data, list) or not data:
            raise serializers.ValidationError("Expected a nonempty list.")
        rows: List[List[float]] = []
        for item in data:
            row = item if isinstance(item, list) else [item]
            try:
                rows.append([float(v) for v in row])
            except (TypeError, ValueError):
                raise serializers.ValidationError(f"Non-numeric location {item!r}.")
        return rows

    def to_representation(self, value):
        return value


class PenaltyField(serializers.Field):
    def to_internal_value(self, data):
        if not isinstance(data, (str, dict)):
            raise serializers.ValidationError("Penalty must be a string or an object.")
        return _check(Penalty.from_dict, data).to_dict()

    def to_representation(self, value):
        return value


class FamilySerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=FAMILY_KINDS, default="gaussian-standard")
    dim = serializers.IntegerField(min_value=1, default=1)
    sigma = serializers.FloatField(required=False)

    def validate(self, attrs):
        if attrs["kind"] == "gaussian-standard" and attrs.get("sigma", 1.0) != 1.0:
            raise serializers.ValidationError({"sigma": ["gaussian-standard has sigma = 1; use gaussian-scaled."]})
        return _check(LocationFamily.from_dict, attrs).to_dict()


class MixtureSerializer(StrictSerializer):
    weights = serializers.ListField(child=serializers.FloatField(), min_length=1)
    locations = LocationsField()

    def validate(self, attrs):
        return _check(MixtureParams.build, attrs["weights"], attrs["locations"]).to_dict()


class SieveSerializer(StrictSerializer):
    rule = serializers.ChoiceField(choices=SIEVE_RULES, default="constant")
    radius = serializers.FloatField(required=False)
    c = serializers.FloatField(required=False)
    exponent = serializers.FloatField(required=False)

    def validate(self, attrs):
        return _check(SieveSchedule.from_dict, attrs).to_dict()


class FitSerializer(StrictSerializer):
    starts = serializers.IntegerField(min_value=1, required=False)
    tol = serializers.FloatField(min_value=0.0, default=1e-8)
    max_iter = serializers.IntegerField(min_value=1, default=500)

    def validate(self, attrs):
        attrs.setdefault("starts", int(setting("MIXSEL_DEFAULT_STARTS", 20)))
        if not attrs["tol"] > 0:
            raise serializers.ValidationError({"tol": ["Must be positive."]})
        return dict(attrs)


class GridSerializer(StrictSerializer):
    scheme = serializers.ChoiceField(choices=GRID_SCHEMES)
    step = serializers.FloatField(required=False)
    order = serializers.IntegerField(required=False)
    size = serializers.IntegerField(required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    radius = serializers.FloatField(required=False, allow_null=True)

    def validate(self, attrs):
        _check(GridSpec.from_dict, attrs)
        return dict(attrs)


class LilSerializer(StrictSerializer):
    low_exponent = serializers.IntegerField(min_value=LIL_MIN_N.bit_length() - 1, default=8)
    high_exponent = serializers.IntegerField(min_value=4, default=16)
    mixture_high_exponent = serializers.IntegerField(min_value=4, required=False)
    q = serializers.IntegerField(min_value=2, required=False)
    radius = serializers.FloatField(min_value=0.0, default=10.0)
    regular_radius = serializers.FloatField(min_value=0.0, default=10.0)
    strassen_shift = serializers.FloatField(default=0.5)
    models = serializers.ListField(child=serializers.ChoiceField(choices=LIL_MODELS), default=list(LIL_MODELS))

    def validate(self, attrs):
        if attrs["high_exponent"] < attrs["low_exponent"]:
            raise serializers.ValidationError({"high_exponent": ["Must be at least low_exponent."]})
        mixture_high = attrs.get("mixture_high_exponent")
        if mixture_high is not None and mixture_high < attrs["low_exponent"]:
            raise serializers.ValidationError({"mixture_high_exponent": ["Must be at least low_exponent."]})
        return dict(attrs)


class BoxSerializer(StrictSerializer):
    q = serializers.IntegerField(min_value=1)
    dim = serializers.IntegerField(min_value=1, default=1)
    weight_low = serializers.FloatField(default=0.0)
    weight_high = serializers.FloatField(default=1.0)
    theta_low = serializers.FloatField(default=0.0)
    theta_high = serializers.FloatField(default=1.0)


class EnvelopeSerializer(StrictSerializer):
    radius = serializers.FloatField(min_value=0.0, required=False)
    ray_points = serializers.IntegerField(min_value=3, default=65)


class GeometrySerializer(StrictSerializer):
    box = BoxSerializer()
    n_samples = serializers.IntegerField(min_value=1000, default=100_000)
    epsilons = serializers.ListField(child=serializers.FloatField(min_value=0.0), default=[0.05])
    resolution = serializers.IntegerField(min_value=2, default=101)
    partition_radius = serializers.FloatField(required=False, allow_null=True, default=None)
    envelopes = EnvelopeSerializer(required=False)
    growth_radii = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False)

    def validate(self, attrs):
        radii = attrs.get("growth_radii")
        if radii is not None and len(radii) < 2:
            raise serializers.ValidationError({"growth_radii": ["Need at least two radii."]})
        return dict(attrs)


class LocalGlobalSerializer(StrictSerializer):
    q = serializers.IntegerField(min_value=1, default=2)
    n_functions = serializers.IntegerField(min_value=100, required=False)
    r_norm = serializers.FloatField(required=False, allow_null=True)
    pairs = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(min_value=0.0), min_length=2, max_length=2),
        min_length=1,
    )

    def validate(self, attrs):
        r_norm = attrs.get("r_norm") or 2.0  # envelope norm unknown until run time; 2 makes the cap 4
        errors = {}
        for k, (delta, rho) in enumerate(attrs.get("pairs", ())):
            try:
                local_global_precondition(delta, rho, r_norm)
            except MixselError as exc:
                errors[str(k)] = [exc.message]
        if errors:
            raise serializers.ValidationError({"pairs": errors})
        return dict(attrs)


class EntropySerializer(StrictSerializer):
    q_list = serializers.ListField(child=serializers.IntegerField(min_value=1), default=[1, 2, 3], allow_empty=True)
    epsilon = serializers.FloatField(min_value=0.0, default=0.2)
    radius = serializers.FloatField(min_value=0.0, default=2.0)
    n_functions = serializers.IntegerField(min_value=100, default=2000)
    delta_points = serializers.IntegerField(min_value=4, default=8)
    smallest_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.05)
    local_global = LocalGlobalSerializer(required=False)


class RunConfigSerializer(StrictSerializer):
    study = serializers.ChoiceField(choices=STUDIES + tuple(STUDY_ALIASES))
    seed = serializers.IntegerField(min_value=0)
    truth = MixtureSerializer()
    family = FamilySerializer(required=False)
    n_grid = serializers.ListField(child=serializers.IntegerField(min_value=1), default=list)
    replicates = serializers.IntegerField(min_value=1, default=1)
    penalties = serializers.ListField(child=PenaltyField(), default=list)
    sieve = SieveSerializer(required=False)
    fit = FitSerializer(required=False)
    grid = GridSerializer(required=False)
    q_cap = serializers.IntegerField(min_value=1, required=False)
    threads = serializers.IntegerField(min_value=1, required=False)
    output_dir = serializers.CharField(required=False, allow_blank=False)
    verbosity = serializers.IntegerField(min_value=0, max_value=3, required=False)
    lil = LilSerializer(required=False)
    geometry = GeometrySerializer(required=False)
    entropy = EntropySerializer(required=False)

    def validate(self, attrs):
        study = canonical_study(attrs["study"])
        attrs["study"] = study
        attrs.setdefault("family", {"kind": "gaussian-standard", "dim": 1})
        attrs.setdefault("sieve", {"rule": "constant", "radius": 10.0})
        attrs.setdefault("fit", FitSerializer(data={}).run_validation({}))
        attrs.setdefault("q_cap", int(setting("MIXSEL_Q_CAP", 32)))

        truth_dim = len(attrs["truth"]["locations"][0])
        if truth_dim != attrs["family"]["dim"]:
            raise serializers.ValidationError({"truth": [f"Locations have {truth_dim} coordinate(s); family dim is {attrs['family']['dim']}."]})
        sizes = attrs["n_grid"]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise serializers.ValidationError({"n_grid": ["Must be strictly increasing."]})
        if study in ORDER_STUDIES:
            if not sizes:
                raise serializers.ValidationError({"n_grid": [f"Required for the {study} study."]})
            if not attrs["penalties"]:
                raise serializers.ValidationError({"penalties": [f"Required for the {study} study."]})
        if study == "inconsistency" and not any(p["variant"] == "loglog" for p in attrs["penalties"]):
            raise serializers.ValidationError({"penalties": ["The inconsistency study needs a loglog:C penalty."]})
        if study == "geometry" and "geometry" not in attrs:
            raise serializers.ValidationError({"geometry": ["Required for the geometry study."]})
        if study == "lil":
            attrs.setdefault("lil", LilSerializer(data={}).run_validation({}))
        if study == "entropy":
            attrs.setdefault("entropy", EntropySerializer(data={}).run_validation({}))
        return attrs


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _flatten_errors(errors: Any, prefix: str = "") -> List[str]:
    if isinstance(errors, dict):
        out: List[str] = []
        for key, value in errors.items():
            out.extend(_flatten_errors(value, f"{prefix}.{key}" if prefix else str(key)))
        return out
    if isinstance(errors, list):
        if all(not isinstance(e, (dict, list)) for e in errors):
            return [f"{prefix or 'config'}: {' '.join(str(e) for e in errors)}"]
        out = []
        for i, value in enumerate(errors):
            if value:
                out.extend(_flatten_errors(value, f"{prefix}[{i}]"))
        return out
    return [f"{prefix or 'config'}: {errors}"]


def validate_run_config(data: Dict[str, Any]) -> Dict[str, Any]:
    """Validated, defaults-filled RunConfig as plain JSON data; ConfigError lists the offending key paths."""
    if not isinstance(data, dict):
        raise ConfigError("a RunConfig must be a JSON object")
    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        problems = _flatten_errors(serializer.errors)
        raise ConfigError("invalid run config: " + "; ".join(problems), keys=[p.split(":")[0] for p in problems])
    return _plain(serializer.validated_data)


def load_run_config(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: not valid JSON ({exc.msg})", path=str(path)) from None
    return validate_run_config(raw)
