"""Synthetic scenario generation and the scenario file format.

The appliance library below is synthetic: the phase profiles and preferred
start times are plausible household values chosen so that a single house
never exceeds 3 kW when every device runs at its preferred time.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import jsonschema
import numpy as np

from gridsched.model import (
    FIXED,
    SHIFTABLE,
    SUPPLY_TOL,
    Appliance,
    House,
    Scenario,
    ScenarioError,
    ScenarioValidationError,
    TimeGrid,
    validate_scenario,
)
from gridsched.pricing import PIECEWISE_AFFINE, POWER_LAW, Tariff

FLEXIBILITY_SLACK = {"fix": 0, "short": 2, "long": 6}
HOMOGENEITY = ("homogeneous", "heterogeneous")
TARIFF_THRESHOLD_FRACTIONS = (0.25, 0.30, 0.35, 0.40, 1.00)

C_MIN = 50e-6  # EUR/kWh
S_MIN_TOTAL = 0.11e-6  # minimum slope times number of houses
SUPPLY_LIMIT_KW = 3.0
SLOTS = 24

# Preferred start of heterogeneous houses is moved by up to this many slots.
SHIFTABLE_JITTER = 4
FIXED_JITTER = 1


@dataclass(frozen=True)
class ApplianceTemplate:
    name: str
    phases: tuple[float, ...]
    preferred_start: int
    shiftable: bool


LIBRARY = (
    ApplianceTemplate("washing_machine", (2.0, 0.5, 0.3), 19, True),
    ApplianceTemplate("dishwasher", (0.2, 1.6, 0.3), 20, True),
    ApplianceTemplate("boiler", (1.0, 1.0), 22, True),
    ApplianceTemplate("vacuum_cleaner", (0.7,), 18, True),
    ApplianceTemplate("refrigerator", (0.1,) * 24, 1, False),
    ApplianceTemplate("purifier", (0.05,) * 24, 1, False),
    ApplianceTemplate("lights", (0.3,) * 5, 18, False),
    ApplianceTemplate("microwave_oven", (0.8,), 8, False),
    ApplianceTemplate("oven", (1.2, 0.8), 12, False),
    ApplianceTemplate("tv", (0.15,) * 4, 20, False),
    ApplianceTemplate("iron", (1.0,), 10, False),
)


class ScenarioFormatError(ScenarioError):
    """Malformed scenario or generation-spec document."""


@dataclass(frozen=True)
class GenerationSpec:
    num_houses: int = 20
    flexibility: str = "long"
    homogeneity: str = "homogeneous"
    tariff_threshold_fraction: float = 1.00
    slope_multiplier: int = 1
    seed: int = 0

    def __post_init__(self):
        if int(self.num_houses) != self.num_houses or self.num_houses < 1:
            raise ValueError(f"num_houses must be a positive integer, got {self.num_houses!r}")
        if self.flexibility not in FLEXIBILITY_SLACK:
            raise ValueError(f"flexibility must be one of {sorted(FLEXIBILITY_SLACK)}, got {self.flexibility!r}")
        if self.homogeneity not in HOMOGENEITY:
            raise ValueError(f"homogeneity must be one of {HOMOGENEITY}, got {self.homogeneity!r}")
        if not any(abs(self.tariff_threshold_fraction - f) < 1e-12 for f in TARIFF_THRESHOLD_FRACTIONS):
            raise ValueError(
                f"tariff_threshold_fraction must be one of {TARIFF_THRESHOLD_FRACTIONS}, "
                f"got {self.tariff_threshold_fraction!r}"
            )
        if int(self.slope_multiplier) != self.slope_multiplier or self.slope_multiplier < 1:
            raise ValueError("slope_multiplier must be a positive integer")

    @property
    def label(self) -> str:
        return (f"h{self.num_houses}-{self.flexibility}-{self.homogeneity[:3]}"
                f"-ttf{self.tariff_threshold_fraction:.2f}-s{self.slope_multiplier}-seed{self.seed}")


def standard_tariff(num_houses: int, threshold_fraction: float = 1.0, slope_multiplier: int = 1) -> Tariff:
    return Tariff.piecewise_affine(
        c_min=C_MIN,
        slope=slope_multiplier * S_MIN_TOTAL / num_houses,
        threshold_kw=threshold_fraction * num_houses * SUPPLY_LIMIT_KW,
    )


def window(preferred: int, duration: int, slack: int, slot_count: int = SLOTS) -> tuple[int, int]:
    """(ST, ET) with ``slack`` spare slots, centred on ``preferred`` and kept inside the day."""
    st = preferred - slack // 2
    et = st + duration + slack - 1
    if et > slot_count:
        st, et = st - (et - slot_count), slot_count
    if st < 1:
        st, et = 1, et + (1 - st)
    return st, et


def _house_starts(rng, heterogeneous: bool) -> list[int]:
    starts = []
    for t in LIBRARY:
        p = t.preferred_start
        if heterogeneous and len(t.phases) < SLOTS:
            jitter = SHIFTABLE_JITTER if t.shiftable else FIXED_JITTER
            p += int(rng.integers(-jitter, jitter + 1))
        starts.append(int(np.clip(p, 1, SLOTS - len(t.phases) + 1)))
    return starts


def _build_house(house_id: str, starts: list[int], slack: int) -> House:
    appliances = []
    for t, p in zip(LIBRARY, starts):
        s = slack if t.shiftable else 0
        st, et = window(p, len(t.phases), s)
        kind = SHIFTABLE if t.shiftable and s > 0 else FIXED
        appliances.append(Appliance(t.name, t.phases, st, et, kind))
    return House(house_id, tuple(appliances), SUPPLY_LIMIT_KW)


def _greedy_ok(house: House, slot_count: int = SLOTS) -> bool:
    load = np.zeros(slot_count)
    for a in house.appliances:
        if not a.is_shiftable:
            load[a.earliest_start - 1 : a.latest_end] += a.phase_loads
    for a in house.appliances:
        if not a.is_shiftable:
            continue
        for s in a.start_range:
            trial = load.copy()
            trial[s - 1 : s - 1 + a.duration] += a.phase_loads
            if np.all(trial <= house.supply_limit_kw + SUPPLY_TOL):
                load = trial
                break
        else:
            return False
    return bool(np.all(load <= house.supply_limit_kw + SUPPLY_TOL))


def generate(spec: GenerationSpec) -> Scenario:
    """Build the scenario described by ``spec``; a pure function of the spec.

    Heterogeneous houses draw their preferred start times from a generator
    seeded with ``spec.seed``.  The draws do not depend on the flexibility
    level, so fix/short/long scenarios with equal seeds share preferences and
    only differ in window width.  Draws for which some flexibility level
    would be infeasible for the greedy initial schedule are redrawn.
    """
    rng = np.random.default_rng(spec.seed)
    heterogeneous = spec.homogeneity == "heterogeneous"
    width = len(str(spec.num_houses))
    houses = []
    for i in range(spec.num_houses):
        hid = f"h{i + 1:0{width}d}"
        for _ in range(1000):
            starts = _house_starts(rng, heterogeneous)
            if all(_greedy_ok(_build_house(hid, starts, s)) for s in FLEXIBILITY_SLACK.values()):
                break
        else:
            raise ScenarioError(f"could not draw feasible preferences for house {hid}")
        houses.append(_build_house(hid, starts, FLEXIBILITY_SLACK[spec.flexibility]))
    tariff = standard_tariff(spec.num_houses, spec.tariff_threshold_fraction, spec.slope_multiplier)
    return Scenario(TimeGrid(SLOTS, 1.0), tuple(houses), tariff)


def random_scenario(
    seed: int,
    *,
    houses: tuple[int, int] = (1, 3),
    shiftable: tuple[int, int] = (1, 3),
    slot_count: int = 8,
    max_starts: int = 4,
    max_phases: int = 3,
    load_choices: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0),
    supply_limit_kw: float = 3.0,
    background_kw: float = 0.0,
    tariff: Tariff | None = None,
) -> Scenario:
    """Small random scenario for brute-force comparisons.

    The default loads are multiples of 0.5 kW so that with dyadic tariff
    parameters all costs are exact in floating point.  ``background_kw``
    adds a fixed base load per house of that size in every slot (and
    raises the supply limit by the same amount).
    """
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        hs = []
        for h in range(int(rng.integers(houses[0], houses[1] + 1))):
            apps = []
            for a in range(int(rng.integers(shiftable[0], shiftable[1] + 1))):
                d = int(rng.integers(1, min(max_phases, slot_count - 1) + 1))
                phases = tuple(float(v) for v in rng.choice(load_choices, d))
                n_starts = int(rng.integers(2, min(max_starts, slot_count - d + 1) + 1))
                st = int(rng.integers(1, slot_count - d - n_starts + 3))
                apps.append(Appliance(f"a{a + 1}", phases, st, st + n_starts + d - 2, SHIFTABLE))
            limit = supply_limit_kw
            if background_kw > 0:
                base = tuple(float(background_kw * m) for m in rng.choice((0.5, 1.0, 1.5), slot_count))
                apps.append(Appliance("base", base, 1, slot_count, FIXED))
                limit += max(base)
            hs.append(House(f"h{h + 1}", tuple(apps), limit))
        if tariff is None:
            choice = int(rng.integers(3))
            t = (Tariff.piecewise_affine(1.0, 0.25), Tariff.power_law(1.0, 1.0), Tariff.power_law(0.5, 2.0))[choice]
        else:
            t = tariff
        sc = Scenario(TimeGrid(slot_count, 1.0), tuple(hs), t)
        if not validate_scenario(sc) and all(_greedy_ok(h, slot_count) for h in hs):
            return sc
    raise ScenarioError("could not draw a feasible random scenario")


# -- file format --------------------------------------------------------------

_TARIFF_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "variant": {"const": PIECEWISE_AFFINE},
                "c_min": {"type": "number", "minimum": 0},
                "slope": {"type": "number", "minimum": 0},
                "threshold_kw": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "slot_overrides": {"$ref": "#/$defs/overrides"},
            },
            "required": ["variant", "c_min", "slope", "threshold_kw"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "variant": {"const": POWER_LAW},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "beta": {"type": "number", "minimum": 1},
                "slot_overrides": {"$ref": "#/$defs/overrides"},
            },
            "required": ["variant", "alpha", "beta"],
            "additionalProperties": False,
        },
    ]
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "grid": {
            "type": "object",
            "properties": {
                "slot_count": {"type": "integer"},
                "slot_duration_hours": {"type": "number"},
            },
            "required": ["slot_count", "slot_duration_hours"],
            "additionalProperties": False,
        },
        "tariff": {"$ref": "#/$defs/tariff"},
        "houses": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "string"},
                    "supply_limit_kw": {"type": "number"},
                    "appliances": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "id": {"type": "string"},
                                "kind": {"enum": [SHIFTABLE, FIXED]},
                                "phase_loads_kw": {"type": "array", "items": {"type": "number"}},
                                "earliest_start": {"type": "integer"},
                                "latest_end": {"type": "integer"},
                            },
                            "required": ["id", "kind", "phase_loads_kw", "earliest_start", "latest_end"],
                            "additionalProperties": False,
                        },
                    },
                },
                "required": ["id", "supply_limit_kw", "appliances"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["grid", "tariff", "houses"],
    "additionalProperties": False,
    "$defs": {
        "tariff": _TARIFF_SCHEMA,
        "overrides": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"slot": {"type": "integer", "minimum": 1}, "tariff": {"$ref": "#/$defs/tariff"}},
                "required": ["slot", "tariff"],
                "additionalProperties": False,
            },
        },
    },
}

SPEC_SCHEMA = {
    "type": "object",
    "properties": {
        "num_houses": {"type": "integer"},
        "flexibility": {"type": "string"},
        "homogeneity": {"type": "string"},
        "tariff_threshold_fraction": {"type": "number"},
        "slope_multiplier": {"type": "integer"},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}


def tariff_to_dict(tariff: Tariff) -> dict:
    if tariff.variant == PIECEWISE_AFFINE:
        out = {
            "variant": PIECEWISE_AFFINE,
            "c_min": tariff.c_min,
            "slope": tariff.slope,
            "threshold_kw": None if tariff.threshold_kw == float("inf") else tariff.threshold_kw,
        }
    else:
        out = {"variant": POWER_LAW, "alpha": tariff.alpha, "beta": tariff.beta}
    if tariff.slot_overrides:
        out["slot_overrides"] = [{"slot": t, "tariff": tariff_to_dict(o)} for t, o in tariff.slot_overrides]
    return out


def tariff_from_dict(d: dict) -> Tariff:
    overrides = tuple((o["slot"], tariff_from_dict(o["tariff"])) for o in d.get("slot_overrides", ()))
    if d["variant"] == PIECEWISE_AFFINE:
        threshold = float("inf") if d["threshold_kw"] is None else d["threshold_kw"]
        base = Tariff.piecewise_affine(d["c_min"], d["slope"], threshold)
    else:
        base = Tariff.power_law(d["alpha"], d["beta"])
    return Tariff(**{**base.__dict__, "slot_overrides": overrides})


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "grid": {
            "slot_count": scenario.grid.slot_count,
            "slot_duration_hours": scenario.grid.slot_duration_hours,
        },
        "tariff": tariff_to_dict(scenario.tariff),
        "houses": [
            {
                "id": h.id,
                "supply_limit_kw": h.supply_limit_kw,
                "appliances": [
                    {
                        "id": a.id,
                        "kind": a.kind,
                        "phase_loads_kw": list(a.phase_loads),
                        "earliest_start": a.earliest_start,
                        "latest_end": a.latest_end,
                    }
                    for a in h.appliances
                ],
            }
            for h in scenario.houses
        ],
    }


def _schema_check(doc, schema, source: str):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        # oneOf failures hide the useful message one level down
        err = errors[0]
        if err.context:
            err = min(err.context, key=lambda e: len(e.absolute_path) * -1)
        where = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path) or "<root>"
        raise ScenarioFormatError(f"{source}: {where.lstrip('.')}: {err.message}")


def scenario_from_dict(doc: dict, source: str = "<scenario>", validate: bool = True) -> Scenario:
    _schema_check(doc, SCENARIO_SCHEMA, source)
    try:
        tariff = tariff_from_dict(doc["tariff"])
    except ValueError as e:
        raise ScenarioFormatError(f"{source}: tariff: {e}") from None
    scenario = Scenario(
        TimeGrid(doc["grid"]["slot_count"], doc["grid"]["slot_duration_hours"]),
        tuple(
            House(
                h["id"],
                tuple(
                    Appliance(a["id"], tuple(a["phase_loads_kw"]), a["earliest_start"], a["latest_end"], a["kind"])
                    for a in h["appliances"]
                ),
                h["supply_limit_kw"],
            )
            for h in doc["houses"]
        ),
        tariff,
    )
    if validate:
        violations = validate_scenario(scenario)
        if violations:
            raise ScenarioValidationError(violations)
    return scenario


def _read_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None


def dumps(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"


def save(scenario: Scenario, path) -> None:
    Path(path).write_text(dumps(scenario))


def load(path) -> Scenario:
    return scenario_from_dict(_read_json(path), str(path))


def save_spec(spec: GenerationSpec, path) -> None:
    Path(path).write_text(json.dumps(asdict(spec), indent=2) + "\n")


def load_spec(path) -> GenerationSpec:
    doc = _read_json(path)
    _schema_check(doc, SPEC_SCHEMA, str(path))
    try:
        return GenerationSpec(**doc)
    except ValueError as e:
        raise ScenarioFormatError(f"{path}: {e}") from None
