"""Built-in registry of the twelve missingness scenarios (1A-6B).

Coefficients act on the standardized scale for the CD4 columns and reference
the canonical trial schema column names (see `rctsynth.demo.trial_schema`).
Intercepts here were calibrated for the original trial export; on other data
use `calibrated_scenario` to re-solve them against the Table-1 proportion
targets while keeping the slope structure.
"""

from __future__ import annotations

import json

from .missingness import McarSpec, MissingnessModelSpec, ScenarioSpec, calibrate_intercept
from .table import DataTable

ART = "art_history"
CD4_0 = "cd4_baseline"
CD4_1 = "cd4_week20"
CD4_2 = "cd4_week96"
TREAT = "treatment"
OUTCOME = "outcome"

_RZ1_COVARIATES = (ART, CD4_0, TREAT)
_RZ2_COVARIATES = (ART, CD4_0, TREAT, CD4_1)
_RY_COVARIATES = (ART, CD4_0, CD4_2)


def _rz1(intercept, art1=3.0, art2=5.0, cd4=10.0, t1=3.5, t2=2.0, t3=2.5):
    return MissingnessModelSpec(
        target=CD4_1,
        covariates=_RZ1_COVARIATES,
        coefficients={
            "intercept": intercept,
            f"{ART}=1-52wk": art1,
            f"{ART}=52+wk": art2,
            CD4_0: cd4,
            f"{TREAT}=1": t1,
            f"{TREAT}=2": t2,
            f"{TREAT}=3": t3,
        },
        standardize=(CD4_0,),
    )


def _rz2(intercept, art1=5.0, art2=7.0, cd4=15.0, t2=3.0, w20=15.0):
    # the registry tables list only the treatment-2 dummy for this model
    return MissingnessModelSpec(
        target=CD4_2,
        covariates=_RZ2_COVARIATES,
        coefficients={
            "intercept": intercept,
            f"{ART}=1-52wk": art1,
            f"{ART}=52+wk": art2,
            CD4_0: cd4,
            f"{TREAT}=2": t2,
            CD4_1: w20,
        },
        standardize=(CD4_0, CD4_1),
    )


def _ry(intercept, art1, art2, cd4, w96):
    return MissingnessModelSpec(
        target=OUTCOME,
        covariates=_RY_COVARIATES,
        coefficients={
            "intercept": intercept,
            f"{ART}=1-52wk": art1,
            f"{ART}=52+wk": art2,
            CD4_0: cd4,
            CD4_2: w96,
        },
        standardize=(CD4_0, CD4_2),
    )


def _build_registry() -> dict[str, ScenarioSpec]:
    reg = {}

    def add(sid, pattern, mechanism, proportion, strength, models):
        reg[sid] = ScenarioSpec(sid, pattern, mechanism, proportion, strength, tuple(models))

    # -- scenario 1: MAR x 25% x strong (primary)
    add("1A", "non_monotone", "MAR", 0.25, "strong",
        [_rz1(2.562), _ry(27.546, 5, 7, 20, 28)])
    add("1B", "monotone", "MAR", 0.25, "strong",
        [_rz1(2.562), _rz2(14.357), _ry(26.878, 6, 8, 20, 28)])

    # -- scenario 2: MCAR x 25% x strong
    add("2A", "non_monotone", "MCAR", 0.25, "strong",
        [McarSpec(CD4_1, 0.75), McarSpec(OUTCOME, 0.75)])
    add("2B", "monotone", "MCAR", 0.25, "strong",
        [McarSpec(CD4_1, 0.75), McarSpec(CD4_2, 0.75), McarSpec(OUTCOME, 0.75)])

    # -- scenario 3: MAR x 10% x strong
    add("3A", "non_monotone", "MAR", 0.10, "strong",
        [_rz1(7.643), _ry(47.949, 5, 7, 20, 28)])
    add("3B", "monotone", "MAR", 0.10, "strong",
        [_rz1(7.643), _rz2(27.717), _ry(47.236, 6, 8, 20, 28)])

    # -- scenario 4: MAR x 50% x strong
    add("4A", "non_monotone", "MAR", 0.50, "strong",
        [_rz1(-3.801), _ry(-1.626, 5, 7, 20, 28)])
    add("4B", "monotone", "MAR", 0.50, "strong",
        [_rz1(-3.801), _rz2(-2.430), _ry(-2.185, 6, 8, 20, 28)])

    # -- scenario 5: MAR x 25% x weak
    weak_z1 = dict(art1=0.3, art2=0.5, cd4=5.0, t1=0.7, t2=0.3, t3=0.4)
    weak_z2 = dict(art1=0.5, art2=0.7, cd4=7.0, t2=0.3, w20=7.5)
    add("5A", "non_monotone", "MAR", 0.25, "weak",
        [_rz1(3.440, **weak_z1), _ry(15.821, 0.5, 0.7, 10, 14)])
    add("5B", "monotone", "MAR", 0.25, "weak",
        [_rz1(3.155, **weak_z1), _rz2(8.947, **weak_z2), _ry(7.549, 0.5, 0.7, 5, 7)])

    # -- scenario 6: MAR x 50% x weak
    add("6A", "non_monotone", "MAR", 0.50, "weak",
        [_rz1(-0.230, **weak_z1), _ry(0.590, 0.5, 0.7, 10, 14)])
    add("6B", "monotone", "MAR", 0.50, "weak",
        [_rz1(-0.230, **weak_z1), _rz2(0.534, **weak_z2), _ry(0.131, 0.5, 0.7, 5, 7)])
    return reg


REGISTRY: dict[str, ScenarioSpec] = _build_registry()


def get_scenario(sid: str) -> ScenarioSpec:
    try:
        return REGISTRY[sid]
    except KeyError:
        raise KeyError(f"unknown scenario {sid!r}; known: {sorted(REGISTRY)}") from None


def calibrated_scenario(s: ScenarioSpec, t: DataTable) -> ScenarioSpec:
    """Re-solve every MAR intercept on this table so each model's draw hits
    the scenario's observed-proportion target (1 - proportion)."""
    target = 1.0 - s.proportion
    models = []
    for m in s.models:
        if isinstance(m, McarSpec):
            models.append(m)
            continue
        c = calibrate_intercept(t, m, target)
        coefs = dict(m.coefficients)
        coefs["intercept"] = c
        models.append(MissingnessModelSpec(m.target, m.covariates, coefs, m.standardize))
    return ScenarioSpec(s.id, s.pattern, s.mechanism, s.proportion, s.strength, tuple(models))


# ---------------------------------------------------------------------------
# config-file round trip


def _term_to_json(term):
    return list(term) if isinstance(term, tuple) else term


def _term_from_json(term):
    return tuple(term) if isinstance(term, list) else term


def scenario_to_json(s: ScenarioSpec) -> dict:
    models = []
    for m in s.models:
        if isinstance(m, McarSpec):
            models.append({"target": m.target, "p_observed": m.p_observed})
        else:
            models.append(
                {
                    "target": m.target,
                    "covariates": [_term_to_json(c) for c in m.covariates],
                    "coefficients": dict(m.coefficients),
                    "standardize": list(m.standardize),
                }
            )
    return {
        "id": s.id,
        "pattern": s.pattern,
        "mechanism": s.mechanism,
        "proportion": s.proportion,
        "strength": s.strength,
        "models": models,
    }


def scenario_from_json(obj: dict) -> ScenarioSpec:
    models = []
    for m in obj["models"]:
        if "p_observed" in m:
            models.append(McarSpec(m["target"], float(m["p_observed"])))
        else:
            models.append(
                MissingnessModelSpec(
                    target=m["target"],
                    covariates=tuple(_term_from_json(c) for c in m["covariates"]),
                    coefficients={k: float(v) for k, v in m["coefficients"].items()},
                    standardize=tuple(m.get("standardize", ())),
                )
            )
    return ScenarioSpec(
        obj["id"], obj["pattern"], obj["mechanism"],
        float(obj["proportion"]), obj["strength"], tuple(models),
    )


def registry_to_json() -> list[dict]:
    return [scenario_to_json(REGISTRY[k]) for k in sorted(REGISTRY)]


def registry_hash() -> str:
    import hashlib

    blob = json.dumps(registry_to_json(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
