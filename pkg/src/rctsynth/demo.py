"""Deterministic demo trial dataset on the canonical schema.

A stand-in for the real four-arm HIV trial export: 1342 complete rows, the
same fourteen baseline covariates, four treatment arms, two CD4 follow-up
counts, and a binary composite outcome whose threshold leg makes it
deliberately nonlinear in the CD4 trajectory (as the real composite endpoint
is). Constants below were tuned once so the dichotomized treatment odds
ratio lands near 0.43 and the built-in scenario registry realizes roughly
its target missingness proportions.
"""

from __future__ import annotations

import numpy as np

from .table import ColumnSchema, DataTable, make_table

DEMO_SEED = 451_175


def trial_schema() -> tuple[ColumnSchema, ...]:
    b = lambda name: ColumnSchema(name, "binary", "baseline")
    return (
        ColumnSchema("age", "continuous", "baseline"),
        ColumnSchema("weight", "continuous", "baseline"),
        b("hemophilia"),
        b("homosexual"),
        b("drug_use"),
        ColumnSchema("karnof", "categorical", "baseline", levels=("70", "80", "90", "100")),
        b("nonzdv_art"),
        b("zdv_30days"),
        ColumnSchema("days_prior_art", "continuous", "baseline"),
        b("race"),
        b("gender"),
        ColumnSchema("art_history", "categorical", "baseline", levels=("naive", "1-52wk", "52+wk")),
        b("symptomatic"),
        ColumnSchema("cd4_baseline", "count", "baseline"),
        ColumnSchema("treatment", "categorical", "treatment", levels=("0", "1", "2", "3")),
        ColumnSchema("cd4_week20", "count", "post_randomization", index=1),
        ColumnSchema("cd4_week96", "count", "post_randomization", index=2),
        ColumnSchema("outcome", "binary", "outcome"),
    )


def make_demo_table(n: int = 1342, seed: int = DEMO_SEED) -> DataTable:
    rng = np.random.default_rng(seed)
    age = np.clip(np.round(rng.normal(35.2, 8.7, n)), 14, 70)
    weight = np.round(np.clip(rng.normal(75.1, 13.2, n), 40, 160), 1)
    hemophilia = (rng.random(n) < 0.084).astype(float)
    homosexual = (rng.random(n) < 0.66).astype(float)
    drug_use = (rng.random(n) < 0.13).astype(float)
    nonzdv_art = (rng.random(n) < 0.22).astype(float)
    race = (rng.random(n) < 0.29).astype(float)
    gender = (rng.random(n) < 0.83).astype(float)
    symptomatic = (rng.random(n) < 0.17).astype(float)

    # prior-therapy history drives both the day counts and recent-use flag
    art = rng.choice(3, size=n, p=(0.41, 0.13, 0.46)).astype(float)
    days = np.zeros(n)
    mid = art == 1
    days[mid] = np.round(rng.uniform(7, 364, mid.sum()))
    late = art == 2
    days[late] = np.round(365 + rng.exponential(480, late.sum()))
    zdv_30days = ((art > 0) & (rng.random(n) < 0.75)).astype(float)

    # enrollment required CD4 between 200 and 500
    cd4_0 = np.round(np.clip(rng.normal(350, 65, n), 200, 500))
    karnof_score = 2.05 + 0.004 * (cd4_0 - 350) + rng.normal(0, 0.9, n)
    karnof = np.clip(np.round(karnof_score), 0, 3).astype(float)

    treatment = rng.choice(4, size=n, p=(0.25, 0.25, 0.25, 0.25)).astype(float)
    arm_lift_20 = np.array([0.0, 38.0, 28.0, 32.0])[treatment.astype(int)]
    arm_lift_96 = np.array([0.0, 42.0, 31.0, 36.0])[treatment.astype(int)]

    cd4_1 = (
        42.0
        + 0.84 * cd4_0
        + arm_lift_20
        + 9.0 * (art == 0)
        - 14.0 * symptomatic
        - 9.0 * drug_use
        + 0.5 * (age - 35)
        + rng.normal(0, 88, n)
    )
    cd4_1 = np.round(np.maximum(cd4_1, 0.0))
    cd4_2 = (
        18.0
        + 0.40 * cd4_0
        + 0.38 * cd4_1
        + arm_lift_96
        - 16.0 * symptomatic
        + rng.normal(0, 104, n)
    )
    cd4_2 = np.round(np.maximum(cd4_2, 0.0))

    # composite failure: a measured CD4 drop past the threshold, or a clinical
    # event whose odds climb as the trajectory falls; the threshold leg makes
    # the outcome deliberately nonlinear in the CD4 columns
    drop = cd4_2 <= 0.62 * cd4_0
    z1 = (cd4_1 - cd4_1.mean()) / cd4_1.std()
    z2 = (cd4_2 - cd4_2.mean()) / cd4_2.std()
    lp = -1.85 - 0.5 * z1 - 0.6 * z2 + 0.30 * symptomatic - 0.1 * (treatment > 0)
    clinical = rng.random(n) < 1.0 / (1.0 + np.exp(-lp))
    outcome = (drop | clinical).astype(float)

    cols = {
        "age": age,
        "weight": weight,
        "hemophilia": hemophilia,
        "homosexual": homosexual,
        "drug_use": drug_use,
        "karnof": karnof,
        "nonzdv_art": nonzdv_art,
        "zdv_30days": zdv_30days,
        "days_prior_art": days,
        "race": race,
        "gender": gender,
        "art_history": art,
        "symptomatic": symptomatic,
        "cd4_baseline": cd4_0,
        "treatment": treatment,
        "cd4_week20": cd4_1,
        "cd4_week96": cd4_2,
        "outcome": outcome,
    }
    return make_table(trial_schema(), cols)
