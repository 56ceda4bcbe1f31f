"""Method-selection advisor.

Maps a panel's design features (how many treated units, adoption timing,
how many comparison units) to the set of viable estimators, each carrying
its identification-assumption checklist, heterogeneity-support flags, and
advisory data cautions. Viability is a pure function of the features;
cautions are guidance, never vetoes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import PanelCauseError
from .panel import (NO_TREATED, SIMULTANEOUS, SINGLE_TREATED, STAGGERED,
                    PanelDataset, derive_adoption)

ITS = "ITS"
ITS_MULTI_BASELINE = "ITS_MULTI_BASELINE"
SCM = "SCM"
ASCM = "ASCM"
DID_TWFE = "DID_TWFE"
EVENT_STUDY = "EVENT_STUDY"
CITS = "CITS"
GROUP_TIME_DID = "GROUP_TIME_DID"
IMPUTATION_DID = "IMPUTATION_DID"
DEBIASED_AR = "DEBIASED_AR"
STAGGERED_ASCM = "STAGGERED_ASCM"

ALL_METHODS = (ITS, ITS_MULTI_BASELINE, SCM, ASCM, DID_TWFE, EVENT_STUDY,
               CITS, GROUP_TIME_DID, IMPUTATION_DID, DEBIASED_AR,
               STAGGERED_ASCM)

IGNORABILITY = "ignorability"
POSITIVITY = "positivity"
NO_ANTICIPATION = "no anticipation"
CONSISTENCY = "consistency"
NO_SPILLOVER = "no spillover"
PARALLEL_TRENDS = "parallel trends"

# identification assumptions each method leans on
ASSUMPTIONS = {
    ITS: (IGNORABILITY, NO_ANTICIPATION, CONSISTENCY),
    ITS_MULTI_BASELINE: (IGNORABILITY, NO_ANTICIPATION, CONSISTENCY,
                         NO_SPILLOVER),
    SCM: (IGNORABILITY, POSITIVITY, NO_ANTICIPATION, CONSISTENCY,
          NO_SPILLOVER),
    ASCM: (IGNORABILITY, POSITIVITY, NO_ANTICIPATION, CONSISTENCY,
           NO_SPILLOVER),
    DID_TWFE: (POSITIVITY, NO_ANTICIPATION, CONSISTENCY, NO_SPILLOVER,
               PARALLEL_TRENDS),
    EVENT_STUDY: (IGNORABILITY, POSITIVITY, NO_ANTICIPATION, CONSISTENCY,
                  NO_SPILLOVER, PARALLEL_TRENDS),
    CITS: (POSITIVITY, NO_ANTICIPATION, CONSISTENCY, NO_SPILLOVER),
    GROUP_TIME_DID: (POSITIVITY, NO_ANTICIPATION, CONSISTENCY, NO_SPILLOVER,
                     PARALLEL_TRENDS),
    IMPUTATION_DID: (POSITIVITY, NO_ANTICIPATION, CONSISTENCY, NO_SPILLOVER,
                     PARALLEL_TRENDS),
    DEBIASED_AR: ("ignorability (conditional on prior outcomes absent "
                  "treatment)", POSITIVITY, NO_ANTICIPATION, CONSISTENCY,
                  NO_SPILLOVER),
    STAGGERED_ASCM: (IGNORABILITY, NO_ANTICIPATION, CONSISTENCY,
                     NO_SPILLOVER),
}

# (supports effect heterogeneity by time, by cohort)
HETEROGENEITY = {
    ITS: (True, False),
    ITS_MULTI_BASELINE: (True, True),
    SCM: (True, False),
    ASCM: (True, False),
    DID_TWFE: (False, False),
    EVENT_STUDY: (True, False),
    CITS: (True, False),
    GROUP_TIME_DID: (True, True),
    IMPUTATION_DID: (True, True),
    DEBIASED_AR: (False, False),
    STAGGERED_ASCM: (True, True),
}

CAUTION_CONFIG = {"min_pre_periods": 2, "single_cluster_at": 1}


@dataclass(frozen=True)
class DesignFeatures:
    n_treated: int
    n_control: int
    timing_class: str
    cohort_sizes: dict          # adoption time label -> unit count
    pre_periods_min: int
    post_periods_min: int
    has_missing: bool
    singleton_cohorts: int


@dataclass
class MethodAssessment:
    method: str
    viable: bool
    reasons: tuple              # (code, message) pairs; empty when viable
    assumptions: tuple
    heterogeneity_by_time: bool
    heterogeneity_by_cohort: bool
    cautions: tuple             # (code, message) pairs, advisory only


@dataclass
class MethodRecommendation:
    features: DesignFeatures
    methods: dict               # method id -> MethodAssessment, all ids present

    @property
    def viable(self) -> tuple:
        return tuple(m for m in ALL_METHODS if self.methods[m].viable)


def derive_features(panel: PanelDataset, schedule=None) -> DesignFeatures:
    if schedule is None:
        schedule = derive_adoption(panel)
    sizes = {panel.label_of(g): len(members)
             for g, members in sorted(schedule.cohorts.items())}
    gs = sorted(schedule.cohorts)
    pre_min = min(gs) if gs else 0
    post_min = min(panel.time_count - g for g in gs) if gs else 0
    return DesignFeatures(
        n_treated=len(schedule.treated_units),
        n_control=len(schedule.never_treated),
        timing_class=schedule.timing_class,
        cohort_sizes=sizes,
        pre_periods_min=pre_min,
        post_periods_min=post_min,
        has_missing=panel.has_missing,
        singleton_cohorts=sum(1 for v in sizes.values() if v == 1),
    )


def _viable_set(f: DesignFeatures):
    """The decision rules: treated count × adoption timing × comparison count."""
    if f.timing_class == NO_TREATED:
        raise PanelCauseError("NO_TREATED_UNITS",
                              "no unit ever adopts the policy; nothing to estimate")
    if f.timing_class == STAGGERED:
        if f.n_control == 0:
            return {ITS_MULTI_BASELINE}
        return {GROUP_TIME_DID, IMPUTATION_DID, DEBIASED_AR, STAGGERED_ASCM}
    # single cohort (one treated unit, or several adopting together)
    if f.n_control == 0:
        return {ITS}
    if f.timing_class == SINGLE_TREATED and f.n_control >= 2:
        return {SCM, ASCM, DID_TWFE, EVENT_STUDY, CITS}
    return {DID_TWFE, EVENT_STUDY, CITS}


def _disqualify(method: str, f: DesignFeatures):
    """Reason a method is off the table for these features."""
    staggered = f.timing_class == STAGGERED
    if method == ITS:
        if staggered:
            return ("STAGGERED_INPUT",
                    "adoption is staggered; use the multiple-baseline variant")
        return ("NOT_APPLICABLE",
                "comparison units exist; comparison-based designs identify "
                "the effect under weaker assumptions")
    if method == ITS_MULTI_BASELINE:
        if not staggered:
            return ("NOT_STAGGERED", "only one adoption cohort; use ITS")
        return ("NOT_APPLICABLE",
                "comparison units exist; comparison-based designs identify "
                "the effect under weaker assumptions")
    if method in (SCM, ASCM):
        if f.n_treated != 1:
            return ("TOO_MANY_TREATED",
                    "synthetic control matches exactly one treated unit")
        return ("TOO_FEW_DONORS", "needs at least two donor units")
    if method in (DID_TWFE, EVENT_STUDY, CITS):
        if f.n_control == 0:
            return ("NO_CONTROL", "needs at least one comparison unit")
        return ("STAGGERED_INPUT",
                "staggered adoption with possible effect heterogeneity biases "
                "single-coefficient comparisons; use a cohort-aware estimator")
    # staggered-adoption methods
    if f.n_control == 0:
        return ("NO_CONTROL", "needs never-treated comparison units")
    return ("NOT_STAGGERED",
            "adoption is simultaneous; standard single-cohort designs apply")


def _cautions(method: str, f: DesignFeatures):
    out = []
    if f.has_missing:
        out.append(("MISSING_DATA",
                    "missing outcome cells present; balance the panel or "
                    "expect row drops"))
    if f.pre_periods_min < CAUTION_CONFIG["min_pre_periods"]:
        out.append(("FEW_PRE_PERIODS",
                    f"some cohort has fewer than "
                    f"{CAUTION_CONFIG['min_pre_periods']} pre periods"))
    if (f.singleton_cohorts and
            method in (ITS_MULTI_BASELINE, GROUP_TIME_DID, IMPUTATION_DID,
                       STAGGERED_ASCM)):
        out.append(("SINGLETON_COHORT",
                    f"{f.singleton_cohorts} cohort(s) contain a single unit; "
                    "cohort-level estimates will be noisy"))
    if (f.n_treated <= CAUTION_CONFIG["single_cluster_at"] and
            method in (DID_TWFE, EVENT_STUDY, CITS)):
        out.append(("SINGLE_CLUSTER_INFERENCE",
                    "one treated cluster: cluster-robust standard errors are "
                    "unreliable; prefer permutation-style inference"))
    return tuple(out)


def recommend(features: DesignFeatures) -> MethodRecommendation:
    """Evaluate the rule table; every method id appears exactly once."""
    viable = _viable_set(features)
    methods = {}
    for m in ALL_METHODS:
        by_time, by_cohort = HETEROGENEITY[m]
        if m in viable:
            methods[m] = MethodAssessment(
                m, True, (), ASSUMPTIONS[m], by_time, by_cohort,
                _cautions(m, features))
        else:
            methods[m] = MethodAssessment(
                m, False, (_disqualify(m, features),), ASSUMPTIONS[m],
                by_time, by_cohort, ())
    return MethodRecommendation(features, methods)


def recommend_for_panel(panel: PanelDataset) -> MethodRecommendation:
    return recommend(derive_features(panel))
