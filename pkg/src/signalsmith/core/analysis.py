"""Saturation-headway regression, capacity and capacity adjustment factors.

The headway model is additive in market penetration shares and lane-type
indicators::

    h_adj = h_s + b_cv*CV + b_av*AV + b_cav*CAV + b_exl*D_EXL + b_exr*D_EXR
            (+ b_shtr*D_SHTR + b_shtr_rt*D_SHTR*RT)
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import pandas as pd
import statsmodels.api as sm

from signalsmith.core.contracts import RESULTS_SPEC, Columns, LaneType, validate_schema
from signalsmith.core.errors import SingularDesignError
from signalsmith.core.scenario import Scenario
from signalsmith.core.signal_advisory import SignalPlan

logger = logging.getLogger(__name__)

Z95 = 1.96
SHARED_DROP_P = 0.85

INTERCEPT = "intercept"
REDUCED_TERMS = [INTERCEPT, Columns.CV, Columns.AV, Columns.CAV, Columns.D_EXL, Columns.D_EXR]
SHARED_TERMS = [Columns.D_SHTR, Columns.D_SHTR_RT]
FULL_TERMS = REDUCED_TERMS + SHARED_TERMS

# Published base model: exclusive through lane, 100% HV intercept of 1.95 s.
REFERENCE_COEFFICIENTS: dict[str, float] = {
    INTERCEPT: 1.95,
    Columns.CV: -0.51,
    Columns.AV: 0.56,
    Columns.CAV: -0.91,
    Columns.D_EXL: 0.11,
    Columns.D_EXR: 0.11,
}

REPORT_COLUMNS = ["term", "coefficient", "std_error", "t_stat", "p_value", "lower_95", "upper_95"]


@dataclass(frozen=True)
class HeadwayInputs:
    """Regressors for one prediction."""

    cv: float = 0.0
    av: float = 0.0
    cav: float = 0.0
    d_exl: int = 0
    d_exr: int = 0
    d_shtr: int = 0
    rt: float = 0.0

    def __post_init__(self):
        shares = (self.cv, self.av, self.cav)
        if any(not 0.0 <= s <= 1.0 for s in shares) or sum(shares) > 1.0 + 1e-9:
            raise ValueError(f"Shares must lie in [0, 1] and sum to at most 1, got {shares}")
        flags = (self.d_exl, self.d_exr, self.d_shtr)
        if any(f not in (0, 1) for f in flags) or sum(flags) > 1:
            raise ValueError(f"At most one lane indicator may be set, got {flags}")
        if self.rt < 0:
            raise ValueError("rt must be >= 0")

    @classmethod
    def for_lane(cls, shares: Mapping[str, float], lane_type: Union[LaneType, str], rt: float = 0.0) -> HeadwayInputs:
        lane_type = LaneType(lane_type)
        return cls(
            cv=float(shares.get(Columns.CV, 0.0)),
            av=float(shares.get(Columns.AV, 0.0)),
            cav=float(shares.get(Columns.CAV, 0.0)),
            d_exl=int(lane_type is LaneType.EXCLUSIVE_LEFT),
            d_exr=int(lane_type is LaneType.EXCLUSIVE_RIGHT),
            d_shtr=int(lane_type is LaneType.SHARED_THROUGH_RIGHT),
            rt=rt if lane_type is LaneType.SHARED_THROUGH_RIGHT else 0.0,
        )

    def regressors(self) -> dict[str, float]:
        return {
            INTERCEPT: 1.0,
            Columns.CV: self.cv,
            Columns.AV: self.av,
            Columns.CAV: self.cav,
            Columns.D_EXL: float(self.d_exl),
            Columns.D_EXR: float(self.d_exr),
            Columns.D_SHTR: float(self.d_shtr),
            Columns.D_SHTR_RT: self.d_shtr * self.rt,
        }


@dataclass
class RegressionResult:
    """OLS fit of the headway model with normal-approximation 95% bounds."""

    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    t_stats: dict[str, float]
    p_values: dict[str, float]
    ci95_low: dict[str, float]
    ci95_high: dict[str, float]
    adj_r2: float
    n_obs: int
    reduced: Optional[RegressionResult] = field(default=None, repr=False)

    @property
    def terms(self) -> list[str]:
        return list(self.coefficients)

    @property
    def reported(self) -> RegressionResult:
        """The model to use downstream: the reduced refit when one was made."""
        return self.reduced if self.reduced is not None else self

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "term": self.terms,
                "coefficient": [self.coefficients[t] for t in self.terms],
                "std_error": [self.standard_errors[t] for t in self.terms],
                "t_stat": [self.t_stats[t] for t in self.terms],
                "p_value": [self.p_values[t] for t in self.terms],
                "lower_95": [self.ci95_low[t] for t in self.terms],
                "upper_95": [self.ci95_high[t] for t in self.terms],
            },
            columns=REPORT_COLUMNS,
        )

    def summary(self) -> str:
        """Plain-text table with the fit statistics underneath."""
        table = self.to_frame().set_index("term").to_string(float_format=lambda v: f"{v:.4g}")
        return f"{table}\n\nadjusted R^2 = {self.adj_r2:.4f}, n = {self.n_obs}"


def regression_rows(rows: pd.DataFrame) -> pd.DataFrame:
    """Lane-group rows with a measured headway (intersection rows dropped)."""
    validate_schema(set(rows.columns), RESULTS_SPEC)
    lane_rows = rows[rows[Columns.LANE_TYPE] != LaneType.INTERSECTION.value]
    return lane_rows.dropna(subset=[Columns.H_S]).reset_index(drop=True)


def design_matrix(rows: pd.DataFrame, terms: list[str]) -> pd.DataFrame:
    columns = {
        INTERCEPT: np.ones(len(rows)),
        Columns.CV: rows[Columns.CV].to_numpy(dtype=float),
        Columns.AV: rows[Columns.AV].to_numpy(dtype=float),
        Columns.CAV: rows[Columns.CAV].to_numpy(dtype=float),
        Columns.D_EXL: rows[Columns.D_EXL].to_numpy(dtype=float),
        Columns.D_EXR: rows[Columns.D_EXR].to_numpy(dtype=float),
        Columns.D_SHTR: rows[Columns.D_SHTR].to_numpy(dtype=float),
        Columns.D_SHTR_RT: (rows[Columns.D_SHTR] * rows[Columns.RT]).to_numpy(dtype=float),
    }
    return pd.DataFrame({term: columns[term] for term in terms})


def _ols(y: np.ndarray, X: pd.DataFrame) -> RegressionResult:
    n, k = X.shape
    if n <= k:
        raise SingularDesignError(f"Need more observations than terms: n={n}, terms={k}")
    rank = np.linalg.matrix_rank(X.to_numpy())
    if rank < k:
        raise SingularDesignError(
            f"Design matrix is rank deficient (rank {rank} < {k} terms: {', '.join(X.columns)})"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        fit = sm.OLS(y, X).fit()
        params = fit.params
        bse = fit.bse
        tvalues = params / bse
    terms = list(X.columns)
    return RegressionResult(
        coefficients={t: float(params[t]) for t in terms},
        standard_errors={t: float(bse[t]) for t in terms},
        t_stats={t: float(tvalues[t]) for t in terms},
        p_values={t: float(fit.pvalues[t]) for t in terms},
        ci95_low={t: float(params[t] - Z95 * bse[t]) for t in terms},
        ci95_high={t: float(params[t] + Z95 * bse[t]) for t in terms},
        adj_r2=float(fit.rsquared_adj),
        n_obs=int(n),
    )


def fit_headway_model(rows: pd.DataFrame, include_shared_terms: bool = True) -> RegressionResult:
    """Ordinary least squares of h_s on shares and lane indicators.

    With ``include_shared_terms`` the shared through-right indicator and its
    right-turn interaction are fitted too; if the indicator's p-value exceeds
    0.85 a refit without the shared terms is attached as ``reduced``.

    Raises:
        MissingColumnsError: the dataset lacks a required column
        SingularDesignError: rank-deficient design or too few observations
    """
    data = regression_rows(rows)
    y = data[Columns.H_S].to_numpy(dtype=float)
    terms = FULL_TERMS if include_shared_terms else REDUCED_TERMS
    result = _ols(y, design_matrix(data, terms))
    if include_shared_terms and result.p_values[Columns.D_SHTR] > SHARED_DROP_P:
        logger.warning(
            "Shared-lane indicator p=%.3f > %.2f, refitting without shared terms",
            result.p_values[Columns.D_SHTR],
            SHARED_DROP_P,
        )
        result.reduced = _ols(y, design_matrix(data, REDUCED_TERMS))
    return result


CoefficientsLike = Union[RegressionResult, Mapping[str, float]]


def _coefficients(coeffs: CoefficientsLike) -> Mapping[str, float]:
    return coeffs.coefficients if isinstance(coeffs, RegressionResult) else coeffs


def predict_headway(coeffs: CoefficientsLike, inputs: HeadwayInputs) -> float:
    """Adjusted saturation headway; terms missing from ``coeffs`` contribute nothing."""
    coefficients = _coefficients(coeffs)
    return float(sum(coefficients.get(term, 0.0) * value for term, value in inputs.regressors().items()))


def capacity(h: float, g: float, C: float) -> float:
    """Lane capacity in veh/h: saturation flow 3600/h scaled by g/C."""
    if h <= 0:
        raise ValueError(f"Saturation headway must be > 0, got {h}")
    if not 0 < g <= C:
        raise ValueError(f"Effective green must satisfy 0 < g <= C, got g={g}, C={C}")
    return 3600.0 / h * (g / C)


def caf(coeffs: CoefficientsLike, inputs: HeadwayInputs) -> float:
    """Capacity adjustment factor h_s / h_adj (timing unchanged)."""
    h_adj = predict_headway(coeffs, inputs)
    if h_adj <= 0:
        raise ValueError(f"Predicted headway must be > 0, got {h_adj:.4g}")
    return _coefficients(coeffs)[INTERCEPT] / h_adj


def scenario_grid(step: float = 0.2) -> list[dict[str, float]]:
    """All share combinations on a ``step`` lattice, HV taking the remainder.

    Rows are ordered by CV, then AV, then CAV.
    """
    if step <= 0 or step > 1:
        raise ValueError(f"step must be in (0, 1], got {step}")
    levels = round(1.0 / step)
    if not np.isclose(levels * step, 1.0):
        raise ValueError(f"step must divide 1 evenly, got {step}")
    grid = []
    for cv in range(levels + 1):
        for av in range(levels + 1 - cv):
            for cav in range(levels + 1 - cv - av):
                hv = levels - cv - av - cav
                grid.append(
                    {
                        Columns.HV: hv / levels,
                        Columns.CV: cv / levels,
                        Columns.AV: av / levels,
                        Columns.CAV: cav / levels,
                    }
                )
    return grid


def scenario_manifest(step: float = 0.2) -> pd.DataFrame:
    """``scenario_grid`` with a stable scenario_id per row (S00, S01, ...)."""
    grid = scenario_grid(step)
    width = max(2, len(str(len(grid) - 1)))
    manifest = pd.DataFrame(grid, columns=[Columns.HV, Columns.CV, Columns.AV, Columns.CAV])
    manifest.insert(0, Columns.SCENARIO_ID, [f"S{i:0{width}d}" for i in range(len(grid))])
    return manifest


_QUANTITIES = {
    "headway": predict_headway,
    "caf": caf,
}


def grid_export(
    coeffs: CoefficientsLike,
    hv_level: float,
    quantity: str = "headway",
    step: float = 0.2,
    lane_type: Union[LaneType, str] = LaneType.EXCLUSIVE_THROUGH,
) -> pd.DataFrame:
    """Heatmap grid at a fixed HV share: AV on rows, CAV on columns, CV as remainder.

    Cells where CV would be negative are NaN.
    """
    if quantity not in _QUANTITIES:
        raise ValueError(f"quantity must be one of {sorted(_QUANTITIES)}, got {quantity!r}")
    levels = round(1.0 / step)
    hv_units = round(hv_level * levels)
    if not np.isclose(hv_units / levels, hv_level) or not 0 <= hv_units <= levels:
        raise ValueError(f"hv_level must be a multiple of {step} in [0, 1], got {hv_level}")
    evaluate = _QUANTITIES[quantity]
    axis = [i / levels for i in range(levels + 1)]
    values = np.full((len(axis), len(axis)), np.nan)
    for i in range(levels + 1):
        for j in range(levels + 1):
            cv_units = levels - hv_units - i - j
            if cv_units < 0:
                continue
            shares = {Columns.CV: cv_units / levels, Columns.AV: i / levels, Columns.CAV: j / levels}
            values[i, j] = evaluate(coeffs, HeadwayInputs.for_lane(shares, lane_type))
    grid = pd.DataFrame(values, index=pd.Index(axis, name=Columns.AV), columns=pd.Index(axis, name=Columns.CAV))
    return grid


_SHARE_COLUMNS = [Columns.HV, Columns.CV, Columns.AV, Columns.CAV]


def _attach_queue_counts(table: pd.DataFrame, results: Optional[pd.DataFrame], key: str) -> pd.DataFrame:
    """Add ``n_queues``: valid queues measured for the row's shares and ``key``, summed over runs."""
    if results is None or Columns.N_QUEUES not in results.columns:
        return table.assign(**{Columns.N_QUEUES: pd.array([pd.NA] * len(table), dtype="Int64")})
    lane_rows = results[results[Columns.LANE_TYPE] != LaneType.INTERSECTION.value]
    shares = [c for c in _SHARE_COLUMNS if c in lane_rows.columns]
    keys = shares + [key]
    counts = (
        lane_rows.assign(**{c: lane_rows[c].astype(float).round(6) for c in shares})
        .groupby(keys)[Columns.N_QUEUES]
        .sum()
        .rename(Columns.N_QUEUES)
        .reset_index()
    )
    rounded = table.assign(**{c: table[c].astype(float).round(6) for c in shares})
    merged = rounded[keys].merge(counts, on=keys, how="left")
    return table.assign(**{Columns.N_QUEUES: merged[Columns.N_QUEUES].fillna(0).astype(int).to_numpy()})


def caf_table(
    coeffs: CoefficientsLike, step: float = 0.2, rt: float = 0.0, results: Optional[pd.DataFrame] = None
) -> pd.DataFrame:
    """Predicted headway and CAF for every share combination and lane type.

    With sweep ``results`` each row also carries the number of valid queues
    measured for that share mix and lane type.
    """
    lane_types = [LaneType.EXCLUSIVE_THROUGH, LaneType.EXCLUSIVE_LEFT, LaneType.EXCLUSIVE_RIGHT]
    if Columns.D_SHTR in _coefficients(coeffs):
        lane_types.append(LaneType.SHARED_THROUGH_RIGHT)
    rows = []
    for shares in scenario_manifest(step).to_dict("records"):
        for lane_type in lane_types:
            inputs = HeadwayInputs.for_lane(shares, lane_type, rt=rt)
            rows.append(
                {
                    **shares,
                    Columns.LANE_TYPE: lane_type.value,
                    Columns.H_S: predict_headway(coeffs, inputs),
                    "caf": caf(coeffs, inputs),
                }
            )
    return _attach_queue_counts(pd.DataFrame(rows), results, Columns.LANE_TYPE)


LOST_TIME = 4.0  # s per phase: start-up plus clearance


def effective_green(plan: SignalPlan, group: str, lost_time: float = LOST_TIME) -> float:
    """Displayed green plus amber minus lost time, floored at one second."""
    phase = plan.phase_of(group)
    return max(phase.green + phase.amber - lost_time, 1.0)


CAPACITY_COLUMNS = [
    Columns.SCENARIO_ID,
    Columns.HV,
    Columns.CV,
    Columns.AV,
    Columns.CAV,
    Columns.LANE_GROUP,
    Columns.LANE_TYPE,
    "lanes",
    "effective_green",
    "cycle_length",
    "h_base",
    "h_adj",
    "capacity_base",
    "capacity_adj",
    "caf",
    Columns.N_QUEUES,
]


def capacity_table(
    coeffs: CoefficientsLike, scenario: Scenario, step: float = 0.2, results: Optional[pd.DataFrame] = None
) -> pd.DataFrame:
    """Base and adjusted capacity of every lane group for every share combination.

    Capacities are per lane group (lane capacity times lane count) under the
    scenario's signal timing; the base headway is the fitted intercept.
    ``n_queues`` counts the valid queues behind each row when sweep
    ``results`` are given.
    """
    h_base = float(_coefficients(coeffs)[INTERCEPT])
    C = scenario.plan.cycle_length
    rows = []
    for shares in scenario_manifest(step).to_dict("records"):
        for group in scenario.lane_groups():
            rt = scenario.right_turn_percent(group.approach)
            inputs = HeadwayInputs.for_lane(shares, group.lane_type, rt=rt)
            h_adj = predict_headway(coeffs, inputs)
            g = effective_green(scenario.plan, group.group_id)
            lanes = len(group.lane_ids)
            rows.append(
                {
                    **shares,
                    Columns.LANE_GROUP: group.group_id,
                    Columns.LANE_TYPE: group.lane_type.value,
                    "lanes": lanes,
                    "effective_green": g,
                    "cycle_length": C,
                    "h_base": h_base,
                    "h_adj": h_adj,
                    "capacity_base": lanes * capacity(h_base, g, C),
                    "capacity_adj": lanes * capacity(h_adj, g, C),
                    "caf": caf(coeffs, inputs),
                }
            )
    table = _attach_queue_counts(pd.DataFrame(rows), results, Columns.LANE_GROUP)
    return table[CAPACITY_COLUMNS]
