"""
Econometrics

Least squares with Newey-West (Bartlett kernel) standard errors, mean-return tests, factor alphas,
spanning regressions and Fama-MacBeth cross-sectional regressions.

All coefficients are kept in decimal units. Conversion to percent for display happens in one place,
RegressionResult.percent / FMBResult.percent, which multiply by EchoConfig.PERCENT.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
import statsmodels.api as sm

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.exceptions import EchoDataError, EchoNumericalError
from npm_turnover_echo.month_index import month_label
from npm_turnover_echo.panel_data import FactorTable, PanelDataset, eligibility_table
from npm_turnover_echo.portfolio_engine import PortfolioSeries
from npm_turnover_echo.signal_builder import SIGNALS, SignalPanel

logger = logging.getLogger(__name__)

Lag = Union[int, str, None]
CONSTANT = 'const'

# Residuals smaller than this share of the dependent variable's norm count as an exact fit.
EXACT_FIT_TOLERANCE = 1e-10


@dataclass
class RegressionResult:
    """
    Coefficients, standard errors and t-statistics of one regression.

    `lag` is None for classical (homoskedastic) errors and the Newey-West lag otherwise. When the fit is
    exact the standard errors vanish; `degenerate` is then set and the t-statistics are NaN.
    """
    params: pd.Series
    bse: pd.Series
    tvalues: pd.Series
    rsquared: float
    rsquared_adj: float
    nobs: int
    lag: Optional[int]
    degenerate: bool
    residuals: np.ndarray = field(repr=False)
    months: Optional[List[int]] = field(default=None, repr=False)
    _model: object = field(default=None, repr=False)

    @property
    def names(self) -> List[str]:
        return list(self.params.index)

    @property
    def has_intercept(self) -> bool:
        return CONSTANT in self.params.index

    @property
    def intercept(self) -> float:
        return float(self.params[CONSTANT]) if self.has_intercept else math.nan

    def percent(self, name: str = CONSTANT) -> float:
        return EchoConfig.PERCENT * float(self.params[name])


class MeanTest(NamedTuple):
    mean: float
    tstat: float
    lag: int
    nobs: int


@dataclass
class FMBResult:
    """
    Fama-MacBeth premiums: time-series means of the monthly cross-sectional slopes, with Newey-West
    t-statistics of those means. `slopes` keeps the monthly series (months as index).
    """
    premiums: pd.Series
    tvalues: pd.Series
    slopes: pd.DataFrame
    average_rsquared_adj: float
    average_n: float
    lag: int
    skipped: Dict[int, str]
    degenerate: pd.Series

    @property
    def months(self) -> List[int]:
        return [int(m) for m in self.slopes.index]

    def percent(self, name: str) -> float:
        return EchoConfig.PERCENT * float(self.premiums[name])


def auto_lag(nobs: int) -> int:
    """
    Return the Newey-West rule-of-thumb lag floor(4 (T/100)^(2/9)).
    """
    return int(math.floor(4 * (nobs / 100.0) ** (2.0 / 9.0)))


def resolved_lag(lag: Lag, nobs: int) -> int:
    """
    Return the lag to use for a sample of nobs: 'auto' (or None) applies auto_lag.
    """
    if lag is None or lag == 'auto':
        lag = auto_lag(nobs)
    if isinstance(lag, bool) or not isinstance(lag, (int, np.integer)) or lag < 0:
        raise EchoNumericalError(f"LAG: {lag!r} is not 'auto' or a non-negative integer.")
    if lag >= nobs:
        raise EchoNumericalError(f"LAG: {lag} is not below the sample size {nobs}.")
    return int(lag)


def winsorize(values: Union[pd.Series, pd.DataFrame], lower: float = 0.01,
              upper: float = 0.99) -> Union[pd.Series, pd.DataFrame]:
    """
    Clip each column at its lower and upper quantiles.
    """
    return values.clip(lower=values.quantile(lower), upper=values.quantile(upper), axis=1 if values.ndim > 1 else None)


def _design(X: Union[pd.DataFrame, pd.Series, np.ndarray, None], nobs: int, intercept: bool) -> pd.DataFrame:
    if X is None:
        exog = pd.DataFrame(index=range(nobs))
    elif isinstance(X, pd.Series):
        exog = X.to_frame(name=X.name if X.name is not None else 'x1')
    elif isinstance(X, pd.DataFrame):
        exog = X.copy()
    else:
        array = np.asarray(X, dtype=float)
        array = array.reshape(len(array), -1)
        exog = pd.DataFrame(array, columns=[f"x{i + 1}" for i in range(array.shape[1])])
    if len(exog) != nobs:
        raise EchoDataError(f"REGRESSION: {nobs} observations but {len(exog)} regressor rows.")
    exog = exog.reset_index(drop=True).astype(float)
    if intercept:
        exog.insert(0, CONSTANT, 1.0)
    return exog


def _result(fitted, nobs: int, lag: Optional[int], endog: np.ndarray, months: Optional[List[int]]) -> RegressionResult:
    residuals = np.asarray(fitted.resid, dtype=float)
    scale = max(float(np.linalg.norm(endog)), np.finfo(float).tiny)
    degenerate = float(np.linalg.norm(residuals)) <= EXACT_FIT_TOLERANCE * scale
    params = pd.Series(np.asarray(fitted.params, dtype=float), index=fitted.model.exog_names)
    if degenerate:
        bse = pd.Series(0.0, index=params.index)
        tvalues = pd.Series(np.nan, index=params.index)
    else:
        bse = pd.Series(np.asarray(fitted.bse, dtype=float), index=params.index)
        tvalues = params / bse
    rsquared = 1.0 if degenerate else float(fitted.rsquared)
    rsquared_adj = 1.0 if degenerate else float(fitted.rsquared_adj)
    return RegressionResult(params, bse, tvalues, rsquared, rsquared_adj, nobs, lag, degenerate,
                            residuals, months, fitted.model)


def ols(y: Union[Sequence[float], pd.Series], X: Union[pd.DataFrame, pd.Series, np.ndarray, None] = None,
        intercept: bool = True) -> RegressionResult:
    """
    Fit y on X by ordinary least squares with classical standard errors.

    :param X: Regressors, one column each; None for an intercept-only model.
    """
    months = [int(m) for m in y.index] if isinstance(y, pd.Series) else None
    endog = np.asarray(y, dtype=float)
    exog = _design(X, len(endog), intercept)
    columns = exog.shape[1]
    if columns == 0:
        raise EchoDataError("REGRESSION: no regressors and no intercept.")
    if not (np.isfinite(endog).all() and np.isfinite(exog.to_numpy()).all()):
        raise EchoDataError("REGRESSION: missing or non-finite values in the regression data.")
    if len(endog) < columns + 2:
        raise EchoNumericalError(f"REGRESSION: {len(endog)} observations for {columns} coefficients.")
    if np.linalg.matrix_rank(exog.to_numpy()) < columns:
        raise EchoNumericalError(f"REGRESSION: design matrix of {list(exog.columns)} is rank deficient.")
    model = sm.OLS(endog, exog)
    return _result(model.fit(), len(endog), None, endog, months)


def newey_west(result: RegressionResult, lag: Lag = 'auto') -> RegressionResult:
    """
    Return the regression with Newey-West standard errors and t-statistics.

    The covariance is (X'X)^-1 S (X'X)^-1 with S = Σ_l w_l Σ_t e_t e_(t-l) (x_t x_(t-l)' + x_(t-l) x_t')
    (the l = 0 term counted once) and Bartlett weights w_l = 1 - l/(L+1); no small-sample correction.
    Lag 0 gives White's heteroskedasticity-robust errors.
    """
    lag = resolved_lag(lag, result.nobs)
    fitted = result._model.fit(cov_type='HAC', cov_kwds={'maxlags': lag, 'use_correction': False})
    return _result(fitted, result.nobs, lag, np.asarray(result._model.endog), result.months)


def _series_values(series: Union[PortfolioSeries, pd.Series]) -> pd.Series:
    values = series.returns if isinstance(series, PortfolioSeries) else series
    return values.dropna().sort_index()


def _time_series_regression(y: pd.Series, X: Optional[pd.DataFrame], lag: Lag) -> RegressionResult:
    return newey_west(ols(y, X if X is not None and X.shape[1] else None, intercept=True), lag)


def mean_return_test(series: Union[PortfolioSeries, pd.Series], lag: Lag = 'auto',
                     min_months: int = EchoConfig.MIN_MEAN_TEST_MONTHS) -> MeanTest:
    """
    Return the mean (in percent) of a monthly return series and its Newey-West t-statistic, from a
    regression of the series on a constant. A constant series has an undefined (NaN) t-statistic.
    """
    y = _series_values(series)
    if len(y) < min_months:
        raise EchoNumericalError(f"MEAN TEST: {len(y)} months is shorter than the minimum of {min_months}.")
    result = _time_series_regression(y, None, lag)
    if result.degenerate:
        warnings.warn("MEAN TEST: series has no variation; t-statistic is undefined.", UserWarning)
    return MeanTest(result.percent(CONSTANT), float(result.tvalues[CONSTANT]), result.lag, result.nobs)


def factor_alpha(series: Union[PortfolioSeries, pd.Series], factors: Optional[FactorTable],
                 factor_names: Sequence[str], lag: Lag = 'auto') -> RegressionResult:
    """
    Regress a portfolio's returns on the chosen factors; the intercept is the alpha.
    Every month of the series must be present in the factor table.
    """
    y = _series_values(series)
    factor_names = list(factor_names)
    X = None
    if factor_names:
        if factors is None:
            raise EchoDataError(f"FACTORS: {factor_names} requested but no factor table was supplied.")
        X = factors.require(factor_names, y.index)
    return _time_series_regression(y, X, lag)


def spanning_regression(dependent: Union[PortfolioSeries, pd.Series], spanning: Sequence[PortfolioSeries],
                        ff3: bool = False, factors: Optional[FactorTable] = None,
                        lag: Lag = 'auto', names: Optional[Sequence[str]] = None) -> RegressionResult:
    """
    Regress one portfolio on others (plus MKT, SMB and HML when ff3 is set) over the months they share.
    The intercept is the part of the dependent premium the spanning portfolios do not explain.

    :param names: Regressor names for the spanning portfolios (default: their cell names).
    """
    y = _series_values(dependent)
    if names is not None and len(names) != len(spanning):
        raise EchoDataError(f"SPANNING: {len(names)} names for {len(spanning)} spanning portfolios.")
    columns = {}
    for position, item in enumerate(spanning):
        name = names[position] if names is not None else item.name
        name = name if name not in columns else f"{name}#{position + 1}"
        columns[name] = _series_values(item)
    X = pd.DataFrame(columns).dropna() if columns else None
    months = y.index if X is None else y.index.intersection(X.index)
    if not len(months):
        raise EchoDataError("SPANNING: the dependent and spanning series share no months.")
    y = y.loc[months]
    X = None if X is None else X.loc[months]
    if ff3:
        if factors is None:
            raise EchoDataError("FACTORS: FF3 control requested but no factor table was supplied.")
        ff = factors.require(['MKT', 'SMB', 'HML'], months)
        X = ff if X is None else X.join(ff)
    return _time_series_regression(y, X, lag)


def fama_macbeth(dataset: PanelDataset, panel: SignalPanel, regressors: Sequence[str], intercept: bool = True,
                 months: Optional[Sequence[int]] = None, lag: Lag = 'auto', *,
                 winsorize_regressors: bool = False, price_filter: str = 'formation',
                 min_price: float = EchoConfig.MIN_PRICE, workers: int = 1) -> FMBResult:
    """
    Run a cross-sectional regression of month-t returns on the signal panel's month-t row in every month,
    then average the slopes over time.

    A month needs at least len(regressors) + 5 eligible stocks with every regressor present and a full
    rank design; other months are skipped and reported. Eligibility is judged in month t-1 as in the sorts.
    """
    regressors = list(regressors)
    unknown = [name for name in regressors if name not in SIGNALS]
    if unknown or not regressors:
        raise EchoDataError(f"FAMA-MACBETH: invalid regressor list {regressors}.")
    months = sorted(int(m) for m in (months if months is not None else panel.months()))
    eligible = eligibility_table(dataset, min_price, price_filter)
    returns = dataset.wide('ret')
    by_month = {int(month): rows.set_index('stock_id')[regressors] for month, rows in panel.frame.groupby('month')}
    minimum = len(regressors) + EchoConfig.FMB_EXTRA_STOCKS

    def cross_section(month: int):
        if not (dataset.contains_month(month) and dataset.contains_month(month - 1)):
            return month, None, 'outside the dataset'
        if month not in by_month:
            return month, None, 'no signals'
        rows = by_month[month]
        ok = eligible.loc[month - 1].reindex(rows.index, fill_value=False).to_numpy(dtype=bool)
        frame = rows[ok].assign(ret=returns.loc[month].reindex(rows.index)[ok]).dropna()
        if len(frame) < minimum:
            return month, None, f"{len(frame)} stocks for {len(regressors)} regressors"
        X = frame[regressors]
        if winsorize_regressors:
            X = winsorize(X)
        try:
            fitted = ols(frame['ret'], X, intercept=intercept)
        except EchoNumericalError as error:
            return month, None, str(error)
        return month, (fitted.params, fitted.rsquared_adj, len(frame)), None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(cross_section, months))
    else:
        outcomes = [cross_section(month) for month in months]

    skipped = {month: reason for month, fit, reason in outcomes if fit is None}
    fits = [(month, fit) for month, fit, reason in outcomes if fit is not None]
    if not fits:
        raise EchoNumericalError(f"FAMA-MACBETH: none of {len(months)} months had a feasible cross-section.")
    if skipped:
        logger.warning("Fama-MacBeth skipped %d of %d months, first %s", len(skipped), len(months),
                       month_label(min(skipped)))

    slopes = pd.DataFrame([fit[0] for _, fit in fits], index=[month for month, _ in fits])
    premiums = slopes.mean()
    used_lag = 0
    if len(slopes) > 1:
        if isinstance(lag, (int, np.integer)) and not isinstance(lag, bool) and lag >= len(slopes):
            warnings.warn(f"LAG: {lag} is not below the {len(slopes)} usable months; using {len(slopes) - 1}.",
                          category=UserWarning, stacklevel=2)
            lag = len(slopes) - 1
        used_lag = resolved_lag(lag, len(slopes))
    tvalues = pd.Series(np.nan, index=slopes.columns)
    degenerate = pd.Series(True, index=slopes.columns)
    if len(slopes) >= 3:
        for name in slopes.columns:
            result = newey_west(ols(slopes[name], None), used_lag)
            tvalues[name] = result.tvalues[CONSTANT]
            degenerate[name] = result.degenerate
    logger.info("Fama-MacBeth on %s: %d months, average n %.1f, lag %d", regressors, len(slopes),
                np.mean([fit[2] for _, fit in fits]), used_lag)
    return FMBResult(premiums, tvalues, slopes,
                     float(np.mean([fit[1] for _, fit in fits])),
                     float(np.mean([fit[2] for _, fit in fits])),
                     used_lag, skipped, degenerate)
