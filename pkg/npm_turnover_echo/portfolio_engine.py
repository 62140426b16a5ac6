"""
Portfolio Engine

Univariate and bivariate portfolio sorts with one-month holding periods.

For each holding month h the engine looks at the stocks eligible in month h-1 (price filter, market
equity present), sorts them into groups on the signal panel's row for month h (signals built from
data up to h-1), weights them by market equity at h-1 and records the group's month-h return.
Every series is indexed by holding month.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.exceptions import EchoConfigError, EchoDomainError, EchoNumericalError
from npm_turnover_echo.month_index import MonthIndex, month_label
from npm_turnover_echo.panel_data import Exchange, PanelDataset, eligibility_table
from npm_turnover_echo.signal_builder import SIGNALS, SignalPanel

logger = logging.getLogger(__name__)

CellId = Tuple[Union[int, str], Union[int, str]]
DIFF = 'Diff'


@dataclass(frozen=True)
class SortSpec:
    """
    What to sort on and how. A SortSpec without column_signal is univariate (one column group).
    """
    row_signal: str
    row_groups: int = 10
    column_signal: Optional[str] = None
    column_groups: int = 5
    weighting: str = 'value'
    breakpoints: str = 'all_eligible'
    dependence: str = 'independent'
    price_filter: str = 'formation'
    min_price: float = EchoConfig.MIN_PRICE

    def __post_init__(self):
        for name in (self.row_signal, self.column_signal):
            if name is not None and name not in SIGNALS:
                raise EchoConfigError(f"SORT: '{name}' is not a signal. Choose from {', '.join(SIGNALS)}.")
        if self.row_groups < 2 or (self.column_signal is not None and self.column_groups < 2):
            raise EchoConfigError("SORT: group counts must be at least 2.")
        choices = {'weighting': ('value', 'equal'), 'breakpoints': ('all_eligible', 'NYSE_only'),
                   'dependence': ('independent', 'conditional'), 'price_filter': ('formation', 'history')}
        for attribute, allowed in choices.items():
            if getattr(self, attribute) not in allowed:
                raise EchoConfigError(f"SORT: {attribute} '{getattr(self, attribute)}' is not one of {allowed}.")

    @property
    def bivariate(self) -> bool:
        return self.column_signal is not None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.row_groups, (self.column_groups if self.bivariate else 1)


@dataclass
class PortfolioSeries:
    """
    Monthly returns of one portfolio, indexed by holding month, with the member count and the total
    weight behind each month's return.
    """
    cell: CellId
    returns: pd.Series
    counts: pd.Series
    weights: pd.Series = field(default=None)

    def __post_init__(self):
        if self.weights is None:
            self.weights = pd.Series(np.nan, index=self.returns.index)

    def __len__(self) -> int:
        return len(self.returns)

    @property
    def name(self) -> str:
        return '/'.join(str(part) for part in self.cell)

    def months(self) -> List[int]:
        return [int(m) for m in self.returns.index]


def assign_groups(values: pd.Series, k: int, breakpoint_values: Optional[pd.Series] = None) -> pd.Series:
    """
    Return the group (1 = lowest, k = highest) of every stock with a present value.

    Breakpoints are the 1/k .. (k-1)/k quantiles of breakpoint_values (default: values themselves).
    A value equal to a breakpoint goes to the lower group, so tied stocks always share a group.
    The result is ordered by stock_id.

    :param values: Signal values indexed by stock_id.
    """
    values = values.dropna().sort_index(kind='mergesort')
    universe = values if breakpoint_values is None else breakpoint_values.dropna()
    if len(values) < k or len(universe) < k:
        raise EchoDomainError(f"GROUPS: {min(len(values), len(universe))} stocks cannot fill {k} groups.")
    if universe.nunique() == 1:
        raise EchoDomainError(f"GROUPS: all {len(universe)} signal values are identical.")
    breakpoints = np.quantile(universe.to_numpy(dtype=float), np.arange(1, k) / k)
    groups = np.searchsorted(breakpoints, values.to_numpy(dtype=float), side='left') + 1
    return pd.Series(groups, index=values.index, name='group')


def vw_return(members: Iterable[str], weights: Mapping[str, float], realized: Mapping[str, float]) -> float:
    """
    Return Σ w_i r_i / Σ w_i over the members. Members without a realized return are left out.
    """
    pairs = [(weights[s], realized.get(s, np.nan)) for s in members]
    pairs = [(w, r) for w, r in pairs if not np.isnan(r)]
    if not pairs:
        raise EchoDomainError("PORTFOLIO: no member has a realized return.")
    w, r = np.array(pairs, dtype=float).T
    if (w <= 0).any() or np.isnan(w).any():
        raise EchoDomainError("PORTFOLIO: weights must be positive.")
    return float(np.dot(w, r) / w.sum())


def diff_series(high: PortfolioSeries, low: PortfolioSeries, cell: Optional[CellId] = None) -> PortfolioSeries:
    """
    Return the monthly high-minus-low series on the months both portfolios have.
    """
    months = high.returns.index.intersection(low.returns.index)
    if not len(months):
        raise EchoNumericalError(f"DIFF: {high.name} and {low.name} share no months.")
    if cell is None:
        if high.cell[1] == low.cell[1]:
            cell = (DIFF, high.cell[1])
        elif high.cell[0] == low.cell[0]:
            cell = (high.cell[0], DIFF)
        else:
            cell = (DIFF, DIFF)
    return PortfolioSeries(
        cell,
        high.returns.loc[months] - low.returns.loc[months],
        high.counts.loc[months] + low.counts.loc[months],
        high.weights.loc[months] + low.weights.loc[months],
    )


class SortResult(object):
    """
    The grid of portfolio series produced by run_sort, plus the bookkeeping of the run.

    Cells are addressed by (row group, column group), both counted from 1; univariate sorts have a
    single column 1. `skipped` maps holding months to the reason they were left out and `dropped`
    counts member-months without a realized return.
    """

    def __init__(self, spec: SortSpec, series: Dict[CellId, PortfolioSeries], universe: PortfolioSeries,
                 skipped: Dict[int, str], dropped: int):
        self.spec = spec
        self.series = series
        self.universe = universe
        self.skipped = skipped
        self.dropped = dropped

    @property
    def months(self) -> List[int]:
        return self.universe.months()

    def cell(self, row: int, column: int = 1) -> PortfolioSeries:
        try:
            return self.series[(row, column)]
        except KeyError:
            raise EchoDomainError(f"CELL: ({row}, {column}) is outside the {self.spec.shape} grid.")

    def row_diff(self, row: int) -> PortfolioSeries:
        """
        Highest minus lowest column group within one row group (T10-Diff for row 10).
        """
        return diff_series(self.cell(row, self.spec.shape[1]), self.cell(row, 1))

    def column_diff(self, column: int = 1) -> PortfolioSeries:
        """
        Highest minus lowest row group within one column group; for a univariate sort this is H-L.
        """
        return diff_series(self.cell(self.spec.shape[0], column), self.cell(1, column))

    def corner_diff(self) -> PortfolioSeries:
        return diff_series(self.row_diff(self.spec.shape[0]), self.row_diff(1), (DIFF, DIFF))

    def write_series(self, target: Union[str, Path, TextIO]):
        """
        Write every cell's monthly series (holding month as YYYYMM, decimal return, count, weight).
        """
        frames = []
        for (row, column), item in sorted(self.series.items()):
            frames.append(pd.DataFrame({
                'month': [MonthIndex(m).compact() for m in item.months()], 'row': row, 'column': column,
                'ret': item.returns.to_numpy(), 'count': item.counts.to_numpy(), 'weight': item.weights.to_numpy(),
            }))
        text = pd.concat(frames, ignore_index=True).to_csv(index=False, lineterminator='\n', float_format='%.10g')
        if isinstance(target, (str, Path)):
            Path(target).write_text(text, encoding='utf-8')
        else:
            target.write(text)


@dataclass
class _MonthOutcome:
    month: int
    cells: Dict[CellId, Tuple[float, int, float]]
    universe: Tuple[float, int, float]
    dropped: int
    skipped: Optional[str] = None


def _form_month(spec: SortSpec, month: int, eligible: np.ndarray, row_values: np.ndarray,
                column_values: Optional[np.ndarray], weights: np.ndarray, realized: np.ndarray,
                nyse: np.ndarray, stocks: pd.Index) -> _MonthOutcome:
    usable = eligible & ~np.isnan(row_values)
    if column_values is not None:
        usable &= ~np.isnan(column_values)
    if spec.weighting == 'value':
        usable &= weights > 0
    empty = _MonthOutcome(month, {}, (np.nan, 0, 0.0), 0)
    if not usable.any():
        empty.skipped = 'no eligible stock with signals'
        return empty

    index = stocks[usable]
    breakpoint_mask = nyse[usable] if spec.breakpoints == 'NYSE_only' else None
    rows_k, columns_k = spec.shape

    def groups_of(values: np.ndarray, k: int, within: Optional[np.ndarray] = None) -> pd.Series:
        series = pd.Series(values, index=index)
        if within is not None:
            series = series[within]
        universe = None
        if breakpoint_mask is not None:
            universe = series[breakpoint_mask if within is None else breakpoint_mask[within]]
        return assign_groups(series, k, universe).reindex(series.index)

    try:
        row_groups = groups_of(row_values[usable], rows_k).to_numpy()
        if column_values is None:
            column_groups = np.ones(len(index), dtype=int)
        elif spec.dependence == 'independent':
            column_groups = groups_of(column_values[usable], columns_k).to_numpy()
        else:
            column_groups = np.zeros(len(index), dtype=int)
            for row in range(1, rows_k + 1):
                within = row_groups == row
                column_groups[within] = groups_of(column_values[usable], columns_k, within).to_numpy()
    except EchoDomainError as error:
        empty.skipped = str(error)
        return empty

    w = weights[usable] if spec.weighting == 'value' else np.ones(len(index))
    r = realized[usable]
    held = ~np.isnan(r)
    dropped = int((~held).sum())
    cells = {}
    for row in range(1, rows_k + 1):
        for column in range(1, columns_k + 1):
            members = held & (row_groups == row) & (column_groups == column)
            if not members.any():
                return _MonthOutcome(month, {}, (np.nan, 0, 0.0), dropped,
                                     f"cell ({row}, {column}) has no member with a realized return")
            mass = float(w[members].sum())
            cells[(row, column)] = (float(np.dot(w[members], r[members]) / mass), int(members.sum()), mass)
    total = float(w[held].sum())
    universe = (float(np.dot(w[held], r[held]) / total), int(held.sum()), total)
    return _MonthOutcome(month, cells, universe, dropped)


def run_sort(dataset: PanelDataset, panel: SignalPanel, spec: SortSpec, months: Iterable[int],
             workers: int = 1) -> SortResult:
    """
    Run the sort for each holding month and return the grid of portfolio series.

    A month is skipped, and recorded in SortResult.skipped, when its formation month is outside the
    dataset, groups cannot be formed, or some cell ends up without members.
    :param months: Holding months. The formation (filter and weighting) month is the one before.
    """
    months = sorted(int(m) for m in months)
    if not months:
        raise EchoDomainError("SORT: empty month range.")

    stocks = pd.Index(dataset.stocks())
    all_months = dataset.months()
    eligible = eligibility_table(dataset, spec.min_price, spec.price_filter).reindex(
        index=all_months, columns=stocks, fill_value=False).to_numpy(dtype=bool)
    equity = dataset.wide('market_equity').reindex(columns=stocks).to_numpy(dtype=float)
    returns = dataset.wide('ret').reindex(columns=stocks).to_numpy(dtype=float)
    exchange = dataset.wide('exchange').reindex(columns=stocks)
    row_signal = panel.wide(spec.row_signal).reindex(index=all_months, columns=stocks).to_numpy(dtype=float)
    column_signal = None
    if spec.bivariate:
        column_signal = panel.wide(spec.column_signal).reindex(index=all_months, columns=stocks).to_numpy(dtype=float)
    first = dataset.month_range[0]

    def form(month: int) -> _MonthOutcome:
        if not (dataset.contains_month(month) and dataset.contains_month(month - 1)):
            return _MonthOutcome(month, {}, (np.nan, 0, 0.0), 0, 'outside the dataset')
        at, before = month - first, month - 1 - first
        nyse = (exchange.iloc[before] == Exchange.NYSE.name).to_numpy()
        return _form_month(spec, month, eligible[before], row_signal[at],
                           None if column_signal is None else column_signal[at],
                           equity[before], returns[at], nyse, stocks)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(form, months))
    else:
        outcomes = [form(month) for month in months]

    skipped = {o.month: o.skipped for o in outcomes if o.skipped}
    kept = [o for o in outcomes if not o.skipped]
    if not kept:
        raise EchoNumericalError(f"SORT: no holding month between {month_label(months[0])} and "
                                 f"{month_label(months[-1])} could be formed on {spec.row_signal}.")
    held = [o.month for o in kept]

    def series_of(cell: CellId, values: List[Tuple[float, int, float]]) -> PortfolioSeries:
        r, n, w = zip(*values)
        return PortfolioSeries(cell, pd.Series(r, index=held, dtype=float), pd.Series(n, index=held, dtype=int),
                               pd.Series(w, index=held, dtype=float))

    rows_k, columns_k = spec.shape
    series = {(row, column): series_of((row, column), [o.cells[(row, column)] for o in kept])
              for row in range(1, rows_k + 1) for column in range(1, columns_k + 1)}
    universe = series_of(('ALL', 'ALL'), [o.universe for o in kept])
    dropped = sum(o.dropped for o in outcomes)
    if skipped:
        logger.warning("Sort on %s skipped %d of %d months", spec.row_signal, len(skipped), len(months))
    logger.info("Sorted %s%s: %d months, %d member-months without a realized return", spec.row_signal,
                f" x {spec.column_signal}" if spec.bivariate else '', len(held), dropped)
    return SortResult(spec, series, universe, skipped, dropped)
