"""
Signal Builder

Builds the sort and regression variables for every (stock, month) pair. A row of the signal panel is
keyed by the month t whose return the signals are meant to explain, and every signal uses data up to
month t - 1 only:

    r_6_2       compound return over months t-6 .. t-2
    r_12_7      compound return over months t-12 .. t-7
    r_1_0       the month t-1 return
    turn_aveS   mean of the scale-S turnover component over months t-3 .. t-1
    turn_all    mean of (undecomposed) turnover over months t-3 .. t-1
    log_me      ln of market equity at t-1
    log_bm      ln of the latest book-to-market known at t-1 (non-positive ratios are absent)

A signal is NaN, never zero, when any month it needs is missing.
"""

import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Union

import numpy as np
import pandas as pd

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.exceptions import EchoDataError, EchoDomainError
from npm_turnover_echo.month_index import MonthIndex
from npm_turnover_echo.panel_data import PanelDataset
from npm_turnover_echo.wavelet_engine import PanelDecomposition, ScaleDecomposition, verified_scale

logger = logging.getLogger(__name__)

# Book-to-market is refreshed yearly; an older value is treated as unknown.
BOOK_TO_MARKET_STALENESS = 11


def turn_ave_name(scale: int) -> str:
    return f"turn_ave{verified_scale(scale)}"


RETURN_SIGNALS = ['r_6_2', 'r_12_7', 'r_1_0']
TURNOVER_SIGNALS = [f"turn_ave{scale}" for scale in range(EchoConfig.SCALE_COUNT)] + ['turn_all']
CONTROL_SIGNALS = ['log_me', 'log_bm']
SIGNALS = RETURN_SIGNALS + TURNOVER_SIGNALS + CONTROL_SIGNALS

# Display labels of the correlation table.
SIGNAL_LABELS = dict({f"turn_ave{scale}": f"Turn_AVE_{scale}" for scale in range(EchoConfig.SCALE_COUNT)},
                     r_6_2='r_6_2', r_12_7='r_12_7', r_1_0='r_1_0', turn_all='Turn_ALL',
                     log_me='log(ME)', log_bm='log(BM)')


def window_bounds(m: int, n: int):
    """
    Return the (first, last) lags of the "last m months to last n months" window.
    n = 0 is read as ending at lag 1, so r_1_0 is the single most recent month.
    """
    if not (isinstance(m, int) and isinstance(n, int)) or n < 0 or m < max(n, 1):
        raise EchoDomainError(f"WINDOW: r_{m},{n} needs m >= n >= 0 and m >= 1.")
    return m, max(n, 1)


def cumulative_return(returns: Union[pd.Series, Mapping[int, float]], formation: int, m: int, n: int) -> float:
    """
    Return the compound return of months formation-m .. formation-n, or NaN if any of those months is missing.

    :param returns: One stock's monthly returns keyed by month index.
    """
    first, last = window_bounds(m, n)
    growth = 1.0
    for month in range(formation - first, formation - last + 1):
        value = returns.get(month, math.nan)
        if value is None or np.isnan(value):
            return math.nan
        growth *= 1.0 + value
    return growth - 1.0


def avg_cyclic_turnover(decomp: ScaleDecomposition, scale: int,
                        formation: int, months: int = EchoConfig.TURNOVER_AVERAGE_MONTHS) -> float:
    """
    Return the mean of the scale component over the `months` months before formation,
    or NaN if any of them is outside the decomposed span.
    """
    values = [decomp.value(scale, formation - lag) for lag in range(1, months + 1)]
    if any(np.isnan(values)):
        return math.nan
    return float(np.mean(values))


def _wide_cumulative_return(returns: pd.DataFrame, m: int, n: int) -> pd.DataFrame:
    first, last = window_bounds(m, n)
    growth = 1.0 + returns.shift(last)
    for lag in range(last + 1, first + 1):
        growth = growth * (1.0 + returns.shift(lag))
    return growth - 1.0


def _wide_trailing_mean(values: pd.DataFrame, months: int) -> pd.DataFrame:
    total = values.shift(1)
    for lag in range(2, months + 1):
        total = total + values.shift(lag)
    return total / months


def _turnover_averages(decomposition: PanelDecomposition, scale: int, months: List[int],
                       stocks: List[str], window: int) -> pd.DataFrame:
    """
    Return the months x stocks table of turn_ave at one scale. Averages never straddle two segments.
    """
    table = np.full((len(months), len(stocks)), np.nan)
    columns = {stock_id: position for position, stock_id in enumerate(stocks)}
    first_month, last_month = months[0], months[-1]
    for decomp in decomposition:
        component = decomp.component(scale)
        if len(component) < window or decomp.stock_id not in columns:
            continue
        means = np.convolve(component, np.ones(window) / window, mode='valid')
        # means[i] averages span months f+i .. f+i+window-1 and serves month f+i+window.
        targets = np.arange(len(means)) + decomp.month_span[0] + window
        keep = (targets >= first_month) & (targets <= last_month)
        table[targets[keep] - first_month, columns[decomp.stock_id]] = means[keep]
    return pd.DataFrame(table, index=months, columns=stocks)


class SignalPanel(object):
    """
    The SignalPanel class holds one row per (stock_id, month) with the signal columns listed in SIGNALS.
    Rows are ordered by (month, stock_id). The panel is not modified after construction.
    """

    def __init__(self, frame: pd.DataFrame):
        missing = [name for name in ['stock_id', 'month'] + SIGNALS if name not in frame.columns]
        if missing:
            raise EchoDataError(f"SIGNALS: missing column(s) {', '.join(missing)}.")
        self._frame = frame[['stock_id', 'month'] + SIGNALS].sort_values(
            ['month', 'stock_id'], kind='mergesort').reset_index(drop=True)
        self._wide: Dict[str, pd.DataFrame] = {}

    def __len__(self) -> int:
        return len(self._frame)

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    def months(self) -> List[int]:
        return sorted(int(m) for m in self._frame['month'].unique())

    def at_month(self, month: int) -> pd.DataFrame:
        """
        Return the signals of one month indexed by stock_id.
        """
        return self._frame[self._frame['month'] == month].set_index('stock_id')

    def wide(self, signal: str) -> pd.DataFrame:
        """
        Return one signal as a months x stocks table.
        """
        if signal not in SIGNALS:
            raise EchoDomainError(f"SIGNAL: '{signal}' is not one of {', '.join(SIGNALS)}.")
        if signal not in self._wide:
            self._wide[signal] = self._frame.pivot(index='month', columns='stock_id', values=signal)
        return self._wide[signal].copy()

    def write(self, target: Union[str, Path, TextIO]):
        """
        Write the panel as comma-delimited text for audit, months as YYYYMM.
        """
        out = self.frame
        out['month'] = [MonthIndex(int(m)).compact() for m in out['month']]
        text = out.to_csv(index=False, na_rep='', lineterminator='\n', float_format='%.10g')
        if isinstance(target, (str, Path)):
            Path(target).write_text(text, encoding='utf-8')
        else:
            target.write(text)


def build_signal_panel(dataset: PanelDataset, decomposition: Optional[PanelDecomposition] = None, *,
                       average_months: int = EchoConfig.TURNOVER_AVERAGE_MONTHS) -> SignalPanel:
    """
    Build every signal for every stock and month of the dataset.

    :param decomposition: Turnover decompositions from wavelet_engine.decompose_panel. Without one the
    turn_ave columns are absent (NaN) and only return, turn_all and control signals are populated.
    """
    months = dataset.months()
    stocks = dataset.stocks()
    returns = dataset.wide('ret')
    turnover = dataset.wide('turnover')
    market_equity = dataset.wide('market_equity')
    book_to_market = dataset.wide('book_to_market').ffill(limit=BOOK_TO_MARKET_STALENESS)

    tables = {
        'r_6_2': _wide_cumulative_return(returns, 6, 2),
        'r_12_7': _wide_cumulative_return(returns, 12, 7),
        'r_1_0': _wide_cumulative_return(returns, 1, 0),
        'turn_all': _wide_trailing_mean(turnover, average_months),
        'log_me': np.log(market_equity.where(market_equity > 0)).shift(1),
        'log_bm': np.log(book_to_market.where(book_to_market > 0)).shift(1),
    }
    for scale in range(EchoConfig.SCALE_COUNT):
        if decomposition is None:
            tables[turn_ave_name(scale)] = pd.DataFrame(np.nan, index=months, columns=stocks)
        else:
            tables[turn_ave_name(scale)] = _turnover_averages(decomposition, scale, months, stocks, average_months)

    long = {
        'stock_id': np.tile(np.asarray(stocks, dtype=object), len(months)),
        'month': np.repeat(np.asarray(months, dtype=np.int64), len(stocks)),
    }
    for name in SIGNALS:
        long[name] = tables[name].reindex(index=months, columns=stocks).to_numpy(dtype=float).ravel()
    frame = pd.DataFrame(long)
    frame = frame[frame[SIGNALS].notna().any(axis=1)]
    panel = SignalPanel(frame)
    logger.info("Built signal panel: %d stock-months, %d stocks", len(panel), len(stocks))
    return panel


def signal_correlations(panel: SignalPanel, signals: Sequence[str],
                        min_observations: int = EchoConfig.MIN_JOINT_OBSERVATIONS) -> pd.DataFrame:
    """
    Return pooled pairwise Pearson correlations of the signals over all stock-months where both are present.
    A pair with fewer than min_observations joint observations, or without variation, is NaN.
    """
    signals = list(signals)
    if len(signals) < 2:
        raise EchoDomainError("CORRELATIONS: at least two signals are needed.")
    unknown = [name for name in signals if name not in SIGNALS]
    if unknown:
        raise EchoDomainError(f"CORRELATIONS: unknown signal(s) {', '.join(unknown)}.")
    values = panel.frame[signals].to_numpy(dtype=float)
    matrix = pd.DataFrame(np.nan, index=signals, columns=signals)
    for i, left in enumerate(signals):
        for j in range(i, len(signals)):
            joint = ~np.isnan(values[:, i]) & ~np.isnan(values[:, j])
            if joint.sum() < min_observations:
                continue
            x, y = values[joint, i], values[joint, j]
            if i == j:
                rho = 1.0 if np.std(x) > 0 else math.nan
            elif np.std(x) == 0 or np.std(y) == 0:
                rho = math.nan
            else:
                rho = float(np.corrcoef(x, y)[0, 1])
            matrix.iloc[i, j] = matrix.iloc[j, i] = rho
    absent = int(matrix.isna().to_numpy().sum())
    if absent:
        logger.warning("%d correlation cell(s) have fewer than %d joint observations", absent, min_observations)
    return matrix


def correlation_table(matrix: pd.DataFrame, rows: Optional[Iterable[str]] = None,
                      decimals: int = EchoConfig.DISPLAY_DECIMALS, delimiter: str = '\t') -> str:
    """
    Format a correlation matrix as a labelled grid. By default the rows are the turnover signals and the
    columns every signal, which is how the scale correlations are laid out against r_6_2 and r_12_7.
    """
    rows = list(rows) if rows is not None else [name for name in matrix.index if name.startswith('turn_ave')]
    if not rows:
        rows = list(matrix.index)
    header = [''] + [SIGNAL_LABELS.get(name, name) for name in matrix.columns]
    lines = [delimiter.join(header)]
    for name in rows:
        cells = ['' if np.isnan(v) else f"{v:.{decimals}f}" for v in matrix.loc[name].to_numpy(dtype=float)]
        lines.append(delimiter.join([SIGNAL_LABELS.get(name, name)] + cells))
    return '\n'.join(lines) + '\n'
