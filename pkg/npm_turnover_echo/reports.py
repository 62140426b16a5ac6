"""
Reports

Formats study results as tab-delimited tables. Returns, alphas, intercepts and premiums are shown in
percent per month with 3 decimals; t-statistics follow on the next line (or, for the bivariate grids,
in a block to the right). Undefined t-statistics are shown as 'n/a'.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
import yaml

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.econometrics import CONSTANT, FMBResult, MeanTest, RegressionResult
from npm_turnover_echo.exceptions import EchoDataError, EchoDomainError
from npm_turnover_echo.signal_builder import SIGNAL_LABELS, correlation_table
from npm_turnover_echo.wavelet_engine import dyadic_band, scale_cycle_label

logger = logging.getLogger(__name__)

SEP = '\t'
COLUMN_PREFIX = {'r_6_2': 'RR', 'r_12_7': 'IR'}
MOMENTUM_TITLES = {'r_6_2': 'Recent month momentum', 'r_12_7': 'Intermediate month momentum'}
REGRESSOR_LABELS = dict(SIGNAL_LABELS, r_6_2='RR', r_12_7='IR', turn_all='Turnover_all',
                        turn_ave3='Turnover_cycle3', turn_ave4='Turnover_cycle4', turn_ave5='Turnover_cycle5')
REGRESSOR_LABELS[CONSTANT] = 'Intercept'


@dataclass
class Estimate:
    """
    A displayed number and its t-statistic; `value` is already in display units.
    """
    value: float
    tstat: float


@dataclass
class UnivariateTable:
    signal: str
    means: List[Estimate]
    alphas: Optional[List[Estimate]] = None


@dataclass
class BivariateTable:
    """
    Row groups T1..Tk plus Diff, column groups 1..m plus Diff; grid[row][column].
    """
    scale: int
    column_signal: str
    grid: List[List[Estimate]]


@dataclass
class RegressionModel:
    label: str
    result: RegressionResult
    notes: Dict[str, str] = field(default_factory=dict)


@dataclass
class StudyResults:
    univariate: Dict[str, UnivariateTable] = field(default_factory=dict)
    correlations: Optional[pd.DataFrame] = None
    bivariate: Dict[Tuple[int, str], BivariateTable] = field(default_factory=dict)
    spanning: Dict[str, List[RegressionModel]] = field(default_factory=dict)
    fama_macbeth: List[Tuple[str, FMBResult]] = field(default_factory=list)
    short_term_reversal: List[RegressionModel] = field(default_factory=list)
    factor_spanning: List[RegressionModel] = field(default_factory=list)


def estimate_of(test: MeanTest) -> Estimate:
    return Estimate(test.mean, test.tstat)


def number(value: float, decimals: int = EchoConfig.DISPLAY_DECIMALS) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return 'n/a'
    return f"{value:.{decimals}f}"


def group_labels(k: int) -> List[str]:
    return ['L'] + [str(g) for g in range(2, k)] + ['H']


# -- LAYOUTS -- #

def univariate_layout(tables: Sequence[UnivariateTable]) -> str:
    if not tables:
        raise EchoDataError("REPORT: no univariate sort results.")
    k = len(tables[0].means) - 1
    lines = [SEP.join(['Group'] + group_labels(k) + ['Diff'])]
    for table in tables:
        blocks = [(table.signal, table.means)]
        if table.alphas is not None:
            blocks.append((f"alpha_{table.signal[2:]}", table.alphas))
        for label, cells in blocks:
            lines.append(SEP.join([label] + [number(c.value) for c in cells]))
            lines.append(SEP.join([''] + [number(c.tstat) for c in cells]))
    return '\n'.join(lines) + '\n'


def scale_layout() -> str:
    lines = [SEP.join(['Scale', 'Cycle', 'Dyadic periods (months)'])]
    for scale in range(EchoConfig.SCALE_COUNT - 1, -1, -1):
        shortest, longest = dyadic_band(scale)
        band = f">{shortest:g}" if math.isinf(longest) else f"{shortest:g}~{longest:g}"
        lines.append(SEP.join([str(scale), scale_cycle_label(scale).cycle_band, band]))
    return '\n'.join(lines) + '\n'


def correlation_layout(matrix: Optional[pd.DataFrame]) -> str:
    if matrix is None or matrix.empty:
        raise EchoDataError("REPORT: no correlation results.")
    return correlation_table(matrix)


def bivariate_layout(tables: Sequence[BivariateTable]) -> str:
    """
    One panel per (scale, momentum signal): estimates on the left, t-statistics on the right.
    """
    if not tables:
        raise EchoDataError("REPORT: no bivariate sort results.")
    lines = [SEP.join(['', 'Estimate (percent per month)'] + [''] * (len(tables[0].grid[0]) - 1)
                      + ['Test Statistics'])]
    for scale in sorted({t.scale for t in tables}):
        lines.append(SEP.join(['Scale', str(scale), scale_cycle_label(scale).cycle_band]))
        for table in [t for t in tables if t.scale == scale]:
            prefix = COLUMN_PREFIX.get(table.column_signal, table.column_signal)
            columns = [f"{prefix}{c}" for c in range(1, len(table.grid[0]))] + ['Diff']
            lines.append(SEP.join(['', MOMENTUM_TITLES.get(table.column_signal, table.column_signal)]))
            lines.append(SEP.join([''] + columns + columns))
            labels = [f"T{r}" for r in range(1, len(table.grid))] + ['Diff']
            for label, row in zip(labels, table.grid):
                lines.append(SEP.join([label] + [number(c.value) for c in row] + [number(c.tstat) for c in row]))
    return '\n'.join(lines) + '\n'


def regression_layout(models: Sequence[RegressionModel], title: str = '',
                      decimals: int = EchoConfig.DISPLAY_DECIMALS) -> str:
    """
    Columns are models; each regressor has a coefficient line and a t-statistic line. Intercepts are in
    percent, loadings as estimated. Notes (e.g. 'FF3 control') and adj. R² close the table.
    """
    if not models:
        raise EchoDataError("REPORT: no regression results.")
    names: List[str] = []
    for model in models:
        names += [n for n in model.result.names if n not in names]
    if CONSTANT in names:
        names.remove(CONSTANT)
        names.insert(0, CONSTANT)
    lines = []
    if title:
        lines.append(SEP.join([title] + [''] * len(models)))
    lines.append(SEP.join(['Independent variable'] + [m.label for m in models]))
    for name in names:
        values, tstats = [], []
        for model in models:
            result = model.result
            if name not in result.params.index:
                values.append('')
                tstats.append('')
                continue
            value = result.percent(name) if name == CONSTANT else float(result.params[name])
            values.append(number(value, decimals if name == CONSTANT else decimals + 1))
            tstats.append(number(float(result.tvalues[name])))
        lines.append(SEP.join([REGRESSOR_LABELS.get(name, name)] + values))
        lines.append(SEP.join([''] + tstats))
    for note in sorted({key for model in models for key in model.notes}):
        lines.append(SEP.join([note] + [model.notes.get(note, '') for model in models]))
    lines.append(SEP.join(['Adj. R2'] + [number(m.result.rsquared_adj) for m in models]))
    lines.append(SEP.join(['Months'] + [str(m.result.nobs) for m in models]))
    lines.append(SEP.join(['NW lag'] + [str(m.result.lag) for m in models]))
    return '\n'.join(lines) + '\n'


def fama_macbeth_layout(models: Sequence[Tuple[str, FMBResult]]) -> str:
    """
    Premiums in percent with Newey-West t-statistics beneath; average adj. R² and average n as footers.
    """
    if not models:
        raise EchoDataError("REPORT: no Fama-MacBeth results.")
    names: List[str] = []
    for _, result in models:
        names += [n for n in result.premiums.index if n not in names]
    if CONSTANT in names:
        names.remove(CONSTANT)
        names.insert(0, CONSTANT)
    lines = [SEP.join(['Independent variable'] + [label for label, _ in models])]
    for name in names:
        values = [number(r.percent(name)) if name in r.premiums.index else '' for _, r in models]
        tstats = [number(float(r.tvalues[name])) if name in r.tvalues.index else '' for _, r in models]
        lines.append(SEP.join([REGRESSOR_LABELS.get(name, name)] + values))
        lines.append(SEP.join([''] + tstats))
    lines.append(SEP.join(['Adj. R2'] + [number(r.average_rsquared_adj) for _, r in models]))
    lines.append(SEP.join(['Average n'] + [f"{r.average_n:.0f}" for _, r in models]))
    lines.append(SEP.join(['Months'] + [str(len(r.slopes)) for _, r in models]))
    lines.append(SEP.join(['NW lag'] + [str(r.lag) for _, r in models]))
    return '\n'.join(lines) + '\n'


def emit_table(results: StudyResults, layout: int, scales: Optional[Sequence[int]] = None) -> str:
    """
    Return the text of table `layout` (1..8). Raises EchoDataError when the results it needs are missing.

    :param scales: For layout 4, the scales to include (default: all available).
    """
    if layout == 1:
        return univariate_layout(list(results.univariate.values()))
    if layout == 2:
        return scale_layout()
    if layout == 3:
        return correlation_layout(results.correlations)
    if layout == 4:
        tables = [t for (scale, _), t in sorted(results.bivariate.items())
                  if scales is None or scale in scales]
        return bivariate_layout(tables)
    if layout == 5:
        if not results.spanning:
            raise EchoDataError("REPORT: no spanning regression results.")
        return ''.join(regression_layout(models, f"Panel {panel}")
                       for panel, models in sorted(results.spanning.items()))
    if layout == 6:
        return fama_macbeth_layout(results.fama_macbeth)
    if layout == 7:
        return regression_layout(results.short_term_reversal)
    if layout == 8:
        return regression_layout(results.factor_spanning)
    raise EchoDomainError(f"REPORT: layout {layout} is not one of 1..8.")


def write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')


def write_manifest(path: Path, manifest: Dict, timestamp: str):
    """
    Write the run manifest as YAML. The timestamp is the first line so that two runs of the same study
    differ in that line only.
    """
    body = yaml.safe_dump(manifest, sort_keys=False, default_flow_style=False, allow_unicode=True)
    write_text(path, f"generated: '{timestamp}'\n{body}")
