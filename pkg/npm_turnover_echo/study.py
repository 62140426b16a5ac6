"""
Study Runner

run_study executes the selected part of the battery in a fixed order:

    load (or generate) -> decompose -> signals -> table1 .. table8 -> manifest

Stages a selection does not need are not run at all; the stages that did run are listed in the
manifest. A failing stage leaves whatever was already written in place, adds a FAILED marker to the
output directory and raises EchoStageError naming the stage.
"""

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.econometrics import (FMBResult, factor_alpha, fama_macbeth, mean_return_test,
                                            spanning_regression)
from npm_turnover_echo.exceptions import EchoDataError, EchoStageError
from npm_turnover_echo.month_index import month_label
from npm_turnover_echo.panel_data import (FactorTable, PanelDataset, load_factor_table, load_panel, write_factor_table,
                                          write_panel)
from npm_turnover_echo.portfolio_engine import PortfolioSeries, SortResult, SortSpec, run_sort
from npm_turnover_echo.reports import (BivariateTable, Estimate, RegressionModel, StudyResults, UnivariateTable,
                                       emit_table, estimate_of, write_manifest, write_text)
from npm_turnover_echo.signal_builder import SignalPanel, build_signal_panel, signal_correlations, turn_ave_name
from npm_turnover_echo.study_config import StudyConfig
from npm_turnover_echo.synth_oracle import generate_factor_table, generate_panel
from npm_turnover_echo.wavelet_engine import PanelDecomposition, decompose_panel, write_decomposition

logger = logging.getLogger(__name__)

FAILED_MARKER = 'FAILED'
MANIFEST = 'manifest.yaml'
MOMENTUM_SIGNALS = ('r_6_2', 'r_12_7')
FF3 = ('MKT', 'SMB', 'HML')
ORTHOGONAL_TRANSFORM = 'dwt'

# Regressor sets of the six Fama-MacBeth models; models 1-3 without an intercept, 4-6 with one.
FMB_REGRESSORS = (
    ('r_6_2', 'r_12_7', 'turn_ave3', 'turn_ave4', 'turn_ave5', 'r_1_0', 'log_me', 'log_bm'),
    ('r_6_2', 'r_12_7', 'turn_all', 'r_1_0', 'log_me', 'log_bm'),
    ('r_6_2', 'r_12_7', 'r_1_0', 'log_me', 'log_bm'),
)

# Table 5: dependent momentum signal -> (reversal portfolio scales, their momentum signal).
SPANNING_PANELS = {
    'A': ('r_6_2', (4, 5), 'r_6_2'),
    'B': ('r_12_7', (4, 3), 'r_12_7'),
}


@dataclass
class ReportBundle:
    output: Path
    files: List[Path]
    manifest: Path
    results: StudyResults
    stages: List[str] = field(default_factory=list)


class StudyState(object):
    """
    State shared by the stages of one run. Sorts are cached so that tables reusing a portfolio
    (Table 5, 7 and 8 reuse Table 4's T10-Diff series) do not sort twice.
    """

    def __init__(self, config: StudyConfig):
        self.config = config
        self.dataset: Optional[PanelDataset] = None
        self.factors: Optional[FactorTable] = None
        self.decomposition: Optional[PanelDecomposition] = None
        self.panel: Optional[SignalPanel] = None
        self.months: List[int] = []
        self.results = StudyResults()
        self.stages: List[str] = []
        self.files: List[Path] = []
        self.lags: Dict[str, object] = {}
        self._sorts: Dict[Tuple, SortResult] = {}

    # -- helpers -- #

    def write(self, relative: str, text: str):
        path = self.config.output / relative
        write_text(path, text)
        self.files.append(path)

    def sort(self, row_signal: str, column_signal: Optional[str] = None) -> SortResult:
        key = (row_signal, column_signal)
        if key not in self._sorts:
            config = self.config
            spec = SortSpec(row_signal, config.groups, column_signal, config.momentum_groups, config.weighting,
                            config.breakpoints, config.dependence, config.price_filter, config.min_price)
            self._sorts[key] = run_sort(self.dataset, self.panel, spec, self.months, workers=config.workers)
        return self._sorts[key]

    def reversal(self, scale: int, momentum: str = 'r_6_2') -> PortfolioSeries:
        """
        The T10-Diff portfolio: high minus low momentum within the top turnover group at one scale.
        """
        result = self.sort(turn_ave_name(scale), momentum)
        return result.row_diff(self.config.groups)

    def momentum(self, signal: str) -> PortfolioSeries:
        return self.sort(signal).column_diff(1)

    # -- stages -- #

    def load(self):
        config = self.config
        if config.synth is not None:
            self.factors = generate_factor_table(config.synth)
            self.dataset = generate_panel(config.synth, self.factors)
        else:
            self.dataset = load_panel(config.panel)
            tables = [load_factor_table(path, config.factors_percent) for path in config.factors]
            if tables:
                self.factors = tables[0]
                for table in tables[1:]:
                    self.factors = self.factors.combine(table)
        first, last = self.dataset.month_range
        # The first holding month needs twelve months of history plus the formation month.
        start = max(first + 13, config.start if config.start is not None else first + 13)
        end = min(last, config.end if config.end is not None else last)
        if start > end:
            raise EchoDataError(f"STUDY: no holding months between {month_label(start)} and {month_label(end)}.")
        self.months = list(range(start, end + 1))
        if 'panel' in config.exports:
            write_panel(self.dataset, self._export_path('panel.csv'))
            if self.factors is not None:
                write_factor_table(self.factors, self._export_path('factors.csv'))

    def decompose(self):
        config = self.config
        self.decomposition = decompose_panel(self.dataset, config.mode, transform=config.transform,
                                             window=config.causal_window, log_turnover=config.log_turnover,
                                             workers=config.workers)
        if 'decomposition' in config.exports:
            write_decomposition(self.decomposition, self._export_path('decomposition.csv'))

    def signals(self):
        self.panel = build_signal_panel(self.dataset, self.decomposition)
        if 'signals' in self.config.exports:
            self.panel.write(self._export_path('signals.csv'))

    def table1(self):
        for signal in MOMENTUM_SIGNALS:
            result = self.sort(signal)
            cells = [result.cell(g) for g in range(1, self.config.groups + 1)] + [result.column_diff(1)]
            tests = [mean_return_test(cell, self.config.lag) for cell in cells]
            means = [estimate_of(test) for test in tests]
            alphas = None
            if self.factors is not None:
                fits = [factor_alpha(cell, self.factors, FF3, self.config.lag) for cell in cells]
                alphas = [Estimate(fit.percent(), float(fit.tvalues['const'])) for fit in fits]
            self.results.univariate[signal] = UnivariateTable(signal, means, alphas)
            self.lags[f"table1.{signal}"] = tests[-1].lag
            self._export_series(result, f"series/{signal}.csv")
        self.write('table1.txt', emit_table(self.results, 1))

    def table2(self):
        self.write('table2.txt', emit_table(self.results, 2))

    def table3(self):
        signals = [turn_ave_name(s) for s in range(EchoConfig.SCALE_COUNT)] + list(MOMENTUM_SIGNALS)
        panel = self.panel
        if self.decomposition.transform != ORTHOGONAL_TRANSFORM:
            # Table 3 always reads orthogonal components.
            config = self.config
            logger.info("Table 3 uses a '%s' decomposition; sorts use '%s'", ORTHOGONAL_TRANSFORM,
                        config.transform)
            decomposition = decompose_panel(self.dataset, config.mode, transform=ORTHOGONAL_TRANSFORM,
                                            window=config.causal_window, log_turnover=config.log_turnover,
                                            workers=config.workers)
            panel = build_signal_panel(self.dataset, decomposition)
        self.results.correlations = signal_correlations(panel, signals)
        self.write('table3.txt', emit_table(self.results, 3))

    def table4(self):
        config = self.config
        for scale in sorted(set(config.scales) | set(config.headline_scales)):
            for momentum in MOMENTUM_SIGNALS:
                result = self.sort(turn_ave_name(scale), momentum)
                self.results.bivariate[(scale, momentum)] = BivariateTable(scale, momentum,
                                                                           self._grid(result))
                self._export_series(result, f"series/{turn_ave_name(scale)}_{momentum}.csv")
        self.write('table4.txt', emit_table(self.results, 4, config.headline_scales))
        for scale in sorted(set(config.scales) - set(config.headline_scales)):
            self.write(f"appendix/table4_scale{scale}.txt", emit_table(self.results, 4, [scale]))

    def table5(self):
        lag = self.config.lag
        for panel, (dependent_signal, scales, momentum) in sorted(SPANNING_PANELS.items()):
            dependent = self.momentum(dependent_signal)
            kind = 'Reversal' if momentum == 'r_6_2' else 'ControlGroup'
            portfolios = {f"{kind}-Cycle{s}": self.reversal(s, momentum) for s in scales}
            first, second = list(portfolios)
            designs = [[first], [first], [second], [second], [first, second], [first, second]]
            models = []
            for number, names in enumerate(designs, start=1):
                ff3 = number % 2 == 0
                fit = spanning_regression(dependent, [portfolios[n] for n in names], ff3, self.factors, lag,
                                          names=names)
                models.append(RegressionModel(f"({number})", fit, {'FF3 control': 'Yes' if ff3 else 'No'}))
            self.results.spanning[panel] = models
        self.write('table5.txt', emit_table(self.results, 5))

    def table6(self):
        config = self.config
        models: List[Tuple[str, FMBResult]] = []
        for intercept in (False, True):
            for regressors in FMB_REGRESSORS:
                label = f"({len(models) + 1})"
                models.append((label, fama_macbeth(self.dataset, self.panel, regressors, intercept, self.months,
                                                   config.lag, winsorize_regressors=config.winsorize,
                                                   price_filter=config.price_filter, min_price=config.min_price,
                                                   workers=config.workers)))
        self.results.fama_macbeth = models
        self.lags['table6'] = [result.lag for _, result in models]
        self.write('table6.txt', emit_table(self.results, 6))

    def table7(self):
        models = []
        for scale in (4, 5):
            for names in (('STR',), ('MKT', 'STR')):
                fit = factor_alpha(self.reversal(scale), self.factors, names, self.config.lag)
                models.append(RegressionModel(f"({len(models) + 1})", fit,
                                              {'Dependent': f"Reversal-Cycle{scale}"}))
        self.results.short_term_reversal = models
        self.write('table7.txt', emit_table(self.results, 7))

    def table8(self):
        models = []
        for scale in (4, 5):
            for names in (('MKT',), FF3, FF3 + ('LIQ',)):
                fit = factor_alpha(self.reversal(scale), self.factors, names, self.config.lag)
                models.append(RegressionModel(f"({len(models) + 1})", fit,
                                              {'Dependent': f"Reversal-Cycle{scale}"}))
        self.results.factor_spanning = models
        self.write('table8.txt', emit_table(self.results, 8))

    # -- internals -- #

    def _export_path(self, name: str) -> Path:
        path = self.config.output / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(path)
        return path

    def _export_series(self, result: SortResult, name: str):
        if 'series' in self.config.exports:
            result.write_series(self._export_path(name))

    def _grid(self, result: SortResult) -> List[List[Estimate]]:
        rows, columns = result.spec.shape
        lag = self.config.lag
        grid = []
        for row in range(1, rows + 1):
            cells = [result.cell(row, c) for c in range(1, columns + 1)] + [result.row_diff(row)]
            grid.append([estimate_of(mean_return_test(cell, lag)) for cell in cells])
        bottom = [result.column_diff(c) for c in range(1, columns + 1)] + [result.corner_diff()]
        grid.append([estimate_of(mean_return_test(cell, lag)) for cell in bottom])
        return grid


def _needs(tables) -> Dict[str, bool]:
    tables = set(tables)
    return {
        'load': bool(tables - {2}),
        'decompose': bool(tables & {3, 4, 5, 6, 7, 8}),
        'signals': bool(tables - {2}),
    }


def run_study(config: StudyConfig) -> ReportBundle:
    """
    Run the configured study and write its tables and manifest to config.output.
    """
    config.validate()
    output = config.output
    output.mkdir(parents=True, exist_ok=True)
    marker = output / FAILED_MARKER
    if marker.exists():
        marker.unlink()

    study = StudyState(config)
    needs = _needs(config.tables)
    plan: List[Tuple[str, Callable[[], None]]] = []
    for stage in ('load', 'decompose', 'signals'):
        if needs[stage]:
            plan.append((stage, getattr(study, stage)))
    for table in sorted(config.tables):
        plan.append((f"table{table}", getattr(study, f"table{table}")))

    manifest = {
        'config_hash': config.config_hash(),
        'seed': config.seed,
        'source': 'synthetic' if config.synth is not None else str(config.panel),
        'config': config.as_dict(),
    }
    for stage, run in plan:
        logger.info("Stage %s: start", stage)
        started = time.perf_counter()
        try:
            run()
        except Exception as error:
            cause = error.cause if isinstance(error, EchoStageError) else error
            logger.error("Stage %s failed: %s", stage, cause)
            write_text(marker, f"stage: {stage}\nerror: {cause}\n")
            _finish_manifest(study, manifest, failed=stage)
            raise EchoStageError(stage, cause) from error
        study.stages.append(stage)
        logger.info("Stage %s: done in %.1fs", stage, time.perf_counter() - started)

    path = _finish_manifest(study, manifest)
    return ReportBundle(output, study.files, path, study.results, study.stages)


def _finish_manifest(study: StudyState, manifest: Dict, failed: Optional[str] = None) -> Path:
    config = study.config
    if study.dataset is not None:
        report = study.dataset.report
        manifest['rows'] = {'read': report.rows_read, 'kept': report.rows_kept, 'dropped': dict(report.dropped)}
        manifest['stocks'] = len(study.dataset.stocks())
    if study.months:
        manifest['holding_months'] = {'first': month_label(study.months[0]), 'last': month_label(study.months[-1]),
                                      'count': len(study.months)}
    if study.panel is not None:
        manifest['signal_rows'] = len(study.panel)
    if study.decomposition is not None:
        manifest['decomposed_segments'] = len(study.decomposition)
    manifest['lag_policy'] = config.lag
    manifest['lags'] = study.lags
    manifest['skipped_months'] = {f"{k[0]}|{k[1] or '-'}": len(result.skipped)
                                  for k, result in sorted(study._sorts.items(), key=lambda item: str(item[0]))}
    manifest['stages'] = list(study.stages)
    manifest['status'] = f"FAILED at {failed}" if failed else 'complete'
    manifest['files'] = [str(path.relative_to(config.output)) for path in study.files]
    path = config.output / MANIFEST
    write_manifest(path, manifest, datetime.now(timezone.utc).isoformat(timespec='seconds'))
    return path
