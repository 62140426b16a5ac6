"""
Command Line

    npm-turnover-echo <verb> [--config study.yaml] [flags]

Verbs: load-check, decompose, signals, sort, fmb, span, study, synth. A config file is authoritative;
flags given on the command line override its values. Exit codes: 0 success, 2 configuration error,
3 data error, 4 numerical failure.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from npm_turnover_echo.econometrics import fama_macbeth, mean_return_test, spanning_regression
from npm_turnover_echo.exceptions import EchoConfigError, TurnoverEchoError
from npm_turnover_echo.month_index import parse_month
from npm_turnover_echo.panel_data import load_factor_table, load_panel, write_factor_table, write_panel
from npm_turnover_echo.reports import RegressionModel, fama_macbeth_layout, number, regression_layout
from npm_turnover_echo.signal_builder import SIGNALS, turn_ave_name
from npm_turnover_echo.study import StudyState, run_study
from npm_turnover_echo.study_config import StudyConfig, apply_overrides, load_study_config
from npm_turnover_echo.synth_oracle import SynthConfig, generate_factor_table, generate_panel, load_synth_config
from npm_turnover_echo.wavelet_engine import TRANSFORMS

logger = logging.getLogger(__name__)

VERBS = ('load-check', 'decompose', 'signals', 'sort', 'fmb', 'span', 'study', 'synth')
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def _lag(value: str):
    if value == 'auto':
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lag must be 'auto' or an integer, not '{value}'")


def _month(value: str) -> int:
    try:
        return parse_month(value)
    except TurnoverEchoError as error:
        raise argparse.ArgumentTypeError(str(error))


def _common_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--config', type=Path, help="Study YAML file.")
    parser.add_argument('--log-level', default='INFO', choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'))
    source = parser.add_argument_group('input')
    source.add_argument('--panel', type=Path, help="Monthly stock panel (CSV).")
    source.add_argument('--factors', type=Path, nargs='+', help="Factor files, French-library layout.")
    source.add_argument('--synth-config', type=Path, help="Synthetic generator YAML, used instead of --panel.")
    source.add_argument('--seed', type=int)
    study = parser.add_argument_group('study')
    study.add_argument('--start', type=_month, help="First holding month (YYYYMM or YYYY-MM).")
    study.add_argument('--end', type=_month, help="Last holding month.")
    study.add_argument('--min-price', type=float)
    study.add_argument('--price-filter', choices=('formation', 'history'))
    study.add_argument('--mode', choices=('full_sample', 'causal'))
    study.add_argument('--transform', choices=TRANSFORMS)
    study.add_argument('--causal-window', type=int)
    study.add_argument('--log-turnover', action='store_true', default=None)
    study.add_argument('--groups', type=int)
    study.add_argument('--momentum-groups', type=int)
    study.add_argument('--weighting', choices=('value', 'equal'))
    study.add_argument('--breakpoints', choices=('all_eligible', 'NYSE_only'))
    study.add_argument('--dependence', choices=('independent', 'conditional'))
    study.add_argument('--scales', type=int, nargs='+')
    study.add_argument('--lag', type=_lag)
    study.add_argument('--winsorize', action='store_true', default=None)
    study.add_argument('--tables', type=int, nargs='+')
    study.add_argument('--exports', nargs='+')
    study.add_argument('--output', type=Path)
    study.add_argument('--workers', type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='npm-turnover-echo',
                                     description="Cyclic turnover and momentum echo research battery.")
    verbs = parser.add_subparsers(dest='verb', required=True)
    helps = {
        'load-check': "Load and validate a panel; print the load report.",
        'decompose': "Decompose every stock's turnover and write the components.",
        'signals': "Build the signal panel and write it.",
        'sort': "Run one univariate or bivariate portfolio sort.",
        'fmb': "Run one Fama-MacBeth regression.",
        'span': "Regress a momentum portfolio on reversal portfolios.",
        'study': "Run the configured battery of tables.",
        'synth': "Generate a synthetic panel and factor file.",
    }
    for verb in VERBS:
        sub = verbs.add_parser(verb, help=helps[verb])
        _common_arguments(sub)
        if verb == 'sort':
            sub.add_argument('--row-signal', required=True, choices=SIGNALS)
            sub.add_argument('--column-signal', choices=SIGNALS)
        elif verb == 'fmb':
            sub.add_argument('--regressors', nargs='+', required=True, choices=SIGNALS)
            sub.add_argument('--no-intercept', action='store_true')
        elif verb == 'span':
            sub.add_argument('--dependent', default='r_6_2', choices=('r_6_2', 'r_12_7'))
            sub.add_argument('--span-scales', type=int, nargs='+', default=[4, 5])
            sub.add_argument('--ff3', action='store_true')
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    names = ('panel', 'factors', 'seed', 'start', 'end', 'min_price', 'price_filter', 'mode', 'transform',
             'causal_window', 'log_turnover', 'groups', 'momentum_groups', 'weighting', 'breakpoints',
             'dependence', 'scales', 'lag', 'winsorize', 'tables', 'exports', 'output', 'workers')
    overrides = {name: getattr(args, name) for name in names}
    if args.synth_config is not None:
        overrides['synth'] = load_synth_config(args.synth_config)
    return overrides


def resolve_config(args: argparse.Namespace, need_source: bool = True) -> StudyConfig:
    """
    Return the study config from --config (if given) with the command-line flags applied.
    """
    overrides = _overrides(args)
    if args.config is not None:
        config = load_study_config(args.config)
    else:
        config = StudyConfig()
    if overrides.get('synth') is not None or overrides.get('panel') is not None:
        # A source given on the command line replaces the file's source.
        config = replace(config, synth=None, panel=None)
    if not need_source and overrides.get('synth') is None and config.synth is None and config.panel is None:
        overrides['synth'] = SynthConfig()
    config = apply_overrides(config, overrides)
    if need_source and (config.panel is None) == (config.synth is None):
        raise EchoConfigError("CLI: give exactly one of --panel or --synth-config (or a config file naming one).")
    return config


def _prepared(config: StudyConfig, stages: Sequence[str]) -> StudyState:
    config.output.mkdir(parents=True, exist_ok=True)
    state = StudyState(config)
    for stage in stages:
        logger.info("Stage %s: start", stage)
        getattr(state, stage)()
    return state


def load_check(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if config.panel is None:
        raise EchoConfigError("LOAD-CHECK: --panel is required.")
    dataset = load_panel(config.panel)
    print(dataset.report.render(), end='')
    for path in config.factors:
        table = load_factor_table(path, config.factors_percent)
        print(f"factors.{path.name}: {', '.join(table.factors)}")
    return 0


def decompose(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    config = replace(config, exports=tuple(set(config.exports) | {'decomposition'}))
    state = _prepared(config, ('load', 'decompose'))
    print(f"segments: {len(state.decomposition)}")
    print(f"skipped_stocks: {len(state.decomposition.skipped)}")
    return 0


def signals(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    config = replace(config, exports=tuple(set(config.exports) | {'signals'}))
    state = _prepared(config, ('load', 'decompose', 'signals'))
    print(f"signal_rows: {len(state.panel)}")
    return 0


def sort(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    state = _prepared(config, ('load', 'decompose', 'signals'))
    result = state.sort(args.row_signal, args.column_signal)
    name = args.row_signal if args.column_signal is None else f"{args.row_signal}_{args.column_signal}"
    path = config.output / f"series/{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    result.write_series(path)
    rows, columns = result.spec.shape
    diffs = [result.column_diff(c) for c in range(1, columns + 1)]
    for column, diff in enumerate(diffs, start=1):
        test = mean_return_test(diff, config.lag)
        print(f"diff.{column}: {number(test.mean)}\tt={number(test.tstat)}")
    print(f"skipped_months: {len(result.skipped)}")
    return 0


def fmb(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    state = _prepared(config, ('load', 'decompose', 'signals'))
    result = fama_macbeth(state.dataset, state.panel, args.regressors, not args.no_intercept, state.months,
                          config.lag, winsorize_regressors=config.winsorize, price_filter=config.price_filter,
                          min_price=config.min_price, workers=config.workers)
    print(fama_macbeth_layout([('(1)', result)]), end='')
    return 0


def span(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    state = _prepared(config, ('load', 'decompose', 'signals'))
    dependent = state.momentum(args.dependent)
    names = [f"{turn_ave_name(s)}-Diff" for s in args.span_scales]
    spanning = [state.reversal(s, args.dependent) for s in args.span_scales]
    fit = spanning_regression(dependent, spanning, args.ff3, state.factors, config.lag, names=names)
    print(regression_layout([RegressionModel('(1)', fit, {'FF3 control': 'Yes' if args.ff3 else 'No'})]), end='')
    return 0


def study(args: argparse.Namespace) -> int:
    bundle = run_study(resolve_config(args))
    for path in bundle.files:
        print(path)
    print(bundle.manifest)
    return 0


def synth(args: argparse.Namespace) -> int:
    config = resolve_config(args, need_source=False)
    synth_config = config.synth or SynthConfig()
    factors = generate_factor_table(synth_config)
    dataset = generate_panel(synth_config, factors)
    config.output.mkdir(parents=True, exist_ok=True)
    write_panel(dataset, config.output / 'panel.csv')
    write_factor_table(factors, config.output / 'factors.csv')
    print(config.output / 'panel.csv')
    print(config.output / 'factors.csv')
    return 0


COMMANDS = {
    'load-check': load_check,
    'decompose': decompose,
    'signals': signals,
    'sort': sort,
    'fmb': fmb,
    'span': span,
    'study': study,
    'synth': synth,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    try:
        return COMMANDS[args.verb](args)
    except TurnoverEchoError as error:
        logger.error("%s", error)
        print(f"error: {error}", file=sys.stderr)
        return error.exit_code


if __name__ == '__main__':
    sys.exit(main())
