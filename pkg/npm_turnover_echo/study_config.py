"""
Study Configuration

A study is described by a YAML file:

    input:
      panel: data/crsp_monthly.csv      # or a `synth:` block instead of `input:`
      factors: [data/ff3.csv, data/liq.csv]
      factors_percent: true
    months: {start: 1970-02, end: 2020-12}          # holding months; optional
    eligibility: {min_price: 5.0, price_filter: formation}
    wavelet: {mode: full_sample, transform: dwt, causal_window: 64, log_turnover: false}
    sorts: {groups: 10, momentum_groups: 5, weighting: value, breakpoints: all_eligible,
            dependence: independent, scales: [0, 1, 2, 3, 4, 5, 6], headline_scales: [4, 5]}
    regressions: {lag: auto, winsorize: false}
    tables: [1, 2, 3, 4, 5, 6, 7, 8]
    output: out/study
    workers: 1

Relative paths are resolved against the config file's directory. Flags given on the command line
override file values.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Set, Tuple, Union

import yaml

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.exceptions import EchoConfigError
from npm_turnover_echo.month_index import month_label, parse_month
from npm_turnover_echo.panel_data import FACTOR_ALIASES
from npm_turnover_echo.synth_oracle import SynthConfig, synth_config_from_dict
from npm_turnover_echo.wavelet_engine import TRANSFORMS

logger = logging.getLogger(__name__)

ALL_TABLES = (1, 2, 3, 4, 5, 6, 7, 8)
EXPORTS = ('decomposition', 'signals', 'series', 'panel')

# Fields that do not affect results and are left out of the config hash.
UNHASHED_FIELDS = ('output', 'workers')

# Factors each table reads from the factor table.
TABLE_FACTORS: Dict[int, Tuple[str, ...]] = {
    1: ('MKT', 'SMB', 'HML'),
    5: ('MKT', 'SMB', 'HML'),
    7: ('MKT', 'STR'),
    8: ('MKT', 'SMB', 'HML', 'LIQ'),
}


@dataclass(frozen=True)
class StudyConfig:
    panel: Optional[Path] = None
    factors: Tuple[Path, ...] = ()
    factors_percent: bool = True
    synth: Optional[SynthConfig] = None
    start: Optional[int] = None
    end: Optional[int] = None
    min_price: float = EchoConfig.MIN_PRICE
    price_filter: str = 'formation'
    mode: str = 'full_sample'
    transform: str = EchoConfig.TRANSFORM
    causal_window: int = EchoConfig.CAUSAL_WINDOW
    log_turnover: bool = False
    groups: int = 10
    momentum_groups: int = 5
    weighting: str = 'value'
    breakpoints: str = 'all_eligible'
    dependence: str = 'independent'
    scales: Tuple[int, ...] = tuple(range(EchoConfig.SCALE_COUNT))
    headline_scales: Tuple[int, ...] = (4, 5)
    lag: Union[int, str] = 'auto'
    winsorize: bool = False
    tables: Tuple[int, ...] = ALL_TABLES
    exports: Tuple[str, ...] = ()
    output: Path = Path('out')
    workers: int = 1

    def config_hash(self) -> str:
        """
        Return the SHA-256 of the resolved configuration, which identifies a run in its manifest.
        Where the results are written and how many workers compute them do not change the hash.
        """
        values = {key: value for key, value in self.as_dict().items() if key not in UNHASHED_FIELDS}
        return hashlib.sha256(json.dumps(values, sort_keys=True).encode('utf-8')).hexdigest()

    def as_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values['panel'] = None if self.panel is None else str(self.panel)
        values['factors'] = [str(path) for path in self.factors]
        values['output'] = str(self.output)
        if self.synth is not None:
            values['synth']['returns']['turn_ave'] = {str(k): v for k, v in self.synth.returns.turn_ave.items()}
        return values

    @property
    def seed(self) -> Optional[int]:
        return None if self.synth is None else self.synth.seed

    def required_factors(self) -> Set[str]:
        return {name for table in self.tables for name in TABLE_FACTORS.get(table, ())}

    def validate(self):
        """
        Check everything that can be checked before any data is read; raise EchoConfigError otherwise.
        """
        if (self.panel is None) == (self.synth is None):
            raise EchoConfigError("STUDY: give exactly one of input.panel or synth.")
        unknown = sorted(set(self.tables) - set(ALL_TABLES))
        if unknown or not self.tables:
            raise EchoConfigError(f"STUDY: tables must be chosen from {list(ALL_TABLES)}, got {list(self.tables)}.")
        bad_exports = sorted(set(self.exports) - set(EXPORTS))
        if bad_exports:
            raise EchoConfigError(f"STUDY: unknown export(s) {bad_exports}; choose from {list(EXPORTS)}.")
        if self.start is not None and self.end is not None and self.start > self.end:
            raise EchoConfigError(f"STUDY: month range {month_label(self.start)}..{month_label(self.end)} is empty.")
        for scale in self.scales + self.headline_scales:
            if not 0 <= scale < EchoConfig.SCALE_COUNT:
                raise EchoConfigError(f"STUDY: scale {scale} is outside 0..{EchoConfig.SCALE_COUNT - 1}.")
        if {5, 7, 8} & set(self.tables) and not {4, 5} <= set(self.headline_scales) | set(self.scales):
            raise EchoConfigError("STUDY: tables 5, 7 and 8 need the scale 4 and 5 sorts.")
        choices = {'price_filter': ('formation', 'history'), 'mode': ('full_sample', 'causal'),
                   'transform': TRANSFORMS, 'weighting': ('value', 'equal'),
                   'breakpoints': ('all_eligible', 'NYSE_only'), 'dependence': ('independent', 'conditional')}
        for attribute, allowed in choices.items():
            if getattr(self, attribute) not in allowed:
                raise EchoConfigError(f"STUDY: {attribute} '{getattr(self, attribute)}' is not one of {allowed}.")
        if self.groups < 2 or self.momentum_groups < 2 or self.workers < 1:
            raise EchoConfigError("STUDY: group counts must be at least 2 and workers at least 1.")
        if self.causal_window < EchoConfig.MIN_SEGMENT_LENGTH:
            raise EchoConfigError(f"STUDY: causal_window must be at least {EchoConfig.MIN_SEGMENT_LENGTH}.")
        if self.lag != 'auto' and (isinstance(self.lag, bool) or not isinstance(self.lag, int) or self.lag < 0):
            raise EchoConfigError(f"STUDY: lag {self.lag!r} is not 'auto' or a non-negative integer.")

        if self.panel is not None:
            if not self.panel.is_file():
                raise EchoConfigError(f"STUDY: panel file {self.panel} does not exist.")
            for path in self.factors:
                if not path.is_file():
                    raise EchoConfigError(f"STUDY: factor file {path} does not exist.")
            available = set()
            for path in self.factors:
                available |= factor_file_columns(path)
            missing = sorted(self.required_factors() - available)
            if missing:
                raise EchoConfigError(f"STUDY: tables {sorted(self.tables)} need factor(s) {', '.join(missing)} "
                                      f"which no factor file provides.")


def factor_file_columns(path: Path) -> Set[str]:
    """
    Return the factor names a French-library style file provides, read from its header line only.
    """
    with open(path, encoding='utf-8') as handle:
        header = handle.readline()
    delimiter = max([',', '\t', '|', ';'], key=header.count)
    names = [cell.strip() for cell in header.split(delimiter)[1:]]
    return {FACTOR_ALIASES.get(name.upper(), name) for name in names if name}


def _section(values: Mapping[str, Any], name: str) -> Dict[str, Any]:
    section = values.get(name) or {}
    if not isinstance(section, dict):
        raise EchoConfigError(f"STUDY: '{name}' must be a mapping.")
    return dict(section)


def study_config_from_dict(values: Mapping[str, Any], base: Optional[Path] = None) -> StudyConfig:
    """
    Build a StudyConfig from the parsed YAML mapping; relative paths are taken relative to base.
    """
    base = base or Path('.')
    known = {'input', 'synth', 'months', 'eligibility', 'wavelet', 'sorts', 'regressions', 'tables',
             'exports', 'output', 'workers'}
    unknown = sorted(set(values) - known)
    if unknown:
        raise EchoConfigError(f"STUDY: unknown key(s) {', '.join(unknown)}.")

    def resolve(path: Any) -> Path:
        path = Path(str(path))
        return path if path.is_absolute() else base / path

    arguments: Dict[str, Any] = {}
    source = _section(values, 'input')
    if 'panel' in source:
        arguments['panel'] = resolve(source['panel'])
    factors = source.get('factors') or []
    arguments['factors'] = tuple(resolve(p) for p in ([factors] if isinstance(factors, str) else factors))
    if 'factors_percent' in source:
        arguments['factors_percent'] = bool(source['factors_percent'])
    if values.get('synth') is not None:
        arguments['synth'] = synth_config_from_dict(values['synth'])

    months = _section(values, 'months')
    for key in ('start', 'end'):
        if months.get(key) is not None:
            arguments[key] = parse_month(months[key])
    for name, keys in (('eligibility', ('min_price', 'price_filter')),
                       ('wavelet', ('mode', 'transform', 'causal_window', 'log_turnover')),
                       ('sorts', ('groups', 'momentum_groups', 'weighting', 'breakpoints', 'dependence')),
                       ('regressions', ('lag', 'winsorize'))):
        section = _section(values, name)
        extra = sorted(set(section) - set(keys) - {'scales', 'headline_scales'})
        if extra:
            raise EchoConfigError(f"STUDY: unknown key(s) {', '.join(extra)} in '{name}'.")
        arguments.update({key: section[key] for key in keys if key in section})
        for key in ('scales', 'headline_scales'):
            if key in section:
                arguments[key] = tuple(int(s) for s in section[key])
    if 'tables' in values:
        arguments['tables'] = tuple(sorted(int(t) for t in values['tables']))
    if 'exports' in values:
        arguments['exports'] = tuple(values['exports'] or ())
    if 'output' in values:
        arguments['output'] = resolve(values['output'])
    if 'workers' in values:
        arguments['workers'] = int(values['workers'])
    return StudyConfig(**arguments)


def load_study_config(path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None) -> StudyConfig:
    """
    Read a study config file and apply overrides (StudyConfig field names; None values are ignored).
    """
    path = Path(path)
    if not path.is_file():
        raise EchoConfigError(f"STUDY: config file {path} does not exist.")
    try:
        values = yaml.safe_load(path.read_text(encoding='utf-8')) or {}
    except yaml.YAMLError as error:
        raise EchoConfigError(f"STUDY: {path} is not valid YAML: {error}")
    if not isinstance(values, dict):
        raise EchoConfigError(f"STUDY: {path} does not hold a mapping.")
    config = study_config_from_dict(values, path.parent)
    return apply_overrides(config, overrides or {})


def apply_overrides(config: StudyConfig, overrides: Mapping[str, Any]) -> StudyConfig:
    """
    Return config with the given fields replaced. `seed` replaces the synthetic generator's seed.
    """
    overrides = {key: value for key, value in overrides.items() if value is not None}
    seed = overrides.pop('seed', None)
    if seed is not None:
        if config.synth is None:
            raise EchoConfigError("STUDY: --seed only applies to synthetic studies.")
        overrides['synth'] = replace(overrides.get('synth', config.synth), seed=int(seed))
    for key in ('panel', 'output'):
        if key in overrides:
            overrides[key] = Path(overrides[key])
    if 'factors' in overrides:
        overrides['factors'] = tuple(Path(p) for p in overrides['factors'])
    for key in ('tables', 'scales', 'headline_scales', 'exports'):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    names = set(StudyConfig.__dataclass_fields__)
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise EchoConfigError(f"STUDY: unknown setting(s) {', '.join(unknown)}.")
    return replace(config, **overrides)
