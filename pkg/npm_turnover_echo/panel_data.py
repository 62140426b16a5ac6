"""
Panel Data

Stock-month panels in the CRSP layout (return, price, turnover, market equity, book-to-market, exchange)
and monthly factor files in the Kenneth French layout (YYYYMM first column, percent values).

Turnover is stored twice: `turnover_raw`, exactly as read, and `turnover`, after the Gao-Ritter NASDAQ
adjustment. The adjustment is not idempotent, so it is applied exactly once, when a panel is built, and
a serialized panel always carries the raw column.
"""

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Set, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.exceptions import EchoDataError, EchoDomainError, EchoFormatError
from npm_turnover_echo.month_index import MonthIndex, month_label

logger = logging.getLogger(__name__)

Source = Union[str, Path, TextIO]


class Exchange(Enum):
    NYSE = 1
    AMEX = 2
    NASDAQ = 3

    @classmethod
    def from_code(cls, code) -> 'Exchange':
        """
        Return the exchange for a name ('NYSE', 'amex', ...), a one-letter code ('N', 'A', 'Q')
        or a CRSP exchange code (1, 2, 3).
        """
        if isinstance(code, Exchange):
            return code
        text = str(code).strip().upper()
        if text in cls.__members__:
            return cls[text]
        aliases = {'N': cls.NYSE, 'A': cls.AMEX, 'Q': cls.NASDAQ, '1': cls.NYSE, '2': cls.AMEX, '3': cls.NASDAQ}
        if text in aliases:
            return aliases[text]
        raise EchoFormatError(f"EXCHANGE: '{code}' is not NYSE, AMEX or NASDAQ.")


@dataclass(frozen=True)
class PanelObservation:
    stock_id: str
    month: int
    ret: float
    price: float
    turnover_raw: float
    market_equity: float
    book_to_market: float
    exchange: Exchange


@dataclass
class PanelSchema:
    """
    Maps PanelObservation fields onto the column headers of an input file.
    Fields left out of `columns` are looked up under their own names.
    """
    columns: Dict[str, str] = field(default_factory=dict)
    delimiter: Optional[str] = None

    MANDATORY = ('stock_id', 'month', 'ret', 'price', 'turnover_raw', 'market_equity', 'exchange')
    OPTIONAL = ('book_to_market',)

    def header_for(self, field_name: str) -> str:
        return self.columns.get(field_name, field_name)


@dataclass
class LoadReport:
    rows_read: int = 0
    rows_kept: int = 0
    dropped: Dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str, count: int):
        if count:
            self.dropped[reason] = self.dropped.get(reason, 0) + int(count)

    def render(self) -> str:
        """
        Return the report as structured key: value text.
        """
        lines = [f"rows_read: {self.rows_read}", f"rows_kept: {self.rows_kept}",
                 f"rows_dropped: {sum(self.dropped.values())}"]
        lines += [f"dropped.{reason}: {count}" for reason, count in sorted(self.dropped.items())]
        return "\n".join(lines) + "\n"


# -- NASDAQ ADJUSTMENT -- #

def nasdaq_divisor(month: int) -> float:
    """
    Return the Gao-Ritter divisor for NASDAQ volume in the given month:
    2.0 up to 2000-12, 1.8 through 2001, 1.6 through 2003 and 1.0 from 2004-01 onwards.
    """
    divisor = EchoConfig.NASDAQ_EARLY_DIVISOR
    for (year, calendar_month), next_divisor in EchoConfig.NASDAQ_SCHEDULE:
        if month >= MonthIndex.from_year_month(year, calendar_month).index:
            divisor = next_divisor
    return divisor


def nasdaq_divisors(months: np.ndarray) -> np.ndarray:
    """
    Vectorized nasdaq_divisor.
    """
    months = np.asarray(months)
    divisors = np.full(months.shape, EchoConfig.NASDAQ_EARLY_DIVISOR, dtype=float)
    for (year, calendar_month), next_divisor in EchoConfig.NASDAQ_SCHEDULE:
        divisors[months >= MonthIndex.from_year_month(year, calendar_month).index] = next_divisor
    return divisors


def adjust_nasdaq_turnover(turnover_raw: float, month: int, exchange: Exchange) -> float:
    """
    Return turnover with NASDAQ double counting of volume removed. NYSE and AMEX values are returned unchanged.

    Apply exactly once per observation: the adjustment is a division, not a projection.
    :param turnover_raw: Shares traded over shares outstanding, as reported.
    :param month: Month index of the observation.
    :param exchange: Listing exchange of the stock in that month.
    """
    if turnover_raw < 0:
        raise EchoDomainError(f"TURNOVER: {turnover_raw} is negative ({month_label(month)}).")
    if Exchange.from_code(exchange) is not Exchange.NASDAQ:
        return turnover_raw
    return turnover_raw / nasdaq_divisor(month)


# -- PANEL DATASET -- #

class PanelDataset(object):
    """
    The PanelDataset class holds stock-month observations ordered by (month, stock_id).

    It is immutable after construction: every accessor hands out data that the dataset does not share
    with its callers for writing, so read operations may be run concurrently from several workers.
    """

    COLUMNS = ['stock_id', 'month', 'ret', 'price', 'turnover_raw', 'turnover',
               'market_equity', 'book_to_market', 'exchange']

    def __init__(self, frame: pd.DataFrame, report: Optional[LoadReport] = None):
        frame = frame[self.COLUMNS].sort_values(['month', 'stock_id'], kind='mergesort').reset_index(drop=True)
        duplicated = frame.duplicated(['stock_id', 'month'])
        if duplicated.any():
            first = frame.loc[duplicated].iloc[0]
            raise EchoDataError(
                f"PANEL: duplicate observation for stock {first.stock_id} in {month_label(int(first.month))}."
            )
        self._frame = frame
        self._wide: Dict[str, pd.DataFrame] = {}
        self.report = report if report is not None else LoadReport(len(frame), len(frame))
        if len(frame):
            self.month_range: Tuple[int, int] = (int(frame['month'].iloc[0]), int(frame['month'].iloc[-1]))
        else:
            self.month_range = (0, -1)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, report: Optional[LoadReport] = None):
        """
        Create a dataset from an in-memory frame whose columns are PanelObservation field names
        (turnover_raw, not turnover). Prices are made positive and the NASDAQ adjustment is applied.
        """
        missing = [name for name in PanelSchema.MANDATORY if name not in frame.columns]
        if missing:
            raise EchoDataError(f"PANEL: missing mandatory column(s) {', '.join(missing)}.")
        frame = frame.copy()
        if 'book_to_market' not in frame.columns:
            frame['book_to_market'] = np.nan
        frame['stock_id'] = frame['stock_id'].astype(str)
        frame['month'] = frame['month'].astype(np.int64)
        codes = frame['exchange'].map(lambda code: code.name if isinstance(code, Exchange) else str(code))
        frame['exchange'] = codes.map({code: Exchange.from_code(code).name for code in codes.unique()})
        for name in ('ret', 'price', 'turnover_raw', 'market_equity', 'book_to_market'):
            frame[name] = frame[name].astype(float)
        frame['price'] = frame['price'].abs()
        if (frame['turnover_raw'] < 0).any():
            raise EchoDomainError("TURNOVER: negative turnover in panel.")
        frame.loc[frame['market_equity'] <= 0, 'market_equity'] = np.nan
        nasdaq = (frame['exchange'] == Exchange.NASDAQ.name).to_numpy()
        divisors = np.where(nasdaq, nasdaq_divisors(frame['month'].to_numpy()), 1.0)
        frame['turnover'] = frame['turnover_raw'].to_numpy() / divisors
        return cls(frame, report)

    def __len__(self) -> int:
        return len(self._frame)

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    def observations(self) -> Iterator[PanelObservation]:
        for row in self._frame.itertuples(index=False):
            yield PanelObservation(
                stock_id=row.stock_id, month=int(row.month), ret=row.ret, price=row.price,
                turnover_raw=row.turnover_raw, market_equity=row.market_equity,
                book_to_market=row.book_to_market, exchange=Exchange[row.exchange]
            )

    def stocks(self) -> List[str]:
        return sorted(self._frame['stock_id'].unique())

    def months(self) -> List[int]:
        return list(range(self.month_range[0], self.month_range[1] + 1))

    def contains_month(self, month: int) -> bool:
        return self.month_range[0] <= month <= self.month_range[1]

    def at_month(self, month: int) -> pd.DataFrame:
        """
        Return the observations of one month, indexed by stock_id.
        """
        rows = self._frame[self._frame['month'] == month]
        return rows.set_index('stock_id')

    def wide(self, column: str) -> pd.DataFrame:
        """
        Return one column as a months x stocks table covering the full month range;
        stock-months without an observation are NaN.
        """
        if column not in self._wide:
            table = self._frame.pivot(index='month', columns='stock_id', values=column)
            if column != 'exchange':
                table = table.astype(float)
            self._wide[column] = table.reindex(self.months())
        return self._wide[column].copy()

    def stock_series(self, stock_id: str, column: str) -> pd.Series:
        """
        Return one stock's column as a series indexed by month, only for months it is observed.
        """
        rows = self._frame[self._frame['stock_id'] == stock_id]
        return pd.Series(rows[column].to_numpy(), index=rows['month'].to_numpy(), name=column)


def eligible_stocks(dataset: PanelDataset, month: int, min_price: float = EchoConfig.MIN_PRICE) -> Set[str]:
    """
    Return the stocks observed in `month` with a price of at least `min_price` and a market equity.
    A price of exactly 5.00 is eligible; the exclusion applies to prices below the threshold.
    """
    if not dataset.contains_month(month):
        raise EchoDomainError(
            f"MONTH: {month_label(month)} is outside the dataset range "
            f"{month_label(dataset.month_range[0])}..{month_label(dataset.month_range[1])}."
        )
    rows = dataset.at_month(month)
    keep = (rows['price'] >= min_price) & rows['market_equity'].notna()
    return set(rows.index[keep])


def eligibility_table(dataset: PanelDataset, min_price: float = EchoConfig.MIN_PRICE,
                      rule: str = 'formation') -> pd.DataFrame:
    """
    Return a months x stocks boolean table of eligible_stocks for every month.

    :param rule: 'formation' applies the price filter in the filter month only; 'history' additionally
    requires every observed price in the preceding twelve months to pass, for users who read the
    price screen as applying to the whole signal history.
    """
    price = dataset.wide('price')
    ok = (price >= min_price) & dataset.wide('market_equity').notna()
    if rule == 'history':
        failed = (price < min_price).astype(float).rolling(12, min_periods=1).max()
        ok &= failed.fillna(0.0) == 0.0
    elif rule != 'formation':
        raise EchoDomainError(f"PRICE FILTER: '{rule}' is neither 'formation' nor 'history'.")
    return ok


# -- LOADING -- #

def _open_text(source: Source) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding='utf-8')
    return source.read()


def _detect_delimiter(text: str, delimiter: Optional[str]) -> str:
    if delimiter:
        return delimiter
    header = text.splitlines()[0] if text else ''
    counts = {candidate: header.count(candidate) for candidate in (',', '\t', '|')}
    return max(counts, key=lambda candidate: counts[candidate])


def parse_month_column(values: pd.Series) -> pd.Series:
    """
    Return month indices for a column of YYYYMM or YYYY-MM strings; unparseable cells become NaN.
    """
    text = values.astype(str).str.strip()
    parts = text.str.extract(EchoConfig.COMPACT_MONTH_RE.pattern)
    iso = text.str.extract(EchoConfig.ISO_MONTH_RE.pattern)
    parts = parts.fillna(iso)
    year = pd.to_numeric(parts[0], errors='coerce')
    month = pd.to_numeric(parts[1], errors='coerce')
    month = month.where((month >= 1) & (month <= 12))
    return (year - EchoConfig.EPOCH_YEAR) * 12 + (month - EchoConfig.EPOCH_MONTH)


def load_panel(source: Source, schema: Optional[PanelSchema] = None) -> PanelDataset:
    """
    Read a delimited stock-month panel and return a PanelDataset with the NASDAQ adjustment applied.

    Rows whose mandatory fields cannot be used are dropped and counted in the dataset's load report.
    :param source: A path or an open text stream; the delimiter (comma, tab or pipe) is auto-detected
    unless the schema fixes it.
    :param schema: Column-name mapping for the input's headers.
    """
    schema = schema or PanelSchema()
    text = _open_text(source)
    raw = pd.read_csv(io.StringIO(text), sep=_detect_delimiter(text, schema.delimiter), dtype=str,
                      keep_default_na=False, quoting=csv.QUOTE_MINIMAL)
    raw.columns = [str(name).strip() for name in raw.columns]

    missing = [name for name in PanelSchema.MANDATORY if schema.header_for(name) not in raw.columns]
    if missing:
        raise EchoDataError(
            "PANEL: missing mandatory column(s) " + ", ".join(f"'{schema.header_for(name)}'" for name in missing) + "."
        )

    report = LoadReport(rows_read=len(raw))

    def column(name: str) -> pd.Series:
        header = schema.header_for(name)
        if header in raw.columns:
            return raw[header].str.strip()
        return pd.Series('', index=raw.index)

    unparseable: Dict[str, pd.Series] = {}

    def numeric(name: str) -> pd.Series:
        text = column(name)
        values = pd.to_numeric(text.replace('', np.nan), errors='coerce')
        unparseable[name] = (text != '') & values.isna()
        return values

    frame = pd.DataFrame({
        'stock_id': column('stock_id'),
        'month': parse_month_column(column('month')),
        'ret': numeric('ret'),
        'price': numeric('price'),
        'turnover_raw': numeric('turnover_raw'),
        'market_equity': numeric('market_equity'),
        'book_to_market': numeric('book_to_market'),
    })
    exchange_text = column('exchange').str.upper()
    known = exchange_text.isin(['NYSE', 'AMEX', 'NASDAQ', 'N', 'A', 'Q', '1', '2', '3'])

    checks = [
        ('missing stock_id', frame['stock_id'] == ''),
        ('bad month', frame['month'].isna()),
    ] + [
        (f"unparseable {name}", unparseable[name]) for name in ('ret', 'price', 'turnover_raw', 'market_equity')
    ] + [
        ('missing price', frame['price'].isna()),
        ('bad exchange', ~known),
        ('negative turnover', frame['turnover_raw'] < 0),
        ('non-positive market equity', frame['market_equity'] <= 0),
    ]
    keep = pd.Series(True, index=frame.index)
    for reason, failed in checks:
        failed = failed & keep
        report.drop(reason, failed.sum())
        keep &= ~failed

    frame = frame.loc[keep].copy()
    frame['exchange'] = exchange_text.loc[keep]
    report.rows_kept = len(frame)
    if report.dropped:
        warnings.warn(f"PANEL: dropped {sum(report.dropped.values())} of {report.rows_read} rows.",
                      category=UserWarning, stacklevel=2)
    logger.info("Loaded panel: %d rows read, %d kept", report.rows_read, report.rows_kept)
    return PanelDataset.from_frame(frame, report)


def write_panel(dataset: PanelDataset, target: Source, delimiter: str = ','):
    """
    Serialize a dataset in the layout load_panel reads, carrying the unadjusted turnover so that a reload
    reproduces every retained row exactly.
    """
    frame = dataset.frame
    out = pd.DataFrame({
        'stock_id': frame['stock_id'],
        'month': [MonthIndex(int(m)).compact() for m in frame['month']],
        'ret': frame['ret'],
        'price': frame['price'],
        'turnover_raw': frame['turnover_raw'],
        'market_equity': frame['market_equity'],
        'book_to_market': frame['book_to_market'],
        'exchange': frame['exchange'],
    })
    if isinstance(target, (str, Path)):
        out.to_csv(target, sep=delimiter, index=False, na_rep='', lineterminator='\n')
    else:
        target.write(out.to_csv(sep=delimiter, index=False, na_rep='', lineterminator='\n'))


# -- FACTORS -- #

FACTOR_ALIASES = {
    'MKT': 'MKT', 'MKT-RF': 'MKT', 'MKT_RF': 'MKT', 'MKTRF': 'MKT',
    'SMB': 'SMB', 'HML': 'HML',
    'STR': 'STR', 'ST_REV': 'STR', 'ST REV': 'STR', 'REVERSAL': 'STR',
    'LIQ': 'LIQ', 'LIQ_V': 'LIQ', 'PS_VWF': 'LIQ', 'LIQUIDITY': 'LIQ',
    'RF': 'RF',
}


class FactorTable(object):
    """
    Monthly factor returns in decimal units, indexed by month. Which factors a study needs is only known
    when it asks for them, so coverage is checked by `require` rather than at load time.
    """

    def __init__(self, frame: pd.DataFrame):
        if frame.index.has_duplicates:
            month = int(frame.index[frame.index.duplicated()][0])
            raise EchoDataError(f"FACTORS: duplicate month {month_label(month)}.")
        self._frame = frame.sort_index()

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    @property
    def factors(self) -> List[str]:
        return list(self._frame.columns)

    def has(self, name: str) -> bool:
        return name in self._frame.columns

    def __getitem__(self, name: str) -> pd.Series:
        return self.require([name])[name]

    def require(self, names: Iterable[str], months: Optional[Iterable[int]] = None) -> pd.DataFrame:
        """
        Return the named factors for the given months, raising EchoDataError if a factor is absent
        or any requested month is missing.
        """
        names = list(names)
        absent = [name for name in names if name not in self._frame.columns]
        if absent:
            raise EchoDataError(f"FACTORS: no {', '.join(absent)} column in the factor table.")
        table = self._frame[names]
        if months is None:
            return table.copy()
        months = list(months)
        table = table.reindex(months)
        gaps = table.isna().any(axis=1)
        if gaps.any():
            first = int(table.index[gaps.to_numpy()][0])
            raise EchoDataError(f"FACTORS: {names} not available for {month_label(first)} "
                                f"({int(gaps.sum())} month(s) missing).")
        return table

    def combine(self, other: 'FactorTable') -> 'FactorTable':
        """
        Return a table holding the factors of both tables (for example French's FF3 file and a liquidity file).
        """
        overlap = set(self.factors) & set(other.factors)
        if overlap:
            raise EchoDataError(f"FACTORS: {sorted(overlap)} supplied twice.")
        return FactorTable(self._frame.join(other.frame, how='outer'))


def load_factor_table(source: Source, percent: bool = True) -> FactorTable:
    """
    Read a French-library style factor file: month (YYYYMM) in the first column, one column per factor.

    :param percent: Values are percent per month (True, the French convention) or already decimal.
    """
    text = _open_text(source)
    raw = pd.read_csv(io.StringIO(text), sep=_detect_delimiter(text, None), dtype=str, keep_default_na=False)
    raw.columns = [str(name).strip() for name in raw.columns]
    if len(raw.columns) < 2:
        raise EchoDataError("FACTORS: need a month column and at least one factor column.")
    months = parse_month_column(raw.iloc[:, 0])
    if months.isna().any():
        bad = raw.iloc[:, 0][months.isna()].iloc[0]
        raise EchoFormatError(f"FACTORS: '{bad}' is not a YYYYMM month.")

    columns = {}
    for header in raw.columns[1:]:
        name = FACTOR_ALIASES.get(header.upper(), header)
        cells = raw[header].str.strip()
        values = pd.to_numeric(cells.replace('', np.nan), errors='coerce')
        unparseable = values.isna() & (cells != '')
        if unparseable.any():
            raise EchoFormatError(f"FACTORS: '{cells[unparseable].iloc[0]}' in column {header} is not a number.")
        columns[name] = (values / EchoConfig.PERCENT if percent else values).to_numpy()
    frame = pd.DataFrame(columns, index=pd.Index(months.astype(np.int64).to_numpy(), name='month'))
    table = FactorTable(frame)
    logger.info("Loaded factors %s for %d months", table.factors, len(frame))
    return table


def write_factor_table(table: FactorTable, target: Source):
    """
    Write a factor table in French-library layout (YYYYMM, percent values).
    """
    frame = table.frame * EchoConfig.PERCENT
    frame.index = [MonthIndex(int(m)).compact() for m in frame.index]
    frame.index.name = 'month'
    text = frame.to_csv(lineterminator='\n')
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding='utf-8')
    else:
        target.write(text)


def observations_frame(observations: Iterable[PanelObservation]) -> pd.DataFrame:
    """
    Return a frame suitable for PanelDataset.from_frame built from PanelObservation records.
    """
    return pd.DataFrame([{
        'stock_id': o.stock_id, 'month': o.month, 'ret': o.ret, 'price': o.price,
        'turnover_raw': o.turnover_raw, 'market_equity': o.market_equity,
        'book_to_market': o.book_to_market, 'exchange': o.exchange.name,
    } for o in observations])
