"""
Month Index

All date arithmetic in the package is done in whole months. A month is stored as a single integer,
the number of months since the epoch (1969-01 is month 0, 1968-12 is month -1), so that windows such
as "the last twelve months to the last seventh month" are plain integer ranges.
MonthIndex wraps that integer with parsing and display; MonthString does the parsing.
"""

from functools import total_ordering
from numbers import Integral
from typing import Match, Tuple, Union

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.exceptions import EchoFormatError, TurnoverEchoError


class MonthString(object):
    """
    The MonthString Class

    A class that will take a month string in compact (YYYYMM) or ISO (YYYY-MM) notation and parse it into
    a (year, month) pair suitable for instantiating a MonthIndex object via its from_year_month method.
    """
    YearMonth = Tuple[int, int]

    def __init__(self, month_string: str):
        """
        Constructor

        Attempts to match the given string against the RegEx for a compact or ISO month string.
        Raises an exception if the string matches neither, or if the month element is not 1 to 12.

        :param month_string: A month string such as '199907' or '1999-07'.
        """
        try:
            pattern_match = EchoConfig.COMPACT_MONTH_RE.match(month_string)
        except TypeError:
            raise TurnoverEchoError(f"MONTH STRING: {month_string.__class__} cannot be parsed as a month string.")

        if not pattern_match:
            pattern_match = EchoConfig.ISO_MONTH_RE.match(month_string)
        if not pattern_match:
            raise EchoFormatError(f"MONTH STRING: '{month_string}' is an invalid month string.")
        self.year, self.month = self.parsed_year_month(pattern_match)
        if not 1 <= self.month <= 12:
            raise EchoFormatError(f"MONTH STRING: '{month_string}' has no month {self.month}.")

    def elements(self) -> YearMonth:
        """
        Return the (year, month) pair.
        """
        return self.year, self.month

    @staticmethod
    def parsed_year_month(m: Match) -> YearMonth:
        return int(m.group(1)), int(m.group(2))


@total_ordering
class MonthIndex(object):
    """
    The MonthIndex class is a month-resolution date: an integer count of months since January 1969
    that knows how to show itself as YYYY-MM and how to move forwards and backwards by whole months.
    """

    def __init__(self, index: int):
        self.index = index

    @property
    def index(self) -> int:
        return self._index

    @index.setter
    def index(self, new_value: int):
        self._index = self.sanitized_index(new_value)

    @property
    def year(self) -> int:
        return EchoConfig.EPOCH_YEAR + (self._index + EchoConfig.EPOCH_MONTH - 1) // 12

    @property
    def month(self) -> int:
        return (self._index + EchoConfig.EPOCH_MONTH - 1) % 12 + 1

    @classmethod
    def from_year_month(cls, year: int, month: int):
        """
        Create a MonthIndex from a calendar year and month (1 to 12).
        """
        if not 1 <= month <= 12:
            raise EchoFormatError(f"MONTH: {month} is an invalid input. Must be between 1 and 12 inclusive.")
        return cls((year - EchoConfig.EPOCH_YEAR) * 12 + (month - EchoConfig.EPOCH_MONTH))

    @classmethod
    def from_string(cls, month_string: str):
        """
        For a given month string in compact (YYYYMM) or ISO (YYYY-MM) notation, return the corresponding MonthIndex.
        """
        return cls.from_year_month(*MonthString(month_string).elements())

    @staticmethod
    def sanitized_index(value: int) -> int:
        """
        Return the value as an int or raise an error if it cannot be converted without losing information.
        """
        if isinstance(value, bool):
            raise TurnoverEchoError(f"MONTH INDEX: {value.__class__} cannot be used as a month index.")
        try:
            converted = int(value)
        except ValueError:
            raise TurnoverEchoError(f"MONTH INDEX: Cannot convert [{value}] to an integer value.")
        except TypeError:
            raise TurnoverEchoError(f"MONTH INDEX: {value.__class__} cannot be converted to an integer value.")
        if converted != value:
            raise TurnoverEchoError(f"MONTH INDEX: {value} is not a whole number of months.")
        return converted

    def compact(self) -> str:
        return f"{self.year:04d}{self.month:02d}"

    def iso(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    # -- MONTH ARITHMETIC -- #

    def __add__(self, months: int):
        if not isinstance(months, Integral):
            return NotImplemented
        return MonthIndex(self._index + int(months))

    def __sub__(self, other):
        if isinstance(other, MonthIndex):
            return self._index - other.index
        if isinstance(other, Integral):
            return MonthIndex(self._index - int(other))
        return NotImplemented

    def __int__(self) -> int:
        return self._index

    def __index__(self) -> int:
        return self._index

    def __hash__(self) -> int:
        return hash(self._index)

    # -- MONTH COMPARISON -- #

    def __eq__(self, other) -> bool:
        if not isinstance(other, MonthIndex):
            return NotImplemented
        return self._index == other.index

    def __lt__(self, other) -> bool:
        if not isinstance(other, MonthIndex):
            return NotImplemented
        return self._index < other.index

    # -- str and repr -- #

    def __str__(self) -> str:
        return self.iso()

    def __repr__(self) -> str:
        return f"MonthIndex({self._index})"


MonthLike = Union[int, str, MonthIndex]


def parse_month(value: MonthLike) -> int:
    """
    Return the month index for an input that may already be an index, a MonthIndex,
    a YYYYMM integer (as French-library files store months) or a month string.

    Integers of six digits are read as YYYYMM; any other integer is taken to be an index already.
    """
    if isinstance(value, MonthIndex):
        return value.index
    if isinstance(value, str):
        return MonthIndex.from_string(value).index
    index = MonthIndex.sanitized_index(value)
    if 100_000 <= index <= 999_999:
        return MonthIndex.from_year_month(index // 100, index % 100).index
    return index


def month_label(index: int) -> str:
    """
    Return the YYYY-MM label of a month index.
    """
    return MonthIndex(index).iso()
