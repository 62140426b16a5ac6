import re


class EchoConfig(object):
    """
    Class serving as a namespace for constants used throughout npm_turnover_echo.
    """

    # Month indices count calendar months from the epoch: 1969-01 is month 0.
    EPOCH_YEAR: int = 1969
    EPOCH_MONTH: int = 1

    # Regex representation of the two accepted month notations: 199907 and 1999-07.
    COMPACT_MONTH_RE = re.compile(r'^\s*(\d{4})(\d{2})\s*$')
    ISO_MONTH_RE = re.compile(r'^\s*(\d{4})-(\d{1,2})\s*$')

    # Gao-Ritter NASDAQ volume adjustment as (first month with this divisor, divisor) pairs,
    # expressed as (year, month). Months before the first entry use NASDAQ_EARLY_DIVISOR.
    NASDAQ_EARLY_DIVISOR: float = 2.0
    NASDAQ_SCHEDULE = (
        ((2001, 1), 1.8),
        ((2002, 1), 1.6),
        ((2004, 1), 1.0),
    )

    # Eligibility: stocks priced below this in the filter month are excluded.
    MIN_PRICE: float = 5.0

    # Wavelet multiresolution layout: 6 detail levels plus the level-6 smooth = 7 scales.
    WAVELET_NAME: str = 'db2'
    # Decimated by default: its scale components are mutually orthogonal.
    TRANSFORM: str = 'dwt'
    LEVELS: int = 6
    SCALE_COUNT: int = 7
    MIN_SEGMENT_LENGTH: int = 64
    CAUSAL_WINDOW: int = 64
    MAX_FILLED_GAP: int = 1

    # Cycle labels reported for each scale, finest (6) to smoothest (0).
    SCALE_CYCLE_LABELS = {
        6: '0~2months',
        5: '2~4months',
        4: '4~8months',
        3: '8~16months',
        2: '16~32months',
        1: '32~64months',
        0: '>64months',
    }

    # Signals
    TURNOVER_AVERAGE_MONTHS: int = 3
    MIN_JOINT_OBSERVATIONS: int = 30

    # Inference
    MIN_MEAN_TEST_MONTHS: int = 24
    FMB_EXTRA_STOCKS: int = 5
    PERCENT: float = 100.0

    # Reporting
    DISPLAY_DECIMALS: int = 3
    FACTOR_NAMES = ('MKT', 'SMB', 'HML', 'STR', 'LIQ')
