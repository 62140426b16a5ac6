"""
Wavelet Engine

Splits a monthly turnover series into seven additive components with the Daubechies-2 filter pair:
six wavelet details and the level-6 smooth. Components are numbered as scales, smoothest first:

    scale 0 = level-6 smooth, scale k = level (7 - k) detail for k = 1..6,

so scale 6 is the finest (level-1) detail. Every component has one value per month of the decomposed
segment and the seven of them sum back to the segment.

Two transforms are available. The default, 'dwt', is the decimated multiresolution analysis from
PyWavelets: its components are mutually orthogonal, so the cross-scale correlations of the turnover
signals stay near zero. 'modwt' is the maximal-overlap (undecimated) pyramid; it is shift invariant but
its neighbouring details overlap in frequency and correlate strongly. Both extend the segment by
reflection at its ends.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd
import pywt
from numpy.lib.stride_tricks import sliding_window_view

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.exceptions import EchoConfigError, EchoDataError, EchoDomainError
from npm_turnover_echo.month_index import MonthIndex
from npm_turnover_echo.panel_data import PanelDataset

logger = logging.getLogger(__name__)


class DecompositionMode(Enum):
    FULL_SAMPLE = 'full_sample'
    CAUSAL = 'causal'


TRANSFORMS = ('dwt', 'modwt')


@dataclass(frozen=True)
class FilterPair:
    scaling_filter: Tuple[float, ...]
    wavelet_filter: Tuple[float, ...]


@dataclass(frozen=True)
class ScaleLabel:
    scale: int
    cycle_band: str


@dataclass(frozen=True)
class ScaleDecomposition:
    """
    The seven scale components of one contiguous turnover segment.

    `components[s]` is the scale-s series; `series` holds the turnover values the components add up to,
    month by month over `month_span` (inclusive).
    """
    stock_id: Optional[str]
    month_span: Tuple[int, int]
    components: np.ndarray
    series: np.ndarray
    mode: DecompositionMode
    transform: str = EchoConfig.TRANSFORM

    def __post_init__(self):
        length = self.month_span[1] - self.month_span[0] + 1
        if self.components.shape != (EchoConfig.SCALE_COUNT, length):
            raise EchoDataError(
                f"DECOMPOSITION: components of shape {self.components.shape} do not cover "
                f"{EchoConfig.SCALE_COUNT} scales x {length} months."
            )

    def __len__(self) -> int:
        return self.components.shape[1]

    def months(self) -> range:
        return range(self.month_span[0], self.month_span[1] + 1)

    def covers(self, month: int) -> bool:
        return self.month_span[0] <= month <= self.month_span[1]

    def component(self, scale: int) -> np.ndarray:
        return self.components[verified_scale(scale)]

    def value(self, scale: int, month: int) -> float:
        """
        Return the scale component at a month, or NaN when the month is outside the decomposed span.
        """
        if not self.covers(month):
            return math.nan
        return float(self.component(scale)[month - self.month_span[0]])


def verified_scale(scale: int) -> int:
    """
    Return the scale number unaltered if it is valid; raise an exception otherwise.
    """
    if isinstance(scale, (int, np.integer)) and not isinstance(scale, bool) and 0 <= scale < EchoConfig.SCALE_COUNT:
        return int(scale)
    raise EchoDomainError(f"SCALE: {scale} is an invalid input. Must be between 0 and {EchoConfig.SCALE_COUNT - 1} inc.")


def db2_filters() -> FilterPair:
    """
    Return the 4-tap Daubechies-2 scaling filter, ((1+√3), (3+√3), (3−√3), (1−√3)) / (4√2),
    and its quadrature-mirror wavelet filter g[k] = (−1)^k h[3−k].
    """
    wavelet = pywt.Wavelet(EchoConfig.WAVELET_NAME)
    return FilterPair(tuple(wavelet.rec_lo), tuple(wavelet.rec_hi))


def scale_cycle_label(scale: int) -> ScaleLabel:
    """
    Return the reporting label of a scale: scale 6 is '0~2months', scale 0 is '>64months'.
    """
    scale = verified_scale(scale)
    return ScaleLabel(scale, EchoConfig.SCALE_CYCLE_LABELS[scale])


def scale_level(scale: int) -> int:
    """
    Return the wavelet level behind a scale: the detail level for scales 1..6, the smooth's level for scale 0.
    """
    scale = verified_scale(scale)
    return EchoConfig.LEVELS if scale == 0 else EchoConfig.SCALE_COUNT - scale


def dyadic_band(scale: int) -> Tuple[float, float]:
    """
    Return the (shortest, longest) period in months that the scale's component nominally captures.

    A level-j detail of monthly data covers periods 2^j to 2^(j+1); the level-6 smooth covers everything
    longer than 2^7. These bands sit one octave above the reporting labels of scale_cycle_label.
    """
    level = scale_level(scale)
    if verified_scale(scale) == 0:
        return float(2 ** (level + 1)), math.inf
    return float(2 ** level), float(2 ** (level + 1))


def scale_for_period(period: float) -> int:
    """
    Return the scale whose dyadic band holds a cycle of the given period: 2^j < period <= 2^(j+1) maps to level j.
    """
    if period <= 2:
        raise EchoDomainError(f"PERIOD: {period} months is at or below the two-month Nyquist limit.")
    level = max(1, math.ceil(math.log2(period)) - 1)
    if level > EchoConfig.LEVELS:
        return 0
    return EchoConfig.SCALE_COUNT - level


# -- TRANSFORMS -- #

def _reflect(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, x[..., ::-1]], axis=-1)


def _modwt_mra(x: np.ndarray, levels: int) -> np.ndarray:
    """
    Return the maximal-overlap multiresolution analysis of x along its last axis as an array of shape
    (levels + 1, *x.shape): the smooth first, then details from the coarsest level to level 1.
    The series is treated as periodic; callers reflect it first.
    """
    filters = db2_filters()
    g = np.asarray(filters.scaling_filter) / math.sqrt(2.0)
    h = np.asarray(filters.wavelet_filter) / math.sqrt(2.0)

    def analyse(v: np.ndarray, taps: np.ndarray, step: int) -> np.ndarray:
        return sum(taps[k] * np.roll(v, step * k, axis=-1) for k in range(len(taps)))

    def synthesise(v: np.ndarray, taps: np.ndarray, step: int) -> np.ndarray:
        return sum(taps[k] * np.roll(v, -step * k, axis=-1) for k in range(len(taps)))

    details = []
    smooth = x
    for level in range(1, levels + 1):
        step = 2 ** (level - 1)
        details.append(analyse(smooth, h, step))
        smooth = analyse(smooth, g, step)

    components = np.empty((levels + 1,) + x.shape)
    for level in range(levels, 0, -1):
        part = synthesise(details[level - 1], h, 2 ** (level - 1))
        for lower in range(level - 1, 0, -1):
            part = synthesise(part, g, 2 ** (lower - 1))
        components[levels + 1 - level] = part
    part = smooth
    for level in range(levels, 0, -1):
        part = synthesise(part, g, 2 ** (level - 1))
    components[0] = part
    return components


def _dwt_mra(x: np.ndarray, levels: int) -> np.ndarray:
    """
    Return the decimated multiresolution analysis of x along its last axis, laid out as _modwt_mra's result.
    PyWavelets' 'symmetric' mode provides the reflection at both ends.
    """
    length = x.shape[-1]
    with warnings.catch_warnings():
        # Level 6 exceeds pywt's suggested maximum for short segments; boundary effects are accepted.
        warnings.simplefilter('ignore', UserWarning)
        coefficients = pywt.wavedec(x, EchoConfig.WAVELET_NAME, mode='symmetric', level=levels, axis=-1)
        components = np.empty((levels + 1,) + x.shape)
        for keep in range(levels + 1):
            isolated = [c if i == keep else np.zeros_like(c) for i, c in enumerate(coefficients)]
            rebuilt = pywt.waverec(isolated, EchoConfig.WAVELET_NAME, mode='symmetric', axis=-1)
            components[keep] = rebuilt[..., :length]
    return components


def multiresolution(x: np.ndarray, transform: str = EchoConfig.TRANSFORM,
                    levels: int = EchoConfig.LEVELS) -> np.ndarray:
    """
    Return the (levels + 1) additive components of x (last axis), index = scale.
    Leading axes are decomposed independently, so a stocks x months block is handled in one call.
    """
    x = np.asarray(x, dtype=float)
    if transform == 'modwt':
        return _modwt_mra(_reflect(x), levels)[..., :x.shape[-1]]
    if transform == 'dwt':
        return _dwt_mra(x, levels)
    raise EchoConfigError(f"TRANSFORM: '{transform}' is not one of {', '.join(TRANSFORMS)}.")


def fill_single_gaps(values: np.ndarray, max_gap: int = EchoConfig.MAX_FILLED_GAP) -> np.ndarray:
    """
    Return a copy of values with runs of at most max_gap NaNs replaced by the preceding value.
    Longer runs, and NaNs with nothing before them, are left in place.
    """
    filled = np.array(values, dtype=float)
    missing = np.isnan(filled)
    index = 0
    while index < len(filled):
        if not missing[index]:
            index += 1
            continue
        end = index
        while end < len(filled) and missing[end]:
            end += 1
        if index > 0 and end < len(filled) and end - index <= max_gap:
            filled[index:end] = filled[index - 1]
        index = end
    return filled


def decompose(series: Sequence[float], mode: Union[str, DecompositionMode] = DecompositionMode.FULL_SAMPLE, *,
              transform: str = EchoConfig.TRANSFORM, first_month: int = 0, stock_id: Optional[str] = None,
              min_length: int = EchoConfig.MIN_SEGMENT_LENGTH, window: Optional[int] = None) -> ScaleDecomposition:
    """
    Decompose a contiguous monthly turnover series into its seven scale components.

    :param series: Turnover for consecutive months starting at first_month. Single-month gaps (NaN) are
    forward-filled; a longer gap is an error, split the series with turnover_segments first.
    :param mode: 'full_sample' decomposes the whole series at once. 'causal' recomputes the decomposition
    over the trailing window ending at each month and keeps only that month's values, so nothing after
    month t influences the components at t; the result starts at the first month with a full window.
    :param transform: 'dwt' (default) or 'modwt'.
    :param min_length: Shortest acceptable series (64 months: level-6 filters span about 2^6 samples).
    :param window: Causal window length, default EchoConfig.CAUSAL_WINDOW and never below min_length.
    """
    mode = DecompositionMode(mode)
    values = np.asarray(series, dtype=float)
    if values.ndim != 1:
        raise EchoDataError(f"SERIES: expected one dimension, got shape {values.shape}.")
    if np.isinf(values).any():
        raise EchoDataError("SERIES: turnover contains non-finite values.")
    values = fill_single_gaps(values)
    if np.isnan(values).any():
        raise EchoDataError("SERIES: turnover has a gap longer than one month or a leading gap.")
    if len(values) < min_length:
        raise EchoDataError(f"SERIES: {len(values)} months is shorter than the minimum of {min_length}.")

    if mode is DecompositionMode.FULL_SAMPLE:
        components = multiresolution(values, transform)
        span = (first_month, first_month + len(values) - 1)
        return ScaleDecomposition(stock_id, span, components, values, mode, transform)

    window = max(window or EchoConfig.CAUSAL_WINDOW, min_length)
    if len(values) < window:
        raise EchoDataError(f"SERIES: {len(values)} months is shorter than the causal window of {window}.")
    trailing = sliding_window_view(values, window)
    components = multiresolution(trailing, transform)[..., -1]
    span = (first_month + window - 1, first_month + len(values) - 1)
    return ScaleDecomposition(stock_id, span, components, values[window - 1:], mode, transform)


def reconstruct(decomp: ScaleDecomposition) -> np.ndarray:
    """
    Return the elementwise sum of the seven components, which equals the decomposed series.
    """
    return decomp.components.sum(axis=0)


# -- PANELS -- #

def turnover_segments(months: Sequence[int], values: Sequence[float],
                      max_gap: int = EchoConfig.MAX_FILLED_GAP) -> List[Tuple[int, np.ndarray]]:
    """
    Split one stock's turnover history into contiguous (first_month, values) segments.

    Months may be missing from `months` or carry NaN; gaps of at most max_gap months are forward-filled,
    longer gaps end one segment and start the next.
    """
    months = np.asarray(months, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    present = ~np.isnan(values)
    if not present.any():
        return []
    months, values = months[present], values[present]
    order = np.argsort(months, kind='mergesort')
    months, values = months[order], values[order]
    full = np.full(months[-1] - months[0] + 1, np.nan)
    full[months - months[0]] = values
    filled = fill_single_gaps(full, max_gap)

    segments = []
    valid = ~np.isnan(filled)
    edges = np.flatnonzero(np.diff(np.concatenate([[False], valid, [False]]).astype(int)))
    for start, stop in zip(edges[::2], edges[1::2]):
        segments.append((int(months[0] + start), filled[start:stop]))
    return segments


class PanelDecomposition(object):
    """
    Scale decompositions of every stock in a panel, one per usable contiguous segment.
    """

    def __init__(self, decompositions: Dict[str, List[ScaleDecomposition]], mode: DecompositionMode,
                 transform: str, skipped: Dict[str, int]):
        self._decompositions = decompositions
        self.mode = mode
        self.transform = transform
        self.skipped = skipped

    def stocks(self) -> List[str]:
        return sorted(self._decompositions)

    def segments(self, stock_id: str) -> List[ScaleDecomposition]:
        return list(self._decompositions.get(stock_id, []))

    def __iter__(self) -> Iterator[ScaleDecomposition]:
        for stock_id in self.stocks():
            yield from self._decompositions[stock_id]

    def __len__(self) -> int:
        return sum(len(items) for items in self._decompositions.values())

    def component_frame(self, scale: int) -> pd.DataFrame:
        """
        Return one scale as a long frame with columns stock_id, month and value.
        """
        scale = verified_scale(scale)
        parts = [pd.DataFrame({'stock_id': d.stock_id, 'month': np.arange(d.month_span[0], d.month_span[1] + 1),
                               'value': d.components[scale]}) for d in self]
        if not parts:
            return pd.DataFrame(columns=['stock_id', 'month', 'value'])
        return pd.concat(parts, ignore_index=True)


def _chunks(items: List, size: int) -> Iterator[List]:
    for start in range(0, len(items), size):
        yield items[start:start + size]


def decompose_panel(dataset: PanelDataset, mode: Union[str, DecompositionMode] = DecompositionMode.FULL_SAMPLE, *,
                    transform: str = EchoConfig.TRANSFORM, min_length: int = EchoConfig.MIN_SEGMENT_LENGTH,
                    window: Optional[int] = None, log_turnover: bool = False,
                    workers: int = 1, batch_size: int = 250) -> PanelDecomposition:
    """
    Decompose the turnover of every stock in the dataset.

    Each stock is split into contiguous segments (turnover_segments); segments shorter than min_length,
    or than the causal window, are skipped and counted. Full-sample segments with the same span are
    decomposed together in blocks of batch_size stocks. Work is spread over `workers` threads and merged
    in stock order, so the result does not depend on the worker count.
    :param log_turnover: Decompose log turnover; zero turnover months are then treated as missing.
    """
    mode = DecompositionMode(mode)
    if transform not in TRANSFORMS:
        raise EchoConfigError(f"TRANSFORM: '{transform}' is not one of {', '.join(TRANSFORMS)}.")
    required = min_length if mode is DecompositionMode.FULL_SAMPLE else max(window or EchoConfig.CAUSAL_WINDOW,
                                                                             min_length)
    wide = dataset.wide('turnover')
    if log_turnover:
        wide = np.log(wide.where(wide > 0))
    months = wide.index.to_numpy()

    pending: Dict[Tuple[int, int], List[Tuple[str, np.ndarray]]] = {}
    skipped: Dict[str, int] = {}
    for stock_id in wide.columns:
        for first, values in turnover_segments(months, wide[stock_id].to_numpy()):
            if len(values) < required:
                skipped[stock_id] = skipped.get(stock_id, 0) + 1
                continue
            pending.setdefault((first, len(values)), []).append((stock_id, values))

    def full_sample_block(key: Tuple[int, int], block: List[Tuple[str, np.ndarray]]) -> List[ScaleDecomposition]:
        first, length = key
        stacked = np.vstack([values for _, values in block])
        components = multiresolution(stacked, transform)
        span = (first, first + length - 1)
        return [ScaleDecomposition(stock_id, span, components[:, row, :], values, mode, transform)
                for row, (stock_id, values) in enumerate(block)]

    def causal_block(key: Tuple[int, int], block: List[Tuple[str, np.ndarray]]) -> List[ScaleDecomposition]:
        return [decompose(values, mode, transform=transform, first_month=key[0], stock_id=stock_id,
                          min_length=min_length, window=window) for stock_id, values in block]

    run = full_sample_block if mode is DecompositionMode.FULL_SAMPLE else causal_block
    jobs = [(key, block) for key in sorted(pending) for block in _chunks(pending[key], batch_size)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: run(*job), jobs))
    else:
        results = [run(*job) for job in jobs]

    decompositions: Dict[str, List[ScaleDecomposition]] = {}
    for block in results:
        for item in block:
            decompositions.setdefault(item.stock_id, []).append(item)
    for items in decompositions.values():
        items.sort(key=lambda d: d.month_span[0])
    logger.info("Decomposed %d segments of %d stocks (%s, %s); %d short segments skipped",
                sum(len(v) for v in decompositions.values()), len(decompositions), mode.value, transform,
                sum(skipped.values()))
    return PanelDecomposition(decompositions, mode, transform, skipped)


def write_decomposition(decomposition: Union[PanelDecomposition, Sequence[ScaleDecomposition]],
                        target: Union[str, Path, TextIO]):
    """
    Write decompositions for audit: stock_id, month, scale0..scale6 and the reconstructed turnover.
    """
    frames = []
    for item in decomposition:
        frame = pd.DataFrame({'stock_id': item.stock_id,
                              'month': [MonthIndex(int(m)).compact() for m in item.months()]})
        for scale in range(EchoConfig.SCALE_COUNT):
            frame[f'scale{scale}'] = item.components[scale]
        frame['reconstructed'] = reconstruct(item)
        frames.append(frame)
    columns = ['stock_id', 'month'] + [f'scale{s}' for s in range(EchoConfig.SCALE_COUNT)] + ['reconstructed']
    out = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    text = out.to_csv(index=False, lineterminator='\n')
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding='utf-8')
    else:
        target.write(text)
