"""
Synthetic Panels and Oracles

generate_panel builds a stock-month panel whose turnover carries planted sinusoidal cycles and whose
returns follow a planted linear cross-sectional model, so that every downstream estimate has a known
target. generate_factor_table supplies the factor returns the generated stocks load on.

brute_force_hac and spectral_band_energy are reference computations used by the tests. They use numpy
only and share no code with econometrics or wavelet_engine.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from npm_turnover_echo.echo_config import EchoConfig
from npm_turnover_echo.exceptions import EchoConfigError, EchoDomainError, EchoNumericalError
from npm_turnover_echo.month_index import parse_month
from npm_turnover_echo.panel_data import Exchange, FactorTable, PanelDataset, nasdaq_divisors
from npm_turnover_echo.wavelet_engine import dyadic_band, multiresolution, verified_scale

logger = logging.getLogger(__name__)

STOCK_STREAM = 0
COMMON_STREAM = 1
EXCHANGE_MIX = (('NYSE', 0.4), ('AMEX', 0.1), ('NASDAQ', 0.5))


@dataclass(frozen=True)
class PlantedCycle:
    """
    A sinusoid added to the turnover of a share of the stocks. The period defaults to the geometric
    middle of the scale's dyadic band; each stock draws its own phase.
    """
    scale: int
    amplitude: float
    share: float = 1.0
    period: Optional[float] = None

    def cycle_period(self) -> float:
        if self.period is not None:
            return float(self.period)
        shortest, longest = dyadic_band(self.scale)
        return 2.0 * shortest if math.isinf(longest) else math.sqrt(shortest * longest)


@dataclass(frozen=True)
class PlantedReturns:
    """
    Coefficients of the return model

        r_it = base + rr_t r_6_2 + ir_t r_12_7 + Σ_s c_s,t turn_ave_s + beta_i MKT_t + noise,

    where each coefficient x_t = x + premium_volatility * (common monthly shock).
    """
    base: float = 0.0
    rr: float = 0.0
    ir: float = 0.0
    turn_ave: Mapping[int, float] = field(default_factory=dict)
    premium_volatility: float = 0.0
    noise: float = 0.08
    market_mean: float = 0.005
    market_volatility: float = 0.04


@dataclass(frozen=True)
class PlantedReversal:
    """
    An extra coefficient on r_6_2 for the stocks whose turn_ave at `scale` is in the top `top_share`
    of the cross-section in that month.
    """
    scale: int = 4
    top_share: float = 0.1
    coefficient: float = 0.0


@dataclass(frozen=True)
class SynthConfig:
    stocks: int = 3000
    months: int = 624
    seed: int = 0
    start_month: int = 0
    cycles: Tuple[PlantedCycle, ...] = (PlantedCycle(4, 0.006, 0.5), PlantedCycle(2, 0.006, 0.5))
    returns: PlantedReturns = PlantedReturns()
    reversal: Optional[PlantedReversal] = None
    turnover_baseline: float = 0.08
    turnover_dispersion: float = 0.5
    turnover_noise: float = 0.02
    churn: float = 0.02
    missing_book_to_market: float = 0.05
    transform: str = EchoConfig.TRANSFORM

    def __post_init__(self):
        if self.stocks < 50:
            raise EchoConfigError(f"SYNTH: {self.stocks} stocks is below the minimum of 50.")
        if self.months < 128:
            raise EchoConfigError(f"SYNTH: {self.months} months is below the minimum of 128.")
        for cycle in self.cycles:
            verified_scale(cycle.scale)
            if cycle.amplitude < 0 or not 0 <= cycle.share <= 1:
                raise EchoConfigError(f"SYNTH: cycle {cycle} needs amplitude >= 0 and share in [0, 1].")
        for rate in (self.churn, self.missing_book_to_market):
            if not 0 <= rate < 1:
                raise EchoConfigError(f"SYNTH: rate {rate} is outside [0, 1).")
        if min(self.turnover_baseline, self.turnover_noise, self.returns.noise,
               self.returns.market_volatility, self.returns.premium_volatility) < 0:
            raise EchoConfigError("SYNTH: baselines, noise and volatilities must be non-negative.")
        if self.reversal is not None and not 0 < self.reversal.top_share <= 1:
            raise EchoConfigError(f"SYNTH: reversal top_share {self.reversal.top_share} is outside (0, 1].")

    @classmethod
    def null(cls, stocks: int = 3000, months: int = 624, seed: int = 0):
        """
        A panel without planted structure: no cycles, no return premiums, a quiet zero-mean market.
        """
        return cls(stocks=stocks, months=months, seed=seed, cycles=(),
                   returns=PlantedReturns(market_mean=0.0, market_volatility=0.01))

    def planted_scales(self) -> Tuple[int, ...]:
        scales = {verified_scale(s) for s in self.returns.turn_ave}
        if self.reversal is not None:
            scales.add(verified_scale(self.reversal.scale))
        return tuple(sorted(scales))


# -- CONFIG FILES -- #

def synth_config_from_dict(values: Mapping[str, Any]) -> SynthConfig:
    """
    Build a SynthConfig from a mapping with optional nested `cycles`, `returns`, `reversal` and `turnover` blocks.
    """
    values = dict(values or {})
    known = {'stocks', 'months', 'seed', 'start', 'cycles', 'returns', 'reversal', 'turnover', 'churn',
             'missing_book_to_market', 'transform'}
    unknown = sorted(set(values) - known)
    if unknown:
        raise EchoConfigError(f"SYNTH: unknown key(s) {', '.join(unknown)}.")
    try:
        arguments: Dict[str, Any] = {k: values[k] for k in ('stocks', 'months', 'seed', 'churn',
                                                           'missing_book_to_market', 'transform') if k in values}
        if 'start' in values:
            arguments['start_month'] = parse_month(values['start'])
        if 'cycles' in values:
            arguments['cycles'] = tuple(PlantedCycle(**cycle) for cycle in values['cycles'] or ())
        if 'returns' in values:
            block = dict(values['returns'] or {})
            block['turn_ave'] = {int(k): float(v) for k, v in (block.get('turn_ave') or {}).items()}
            arguments['returns'] = PlantedReturns(**block)
        if values.get('reversal'):
            arguments['reversal'] = PlantedReversal(**values['reversal'])
        turnover = values.get('turnover') or {}
        for key in ('baseline', 'dispersion', 'noise'):
            if key in turnover:
                arguments[f'turnover_{key}'] = float(turnover[key])
        return SynthConfig(**arguments)
    except TypeError as error:
        raise EchoConfigError(f"SYNTH: {error}")


def load_synth_config(path: Union[str, Path]) -> SynthConfig:
    """
    Read a synthetic-panel config from YAML, either at top level or under a `synth:` key.
    """
    path = Path(path)
    if not path.is_file():
        raise EchoConfigError(f"SYNTH: config file {path} does not exist.")
    values = yaml.safe_load(path.read_text(encoding='utf-8')) or {}
    if not isinstance(values, dict):
        raise EchoConfigError(f"SYNTH: {path} does not hold a mapping.")
    return synth_config_from_dict(values.get('synth', values))


# -- GENERATION -- #

def _common_rng(config: SynthConfig) -> np.random.Generator:
    return np.random.default_rng([config.seed, COMMON_STREAM])


def _stock_rng(config: SynthConfig, stock: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, STOCK_STREAM, stock])


def generate_factor_table(config: SynthConfig) -> FactorTable:
    """
    Return MKT, SMB, HML, STR and LIQ for the config's months. MKT is the market return the generated
    stocks load on; the other factors are independent noise around small premiums (zero in null configs).
    """
    rng = _common_rng(config)
    planted = config.returns
    mean = 0.0 if planted.market_mean == 0 else 0.002
    months = np.arange(config.start_month, config.start_month + config.months)
    frame = pd.DataFrame({
        'MKT': rng.normal(planted.market_mean, planted.market_volatility, config.months),
        'SMB': rng.normal(mean, 0.03, config.months),
        'HML': rng.normal(mean, 0.03, config.months),
        'STR': rng.normal(mean, 0.03, config.months),
        'LIQ': rng.normal(mean, 0.035, config.months),
    }, index=pd.Index(months, name='month'))
    return FactorTable(frame)


def _planted_turnover(config: SynthConfig, rngs: Sequence[np.random.Generator]) -> np.ndarray:
    t = np.arange(config.months)
    turnover = np.empty((config.stocks, config.months))
    for i, rng in enumerate(rngs):
        baseline = max(config.turnover_baseline * math.exp(config.turnover_dispersion * rng.standard_normal()),
                       2 * config.turnover_noise)
        series = baseline + config.turnover_noise * rng.standard_normal(config.months)
        for cycle in config.cycles:
            phase = rng.uniform(0, 2 * math.pi)
            if rng.uniform() < cycle.share:
                series += cycle.amplitude * np.sin(2 * math.pi * t / cycle.cycle_period() + phase)
        turnover[i] = np.clip(series, 0.0, None)
    return turnover


def _turnover_averages(config: SynthConfig, turnover: np.ndarray, block: int = 250) -> Dict[int, np.ndarray]:
    """
    Return stocks x months arrays of the 3-month trailing component means (value at month t averages t-3..t-1).
    """
    scales = config.planted_scales()
    window = EchoConfig.TURNOVER_AVERAGE_MONTHS
    averages = {scale: np.full(turnover.shape, np.nan) for scale in scales}
    if not scales:
        return averages
    for start in range(0, len(turnover), block):
        components = multiresolution(turnover[start:start + block], config.transform)
        for scale in scales:
            c = components[scale]
            cumulative = np.cumsum(np.concatenate([np.zeros((len(c), 1)), c], axis=1), axis=1)
            means = (cumulative[:, window:] - cumulative[:, :-window]) / window
            averages[scale][start:start + block, window:] = means[:, :-1]
    return averages


def generate_panel(config: SynthConfig, factors: Optional[FactorTable] = None) -> PanelDataset:
    """
    Generate the synthetic panel described by config. The same config always gives the same panel,
    whatever order stocks are generated in: each stock draws from its own seed derived from (seed, index).

    :param factors: Factor table to take the market return from; by default generate_factor_table(config).
    """
    factors = factors if factors is not None else generate_factor_table(config)
    months = np.arange(config.start_month, config.start_month + config.months)
    market = factors.require(['MKT'], months)['MKT'].to_numpy()
    planted = config.returns
    rngs = [_stock_rng(config, i) for i in range(config.stocks)]

    turnover = _planted_turnover(config, rngs)
    averages = _turnover_averages(config, turnover)

    beta = np.empty(config.stocks)
    noise = np.empty((config.stocks, config.months))
    base_price = np.empty(config.stocks)
    shares = np.empty(config.stocks)
    exchanges = []
    book_to_market = np.empty((config.stocks, config.months))
    churned = np.empty((config.stocks, config.months), dtype=bool)
    low_price = np.empty((config.stocks, config.months))
    names, weights = zip(*EXCHANGE_MIX)
    for i, rng in enumerate(rngs):
        beta[i] = rng.uniform(0.5, 1.5)
        noise[i] = planted.noise * rng.standard_normal(config.months)
        base_price[i] = rng.uniform(10.0, 100.0)
        shares[i] = math.exp(rng.normal(16.0, 1.5))
        exchanges.append(names[rng.choice(len(names), p=weights)])
        level = math.exp(rng.normal(-0.5, 0.6))
        book_to_market[i] = level * np.exp(0.05 * rng.standard_normal(config.months))
        book_to_market[i, rng.uniform(size=config.months) < config.missing_book_to_market] = np.nan
        churned[i] = rng.uniform(size=config.months) < config.churn
        low_price[i] = rng.uniform(1.0, 4.99, config.months)

    common = _common_rng(config)
    shocks = {name: planted.premium_volatility * common.standard_normal(config.months)
              for name in ['rr', 'ir', 'reversal'] + [f"s{s}" for s in config.planted_scales()]}

    returns = np.zeros((config.stocks, config.months))
    growth = np.ones((config.stocks, config.months + 1))
    for k in range(config.months):
        r = planted.base + beta * market[k] + noise[:, k]
        if k >= 6:
            rr = growth[:, k - 1] / growth[:, k - 6] - 1.0
            r = r + (planted.rr + shocks['rr'][k]) * rr
            if config.reversal is not None and k >= 3:
                level = averages[config.reversal.scale][:, k]
                cutoff = np.quantile(level, 1.0 - config.reversal.top_share)
                r = r + np.where(level >= cutoff,
                                 (config.reversal.coefficient + shocks['reversal'][k]) * rr, 0.0)
        if k >= 12:
            ir = growth[:, k - 6] / growth[:, k - 12] - 1.0
            r = r + (planted.ir + shocks['ir'][k]) * ir
        if k >= 3:
            for scale, coefficient in planted.turn_ave.items():
                r = r + (coefficient + shocks[f"s{scale}"][k]) * averages[scale][:, k]
        returns[:, k] = np.maximum(r, -0.95)
        growth[:, k + 1] = growth[:, k] * (1.0 + returns[:, k])

    # Month-end prices compound the returns from the base price.
    price = base_price[:, None] * growth[:, 1:]
    price = np.where(churned, low_price, price)
    equity = price * shares[:, None]
    is_nasdaq = np.array([e == Exchange.NASDAQ.name for e in exchanges])
    turnover_raw = turnover * np.where(is_nasdaq[:, None], nasdaq_divisors(months)[None, :], 1.0)

    frame = pd.DataFrame({
        'stock_id': np.repeat([f"S{i:05d}" for i in range(config.stocks)], config.months),
        'month': np.tile(months, config.stocks),
        'ret': returns.ravel(),
        'price': price.ravel(),
        'turnover_raw': turnover_raw.ravel(),
        'market_equity': equity.ravel(),
        'book_to_market': book_to_market.ravel(),
        'exchange': np.repeat(exchanges, config.months),
    })
    dataset = PanelDataset.from_frame(frame)
    logger.info("Generated synthetic panel: %d stocks x %d months (seed %d)", config.stocks, config.months,
                config.seed)
    return dataset


# -- ORACLES -- #

def brute_force_hac(y: Sequence[float], X: Optional[np.ndarray], lag: int, intercept: bool = True) -> np.ndarray:
    """
    Return the Newey-West covariance of the least-squares coefficients by direct summation.

    The meat is Σ_t e_t^2 x_t x_t' + Σ_{l=1..L} (1 - l/(L+1)) Σ_{t>=l} e_t e_(t-l) (x_t x_(t-l)' + x_(t-l) x_t'),
    the bread (X'X)^-1 on both sides. With an intercept the constant is the first coefficient.
    """
    y = np.asarray(y, dtype=float)
    T = len(y)
    columns = [] if X is None else [np.asarray(X, dtype=float).reshape(T, -1)]
    if intercept:
        columns.insert(0, np.ones((T, 1)))
    design = np.hstack(columns)
    if lag < 0 or lag >= T:
        raise EchoNumericalError(f"LAG: {lag} must be in [0, {T}).")
    bread = np.linalg.inv(design.T @ design)
    beta = bread @ design.T @ y
    e = y - design @ beta

    k = design.shape[1]
    meat = np.zeros((k, k))
    for t in range(T):
        meat += e[t] * e[t] * np.outer(design[t], design[t])
    for l in range(1, lag + 1):
        weight = 1.0 - l / (lag + 1.0)
        for t in range(l, T):
            cross = np.outer(design[t], design[t - l])
            meat += weight * e[t] * e[t - l] * (cross + cross.T)
    return bread @ meat @ bread


def spectral_band_energy(series: Sequence[float], band: Tuple[float, float]) -> float:
    """
    Return the share of the series' Fourier energy, zero frequency excluded, at periods within band
    (shortest, longest) months, bounds included.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < EchoConfig.MIN_SEGMENT_LENGTH:
        raise EchoDomainError(f"SPECTRUM: {len(x)} months is shorter than {EchoConfig.MIN_SEGMENT_LENGTH}.")
    n = len(x)
    power = np.abs(np.fft.rfft(x)) ** 2
    bins = np.arange(len(power))
    # Bins strictly between zero and Nyquist stand for a pair of conjugate frequencies.
    power[1:] *= np.where((n % 2 == 0) & (bins[1:] == n // 2), 1.0, 2.0)
    power, bins = power[1:], bins[1:]
    total = power.sum()
    if total <= 1e-12 * max(float(np.dot(x, x)), 1e-300) or total == 0:
        raise EchoDomainError("SPECTRUM: the series has no energy outside the zero frequency.")
    periods = n / bins
    shortest, longest = band
    inside = (periods >= shortest) & (periods <= longest)
    return float(power[inside].sum() / total)
