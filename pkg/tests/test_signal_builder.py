import io
import math
import unittest

import numpy as np
import pandas as pd

from npm_turnover_echo.panel_data import PanelDataset
from npm_turnover_echo.signal_builder import (SIGNALS, SignalPanel, avg_cyclic_turnover, build_signal_panel,
                                              correlation_table, cumulative_return, signal_correlations,
                                              turn_ave_name, window_bounds)
from npm_turnover_echo.wavelet_engine import decompose_panel
from npm_turnover_echo.exceptions import EchoDataError, EchoDomainError

MONTHS = 80


def small_panel(turnover_scale=1.0):
    rows = []
    for number, stock_id in enumerate(['A', 'B']):
        for month in range(MONTHS):
            rows.append({
                'stock_id': stock_id, 'month': month,
                'ret': 0.01 * ((month + number) % 5) - 0.015,
                'price': 10.0, 'turnover_raw': turnover_scale * (0.1 + 0.02 * math.sin(month / (3.0 + number))),
                'market_equity': 100.0 + month,
                'book_to_market': 0.8 if month % 12 == 0 else np.nan,
                'exchange': 'NYSE',
            })
    return PanelDataset.from_frame(pd.DataFrame(rows))


class WindowTests(unittest.TestCase):
    def test_window_bounds(self):
        data = [((6, 2), (6, 2)), ((12, 7), (12, 7)), ((1, 0), (1, 1)), ((3, 3), (3, 3))]
        for arguments, result in data:
            with self.subTest(i=arguments):
                self.assertTupleEqual(result, window_bounds(*arguments))
        for arguments in [(2, 6), (0, 0), (6, -1), (6.0, 2)]:
            with self.subTest(i=arguments):
                self.assertRaises(EchoDomainError, window_bounds, *arguments)

    def test_cumulative_return(self):
        returns = {m: 0.01 for m in range(0, 24)}
        self.assertAlmostEqual(1.01 ** 5 - 1, cumulative_return(returns, 20, 6, 2))
        self.assertAlmostEqual(1.01 ** 6 - 1, cumulative_return(returns, 20, 12, 7))
        self.assertAlmostEqual(0.01, cumulative_return(returns, 20, 1, 0))

    def test_missing_month_gives_nan(self):
        returns = {m: 0.01 for m in range(0, 24) if m != 16}
        self.assertTrue(math.isnan(cumulative_return(returns, 20, 6, 2)))
        self.assertFalse(math.isnan(cumulative_return(returns, 20, 1, 0)))
        self.assertTrue(math.isnan(cumulative_return(pd.Series(returns), 5, 12, 7)))


class SignalPanelTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.dataset = small_panel()
        cls.decomposition = decompose_panel(cls.dataset)
        cls.panel = build_signal_panel(cls.dataset, cls.decomposition)

    def test_columns_and_order(self):
        frame = self.panel.frame
        self.assertListEqual(['stock_id', 'month'] + SIGNALS, list(frame.columns))
        self.assertTrue(frame['month'].is_monotonic_increasing)

    def test_return_signals_match_scalar_form(self):
        returns = self.dataset.stock_series('A', 'ret')
        for month in (13, 30, 79):
            row = self.panel.at_month(month).loc['A']
            with self.subTest(i=month):
                self.assertAlmostEqual(cumulative_return(returns, month, 6, 2), row['r_6_2'])
                self.assertAlmostEqual(cumulative_return(returns, month, 12, 7), row['r_12_7'])
                self.assertAlmostEqual(returns.loc[month - 1], row['r_1_0'])

    def test_early_months_are_nan(self):
        row = self.panel.at_month(5).loc['A']
        self.assertTrue(math.isnan(row['r_6_2']))
        self.assertTrue(math.isnan(row['r_12_7']))
        self.assertFalse(math.isnan(row['r_1_0']))

    def test_turnover_averages_use_prior_months(self):
        segment = self.decomposition.segments('B')[0]
        for scale in (0, 4, 6):
            for month in (3, 40, 79):
                with self.subTest(scale=scale, month=month):
                    expected = avg_cyclic_turnover(segment, scale, month)
                    self.assertAlmostEqual(expected, self.panel.at_month(month).loc['B', turn_ave_name(scale)])
        self.assertTrue(math.isnan(avg_cyclic_turnover(segment, 4, 2)))

    def test_turnover_averages_scale_with_turnover(self):
        scaled = small_panel(turnover_scale=3.0)
        panel = build_signal_panel(scaled, decompose_panel(scaled))
        for name in [turn_ave_name(s) for s in range(7)] + ['turn_all']:
            with self.subTest(i=name):
                np.testing.assert_allclose(3.0 * self.panel.frame[name].to_numpy(), panel.frame[name].to_numpy(),
                                           rtol=1e-9, atol=1e-12)

    def test_turn_all(self):
        turnover = self.dataset.stock_series('A', 'turnover')
        expected = turnover.loc[37:39].mean()
        self.assertAlmostEqual(expected, self.panel.at_month(40).loc['A', 'turn_all'])

    def test_controls(self):
        row = self.panel.at_month(20).loc['A']
        self.assertAlmostEqual(math.log(119.0), row['log_me'])
        # Book-to-market is reported in month 12 and carried forward for eleven months.
        self.assertAlmostEqual(math.log(0.8), row['log_bm'])
        self.assertAlmostEqual(math.log(0.8), self.panel.at_month(24).loc['A', 'log_bm'])

    def test_without_decomposition(self):
        panel = build_signal_panel(self.dataset)
        self.assertTrue(panel.frame['turn_ave4'].isna().all())
        self.assertFalse(panel.frame['r_6_2'].isna().all())

    def test_wide(self):
        wide = self.panel.wide('r_6_2')
        self.assertListEqual(['A', 'B'], list(wide.columns))
        self.assertRaises(EchoDomainError, self.panel.wide, 'r_9_9')

    def test_write(self):
        buffer = io.StringIO()
        self.panel.write(buffer)
        frame = pd.read_csv(io.StringIO(buffer.getvalue()), dtype={'month': str})
        self.assertEqual(len(self.panel), len(frame))
        self.assertTrue(frame['month'].str.match(r'^\d{6}$').all())

    def test_missing_columns(self):
        self.assertRaises(EchoDataError, SignalPanel, pd.DataFrame({'stock_id': ['A'], 'month': [1]}))


class CorrelationTests(unittest.TestCase):
    def panel_of(self, values):
        frame = pd.DataFrame({'stock_id': [f"S{i}" for i in range(len(values['r_6_2']))],
                              'month': 1})
        for name in SIGNALS:
            frame[name] = values.get(name, np.nan)
        return SignalPanel(frame)

    def test_pooled_correlation(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(200)
        panel = self.panel_of({'r_6_2': x, 'r_12_7': 2 * x + 1, 'turn_ave4': -x})
        matrix = signal_correlations(panel, ['turn_ave4', 'r_6_2', 'r_12_7'])
        self.assertAlmostEqual(1.0, matrix.loc['r_6_2', 'r_12_7'])
        self.assertAlmostEqual(-1.0, matrix.loc['turn_ave4', 'r_6_2'])
        self.assertAlmostEqual(1.0, matrix.loc['turn_ave4', 'turn_ave4'])

    def test_too_few_joint_observations(self):
        x = np.arange(40, dtype=float)
        y = np.where(x < 20, x, np.nan)
        panel = self.panel_of({'r_6_2': x, 'turn_ave4': y})
        with self.assertLogs('npm_turnover_echo.signal_builder', level='WARNING'):
            matrix = signal_correlations(panel, ['turn_ave4', 'r_6_2'])
        self.assertTrue(math.isnan(matrix.loc['turn_ave4', 'r_6_2']))
        self.assertAlmostEqual(1.0, matrix.loc['r_6_2', 'r_6_2'])

    def test_bad_requests(self):
        panel = self.panel_of({'r_6_2': np.arange(40.0)})
        self.assertRaises(EchoDomainError, signal_correlations, panel, ['r_6_2'])
        self.assertRaises(EchoDomainError, signal_correlations, panel, ['r_6_2', 'volume'])

    def test_table_layout(self):
        matrix = pd.DataFrame([[1.0, 0.0123], [0.0123, 1.0]], index=['turn_ave4', 'r_6_2'],
                              columns=['turn_ave4', 'r_6_2'])
        text = correlation_table(matrix)
        lines = text.splitlines()
        self.assertEqual('\tTurn_AVE_4\tr_6_2', lines[0])
        self.assertEqual('Turn_AVE_4\t1.000\t0.012', lines[1])
        self.assertEqual(2, len(lines))


if __name__ == '__main__':
    unittest.main()
