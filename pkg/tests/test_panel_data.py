import io
import unittest
import warnings

import numpy as np
import pandas as pd

from npm_turnover_echo.month_index import parse_month
from npm_turnover_echo.panel_data import (Exchange, FactorTable, PanelDataset, PanelSchema, adjust_nasdaq_turnover,
                                          eligibility_table, eligible_stocks, load_factor_table, load_panel,
                                          nasdaq_divisor, nasdaq_divisors, observations_frame, write_factor_table,
                                          write_panel)
from npm_turnover_echo.exceptions import EchoDataError, EchoDomainError, EchoFormatError

PANEL = """stock_id,month,ret,price,turnover_raw,market_equity,book_to_market,exchange
A,199912,0.01,10.0,0.20,100.0,0.5,NYSE
A,200001,0.02,11.0,0.22,110.0,,NYSE
B,199912,-0.01,4.99,0.40,50.0,0.7,NASDAQ
B,200001,0.03,5.00,0.40,55.0,0.7,Q
C,199912,0.00,-20.0,0.10,80.0,1.1,2
C,200001,,21.0,0.12,82.0,1.1,AMEX
"""


class NasdaqAdjustmentTests(unittest.TestCase):
    def test_divisor_schedule(self):
        data = [
            {"month": '1985-06', "divisor": 2.0},
            {"month": '2000-12', "divisor": 2.0},
            {"month": '2001-01', "divisor": 1.8},
            {"month": '2001-12', "divisor": 1.8},
            {"month": '2002-01', "divisor": 1.6},
            {"month": '2003-12', "divisor": 1.6},
            {"month": '2004-01', "divisor": 1.0},
            {"month": '2015-03', "divisor": 1.0},
        ]
        for item in data:
            with self.subTest(i=item["month"]):
                month = parse_month(item["month"])
                self.assertEqual(item["divisor"], nasdaq_divisor(month))
                self.assertEqual(item["divisor"], nasdaq_divisors(np.array([month]))[0])

    def test_adjust(self):
        self.assertAlmostEqual(0.5, adjust_nasdaq_turnover(1.0, parse_month('1999-07'), Exchange.NASDAQ))
        self.assertAlmostEqual(1.0, adjust_nasdaq_turnover(1.0, parse_month('1999-07'), Exchange.NYSE))
        self.assertAlmostEqual(1.0, adjust_nasdaq_turnover(1.0, parse_month('2005-07'), 'Q'))
        self.assertRaises(EchoDomainError, adjust_nasdaq_turnover, -0.1, 0, Exchange.NYSE)

    def test_exchange_codes(self):
        for code, exchange in [('NYSE', Exchange.NYSE), ('amex', Exchange.AMEX), ('Q', Exchange.NASDAQ),
                               (1, Exchange.NYSE), ('3', Exchange.NASDAQ)]:
            with self.subTest(i=code):
                self.assertIs(exchange, Exchange.from_code(code))
        self.assertRaises(EchoFormatError, Exchange.from_code, 'LSE')


class LoadPanelTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.dataset = load_panel(io.StringIO(PANEL))

    def test_shape(self):
        self.assertEqual(6, len(self.dataset))
        self.assertListEqual(['A', 'B', 'C'], self.dataset.stocks())
        self.assertTupleEqual((parse_month('1999-12'), parse_month('2000-01')), self.dataset.month_range)

    def test_turnover_adjusted_once(self):
        frame = self.dataset.frame.set_index(['stock_id', 'month'])
        december = parse_month('1999-12')
        self.assertAlmostEqual(0.20, frame.loc[('B', december), 'turnover'])
        self.assertAlmostEqual(0.40, frame.loc[('B', december), 'turnover_raw'])
        self.assertAlmostEqual(0.20, frame.loc[('A', december), 'turnover'])

    def test_negative_price_made_positive(self):
        rows = self.dataset.at_month(parse_month('1999-12'))
        self.assertAlmostEqual(20.0, rows.loc['C', 'price'])

    def test_missing_values_kept_as_nan(self):
        rows = self.dataset.at_month(parse_month('2000-01'))
        self.assertTrue(np.isnan(rows.loc['C', 'ret']))
        self.assertTrue(np.isnan(rows.loc['A', 'book_to_market']))

    def test_eligibility(self):
        # 4.99 is excluded, exactly 5.00 is eligible.
        self.assertSetEqual({'A', 'C'}, eligible_stocks(self.dataset, parse_month('1999-12')))
        self.assertSetEqual({'A', 'B', 'C'}, eligible_stocks(self.dataset, parse_month('2000-01')))
        self.assertRaises(EchoDomainError, eligible_stocks, self.dataset, parse_month('2001-01'))

    def test_eligibility_history_rule(self):
        formation = eligibility_table(self.dataset, rule='formation')
        history = eligibility_table(self.dataset, rule='history')
        january = parse_month('2000-01')
        self.assertTrue(formation.loc[january, 'B'])
        self.assertFalse(history.loc[january, 'B'])
        self.assertRaises(EchoDomainError, eligibility_table, self.dataset, 5.0, 'sometimes')

    def test_round_trip(self):
        buffer = io.StringIO()
        write_panel(self.dataset, buffer)
        reloaded = load_panel(io.StringIO(buffer.getvalue()))
        pd.testing.assert_frame_equal(self.dataset.frame, reloaded.frame)

    def test_dropped_rows_reported(self):
        text = PANEL + "D,199913,0.01,10.0,0.2,10.0,,NYSE\nE,199912,0.01,10.0,-0.2,10.0,,NYSE\nF,199912,0.01,,0.2,10.0,,N\n"
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            dataset = load_panel(io.StringIO(text))
        self.assertEqual(9, dataset.report.rows_read)
        self.assertEqual(6, dataset.report.rows_kept)
        self.assertDictEqual({'bad month': 1, 'negative turnover': 1, 'missing price': 1}, dataset.report.dropped)
        self.assertIn('rows_dropped: 3', dataset.report.render())

    def test_unparseable_fields_dropped(self):
        text = PANEL + ("D,199912,C,10.0,0.2,10.0,,NYSE\nE,199912,0.01,abc,0.2,10.0,,NYSE\n"
                        "F,199912,0.01,10.0,x,10.0,,NYSE\nG,199912,0.01,10.0,0.2,n/a,,NYSE\n")
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            dataset = load_panel(io.StringIO(text))
        self.assertEqual(6, dataset.report.rows_kept)
        expected = {'unparseable ret': 1, 'unparseable price': 1, 'unparseable turnover_raw': 1,
                    'unparseable market_equity': 1}
        self.assertDictEqual(expected, dataset.report.dropped)
        self.assertNotIn('D', dataset.stocks())

    def test_dropped_rows_warn(self):
        with self.assertWarns(UserWarning):
            load_panel(io.StringIO(PANEL + "D,199913,0.01,10.0,0.2,10.0,,NYSE\n"))

    def test_bad_inputs(self):
        with self.assertRaisesRegex(EchoDataError, "'exchange'"):
            load_panel(io.StringIO("stock_id,month,ret,price,turnover_raw,market_equity\nA,199912,0,1,1,1\n"))
        with self.assertRaisesRegex(EchoDataError, "duplicate"):
            load_panel(io.StringIO(PANEL + "A,199912,0.01,10.0,0.20,100.0,0.5,NYSE\n"))

    def test_tab_delimited(self):
        dataset = load_panel(io.StringIO(PANEL.replace(',', '\t')))
        self.assertEqual(6, len(dataset))

    def test_wide(self):
        wide = self.dataset.wide('turnover')
        self.assertListEqual(self.dataset.months(), list(wide.index))
        self.assertListEqual(['A', 'B', 'C'], list(wide.columns))


class FactorTableTests(unittest.TestCase):
    TEXT = "month,Mkt-RF,SMB,HML,RF\n199912,1.5,-0.5,0.25,0.4\n200001,-2.0,0.1,0.0,0.4\n"

    def test_percent_conversion(self):
        table = load_factor_table(io.StringIO(self.TEXT))
        self.assertListEqual(['MKT', 'SMB', 'HML', 'RF'], table.factors)
        self.assertAlmostEqual(0.015, table['MKT'].loc[parse_month('1999-12')])
        decimal = load_factor_table(io.StringIO(self.TEXT), percent=False)
        self.assertAlmostEqual(1.5, decimal['MKT'].loc[parse_month('1999-12')])

    def test_require(self):
        table = load_factor_table(io.StringIO(self.TEXT))
        frame = table.require(['MKT', 'HML'], [parse_month('2000-01')])
        self.assertEqual((1, 2), frame.shape)
        with self.assertRaisesRegex(EchoDataError, "LIQ"):
            table.require(['LIQ'])
        with self.assertRaisesRegex(EchoDataError, "2000-02"):
            table.require(['MKT'], [parse_month('2000-01'), parse_month('2000-02')])

    def test_combine(self):
        table = load_factor_table(io.StringIO(self.TEXT))
        liquidity = load_factor_table(io.StringIO("month,PS_VWF\n199912,0.3\n"))
        combined = table.combine(liquidity)
        self.assertTrue(combined.has('LIQ'))
        self.assertRaises(EchoDataError, table.combine, table)

    def test_bad_files(self):
        self.assertRaises(EchoFormatError, load_factor_table, io.StringIO("month,MKT\n1999-13,1.0\n"))
        self.assertRaises(EchoFormatError, load_factor_table, io.StringIO("month,MKT\n199912,abc\n"))
        self.assertRaises(EchoDataError, load_factor_table, io.StringIO("month\n199912\n"))
        self.assertRaises(EchoDataError, FactorTable, pd.DataFrame({'MKT': [0.1, 0.2]}, index=[3, 3]))

    def test_write(self):
        table = load_factor_table(io.StringIO(self.TEXT))
        buffer = io.StringIO()
        write_factor_table(table, buffer)
        again = load_factor_table(io.StringIO(buffer.getvalue()))
        pd.testing.assert_frame_equal(table.frame, again.frame)


class FromFrameTests(unittest.TestCase):
    def test_from_frame(self):
        frame = pd.DataFrame({
            'stock_id': ['X', 'X'], 'month': [0, 1], 'ret': [0.0, 0.1], 'price': [10.0, 11.0],
            'turnover_raw': [0.3, 0.3], 'market_equity': [5.0, 0.0], 'exchange': [Exchange.NASDAQ, 'NASDAQ'],
        })
        dataset = PanelDataset.from_frame(frame)
        self.assertAlmostEqual(0.15, dataset.frame['turnover'].iloc[0])
        self.assertTrue(np.isnan(dataset.frame['market_equity'].iloc[1]))
        self.assertTrue(dataset.frame['book_to_market'].isna().all())
        self.assertRaises(EchoDataError, PanelDataset.from_frame, frame.drop(columns=['ret']))

    def test_observations(self):
        dataset = load_panel(io.StringIO(PANEL))
        observations = list(dataset.observations())
        self.assertEqual(6, len(observations))
        first = observations[0]
        self.assertEqual('A', first.stock_id)
        self.assertIs(Exchange.NYSE, first.exchange)
        again = PanelDataset.from_frame(observations_frame(observations))
        pd.testing.assert_frame_equal(dataset.frame, again.frame, check_dtype=False)

    def test_schema(self):
        text = PANEL.replace('stock_id,month,ret', 'PERMNO,date,RET').replace(',', '|')
        schema = PanelSchema({'stock_id': 'PERMNO', 'month': 'date', 'ret': 'RET'}, delimiter='|')
        self.assertEqual(6, len(load_panel(io.StringIO(text), schema)))
        with self.assertRaisesRegex(EchoDataError, "'stock_id'"):
            load_panel(io.StringIO(text))


if __name__ == '__main__':
    unittest.main()
