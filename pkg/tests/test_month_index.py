import unittest
from typing import Any

from npm_turnover_echo.month_index import MonthIndex, MonthString, month_label, parse_month
from npm_turnover_echo.exceptions import EchoFormatError, TurnoverEchoError


class MonthStringTests(unittest.TestCase):
    def test_bad_formats(self):
        # Too few digits:
        with self.assertRaises(EchoFormatError):
            MonthString('19997')
        # Slash separator:
        with self.assertRaises(EchoFormatError):
            MonthString('1999/07')
        # Month out of domain:
        with self.assertRaisesRegex(EchoFormatError, "MONTH STRING: '199913'"):
            MonthString('199913')
        with self.assertRaises(EchoFormatError):
            MonthString('1999-00')
        with self.assertRaisesRegex(TurnoverEchoError, "'list'"):
            arg: Any = []
            MonthString(arg)

    def test_good_inputs(self):
        data = [
            {"month_string": '196901', "result": (1969, 1)},
            {"month_string": '1969-01', "result": (1969, 1)},
            {"month_string": '199907', "result": (1999, 7)},
            {"month_string": '1999-7', "result": (1999, 7)},
            {"month_string": ' 2020-12 ', "result": (2020, 12)},
            {"month_string": '200412', "result": (2004, 12)},
        ]
        for item in data:
            with self.subTest(i=item["month_string"]):
                self.assertTupleEqual(item["result"], MonthString(item["month_string"]).elements())


class MonthIndexTests(unittest.TestCase):
    def test_epoch(self):
        self.assertEqual(0, MonthIndex.from_year_month(1969, 1).index)
        self.assertEqual('1968-12', MonthIndex(-1).iso())
        self.assertEqual('196901', MonthIndex(0).compact())

    def test_conversions(self):
        data = [
            {"input": '1999-07', "index": 366, "iso": '1999-07'},
            {"input": '200101', "index": 384, "iso": '2001-01'},
            {"input": '1970-02', "index": 13, "iso": '1970-02'},
            {"input": '2020-12', "index": 623, "iso": '2020-12'},
        ]
        for item in data:
            with self.subTest(i=item["input"]):
                m = MonthIndex.from_string(item["input"])
                self.assertEqual(item["index"], m.index)
                self.assertEqual(item["iso"], str(m))
                self.assertEqual(item["iso"].replace('-', ''), m.compact())

    def test_arithmetic(self):
        m = MonthIndex.from_string('1999-07')
        self.assertEqual('2000-01', (m + 6).iso())
        self.assertEqual('1998-07', (m - 12).iso())
        self.assertEqual(12, MonthIndex.from_string('2000-07') - m)
        self.assertLess(m, m + 1)
        self.assertEqual(m, MonthIndex(366))

    def test_bad_values(self):
        self.assertRaises(TurnoverEchoError, MonthIndex, 'duff data')
        self.assertRaises(TurnoverEchoError, MonthIndex, 1.5)
        self.assertRaises(TurnoverEchoError, MonthIndex, True)
        self.assertRaises(EchoFormatError, MonthIndex.from_year_month, 1999, 13)


class ParseMonthTests(unittest.TestCase):
    def test_parse_month(self):
        data = [
            {"input": 199907, "result": 366},
            {"input": '199907', "result": 366},
            {"input": '1999-07', "result": 366},
            {"input": MonthIndex(366), "result": 366},
            {"input": 366, "result": 366},
            {"input": -5, "result": -5},
        ]
        for item in data:
            with self.subTest(i=item["input"]):
                self.assertEqual(item["result"], parse_month(item["input"]))

    def test_month_label(self):
        self.assertEqual('1999-07', month_label(366))
        self.assertEqual('1969-01', month_label(0))


if __name__ == '__main__':
    unittest.main()
