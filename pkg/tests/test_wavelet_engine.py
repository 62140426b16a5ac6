import io
import math
import unittest

import numpy as np
import pandas as pd

from npm_turnover_echo.panel_data import PanelDataset
from npm_turnover_echo.synth_oracle import spectral_band_energy
from npm_turnover_echo.wavelet_engine import (DecompositionMode, db2_filters, decompose, decompose_panel, dyadic_band,
                                              fill_single_gaps, multiresolution, reconstruct, scale_cycle_label,
                                              scale_for_period, scale_level, turnover_segments, verified_scale,
                                              write_decomposition)
from npm_turnover_echo.exceptions import EchoConfigError, EchoDataError, EchoDomainError


def panel_of(lengths, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for number, length in enumerate(lengths):
        for month in range(length):
            rows.append({'stock_id': f"S{number}", 'month': month, 'ret': 0.0, 'price': 10.0,
                         'turnover_raw': 0.1 + 0.02 * rng.standard_normal(), 'market_equity': 1.0,
                         'exchange': 'NYSE'})
    return PanelDataset.from_frame(pd.DataFrame(rows))


class ScaleMappingTests(unittest.TestCase):
    def test_scale_levels(self):
        data = [
            {"scale": 0, "level": 6, "band": (128.0, math.inf), "label": '>64months'},
            {"scale": 1, "level": 6, "band": (64.0, 128.0), "label": '32~64months'},
            {"scale": 4, "level": 3, "band": (8.0, 16.0), "label": '4~8months'},
            {"scale": 5, "level": 2, "band": (4.0, 8.0), "label": '2~4months'},
            {"scale": 6, "level": 1, "band": (2.0, 4.0), "label": '0~2months'},
        ]
        for item in data:
            with self.subTest(i=item["scale"]):
                self.assertEqual(item["level"], scale_level(item["scale"]))
                self.assertTupleEqual(item["band"], dyadic_band(item["scale"]))
                self.assertEqual(item["label"], scale_cycle_label(item["scale"]).cycle_band)

    def test_scale_for_period(self):
        data = [(3, 6), (6, 5), (12, 4), (24, 3), (48, 2), (96, 1), (200, 0)]
        for period, scale in data:
            with self.subTest(i=period):
                self.assertEqual(scale, scale_for_period(period))
        self.assertRaises(EchoDomainError, scale_for_period, 2)

    def test_invalid_scales(self):
        for scale in [7, -1, True, 2.0, '3']:
            with self.subTest(i=scale):
                self.assertRaises(EchoDomainError, verified_scale, scale)
        self.assertEqual(3, verified_scale(np.int64(3)))

    def test_filters(self):
        filters = db2_filters()
        root3 = math.sqrt(3.0)
        expected = np.array([1 + root3, 3 + root3, 3 - root3, 1 - root3]) / (4 * math.sqrt(2.0))
        np.testing.assert_allclose(sorted(expected), sorted(filters.scaling_filter), atol=1e-12)
        self.assertAlmostEqual(1.0, sum(v * v for v in filters.wavelet_filter))


class ReconstructionTests(unittest.TestCase):
    def test_perfect_reconstruction(self):
        rng = np.random.default_rng(11)
        for transform in ('modwt', 'dwt'):
            for length in (64, 120, 317, 624):
                with self.subTest(transform=transform, length=length):
                    block = np.abs(0.1 + 0.05 * rng.standard_normal((50, length)))
                    components = multiresolution(block, transform)
                    self.assertTupleEqual((7, 50, length), components.shape)
                    self.assertLess(np.max(np.abs(components.sum(axis=0) - block)), 1e-8)

    def test_decomposition_is_linear(self):
        rng = np.random.default_rng(8)
        x, y = rng.standard_normal((2, 300))
        for transform in ('modwt', 'dwt'):
            with self.subTest(i=transform):
                combined = multiresolution(2.5 * x - 0.7 * y, transform)
                expected = 2.5 * multiresolution(x, transform) - 0.7 * multiresolution(y, transform)
                np.testing.assert_allclose(expected, combined, atol=1e-8)

    def test_decompose_full_sample(self):
        series = 0.1 + 0.01 * np.sin(np.arange(100))
        result = decompose(series, first_month=12, stock_id='X')
        self.assertTupleEqual((12, 111), result.month_span)
        self.assertEqual(100, len(result))
        np.testing.assert_allclose(series, reconstruct(result), atol=1e-10)
        self.assertTrue(math.isnan(result.value(4, 11)))
        self.assertAlmostEqual(result.components[4][0], result.value(4, 12))

    def test_decompose_causal(self):
        rng = np.random.default_rng(3)
        series = 0.1 + 0.02 * rng.standard_normal(120)
        result = decompose(series, DecompositionMode.CAUSAL, window=64)
        self.assertTupleEqual((63, 119), result.month_span)
        np.testing.assert_allclose(series[63:], reconstruct(result), atol=1e-10)

    def test_causal_has_no_look_ahead(self):
        rng = np.random.default_rng(4)
        series = 0.1 + 0.02 * rng.standard_normal(120)
        changed = series.copy()
        changed[100:] += 1.0
        before = decompose(series, 'causal', window=64)
        after = decompose(changed, 'causal', window=64)
        cut = 100 - before.month_span[0]
        np.testing.assert_array_equal(before.components[:, :cut], after.components[:, :cut])
        self.assertFalse(np.allclose(before.components[:, cut:], after.components[:, cut:]))

    def test_causal_value_is_last_of_its_own_window(self):
        rng = np.random.default_rng(6)
        series = 0.1 + 0.02 * rng.standard_normal(100)
        result = decompose(series, 'causal', window=64)
        for month in (63, 80, 99):
            with self.subTest(i=month):
                expected = multiresolution(series[month - 63:month + 1])[:, -1]
                np.testing.assert_allclose(expected, result.components[:, month - 63], atol=1e-12)

    def test_full_sample_does_look_ahead(self):
        rng = np.random.default_rng(4)
        series = 0.1 + 0.02 * rng.standard_normal(120)
        changed = series.copy()
        changed[100:] += 1.0
        self.assertFalse(np.allclose(decompose(series).components[:, 90], decompose(changed).components[:, 90]))

    def test_bad_series(self):
        good = np.full(80, 0.1)
        with self.assertRaisesRegex(EchoDataError, "shorter"):
            decompose(good[:63])
        with self.assertRaises(EchoDataError):
            decompose(np.where(np.arange(80) == 5, np.inf, good))
        gap = good.copy()
        gap[10:12] = np.nan
        with self.assertRaisesRegex(EchoDataError, "gap"):
            decompose(gap)
        with self.assertRaises(EchoDataError):
            decompose(good, 'causal', window=100)
        with self.assertRaises(EchoConfigError):
            decompose(good, transform='haar')
        with self.assertRaises(ValueError):
            decompose(good, 'sometimes')

    def test_single_gap_filled(self):
        series = np.full(80, 0.1)
        series[40] = np.nan
        result = decompose(series)
        self.assertAlmostEqual(0.1, result.series[40])


class BandLocalizationTests(unittest.TestCase):
    def test_sinusoids_land_in_their_band(self):
        n = 624
        t = np.arange(n)
        for period in (3, 6, 12, 24, 48):
            with self.subTest(i=period):
                series = 1.0 + 0.1 * np.sin(2 * math.pi * t / period)
                components = multiresolution(series)
                energy = [float(np.sum((c - c.mean()) ** 2)) for c in components[1:]]
                strongest = 1 + int(np.argmax(energy))
                self.assertEqual(scale_for_period(period), strongest)
                shortest, longest = dyadic_band(strongest)
                self.assertGreaterEqual(spectral_band_energy(series - 1.0, (shortest, longest)), 0.95)

    def test_default_details_are_nearly_orthogonal(self):
        rng = np.random.default_rng(5)
        components = multiresolution(rng.standard_normal(4096))
        for first in range(1, 7):
            for second in range(first + 1, 7):
                with self.subTest(i=(first, second)):
                    rho = np.corrcoef(components[first], components[second])[0, 1]
                    self.assertLess(abs(rho), 0.15)


class GapTests(unittest.TestCase):
    def test_fill_single_gaps(self):
        values = np.array([1.0, np.nan, 3.0, np.nan, np.nan, 6.0, np.nan])
        filled = fill_single_gaps(values)
        np.testing.assert_array_equal([1.0, 1.0, 3.0], filled[:3])
        self.assertTrue(np.isnan(filled[3:5]).all())
        self.assertTrue(np.isnan(filled[6]))

    def test_turnover_segments(self):
        months = list(range(0, 70)) + list(range(73, 150))
        values = np.full(len(months), 0.2)
        values[10] = np.nan
        segments = turnover_segments(months, values)
        self.assertEqual(2, len(segments))
        self.assertEqual(0, segments[0][0])
        self.assertEqual(70, len(segments[0][1]))
        self.assertEqual(73, segments[1][0])
        self.assertEqual(77, len(segments[1][1]))
        self.assertListEqual([], turnover_segments([1, 2], [np.nan, np.nan]))

    def test_one_missing_month_bridged(self):
        months = list(range(0, 40)) + list(range(41, 80))
        segments = turnover_segments(months, np.full(len(months), 0.2))
        self.assertEqual(1, len(segments))
        self.assertEqual(80, len(segments[0][1]))


class DecomposePanelTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.dataset = panel_of([100, 100, 80, 40])

    def test_short_stocks_skipped(self):
        result = decompose_panel(self.dataset)
        self.assertListEqual(['S0', 'S1', 'S2'], result.stocks())
        self.assertDictEqual({'S3': 1}, result.skipped)
        self.assertEqual(3, len(result))

    def test_workers_do_not_change_result(self):
        one = decompose_panel(self.dataset, batch_size=1)
        many = decompose_panel(self.dataset, workers=3, batch_size=1)
        for a, b in zip(one, many):
            self.assertEqual(a.stock_id, b.stock_id)
            np.testing.assert_array_equal(a.components, b.components)

    def test_batched_equals_single(self):
        batched = decompose_panel(self.dataset).segments('S0')[0]
        single = decompose(self.dataset.stock_series('S0', 'turnover').to_numpy())
        np.testing.assert_allclose(single.components, batched.components, atol=1e-12)

    def test_causal_panel(self):
        result = decompose_panel(self.dataset, 'causal', window=64)
        self.assertEqual(3, len(result))
        self.assertTupleEqual((63, 99), result.segments('S0')[0].month_span)

    def test_component_frame(self):
        frame = decompose_panel(self.dataset).component_frame(4)
        self.assertListEqual(['stock_id', 'month', 'value'], list(frame.columns))
        self.assertEqual(280, len(frame))

    def test_bad_transform(self):
        self.assertRaises(EchoConfigError, decompose_panel, self.dataset, transform='haar')

    def test_write_decomposition(self):
        buffer = io.StringIO()
        write_decomposition(decompose_panel(self.dataset), buffer)
        frame = pd.read_csv(io.StringIO(buffer.getvalue()), dtype={'month': str})
        self.assertListEqual(['stock_id', 'month'] + [f'scale{s}' for s in range(7)] + ['reconstructed'],
                             list(frame.columns))
        self.assertEqual('196901', frame['month'].iloc[0])
        np.testing.assert_allclose(frame[[f'scale{s}' for s in range(7)]].sum(axis=1), frame['reconstructed'])


if __name__ == '__main__':
    unittest.main()
