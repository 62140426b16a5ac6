from .month_index import MonthIndex, month_label, parse_month
from .panel_data import FactorTable, PanelDataset, load_factor_table, load_panel
from .wavelet_engine import ScaleDecomposition, decompose, decompose_panel, reconstruct
from .signal_builder import SignalPanel, build_signal_panel
from .portfolio_engine import SortResult, SortSpec, run_sort
from .econometrics import fama_macbeth, factor_alpha, mean_return_test, newey_west, ols, spanning_regression
from .synth_oracle import SynthConfig, generate_factor_table, generate_panel
from .study_config import StudyConfig, load_study_config
from .study import run_study
