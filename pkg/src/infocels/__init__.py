"""Counterfactual explanations for time series classifiers via learned saliency maps."""

from .cels import CelsConfig, CounterfactualResult, explain
from .baseline import WcfConfig, explain_wcf
from .classifier import FcnModel, TrainConfig, load_model, predict, save_model, train
from .data import LabeledDataset, TimeSeries, load_ucr, make_synthetic, z_normalize
from .evaluation import EvalReport, evaluate, lambda_sweep
from .pipeline import METHODS, explain_dataset

__version__ = "0.1.0"
