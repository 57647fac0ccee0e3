"""Datasets, splits, the five classifier families, random search and evaluation."""
from .data import Dataset, SplitIndices, kfold_stratified, stratified_split
from .metrics import ConfusionMatrix, EvalReport, evaluate, report_from_confusion
from .model import TrainedModel, feature_importances, load_model, predict, save_model, train
from .models import FAMILIES, AdaBoost, DecisionTree, GradientBoostedTrees, RandomForest, SVM
from .search import DEFAULT_SPACES, SearchResult, random_search

__all__ = [
    "Dataset", "SplitIndices", "stratified_split", "kfold_stratified",
    "ConfusionMatrix", "EvalReport", "evaluate", "report_from_confusion",
    "TrainedModel", "train", "predict", "feature_importances", "save_model", "load_model",
    "FAMILIES", "DecisionTree", "RandomForest", "AdaBoost", "GradientBoostedTrees", "SVM",
    "DEFAULT_SPACES", "SearchResult", "random_search",
]
