from .smote import nearest_neighbours, smote, smote_array
from .training import SplitPolicy, TrainResult, balance, grid_search, predict_proba, recall, split, train
from .tree import ForestModel, ForestParams, Tree, best_split, gini

__all__ = [
    "ForestModel",
    "ForestParams",
    "SplitPolicy",
    "TrainResult",
    "Tree",
    "balance",
    "best_split",
    "gini",
    "grid_search",
    "nearest_neighbours",
    "predict_proba",
    "recall",
    "smote",
    "smote_array",
    "split",
    "train",
]
