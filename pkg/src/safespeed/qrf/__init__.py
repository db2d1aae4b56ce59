from .forest import (
    Forest,
    ForestParams,
    Tree,
    cdf,
    fit,
    load,
    predict_quantile,
    predict_window,
    save,
    weights,
)

__all__ = [
    "Forest",
    "ForestParams",
    "Tree",
    "cdf",
    "fit",
    "load",
    "predict_quantile",
    "predict_window",
    "save",
    "weights",
]
