"""Classifiers over engineered feature vectors."""

from .base import Classifier, LabeledDataset, load_classifier, predict, save_classifier
from .forest import RandomForestClassifier, RfParams, rf_train
from .knn import KnnClassifier, knn_predict, train_knn
from .neural import NeuralNetClassifier, NnParams, nn_train
from .svm import (
    SvmBinary,
    SvmOneVsRest,
    SvmParams,
    svm_predict_multiclass,
    svm_train,
    svm_train_multiclass,
)

__all__ = [
    "Classifier",
    "LabeledDataset",
    "predict",
    "save_classifier",
    "load_classifier",
    "KnnClassifier",
    "knn_predict",
    "train_knn",
    "SvmParams",
    "SvmBinary",
    "SvmOneVsRest",
    "svm_train",
    "svm_train_multiclass",
    "svm_predict_multiclass",
    "RfParams",
    "RandomForestClassifier",
    "rf_train",
    "NnParams",
    "NeuralNetClassifier",
    "nn_train",
]
