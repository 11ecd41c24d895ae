"""Scikit-learn style wrapper around the rescoring model.

``ContextualRescorer`` composes target construction, training with plateau
scheduling, and inference-time rescoring behind the familiar
``fit``/``predict``/``transform`` surface; hyperparameters are plain
constructor arguments so ``get_params``/``set_params``/``clone`` work as
usual. ``X`` is a list of :class:`~ctxrescore.boxes.ImageRecord`.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .evaluation import EvalParams, evaluate
from .network import ModelConfig
from .training import TrainConfig, rescore_dataset, train_loop
from .validation import check_image_records

__all__ = ["ContextualRescorer"]


class ContextualRescorer(BaseEstimator, TransformerMixin):
    """Learns to reassign detection confidences from non-visual context.

    Parameters mirror ``ModelConfig`` and ``TrainConfig``. After ``fit``,
    the learned tensors live in ``params_`` and per-epoch statistics in
    ``history_``.
    """

    def __init__(
        self,
        hidden_size=256,
        num_layers=3,
        encoder="gru",
        num_classes=80,
        batch_size=256,
        learning_rate=0.003,
        shuffle_prob=0.75,
        lr_decay=0.2,
        patience=4,
        early_stop=20,
        max_epochs=200,
        matching="localization",
        target="iou",
        seed=0,
    ):
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.encoder = encoder
        self.num_classes = num_classes
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.shuffle_prob = shuffle_prob
        self.lr_decay = lr_decay
        self.patience = patience
        self.early_stop = early_stop
        self.max_epochs = max_epochs
        self.matching = matching
        self.target = target
        self.seed = seed

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            encoder=self.encoder,
            num_classes=self.num_classes,
            seed=self.seed,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            shuffle_prob=self.shuffle_prob,
            lr_decay=self.lr_decay,
            patience=self.patience,
            early_stop=self.early_stop,
            max_epochs=self.max_epochs,
            seed=self.seed,
            matching=self.matching,
            target=self.target,
        )

    def fit(self, X, y=None, validation=None):
        """Train on annotated images; ``validation`` defaults to ``X`` itself."""
        X = check_image_records(X, num_classes=self.num_classes, require_gts=True)
        val = X if validation is None else check_image_records(
            validation, num_classes=self.num_classes, require_gts=True
        )
        result = train_loop(X, val, self._model_config(), self._train_config())
        self.params_ = result.params
        self.config_ = result.config
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.best_val_ap_ = result.best_val_ap
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this ContextualRescorer instance is not fitted yet")

    def predict(self, X):
        """Rescored copies of the input images; boxes and classes untouched."""
        self._check_fitted()
        X = check_image_records(X, num_classes=self.num_classes)
        return rescore_dataset(X, self.params_, self.config_)

    def transform(self, X):
        return self.predict(X)

    def score(self, X, y=None):
        """AP of the rescored images against their own ground truth."""
        self._check_fitted()
        X = check_image_records(X, num_classes=self.num_classes, require_gts=True)
        report = evaluate(
            rescore_dataset(X, self.params_, self.config_),
            EvalParams(),
            num_classes=self.num_classes,
        )
        return report.ap
