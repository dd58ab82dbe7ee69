"""Online least-squares status model: fit over a sliding sample window, roll forward.

The model maps the last ``n_input`` statuses (stacked, oldest first) to the
predicted components of the next status. Components excluded from the
prediction mask (e.g. a commanded acceleration) are exogenous: they appear in
the regressor but are supplied from outside when rolling the model forward.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Slot, StatusVector

# Relative singular-value cutoff for the pseudo-inverse: singular values below
# RCOND * sigma_max are treated as zero, which makes the fit the minimum
# Frobenius norm solution on rank-deficient windows.
RCOND = 1e-10


@dataclass(frozen=True)
class LinearModel:
    """One-step linear predictor ``w(t) = matrix @ stack(s(t-n..t-1))``."""

    matrix: np.ndarray            # (n_predicted, n_input * dim)
    n_input: int
    predicted_mask: np.ndarray    # bool (dim,), True where the model predicts
    version: Slot = 0             # slot the fit window ended at

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        mask = np.asarray(self.predicted_mask, dtype=bool)
        if m.shape != (int(mask.sum()), self.n_input * mask.shape[0]):
            raise ValueError(f"matrix shape {m.shape} inconsistent with mask/n_input")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "predicted_mask", mask)

    @property
    def dim(self) -> int:
        return int(self.predicted_mask.shape[0])


def zero_model(dim: int, predicted_mask: Sequence[bool], n_input: int = 1) -> LinearModel:
    """The all-zeros model both ends start from (predicts zeros until first fit)."""
    mask = np.asarray(predicted_mask, dtype=bool)
    return LinearModel(np.zeros((int(mask.sum()), n_input * dim)), n_input, mask, version=0)


class SampleWindow:
    """Ring buffer of the most recent sensed statuses, stamps strictly increasing."""

    def __init__(self, capacity: int):
        if capacity < 2:
            raise ValueError("window capacity must be at least 2")
        self.capacity = int(capacity)
        self._buf: deque[StatusVector] = deque(maxlen=self.capacity)

    def push(self, s: StatusVector) -> None:
        if self._buf and s.stamp <= self._buf[-1].stamp:
            raise ValueError(f"stamp {s.stamp} not after {self._buf[-1].stamp}")
        self._buf.append(s)

    def __len__(self) -> int:
        return len(self._buf)

    def samples(self) -> list[StatusVector]:
        return list(self._buf)

    def values(self) -> np.ndarray:
        """(n, dim) array of the buffered statuses, oldest first."""
        return np.array([s.values for s in self._buf], dtype=np.float64)


def fit_lms(window: SampleWindow, predicted_mask: Sequence[bool], n_input: int = 1,
            version: Slot = 0, rcond: float = RCOND) -> LinearModel:
    """Least-squares fit of the one-step map over the window.

    Builds the regressor matrix S whose columns are stacked input histories and
    the target matrix W of masked next statuses, then solves ``A = W @ pinv(S)``.
    On rank-deficient windows the pseudo-inverse keeps A at minimum Frobenius
    norm among all least-squares solutions. ``rcond`` is the relative singular
    value cutoff; raising it above the numerical default discards directions
    whose in-window variation is pure sensing noise, which would otherwise be
    fitted into the matrix and destabilize long rolls from a near-constant
    operating point.
    """
    mask = np.asarray(predicted_mask, dtype=bool)
    vals = window.values()
    n = vals.shape[0]
    if n < n_input + 1:
        raise ValueError(f"window has {n} samples, need at least {n_input + 1}")
    n_pairs = n - n_input
    dim = vals.shape[1]
    s_mat = np.empty((n_input * dim, n_pairs))
    for k in range(n_pairs):
        s_mat[:, k] = vals[k:k + n_input].reshape(-1)
    w_mat = vals[n_input:, mask].T
    a = w_mat @ np.linalg.pinv(s_mat, rcond=rcond)
    return LinearModel(a, n_input, mask, version=version)


def stack_history(history: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate the model input statuses, oldest first."""
    return np.concatenate([np.asarray(h, dtype=np.float64) for h in history])


def predict_values(model: LinearModel, stacked: np.ndarray) -> np.ndarray:
    """Predicted components only (the low-level roll both endpoints share)."""
    return model.matrix @ stacked


def predict(model: LinearModel, history: Sequence[StatusVector],
            exogenous: Sequence[float] | None, stamp: Slot) -> StatusVector:
    """One-step prediction as a full status for ``stamp``.

    ``history`` must hold exactly ``n_input`` statuses, oldest first.
    ``exogenous`` supplies the non-predicted components in component order and
    is required whenever the mask leaves any component unpredicted.
    """
    if len(history) != model.n_input:
        raise ValueError(f"need {model.n_input} history statuses, got {len(history)}")
    n_exo = model.dim - int(model.predicted_mask.sum())
    if n_exo > 0:
        if exogenous is None or len(exogenous) != n_exo:
            raise ValueError(f"need {n_exo} exogenous components")
    stacked = stack_history([h.values for h in history])
    out = np.empty(model.dim)
    out[model.predicted_mask] = predict_values(model, stacked)
    if n_exo > 0:
        out[~model.predicted_mask] = np.asarray(exogenous, dtype=np.float64)
    return StatusVector(out, stamp)
