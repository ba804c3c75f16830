"""Differentiable weighted least-squares polynomial curve fitting.

Per-pixel decoder outputs (importance, xyz coordinates, relative arclength)
are flattened into a weighted Vandermonde system; its normal-equation
solution gives three independent polynomials over normalized arclength
s in [0, 1], from which M evenly spaced centerline points are queried at
s = j/M for j = 1..M. The base point s = 0 is deliberately never queried.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor, matmul, mul, power, reshape, solve_spd, stack, tsum, transpose
from .errors import InputError

DEFAULT_DEGREE = 4
DEFAULT_RIDGE = 1e-8


@dataclass
class CurveParams:
    """Polynomial coefficients, one column per axis: coeffs[k] scales s**k."""

    coeffs: np.ndarray  # (degree+1, 3)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def to_json(self) -> str:
        return json.dumps(
            {"degree": self.degree, "coefficients": self.coeffs.astype(np.float64).tolist()},
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "CurveParams":
        doc = json.loads(text)
        coeffs = np.asarray(doc["coefficients"], dtype=np.float64)
        if coeffs.shape != (doc["degree"] + 1, 3):
            raise InputError(f"coefficient block {coeffs.shape} does not match degree {doc['degree']}")
        return cls(coeffs)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


def build_design(p_s: Tensor, degree: int) -> Tensor:
    """Vandermonde design matrix: A[i, k] = s_i ** k, shape (HW, degree+1)."""
    if degree < 1:
        raise InputError(f"degree must be >= 1, got {degree}")
    if p_s.ndim != 1:
        raise InputError(f"arclength vector must be 1-D, got shape {p_s.shape}")
    return stack([power(p_s, k) for k in range(degree + 1)], axis=1)


def fit_weighted(a: Tensor, p_w: Tensor, p_c: Tensor, ridge: float = DEFAULT_RIDGE) -> Tensor:
    """Solve the weighted normal equations for the curve coefficients.

    Computes w = (A^T S A + lam I)^-1 A^T S B with S = diag(p_w), where
    lam = ridge * trace(A^T S A) / (degree+1). The trace scaling keeps the
    regularization invariant to uniform importance rescaling; ridge = 0
    reproduces the plain weighted least-squares solution.

    Fully differentiable w.r.t. p_w, p_c, and (through A) the arclengths.
    """
    hw, cols = a.shape
    if ridge < 0:
        raise InputError(f"ridge must be non-negative, got {ridge}")
    if hw < cols:
        raise InputError(f"need at least {cols} samples for degree {cols - 1}, got {hw}")
    if p_w.shape != (hw,):
        raise InputError(f"importance shape {p_w.shape} does not match design rows {hw}")
    if p_c.shape != (hw, 3):
        raise InputError(f"coordinate shape {p_c.shape} is not ({hw}, 3)")

    weights = reshape(p_w, (hw, 1))
    wa = mul(a, weights)
    at = transpose(a, (1, 0))
    gram = matmul(at, wa)
    rhs = matmul(at, mul(p_c, weights))
    if ridge > 0:
        eye = np.eye(cols, dtype=a.dtype)
        trace = tsum(mul(gram, eye))
        gram = gram + mul(trace, Tensor(eye * (ridge / cols), dtype=a.dtype))
    return solve_spd(gram, rhs)


def query_matrix(m: int, degree: int, dtype=np.float64) -> np.ndarray:
    """Rows j = 1..m of ((j/m)^0, ..., (j/m)^degree); row m is the tip."""
    s = np.arange(1, m + 1, dtype=np.float64) / m
    return np.vander(s, degree + 1, increasing=True).astype(dtype)


def query_curve(w: Tensor | CurveParams, m: int) -> Tensor | np.ndarray:
    """Evaluate the fitted curve at the M evenly spaced query arclengths.

    Row j corresponds to s = j/M; the constraint m >= 2*(degree+1) guards
    against aliasing the shape representation.
    """
    if isinstance(w, CurveParams):
        coeffs = w.coeffs
        degree = w.degree
        if m < 2 * (degree + 1):
            raise InputError(f"m = {m} violates m >= {2 * (degree + 1)} for degree {degree}")
        return query_matrix(m, degree, coeffs.dtype) @ coeffs
    degree = w.shape[0] - 1
    if m < 2 * (degree + 1):
        raise InputError(f"m = {m} violates m >= {2 * (degree + 1)} for degree {degree}")
    q = Tensor(query_matrix(m, degree, w.dtype))
    return matmul(q, w)
