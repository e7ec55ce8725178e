"""
Uniform cell-centered grid on (a, b) and the face-based operators used by the
solver and the monitors.

Fields are plain numpy arrays of cell values (length n); face arrays have
length n + 1 with the two boundary faces first and last.
"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class Grid1D(BaseModel):
    """Uniform grid with n cells."""
    model_config = ConfigDict(frozen=True)

    a: float
    b: float
    n: int = Field(..., ge=4)

    @model_validator(mode="after")
    def _check_interval(self):
        if not self.a < self.b:
            raise ValueError("grid requires a < b")
        return self

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def centers(self) -> np.ndarray:
        return self.a + (np.arange(self.n) + 0.5) * self.h

    @property
    def faces(self) -> np.ndarray:
        return self.a + np.arange(self.n + 1) * self.h


class DegeneracyMask(BaseModel):
    """Partition of the cells into {d = 0} and {d > 0}."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    zero_cells: np.ndarray
    positive_cells: np.ndarray
    interior_zero_cells: np.ndarray
    margin: float = 0.0

    @property
    def has_zero_set(self) -> bool:
        return bool(self.zero_cells.any())

    @property
    def has_interior(self) -> bool:
        return bool(self.interior_zero_cells.any())


def face_gradient(v: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Differences across interior faces; zero on the boundary faces (no flux)."""
    out = np.zeros(grid.n + 1)
    out[1:-1] = np.diff(v) / grid.h
    return out


def face_average(v: np.ndarray) -> np.ndarray:
    """Arithmetic face means; boundary faces take the adjacent cell value."""
    out = np.empty(v.shape[0] + 1)
    out[1:-1] = 0.5 * (v[1:] + v[:-1])
    out[0] = v[0]
    out[-1] = v[-1]
    return out


def divergence(flux: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Cell divergence of a face flux."""
    return np.diff(flux) / grid.h


def integrate(v: np.ndarray, grid: Grid1D, mask: Optional[np.ndarray] = None) -> float:
    """h * sum of cell values, optionally restricted to a boolean mask."""
    if mask is not None:
        return float(grid.h * np.sum(v[mask]))
    return float(grid.h * np.sum(v))


def classify(d_field: np.ndarray, grid: Grid1D, tol_zero: Optional[float] = None,
             margin: float = 0.0) -> DegeneracyMask:
    """Split cells into the degeneracy set and its complement.

    ``tol_zero`` defaults to 1e-14 * max(d). A zero cell is interior when the
    distance from its center to every zero/positive interface is at least
    ``margin``.
    """
    d_field = np.asarray(d_field, dtype=float)
    if tol_zero is None:
        tol_zero = 1e-14 * float(np.max(d_field)) if d_field.size else 0.0
    zero = d_field <= tol_zero
    positive = ~zero

    switches = np.nonzero(zero[1:] != zero[:-1])[0] + 1
    interfaces = grid.faces[switches]
    if interfaces.size == 0:
        interior = zero.copy()
    else:
        dist = np.min(np.abs(grid.centers[:, None] - interfaces[None, :]), axis=1)
        interior = zero & (dist >= margin)

    return DegeneracyMask(
        zero_cells=zero,
        positive_cells=positive,
        interior_zero_cells=interior,
        margin=margin,
    )
