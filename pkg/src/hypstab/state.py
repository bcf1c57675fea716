"""Grid-sampled system states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["StateSnapshot", "uniform_grid", "one_sided_derivative"]


def uniform_grid(n_cells):
    if n_cells < 4:
        raise ValueError(f"grid too coarse: {n_cells} cells")
    return np.linspace(0.0, 1.0, n_cells + 1)


def one_sided_derivative(values, dx, at_start=True):
    """Second-order one-sided difference at a domain end."""
    values = np.asarray(values)
    if values.shape[-1] < 3:
        raise ValueError("need at least 3 nodes for the one-sided stencil")
    if at_start:
        return (-3.0 * values[..., 0] + 4.0 * values[..., 1] - values[..., 2]) / (2.0 * dx)
    return (3.0 * values[..., -1] - 4.0 * values[..., -2] + values[..., -3]) / (2.0 * dx)


@dataclass
class StateSnapshot:
    """State w(t, .) sampled on a uniform x-grid; rows are components."""

    t: float
    xs: np.ndarray
    w: np.ndarray  # shape (n, N+1)

    def __post_init__(self):
        self.xs = np.ascontiguousarray(self.xs, dtype=np.float64)
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        if self.w.ndim != 2 or self.w.shape[1] != self.xs.shape[0]:
            raise ValueError(
                f"state shape {self.w.shape} does not match grid {self.xs.shape}"
            )

    @classmethod
    def zeros(cls, n_components, n_cells, t=0.0):
        xs = uniform_grid(n_cells)
        return cls(t, xs, np.zeros((n_components, xs.size)))

    @property
    def n_components(self):
        return self.w.shape[0]

    @property
    def n_cells(self):
        return self.xs.size - 1

    @property
    def dx(self):
        return self.xs[1] - self.xs[0]

    def copy(self):
        return StateSnapshot(self.t, self.xs, self.w.copy())

    def interp(self, component, x):
        """Linear interpolation of one component at position(s) x in [0,1]."""
        return np.interp(x, self.xs, self.w[component])

    def sup_norm(self):
        return float(np.max(np.abs(self.w))) if self.w.size else 0.0

    def c1_norm(self):
        """Discrete C^1 norm: max of sup|w| and sup|dw/dx| (np.gradient)."""
        sup = self.sup_norm()
        if self.w.shape[1] < 2:
            return sup
        slopes = np.gradient(self.w, self.xs, axis=1)
        return max(sup, float(np.max(np.abs(slopes))))
