"""Cosine-basis spectral machinery for coverage objectives.

The coverage error of a trajectory against a target density is measured in
a truncated cosine Fourier basis over a rectangular workspace: the basis is
unit-normalized in L2, every mode carries a Sobolev-style weight, and the
metric is the weighted squared distance between the trajectory's
time-averaged basis values and the density's basis coefficients.  Because
the basis is smooth, the metric is differentiable with respect to the
trajectory, which is what the trajectory optimizer needs.

Everything in this module is a pure function of immutable inputs and is
safe to call concurrently from multiple threads.
"""

import numpy as np

__all__ = [
    "OutsideWorkspaceError",
    "Workspace",
    "FourierBasis",
    "trajectory_coefficients",
    "map_coefficients",
    "ergodic_metric",
    "metric_gradient",
]


class OutsideWorkspaceError(ValueError):
    """A query point lies outside the rectangular exploration domain."""


class Workspace:
    """Axis-aligned box: a point w is inside iff 0 <= w_i - low_i <= L_i.

    The per-axis offset ``lows`` lets angular domains with negative bounds
    (e.g. yaw in [-135 deg, +135 deg]) reuse the cosine basis, which is
    defined on [0, L_i] in internal coordinates.
    """

    def __init__(self, lengths, lows=None):
        self.lengths = np.atleast_1d(np.asarray(lengths, dtype=float)).copy()
        if self.lengths.size < 1:
            raise ValueError("workspace needs at least one axis")
        if np.any(self.lengths <= 0.0):
            raise ValueError("every axis length must be positive")
        if lows is None:
            self.lows = np.zeros_like(self.lengths)
        else:
            self.lows = np.atleast_1d(np.asarray(lows, dtype=float)).copy()
            if self.lows.shape != self.lengths.shape:
                raise ValueError("lows must match lengths per axis")
        self.lengths.flags.writeable = False
        self.lows.flags.writeable = False

    @property
    def dims(self):
        return int(self.lengths.size)

    @property
    def highs(self):
        return self.lows + self.lengths

    def area(self):
        return float(np.prod(self.lengths))

    def uniform_level(self):
        """Density of the uniform unit-mass distribution on the box."""
        return 1.0 / self.area()

    def to_local(self, points):
        return np.asarray(points, dtype=float) - self.lows

    def contains(self, points, slack=0.0):
        rel = self.to_local(points)
        return np.all((rel >= -slack) & (rel <= self.lengths + slack), axis=-1)

    def require_inside(self, points, what="point", slack=1e-12):
        if not np.all(self.contains(points, slack=slack)):
            raise OutsideWorkspaceError(
                f"{what} outside workspace (lows={self.lows.tolist()}, "
                f"lengths={self.lengths.tolist()})"
            )

    def clamp(self, points):
        pts = np.asarray(points, dtype=float)
        return np.clip(pts, self.lows, self.highs)

    def __repr__(self):
        return f"Workspace(lengths={self.lengths.tolist()}, lows={self.lows.tolist()})"

    def __eq__(self, other):
        return (isinstance(other, Workspace)
                and np.array_equal(self.lengths, other.lengths)
                and np.array_equal(self.lows, other.lows))

    def __hash__(self):
        return hash((tuple(self.lengths), tuple(self.lows)))


class FourierBasis:
    """All integer modes k with 0 <= k_i < modes_per_axis on a workspace.

    Per mode the basis function, its weight and its normalizer are

        F_k(w)   = prod_i cos((w_i - low_i) k_i pi / L_i) / h_k
        weight_k = (1 + |k|^2) ** (-(v + 1) / 2)
        h_k      = sqrt(prod_i l_i),  l_i = L_i if k_i == 0 else L_i / 2

    so that the L2 norm of every F_k over the workspace is exactly one.
    Mode order is row-major in (k_0, ..., k_{v-1}).
    """

    def __init__(self, workspace, modes_per_axis):
        self.workspace = workspace
        v = workspace.dims
        if np.ndim(modes_per_axis) == 0:
            per_axis = (int(modes_per_axis),) * v
        else:
            per_axis = tuple(int(m) for m in modes_per_axis)
        if len(per_axis) != v or any(m < 1 for m in per_axis):
            raise ValueError("modes_per_axis must be >= 1 for every axis")
        self.modes_per_axis = per_axis

        grids = np.meshgrid(*[np.arange(m) for m in per_axis], indexing="ij")
        self.modes = np.stack([g.ravel() for g in grids], axis=1)  # (nK, v)
        ksq = np.sum(self.modes**2, axis=1)
        self.weights = (1.0 + ksq) ** (-(v + 1) / 2.0)
        ell = np.where(self.modes == 0, workspace.lengths, workspace.lengths / 2.0)
        self.normalizers = np.sqrt(np.prod(ell, axis=1))
        # spatial frequency per axis, omega_{k,i} = k_i pi / L_i
        self.angular = self.modes * np.pi / workspace.lengths
        for arr in (self.modes, self.weights, self.normalizers, self.angular):
            arr.flags.writeable = False

    def __len__(self):
        return self.modes.shape[0]

    def mode_index(self, k):
        """Flat index of an integer mode vector."""
        k = tuple(int(i) for i in np.atleast_1d(k))
        idx = 0
        for ki, mi in zip(k, self.modes_per_axis):
            if not 0 <= ki < mi:
                raise ValueError(f"mode {k} not in basis")
            idx = idx * mi + ki
        return idx

    def value(self, k_index, point):
        """F_k at a single point (raises if the point is outside)."""
        self.workspace.require_inside(point)
        rel = self.workspace.to_local(point)
        return float(np.prod(np.cos(self.angular[k_index] * rel)) / self.normalizers[k_index])

    def gradient(self, k_index, point):
        """Analytic spatial gradient of F_k at a single point."""
        self.workspace.require_inside(point)
        rel = self.workspace.to_local(point)
        om = self.angular[k_index]
        c = np.cos(om * rel)
        s = np.sin(om * rel)
        v = self.workspace.dims
        grad = np.empty(v)
        for i in range(v):
            others = np.prod(np.delete(c, i))
            grad[i] = -om[i] * s[i] * others / self.normalizers[k_index]
        return grad

    # ---- vectorized paths used by the metric and the solver ----

    def eval_points(self, points, check=True):
        """Basis values at many points, shape (n_modes, n_points).

        ``check=False`` skips the containment test for callers that already
        guarantee it (the solver's barrier keeps iterates inside).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if check:
            self.workspace.require_inside(pts, what="trajectory point")
        rel = pts - self.workspace.lows  # (T, v)
        phases = self.angular[:, None, :] * rel[None, :, :]  # (nK, T, v)
        return np.prod(np.cos(phases), axis=2) / self.normalizers[:, None]

    def eval_points_with_gradient(self, points, check=True):
        """Values and spatial gradients, shapes (nK, T) and (nK, T, v)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if check:
            self.workspace.require_inside(pts, what="trajectory point")
        rel = pts - self.workspace.lows
        phases = self.angular[:, None, :] * rel[None, :, :]
        cos = np.cos(phases)
        sin = np.sin(phases)
        values = np.prod(cos, axis=2) / self.normalizers[:, None]
        v = self.workspace.dims
        grads = np.empty(cos.shape)
        for i in range(v):
            others = np.prod(np.delete(cos, i, axis=2), axis=2)
            grads[:, :, i] = -self.angular[:, i:i + 1] * sin[:, :, i] * others
        grads /= self.normalizers[:, None, None]
        return values, grads

    def axis_cosines(self, axis_points):
        """Per-axis cosine tables for separable grid quadrature.

        axis_points is one 1-D array of workspace coordinates per axis;
        the result is one (modes_per_axis[i], len(axis_points[i])) table
        per axis, *without* the 1/h_k normalization (applied by callers).
        """
        tables = []
        for i, pts_i in enumerate(axis_points):
            rel = np.asarray(pts_i, dtype=float) - self.workspace.lows[i]
            k = np.arange(self.modes_per_axis[i])
            tables.append(np.cos(np.outer(k * np.pi / self.workspace.lengths[i], rel)))
        return tables


def trajectory_coefficients(basis, points):
    """Time-averaged basis values c_k = (1/T) sum_t F_k(w_t)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1:
        raise ValueError("trajectory must contain at least one point")
    return basis.eval_points(pts).mean(axis=1)


def map_coefficients(basis, grid_map, normalization_tol=1e-6):
    """Basis coefficients of a normalized grid density via midpoint quadrature.

    Uses the map's own cells as quadrature nodes; separable cosine tables
    keep this cheap even for fine grids.
    """
    integral = grid_map.integral()
    if abs(integral - 1.0) > normalization_tol:
        raise ValueError(f"map is not normalized (integral {integral!r})")
    tables = basis.axis_cosines(grid_map.axis_centers())
    weighted = grid_map.density * grid_map.cell_area
    if basis.workspace.dims == 2:
        coeffs = np.einsum("ai,bj,ij->ab", tables[0], tables[1], weighted).ravel()
    else:
        coeffs = weighted
        for t in tables:
            coeffs = np.tensordot(t, coeffs, axes=([1], [0]))
        coeffs = coeffs.ravel()
    return coeffs / basis.normalizers


def ergodic_metric(basis, coefficients, target_coefficients):
    """Weighted squared coefficient distance; zero iff the vectors agree."""
    c = np.asarray(coefficients, dtype=float)
    p = np.asarray(target_coefficients, dtype=float)
    if c.shape != (len(basis),) or p.shape != (len(basis),):
        raise ValueError("coefficient vectors must match the basis mode count")
    d = c - p
    return float(np.sum(basis.weights * d * d))


def metric_gradient(basis, points, target_coefficients):
    """Gradient of the metric with respect to every trajectory point.

    Row t is  (2/T) sum_k weight_k (c_k - phi_k) grad F_k(w_t).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1:
        raise ValueError("trajectory must contain at least one point")
    p = np.asarray(target_coefficients, dtype=float)
    if p.shape != (len(basis),):
        raise ValueError("coefficient vector must match the basis mode count")
    values, grads = basis.eval_points_with_gradient(pts)
    c = values.mean(axis=1)
    scale = 2.0 * basis.weights * (c - p) / pts.shape[0]
    return np.einsum("k,ktv->tv", scale, grads)
