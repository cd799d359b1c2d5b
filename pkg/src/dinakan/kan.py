"""Kolmogorov-Arnold layers.

Two parameterizations of the learnable edge functions:

* ``SplineKanLayer`` - the cubic B-spline reference form, where each
  edge carries phi(x) = w_b * silu(x) + w_s * sum_i c_i B_i(x).  Kept as
  an oracle/baseline; it does not appear in the shipped model.
* ``RswafKanLayer`` - the reflectional-switch form actually used in the
  global blocks: a shared homogeneous center grid, per-edge weights on
  the bump basis 1 - tanh((x - c)/h)^2, with an input layernorm holding
  activations inside the basis domain.

Stacks compose layers whose adjacent dimensions must match.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import tensor as T
from .nn import LayerNorm, Linear, Module, Parameter, uniform_init
from .tensor import ShapeError


def rswaf_eval(r, h=1.0):
    """1 - tanh(r/h)^2: even, maximal (=1) at r = 0, decaying in |r|."""
    if h <= 0:
        raise ValueError(f"basis width must be positive, got {h}")
    t = np.tanh(np.asarray(r, dtype=np.float64) / h)
    out = 1.0 - t * t
    return float(out) if np.isscalar(r) else out


# ----------------------------------------------------------------------
# B-spline machinery

def uniform_knots(grid_size=5, domain=(-1.0, 1.0), degree=3):
    """Uniform knot vector over ``domain`` extended by ``degree`` steps each side."""
    lo, hi = domain
    step = (hi - lo) / grid_size
    return np.linspace(lo - degree * step, hi + degree * step, grid_size + 2 * degree + 1)


def _bspline_table(x, knots, degree):
    """Cox-de Boor by degree elevation; returns bases for degrees 0..degree.

    ``x`` is a flat float array; each returned table has shape
    [len(x), len(knots) - deg - 1].
    """
    x = x[:, None]
    tables = [((knots[:-1] <= x) & (x < knots[1:])).astype(x.dtype)]
    for deg in range(1, degree + 1):
        prev = tables[-1]
        n = len(knots) - deg - 1
        left_den = knots[deg : deg + n] - knots[:n]
        right_den = knots[deg + 1 : deg + 1 + n] - knots[1 : 1 + n]
        left = np.where(left_den > 0, (x - knots[:n]) / np.where(left_den > 0, left_den, 1.0), 0.0)
        right = np.where(
            right_den > 0,
            (knots[deg + 1 : deg + 1 + n] - x) / np.where(right_den > 0, right_den, 1.0),
            0.0,
        )
        tables.append(left * prev[:, :n] + right * prev[:, 1 : 1 + n])
    return tables


def bspline_basis(x, knots, degree=3):
    """Evaluate all order-``degree`` B-splines of the knot vector at ``x``.

    Scalars give a 1-D vector of basis values; arrays gain a trailing
    basis axis.  Points outside the extended support evaluate to all
    zeros with a warning (upstream layer normalization is expected to
    keep inputs inside).
    """
    scalar = np.isscalar(x)
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    flat = arr.reshape(-1)
    if np.any((flat < knots[0]) | (flat > knots[-1])):
        warnings.warn("input outside the spline support; basis values are all zero there")
    values = _bspline_table(flat, knots, degree)[degree]
    values = values.reshape(arr.shape + (values.shape[-1],))
    return values[0] if scalar else values


def _bspline_with_derivative(flat, knots, degree):
    tables = _bspline_table(flat, knots, degree)
    top = tables[degree]
    lower = tables[degree - 1]
    n = top.shape[1]
    den_a = knots[degree : degree + n] - knots[:n]
    den_b = knots[degree + 1 : degree + 1 + n] - knots[1 : 1 + n]
    coef_a = np.where(den_a > 0, degree / np.where(den_a > 0, den_a, 1.0), 0.0)
    coef_b = np.where(den_b > 0, degree / np.where(den_b > 0, den_b, 1.0), 0.0)
    deriv = coef_a * lower[:, :n] - coef_b * lower[:, 1 : 1 + n]
    return top, deriv


def spline_basis_op(x, knots, degree=3):
    """Tape op: basis values with an extra trailing axis, differentiable in x."""
    x = T.as_tensor(x)
    flat = x.data.reshape(-1)
    values, deriv = _bspline_with_derivative(flat, knots, degree)
    out_shape = x.shape + (values.shape[-1],)

    def backward_fn(grad):
        g = (grad.reshape(flat.shape[0], -1) * deriv).sum(axis=-1)
        x._accumulate(g.reshape(x.shape))

    return T._make(values.reshape(out_shape), (x,), backward_fn)


class SplineKanLayer(Module):
    """B-spline edge functions: one (coefficients, w_b, w_s) triple per edge.

    Spline coefficients start at zero and w_s at one, so a fresh layer
    computes a pure silu map; w_b gets a symmetric fan-based draw.
    """

    def __init__(self, m_in, m_out, grid_size=5, domain=(-1.0, 1.0), degree=3, dtype=np.float64):
        super().__init__()
        self.m_in = m_in
        self.m_out = m_out
        self.degree = degree
        self.knots = uniform_knots(grid_size, domain, degree)
        self.n_basis = len(self.knots) - degree - 1
        self.coeff = Parameter(np.zeros((m_in, m_out, self.n_basis), dtype=dtype))
        self.w_base = Parameter(uniform_init((m_in, m_out), m_in, dtype=dtype))
        self.w_spline = Parameter(np.ones((m_in, m_out), dtype=dtype))

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.m_in:
            raise ShapeError(f"expected [B,{self.m_in}] input, got {x.shape}")
        basis = spline_basis_op(x, self.knots, self.degree)        # [B, m_in, nb]
        # per-edge spline sum: [m_in, B, nb] @ [m_in, nb, m_out] -> [m_in, B, m_out]
        per_edge = T.matmul(T.transpose(basis, (1, 0, 2)), T.transpose(self.coeff, (0, 2, 1)))
        spline_term = T.sum_(
            T.transpose(per_edge, (1, 0, 2)) * T.reshape(self.w_spline, (1, self.m_in, self.m_out)),
            axis=1,
        )
        base_term = T.matmul(T.silu(x), self.w_base)
        return base_term + spline_term


class RswafKanLayer(Module):
    """Reflectional-switch edge functions over a shared center grid.

    Input features are layer-normalized into the basis domain; each edge
    sums N weighted bumps ``1 - tanh((x_q - c_i)/h)^2`` with the scalar
    per-edge distance read as ``|x_q - c_i|`` (the basis is even, so the
    absolute value never materializes).  Centers and width are learnable.
    """

    def __init__(self, m_in, m_out, n_centers=8, span=(-2.0, 2.0), width=1.0,
                 zero_init=False, dtype=np.float64):
        super().__init__()
        self.m_in = m_in
        self.m_out = m_out
        self.n_centers = n_centers
        self.norm = LayerNorm(m_in, dtype=dtype)
        self.centers = Parameter(np.linspace(span[0], span[1], n_centers).astype(dtype))
        self.width = Parameter(np.asarray(width, dtype=dtype))
        if zero_init:
            w = np.zeros((m_in * n_centers, m_out), dtype=dtype)
        else:
            w = uniform_init((m_in * n_centers, m_out), m_in * n_centers, dtype=dtype)
        self.weight = Parameter(w)

    def basis(self, x):
        """Bump activations for normalized input x: [B, m_in] -> [B, m_in, N]."""
        r = T.reshape(x, x.shape + (1,)) - T.reshape(self.centers, (1, 1, self.n_centers))
        t = T.tanh(r * T.power(self.width, -1.0))
        return 1.0 + (-(t * t))

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.m_in:
            raise ShapeError(f"expected [B,{self.m_in}] input, got {x.shape}")
        normed = self.norm(x)
        phi = self.basis(normed)
        flat = T.reshape(phi, (x.shape[0], self.m_in * self.n_centers))
        return T.matmul(flat, self.weight)


class KanStack(Module):
    """Sequential composition of KAN layers with matching dimensions."""

    def __init__(self, layers):
        super().__init__()
        layers = list(layers)
        if not layers:
            raise ValueError("a stack needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.m_out != b.m_in:
                raise ShapeError(f"layer dims do not compose: {a.m_out} -> {b.m_in}")
        from .nn import ModuleList

        self.layers = ModuleList(layers)

    def forward(self, z):
        for layer in self.layers:
            z = layer(z)
        return z


class KanFeedForward(Module):
    """Position-wise KAN feed-forward over a feature map.

    Spatial positions are treated as batch entries; the map runs through
    an expanding RSWAF layer and a restoring linear projection, so the
    output shape equals the input shape.  The projection starts at zero,
    which keeps a containing residual block an exact identity.
    """

    def __init__(self, dim, expansion=2, n_centers=8, zero_init_out=True, dtype=np.float64):
        super().__init__()
        self.dim = dim
        self.expansion = expansion
        self.expand = RswafKanLayer(dim, dim * expansion, n_centers=n_centers, dtype=dtype)
        self.project = Linear(dim * expansion, dim, zero_init=zero_init_out, dtype=dtype)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.dim:
            raise ShapeError(f"expected [B,{self.dim},H,W], got {x.shape}")
        b, c, h, w = x.shape
        tokens = T.reshape(T.transpose(x, (0, 2, 3, 1)), (b * h * w, c))
        out = self.project(self.expand(tokens))
        return T.transpose(T.reshape(out, (b, h, w, c)), (0, 3, 1, 2))
