"""Second-order forward-mode derivative carriers.

A :class:`Jet` bundles a value with its first and second derivatives with
respect to a fixed parameter vector of length ``n_params``, and propagates
both exactly through arithmetic (chain/product rule).  Values may be scalars
or arrays of any batch shape ``S`` (e.g. one entry per particle); the
derivative payloads then have shapes ``S + (n_params,)`` and
``S + (n_params, n_params)``.

Jets of order 0 carry no derivatives, order 1 carries gradients only, order
2 carries gradients and Hessians.  Plain numbers / ndarrays mix freely with
jets and are treated as constants.  All state propagation in the bundled
state-space models runs on this algebra, so per-particle state derivatives
are exact (no numerical differentiation anywhere in the forward pass).
"""

from __future__ import annotations

import numpy as np

__all__ = ["Jet", "seed_params", "clamp"]


class Jet:
    """Value with optional first/second derivatives w.r.t. the parameters.

    Parameters
    ----------
    value : ndarray or float, batch shape ``S``
    grad : ndarray of shape ``S + (n_params,)``, or None
    hess : ndarray of shape ``S + (n_params, n_params)``, or None.
        Must be symmetric in its trailing two axes; all operations
        preserve that symmetry.
    """

    __slots__ = ("v", "g", "h")

    def __init__(self, value, grad=None, hess=None):
        self.v = np.asarray(value, dtype=float)
        self.g = grad
        self.h = hess

    @property
    def order(self) -> int:
        if self.g is None:
            return 0
        return 1 if self.h is None else 2

    def copy(self) -> "Jet":
        return Jet(
            self.v.copy(),
            None if self.g is None else self.g.copy(),
            None if self.h is None else self.h.copy(),
        )

    def take(self, idx) -> "Jet":
        """Gather batch entries by index (resampling support)."""
        return Jet(
            self.v[idx],
            None if self.g is None else self.g[idx],
            None if self.h is None else self.h[idx],
        )

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            g, h = _pair(self, other)
            return Jet(
                self.v + other.v,
                None if g is None else g[0] + g[1],
                None if h is None else h[0] + h[1],
            )
        return Jet(self.v + other, self.g, self.h)

    __radd__ = __add__

    def __neg__(self):
        return Jet(
            -self.v,
            None if self.g is None else -self.g,
            None if self.h is None else -self.h,
        )

    def __sub__(self, other):
        if isinstance(other, Jet):
            g, h = _pair(self, other)
            return Jet(
                self.v - other.v,
                None if g is None else g[0] - g[1],
                None if h is None else h[0] - h[1],
            )
        return Jet(self.v - other, self.g, self.h)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            g, h = _pair(self, other)
            av, bv = self.v, other.v
            out_g = None
            out_h = None
            if g is not None:
                ag, bg = g
                out_g = ag * bv[..., None] + bg * av[..., None]
                if h is not None:
                    ah, bh = h
                    cross = ag[..., :, None] * bg[..., None, :]
                    out_h = (
                        ah * bv[..., None, None]
                        + bh * av[..., None, None]
                        + cross
                        + _t(cross)
                    )
            return Jet(av * bv, out_g, out_h)
        c = np.asarray(other, dtype=float)
        return Jet(
            self.v * c,
            None if self.g is None else self.g * c[..., None],
            None if self.h is None else self.h * c[..., None, None],
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other._reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def _reciprocal(self) -> "Jet":
        inv = 1.0 / self.v
        g = None
        h = None
        if self.g is not None:
            inv2 = inv * inv
            g = -self.g * inv2[..., None]
            if self.h is not None:
                outer = self.g[..., :, None] * self.g[..., None, :]
                h = -self.h * inv2[..., None, None] + 2.0 * outer * (
                    inv2 * inv
                )[..., None, None]
        return Jet(inv, g, h)

    def sqrt(self) -> "Jet":
        s = np.sqrt(self.v)
        g = None
        h = None
        if self.g is not None:
            half_inv = 0.5 / s
            g = self.g * half_inv[..., None]
            if self.h is not None:
                outer = self.g[..., :, None] * self.g[..., None, :]
                h = self.h * half_inv[..., None, None] - outer * (
                    0.25 / (s * self.v)
                )[..., None, None]
        return Jet(s, g, h)


def _t(a):
    """Transpose the trailing two axes."""
    return np.swapaxes(a, -1, -2)


def _pair(a: Jet, b: Jet):
    """Broadcast-compatible (grad, hess) pairs at the common order."""
    if a.g is None or b.g is None:
        return None, None
    g = (a.g, b.g)
    if a.h is None or b.h is None:
        return g, None
    return g, (a.h, b.h)


def seed_params(theta, order: int) -> list[Jet]:
    """Seed one scalar jet per parameter, dθ_i/dθ_j = δ_ij.

    ``order`` selects how much derivative payload downstream jets carry:
    0 none, 1 gradients, 2 gradients and Hessians.
    """
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[0]
    out = []
    for i in range(d):
        g = None
        h = None
        if order >= 1:
            g = np.zeros(d)
            g[i] = 1.0
        if order >= 2:
            h = np.zeros((d, d))
        out.append(Jet(theta[i], g, h))
    return out


def clamp(a: Jet, lo=None, hi=None) -> Jet:
    """Clip a jet's value, zeroing derivatives wherever the clip is active.

    The clipped function is constant beyond the bounds, so its exact first
    and second derivatives there are zero.
    """
    clipped = np.clip(a.v, lo, hi)
    if a.g is None:
        return Jet(clipped, None, None)
    interior = clipped == a.v
    g = np.where(interior[..., None], a.g, 0.0)
    h = None
    if a.h is not None:
        h = np.where(interior[..., None, None], a.h, 0.0)
    return Jet(clipped, g, h)
