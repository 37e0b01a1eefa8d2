"""Library of node transitions and local costs with hand-derived derivatives.

Every transition maps the concatenated parent states ``z`` to the node state
and exposes its Jacobian and its *adjoint-contracted* Hessian
``w -> sum_k w_k d^2 y_k / dz dz``; the full third-order tensor is never
built.  Costs map the concatenated scope states (own node first, then the
parents in declaration order) to a scalar and expose gradient and Hessian.

Objects are registered by name so that problems can be written to and read
back from the text format in :mod:`graphnewton.textformat`.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "NodeFunction", "LocalCost",
    "Affine", "Sum", "Polynomial", "SpringDamper", "FiniteDifferenceFunction",
    "QuadraticCost", "ElementwisePolyCost", "SumCost", "SpringDamperCost",
    "FiniteDifferenceCost",
    "transition_from_dict", "cost_from_dict", "to_dict", "split_blocks",
]


def _arr(x, ndim):
    a = np.array(x, dtype=float)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def split_blocks(dims):
    """Slices that cut a concatenated vector into pieces of the given sizes."""
    out, start = [], 0
    for d in dims:
        out.append(slice(start, start + d))
        start += d
    return out


class NodeFunction:
    """A transition ``y = phi(z)``; subclasses set ``name``, ``in_dim`` and ``out_dim``."""

    name = None
    serializable = True

    def __call__(self, z):
        raise NotImplementedError

    def jacobian(self, z):
        raise NotImplementedError

    def hessian_contract(self, z, w):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    @classmethod
    def from_params(cls, params):
        return cls(**params)

    # per-parent views used by the graph machinery
    def jacobians(self, parts):
        z = np.concatenate(parts)
        J = self.jacobian(z)
        return [J[:, s] for s in split_blocks([len(p) for p in parts])]

    def hessians(self, parts, w):
        z = np.concatenate(parts)
        H = self.hessian_contract(z, w)
        sl = split_blocks([len(p) for p in parts])
        return [[H[a, b] for b in sl] for a in sl]

    def __eq__(self, other):
        return (type(self) is type(other) and self.serializable
                and _params_equal(self.params(), other.params()))

    __hash__ = object.__hash__


class LocalCost:
    """A scalar cost ``l(z)`` on the concatenated scope states."""

    name = None
    serializable = True

    def __call__(self, z):
        raise NotImplementedError

    def gradient(self, z):
        raise NotImplementedError

    def hessian(self, z):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    @classmethod
    def from_params(cls, params):
        return cls(**params)

    def gradients(self, parts):
        g = self.gradient(np.concatenate(parts))
        return [g[s] for s in split_blocks([len(p) for p in parts])]

    def hessians(self, parts):
        H = self.hessian(np.concatenate(parts))
        sl = split_blocks([len(p) for p in parts])
        return [[H[a, b] for b in sl] for a in sl]

    def __eq__(self, other):
        return (type(self) is type(other) and self.serializable
                and _params_equal(self.params(), other.params()))

    __hash__ = object.__hash__


def _params_equal(a, b):
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_params_equal(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_params_equal(x, y) for x, y in zip(a, b))
    return a == b


# ---------------------------------------------------------------------------
# transitions

class Affine(NodeFunction):
    """``y = W z + c``."""

    name = "affine"

    def __init__(self, W, c=None):
        self.W = _arr(W, 2)
        self.out_dim, self.in_dim = self.W.shape
        self.c = np.zeros(self.out_dim) if c is None else _arr(c, 1)
        if self.c.shape != (self.out_dim,):
            raise ValueError("offset length must match the row count of W")

    def __call__(self, z):
        return self.W @ z + self.c

    def jacobian(self, z):
        return self.W.copy()

    def hessian_contract(self, z, w):
        return np.zeros((self.in_dim, self.in_dim))

    def params(self):
        return {"W": self.W.tolist(), "c": self.c.tolist()}


class Sum(NodeFunction):
    """Sum of ``count`` parent states, each of dimension ``dim``."""

    name = "sum"

    def __init__(self, dim, count):
        self.dim, self.count = int(dim), int(count)
        self.out_dim, self.in_dim = self.dim, self.dim * self.count

    def __call__(self, z):
        return z.reshape(self.count, self.dim).sum(axis=0)

    def jacobian(self, z):
        return np.tile(np.eye(self.dim), (1, self.count))

    def hessian_contract(self, z, w):
        return np.zeros((self.in_dim, self.in_dim))

    def params(self):
        return {"dim": self.dim, "count": self.count}


class Polynomial(NodeFunction):
    """``y = W z + c + sum_p a_p * (V z)**p`` for ``p = 2, 3, ...``.

    ``coeffs[k, j]`` multiplies ``(V z)_k ** (j + 2)``, so an elementwise
    polynomial is applied to a second affine image of the parents.
    """

    name = "polynomial"

    def __init__(self, W, V, coeffs, c=None):
        self.W = _arr(W, 2)
        self.V = _arr(V, 2)
        self.coeffs = _arr(coeffs, 2)
        self.out_dim, self.in_dim = self.W.shape
        if self.V.shape != self.W.shape or self.coeffs.shape[0] != self.out_dim:
            raise ValueError("W, V and coeffs disagree on dimensions")
        self.c = np.zeros(self.out_dim) if c is None else _arr(c, 1)
        self._p = np.arange(2, 2 + self.coeffs.shape[1])

    def _poly(self, t):
        # value, first and second derivative of the elementwise polynomial
        p, a = self._p, self.coeffs
        tt = t[:, None]
        val = (a * tt ** p).sum(axis=1)
        d1 = (a * p * tt ** (p - 1)).sum(axis=1)
        d2 = (a * p * (p - 1) * tt ** (p - 2)).sum(axis=1)
        return val, d1, d2

    def __call__(self, z):
        val, _, _ = self._poly(self.V @ z)
        return self.W @ z + self.c + val

    def jacobian(self, z):
        _, d1, _ = self._poly(self.V @ z)
        return self.W + d1[:, None] * self.V

    def hessian_contract(self, z, w):
        _, _, d2 = self._poly(self.V @ z)
        return self.V.T @ ((w * d2)[:, None] * self.V)

    def params(self):
        return {"W": self.W.tolist(), "V": self.V.tolist(),
                "coeffs": self.coeffs.tolist(), "c": self.c.tolist()}


class SpringDamper(NodeFunction):
    """Discretised cubic spring-damper step.

    Parents are ``(x_prev, x_cur, u)``, all scalar; returns
    ``x_cur + d + dt^2 (-(x_cur^3 + (d/dt)^3)/6 + u)`` with ``d = x_cur - x_prev``.
    """

    name = "spring_damper"
    in_dim, out_dim = 3, 1

    def __init__(self, dt):
        self.dt = float(dt)

    def __call__(self, z):
        a, b, u = z
        dt = self.dt
        d = b - a
        return np.array([b + d + dt * dt * (-(b ** 3 + (d / dt) ** 3) / 6.0 + u)])

    def jacobian(self, z):
        a, b, _ = z
        dt = self.dt
        q = (b - a) ** 2 / (2.0 * dt)
        return np.array([[-1.0 + q, 2.0 - dt * dt * b * b / 2.0 - q, dt * dt]])

    def hessian_contract(self, z, w):
        a, b, _ = z
        dt = self.dt
        r = (b - a) / dt
        H = np.array([[-r, r, 0.0],
                      [r, -dt * dt * b - r, 0.0],
                      [0.0, 0.0, 0.0]])
        return w[0] * H

    def params(self):
        return {"dt": self.dt}


class FiniteDifferenceFunction(NodeFunction):
    """Wraps a plain callable; derivatives by central differences (slow).

    Meant for prototyping user transitions; not serializable.
    """

    name = "finite_difference"
    serializable = False

    def __init__(self, fn, in_dim, out_dim, step=1e-5):
        self.fn, self.in_dim, self.out_dim, self.step = fn, in_dim, out_dim, step

    def __call__(self, z):
        return np.atleast_1d(np.asarray(self.fn(z), dtype=float))

    def jacobian(self, z):
        J = np.empty((self.out_dim, self.in_dim))
        for j in range(self.in_dim):
            h = self.step * (abs(z[j]) + 1.0)
            e = np.zeros(self.in_dim)
            e[j] = h
            J[:, j] = (self(z + e) - self(z - e)) / (2 * h)
        return J

    def hessian_contract(self, z, w):
        H = np.empty((self.in_dim, self.in_dim))
        for j in range(self.in_dim):
            h = self.step * (abs(z[j]) + 1.0)
            e = np.zeros(self.in_dim)
            e[j] = h
            H[:, j] = (w @ self.jacobian(z + e) - w @ self.jacobian(z - e)) / (2 * h)
        return 0.5 * (H + H.T)

    def params(self):
        raise TypeError("finite-difference wrappers cannot be serialized")


# ---------------------------------------------------------------------------
# costs

class QuadraticCost(LocalCost):
    """``0.5 z'Pz + q'z + const``."""

    name = "quadratic"

    def __init__(self, P, q=None, const=0.0):
        P = _arr(P, 2)
        self.P = 0.5 * (P + P.T)
        n = self.P.shape[0]
        self.q = np.zeros(n) if q is None else _arr(q, 1)
        self.const = float(const)

    def __call__(self, z):
        return float(0.5 * z @ self.P @ z + self.q @ z + self.const)

    def gradient(self, z):
        return self.P @ z + self.q

    def hessian(self, z):
        return self.P.copy()

    def params(self):
        return {"P": self.P.tolist(), "q": self.q.tolist(), "const": self.const}


class ElementwisePolyCost(LocalCost):
    """``sum_k sum_p coeffs[k, p] * z_k ** p``."""

    name = "elementwise_poly"

    def __init__(self, coeffs):
        self.coeffs = _arr(coeffs, 2)
        self._p = np.arange(self.coeffs.shape[1])

    def __call__(self, z):
        return float((self.coeffs * z[:, None] ** self._p).sum())

    def gradient(self, z):
        p, a = self._p[1:], self.coeffs[:, 1:]
        return (a * p * z[:, None] ** (p - 1)).sum(axis=1)

    def hessian(self, z):
        p, a = self._p[2:], self.coeffs[:, 2:]
        return np.diag((a * p * (p - 1) * z[:, None] ** (p - 2)).sum(axis=1))

    def params(self):
        return {"coeffs": self.coeffs.tolist()}


class SumCost(LocalCost):
    name = "sum"

    def __init__(self, terms):
        self.terms = [t if isinstance(t, LocalCost) else cost_from_dict(t) for t in terms]

    def __call__(self, z):
        return float(sum(t(z) for t in self.terms))

    def gradient(self, z):
        return sum(t.gradient(z) for t in self.terms)

    def hessian(self, z):
        return sum(t.hessian(z) for t in self.terms)

    def params(self):
        return {"terms": [to_dict(t) for t in self.terms]}


class SpringDamperCost(LocalCost):
    """Limit-cycle running cost on the scope ``(x_next, x_prev, x_cur, u)``.

    With ``v = (x_cur - x_prev) / dt`` the cost is
    ``1 - exp(s (v - 2)^2) - exp(-(v + 2)^2) + u^2 / 2`` where ``s = -1`` for
    the ``"symmetric"`` variant and ``s = +1`` for the literal ``"paper"``
    variant (unbounded below in ``v``).
    """

    name = "spring_damper_cost"
    VARIANTS = ("symmetric", "paper")

    def __init__(self, dt, variant="symmetric"):
        if variant not in self.VARIANTS:
            raise ValueError(f"unknown cost variant {variant!r}")
        self.dt = float(dt)
        self.variant = variant
        self._s = -1.0 if variant == "symmetric" else 1.0

    def _terms(self, v):
        s = self._s
        e1 = np.exp(s * (v - 2.0) ** 2)
        e2 = np.exp(-(v + 2.0) ** 2)
        g = 1.0 - e1 - e2
        g1 = -2.0 * s * (v - 2.0) * e1 + 2.0 * (v + 2.0) * e2
        g2 = -(2.0 * s + 4.0 * (v - 2.0) ** 2) * e1 - (-2.0 + 4.0 * (v + 2.0) ** 2) * e2
        return g, g1, g2

    def __call__(self, z):
        _, xp, xc, u = z
        g, _, _ = self._terms((xc - xp) / self.dt)
        return float(g + 0.5 * u * u)

    def gradient(self, z):
        _, xp, xc, u = z
        _, g1, _ = self._terms((xc - xp) / self.dt)
        k = g1 / self.dt
        return np.array([0.0, -k, k, u])

    def hessian(self, z):
        _, xp, xc, _ = z
        _, _, g2 = self._terms((xc - xp) / self.dt)
        k = g2 / self.dt ** 2
        return np.array([[0.0, 0.0, 0.0, 0.0],
                         [0.0, k, -k, 0.0],
                         [0.0, -k, k, 0.0],
                         [0.0, 0.0, 0.0, 1.0]])

    def params(self):
        return {"dt": self.dt, "variant": self.variant}


class FiniteDifferenceCost(LocalCost):
    """Cost from a plain callable; gradient and Hessian by central differences."""

    name = "finite_difference"
    serializable = False

    def __init__(self, fn, step=1e-5):
        self.fn, self.step = fn, step

    def __call__(self, z):
        return float(self.fn(z))

    def gradient(self, z):
        g = np.empty(len(z))
        for j in range(len(z)):
            h = self.step * (abs(z[j]) + 1.0)
            e = np.zeros(len(z))
            e[j] = h
            g[j] = (self(z + e) - self(z - e)) / (2 * h)
        return g

    def hessian(self, z):
        n = len(z)
        H = np.empty((n, n))
        for j in range(n):
            h = self.step * (abs(z[j]) + 1.0)
            e = np.zeros(n)
            e[j] = h
            H[:, j] = (self.gradient(z + e) - self.gradient(z - e)) / (2 * h)
        return 0.5 * (H + H.T)

    def params(self):
        raise TypeError("finite-difference wrappers cannot be serialized")


# ---------------------------------------------------------------------------
# registry

TRANSITIONS = {cls.name: cls for cls in (Affine, Sum, Polynomial, SpringDamper)}
COSTS = {cls.name: cls for cls in (QuadraticCost, ElementwisePolyCost, SumCost, SpringDamperCost)}


def to_dict(obj):
    if not obj.serializable:
        raise TypeError(f"{type(obj).__name__} cannot be serialized")
    return {"name": obj.name, "params": obj.params()}


def _from_dict(d, registry, kind):
    try:
        cls = registry[d["name"]]
    except KeyError:
        raise ValueError(f"unknown {kind} {d.get('name')!r}") from None
    return cls.from_params(dict(d.get("params", {})))


def transition_from_dict(d):
    return _from_dict(d, TRANSITIONS, "transition")


def cost_from_dict(d):
    return _from_dict(d, COSTS, "cost")
