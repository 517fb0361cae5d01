"""One-parameter families of planar diffeomorphisms with ``phi_0 = id``."""

from __future__ import annotations

import numpy as np


class DiffeoFamily:
    """Base class: ``phi(x, s)``, ``inverse(x, s)`` and the velocity at ``s = 0``."""

    def __call__(self, x, s):
        raise NotImplementedError

    def inverse(self, x, s):
        raise NotImplementedError

    def velocity(self, x):
        """``d/ds phi_s(x)`` at ``s = 0``."""
        h = 1e-6
        return (self(x, h) - self(x, -h)) / (2 * h)

    def velocity_jacobian(self, x):
        """``J[m, l, i] = d v^l / d x_i`` of the velocity (central differences by default)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        h = 1e-5
        cols = [(self.velocity(x + h * e) - self.velocity(x - h * e)) / (2 * h) for e in np.eye(2)]
        return np.stack(cols, axis=-1)

    def velocity_hessian(self, x):
        """``H[m, l, i, j] = d^2 v^l / d x_i d x_j``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        h = 1e-4
        cols = [(self.velocity_jacobian(x + h * e) - self.velocity_jacobian(x - h * e)) / (2 * h) for e in np.eye(2)]
        return np.stack(cols, axis=-1)

    def map_curve(self, curve, s):
        from .curves import Curve

        return Curve(self(curve.points, s))


class Dilation(DiffeoFamily):
    def __init__(self, center=(0.0, 0.0)):
        self.center = np.asarray(center, dtype=float)

    def __call__(self, x, s):
        return self.center + (1 + s) * (np.asarray(x, dtype=float) - self.center)

    def inverse(self, x, s):
        return self.center + (np.asarray(x, dtype=float) - self.center) / (1 + s)

    def velocity(self, x):
        return np.asarray(x, dtype=float) - self.center

    def velocity_jacobian(self, x):
        return np.broadcast_to(np.eye(2), np.atleast_2d(x).shape[:-1] + (2, 2)).copy()

    def velocity_hessian(self, x):
        return np.zeros(np.atleast_2d(x).shape[:-1] + (2, 2, 2))

    def __repr__(self):
        return "Dilation()"


class Rotation(DiffeoFamily):
    def __init__(self, center=(0.0, 0.0)):
        self.center = np.asarray(center, dtype=float)

    @staticmethod
    def _rot(x, a):
        c, s = np.cos(a), np.sin(a)
        return np.stack([c * x[..., 0] - s * x[..., 1], s * x[..., 0] + c * x[..., 1]], axis=-1)

    def __call__(self, x, s):
        return self.center + self._rot(np.asarray(x, dtype=float) - self.center, s)

    def inverse(self, x, s):
        return self.center + self._rot(np.asarray(x, dtype=float) - self.center, -s)

    def velocity(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return np.stack([-d[..., 1], d[..., 0]], axis=-1)

    def velocity_jacobian(self, x):
        J = np.array([[0.0, -1.0], [1.0, 0.0]])
        return np.broadcast_to(J, np.atleast_2d(x).shape[:-1] + (2, 2)).copy()

    def velocity_hessian(self, x):
        return np.zeros(np.atleast_2d(x).shape[:-1] + (2, 2, 2))

    def __repr__(self):
        return "Rotation()"


class Translation(DiffeoFamily):
    def __init__(self, direction=(1.0, 0.0)):
        self.direction = np.asarray(direction, dtype=float)

    def __call__(self, x, s):
        return np.asarray(x, dtype=float) + s * self.direction

    def inverse(self, x, s):
        return np.asarray(x, dtype=float) - s * self.direction

    def velocity(self, x):
        return np.broadcast_to(self.direction, np.shape(x)).copy()

    def velocity_jacobian(self, x):
        return np.zeros(np.atleast_2d(x).shape[:-1] + (2, 2))

    def velocity_hessian(self, x):
        return np.zeros(np.atleast_2d(x).shape[:-1] + (2, 2, 2))

    def __repr__(self):
        return f"Translation({self.direction.tolist()})"


class FieldFamily(DiffeoFamily):
    """``phi_s(x) = x + s v(x)`` for a smooth ambient field ``v``.

    ``field`` maps ``(M, 2)`` points to ``(M, 2)`` vectors; ``jacobian``
    (optional) returns ``(M, 2, 2)`` with ``J[m, l, i] = d v^l / d x_i``.
    """

    def __init__(self, field, jacobian=None, name="field", hessian=None):
        self.field = field
        self.jac = jacobian
        self.hess = hessian
        self.name = name

    def _jacobian(self, x):
        if self.jac is not None:
            return self.jac(x)
        h = 1e-6
        cols = []
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            cols.append((self.field(x + e) - self.field(x - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def __call__(self, x, s):
        x = np.asarray(x, dtype=float)
        return x + s * self.field(x)

    def inverse(self, x, s, tol=1e-15, maxiter=50):
        target = np.atleast_2d(np.asarray(x, dtype=float))
        y = target - s * self.field(target)
        for _ in range(maxiter):
            res = y + s * self.field(y) - target
            J = np.eye(2) + s * self._jacobian(y)
            step = np.linalg.solve(J, res[..., None])[..., 0]
            y = y - step
            if np.max(np.abs(step)) < tol:
                break
        return y[0] if np.ndim(x) == 1 else y

    def velocity(self, x):
        return self.field(np.asarray(x, dtype=float))

    def velocity_jacobian(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._jacobian(x)

    def velocity_hessian(self, x):
        if self.hess is not None:
            return self.hess(np.atleast_2d(np.asarray(x, dtype=float)))
        return super().velocity_hessian(x)

    def __repr__(self):
        return f"FieldFamily({self.name})"


def polynomial_field(px, py, name="polynomial"):
    """Field family from two :class:`~phantomshape.poly.Polynomial` components."""
    def field(x):
        return np.stack([px(x), py(x)], axis=-1)

    def jac(x):
        return np.stack([px.gradient(x), py.gradient(x)], axis=-2)

    def hess(x):
        return np.stack([px.hessian(x), py.hessian(x)], axis=-3)

    fam = FieldFamily(field, jac, name=name, hessian=hess)
    fam.components = (px, py)
    return fam
