"""Finite families of C^1 test functions with exact gradients.

A *state function* is anything with ``value(Y) -> (B,)`` and
``grad(Y) -> (B, n)`` for a batch ``Y`` of shape ``(B, n)``. Three kinds are
provided: single basis functions, linear combinations over a :class:`Basis`,
and closed forms given as expression strings (value plus gradient).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import expr as ex
from .errors import ExprEvalError


@dataclass(frozen=True)
class BasisFunction:
    name: str
    value: Callable
    grad: Callable


class Basis:
    """Ordered list of :class:`BasisFunction` with batched evaluation."""

    def __init__(self, functions, metadata=None):
        names = [b.name for b in functions]
        if len(set(names)) != len(names):
            raise ValueError("duplicate basis functions")
        self.functions = list(functions)
        self.metadata = dict(metadata or {})

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    @property
    def names(self):
        return [b.name for b in self.functions]

    def values(self, Y):
        """Matrix ``(N, B)`` of basis values."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if not self.functions:
            return np.zeros((Y.shape[0], 0))
        return np.stack([b.value(Y) for b in self.functions], axis=1)

    def grads(self, Y):
        """Array ``(N, B, n)`` of basis gradients (rows of the Jacobian)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if not self.functions:
            return np.zeros((Y.shape[0], 0, Y.shape[1]))
        return np.stack([b.grad(Y) for b in self.functions], axis=1)

    def lie(self, Y, F):
        """``grad phi_b(y_i) . F_i`` for every atom i and basis function b."""
        return np.einsum("ibn,in->ib", self.grads(Y), np.atleast_2d(F))

    def describe(self):
        return {"functions": self.names, **self.metadata}


def _monomial(alpha, center, scale):
    alpha = np.asarray(alpha)

    def value(Y):
        Z = (Y - center) / scale
        return np.prod(Z ** alpha, axis=1)

    def grad(Y):
        Z = (Y - center) / scale
        G = np.empty_like(Y)
        for i, a in enumerate(alpha):
            if a == 0:
                G[:, i] = 0.0
                continue
            others = np.prod(np.delete(Z, i, axis=1) ** np.delete(alpha, i), axis=1)
            G[:, i] = a * Z[:, i] ** (a - 1) * others / scale[i]
        return G

    return value, grad


def _trig(axis, kind, n):
    def value(Y):
        t = Y[:, axis]
        if kind == "sin":
            return np.sin(t)
        if kind == "cos":
            return np.cos(t)
        return t * np.sin(t)

    def grad(Y):
        t = Y[:, axis]
        G = np.zeros((Y.shape[0], n))
        if kind == "sin":
            G[:, axis] = np.cos(t)
        elif kind == "cos":
            G[:, axis] = -np.sin(t)
        else:
            G[:, axis] = np.sin(t) + t * np.cos(t)
        return G

    return value, grad


def monomial_basis(lower, upper, degree, state_names=None, angle_axes=()):
    """Monomials of total degree 1..degree in coordinates rescaled to [-1, 1].

    For every angular axis the family is augmented with sin, cos and
    ``t*sin(t)`` of that coordinate.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = lower.size
    names = list(state_names) if state_names else [f"y{i + 1}" for i in range(n)]
    center = 0.5 * (lower + upper)
    scale = 0.5 * (upper - lower)
    funcs = []
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), d):
            alpha = np.bincount(combo, minlength=n)
            label = "*".join(f"z_{names[i]}" + (f"^{a}" if a > 1 else "") for i, a in enumerate(alpha) if a)
            funcs.append(BasisFunction(label, *_monomial(alpha, center, scale)))
    for ax in angle_axes:
        for kind, label in (("sin", "sin({})"), ("cos", "cos({})"), ("tsin", "{0}*sin({0})")):
            funcs.append(BasisFunction(label.format(names[ax]), *_trig(ax, kind, n)))
    meta = {"kind": "monomial", "degree": degree, "lower": lower.tolist(), "upper": upper.tolist(),
            "angle_axes": list(angle_axes), "rescaling": "z = (y - center) / halfwidth"}
    return Basis(funcs, meta)


def basis_for_system(system, degree, lower=None, upper=None):
    lo, hi = system.y_box if lower is None else (lower, upper)
    return monomial_basis(lo, hi, degree, system.state_names, system.angle_axes)


class LinearCombination:
    """``sum_b c_b phi_b`` over a :class:`Basis`."""

    def __init__(self, basis, coeffs):
        self.basis = basis
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (len(basis),):
            raise ValueError("one coefficient per basis function required")

    def value(self, Y):
        return self.basis.values(Y) @ self.coeffs

    def grad(self, Y):
        return np.einsum("ibn,b->in", self.basis.grads(Y), self.coeffs)

    def to_dict(self):
        return {"basis": self.basis.names, "coeffs": self.coeffs.tolist()}


class ZeroFunction:
    def __init__(self, dim):
        self.dim = dim

    def value(self, Y):
        return np.zeros(np.atleast_2d(Y).shape[0])

    def grad(self, Y):
        return np.zeros((np.atleast_2d(Y).shape[0], self.dim))

    def to_dict(self):
        return {"value": "0", "grad": ["0"] * self.dim}


class ExprFunction:
    """Closed form given by a value expression and one expression per gradient entry."""

    def __init__(self, value_source, grad_sources, state_names):
        self.value_source = value_source
        self.grad_sources = list(grad_sources)
        self.state_names = tuple(state_names)
        if len(self.grad_sources) != len(self.state_names):
            raise ExprEvalError("gradient needs one expression per state")
        self._value = ex.parse_expression(value_source)
        self._grads = [ex.parse_expression(g) for g in self.grad_sources]

    def _env(self, Y):
        env = {}
        for i, name in enumerate(self.state_names):
            env[name] = Y[:, i]
            env[f"y{i + 1}"] = Y[:, i]
        return env

    def value(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.broadcast_to(ex.evaluate(self._value, self._env(Y)), (Y.shape[0],)).astype(float)

    def grad(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        env = self._env(Y)
        return np.stack([np.broadcast_to(ex.evaluate(g, env), (Y.shape[0],)) for g in self._grads],
                        axis=1).astype(float)

    def to_dict(self):
        return {"value": self.value_source, "grad": self.grad_sources}


def fd_gradient(fn, Y, h=1e-6):
    """Central finite differences of a state function's value."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    G = np.empty_like(Y)
    for i in range(Y.shape[1]):
        e = np.zeros(Y.shape[1])
        e[i] = h
        G[:, i] = (fn(Y + e) - fn(Y - e)) / (2 * h)
    return G
