"""Small arithmetic expression grammar used by custom structures and Hamiltonians.

Expressions are ordinary infix text over the variables ``x1..xn`` (and ``t``
for time profiles) with ``+ - * / **`` (``^`` and ``·`` are accepted as
aliases), the functions ``exp``, ``sin``, ``cos``, ``pow`` and the constants
``pi`` and ``e``.  Parsing goes through :mod:`ast` with a whitelist, then the
tree is rebuilt as a sympy expression so gradients and Hessians are exact.
"""

import ast
from functools import cached_property

import numpy as np
import sympy as sp

from .errors import ContractViolation

_FUNCTIONS = {"exp": sp.exp, "sin": sp.sin, "cos": sp.cos, "pow": sp.Pow}
_CONSTANTS = {"pi": sp.pi, "e": sp.E}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
    ast.BitXor: lambda a, b: a**b,
}


def variable_names(dimension, time=False):
    names = [f"x{i + 1}" for i in range(dimension)]
    return (["t"] if time else []) + names


def parse(text, names):
    """Parse ``text`` into a sympy expression over the symbols ``names``."""
    symbols = {name: sp.Symbol(name, real=True) for name in names}
    source = str(text).replace("·", "*").strip()
    if not source:
        raise ContractViolation("empty expression")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ContractViolation(f"cannot parse expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return sp.nsimplify(node.value) if isinstance(node.value, int) else sp.Float(node.value)
        if isinstance(node, ast.Name):
            if node.id in symbols:
                return symbols[node.id]
            if node.id in _CONSTANTS:
                return _CONSTANTS[node.id]
            raise ContractViolation(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            operand = build(node.operand)
            return -operand if isinstance(node.op, ast.USub) else operand
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](build(node.left), build(node.right))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            func = _FUNCTIONS.get(node.func.id)
            if func is None or node.keywords:
                raise ContractViolation(f"unsupported call {node.func.id!r} in {text!r}")
            args = [build(a) for a in node.args]
            expected = 2 if node.func.id == "pow" else 1
            if len(args) != expected:
                raise ContractViolation(f"{node.func.id} takes {expected} argument(s)")
            return func(*args)
        raise ContractViolation(f"unsupported syntax {type(node).__name__} in {text!r}")

    return build(tree)


def _vectorize(fn, n_rows):
    """Evaluate a lambdified function and broadcast constants to ``n_rows``."""
    def call(cols):
        out = np.asarray(fn(*cols), dtype=float)
        return np.broadcast_to(out, (n_rows(cols),)).astype(float, copy=True)
    return call


class Expression:
    """A parsed expression compiled to batched numpy evaluators.

    ``value`` takes an array of shape ``(m, k)`` whose columns follow ``names``.
    """

    def __init__(self, text, names):
        self.text = str(text)
        self.names = tuple(names)
        self.expr = parse(text, names)
        self._symbols = [sp.Symbol(n, real=True) for n in self.names]

    def __repr__(self):
        return f"Expression({self.text!r})"

    def _lambdify(self, expr):
        fn = sp.lambdify(self._symbols, expr, modules="numpy")
        return _vectorize(fn, lambda cols: len(cols[0]))

    @cached_property
    def _value(self):
        return self._lambdify(self.expr)

    @cached_property
    def _grad(self):
        return [self._lambdify(sp.diff(self.expr, s)) for s in self._symbols]

    @cached_property
    def _hess(self):
        return [[self._lambdify(sp.diff(self.expr, a, b)) for b in self._symbols]
                for a in self._symbols]

    @staticmethod
    def _columns(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X, [X[:, i] for i in range(X.shape[1])]

    def value(self, X):
        X, cols = self._columns(X)
        return self._value(cols)

    def evaluate_columns(self, cols):
        """Value from a list of 1-d columns ordered like ``names``."""
        return self._value(cols)

    def grad(self, X):
        X, cols = self._columns(X)
        return np.stack([g(cols) for g in self._grad], axis=-1)

    def hess(self, X):
        X, cols = self._columns(X)
        return np.stack([np.stack([h(cols) for h in row], axis=-1) for row in self._hess], axis=-2)

    def depends_on(self, name):
        return sp.Symbol(name, real=True) in self.expr.free_symbols
