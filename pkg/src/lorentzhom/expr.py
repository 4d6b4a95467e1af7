"""Tiny arithmetic expression language for analytic fields.

Grammar (see docs/expressions.md)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := ("+" | "-") factor | atom
    atom   := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"
    NAME   := "x1" | "x2" | "x3" | "t" | "pi"
    FUNC   := "sin" | "cos" | "exp"

Parsing goes through :mod:`ast`; anything outside the grammar is rejected.
"""
import ast
import math

import numpy as np

from .errors import ConfigError

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_VARS = ("x1", "x2", "x3", "t")
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


class Expression:
    """A compiled scalar expression of x1, x2, x3 and t."""

    def __init__(self, source):
        if isinstance(source, (int, float)):
            source = repr(float(source))
        if not isinstance(source, str):
            raise ConfigError(f"expression must be a string or number, got {type(source).__name__}")
        self.source = source
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body
        self.names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigError(f"operator not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ConfigError(f"unary operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
                raise ConfigError(f"unknown function in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ConfigError(f"functions take exactly one argument in {self.source!r}")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id not in _VARS and node.id != "pi":
                raise ConfigError(f"unknown name {node.id!r} in {self.source!r}")
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ConfigError(f"bad literal in {self.source!r}")
        else:
            raise ConfigError(f"construct {type(node).__name__} not allowed in {self.source!r}")

    def __call__(self, x1=0.0, x2=0.0, x3=0.0, t=0.0):
        env = {"x1": x1, "x2": x2, "x3": x3, "t": t}
        shape = np.broadcast(*(np.asarray(v) for v in env.values())).shape
        value = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(value, dtype=float), shape).copy() if shape else float(value)

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](self._eval(node.args[0], env))
        if isinstance(node, ast.Name):
            return math.pi if node.id == "pi" else env[node.id]
        return float(node.value)

    @property
    def is_zero(self):
        return isinstance(self._tree, ast.Constant) and float(self._tree.value) == 0.0

    def __repr__(self):
        return f"Expression({self.source!r})"


class VectorExpression:
    """Three component expressions evaluated together."""

    def __init__(self, components):
        if isinstance(components, (str, int, float)) or len(components) != 3:
            raise ConfigError("vector fields need exactly three component expressions")
        self.components = [Expression(c) for c in components]

    def __call__(self, x1=0.0, x2=0.0, x3=0.0, t=0.0):
        return np.stack([c(x1, x2, x3, t) for c in self.components], axis=-1)

    @property
    def is_zero(self):
        return all(c.is_zero for c in self.components)

    @property
    def sources(self):
        return [c.source for c in self.components]


def hessian_fd(func, pts, step=2e-3):
    """Fourth-order central-difference Hessian of a scalar function.

    ``func`` maps an (m, 3) array of points to (m,) values; returns (m, 3, 3).
    """
    pts = np.asarray(pts, dtype=float)
    m = pts.shape[0]
    hess = np.empty((m, 3, 3))
    eye = np.eye(3) * step
    f0 = func(pts)
    for a in range(3):
        fp1, fm1 = func(pts + eye[a]), func(pts - eye[a])
        fp2, fm2 = func(pts + 2 * eye[a]), func(pts - 2 * eye[a])
        hess[:, a, a] = (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * step**2)
    w = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
    for a in range(3):
        for b in range(a + 1, 3):
            acc = np.zeros(m)
            for i, wi in w.items():
                for j, wj in w.items():
                    acc += wi * wj * func(pts + i * eye[a] + j * eye[b])
            hess[:, a, b] = hess[:, b, a] = acc / (144 * step**2)
    return hess
