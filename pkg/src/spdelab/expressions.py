"""A tiny, closed arithmetic language for user-supplied f(x, y) and b(x, y).

Allowed: numeric literals, ``+ - * /``, unary minus, the functions
``sin cos exp tanh``, the constants ``pi`` and ``e``, and the variables
``y`` (the solution value), ``x`` (first coordinate) and ``x1 .. xd``.
Anything else is rejected at parse time, so evaluating a config never
runs arbitrary code.
"""
from __future__ import annotations

import ast
import math
import re

import numpy as np

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}
_COORD = re.compile(r"^x([1-9])$")


class ExpressionError(ValueError):
    pass


def _check(node: ast.AST, src: str) -> None:
    if isinstance(node, ast.Expression):
        return _check(node.body, src)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, src)
        return _check(node.right, src)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        return _check(node.operand, src)
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return None
    if isinstance(node, ast.Name):
        if node.id in _CONSTS or node.id in ("x", "y") or _COORD.match(node.id):
            return None
        raise ExpressionError(f"unknown name {node.id!r} in {src!r}")
    if isinstance(node, ast.Call):
        if (
            isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and len(node.args) == 1
            and not node.keywords
        ):
            return _check(node.args[0], src)
        raise ExpressionError(f"unsupported call in {src!r}; allowed: {sorted(_FUNCS)}")
    raise ExpressionError(f"unsupported syntax {type(node).__name__} in {src!r}")


def parse(src: str) -> ast.Expression:
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {src!r}: {exc.msg}") from None
    _check(tree, src)
    return tree


def names(tree: ast.AST) -> set[str]:
    return {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)} - set(_FUNCS)


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        return env[node.id]
    return _FUNCS[node.func.id](_eval(node.args[0], env))


def evaluate(tree: ast.Expression, x: np.ndarray, y) -> np.ndarray:
    """Evaluate at points ``x`` (trailing axis = coordinates) and values ``y``.

    ``x`` of shape (..., d) broadcasts against ``y``; the result has the
    broadcast shape.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = x.shape[-1]
    env = {"y": y, "x": x[..., 0]}
    for k in range(d):
        env[f"x{k + 1}"] = x[..., k]
    for name in names(tree):
        if name not in env and name not in _CONSTS:
            raise ExpressionError(f"variable {name!r} not defined in dimension {d}")
    shape = np.broadcast_shapes(x.shape[:-1], y.shape)
    with np.errstate(all="ignore"):
        out = _eval(tree, env)
    return np.broadcast_to(np.asarray(out, dtype=np.float64), shape)
