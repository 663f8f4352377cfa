"""Minimal arithmetic expression grammar for field definitions in config
files: numeric literals, + - * /, unary minus, sin/cos/exp, the constant
pi, and the coordinates x, y (plus z for ambient sphere expressions).

Expressions are parsed with the Python ast module and evaluated over a
whitelist, so configs stay data, not code.
"""

from __future__ import annotations

import ast

import numpy as np


class ExpressionError(ValueError):
    pass


_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": np.pi}


def _check(node, names):
    if isinstance(node, ast.Expression):
        _check(node.body, names)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div)):
            raise ExpressionError("only + - * / are allowed")
        _check(node.left, names)
        _check(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError("only unary +/- are allowed")
        _check(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only sin, cos, exp are allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError("functions take exactly one argument")
        _check(node.args[0], names)
    elif isinstance(node, ast.Name):
        if node.id not in names and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError("only numeric literals are allowed")
    else:
        raise ExpressionError(f"disallowed syntax: {type(node).__name__}")


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        return a / b
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else +v
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](_eval(node.args[0], env))
    if isinstance(node, ast.Name):
        return env.get(node.id, _CONSTS.get(node.id))
    return node.value


def parse_expression(text, names=("x", "y")):
    """Compile an expression string to a vectorized callable of ``names``."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from exc
    _check(tree, set(names))

    def func(*args):
        if len(args) != len(names):
            raise TypeError(f"expected {len(names)} coordinates")
        env = dict(zip(names, args))
        out = _eval(tree, env)
        return out + np.zeros(np.broadcast(*args).shape) if args else out

    func.expression = text
    return func
