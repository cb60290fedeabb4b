"""A small arithmetic-expression evaluator for user-supplied fields.

Expressions use ``+ - * / ^`` (``**`` also accepted), parentheses, numeric
literals, the constants ``pi`` and ``e``, user constants, and the functions
``exp, log, sqrt, sin, cos, tanh, abs``.  Variables are ``y`` (first
coordinate) and ``y1 .. yd``.  Evaluation is vectorised over numpy arrays.

    >>> f = compile_expression("exp(-y^2/2)", dim=1)
    >>> float(f(np.array([[0.0]])))
    1.0
"""

from __future__ import annotations

import ast
import operator
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigurationError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: np.power,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "abs": np.abs,
}
_CONSTS = {"pi": np.pi, "e": np.e}


def _check(node: ast.AST, names: set[str], source: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, names, source)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ConfigurationError(f"operator {type(node.op).__name__} not allowed in {source!r}")
        _check(node.left, names, source)
        _check(node.right, names, source)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ConfigurationError(f"operator {type(node.op).__name__} not allowed in {source!r}")
        _check(node.operand, names, source)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ConfigurationError(f"unknown function in {source!r}")
        if len(node.args) != 1 or node.keywords:
            raise ConfigurationError(f"functions take exactly one argument in {source!r}")
        _check(node.args[0], names, source)
    elif isinstance(node, ast.Name):
        if node.id not in names:
            raise ConfigurationError(f"unknown name {node.id!r} in {source!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ConfigurationError(f"non-numeric literal in {source!r}")
    else:
        raise ConfigurationError(f"unsupported syntax {type(node).__name__} in {source!r}")


def _evaluate(node: ast.AST, env: Mapping[str, object]):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_evaluate(node.operand, env))
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](_evaluate(node.args[0], env))
    if isinstance(node, ast.Name):
        return env[node.id]
    return float(node.value)


def compile_expression(
    source: str, dim: int, constants: Mapping[str, float] | None = None
) -> Callable[[np.ndarray], np.ndarray]:
    """Parse ``source`` once and return ``f(points)`` for points of shape ``(..., dim)``.

    Raises:
        ConfigurationError: on a syntax error or any name/function outside the
            allowed vocabulary.
    """
    constants = dict(constants or {})
    variables = {"y"} | {f"y{i + 1}" for i in range(dim)}
    clash = variables & constants.keys()
    if clash:
        raise ConfigurationError(f"constants shadow variables: {sorted(clash)}")
    try:
        tree = ast.parse(source.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse expression {source!r}: {exc.msg}") from None
    _check(tree, variables | _CONSTS.keys() | constants.keys(), source)
    body = tree.body

    def f(points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        env: dict[str, object] = {**_CONSTS, **constants}
        for i in range(dim):
            env[f"y{i + 1}"] = points[..., i]
        env["y"] = points[..., 0]
        with np.errstate(all="ignore"):
            out = _evaluate(body, env)
        return np.broadcast_to(np.asarray(out, dtype=float), points.shape[:-1]).copy()

    f.source = source  # type: ignore[attr-defined]
    return f
