"""Scenario configuration files.

The format is flat ``key = value`` text, UTF-8, with ``#`` comments and
optional ``[section]`` headers that prefix the keys below them
(``[ic]`` followed by ``mode = 3`` is the same as ``ic.mode = 3``).

Numeric values may be arithmetic expressions in ``pi`` and, for keys
other than ``L`` itself, the domain length ``L`` (e.g. ``L = 15/2*pi``).
Profile values such as ``tanh(-0.25, -0.35*L, 0.65*L, -0.2)`` are kept as
text and evaluated when the scenario is built.
"""

from __future__ import annotations

import ast
import math
import operator
import re
from dataclasses import dataclass, fields
from pathlib import Path

from .params import PhysParams, TimeGrid
from .potential import PotentialParams

__all__ = ["ConfigError", "Scenario", "parse_config", "parse_config_text", "serialize", "parse_call", "eval_expr"]


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None, source: str | None = None):
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}


def eval_expr(text: str, names: dict | None = None) -> float:
    """Evaluate a numeric expression with ``+ - * / **``, ``pi`` and ``names``."""
    env = {"pi": math.pi}
    env.update(names or {})

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in env:
                return float(env[node.id])
            raise ValueError(f"unknown name '{node.id}'")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            v = walk(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        raise ValueError(f"unsupported expression '{text}'")

    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse '{text}'") from exc
    return walk(tree)


_CALL = re.compile(r"^\s*([A-Za-z_][\w-]*)\s*(?:\((.*)\))?\s*$")


def parse_call(text: str, names: dict | None = None):
    """Split ``kind(arg, ...)`` or ``file:<path>`` into ``(kind, args)``.

    Numeric arguments are evaluated; ``file:`` keeps the path as its only arg.
    """
    text = text.strip()
    if text.startswith("file:"):
        return "file", [text[5:].strip()]
    m = _CALL.match(text)
    if not m:
        raise ValueError(f"cannot parse '{text}'")
    kind, args = m.group(1), m.group(2)
    if args is None or not args.strip():
        return kind, []
    values = []
    for a in args.split(","):
        a = a.strip()
        try:
            values.append(eval_expr(a, names))
        except ValueError:
            values.append(a)
    return kind, values


# key -> (attribute, type, default); None default means required.
_KEYS = {
    "name": ("name", str, "custom"),
    "L": ("L", float, None),
    "n_nodes": ("n_nodes", int, 250),
    "T": ("T", float, None),
    "n_steps": ("n_steps", int, 0),
    "Ca": ("Ca", float, 1.0),
    "Bo": ("Bo", float, 1.0),
    "c": ("c", float, 0.1),
    "gamma": ("gamma", float, 0.0),
    "A": ("A", float, 0.0),
    "eps": ("eps", float, 0.1),
    "alpha": ("alpha", float, 1e-6),
    "beta": ("beta", int, 1),
    "tol": ("tol", float, 1e-4),
    "k_max": ("k_max", int, 100),
    "lambda0": ("lambda0", float, 1.0),
    "ic.h_amplitude": ("h_amplitude", float, 0.0),
    "ic.mode": ("mode", int, 1),
    "ic.profile": ("ic_profile", str, "cosine"),
    "ic.substrate": ("ic_substrate", str, "flat"),
    "target": ("target", str, "initial"),
    "control_horizon": ("control_horizon", float, 0.0),
}

DEFAULT_DT = 0.05


@dataclass
class Scenario:
    """Physical, numerical, target and optimizer settings for one run.

    ``T`` is the control horizon; target generation horizons live inside the
    ``target`` and ``ic_profile`` strings (``steady(T_pre)``).
    """

    name: str
    L: float
    n_nodes: int
    T: float
    n_steps: int
    Ca: float
    Bo: float
    c: float
    gamma: float
    A: float
    eps: float
    alpha: float
    beta: int
    tol: float
    k_max: int
    lambda0: float
    h_amplitude: float
    mode: int
    ic_profile: str
    ic_substrate: str
    target: str
    control_horizon: float = 0.0
    base_dir: str = "."

    def __post_init__(self):
        if self.control_horizon and abs(self.control_horizon - self.T) > 1e-12 * max(1.0, self.T):
            raise ConfigError(f"control_horizon={self.control_horizon} disagrees with T={self.T}", key="control_horizon")
        self.control_horizon = self.T
        if self.n_steps == 0:
            self.n_steps = max(1, int(round(self.T / DEFAULT_DT)))
        checks = [
            ("L", self.L > 0 and math.isfinite(self.L), "must be > 0"),
            ("n_nodes", self.n_nodes >= 3, "must be >= 3"),
            ("T", self.T > 0 and math.isfinite(self.T), "must be > 0"),
            ("n_steps", self.n_steps >= 1, "must be >= 1"),
            ("alpha", self.alpha > 0, "must be > 0"),
            ("beta", self.beta in (0, 1), "must be 0 or 1"),
            ("tol", self.tol > 0, "must be > 0"),
            ("k_max", self.k_max >= 1, "must be >= 1"),
            ("lambda0", self.lambda0 > 0, "must be > 0"),
            ("A", self.A >= 0, "must be >= 0"),
            ("eps", self.eps > 0, "must be > 0"),
            ("Ca", self.Ca > 0, "must be > 0"),
            ("gamma", self.gamma >= 0, "must be >= 0"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{msg}, got {getattr(self, key)!r}", key=key)
        for key in ("ic.profile", "ic.substrate", "target"):
            value = getattr(self, _KEYS[key][0])
            try:
                kind, args = parse_call(value, {"L": self.L})
            except ValueError as exc:
                raise ConfigError(str(exc), key=key) from exc
            if kind == "file":
                path = self.resolve(args[0])
                if not path.is_file():
                    raise ConfigError(f"file '{path}' does not exist", key=key)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def potential(self) -> PotentialParams:
        return PotentialParams(A=self.A, eps=self.eps)

    @property
    def phys(self) -> PhysParams:
        return PhysParams(Ca=self.Ca, Bo=self.Bo, c=self.c, gamma=self.gamma, potential=self.potential)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(T=self.T, n_steps=self.n_steps)

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def as_dict(self) -> dict:
        """Config keys to values, in canonical order."""
        return {key: getattr(self, attr) for key, (attr, _, _) in _KEYS.items()}


def parse_config_text(text: str, source: str | None = None, base_dir: str | Path = ".") -> Scenario:
    raw: dict[str, tuple[str, int]] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno, source=source)
        key, value = (part.strip() for part in line.split("=", 1))
        if section:
            key = f"{section}.{key}"
        if key not in _KEYS:
            raise ConfigError("unknown key", key=key, line=lineno, source=source)
        if key in raw:
            raise ConfigError("duplicate key", key=key, line=lineno, source=source)
        raw[key] = (value, lineno)

    values = {}
    names = {}
    # L first so other expressions may use it.
    for key in sorted(raw, key=lambda k: k != "L"):
        value, lineno = raw[key]
        attr, typ, _ = _KEYS[key]
        try:
            if typ is str:
                values[attr] = value
            else:
                number = eval_expr(value, names if key != "L" else None)
                if typ is int:
                    if number != int(number):
                        raise ValueError(f"expected an integer, got {value!r}")
                    number = int(number)
                values[attr] = number
        except ValueError as exc:
            raise ConfigError(str(exc), key=key, line=lineno, source=source) from exc
        if key == "L":
            names["L"] = values[attr]
    for key, (attr, _, default) in _KEYS.items():
        if attr not in values:
            if default is None:
                raise ConfigError("missing required key", key=key, source=source)
            values[attr] = default
    try:
        return Scenario(**values, base_dir=str(base_dir))
    except ConfigError as exc:
        line = raw.get(exc.key, (None, None))[1] if exc.key else None
        raise ConfigError(str(exc).split(": ", 1)[-1], key=exc.key, line=line, source=source) from None


def parse_config(path) -> Scenario:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path), base_dir=path.parent)


def serialize(scenario: Scenario) -> str:
    """Canonical text form; ``parse_config_text(serialize(s))`` reproduces ``s``."""
    lines = []
    for key, value in scenario.as_dict().items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def scenario_fields() -> list[str]:
    return [f.name for f in fields(Scenario)]
