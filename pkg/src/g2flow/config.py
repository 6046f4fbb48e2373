"""Plain ``key = value`` run configuration with strict validation.

One assignment per line; ``#`` starts a comment; blank lines are ignored.
Unknown or repeated keys and malformed values are errors that report the
line and column where the problem starts.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .exterior import DIM


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


_CHOICES = {
    "flow.kind": ("dirichlet", "deturck", "laplacian"),
    "flow.integrator": ("euler", "rk4"),
    "init.kind": ("flat", "flat_plus_random", "flat_plus_exact", "scaled"),
    "spectrum.method": ("dense", "fourier"),
}


@dataclass(frozen=True)
class RunConfig:
    n: tuple[int, ...] = (16, 16, 1, 1, 1, 1, 1)
    lengths: tuple[float, ...] = (1.0,) * DIM
    fd_order: int = 4
    flow_kind: str = "deturck"
    flow_dt_safety: float = 0.2
    flow_t_max: float = 10.0
    flow_stop_grad_tol: float = 1e-8
    flow_max_steps: int = 100_000
    flow_integrator: str = "euler"
    init_kind: str = "flat_plus_random"
    init_eps: float = 1e-2
    init_seed: int = 0
    init_scale: float = 2.0
    spectrum_method: str = "dense"
    out_path: str = "out"

    def items(self) -> list[tuple[str, str]]:
        """Fully resolved configuration as ordered (key, text) pairs."""
        out = [(f"grid.n{i + 1}", str(v)) for i, v in enumerate(self.n)]
        out += [(f"grid.l{i + 1}", repr(float(v))) for i, v in enumerate(self.lengths)]
        for f in fields(self):
            if f.name in ("n", "lengths"):
                continue
            key = _KEY_OF[f.name]
            v = getattr(self, f.name)
            out.append((key, repr(v) if isinstance(v, float) else str(v)))
        return out

    def as_dict(self) -> dict:
        return dict(self.items())

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def grid(self):
        from .fields import TorusGrid

        return TorusGrid(tuple(self.n), tuple(self.lengths), self.fd_order)

    def flow_config(self):
        from .flow import FlowConfig

        return FlowConfig(
            kind=self.flow_kind,
            dt_safety=self.flow_dt_safety,
            t_max=self.flow_t_max,
            stop_grad_tol=self.flow_stop_grad_tol,
            max_steps=self.flow_max_steps,
            integrator=self.flow_integrator,
        )


_KEY_OF = {
    "fd_order": "fd.order",
    "flow_kind": "flow.kind",
    "flow_dt_safety": "flow.dt_safety",
    "flow_t_max": "flow.t_max",
    "flow_stop_grad_tol": "flow.stop_grad_tol",
    "flow_max_steps": "flow.max_steps",
    "flow_integrator": "flow.integrator",
    "init_kind": "init.kind",
    "init_eps": "init.eps",
    "init_seed": "init.seed",
    "init_scale": "init.scale",
    "spectrum_method": "spectrum.method",
    "out_path": "out.path",
}
_FIELD_OF = {v: k for k, v in _KEY_OF.items()}
KEYS = tuple([f"grid.n{i}" for i in range(1, DIM + 1)] + [f"grid.l{i}" for i in range(1, DIM + 1)] + list(_FIELD_OF))


def _int(text: str) -> int:
    return int(text, 10)


def _positive(conv):
    def check(text):
        v = conv(text)
        if not v > 0:
            raise ValueError("must be positive")
        return v

    return check


def _nonneg_int(text):
    v = _int(text)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


def _fd_order(text):
    v = _int(text)
    if v not in (2, 4):
        raise ValueError("only orders 2 and 4 are available")
    return v


def _dt_safety(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise ValueError("must lie in (0, 1)")
    return v


def _choice(key):
    def check(text):
        if text not in _CHOICES[key]:
            raise ValueError(f"expected one of {', '.join(_CHOICES[key])}")
        return text

    return check


def _path(text):
    if not text:
        raise ValueError("must not be empty")
    return text


_PARSERS = {
    "fd.order": _fd_order,
    "flow.kind": _choice("flow.kind"),
    "flow.dt_safety": _dt_safety,
    "flow.t_max": _positive(float),
    "flow.stop_grad_tol": _positive(float),
    "flow.max_steps": _positive(_int),
    "flow.integrator": _choice("flow.integrator"),
    "init.kind": _choice("init.kind"),
    "init.eps": _positive(float),
    "init.seed": _nonneg_int,
    "init.scale": _positive(float),
    "spectrum.method": _choice("spectrum.method"),
    "out.path": _path,
}


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    n, lengths = list(cfg.n), list(cfg.lengths)
    updates: dict = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col)
        left, right = line.split("=", 1)
        key = left.strip()
        kcol = len(left) - len(left.lstrip()) + 1
        vcol = len(left) + 2 + (len(right) - len(right.lstrip()))
        value = right.strip()
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, kcol)
        if key in seen:
            raise ConfigError(f"key {key!r} already set on line {seen[key]}", lineno, kcol)
        seen[key] = lineno
        try:
            if key.startswith("grid.n"):
                n[int(key[6:]) - 1] = _positive(_int)(value)
            elif key.startswith("grid.l"):
                lengths[int(key[6:]) - 1] = _positive(float)(value)
            else:
                updates[_FIELD_OF[key]] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value {value!r} for {key}: {exc}", lineno, vcol) from None
    return replace(cfg, n=tuple(n), lengths=tuple(lengths), **updates)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
