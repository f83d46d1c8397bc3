"""Experiment configuration: ``key=value`` lines with ``#`` comments."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .seeding import MASK64

COMMANDS = ("verify", "scan-n", "lyapunov", "stable", "nonrandom", "defect", "orbit", "equidist", "smoothing")
FORMATS = ("json", "csv", "svg")


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnknownKey(ConfigError):
    pass


class RangeError(ConfigError):
    pass


# converters ---------------------------------------------------------------

def _int(v: str) -> int:
    try:
        return int(v.replace("_", ""), 0)
    except ValueError:
        f = float(v)  # accepts 1e5
        if not f.is_integer():
            raise ValueError(f"not an integer: {v!r}") from None
        return int(f)


def _float(v: str) -> float:
    return float(v)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _point(v: str) -> tuple[float, float]:
    parts = [p for p in v.replace(" ", "").split(",") if p]
    if len(parts) != 2:
        raise ValueError(f"expected 'x,y', got {v!r}")
    return float(parts[0]), float(parts[1])


def _formats(v: str) -> tuple[str, ...]:
    items = [p.strip() for p in v.split(",") if p.strip()]
    if not items:
        raise ValueError("formats must name at least one of json, csv, svg")
    return tuple(f for f in FORMATS if f in items) if set(items) <= set(FORMATS) else tuple(items)


def _show(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_show(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class Key:
    conv: object
    default: object
    check: object = None  # predicate on the converted value
    rule: str = ""


_POS = (lambda v: v >= 1, ">= 1")
_NONNEG = (lambda v: v >= 0, ">= 0")
_POSF = (lambda v: v > 0 and math.isfinite(v), "> 0")


def _k(conv, default, rule=None):
    return Key(conv, default, *(rule or (None, "")))


COMMON = {
    "command": _k(str, None, (lambda v: v in COMMANDS, "one of " + ", ".join(COMMANDS))),
    "measure": _k(str, None),
    "master_seed": _k(_int, 0, (lambda v: 0 <= v <= MASK64, "in [0, 2^64)")),
    "workers": _k(_int, 1, _POS),
    "output": _k(str, "uniexp"),
    "formats": _k(_formats, ("json", "csv", "svg"),
                  (lambda v: len(v) > 0 and set(v) <= set(FORMATS), "subset of json, csv, svg")),
    "expect": _k(str, None),
}

_EXPANSION = {
    "C": _k(_float, 2.0, (lambda v: math.isfinite(v), "finite (negative values allowed)")),
    "N_max": _k(_int, 8, _POS),
    "nx": _k(_int, 32, _POS),
    "ny": _k(_int, 32, _POS),
    "ntheta": _k(_int, 64, _POS),
    "mode": _k(str, "auto", (lambda v: v in ("auto", "exact", "monte_carlo"), "auto, exact or monte_carlo")),
    "budget": _k(_int, 10**6, _POS),
    "samples": _k(_int, 20_000, (lambda v: v >= 2, ">= 2")),
    "certify": _k(_bool, False),
    "refine": _k(_int, 8, _NONNEG),
}

_X0 = {"x0": _k(_point, (0.1234, 0.5678))}

PER_COMMAND = {
    "verify": _EXPANSION,
    "scan-n": _EXPANSION,
    "lyapunov": {**_X0, "theta0": _k(_float, 0.3), "n_steps": _k(_int, 100_000, (lambda v: v >= 2, ">= 2")),
                 "n_batches": _k(_int, 20, (lambda v: v >= 2, ">= 2")), "replicas": _k(_int, 1, _POS)},
    "stable": {**_X0, "n": _k(_int, 200, _POS), "n_omegas": _k(_int, 20, _POS)},
    "nonrandom": {**_X0, "n": _k(_int, 200, _POS), "n_omegas": _k(_int, 20, (lambda v: v >= 2, ">= 2")),
                  "tolerance": _k(_float, 1e-3, _POSF)},
    "defect": {"kind": _k(str, "line_field", (lambda v: v in ("line_field", "conformal"),
                                             "line_field or conformal")),
               "degree": _k(_int, 0, _NONNEG), "points": _k(_int, 256, _POS), "starts": _k(_int, 32, _POS),
               "maxiter": _k(_int, 200, _POS)},
    "orbit": {**_X0, "n": _k(_int, 10_000, (lambda v: v >= 10, ">= 10")), "tol": _k(_float, 1e-9, _POSF),
              "F": _k(_int, 5, _POS)},
    "equidist": {**_X0, "n": _k(_int, 100_000, (lambda v: v >= 10, ">= 10")), "F": _k(_int, 5, _POS),
                 "seeds": _k(_int, 100, _POS),
                 "pass_fraction": _k(_float, 0.95, (lambda v: 0 <= v <= 1, "in [0, 1]"))},
    "smoothing": {"v": _k(_point, (0.3, 0.7)), "samples": _k(_int, 100_000, _POS), "g": _k(_int, 64, _POS)},
}

EXPECT = {
    "verify": ("found", "notfound"),
    "scan-n": ("found", "notfound"),
    "lyapunov": ("expanding", "nonexpanding"),
    "stable": (),
    "nonrandom": ("nonrandom", "random"),
    "defect": ("zero", "positive"),
    "orbit": ("finite", "infinite"),
    "equidist": ("equidistributing", "suspicious"),
    "smoothing": ("pass", "fail"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    measure: str
    params: dict = field(default_factory=dict)
    master_seed: int = 0
    workers: int = 1
    output: str = "uniexp"
    formats: tuple[str, ...] = ("json", "csv", "svg")
    expect: str | None = None

    def __getitem__(self, key):
        return self.params[key]

    def resolved(self, portable: bool = False) -> dict:
        """All keys with defaults filled.

        ``portable`` drops ``workers`` and ``output``: neither changes any
        number, and leaving them out keeps reports comparable byte for byte.
        """
        out = {"command": self.command, "measure": self.measure, "master_seed": self.master_seed,
               "formats": self.formats, **self.params}
        if self.expect is not None:
            out["expect"] = self.expect
        if not portable:
            out["workers"] = self.workers
            out["output"] = self.output
        return out

    def to_text(self, portable: bool = False) -> str:
        """Resolved-config block; parse_config(to_text()) gives back an equal config."""
        items = self.resolved(portable)
        # one physical line per key: multi-line measure literals use the '|' separator
        return "".join(f"{k}={_show(v).replace(chr(10), '|')}\n" for k, v in sorted(items.items()))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text(portable=True).encode("utf-8")).hexdigest()

    def with_updates(self, **updates) -> "ExperimentConfig":
        text = self.to_text() + "".join(f"{k}={_show(v)}\n" for k, v in updates.items())
        return parse_config(text, allow_override=True)


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw.strip()!r}", no)
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise ParseError("empty key", no)
        yield no, key, value


def parse_config(text: str, overrides=(), allow_override: bool = False) -> ExperimentConfig:
    """Parse, fill defaults and validate.

    ``overrides`` are extra ``key=value`` strings applied after the file (the
    CLI ``--set`` flags).  A key repeated inside the file is an error unless
    ``allow_override`` is set.
    """
    raw: dict[str, tuple[int | None, str]] = {}
    for no, key, value in _lines(text):
        if key in raw and not allow_override:
            raise ParseError(f"duplicate key {key!r}", no)
        raw[key] = (no, value)
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = (None, value.strip())

    if "command" not in raw:
        raise ParseError("missing required key 'command'", 1 if not text.strip() else None)
    command = raw["command"][1]
    if command not in COMMANDS:
        raise RangeError(f"command must be one of {', '.join(COMMANDS)}; got {command!r}")
    schema = {**COMMON, **PER_COMMAND[command]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise UnknownKey(f"unknown key(s) for command {command!r}: {', '.join(unknown)}")

    values = {}
    for key, spec in schema.items():
        if key not in raw:
            values[key] = spec.default
            continue
        no, text_value = raw[key]
        try:
            v = spec.conv(text_value)
        except ValueError as exc:
            raise ParseError(f"{key}: {exc}", no) from None
        if spec.check is not None and not spec.check(v):
            raise RangeError(f"{key}={text_value!r} out of range (must be {spec.rule})")
        values[key] = v

    if values["measure"] is None:
        raise ParseError("missing required key 'measure'")
    expect = values["expect"]
    if expect is not None:
        expect = expect.lower()
        if expect not in EXPECT[command]:
            allowed = ", ".join(EXPECT[command]) or "nothing"
            raise RangeError(f"expect={expect!r} not valid for {command!r} (allowed: {allowed})")
    params = {k: values[k] for k in PER_COMMAND[command]}
    return ExperimentConfig(command=command, measure=values["measure"], params=params,
                            master_seed=values["master_seed"], workers=values["workers"],
                            output=values["output"], formats=values["formats"], expect=expect)
