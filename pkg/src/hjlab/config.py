"""Experiment configuration: parsing, validation, canonical hashing.

Configs are INI files with the sections [problem], [gate], [sweep],
[counterexample], [output].  Field-valued entries (h, b, f, u0) accept
three forms:

    expression        the trig-monomial grammar from hjlab.expressions
    builtin:name      a named construction, optionally name(arg)
    file:path         a CSV field written by hjlab.serialization

Referenced files must exist at parse time.  Gate hypotheses that fail
produce GatePreflightWarning, not errors: a run outside the proved
regime is exactly what half the experiments are for.
"""

import configparser
import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .errors import (
    ParseError,
    ValidationError,
    GatePreflightWarning,
)
from .expressions import Expression, parse_expression
from .grid import TorusGrid, ScalarField
from .serialization import read_field_csv

RUN_KINDS = ("hj", "fp", "duality", "bernstein", "counterexample", "sweep")

BUILTIN_NAMES = ("heat_mode", "sawtooth", "rough_sqrt_sin", "ce_u1", "ce_u2", "ce_u3")


@dataclass(frozen=True)
class FieldSpec:
    """One field-valued config entry in parsed form."""

    form: str                      # "expr" | "builtin" | "file"
    expr: Optional[Expression] = None
    name: Optional[str] = None
    arg: Optional[float] = None
    path: Optional[str] = None

    def canonical(self):
        if self.form == "expr":
            return ["expr", self.expr.canonical()]
        if self.form == "builtin":
            return ["builtin", self.name, self.arg]
        return ["file", self.path]


@dataclass
class ExperimentConfig:
    kind: str
    d: int = 1
    n: int = 64
    t0: float = 0.0
    t1: float = 0.25
    n_steps: int = 128
    gamma: float = 2.0
    hamiltonian_on: bool = True
    a_scale: float = 1.0
    h: FieldSpec = field(default_factory=lambda: _const_spec(1.0))
    b: tuple = ()                  # per-axis FieldSpec, empty = zero drift
    f: Optional[FieldSpec] = None
    u0: FieldSpec = field(default_factory=lambda: _const_spec(0.0))
    seed: int = 0
    # gate exponents
    q: float = 5.0
    P: float = 3.0
    Q: float = 4.0
    # sweep axes
    n_ladder: tuple = ()
    dirac_widths: tuple = (1,)
    dirac_lattice: int = 4
    tau: Optional[float] = None
    # counterexample parameters
    ce_which: str = "u1"
    ce_gamma: Optional[float] = None
    ce_d: Optional[int] = None
    ce_n: tuple = ()
    # output
    output_dir: str = "runs"
    ledger_path: Optional[str] = None
    base_dir: str = "."

    def canonical_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if key in ("output_dir", "ledger_path", "base_dir"):
                continue               # where results land is not what the run is
            out[key] = val
        out["h"] = self.h.canonical()
        out["b"] = [s.canonical() for s in self.b]
        out["f"] = None if self.f is None else self.f.canonical()
        out["u0"] = self.u0.canonical()
        return out

    def config_hash(self) -> str:
        canon = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _const_spec(value: float) -> FieldSpec:
    return FieldSpec(form="expr", expr=parse_expression(repr(value)))


def _parse_field_spec(text: str, location: str, base_dir: str) -> FieldSpec:
    text = text.strip()
    if text.startswith("file:"):
        path = text[5:].strip()
        full = os.path.join(base_dir, path)
        if not os.path.exists(full):
            raise ValidationError(f"referenced file {path!r} does not exist ({location})")
        return FieldSpec(form="file", path=path)
    if text.startswith("builtin:"):
        text = text[8:].strip()
    name, arg = text, None
    if "(" in text and text.endswith(")"):
        head = text[: text.index("(")].strip()
        if head in BUILTIN_NAMES:
            argtext = text[text.index("(") + 1 : -1]
            try:
                arg = float(argtext)
            except ValueError:
                raise ParseError(
                    f"builtin argument {argtext!r} is not a number", location
                )
            name = head
    if name in BUILTIN_NAMES:
        return FieldSpec(form="builtin", name=name, arg=arg)
    try:
        return FieldSpec(form="expr", expr=parse_expression(text))
    except ParseError as exc:
        raise ParseError(f"{exc.args[0]}", location) from exc


def _get(parser, section, key, cast, default, location_errors: list):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except (ValueError, TypeError):
        location_errors.append(f"{section}.{key}: cannot read {raw!r} as {cast.__name__}")
        return default


def _int_tuple(raw: str) -> tuple:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def parse_config(path) -> ExperimentConfig:
    """Read and validate an experiment config; errors carry section.key."""
    if not os.path.exists(path):
        raise ValidationError(f"config file {path!r} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str          # keep q and Q distinct
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ParseError(str(exc), str(path))
    if not parser.has_section("problem"):
        raise ParseError("missing [problem] section", str(path))

    base_dir = os.path.dirname(os.path.abspath(path))
    errs: list = []
    kind = parser.get("problem", "kind", fallback="").strip()
    if kind not in RUN_KINDS:
        raise ValidationError(f"kind must be one of {RUN_KINDS}, got {kind!r} (problem.kind)")

    cfg = ExperimentConfig(kind=kind, base_dir=base_dir)
    cfg.d = _get(parser, "problem", "d", int, cfg.d, errs)
    cfg.n = _get(parser, "problem", "n", int, cfg.n, errs)
    cfg.t0 = _get(parser, "problem", "t0", float, cfg.t0, errs)
    cfg.t1 = _get(parser, "problem", "t1", float, cfg.t1, errs)
    cfg.n_steps = _get(parser, "problem", "n_steps", int, cfg.n_steps, errs)
    if parser.has_option("problem", "dt"):
        dt = _get(parser, "problem", "dt", float, None, errs)
        if dt is not None and dt > 0:
            cfg.n_steps = max(1, round((cfg.t1 - cfg.t0) / dt))
    cfg.gamma = _get(parser, "problem", "gamma", float, cfg.gamma, errs)
    cfg.hamiltonian_on = _get(parser, "problem", "hamiltonian", bool, True, errs)
    cfg.a_scale = _get(parser, "problem", "a_scale", float, cfg.a_scale, errs)
    cfg.seed = _get(parser, "problem", "seed", int, cfg.seed, errs)

    for key in ("h", "f", "u0"):
        if parser.has_option("problem", key):
            spec = _parse_field_spec(parser.get("problem", key), f"problem.{key}", base_dir)
            setattr(cfg, key, spec)
    if parser.has_option("problem", "b"):
        parts = [p.strip() for p in parser.get("problem", "b").split(",")]
        cfg.b = tuple(
            _parse_field_spec(p, f"problem.b[{j}]", base_dir) for j, p in enumerate(parts)
        )

    if parser.has_section("gate"):
        cfg.q = _get(parser, "gate", "q", float, cfg.q, errs)
        cfg.P = _get(parser, "gate", "P", float, cfg.P, errs)
        cfg.Q = _get(parser, "gate", "Q", float, cfg.Q, errs)

    if parser.has_section("sweep"):
        if parser.has_option("sweep", "n_ladder"):
            cfg.n_ladder = _int_tuple(parser.get("sweep", "n_ladder"))
        if parser.has_option("sweep", "dirac_widths"):
            cfg.dirac_widths = _int_tuple(parser.get("sweep", "dirac_widths"))
        cfg.dirac_lattice = _get(parser, "sweep", "dirac_lattice", int, cfg.dirac_lattice, errs)
        cfg.tau = _get(parser, "sweep", "tau", float, cfg.tau, errs)

    if parser.has_section("counterexample"):
        cfg.ce_which = parser.get("counterexample", "which", fallback="u1").strip()
        cfg.ce_gamma = _get(parser, "counterexample", "gamma", float, None, errs)
        cfg.ce_d = _get(parser, "counterexample", "d", int, None, errs)
        if parser.has_option("counterexample", "n"):
            cfg.ce_n = _int_tuple(parser.get("counterexample", "n"))

    if parser.has_section("output"):
        cfg.output_dir = parser.get("output", "dir", fallback=cfg.output_dir).strip()
        if parser.has_option("output", "ledger"):
            cfg.ledger_path = parser.get("output", "ledger").strip()

    if errs:
        raise ParseError("; ".join(errs), str(path))
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.gamma <= 1.0:
        raise ValidationError(f"gamma must exceed 1, got {cfg.gamma} (problem.gamma)")
    if cfg.d not in (1, 2):
        raise ValidationError(f"d must be 1 or 2, got {cfg.d} (problem.d)")
    if cfg.n < 8:
        raise ValidationError(f"n must be at least 8, got {cfg.n} (problem.n)")
    if not (cfg.t1 > cfg.t0):
        raise ValidationError(f"need t1 > t0, got [{cfg.t0}, {cfg.t1}] (problem)")
    if cfg.n_steps < 1:
        raise ValidationError(f"n_steps must be >= 1, got {cfg.n_steps} (problem.n_steps)")
    if cfg.kind == "counterexample" and cfg.ce_which not in ("u1", "u2", "u3"):
        raise ValidationError(
            f"counterexample.which must be u1, u2 or u3, got {cfg.ce_which!r}"
        )
    if cfg.b and len(cfg.b) != cfg.d:
        raise ValidationError(
            f"drift b has {len(cfg.b)} components on a {cfg.d}d grid (problem.b)"
        )
    # preflight, warnings only
    if not cfg.hamiltonian_on:
        warnings.warn("H disabled: pure diffusion run", GatePreflightWarning)
    if cfg.q <= cfg.d + 2.0:
        warnings.warn(
            f"hypothesis q > d+2 fails: q={cfg.q} <= {cfg.d + 2} "
            "(run proceeds outside the proved regime)",
            GatePreflightWarning,
        )
    gp = cfg.gamma / (cfg.gamma - 1.0)
    if cfg.q < (cfg.d + 2.0) / (gp - 1.0):
        warnings.warn(
            f"hypothesis q >= (d+2)/(gamma'-1) fails: q={cfg.q} < "
            f"{(cfg.d + 2.0) / (gp - 1.0):.3g}",
            GatePreflightWarning,
        )


# ---------------------------------------------------------------------------
# field assembly


def _builtin_field(name: str, arg, grid: TorusGrid, cfg: ExperimentConfig) -> ScalarField:
    coords = grid.coords()
    if name == "heat_mode":
        return ScalarField(grid, np.cos(2.0 * np.pi * coords[0]))
    if name == "sawtooth":
        slope = 1.0 if arg is None else float(arg)
        centered = grid.centered_coords()[0]
        return ScalarField(grid, slope * centered)
    if name == "rough_sqrt_sin":
        return ScalarField(grid, np.sqrt(np.abs(np.sin(np.pi * coords[0]))))
    if name in ("ce_u1", "ce_u2", "ce_u3"):
        from . import counterexamples as ce

        if name == "ce_u1":
            gamma = cfg.ce_gamma if cfg.ce_gamma is not None else 3.0
            return ce.StationaryCE(gamma=gamma, d=grid.d).u1_field(grid)
        if name == "ce_u2":
            gamma = cfg.ce_gamma if cfg.ce_gamma is not None else 1.75
            t = arg if arg is not None else 0.05
            return ce.SelfSimilarCE(gamma=gamma, d=grid.d).u2_field(grid, t)
        heat = ce.HeatForcedCE(d=grid.d)
        t = arg if arg is not None else 0.1
        return heat.u3_field(grid, t)
    raise ValidationError(f"unknown builtin {name!r}")


def realize_field(spec: FieldSpec, grid: TorusGrid, cfg: ExperimentConfig,
                  t: float = 0.0) -> ScalarField:
    """Turn a FieldSpec into a ScalarField on the given grid."""
    if spec.form == "file":
        fld = read_field_csv(os.path.join(cfg.base_dir, spec.path))
        if fld.grid != grid:
            raise ValidationError(
                f"field file {spec.path!r} is on a {fld.grid.d}d n={fld.grid.n_per_axis} "
                f"grid, the run needs d={grid.d} n={grid.n_per_axis}"
            )
        return fld
    if spec.form == "builtin":
        return _builtin_field(spec.name, spec.arg, grid, cfg)
    return ScalarField(grid, spec.expr.evaluate(grid.coords(), t=t))
