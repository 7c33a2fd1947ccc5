"""Experiment configuration files.

Grammar: INI-style named blocks (``[model]``, ``[regions]``, ``[bound]``,
``[sweep]``, ``[output]``, ``[run]``, ``[physical]``, ``[oracle]``) holding
``key = value`` lines; ``#`` starts a comment.  See ``configs/README.md`` for
every key.  Errors carry the offending block, key and line number.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .geometry import STRATEGIES, LatticeGraph

__all__ = [
    "ConfigError",
    "ModelConfig",
    "RegionsConfig",
    "BoundConfig",
    "SweepConfig",
    "OutputConfig",
    "RunConfig",
    "PhysicalConfig",
    "OracleConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "resolve_config_path",
    "parse_grid",
    "parse_sites",
]

BUNDLED = Path(__file__).parent / "configs"

_KNOWN = {
    "run": {"id", "seed", "workers", "max_dim", "max_dense_dim"},
    "model": {"statistics", "lattice", "n", "hopping", "j", "gamma", "potential", "u", "mu", "fields",
              "schedule"},
    "regions": {"x", "y", "alpha", "beta", "strategy", "initial"},
    "bound": {"a", "a_max"},
    "sweep": {"t", "n", "u", "r", "lightcone_x"},
    "output": {"dir", "csv", "tilting", "lightcone", "oracle", "comparison", "profile", "verify_tilting"},
    "physical": {"n", "j_over_hbar", "r0", "d", "beta_minus_alpha", "ell", "t", "t_hopping", "mode"},
    "oracle": {"theta", "r", "t", "n", "initial_site", "c", "v_prime", "check_r", "check_t"},
}


class ConfigError(ValueError):
    def __init__(self, message, section=None, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.section, self.key, self.line = section, key, line


def _number(text: str) -> float:
    return float(Fraction(text.strip())) if "/" in text else float(text)


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive), a comma list, or empty."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = [_number(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError("grid must be start:stop:step with step > 0")
        start, stop, step = parts
        n = int(round((stop - start) / step))
        if n < 0:
            raise ValueError("grid stop precedes start")
        return [round(start + k * step, 12) for k in range(n + 1)]
    return [_number(p) for p in text.split(",") if p.strip()]


def parse_sites(text: str) -> list[int]:
    """Comma list of site indices and inclusive ``i..j`` ranges."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _lattice(spec: str, base: Path) -> LatticeGraph:
    kind, _, arg = spec.partition(":")
    kind = kind.strip()
    if kind == "chain":
        return LatticeGraph.chain(int(arg))
    if kind == "grid":
        return LatticeGraph.grid([int(n) for n in arg.lower().split("x")])
    if kind == "file":
        path = Path(arg.strip())
        coords = np.loadtxt(path if path.is_absolute() else base / path, ndmin=2)
        return LatticeGraph.from_coords(coords)
    raise ValueError(f"unknown lattice {spec!r}; use chain:L, grid:AxB or file:path")


@dataclass
class ModelConfig:
    lattice: LatticeGraph
    lattice_spec: str = "chain:2"
    statistics: str = "boson"
    N: int = 1
    hopping: str = "nearest-neighbor"
    J: float = 1.0
    gamma: float | None = None
    potential: str = "zero"
    U: float = 0.0
    mu: float = 0.0
    fields: list[float] | None = None
    schedule: list[dict] | None = None


@dataclass
class RegionsConfig:
    X: list[int]
    Y: list[int]
    alpha: float = 0.0
    beta: float = 1.0
    strategy: str = "half-gap-surrogate"
    initial: str = "packed"


@dataclass
class BoundConfig:
    a: list[float] | str = field(default_factory=lambda: [1.0])
    a_max: float = 20.0

    @property
    def auto(self) -> bool:
        return self.a == "auto"


@dataclass
class SweepConfig:
    t: list[float] = field(default_factory=list)
    N: list[int] = field(default_factory=list)
    U: list[float] = field(default_factory=list)
    r: list[int] = field(default_factory=list)
    lightcone_x: str = "tail"


@dataclass
class OutputConfig:
    dir: Path = Path("results")
    csv: str = "transport.csv"
    tilting: str = "tilting.csv"
    lightcone: str = "lightcone.csv"
    oracle: str = "oracle.csv"
    comparison: str = "oracle_vs_engine.csv"
    profile: str | None = None
    verify_tilting: bool = False


@dataclass
class RunConfig:
    id: str = "run"
    seed: int = 0
    workers: int = 1
    max_dim: int = 200_000
    max_dense_dim: int = 400


@dataclass
class PhysicalConfig:
    N: int
    J_over_hbar: float
    r0: float
    D: int
    beta_minus_alpha: float
    ell: float
    t: float
    """Seconds."""
    mode: str = "replica"


@dataclass
class OracleConfig:
    theta: float
    r: int
    t: list[float]
    N: list[int]
    initial_site: int = 0
    C: float | None = None
    v_prime: float | None = None
    check_r: list[int] = field(default_factory=list)
    check_t: list[float] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    model: ModelConfig | None = None
    regions: RegionsConfig | None = None
    bound: BoundConfig = field(default_factory=BoundConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    physical: PhysicalConfig | None = None
    oracle: OracleConfig | None = None
    source: Path | None = None


class _Reader:
    """Typed access to a parsed file that remembers where each key was written."""

    def __init__(self, text: str):
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#", ";"),
                                            interpolation=None)
        try:
            self.cp.read_string(text)
        except configparser.MissingSectionHeaderError as e:
            raise ConfigError("key outside of any [block]", line=e.lineno) from None
        except configparser.DuplicateOptionError as e:
            raise ConfigError("duplicate key", e.section, e.option, e.lineno) from None
        except configparser.DuplicateSectionError as e:
            raise ConfigError("duplicate block", e.section, line=e.lineno) from None
        except configparser.ParsingError as e:
            lineno = e.errors[0][0] if e.errors else None
            raise ConfigError(f"cannot parse {e.errors[0][1]!r}" if e.errors else str(e), line=lineno) from None
        self.lines = {}
        section = None
        for no, raw in enumerate(text.splitlines(), start=1):
            m = re.match(r"\s*\[([^\]]+)\]", raw)
            if m:
                section = m.group(1).strip().lower()
                self.lines[(section, None)] = no
                continue
            m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", raw)
            if m and section is not None:
                self.lines.setdefault((section, m.group(1).strip().lower()), no)
        for sec in self.cp.sections():
            if sec.lower() != sec or sec not in _KNOWN:
                raise ConfigError(f"unknown block (expected one of {sorted(_KNOWN)})", sec,
                                  line=self.lines.get((sec.lower(), None)))
            for key in self.cp[sec]:
                if key not in _KNOWN[sec]:
                    raise ConfigError("unknown key", sec, key, self.lines.get((sec, key)))

    def has(self, sec, key=None):
        if key is None:
            return self.cp.has_section(sec)
        return self.cp.has_option(sec, key)

    def get(self, sec, key, conv=str, default=None, required=False):
        if not self.cp.has_option(sec, key):
            if required:
                raise ConfigError("missing required key", sec, key, self.lines.get((sec, None)))
            return default
        raw = self.cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, TypeError, ZeroDivisionError) as e:
            raise ConfigError(f"invalid value {raw!r} ({e})", sec, key, self.lines.get((sec, key))) from None

    def error(self, msg, sec, key=None):
        return ConfigError(msg, sec, key, self.lines.get((sec, key)))


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _int(text):
    v = _number(text)
    if v != int(v):
        raise ValueError("expected an integer")
    return int(v)


def _ints(text):
    return [_int(p) for p in text.split(",") if p.strip()] if ".." not in text else parse_sites(text)


def _floats(text):
    return [_number(p) for p in text.split(",") if p.strip()]


def _schedule(text):
    """``duration:key=val,key=val; duration:...`` with keys J, U, mu."""
    pieces = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        dur, _, rest = chunk.partition(":")
        piece = {"duration": _number(dur)}
        for kv in rest.split(","):
            if not kv.strip():
                continue
            k, _, v = kv.partition("=")
            k = k.strip()
            if k not in ("J", "U", "mu"):
                raise ValueError(f"schedule key {k!r} not in J, U, mu")
            piece[k] = _number(v)
        pieces.append(piece)
    return pieces


def parse_config(text: str, base: Path | str = ".", source: Path | None = None) -> ExperimentConfig:
    base = Path(base)
    r = _Reader(text)
    cfg = ExperimentConfig(source=source)

    if r.has("run"):
        cfg.run = RunConfig(
            id=r.get("run", "id", str, "run").strip(),
            seed=r.get("run", "seed", _int, 0),
            workers=r.get("run", "workers", _int, 1),
            max_dim=r.get("run", "max_dim", _int, 200_000),
            max_dense_dim=r.get("run", "max_dense_dim", _int, 400),
        )

    if r.has("model"):
        spec = r.get("model", "lattice", str, required=True).strip()
        lattice = r.get("model", "lattice", lambda s: _lattice(s, base), required=True)
        m = ModelConfig(
            lattice=lattice,
            lattice_spec=spec,
            statistics=r.get("model", "statistics", str, "boson").strip(),
            N=r.get("model", "n", _int, 1),
            hopping=r.get("model", "hopping", str, "nearest-neighbor").strip(),
            J=r.get("model", "j", _number, 1.0),
            gamma=r.get("model", "gamma", _number, None),
            potential=r.get("model", "potential", str, "zero").strip(),
            U=r.get("model", "u", _number, 0.0),
            mu=r.get("model", "mu", _number, 0.0),
            fields=r.get("model", "fields", _floats, None),
            schedule=r.get("model", "schedule", _schedule, None),
        )
        if m.N < 0:
            raise r.error("particle number must be nonnegative", "model", "n")
        if m.statistics not in ("boson", "fermion"):
            raise r.error("statistics must be boson or fermion", "model", "statistics")
        if m.hopping not in ("nearest-neighbor", "exponential-decay"):
            raise r.error("hopping must be nearest-neighbor or exponential-decay", "model", "hopping")
        if m.hopping == "exponential-decay" and not m.gamma:
            raise r.error("exponential-decay hopping needs gamma", "model", "hopping")
        if m.potential not in ("zero", "bose-hubbard"):
            raise r.error("potential must be zero or bose-hubbard", "model", "potential")
        if m.fields is not None and len(m.fields) != lattice.L:
            raise r.error(f"need {lattice.L} on-site fields", "model", "fields")
        cfg.model = m

    if r.has("regions"):
        if cfg.model is None:
            raise r.error("[regions] requires a [model] block", "regions")
        reg = RegionsConfig(
            X=r.get("regions", "x", parse_sites, required=True),
            Y=r.get("regions", "y", parse_sites, required=True),
            alpha=r.get("regions", "alpha", _number, 0.0),
            beta=r.get("regions", "beta", _number, 1.0),
            strategy=r.get("regions", "strategy", str, "half-gap-surrogate").strip(),
            initial=r.get("regions", "initial", str, "packed").strip(),
        )
        L = cfg.model.lattice.L
        for key, sites in (("x", reg.X), ("y", reg.Y)):
            if not sites:
                raise r.error("region is empty", "regions", key)
            if min(sites) < 0 or max(sites) >= L:
                raise r.error(f"site index outside 0..{L - 1}", "regions", key)
        if set(reg.X) & set(reg.Y):
            raise r.error("X and Y overlap", "regions", "x")
        if not 0 <= reg.alpha < reg.beta <= 1:
            raise r.error("need 0 <= alpha < beta <= 1", "regions", "beta")
        if reg.strategy not in STRATEGIES:
            raise r.error(f"strategy must be one of {STRATEGIES}", "regions", "strategy")
        if reg.initial not in ("packed", "ensemble"):
            raise r.error("initial must be packed or ensemble", "regions", "initial")
        cfg.regions = reg

    if r.has("bound"):
        a_raw = r.get("bound", "a", str, "1").strip()
        if a_raw == "auto":
            a = "auto"
        else:
            a = r.get("bound", "a", _floats)
            if not a or min(a) <= 0:
                raise r.error("a must be positive or 'auto'", "bound", "a")
        cfg.bound = BoundConfig(a, r.get("bound", "a_max", _number, 20.0))

    if r.has("sweep"):
        cfg.sweep = SweepConfig(
            t=r.get("sweep", "t", parse_grid, []),
            N=r.get("sweep", "n", _ints, []),
            U=r.get("sweep", "u", _floats, []),
            r=r.get("sweep", "r", parse_sites, []),
            lightcone_x=r.get("sweep", "lightcone_x", str, "tail").strip(),
        )
        if cfg.sweep.lightcone_x not in ("tail", "shell"):
            raise r.error("lightcone_x must be tail or shell", "sweep", "lightcone_x")

    if r.has("output"):
        d = r.get("output", "dir", str, "results").strip()
        cfg.output = OutputConfig(
            dir=Path(d),
            csv=r.get("output", "csv", str, "transport.csv").strip(),
            tilting=r.get("output", "tilting", str, "tilting.csv").strip(),
            lightcone=r.get("output", "lightcone", str, "lightcone.csv").strip(),
            oracle=r.get("output", "oracle", str, "oracle.csv").strip(),
            comparison=r.get("output", "comparison", str, "oracle_vs_engine.csv").strip(),
            profile=r.get("output", "profile", str, None),
            verify_tilting=r.get("output", "verify_tilting", _bool, False),
        )

    if r.has("physical"):
        J = r.get("physical", "j_over_hbar", _number, required=True)
        if r.has("physical", "t"):
            t = r.get("physical", "t", _number)
        else:
            t = r.get("physical", "t_hopping", _number, required=True) / J
        cfg.physical = PhysicalConfig(
            N=r.get("physical", "n", _int, required=True),
            J_over_hbar=J,
            r0=r.get("physical", "r0", _number, required=True),
            D=r.get("physical", "d", _int, 1),
            beta_minus_alpha=r.get("physical", "beta_minus_alpha", _number, required=True),
            ell=r.get("physical", "ell", _number, required=True),
            t=t,
            mode=r.get("physical", "mode", str, "replica").strip(),
        )
        if cfg.physical.mode not in ("replica", "exact"):
            raise r.error("mode must be replica or exact", "physical", "mode")

    if r.has("oracle"):
        if cfg.model is None:
            raise r.error("[oracle] requires a [model] block", "oracle")
        o = OracleConfig(
            theta=r.get("oracle", "theta", _number, required=True),
            r=r.get("oracle", "r", _int, required=True),
            t=r.get("oracle", "t", parse_grid, required=True),
            N=r.get("oracle", "n", _ints, [1]),
            initial_site=r.get("oracle", "initial_site", _int, 0),
            C=r.get("oracle", "c", _number, None),
            v_prime=r.get("oracle", "v_prime", _number, None),
            check_r=r.get("oracle", "check_r", parse_sites, []),
            check_t=r.get("oracle", "check_t", parse_grid, []),
        )
        if not 0 < o.theta < 1:
            raise r.error("theta must lie in (0, 1)", "oracle", "theta")
        if not 0 < o.r < cfg.model.lattice.L:
            raise r.error("r must be a site index > 0", "oracle", "r")
        cfg.oracle = o
    return cfg


def resolve_config_path(path) -> Path:
    """Use ``path`` if it exists, else look it up among the bundled configs."""
    p = Path(path)
    if p.exists():
        return p
    bundled = BUNDLED / p.name
    if bundled.exists():
        return bundled
    raise ConfigError(f"config file {path} not found")


def load_config(path) -> ExperimentConfig:
    p = resolve_config_path(path)
    return parse_config(p.read_text(), base=p.parent, source=p)
