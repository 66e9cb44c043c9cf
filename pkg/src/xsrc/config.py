"""Run configuration: flat ``section.key = value`` text, validated before any compute."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .fdtd import FdScheme
from .scenarios import PRESETS, Scenario, get_scenario


@dataclass
class RunSection:
    out: str = "out"
    threads: int = 1
    seed: int = 0


@dataclass
class ScenarioSection:
    name: str = "paper-lens"
    lens_radius: float = -1.0  # negative: preset default
    amplitude: float = 1.0
    nt: int = 0  # 0: preset default


@dataclass
class SchemeSection:
    k: int = 4
    cfl_safety: float = 0.9
    pml_width: float = -1.0  # negative: ten cells


@dataclass
class InvertSection:
    method: str = "approx"
    alpha: float = 0.0
    max_iter: int = 10
    cg_iter: int = 45
    tol: float = 1e-6
    medium: str = "homog"
    data: str = ""
    compare: bool = False
    min_speedup: float = 0.0


@dataclass
class LambdaSection:
    delta_z: float = -100.0
    surface: str = "source"
    input: str = ""
    datum_margin: float = 1000.0
    crop: bool = True


@dataclass
class DottestSection:
    trials: int = 10
    nt: int = 201
    threshold: float = 1e-9


@dataclass
class EnergySection:
    pad: float = 4000.0
    tolerance: float = 0.05


@dataclass
class SymbolSection:
    ratios: str = "0,0.25,0.5"
    convention: str = "physical"
    tolerance: float = 0.05


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    scheme: SchemeSection = field(default_factory=SchemeSection)
    invert: InvertSection = field(default_factory=InvertSection)
    lam: LambdaSection = field(default_factory=LambdaSection)
    dottest: DottestSection = field(default_factory=DottestSection)
    energy: EnergySection = field(default_factory=EnergySection)
    symbol: SymbolSection = field(default_factory=SymbolSection)

    SECTION_ALIASES = {"lambda": "lam"}

    def set(self, key: str, raw) -> None:
        sec_name, _, name = key.partition(".")
        if not name:
            raise ConfigError(f"config key {key!r} needs a section prefix (e.g. run.threads)")
        attr = self.SECTION_ALIASES.get(sec_name, sec_name)
        if attr not in _SECTIONS:
            raise ConfigError(f"unknown config section {sec_name!r}")
        sec = getattr(self, attr)
        fmap = {f.name: f for f in dataclasses.fields(sec)}
        if name not in fmap:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(sec, name, _coerce(key, type(getattr(type(sec)(), name)), raw))

    def flat(self) -> dict:
        out = {}
        for attr in _SECTIONS:
            sec = getattr(self, attr)
            label = "lambda" if attr == "lam" else attr
            for f in dataclasses.fields(sec):
                out[f"{label}.{f.name}"] = getattr(sec, f.name)
        return out

    def validate(self) -> None:
        if self.scenario.name not in PRESETS:
            raise ConfigError(f"scenario.name must be one of {PRESETS}, got {self.scenario.name!r}")
        if self.run.threads < 1:
            raise ConfigError("run.threads must be >= 1")
        if self.invert.method not in ("approx", "cg", "pcg"):
            raise ConfigError("invert.method must be approx, cg or pcg")
        if self.invert.medium not in ("homog", "lens", "same"):
            raise ConfigError("invert.medium must be homog, lens or same")
        if self.invert.alpha < 0 or self.invert.max_iter < 1 or self.invert.cg_iter < 1:
            raise ConfigError("invert.alpha must be >= 0 and iteration counts >= 1")
        if self.lam.surface not in ("source", "receiver"):
            raise ConfigError("lambda.surface must be source or receiver")
        if self.symbol.convention not in ("spec", "physical"):
            raise ConfigError("symbol.convention must be spec or physical")
        try:
            self.symbol_ratios()
        except ValueError as exc:
            raise ConfigError(f"symbol.ratios: {exc}") from None
        try:
            self.fd_scheme()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.dottest.trials < 1 or self.dottest.nt < 2:
            raise ConfigError("dottest.trials must be >= 1 and dottest.nt >= 2")

    def symbol_ratios(self) -> list[float]:
        vals = [float(v) for v in self.symbol.ratios.split(",") if v.strip()]
        if not vals or any(not 0 <= v < 1 for v in vals):
            raise ValueError("ratios must be a comma list of numbers in [0, 1)")
        return vals

    def fd_scheme(self) -> FdScheme:
        s = self.scheme
        return FdScheme(half_order=s.k, cfl_safety=s.cfl_safety,
                        pml_width=None if s.pml_width < 0 else s.pml_width, threads=self.run.threads)

    def build_scenario(self, name: str | None = None) -> Scenario:
        name = name or self.scenario.name
        kw = {"scheme": self.fd_scheme(), "amplitude": self.scenario.amplitude}
        if self.scenario.lens_radius > 0:
            kw["lens_radius"] = self.scenario.lens_radius
        sc = get_scenario(name, **kw)
        if self.scenario.nt > 0:
            from .grid import TimeAxis
            sc = dataclasses.replace(sc, time=TimeAxis(self.scenario.nt, sc.time.dt, sc.time.t0))
        return sc


_SECTIONS = ("run", "scenario", "scheme", "invert", "lam", "dottest", "energy", "symbol")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, typ, raw):
    if not isinstance(raw, str):
        if typ is float and isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw)
        if isinstance(raw, typ):
            return raw
        raw = str(raw)
    text = raw.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        return typ(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ.__name__}") from None


def parse_text(text: str, cfg: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    """Apply ``key = value`` lines; ``#`` starts a comment; blank lines ignored."""
    cfg = cfg or RunConfig()
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, _, val = line.partition("=")
        try:
            cfg.set(key.strip(), val)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{n}: {exc}") from None
    return cfg


def load(path, cfg: RunConfig | None = None) -> RunConfig:
    """Read a key = value file, or the ``params`` block of a run manifest (``.json``)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    if p.suffix == ".json":
        import json

        try:
            params = json.loads(text)["params"]
        except (ValueError, KeyError, TypeError):
            raise ConfigError(f"{p} is not a run manifest") from None
        cfg = cfg or RunConfig()
        for k, v in params.items():
            cfg.set(k, v)
        return cfg
    return parse_text(text, cfg, str(p))


def dump(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.flat().items())
