"""Run configuration: strict ``key = value`` files and named scenario presets."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
import math

from .initial import DEFAULT_BC, BoundaryScenario, ConfigError, Family, InitialConditionSpec
from .ldg_model import Parameters, preset


class ConfigSyntaxError(ConfigError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    """A fully concrete run.

    solver selects the Cartesian grid ("grid", needs dim/N) or the reduced
    radial model ("radial", needs M). Parameters come from a named preset with
    optional overrides of A, B, C and L.
    """

    solver: str = "grid"
    dim: int = 3
    N: int = 128
    M: int = 2048
    params_preset: str = "transition-L0.05"
    L: float | None = None
    A: float | None = None
    B: float | None = None
    C: float | None = None
    ic: Family = Family.CASE_I
    r0: float = 0.5
    u0: float = 0.6
    v0: float = 0.4
    epsilon: float = 0.0
    bc: BoundaryScenario | None = None
    dt: float | None = None
    t_end: float = 0.125
    snapshots: int = 50
    stencil: int = 2
    out: str = "qflow-out"
    threads: int | None = None
    scenario: str | None = None

    def params(self) -> Parameters:
        p = preset(self.params_preset)
        if self.B is not None or self.C is not None:
            B = self.B if self.B is not None else p.B
            C = self.C if self.C is not None else p.C
            p = Parameters.transition(p.L, B=B, C=C)
        if self.A is not None:
            p = replace(p, A=self.A)
        if self.L is not None:
            p = p.with_L(self.L)
        return p

    def ic_spec(self) -> InitialConditionSpec:
        return InitialConditionSpec(self.ic, r0=self.r0, u0=self.u0, v0=self.v0, epsilon=self.epsilon)

    def boundary(self) -> BoundaryScenario:
        return self.bc if self.bc is not None else DEFAULT_BC[self.ic]

    def validate(self) -> "RunConfig":
        if self.solver not in ("grid", "radial"):
            raise ConfigError(f"solver must be 'grid' or 'radial', got {self.solver!r}")
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.N < 16 or self.N % 2:
            raise ConfigError(f"N must be even and at least 16, got {self.N}")
        if self.M < 4:
            raise ConfigError(f"M must be at least 4, got {self.M}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.snapshots < 1:
            raise ConfigError("snapshots must be at least 1")
        if self.stencil not in (2, 4):
            raise ConfigError("stencil must be 2 or 4")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be at least 1")
        self.ic_spec()  # range checks
        self.params()
        return self


# key -> (field name, converter, default doc)
def _opt_float(s):
    return None if s.lower() in ("none", "auto") else float(s)


def _opt_int(s):
    return None if s.lower() in ("none", "auto") else int(s)


_KEYS = {
    "scenario": ("scenario", str),
    "solver": ("solver", str),
    "dim": ("dim", int),
    "N": ("N", int),
    "M": ("M", int),
    "params": ("params_preset", str),
    "L": ("L", _opt_float),
    "A": ("A", _opt_float),
    "B": ("B", _opt_float),
    "C": ("C", _opt_float),
    "ic": ("ic", Family),
    "r0": ("r0", float),
    "u0": ("u0", float),
    "v0": ("v0", float),
    "epsilon": ("epsilon", float),
    "bc": ("bc", lambda s: None if s.lower() in ("none", "auto") else BoundaryScenario(s)),
    "dt": ("dt", _opt_float),
    "t_end": ("t_end", float),
    "snapshots": ("snapshots", int),
    "stencil": ("stencil", int),
    "out": ("out", str),
    "threads": ("threads", _opt_int),
}
REQUIRED_WITHOUT_SCENARIO = ("ic", "t_end")

# quarter of the time ball interface needs to reach r = 1/2 from r0 = 0.75
_T1_075 = 0.25 * (0.75**2 - 0.25)

SCENARIOS: dict[str, dict] = {
    "case1_ball_L005": dict(dim=3, N=128, params_preset="transition-L0.05", ic=Family.CASE_I, r0=0.5, t_end=0.125),
    "case1_ball_L001": dict(dim=3, N=256, params_preset="transition-L0.01", ic=Family.CASE_I, r0=0.5, t_end=0.125),
    "case2_ball_L005": dict(dim=3, N=128, params_preset="transition-L0.05", ic=Family.CASE_II, t_end=0.125),
    "case2_ball_L001": dict(dim=3, N=256, params_preset="transition-L0.01", ic=Family.CASE_II, t_end=0.125),
    "biaxial_ball": dict(dim=3, N=128, params_preset="transition-L0.01", ic=Family.BIAXIAL_SPHERE, r0=0.5, t_end=0.125),
    "ellipsoidal_ball": dict(dim=3, N=128, params_preset="transition-L0.01", ic=Family.ELLIPSOIDAL, t_end=0.125),
    "uv_planar_disc": dict(dim=2, N=256, params_preset="transition-L0.01", ic=Family.UV_TANH, t_end=0.25),
    "uv_star_disc": dict(dim=2, N=256, params_preset="transition-L0.01", ic=Family.UV_STAR, t_end=0.25),
    "perturbed_disc": dict(dim=2, N=128, params_preset="transition-L0.05", ic=Family.UV_PERTURBED, epsilon=1e-3, t_end=2.0),
    "biaxial_bc_disc_r050": dict(
        dim=2, N=256, params_preset="transition-L0.01", ic=Family.S2D_TANH, r0=0.5, bc=BoundaryScenario.DISC_BIAXIAL, t_end=0.25
    ),
    "biaxial_bc_disc_r092": dict(
        dim=2, N=256, params_preset="transition-L0.01", ic=Family.S2D_TANH, r0=0.92, bc=BoundaryScenario.DISC_BIAXIAL, t_end=0.25
    ),
    "s2d_radial": dict(solver="radial", M=1000, params_preset="transition-L0.01", ic=Family.S2D_TANH, r0=0.5, t_end=0.25),
    "hedgehog_radial": dict(solver="radial", M=2048, params_preset="transition-L0.01", ic=Family.CASE_I, r0=0.75, t_end=0.8 * _T1_075),
    "uv_radial": dict(solver="radial", M=1000, params_preset="transition-L0.01", ic=Family.UV_TANH, t_end=0.25),
}


def scenario(name: str, **overrides) -> RunConfig:
    try:
        base = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}") from None
    return RunConfig(**{**base, **overrides, "scenario": name}).validate()


def _convert(key: str, raw: str, line: int | None):
    if key not in _KEYS:
        raise ConfigSyntaxError(f"unknown key {key!r}", line)
    name, conv = _KEYS[key]
    try:
        return name, conv(raw)
    except (ValueError, KeyError) as err:
        raise ConfigSyntaxError(f"bad value for {key!r}: {raw!r} ({err})", line) from None


def parse_assignments(pairs, base: dict | None = None) -> dict:
    """Convert (line, key, raw) triples to RunConfig field values."""
    vals = dict(base or {})
    for line, key, raw in pairs:
        name, v = _convert(key, raw, line)
        vals[name] = v
    return vals


def _split_lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigSyntaxError(f"expected 'key = value', got {body!r}", no)
        key, val = (s.strip() for s in body.split("=", 1))
        if not key or not val:
            raise ConfigSyntaxError(f"expected 'key = value', got {body!r}", no)
        yield no, key, val


def parse_config(text: str, overrides: list[str] | tuple = ()) -> RunConfig:
    """Parse a config file, then apply ``key=value`` overrides (from --set).

    Either ``scenario`` or all of ``ic`` and ``t_end`` must be given.
    """
    pairs = list(_split_lines(text))
    for item in overrides:
        if "=" not in item:
            raise ConfigSyntaxError(f"override must be key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        pairs.append((None, k, v))
    seen = {k for _, k, _ in pairs}
    if "scenario" not in seen:
        missing = [k for k in REQUIRED_WITHOUT_SCENARIO if k not in seen]
        if missing:
            raise ConfigSyntaxError(
                f"missing required keys: {', '.join(missing)} (or give 'scenario'); known keys: {', '.join(_KEYS)}"
            )
    vals = parse_assignments(pairs)
    name = vals.pop("scenario", None)
    line_of = {k: no for no, k, _ in pairs}
    try:
        if name is not None:
            return scenario(name, **vals)
        return RunConfig(**vals).validate()
    except ConfigSyntaxError:
        raise
    except ConfigError as err:
        # attach the line of the first key the message mentions, when known
        for key, no in line_of.items():
            if no and key in str(err):
                raise ConfigSyntaxError(str(err), no) from None
        raise


def describe(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = v.value if hasattr(v, "value") else v
    return out
