"""Run configuration: a flat ``section.key = value`` text format.

One assignment per line, ``#`` starts a comment, keys are dotted and
case-sensitive, and every key not in the schema is a hard error (with
the offending line number).  ``model.mu`` is the only required key, so

    model.mu = 0.4

is a complete configuration.  ``canonical_text`` echoes the fully
resolved configuration in schema order; parsing that echo reproduces the
same resolved values, which is what run manifests store.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .dynamics import ModelParams, Variant
from .fields import BC, Field, Grid
from .kernels import Kernel, constant, cosine_bump, gaussian_floor
from .stepper import Scheme, StepperConfig, make_initial

__all__ = [
    "ConfigError",
    "Config",
    "parse_config",
    "parse_config_file",
    "apply_overrides",
    "parse_kernel_spec",
    "build_grid",
    "build_kernel",
    "build_params",
    "build_stepper_config",
    "build_initial",
    "validate_for_lyapunov",
    "KEY_SPECS",
]

_REQUIRED = object()


class ConfigError(ValueError):
    """Malformed or inconsistent configuration text."""

    def __init__(self, message: str, line_no: int | None = None, source: str = "<config>"):
        self.line_no = line_no
        self.source = source
        where = f"{source}:{line_no}: " if line_no is not None else f"{source}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class KeySpec:
    kind: str  # int | float | bool | str | choice
    default: Any
    choices: tuple[str, ...] = ()


KEY_SPECS: dict[str, KeySpec] = {
    "grid.nx": KeySpec("int", 128),
    "grid.ny": KeySpec("int", 128),
    "grid.lx": KeySpec("float", 16.0 * math.pi),
    "grid.ly": KeySpec("float", 16.0 * math.pi),
    "grid.bc": KeySpec("choice", "periodic", ("periodic", "clamped")),
    "model.variant": KeySpec("choice", "nonlocal", ("nonlocal", "local")),
    "model.mu": KeySpec("float", _REQUIRED),
    "model.kernel": KeySpec("str", "gaussian_floor b=1 a=3 sigma=2"),
    "step.scheme": KeySpec("choice", "etdrk4", ("etdrk4", "imex_be", "imex_cn")),
    "step.dt": KeySpec("float", 0.05),
    "step.t_end": KeySpec("float", 100.0),
    "step.series_stride": KeySpec("int", 10),
    "step.snapshot_stride": KeySpec("int", 0),
    "ic.kind": KeySpec("choice", "smooth_random", ("smooth_random", "single_mode", "bump")),
    "ic.seed": KeySpec("int", 1),
    "ic.amplitude": KeySpec("float", 1.0),
    "ic.mode_x": KeySpec("int", 1),
    "ic.mode_y": KeySpec("int", 0),
    "ic.falloff": KeySpec("float", 2.0),
    "ic.width": KeySpec("float", None),
    "lyapunov.m": KeySpec("int", 24),
    "lyapunov.reorth_period": KeySpec("int", 10),
    "lyapunov.t_span": KeySpec("float", 100.0),
    "lyapunov.trace_every": KeySpec("int", 1),
    "analysis.check_envelope": KeySpec("bool", True),
    "analysis.check_h2": KeySpec("bool", True),
    "analysis.check_dissipativity": KeySpec("bool", True),
    "analysis.tol_rel": KeySpec("float", None),
    "theory.c": KeySpec("float", 1.0),
}


def _parse_value(key: str, text: str, line_no: int | None, source: str) -> Any:
    spec = KEY_SPECS[key]
    text = text.strip()
    try:
        if spec.kind == "int":
            return int(text)
        if spec.kind == "float":
            return float(text)
        if spec.kind == "bool":
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if spec.kind == "choice":
            if text not in spec.choices:
                raise ConfigError(
                    f"{key} must be one of {', '.join(spec.choices)}; got {text!r}",
                    line_no,
                    source,
                )
            return text
        return text  # str
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(
            f"could not parse {text!r} as {spec.kind} for key {key}", line_no, source
        ) from None


class Config:
    """Resolved configuration: schema defaults overlaid with assignments."""

    def __init__(self, assigned: Mapping[str, Any], source: str = "<config>"):
        self.source = source
        self._values: dict[str, Any] = {}
        for key, spec in KEY_SPECS.items():
            if key in assigned:
                self._values[key] = assigned[key]
            elif spec.default is _REQUIRED:
                raise ConfigError(f"required key {key} was never set", source=source)
            else:
                self._values[key] = spec.default
        self._cross_validate()

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def as_dict(self) -> dict[str, Any]:
        return dict(self._values)

    def _cross_validate(self) -> None:
        v = self._values
        if v["step.scheme"] == "etdrk4" and v["grid.bc"] == "clamped":
            raise ConfigError(
                "step.scheme = etdrk4 needs grid.bc = periodic; "
                "use imex_be or imex_cn with clamped walls",
                source=self.source,
            )
        if v["step.dt"] <= 0:
            raise ConfigError(f"step.dt must be positive, got {v['step.dt']}", source=self.source)
        if v["step.t_end"] <= 0:
            raise ConfigError(
                f"step.t_end must be positive, got {v['step.t_end']}", source=self.source
            )
        for key in ("step.series_stride", "step.snapshot_stride"):
            if v[key] < 0:
                raise ConfigError(f"{key} must be >= 0, got {v[key]}", source=self.source)
        for key in ("lyapunov.m", "lyapunov.reorth_period"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be >= 1, got {v[key]}", source=self.source)
        if v["model.variant"] == "nonlocal":
            try:
                parse_kernel_spec(v["model.kernel"])
            except ValueError as exc:
                raise ConfigError(f"model.kernel: {exc}", source=self.source) from None

    def canonical_text(self) -> str:
        lines = []
        for key in KEY_SPECS:
            val = self._values[key]
            if val is None:
                continue
            if isinstance(val, bool):
                txt = "true" if val else "false"
            elif isinstance(val, float):
                txt = f"{val:.17g}"
            else:
                txt = str(val)
            lines.append(f"{key} = {txt}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, source: str = "<config>") -> Config:
    assigned: dict[str, Any] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line_no, source)
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown key {key!r}", line_no, source)
        if key in assigned:
            raise ConfigError(f"key {key} assigned twice", line_no, source)
        assigned[key] = _parse_value(key, value, line_no, source)
    return Config(assigned, source=source)


def parse_config_file(path) -> Config:
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def apply_overrides(cfg: Config, overrides: Iterable[str]) -> Config:
    """Overlay ``key=value`` strings (from --set flags) onto a parsed config."""
    assigned = {k: v for k, v in cfg.as_dict().items()}
    for i, item in enumerate(overrides, start=1):
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}", i, "<override>")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown key {key!r}", i, "<override>")
        assigned[key] = _parse_value(key, value, i, "<override>")
    return Config(assigned, source=cfg.source)


_KERNEL_FAMILIES = {
    "constant": (constant, ("g",)),
    "gaussian_floor": (gaussian_floor, ("b", "a", "sigma")),
    "cosine_bump": (cosine_bump, ("b", "a", "rho")),
}


def parse_kernel_spec(spec: str) -> Kernel:
    """Kernel from a spec string like ``gaussian_floor b=1 a=3 sigma=2``."""
    tokens = spec.split()
    if not tokens:
        raise ValueError("empty kernel spec")
    family = tokens[0]
    if family not in _KERNEL_FAMILIES:
        raise ValueError(
            f"unknown kernel family {family!r}; choose from {', '.join(_KERNEL_FAMILIES)}"
        )
    factory, param_names = _KERNEL_FAMILIES[family]
    params: dict[str, float] = {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise ValueError(f"kernel parameter must look like name=value, got {tok!r}")
        name, _, value = tok.partition("=")
        if name not in param_names:
            raise ValueError(f"{family} takes parameters {', '.join(param_names)}, not {name!r}")
        try:
            params[name] = float(value)
        except ValueError:
            raise ValueError(f"could not parse {value!r} as a number for {name}") from None
    missing = [n for n in param_names if n not in params]
    if missing:
        raise ValueError(f"{family} is missing parameters: {', '.join(missing)}")
    return factory(**params)


def build_grid(cfg: Config) -> Grid:
    bc = BC.PERIODIC if cfg["grid.bc"] == "periodic" else BC.CLAMPED
    return Grid(cfg["grid.nx"], cfg["grid.ny"], cfg["grid.lx"], cfg["grid.ly"], bc)


def build_kernel(cfg: Config) -> Kernel | None:
    if cfg["model.variant"] == "local":
        return None
    return parse_kernel_spec(cfg["model.kernel"])


def build_params(cfg: Config) -> ModelParams:
    variant = Variant.NONLOCAL if cfg["model.variant"] == "nonlocal" else Variant.LOCAL_CUBIC
    return ModelParams(mu=cfg["model.mu"], variant=variant, kernel=build_kernel(cfg))


def build_stepper_config(cfg: Config) -> StepperConfig:
    return StepperConfig(
        dt=cfg["step.dt"],
        t_end=cfg["step.t_end"],
        scheme=Scheme(cfg["step.scheme"]),
        series_stride=cfg["step.series_stride"],
        snapshot_stride=cfg["step.snapshot_stride"],
    )


def build_initial(cfg: Config, grid: Grid) -> Field:
    return make_initial(
        grid,
        cfg["ic.kind"],
        seed=cfg["ic.seed"],
        amplitude=cfg["ic.amplitude"],
        mode=(cfg["ic.mode_x"], cfg["ic.mode_y"]),
        falloff=cfg["ic.falloff"],
        width=cfg["ic.width"],
    )


def validate_for_lyapunov(cfg: Config) -> None:
    """Exponent runs sit on the attractor, which needs mu > 0 and a scheme
    with a tangent map."""
    if cfg["model.mu"] <= 0.0:
        raise ConfigError(
            f"lyapunov runs need model.mu > 0 (got {cfg['model.mu']}); "
            "with mu <= 0 every trajectory decays to zero",
            source=cfg.source,
        )
    if cfg["step.scheme"] == "imex_cn":
        raise ConfigError(
            "step.scheme = imex_cn has no tangent map; use etdrk4 or imex_be",
            source=cfg.source,
        )
