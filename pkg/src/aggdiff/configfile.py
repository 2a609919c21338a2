"""Line-oriented configuration files: sections, key/value pairs, inline tables.

The accepted syntax is

    [section]
    key = value              # numbers, strings, booleans
    list = 1 2 4 8           # whitespace- or comma-separated
    kernel = { family = "gaussian", sigma = 1.0 }

Parsing failures carry the offending line number; scenario assembly failures
name the section and field.
"""

from __future__ import annotations

import math
from pathlib import Path

from .scenarios import InitialSpec, ScenarioConfig, kernel_from_spec
from .solver import SolverConfig

__all__ = ["ConfigError", "parse_config", "scenario_from_config", "load_scenario"]


class ConfigError(ValueError):
    """Malformed configuration, with location information in the message."""


def _parse_scalar(token: str):
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        return token[1:-1]
    low = token.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    if low in ("inf", "infinity"):
        return math.inf
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def _parse_value(raw: str, lineno: int):
    raw = raw.strip()
    if not raw:
        raise ConfigError(f"line {lineno}: empty value")
    if raw.startswith("{"):
        if not raw.endswith("}"):
            raise ConfigError(f"line {lineno}: inline table is not closed with '}}'")
        inner = raw[1:-1].strip()
        table = {}
        if inner:
            for part in inner.split(","):
                if "=" not in part:
                    raise ConfigError(
                        f"line {lineno}: inline table entry {part.strip()!r} "
                        "needs 'key = value'"
                    )
                k, v = part.split("=", 1)
                table[k.strip()] = _parse_scalar(v)
        return table
    # Bare quoted string stays a single value even if it contains separators.
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        return raw[1:-1]
    tokens = raw.replace(",", " ").split()
    if len(tokens) > 1:
        return [_parse_scalar(tok) for tok in tokens]
    return _parse_scalar(tokens[0])


def parse_config(text: str) -> dict[str, dict]:
    """Parse config text into {section: {key: value}}."""
    sections: dict[str, dict] = {}
    current: dict | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"line {lineno}: section header is not closed with ']'")
            name = stripped[1:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}: empty section name")
            current = sections.setdefault(name, {})
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"line {lineno}: expected 'key = value', got {stripped!r}"
            )
        if current is None:
            raise ConfigError(f"line {lineno}: key/value outside of any [section]")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        current[key] = _parse_value(raw, lineno)
    return sections


def _take(section: dict, section_name: str, key: str, default=None, required=False):
    if key in section:
        return section.pop(key)
    if required:
        raise ConfigError(f"{section_name}.{key}: required field is missing")
    return default


def _as_float_list(value, where: str) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, list):
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            pass
    raise ConfigError(f"{where}: expected a list of numbers, got {value!r}")


def scenario_from_config(data: dict[str, dict]) -> ScenarioConfig:
    """Assemble and validate a scenario from parsed config sections."""
    data = {name: dict(section) for name, section in data.items()}
    scn = data.pop("scenario", {})
    sol = data.pop("solver", None)
    if sol is None:
        raise ConfigError("solver: section is missing")
    ini = data.pop("initial", {})
    swp = data.pop("sweep", {})
    kernel_spec = _take(sol, "solver", "kernel")
    if "kernel" in data:
        if kernel_spec is not None:
            raise ConfigError("kernel: given both inline and as a section")
        kernel_spec = data.pop("kernel")
    if data:
        raise ConfigError(f"unknown sections: {sorted(data)}")

    d = _take(sol, "solver", "d", required=True)
    try:
        kernel = kernel_from_spec(kernel_spec, int(d))
    except ValueError as exc:
        raise ConfigError(f"kernel: {exc}") from exc

    solver_kwargs = {
        "d": int(d),
        "m": float(_take(sol, "solver", "m", required=True)),
        "t_end": float(_take(sol, "solver", "t_end", required=True)),
        "n": int(_take(sol, "solver", "n", required=True)),
        "r_max": float(_take(sol, "solver", "r_max", required=True)),
        "kernel": kernel,
    }
    for key, cast in [
        ("variables", str),
        ("cfl", float),
        ("diag_dt", float),
        ("snapshot_dt", float),
        ("beta", float),
        ("lp_exponent", float),
        ("reference", str),
        ("peak_factor", float),
        ("dt_floor_ratio", float),
        ("blowup_window", int),
        ("domain_flux_tol", float),
        ("quadrature_order", int),
        ("rebuild_dtau", float),
        ("advection", str),
        ("max_steps", int),
    ]:
        if key in sol:
            solver_kwargs[key] = cast(sol.pop(key))
    if sol:
        raise ConfigError(f"solver: unknown fields {sorted(sol)}")
    try:
        solver = SolverConfig(**solver_kwargs)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc

    initial_kwargs = {}
    for key, cast in [
        ("profile", str),
        ("mass", float),
        ("sigma", float),
        ("radius", float),
        ("t0", float),
        ("dilation", float),
        ("csv", str),
    ]:
        if key in ini:
            initial_kwargs[key] = cast(ini.pop(key))
    if ini:
        raise ConfigError(f"initial: unknown fields {sorted(ini)}")
    initial = InitialSpec(**initial_kwargs)

    lambdas = _take(swp, "sweep", "lambdas", default=[1.0])
    lambdas = _as_float_list(lambdas, "sweep.lambdas")
    fit_window = _take(swp, "sweep", "fit_window")
    if fit_window is not None:
        fw = _as_float_list(fit_window, "sweep.fit_window")
        if len(fw) != 2:
            raise ConfigError("sweep.fit_window: expected two numbers 'lo hi'")
        fit_window = (fw[0], fw[1])
    scenario_kwargs = {
        "name": str(_take(scn, "scenario", "name", default="scenario")),
        "solver": solver,
        "initial": initial,
        "lambdas": lambdas,
        "output_dir": _take(scn, "scenario", "output_dir"),
        "fit_window": fit_window,
    }
    if "fit_series" in swp:
        scenario_kwargs["fit_series"] = str(swp.pop("fit_series"))
    if "spreading_threshold" in swp:
        scenario_kwargs["spreading_threshold"] = float(swp.pop("spreading_threshold"))
    if "workers" in swp:
        scenario_kwargs["workers"] = int(swp.pop("workers"))
    if swp:
        raise ConfigError(f"sweep: unknown fields {sorted(swp)}")
    if scn:
        raise ConfigError(f"scenario: unknown fields {sorted(scn)}")
    try:
        return ScenarioConfig(**scenario_kwargs)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def load_scenario(path) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    return scenario_from_config(parse_config(text))
