"""Scenario files: INI-style sections with `key = value` pairs.

Expressions are quoted, `#` starts a comment, lists are space separated.
The parser keeps line numbers so the CLI can point at the offending key;
unknown sections or keys are rejected.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .integrate import IntegratorSpec, radius_guard
from .systems import LagrangianSystem

__all__ = ["Scenario", "ScenarioError", "load_scenario"]

_KNOWN_KEYS = {
    "system": {"dim", "coordinates", "metric", "potential", "params",
               "kepler_mass"},
    "initial": {"q", "p", "qdot"},
    "run": {"method", "dt", "steps", "r_guard", "store_every"},
    "symmetries": None,  # free-form: label = components
    "radial": {"M", "L", "E", "potential", "params", "bracket", "phi_points"},
    "modes": {"guess"},
    "hj": {"c", "k", "dt", "steps", "xi_anchor", "grid_xi", "grid_eta"},
    "field": {"kind", "n", "dx", "m", "dt", "steps", "boundary", "init_mode",
              "amplitude", "init", "window"},
}


class ScenarioError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
        self.reason = message


@dataclass
class _Entry:
    value: str
    line: int


def _parse_ini(path: Path) -> dict[str, dict[str, _Entry]]:
    sections: dict[str, dict[str, _Entry]] = {}
    current: str | None = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in _KNOWN_KEYS:
                raise ScenarioError(path, lineno, f"unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ScenarioError(path, lineno, "expected `key = value`")
        if current is None:
            raise ScenarioError(path, lineno, "key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        allowed = _KNOWN_KEYS[current]
        is_metric_entry = (current == "system" and key.startswith("metric_")
                           and len(key.split("_")) == 3)
        if allowed is not None and key not in allowed and not is_metric_entry:
            raise ScenarioError(path, lineno, f"unknown key [{current}].{key}")
        if key in sections[current]:
            raise ScenarioError(path, lineno, f"duplicate key [{current}].{key}")
        sections[current][key] = _Entry(value, lineno)
    return sections


def _unquote(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    return s


class Scenario:
    """Validated scenario with typed accessors.

    Sections are exposed as plain dicts of strings; `build_system`,
    `build_initial_state` and `build_run_spec` construct the simulation
    objects, raising ScenarioError with file/line context on bad values.
    """

    def __init__(self, path: Path, sections: dict[str, dict[str, _Entry]]):
        self.path = Path(path)
        self.sections = sections

    def has(self, section: str) -> bool:
        return section in self.sections

    def _entry(self, section: str, key: str, default: str | None = None) -> _Entry:
        sec = self.sections.get(section, {})
        if key not in sec:
            if default is not None:
                return _Entry(default, 0)
            raise ScenarioError(self.path, 0, f"missing [{section}].{key}")
        return sec[key]

    def raw(self, section: str, key: str, default: str | None = None) -> str:
        return _unquote(self._entry(section, key, default).value)

    def floats(self, section: str, key: str, default: str | None = None) -> list[float]:
        entry = self._entry(section, key, default)
        try:
            return [float(tok) for tok in entry.value.split()]
        except ValueError:
            raise ScenarioError(self.path, entry.line,
                                f"[{section}].{key} must be a list of numbers") from None

    def number(self, section: str, key: str, default: str | None = None) -> float:
        entry = self._entry(section, key, default)
        try:
            return float(_unquote(entry.value))
        except ValueError:
            raise ScenarioError(self.path, entry.line,
                                f"[{section}].{key} must be a number") from None

    def integer(self, section: str, key: str, default: str | None = None) -> int:
        value = self.number(section, key, default)
        if value != int(value):
            entry = self._entry(section, key, default)
            raise ScenarioError(self.path, entry.line,
                                f"[{section}].{key} must be an integer")
        return int(value)

    def params(self, section: str = "system", key: str = "params") -> dict[str, float]:
        sec = self.sections.get(section, {})
        if key not in sec:
            return {}
        entry = sec[key]
        out: dict[str, float] = {}
        for tok in entry.value.split():
            if "=" not in tok:
                raise ScenarioError(self.path, entry.line,
                                    f"[{section}].{key} entries must look like name=value")
            name, _, val = tok.partition("=")
            try:
                out[name] = float(val)
            except ValueError:
                raise ScenarioError(self.path, entry.line,
                                    f"bad parameter value {tok!r}") from None
        return out

    # -- builders ------------------------------------------------------------

    def build_system(self) -> LagrangianSystem:
        if not self.has("system"):
            raise ScenarioError(self.path, 0, "missing [system] section")
        dim = self.integer("system", "dim")
        coords = self.raw("system", "coordinates",
                          " ".join(f"q{i+1}" for i in range(dim))).split()
        if len(coords) != dim:
            entry = self._entry("system", "coordinates", "x")
            raise ScenarioError(self.path, entry.line,
                                f"expected {dim} coordinate names, got {len(coords)}")
        params = self.params()
        potential = self.raw("system", "potential")
        metric_entry = self._entry("system", "metric", "euclidean")
        metric_spec = metric_entry.value.strip()
        try:
            if metric_spec.startswith("euclidean"):
                mass = 1.0
                for tok in shlex.split(metric_spec)[1:]:
                    if tok.startswith("mass="):
                        mass = float(tok[5:])
                    else:
                        raise ValueError(f"unknown metric option {tok!r}")
                return LagrangianSystem.euclidean(coords, potential, mass=mass,
                                                  params=params)
            if metric_spec == "expr":
                entries = [["0"] * dim for _ in range(dim)]
                sec = self.sections["system"]
                for key, entry in sec.items():
                    if not key.startswith("metric_"):
                        continue
                    _, si, sj = key.split("_")
                    i, j = int(si) - 1, int(sj) - 1
                    entries[i][j] = entries[j][i] = _unquote(entry.value)
                return LagrangianSystem.from_metric(coords, entries, potential,
                                                    params=params)
            raise ValueError(f"metric must be `euclidean [mass=..]` or `expr`,"
                             f" got {metric_spec!r}")
        except ScenarioError:
            raise
        except Exception as err:
            raise ScenarioError(self.path, metric_entry.line, str(err)) from None

    def build_initial_state(self, sys: LagrangianSystem):
        from .systems import PhaseState, VelocityState, to_momenta
        if not self.has("initial"):
            raise ScenarioError(self.path, 0, "missing [initial] section")
        q = self.floats("initial", "q")
        if len(q) != sys.n:
            raise ScenarioError(self.path, self._entry("initial", "q").line,
                                f"[initial].q must have {sys.n} entries")
        sec = self.sections["initial"]
        if "p" in sec and "qdot" in sec:
            raise ScenarioError(self.path, sec["p"].line,
                                "give either [initial].p or [initial].qdot, not both")
        if "p" in sec:
            p = self.floats("initial", "p")
            if len(p) != sys.n:
                raise ScenarioError(self.path, sec["p"].line,
                                    f"[initial].p must have {sys.n} entries")
            return PhaseState(np.array(q), np.array(p))
        if "qdot" in sec:
            qdot = self.floats("initial", "qdot")
            if len(qdot) != sys.n:
                raise ScenarioError(self.path, sec["qdot"].line,
                                    f"[initial].qdot must have {sys.n} entries")
            return to_momenta(sys, VelocityState(np.array(q), np.array(qdot)))
        raise ScenarioError(self.path, 0, "missing [initial].p or [initial].qdot")

    def build_run_spec(self) -> IntegratorSpec:
        method = self.raw("run", "method", "rk4")
        dt = self.number("run", "dt", "1e-3")
        steps = self.integer("run", "steps", "1000")
        store_every = self.integer("run", "store_every", "1")
        guard = None
        if "run" in self.sections and "r_guard" in self.sections["run"]:
            guard = radius_guard(self.number("run", "r_guard"))
        try:
            return IntegratorSpec(method, dt, steps, guard, store_every)
        except ValueError as err:
            raise ScenarioError(self.path, 0, str(err)) from None

    def symmetries(self) -> list[tuple[str, list[str]]]:
        out = []
        for label, entry in self.sections.get("symmetries", {}).items():
            comps = [_unquote(c.strip()) for c in entry.value.split(";")]
            out.append((label, comps))
        return out


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(path, 0, "scenario file not found")
    return Scenario(path, _parse_ini(path))
