"""Scenario files: TOML text validated into plain dataclasses.

All validation happens here, before any computation or file output, so a
malformed scenario never leaves partial artifacts behind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .expressions import ExpressionError, parse_expression
from .liecore import normalize_family
from .structure import CATALOG_VARIANTS

COMMANDS = ("verify", "closure", "simulate", "synthesize", "observe", "sphere")
SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Anything wrong with the scenario text or its values."""


_SECTIONS = {
    "command": None,
    "seed": None,
    "group": {"family", "n", "variant"},
    "grid": {"a", "b", "nodes", "rule"},
    "params": {"rho", "designated"},
    "outputs": {"variant", "orientation"},
    "control": {"kind", "segments", "count", "nu_max", "T", "dt"},
    "init": {"kind", "coeffs", "center"},
    "verify": {"codistinguished", "orientation", "samples", "pairs", "tol", "relation_tol"},
    "closure": {"max_depth", "subset", "indicator_depth", "targets"},
    "simulate": {"compare_center", "tol_grp", "center_tol", "stride"},
    "synthesize": {"terms", "T", "dt", "degrees", "delta_max", "epsilon_max"},
    "observe": {"K_obs", "tol", "profile1", "profile2", "expect", "reconstruct", "d_max", "starts",
                "distance_max"},
    "sphere": {"samples", "tol", "equivariance_tol", "stride"},
    "tolerances": {"closure", "projective", "group"},
}


def _need(d: dict, key: str, kind, where: str):
    if key not in d:
        raise ScenarioError(f"missing key {where}.{key}")
    return _typed(d[key], kind, f"{where}.{key}")


def _typed(v, kind, where: str):
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ScenarioError(f"{where} must be a finite number")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ScenarioError(f"{where} must be an integer")
        return v
    if kind is bool:
        if not isinstance(v, bool):
            raise ScenarioError(f"{where} must be true or false")
        return v
    if kind is str:
        if not isinstance(v, str):
            raise ScenarioError(f"{where} must be a string")
        return v
    if kind is list:
        if not isinstance(v, list):
            raise ScenarioError(f"{where} must be an array")
        return v
    raise AssertionError(kind)


def _get(d: dict, key: str, kind, default, where: str):
    return _typed(d[key], kind, f"{where}.{key}") if key in d else default


def _positive(x: float, where: str) -> float:
    if not x > 0:
        raise ScenarioError(f"{where} must be positive")
    return x


@dataclass(frozen=True)
class GroupSpec:
    family: str
    n: int
    variant: str


@dataclass(frozen=True)
class GridSpec:
    a: float
    b: float
    nodes: int
    rule: str


@dataclass(frozen=True)
class ControlSpec:
    kind: str  # zero | piecewise | random-piecewise
    T: float
    dt: float
    segments: tuple = ()
    count: int = 4
    nu_max: float = 1.0


@dataclass(frozen=True)
class Scenario:
    command: str
    seed: int
    group: GroupSpec
    grid: GridSpec | None
    rho: tuple[str, ...]
    designated: int
    outputs: dict
    control: ControlSpec | None
    init: dict
    section: dict
    tolerances: dict
    raw: dict = field(repr=False, compare=False, default_factory=dict)


def _group(d: dict) -> GroupSpec:
    try:
        fam = normalize_family(_need(d, "family", str, "group"))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    n = _need(d, "n", int, "group")
    variant = _get(d, "variant", str, "standard", "group")
    allowed = CATALOG_VARIANTS[fam] + ("standard",)
    if variant not in allowed:
        raise ScenarioError(f"group.variant {variant!r} is not one of {list(allowed)}")
    if n < (3 if fam == "so" else 2) or n > 8:
        raise ScenarioError(f"group.n = {n} is outside the catalog range")
    return GroupSpec(fam, n, variant)


def _grid(d: dict) -> GridSpec:
    a = _need(d, "a", float, "grid")
    b = _need(d, "b", float, "grid")
    q = _need(d, "nodes", int, "grid")
    rule = _get(d, "rule", str, "gauss-legendre", "grid")
    if not a < b:
        raise ScenarioError("grid needs a < b")
    if q < 2:
        raise ScenarioError("grid.nodes must be at least 2")
    if rule not in ("uniform-trapezoid", "gauss-legendre"):
        raise ScenarioError(f"grid.rule {rule!r} is unknown")
    return GridSpec(a, b, q, rule)


def _control(d: dict, m: int, r: int) -> ControlSpec:
    kind = _get(d, "kind", str, "zero", "control")
    T = _positive(_need(d, "T", float, "control"), "control.T")
    dt = _positive(_need(d, "dt", float, "control"), "control.dt")
    steps = round(T / dt)
    if abs(steps * dt - T) > 1e-12 * max(1.0, T):
        raise ScenarioError("control.dt must divide control.T")
    if kind == "zero":
        return ControlSpec(kind, T, dt)
    if kind == "piecewise":
        segs = []
        for p, seg in enumerate(_need(d, "segments", list, "control")):
            if not isinstance(seg, list) or len(seg) != 4:
                raise ScenarioError(f"control.segments[{p}] must be [i, s, nu, t]")
            i = _typed(seg[0], int, f"control.segments[{p}][0]")
            s = _typed(seg[1], int, f"control.segments[{p}][1]")
            nu = _typed(seg[2], float, f"control.segments[{p}][2]")
            t = _typed(seg[3], float, f"control.segments[{p}][3]")
            if not (0 <= i < m and 0 <= s < r):
                raise ScenarioError(f"control.segments[{p}] index out of range")
            segs.append((i, s, nu, t))
        times = [seg[3] for seg in segs]
        if not segs or times[0] <= 0 or any(y <= x for x, y in zip(times, times[1:])):
            raise ScenarioError("switching times must be positive and increasing")
        if abs(times[-1] - T) > 1e-12 * max(1.0, T):
            raise ScenarioError("the last switching time must equal control.T")
        return ControlSpec(kind, T, dt, tuple(segs))
    if kind == "random-piecewise":
        count = _get(d, "count", int, 4, "control")
        nu_max = _positive(_get(d, "nu_max", float, 1.0, "control"), "control.nu_max")
        if count < 1:
            raise ScenarioError("control.count must be at least 1")
        return ControlSpec(kind, T, dt, (), count, nu_max)
    raise ScenarioError(f"control.kind {kind!r} is unknown")


def _profile_spec(d, where: str, m: int, center_max: int) -> dict:
    if not isinstance(d, dict):
        raise ScenarioError(f"{where} must be a table")
    unknown = set(d) - {"kind", "coeffs", "center"}
    if unknown:
        raise ScenarioError(f"unknown keys in {where}: {sorted(unknown)}")
    kind = _get(d, "kind", str, "identity", where)
    if kind not in ("identity", "random", "ansatz"):
        raise ScenarioError(f"{where}.kind {kind!r} is unknown")
    coeffs = None
    if kind == "ansatz":
        rows = _need(d, "coeffs", list, where)
        if len(rows) != m or not rows:
            raise ScenarioError(f"{where}.coeffs needs one row per generator ({m})")
        width = None
        coeffs = []
        for p, row in enumerate(rows):
            row = _typed(row, list, f"{where}.coeffs[{p}]")
            vals = [_typed(v, float, f"{where}.coeffs[{p}]") for v in row]
            if width is None:
                width = len(vals)
            if len(vals) != width or width == 0:
                raise ScenarioError(f"{where}.coeffs rows must share one non-zero length")
            coeffs.append(vals)
    center = _get(d, "center", int, 0, where)
    if not 0 <= center < center_max:
        raise ScenarioError(f"{where}.center index out of range")
    return {"kind": kind, "coeffs": coeffs, "center": center}


def _center_count(group: GroupSpec) -> int:
    if group.family == "su":
        return group.n
    return 1 if group.n % 2 else 2


def _catalog_size(group: GroupSpec, variant: str) -> int:
    fam, n = group.family, group.n
    if variant == "standard":
        variant = {"so": "standard", "sl": "chevalley", "su": "compact"}[fam]
    if fam == "so":
        return n * (n - 1) // 2
    if fam == "sl":
        return 3 if variant in ("A", "A'") else n * (n - 1) // 2 + n * (n - 1)
    pairs = n * (n - 1) // 2
    return 2 * pairs if variant == "compact-pair" else 3 * pairs


def parse_scenario(text: str, command: str | None = None, seed: int | None = None) -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"TOML syntax error: {exc}") from None
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ScenarioError(f"unknown top-level keys: {sorted(unknown)}")
    for name, keys in _SECTIONS.items():
        if keys is None or name not in raw:
            continue
        if not isinstance(raw[name], dict):
            raise ScenarioError(f"[{name}] must be a table")
        extra = set(raw[name]) - keys
        if extra:
            raise ScenarioError(f"unknown keys in [{name}]: {sorted(extra)}")

    file_cmd = _get(raw, "command", str, None, "scenario")
    cmd = command or file_cmd
    if cmd not in COMMANDS:
        raise ScenarioError(f"command must be one of {list(COMMANDS)}")
    if file_cmd is not None and command is not None and file_cmd != command:
        raise ScenarioError(f"scenario is for {file_cmd!r}, not {command!r}")
    file_seed = _get(raw, "seed", int, 0, "scenario")
    seed = file_seed if seed is None else seed
    if not 0 <= seed < 2**64:
        raise ScenarioError("seed must be an unsigned 64-bit integer")

    if "group" not in raw and cmd != "sphere":
        raise ScenarioError("missing [group]")
    group = _group(raw.get("group", {"family": "so", "n": 3}))
    m = _catalog_size(group, group.variant)

    needs_grid = cmd in ("simulate", "synthesize", "observe", "sphere")
    grid = _grid(raw["grid"]) if "grid" in raw else None
    if needs_grid and grid is None:
        raise ScenarioError("missing [grid]")

    params = raw.get("params", {})
    rho = tuple(_typed(t, str, "params.rho") for t in _get(params, "rho", list, ["sigma"], "params"))
    if not rho:
        raise ScenarioError("params.rho must not be empty")
    for t in rho:
        try:
            fn = parse_expression(t)
        except ExpressionError as exc:
            raise ScenarioError(str(exc)) from None
        if fn.needs_positive and grid is not None and grid.a <= 0:
            raise ScenarioError(f"params.rho {t!r} needs a positive interval")
    designated = _get(params, "designated", int, 0, "params")
    if not 0 <= designated < len(rho):
        raise ScenarioError("params.designated out of range")

    outputs = raw.get("outputs", {})
    out_variant = _get(outputs, "variant", str, "standard", "outputs")
    if out_variant not in CATALOG_VARIANTS[group.family] + ("standard",):
        raise ScenarioError(f"outputs.variant {out_variant!r} is unknown")
    if out_variant == "compact-pair":
        raise ScenarioError("outputs.variant must span the algebra; compact-pair does not")
    orientation = _get(outputs, "orientation", str, "left", "outputs")
    if orientation not in ("left", "right"):
        raise ScenarioError("outputs.orientation must be 'left' or 'right'")

    control = None
    if cmd in ("simulate", "sphere"):
        if "control" not in raw:
            raise ScenarioError("missing [control]")
        m_ctrl = group.n * (group.n - 1) // 2 if cmd == "sphere" else m
        control = _control(raw["control"], m_ctrl, len(rho))

    centers = _center_count(group)
    init = _profile_spec(raw.get("init", {}), "init", m, centers)

    sec = dict(raw.get(cmd, {}))
    section = _section(cmd, sec, group, m, centers)

    tol = raw.get("tolerances", {})
    tolerances = {
        "closure": _positive(_get(tol, "closure", float, 1e-9, "tolerances"), "tolerances.closure"),
        "projective": _positive(_get(tol, "projective", float, 1e-9, "tolerances"), "tolerances.projective"),
        "group": _positive(_get(tol, "group", float, 1e-8, "tolerances"), "tolerances.group"),
    }
    return Scenario(cmd, seed, group, grid, rho, designated,
                    {"variant": out_variant, "orientation": orientation},
                    control, init, section, tolerances, raw)


def _section(cmd: str, d: dict, group: GroupSpec, m: int, centers: int) -> dict:
    w = cmd
    if cmd == "verify":
        if _get(d, "orientation", str, "left", w) not in ("left", "right"):
            raise ScenarioError("verify.orientation must be 'left' or 'right'")
        return {
            "codistinguished": _get(d, "codistinguished", bool, False, w),
            "orientation": _get(d, "orientation", str, "left", w),
            "samples": _get(d, "samples", int, 100, w),
            "pairs": _get(d, "pairs", int, 200, w),
            "tol": _positive(_get(d, "tol", float, 1e-6, w), "verify.tol"),
            "relation_tol": _positive(_get(d, "relation_tol", float, 1e-10, w), "verify.relation_tol"),
        }
    if cmd == "closure":
        subset = [_typed(v, int, "closure.subset") for v in _get(d, "subset", list, [], w)]
        targets = [_typed(v, int, "closure.targets") for v in _get(d, "targets", list, [], w)]
        if any(not 0 <= v < m for v in subset + targets):
            raise ScenarioError("closure.subset/targets index out of range")
        if len(set(subset)) != len(subset):
            raise ScenarioError("closure.subset has duplicates")
        max_depth = _get(d, "max_depth", int, 6, w)
        ind = _get(d, "indicator_depth", int, 9, w)
        if not 1 <= max_depth <= 12 or not 1 <= ind <= 12:
            raise ScenarioError("closure depths must lie in [1, 12]")
        return {"subset": subset, "targets": targets, "max_depth": max_depth, "indicator_depth": ind}
    if cmd == "simulate":
        cc = _get(d, "compare_center", int, 0, w)
        if not 0 <= cc < centers:
            raise ScenarioError("simulate.compare_center index out of range")
        stride = _get(d, "stride", int, 1, w)
        if stride < 1:
            raise ScenarioError("simulate.stride must be at least 1")
        return {
            "compare_center": cc,
            "tol_grp": _positive(_get(d, "tol_grp", float, 1e-9, w), "simulate.tol_grp"),
            "center_tol": _positive(_get(d, "center_tol", float, 1e-12, w), "simulate.center_tol"),
            "stride": stride,
        }
    if cmd == "synthesize":
        terms = []
        for p, term in enumerate(_need(d, "terms", list, w)):
            if not isinstance(term, list) or len(term) != 2:
                raise ScenarioError(f"synthesize.terms[{p}] must be [generator index, expression]")
            i = _typed(term[0], int, f"synthesize.terms[{p}][0]")
            text = _typed(term[1], str, f"synthesize.terms[{p}][1]")
            if not 0 <= i < m:
                raise ScenarioError(f"synthesize.terms[{p}] generator index out of range")
            try:
                parse_expression(text)
            except ExpressionError as exc:
                raise ScenarioError(str(exc)) from None
            terms.append((i, text))
        if not terms:
            raise ScenarioError("synthesize.terms must not be empty")
        T = _positive(_need(d, "T", float, w), "synthesize.T")
        dt = _positive(_need(d, "dt", float, w), "synthesize.dt")
        if abs(round(T / dt) * dt - T) > 1e-12 * max(1.0, T):
            raise ScenarioError("synthesize.dt must divide synthesize.T")
        degrees = [_typed(k, int, "synthesize.degrees") for k in _get(d, "degrees", list, [0, 2, 4, 6, 8], w)]
        if not degrees or any(not 0 <= k <= 12 for k in degrees):
            raise ScenarioError("synthesize.degrees must be integers in [0, 12]")
        return {
            "terms": terms, "T": T, "dt": dt, "degrees": sorted(set(degrees)),
            "delta_max": _get(d, "delta_max", float, None, w),
            "epsilon_max": _get(d, "epsilon_max", float, None, w),
        }
    if cmd == "observe":
        expect = _get(d, "expect", str, "any", w)
        if expect not in ("any", "separated", "indistinguishable"):
            raise ScenarioError("observe.expect must be any, separated or indistinguishable")
        k_obs = _get(d, "K_obs", int, 4, w)
        if not 0 <= k_obs <= 8:
            raise ScenarioError("observe.K_obs must lie in [0, 8]")
        out = {
            "K_obs": k_obs,
            "tol": _positive(_get(d, "tol", float, 1e-10, w), "observe.tol"),
            "profile1": _profile_spec(d.get("profile1", {}), "observe.profile1", m, centers),
            "profile2": _profile_spec(d["profile2"], "observe.profile2", m, centers) if "profile2" in d else None,
            "expect": expect,
            "reconstruct": _get(d, "reconstruct", bool, False, w),
            "d_max": _get(d, "d_max", int, 1, w),
            "starts": _get(d, "starts", int, 8, w),
            "distance_max": _get(d, "distance_max", float, 1e-6, w),
        }
        if not 0 <= out["d_max"] <= 4 or not 1 <= out["starts"] <= 64:
            raise ScenarioError("observe.d_max must lie in [0, 4] and observe.starts in [1, 64]")
        return out
    if cmd == "sphere":
        if group.family != "so" or group.n != 3:
            raise ScenarioError("sphere scenarios use SO(3) acting on S^2")
        stride = _get(d, "stride", int, 1, w)
        if stride < 1:
            raise ScenarioError("sphere.stride must be at least 1")
        return {
            "samples": _get(d, "samples", int, 100, w),
            "tol": _positive(_get(d, "tol", float, 1e-10, w), "sphere.tol"),
            "equivariance_tol": _positive(_get(d, "equivariance_tol", float, 1e-7, w), "sphere.equivariance_tol"),
            "stride": stride,
        }
    return {}


def load_scenario(path, command: str | None = None, seed: int | None = None) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    return parse_scenario(text, command, seed)
