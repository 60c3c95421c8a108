"""Run configuration files, provenance digests and delimited outputs.

Configuration is plain ``key = value`` lines with dotted section keys::

    # constant kernel, monomers
    n = 8
    kernel.family = constant
    kernel.c = 1
    init.family = monodisperse
    init.size = 1
    integrator.t_end = 1
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from . import kernel as kern
from . import state as st
from .integrate import ADAPTIVE, SEMI_IMPLICIT, IntegratorConfig, TimeSeries, default_sample_times
from .state import ConfigurationError


class ConfigError(ConfigurationError):
    """One or more problems in a configuration file, each with its line number."""

    def __init__(self, errors: List[Tuple[int, str]]):
        self.errors = errors
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg for ln, msg in errors))


def _float(text):
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _int(text):
    return int(text)


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _str(text):
    if not text:
        raise ValueError("empty value")
    return text


def _float_list(text):
    return tuple(_float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _int_list(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _matrix(text):
    rows = [r for r in text.split(";") if r.strip()]
    return tuple(tuple(_float(x) for x in r.replace(",", " ").split()) for r in rows)


def _samples(text):
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) == 1 and "." not in parts[0] and "e" not in parts[0].lower():
        return int(parts[0])
    return tuple(_float(p) for p in parts)


# key -> (parser, default); default REQUIRED means the key may be mandatory
REQUIRED = object()
SCHEMA: Dict[str, Tuple[Any, Any]] = {
    "n": (_int, REQUIRED),
    "seed": (_int, 0),
    "kernel.family": (_str, REQUIRED),
    "kernel.alpha": (_float, None),
    "kernel.scale": (_float, 1.0),
    "kernel.c": (_float, None),
    "kernel.A": (_float, None),
    "kernel.table": (_matrix, None),
    "init.family": (_str, REQUIRED),
    "init.size": (_int, None),
    "init.density": (_float, 1.0),
    "init.ratio": (_float, None),
    "init.p": (_float, None),
    "init.table": (_float_list, None),
    "integrator.method": (_str, ADAPTIVE),
    "integrator.abs_tol": (_float, 1e-10),
    "integrator.rel_tol": (_float, 1e-8),
    "integrator.t_end": (_float, REQUIRED),
    "integrator.samples": (_samples, 256),
    "integrator.dt_init": (_float, 1e-4),
    "integrator.dt_min": (_float, 1e-14),
    "integrator.dt_max": (_float, math.inf),
    "integrator.negativity_tol": (_float, 1e-12),
    "rhs.path": (_str, "auto"),
    "diagnostics.enabled": (_bool, True),
    "diagnostics.tail_r": (_int_list, (1, 4, 16)),
    "diagnostics.algebraic_states": (_int, 200),
    "diagnostics.w11_sizes": (_int_list, None),
    "output.series": (_str, None),
    "output.full": (_bool, False),
    "output.report": (_str, None),
}

KERNEL_NEEDS = {
    kern.CONSTANT: ("kernel.c",),
    kern.SEPARABLE_POWER: ("kernel.alpha",),
    kern.SEPARABLE_PLUS_CONSTANT: ("kernel.alpha", "kernel.c"),
    kern.SEPARABLE_PLUS_BOUNDED: ("kernel.alpha", "kernel.A"),
    kern.TABLE: ("kernel.table",),
}
INIT_NEEDS = {
    st.MONODISPERSE: ("init.size",),
    st.GEOMETRIC: ("init.ratio",),
    st.HEAVY_TAIL: ("init.p",),
    st.EXPLICIT: ("init.table",),
}


def _canonical(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_canonical(v) for v in value)
    if value is None:
        return ""
    return str(value)


@dataclass
class RunConfig:
    values: Dict[str, Any]
    lines: Dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        value = self.values.get(key)
        return default if value is None else value

    def digest(self) -> str:
        """sha256 over the sorted, canonicalised key/value pairs (defaults included)."""
        text = "\n".join(f"{k}={_canonical(v)}" for k, v in sorted(self.values.items()))
        return hashlib.sha256(text.encode()).hexdigest()

    @property
    def n(self) -> int:
        return self.values["n"]

    def kernel(self) -> kern.KernelSpec:
        v = self.values
        fam = v["kernel.family"]
        if fam == kern.CONSTANT:
            return kern.constant(v["kernel.c"])
        if fam == kern.SEPARABLE_POWER:
            return kern.separable_power(v["kernel.alpha"], v["kernel.scale"])
        if fam == kern.SEPARABLE_PLUS_CONSTANT:
            return kern.separable_plus_constant(v["kernel.alpha"], v["kernel.scale"], v["kernel.c"])
        if fam == kern.SEPARABLE_PLUS_BOUNDED:
            return kern.separable_plus_bounded(v["kernel.alpha"], v["kernel.scale"], v["kernel.A"])
        return kern.table(np.array(v["kernel.table"], dtype=float))

    def initial_data(self) -> st.InitialData:
        v = self.values
        fam = v["init.family"]
        if fam == st.MONODISPERSE:
            return st.monodisperse(v["init.size"], v["init.density"])
        if fam == st.GEOMETRIC:
            return st.geometric(v["init.ratio"], v["init.density"])
        if fam == st.HEAVY_TAIL:
            return st.heavy_tail(v["init.p"], v["init.density"])
        return st.explicit(v["init.table"])

    def sample_times(self) -> np.ndarray:
        samples = self.values["integrator.samples"]
        if isinstance(samples, int):
            return default_sample_times(self.values["integrator.t_end"], samples)
        return np.asarray(samples, dtype=float)

    def integrator(self) -> IntegratorConfig:
        v = self.values
        return IntegratorConfig(
            method=v["integrator.method"], abs_tol=v["integrator.abs_tol"],
            rel_tol=v["integrator.rel_tol"], dt_init=v["integrator.dt_init"],
            dt_min=v["integrator.dt_min"], dt_max=v["integrator.dt_max"],
            negativity_tol=v["integrator.negativity_tol"], t_end=v["integrator.t_end"],
            sample_times=self.sample_times(), rhs_path=v["rhs.path"])


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a configuration; raise ConfigError listing every problem."""
    errors: List[Tuple[int, str]] = []
    raw: Dict[str, Tuple[int, str]] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append((ln, f"expected 'key = value', got {body!r}"))
            continue
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            errors.append((ln, f"unknown key {key!r}"))
            continue
        if key in raw:
            errors.append((ln, f"duplicate key {key!r} (first set on line {raw[key][0]}, again on line {ln})"))
            continue
        raw[key] = (ln, value)

    values: Dict[str, Any] = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            ln, text_value = raw[key]
            try:
                values[key] = parser(text_value)
            except ValueError as exc:
                errors.append((ln, f"bad value for {key}: {text_value!r} ({exc})"))
        else:
            values[key] = None if default is REQUIRED else default

    for key, (_, default) in SCHEMA.items():
        if default is REQUIRED and key not in raw:
            errors.append((0, f"missing required key {key!r}"))

    def need(table, family_key):
        fam = values.get(family_key)
        if fam is None:
            return
        if fam not in table:
            errors.append((raw[family_key][0], f"unknown {family_key} {fam!r}; expected one of {', '.join(table)}"))
            return
        for k in table[fam]:
            if k not in raw:
                errors.append((raw[family_key][0], f"{family_key} = {fam} requires key {k!r}"))

    need(KERNEL_NEEDS, "kernel.family")
    need(INIT_NEEDS, "init.family")
    if values.get("integrator.method") not in (None, ADAPTIVE, SEMI_IMPLICIT):
        errors.append((raw["integrator.method"][0], f"integrator.method must be {ADAPTIVE} or {SEMI_IMPLICIT}"))
    if values.get("rhs.path") not in (None, "naive", "fast", "auto"):
        errors.append((raw["rhs.path"][0], "rhs.path must be naive, fast or auto"))
    if errors:
        raise ConfigError(errors)

    cfg = RunConfig(values, {k: ln for k, (ln, _) in raw.items()})
    # semantic checks delegated to the constructors
    for label, build in (("kernel", cfg.kernel), ("init", lambda: st.init_state(cfg.initial_data(), cfg.n)),
                         ("integrator", cfg.integrator)):
        try:
            build()
        except (ValueError, ConfigurationError) as exc:
            errors.append((0, f"{label}: {exc}"))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


# delimited outputs

MOMENT_HEADER = ("t", "M0", "Mhalf", "M1", "dissipation", "clamped_mass")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def density_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_density" + (path.suffix or ".csv"))


def write_series(series: TimeSeries, path, mode: str = "moments") -> List[Path]:
    """Write the moment table, and in ``full`` mode the density table beside it."""
    if mode not in ("moments", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    path = Path(path)
    diss = series.dissipation if series.dissipation is not None else np.full(len(series.times), math.nan)
    rows = [",".join(MOMENT_HEADER)]
    for k in range(len(series.times)):
        rows.append(",".join(_fmt(v) for v in (series.times[k], series.M0[k], series.Mhalf[k],
                                                 series.M1[k], diss[k], series.clamped_mass[k])))
    written = []
    try:
        path.write_text("\n".join(rows) + "\n")
        written.append(path)
        if mode == "full":
            if series.densities is None:
                raise ValueError("full mode needs density samples")
            n = series.densities.shape[1]
            dpath = density_path(path)
            drows = [",".join(["t"] + [f"f_{i}" for i in range(1, n + 1)])]
            for t, f in zip(series.times, series.densities):
                drows.append(",".join([_fmt(t)] + [_fmt(x) for x in f]))
            dpath.write_text("\n".join(drows) + "\n")
            written.append(dpath)
    except OSError as exc:
        raise OSError(f"cannot write series to {exc.filename or path}: {exc.strerror or exc}") from exc
    return written


def read_series(path, densities=None, omega=None) -> TimeSeries:
    """Inverse of ``write_series``; ``densities`` is the optional density-table path."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if tuple(header) != MOMENT_HEADER:
        raise ValueError(f"{path}: unexpected header {header}")
    dens = None
    if densities is not None:
        dd = np.loadtxt(densities, delimiter=",", skiprows=1, ndmin=2)
        if not np.array_equal(dd[:, 0], data[:, 0]):
            raise ValueError("density and moment tables have different sample times")
        dens = dd[:, 1:]
    diss = data[:, 4]
    return TimeSeries(times=data[:, 0], M0=data[:, 1], Mhalf=data[:, 2], M1=data[:, 3],
                      dissipation=None if np.all(np.isnan(diss)) else diss,
                      clamped_mass=data[:, 5], densities=dens, omega=omega)


@dataclass
class RunRecord:
    config_digest: str
    tool_version: str
    start: str
    end: str
    series: Optional[str]
    report: Optional[str]
    exit_status: int
    discarded_m0: float = 0.0
    step_stats: dict = field(default_factory=dict)

    def write(self, path):
        Path(path).write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "RunRecord":
        return cls(**json.loads(Path(path).read_text()))
