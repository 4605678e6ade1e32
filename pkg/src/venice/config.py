"""Run configuration: YAML loading with line-numbered errors, presets and workload sources."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .flash import PRESETS, FlashGeometry, FlashTimingConfig, GeometryError
from .ftl import GcConfig
from .interconnect import Arch, parse_arch
from .metrics import PowerModel
from .routing import RoutingMode
from .ssd import IoRequest, SimConfig, requests_from_records
from .workload import SyntheticSpec, TraceRecord, generate_synthetic, mix_streams, parse_trace

CONFIG_DIR_ENV = "VENICE_CONFIG_DIR"
DEFAULT_CONFIG_NAME = "venice.yaml"
FORMATS = ("csv", "json", "latency-log", "cdf")
PRESET_FILES = {"performance-optimized": "performance.yaml", "cost-optimized": "cost.yaml"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<config>") -> None:
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class _Map(dict):
    """A mapping that remembers the 1-based source line of each key."""

    def __init__(self, *args: Any) -> None:
        super().__init__(*args)
        self.line: Optional[int] = None
        self.lines: dict = {}


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_map(loader: _LineLoader, node: yaml.MappingNode) -> _Map:
    m = _Map()
    m.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in m:
            raise ConfigError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
        m[key] = loader.construct_object(value_node, deep=True)
        m.lines[key] = key_node.start_mark.line + 1
    return m


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)


def _line(m: Any, key: Optional[str] = None) -> Optional[int]:
    if isinstance(m, _Map):
        return m.lines.get(key, m.line) if key is not None else m.line
    return None


def load_yaml(text: str, source: str = "<config>") -> dict:
    try:
        data = yaml.load(text, Loader=_LineLoader)
    except ConfigError as e:
        raise ConfigError(str(e).split(": ", 1)[1], e.line, source) from None
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}",
                          mark.line + 1 if mark else None, source) from None
    if data is None:
        return _Map()
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", 1, source)
    return data


@dataclass
class WorkloadSource:
    trace: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    mix: list["WorkloadSource"] = field(default_factory=list)
    max_malformed_fraction: float = 0.01

    def kind(self) -> str:
        if self.trace is not None:
            return "trace"
        if self.synthetic is not None:
            return "synthetic"
        return "mix"

    def records(self, base_dir: Path = Path(".")) -> list[TraceRecord]:
        if self.trace is not None:
            p = Path(self.trace)
            if not p.is_absolute():
                p = base_dir / p
            return parse_trace(p, self.max_malformed_fraction, stream=Path(self.trace).stem).records
        if self.synthetic is not None:
            return generate_synthetic(self.synthetic)
        return mix_streams([w.records(base_dir) for w in self.mix])

    def to_dict(self) -> dict:
        if self.trace is not None:
            return {"trace": self.trace, "max_malformed_fraction": self.max_malformed_fraction}
        if self.synthetic is not None:
            return {"synthetic": asdict(self.synthetic)}
        return {"mix": [w.to_dict() for w in self.mix]}


@dataclass
class RunConfig:
    architecture: Arch = Arch.BASELINE
    preset: str = "performance-optimized"
    geometry: FlashGeometry = field(default_factory=lambda: PRESETS["performance-optimized"][0])
    timing: FlashTimingConfig = field(default_factory=lambda: PRESETS["performance-optimized"][1])
    routing: RoutingMode = RoutingMode.NONMINIMAL
    seed: int = 1
    gc: GcConfig = field(default_factory=GcConfig)
    overprovision: float = 0.07
    power: PowerModel = field(default_factory=PowerModel)
    network: dict = field(default_factory=dict)
    workload: WorkloadSource = field(default_factory=lambda: WorkloadSource(synthetic=SyntheticSpec()))
    output_format: str = "csv"
    output_path: Optional[str] = None
    check_invariants: bool = False
    base_dir: Path = field(default=Path("."), compare=False)

    def sim_config(self, arch: Optional[Arch] = None) -> SimConfig:
        return SimConfig(
            arch=arch or self.architecture,
            geometry=self.geometry,
            timing=self.timing,
            routing=self.routing,
            seed=self.seed,
            gc=self.gc,
            overprovision=self.overprovision,
            power=self.power,
            check_invariants=self.check_invariants,
            **self.network,
        )

    def requests(self) -> list[IoRequest]:
        return requests_from_records(self.workload.records(self.base_dir), self.geometry.page_size)

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture.value,
            "preset": self.preset,
            "geometry": asdict(self.geometry),
            "timing": asdict(self.timing),
            "routing": self.routing.value,
            "seed": self.seed,
            "gc": asdict(self.gc),
            "overprovision": self.overprovision,
            "power": asdict(self.power),
            "network": dict(self.network),
            "workload": self.workload.to_dict(),
            "output": {"format": self.output_format, "path": self.output_path},
            "check_invariants": self.check_invariants,
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


NETWORK_KEYS = {
    "hop_ns": int, "link_width": int, "link_lat": int, "cmd_bytes": int, "retry_limit": int,
    "visit_limit": int, "nossd_buffer_bytes": int, "nossd_switching": str,
}
TOP_KEYS = {"architecture", "preset", "geometry", "timing", "routing", "seed", "gc", "overprovision",
            "power", "network", "workload", "output", "check_invariants"}


class _Parser:
    def __init__(self, source: str) -> None:
        self.source = source

    def err(self, msg: str, m: Any = None, key: Optional[str] = None) -> ConfigError:
        return ConfigError(msg, _line(m, key), self.source)

    def mapping(self, m: Any, key: str, parent: Any) -> dict:
        if not isinstance(m, dict):
            raise self.err(f"{key!r} must be a mapping", parent, key)
        return m

    def check_keys(self, m: dict, allowed: set, where: str) -> None:
        for k in m:
            if k not in allowed:
                raise self.err(f"unknown key {k!r} in {where} (expected one of: {', '.join(sorted(allowed))})",
                               m, k)

    def typed(self, m: dict, key: str, typ: type, where: str) -> Any:
        v = m[key]
        if typ is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if typ is int and isinstance(v, bool) or not isinstance(v, typ):
            raise self.err(f"{where}.{key} must be {typ.__name__}, got {type(v).__name__}", m, key)
        return v

    def dataclass_section(self, m: Any, cls: type, base: Any, where: str, parent: Any) -> Any:
        m = self.mapping(m, where, parent)
        specs = {f.name: f for f in fields(cls)}
        self.check_keys(m, set(specs), where)
        values = {}
        for k in m:
            default = getattr(base, k)
            typ = type(default) if default is not None else str
            if isinstance(default, float):
                typ = float
            values[k] = self.typed(m, k, typ, where)
        try:
            return replace(base, **values)
        except (ValueError, GeometryError) as e:
            raise self.err(f"{where}: {e}", m) from None

    def workload(self, m: Any, parent: Any, where: str = "workload") -> WorkloadSource:
        m = self.mapping(m, where, parent)
        self.check_keys(m, {"trace", "synthetic", "mix", "max_malformed_fraction"}, where)
        sources = [k for k in ("trace", "synthetic", "mix") if k in m]
        if len(sources) != 1:
            raise self.err(f"{where} needs exactly one of trace, synthetic or mix (got {len(sources)})", m)
        src = WorkloadSource()
        if "max_malformed_fraction" in m:
            src.max_malformed_fraction = self.typed(m, "max_malformed_fraction", float, where)
        kind = sources[0]
        if kind == "trace":
            src.trace = self.typed(m, "trace", str, where)
        elif kind == "synthetic":
            src.synthetic = self.dataclass_section(m["synthetic"], SyntheticSpec, SyntheticSpec(),
                                                   f"{where}.synthetic", m)
        else:
            items = m["mix"]
            if not isinstance(items, list) or len(items) < 1:
                raise self.err(f"{where}.mix must be a non-empty list", m, "mix")
            src.mix = [self.workload(item, m, f"{where}.mix[{i}]") for i, item in enumerate(items)]
        return src


def parse_config(data: dict, source: str = "<config>", base_dir: Path = Path(".")) -> RunConfig:
    p = _Parser(source)
    p.check_keys(data, TOP_KEYS, "configuration")
    cfg = RunConfig(base_dir=base_dir)
    if "preset" in data:
        name = p.typed(data, "preset", str, "configuration")
        if name not in PRESETS and name != "custom":
            raise p.err(f"unknown preset {name!r} (performance-optimized, cost-optimized or custom)", data, "preset")
        cfg.preset = name
        if name in PRESETS:
            cfg.geometry, cfg.timing = PRESETS[name]
    if "architecture" in data:
        try:
            cfg.architecture = parse_arch(p.typed(data, "architecture", str, "configuration"))
        except ValueError:
            raise p.err(f"unknown architecture {data['architecture']!r} "
                        f"({', '.join(a.value for a in Arch)})", data, "architecture") from None
    if "geometry" in data:
        cfg.geometry = p.dataclass_section(data["geometry"], FlashGeometry, cfg.geometry, "geometry", data)
    if "timing" in data:
        cfg.timing = p.dataclass_section(data["timing"], FlashTimingConfig, cfg.timing, "timing", data)
    if "routing" in data:
        try:
            cfg.routing = RoutingMode(p.typed(data, "routing", str, "configuration"))
        except ValueError:
            raise p.err(f"unknown routing mode {data['routing']!r} "
                        f"({', '.join(r.value for r in RoutingMode)})", data, "routing") from None
    if "seed" in data:
        cfg.seed = p.typed(data, "seed", int, "configuration")
    if "gc" in data:
        cfg.gc = p.dataclass_section(data["gc"], GcConfig, cfg.gc, "gc", data)
    if "overprovision" in data:
        cfg.overprovision = p.typed(data, "overprovision", float, "configuration")
        if not 0.0 <= cfg.overprovision < 1.0:
            raise p.err("overprovision must lie in [0, 1)", data, "overprovision")
    if "power" in data:
        cfg.power = p.dataclass_section(data["power"], PowerModel, cfg.power, "power", data)
    if "network" in data:
        net = p.mapping(data["network"], "network", data)
        p.check_keys(net, set(NETWORK_KEYS), "network")
        cfg.network = {k: p.typed(net, k, NETWORK_KEYS[k], "network") for k in net}
    if "workload" in data:
        cfg.workload = p.workload(data["workload"], data)
    if "output" in data:
        out = p.mapping(data["output"], "output", data)
        p.check_keys(out, {"format", "path"}, "output")
        if "format" in out:
            fmt = p.typed(out, "format", str, "output")
            if fmt not in FORMATS:
                raise p.err(f"unsupported output format {fmt!r} ({', '.join(FORMATS)})", out, "format")
            cfg.output_format = fmt
        if out.get("path") is not None:
            cfg.output_path = p.typed(out, "path", str, "output")
    if "check_invariants" in data:
        cfg.check_invariants = p.typed(data, "check_invariants", bool, "configuration")
    validate(cfg, source, data)
    return cfg


def validate(cfg: RunConfig, source: str = "<config>", data: Optional[dict] = None) -> None:
    """Architecture-specific checks that need the assembled configuration."""
    line = _line(data, "architecture") if data is not None else None
    g = cfg.geometry
    if cfg.architecture is Arch.PNSSD and g.rows != g.chips_per_row:
        raise ConfigError(
            f"pnssd-grid requires a square flash array (N x N), got {g.rows} x {g.chips_per_row}",
            line, source,
        )
    if cfg.architecture.is_mesh and g.n_chips > 64:
        raise ConfigError(f"mesh designs address at most 64 chips with 6-bit ids, got {g.n_chips}", line, source)
    if cfg.architecture.is_mesh and g.rows > 8:
        raise ConfigError(f"mesh designs support at most 8 flash controllers, got {g.rows}", line, source)
    try:
        cfg.sim_config()
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), _line(data, "network") if data is not None else None, source) from None


def preset_path(name: str) -> Path:
    return Path(str(resources.files("venice") / "presets" / PRESET_FILES[name]))


def resolve_config_path(path: Optional[str]) -> Optional[Path]:
    """An explicit path, a name in ``$VENICE_CONFIG_DIR``, or a bundled preset name."""
    env_dir = os.environ.get(CONFIG_DIR_ENV)
    if path is None:
        if env_dir and (Path(env_dir) / DEFAULT_CONFIG_NAME).is_file():
            return Path(env_dir) / DEFAULT_CONFIG_NAME
        return None
    p = Path(path)
    if p.is_file() or p.is_absolute():
        return p
    if env_dir and (Path(env_dir) / p).is_file():
        return Path(env_dir) / p
    if path in PRESET_FILES:
        return preset_path(path)
    if path in PRESET_FILES.values():
        return preset_path(next(k for k, v in PRESET_FILES.items() if v == path))
    return p


def load_config(path: Optional[str | os.PathLike] = None, text: Optional[str] = None) -> RunConfig:
    if text is not None:
        return parse_config(load_yaml(text))
    resolved = resolve_config_path(None if path is None else str(path))
    if resolved is None:
        return RunConfig()
    try:
        body = resolved.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read configuration: {e.strerror}", None, str(resolved)) from None
    return parse_config(load_yaml(body, str(resolved)), str(resolved), resolved.parent)
