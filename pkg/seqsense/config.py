"""
Experiment configuration: INI file -> validated :class:`ExperimentConfig`.

``configparser`` tokenises the file, pydantic validates it. Distribution laws
are written as ``name(key=value, ...)`` and may nest, e.g.::

    emi = alpha_stable(alpha=1.8, scale=1.0)
    noise = sum(parts=[gaussian(mean=0, variance=5), alpha_stable(alpha=1.8)])
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Dict, Iterable, List, Optional, Tuple, Union

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PlainSerializer, ValidationError, field_validator

from .distributions import DistributionSpec, build
from .errors import ConfigurationError
from .seqtests import TestKind

_TOKEN = re.compile(
    r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|inf))"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[()\[\],=]))"
)


class _Parser:
    """Recursive-descent parser for the distribution/literal grammar."""

    def __init__(self, text: str):
        self.text = text
        self.tokens: List[Tuple[str, str]] = []
        pos = 0
        stripped = text.rstrip()
        while pos < len(stripped):
            m = _TOKEN.match(stripped, pos)
            if not m or m.end() == pos:
                raise ConfigurationError(f"unexpected character at offset {pos} in '{text}'")
            kind = m.lastgroup or "op"
            self.tokens.append((kind, m.group(kind)))
            pos = m.end()
        self.i = 0

    def peek(self) -> Optional[Tuple[str, str]]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self, value: Optional[str] = None) -> Tuple[str, str]:
        tok = self.peek()
        if tok is None or (value is not None and tok[1] != value):
            want = f"'{value}'" if value else "a token"
            raise ConfigurationError(f"expected {want} in '{self.text}'")
        self.i += 1
        return tok

    def value(self) -> Any:
        tok = self.peek()
        if tok is None:
            raise ConfigurationError(f"unexpected end of '{self.text}'")
        kind, text = tok
        if kind == "num":
            self.i += 1
            return float(text)
        if text == "[":
            return self.sequence("[", "]", list)
        if text == "(":
            return self.sequence("(", ")", tuple)
        if kind == "name":
            self.i += 1
            nxt = self.peek()
            if nxt is not None and nxt[1] == "(":
                return self.call(text)
            if text in ("true", "false"):
                return text == "true"
            if text == "none":
                return None
            return text
        raise ConfigurationError(f"unexpected '{text}' in '{self.text}'")

    def sequence(self, open_: str, close: str, kind: type) -> Any:
        self.take(open_)
        items = []
        while self.peek() is not None and self.peek()[1] != close:
            items.append(self.value())
            if self.peek() is not None and self.peek()[1] == ",":
                self.take(",")
        self.take(close)
        return kind(items)

    def call(self, name: str) -> DistributionSpec:
        self.take("(")
        params: Dict[str, Any] = {}
        while self.peek() is not None and self.peek()[1] != ")":
            key = self.take()[1]
            self.take("=")
            params[key] = self.value()
            if self.peek() is not None and self.peek()[1] == ",":
                self.take(",")
        self.take(")")
        return build(name, **params)

    def parse(self) -> Any:
        result = self.value()
        if self.peek() is not None:
            raise ConfigurationError(f"trailing input after '{self.text}'")
        return result


def parse_literal(text: str) -> Any:
    return _Parser(text).parse()


def parse_distribution(value: Any) -> Any:
    if isinstance(value, DistributionSpec) or value is None:
        return value
    result = parse_literal(str(value))
    if result is not None and not isinstance(result, DistributionSpec):
        raise ConfigurationError(f"'{value}' is not a distribution")
    return result


def _optional_distribution(value: Any) -> Any:
    if isinstance(value, str) and value.strip().lower() in ("", "none"):
        return None
    return parse_distribution(value)


def _float_list(value: Any) -> Any:
    if isinstance(value, str):
        return [float(v) for v in value.replace(";", ",").split(",") if v.strip()]
    return value


def _alphabet(value: Any) -> Any:
    if isinstance(value, str):
        value = parse_literal(value)
    return tuple(tuple(v) for v in value)


def _auto_or_float(value: Any) -> Any:
    if isinstance(value, str) and value.strip().lower() == "auto":
        return None
    return value


Distribution = Annotated[DistributionSpec, BeforeValidator(parse_distribution), PlainSerializer(lambda d: d.to_text())]
OptionalDistribution = Annotated[
    Optional[DistributionSpec],
    BeforeValidator(_optional_distribution),
    PlainSerializer(lambda d: "none" if d is None else d.to_text()),
]
Center = Annotated[Optional[float], BeforeValidator(_auto_or_float)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True, use_enum_values=True)


class SystemSection(_Section):
    L: int = Field(ge=1)
    b0: float = Field(1.0, gt=0)
    b1: float = Field(1.0, gt=0)
    M: int = Field(1, ge=1)
    p: float = Field(2.0, gt=0)
    delta: float = Field(0.0, ge=0)
    partial_coherence: bool = False
    mode: str = Field("distributed", pattern="^(distributed|single)$")
    sensing: str = Field("energy", pattern="^(energy|mean)$")
    max_slots: int = Field(1_000_000, ge=1)


class NodeSection(_Section):
    """Per-node settings; ``[node]`` fills defaults, ``[node.<l>]`` overrides."""

    test: TestKind = TestKind.M2_RANDOM_WALK
    mu0: Center = None
    mu1: Center = None
    K: float = Field(5.0, gt=0)
    K1: float = Field(200.0, gt=0)
    min_samples: Optional[int] = Field(None, ge=1)
    noise: Distribution = Field(default_factory=lambda: build("gaussian"))
    emi: OptionalDistribution = None
    outlier_epsilon: float = Field(0.0, ge=0, le=1)
    outlier_law: Distribution = Field(default_factory=lambda: build("gaussian", mean=0.0, variance=20.0))
    outlier_under: str = Field("h1", pattern="^(h1|both)$")
    alphabet: Annotated[Tuple[Tuple[float, float], ...], BeforeValidator(_alphabet)] = ((-1.0, 0.5), (1.0, 0.5))
    amplitude: float = 1.0
    amplitude_h0: float = 0.0
    fading: str = Field("none", pattern="^(none|slow|fast)$")
    multipath: Distribution = Field(default_factory=lambda: build("rayleigh", scale=1.0))
    shadow: OptionalDistribution = Field(default_factory=lambda: build("lognormal", mean=0.0, variance=0.36))
    delta: Optional[float] = Field(None, ge=0)


class FcSection(_Section):
    test: TestKind = TestKind.M2_RANDOM_WALK
    I: float = Field(1.0, gt=0)
    K: float = Field(5.0, gt=0)
    K1: float = Field(200.0, gt=0)
    noise: Distribution = Field(default_factory=lambda: build("gaussian", mean=0.0, variance=5.0))
    emi: OptionalDistribution = None
    outlier_epsilon: float = Field(0.0, ge=0, le=1)
    outlier_law: Distribution = Field(default_factory=lambda: build("gaussian", mean=0.0, variance=20.0))
    outlier_under: str = Field("both", pattern="^(h1|both)$")
    mac_fading: str = Field("none", pattern="^(none|slow|fast)$")
    mac_multipath: Distribution = Field(default_factory=lambda: build("rayleigh", scale=1.0))
    mac_shadow: OptionalDistribution = None


class SweepSection(_Section):
    c: Annotated[List[float], BeforeValidator(_float_list)] = Field(
        default_factory=lambda: [math.exp(-t) for t in (2.0, 4.0, 6.0)]
    )
    trials: int = Field(10_000, ge=1)
    seed: int = Field(1, ge=0, lt=2 ** 64)
    prerun: int = Field(100_000, ge=10_000)
    max_truncated_fraction: float = Field(0.0, ge=0, le=1)
    target_pfa: float = Field(0.05, gt=0, le=0.5)
    target_pmd: float = Field(0.05, gt=0, le=0.5)
    approx_terms: int = Field(200, ge=1)

    @field_validator("c")
    @classmethod
    def _c_in_range(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("at least one sweep point is required")
        for c in value:
            if not 0 < c <= 1:
                raise ValueError(f"threshold scale c must be in (0, 1], got {c}")
        return value


class OutputSection(_Section):
    csv: str = "curve.csv"
    analysis_csv: str = "analysis.csv"
    workspace: str = "workspaces"


class ExperimentConfig(_Section):
    system: SystemSection
    node: NodeSection = Field(default_factory=NodeSection)
    nodes: Dict[int, Dict[str, Any]] = Field(default_factory=dict)
    fc: FcSection = Field(default_factory=FcSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @field_validator("nodes")
    @classmethod
    def _overrides_are_valid(cls, value: Dict[int, Dict[str, Any]]) -> Dict[int, Dict[str, Any]]:
        unknown = set().union(*(v.keys() for v in value.values())) - set(NodeSection.model_fields) if value else set()
        if unknown:
            raise ValueError(f"unknown node keys: {', '.join(sorted(unknown))}")
        return value

    def node_settings(self, l: int) -> NodeSection:
        """Settings of node ``l`` (1-based) with overrides applied."""
        base = self.node.model_dump()
        base.update(self.nodes.get(l, {}))
        return NodeSection.model_validate(base)

    def to_ini(self) -> str:
        return dump_ini(self)

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode("utf-8")).hexdigest()


SECTION_ORDER = ("system", "node", "fc", "sweep", "output")


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, DistributionSpec):
        return value.to_text()
    if isinstance(value, list):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, tuple):
        return "(" + ", ".join(_format(v) for v in value) + ")"
    if value is None:
        return "none"
    return str(value)


def _section_lines(name: str, values: Dict[str, Any], overrides: Iterable[str] = ()) -> List[str]:
    lines = [f"[{name}]"]
    for key, value in values.items():
        if value is None and key not in ("emi", "shadow", "mac_shadow"):
            if key in ("mu0", "mu1"):
                lines.append(f"{key} = auto")
            continue
        lines.append(f"{key} = {_format(value)}")
    return lines + [""]


def dump_ini(config: ExperimentConfig) -> str:
    """Canonical INI text; parsing it gives back an equal config."""
    lines: List[str] = []
    for name in SECTION_ORDER:
        section = getattr(config, name)
        lines += _section_lines(name, {k: getattr(section, k) for k in type(section).model_fields})
        if name == "node":
            for l in sorted(config.nodes):
                override = NodeSection.model_validate({**config.node.model_dump(), **config.nodes[l]})
                lines += _section_lines(f"node.{l}", {k: getattr(override, k) for k in sorted(config.nodes[l])})
    return "\n".join(lines)


def _line_index(text: str) -> Dict[Tuple[str, str], int]:
    index: Dict[Tuple[str, str], int] = {}
    section = ""
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            index[(section, "")] = number
        elif "=" in stripped and not stripped.startswith(("#", ";")):
            index[(section, stripped.split("=", 1)[0].strip())] = number
    return index


def _describe(exc: ValidationError, lines: Dict[Tuple[str, str], int]) -> str:
    messages = []
    for err in exc.errors():
        loc = [str(p) for p in err["loc"]]
        if loc and loc[0] == "nodes" and len(loc) > 1:
            section, key = f"node.{loc[1]}", ".".join(loc[2:])
        else:
            section, key = (loc[0] if loc else ""), ".".join(loc[1:])
        where = f"{section}.{key}" if key else section
        line = lines.get((section, key)) or lines.get((section, ""))
        prefix = f"line {line}: " if line else ""
        messages.append(f"{prefix}{where}: {err['msg']}")
    return "; ".join(messages)


def _node_index(section: str, origin: str) -> int:
    try:
        return int(section.split(".", 1)[1])
    except ValueError:
        raise ConfigurationError(f"bad node {origin} '{section}'; expected node.<index>") from None


def parse_ini(text: str, overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # type: ignore[assignment]
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None

    raw: Dict[str, Any] = {"nodes": {}}
    for section in parser.sections():
        values = dict(parser.items(section))
        if section.startswith("node."):
            raw["nodes"][_node_index(section, "section")] = values
        else:
            raw[section] = values
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigurationError(f"override '{dotted}' must look like section.key")
        section, key = dotted.rsplit(".", 1)
        if section.startswith("node."):
            raw["nodes"].setdefault(_node_index(section, "override"), {})[key] = value
        else:
            raw.setdefault(section, {})[key] = value

    try:
        config = ExperimentConfig.model_validate(raw)
        for l in config.nodes:
            if not 1 <= l <= config.system.L:
                raise ConfigurationError(f"[node.{l}] is outside 1..L={config.system.L}")
            config.node_settings(l)
    except ValidationError as exc:
        raise ConfigurationError(_describe(exc, _line_index(text))) from None
    return config


def load_config(path: Union[str, Path], overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_ini(text, overrides)
