"""TOML configuration for federation participants.

All parties must share the same tessellation and distance threshold; both
live in the ``[grid]`` and ``[query]`` sections of one config file that every
participant reads. Owner-only settings (database, index, listen address,
partitioning, cost model) sit in their own sections and are ignored by
clients. The listen address can be overridden with the FEDTRAJ_LISTEN
environment variable, which beats the file.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10 interpreters
    import tomli as tomllib

from .errors import ConfigurationError
from .grid import GridSpec
from .partition import PartitionParams
from .secure import CostModel

__all__ = ["OwnerConfig", "load_owner_config", "load_federation", "parse_listen"]

LISTEN_ENV = "FEDTRAJ_LISTEN"


@dataclass(frozen=True)
class OwnerConfig:
    """Everything a data-owner process needs to serve queries."""

    database: Path
    index: Path
    spec: GridSpec
    tau: float
    listen: tuple[str, int]
    partition: PartitionParams
    cost: CostModel


def parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise ConfigurationError(f"listen address must be host:port, got {value!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigurationError(f"listen port is not an integer in {value!r}") from None


def _read(path) -> dict:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid TOML: {e}") from None


def _section(data: dict, name: str, path) -> dict:
    try:
        sec = data[name]
    except KeyError:
        raise ConfigurationError(f"config {path} is missing its [{name}] section") from None
    if not isinstance(sec, dict):
        raise ConfigurationError(f"[{name}] in {path} must be a table")
    return sec


def _get(sec: dict, name: str, key: str, path, default=None):
    if key in sec:
        return sec[key]
    if default is not None:
        return default
    raise ConfigurationError(f"config {path} is missing {name}.{key}")


def load_federation(path) -> tuple[GridSpec, float]:
    """The federation-wide constants: tessellation and distance threshold."""
    data = _read(path)
    grid = _section(data, "grid", path)
    query = _section(data, "query", path)
    spec = GridSpec(
        origin_x=float(_get(grid, "grid", "origin_x", path, default=0.0)),
        origin_y=float(_get(grid, "grid", "origin_y", path, default=0.0)),
        cell_side=float(_get(grid, "grid", "cell_side", path)),
    )
    tau = float(_get(query, "query", "tau", path))
    if not tau > 0:
        raise ConfigurationError(f"query.tau must be > 0, got {tau}")
    return spec, tau


def load_owner_config(path) -> OwnerConfig:
    """Full owner-side configuration, honoring the listen-address override."""
    spec, tau = load_federation(path)
    data = _read(path)
    owner = _section(data, "owner", path)
    part = data.get("partition", {})
    secure = data.get("secure", {})

    database = Path(str(_get(owner, "owner", "database", path)))
    index_default = str(database) + ".ftmi"
    index = Path(str(_get(owner, "owner", "index", path, default=index_default)))

    listen_value = os.environ.get(
        LISTEN_ENV, _get(owner, "owner", "listen", path, default="127.0.0.1:7601")
    )

    return OwnerConfig(
        database=database,
        index=index,
        spec=spec,
        tau=tau,
        listen=parse_listen(str(listen_value)),
        partition=PartitionParams(alpha=float(part.get("alpha", 0.5))),
        cost=CostModel(bytes_per_comparison=int(secure.get("bytes_per_comparison", 64))),
    )
