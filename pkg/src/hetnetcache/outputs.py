import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from hetnetcache.config import SystemConfig
from hetnetcache.utils import compute_mapping_hash, format_value, get_logger, tool_version, utc_timestamp


# -------------------------------------------------------------------
# The Abstract Sink
# -------------------------------------------------------------------
class BaseResultSink:
    """
    Interface for a destination of run results. A sink owns one file in the
    output directory and reports its path so the manifest can list it.
    """
    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def write(self, payload: Any):
        """
        Persist the payload (rows for tabular sinks, a mapping for documents).
        """
        raise NotImplementedError


# -------------------------------------------------------------------
# CsvResultSink
# -------------------------------------------------------------------
class CsvResultSink(BaseResultSink):
    def __init__(self, path: Union[str, Path], fieldnames: Sequence[str]):
        super().__init__(path)
        self.fieldnames = list(fieldnames)

    def write(self, payload: Iterable[Mapping[str, Any]]):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with open(self.path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=self.fieldnames, lineterminator="\n")
            writer.writeheader()
            for row in payload:
                writer.writerow({key: format_value(row.get(key)) for key in self.fieldnames})
                count += 1
        get_logger(__name__).info("Wrote %d rows to %s", count, self.path)


# -------------------------------------------------------------------
# JsonResultSink
# -------------------------------------------------------------------
def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "value") and not isinstance(value, (int, float, str, bool)):
        return value.value
    if isinstance(value, float) and value != value:
        return None
    return value


class JsonResultSink(BaseResultSink):
    def write(self, payload: Mapping[str, Any]):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(_jsonable(payload), f, indent=2, sort_keys=False)
            f.write("\n")
        get_logger(__name__).info("Wrote %s", self.path)


# -------------------------------------------------------------------
# Manifest
# -------------------------------------------------------------------
def config_hash(cfg: SystemConfig) -> str:
    """Hash of every configuration value, independent of field order."""
    return compute_mapping_hash(cfg.as_flat_dict())


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    tool_version: str = field(default_factory=tool_version)
    started_at: str = field(default_factory=utc_timestamp)
    finished_at: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    parameters: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def start(cls, command: str, cfg: SystemConfig, seed: int, **parameters) -> "RunManifest":
        return cls(command=command, config_hash=config_hash(cfg), seed=seed, parameters=parameters)

    def record(self, sink: BaseResultSink):
        self.outputs.append(sink.path.name)

    def finish(self, out_dir: Union[str, Path]) -> Path:
        self.finished_at = utc_timestamp()
        sink = JsonResultSink(Path(out_dir) / "manifest.json")
        sink.write(asdict(self))
        return sink.path
