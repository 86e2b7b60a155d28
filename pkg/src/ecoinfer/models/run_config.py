from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class RunConfig:
    """Resolved configuration of one CLI run. Serialized next to its outputs."""
    subcommand: str
    inputs: dict[str, str] = field(default_factory=dict)
    method: str | None = None
    options: dict = field(default_factory=dict)
    basis: str | None = None
    seed: int | None = None
    output_dir: Path | None = None
    output_format: str = "csv"

    def to_dict(self) -> dict:
        """Everything except the output directory, so reruns elsewhere are byte-identical."""
        data = asdict(self)
        data.pop("output_dir")
        return data

    def to_json(self) -> str:
        """The run record as written to disk, hash included."""
        return json.dumps({**self.to_dict(), "config_hash": self.config_hash}, sort_keys=True, indent=2, default=str)

    @property
    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
