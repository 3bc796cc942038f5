"""JSON serialization shared by every audit/quality report."""

import dataclasses
import json

import numpy as np


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        # JSON has no inf/nan
        return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


class Report:
    """Mixin for report dataclasses. REPORT_NAME is the stable top-level key."""

    REPORT_NAME = "NOT SET"

    def to_dict(self):
        return {f.name: _plain(getattr(self, f.name)) for f in dataclasses.fields(self)}

    def to_json(self, **extra):
        """{REPORT_NAME: fields, **extra} with sorted keys, so equal reports give equal text."""
        doc = {self.REPORT_NAME: self.to_dict()}
        doc.update(_plain(extra))
        return json.dumps(doc, sort_keys=True, indent=2)

    def write(self, path, **extra):
        with open(path, "w") as f:
            f.write(self.to_json(**extra) + "\n")
