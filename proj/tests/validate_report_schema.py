#!/usr/bin/env python3
"""Train on a small config and validate metrics.json against the report schema.

Usage: validate_report_schema.py CLI SCHEMA CONFIG
"""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def main() -> int:
    cli, schema_path, config = sys.argv[1:4]
    schema = json.loads(Path(schema_path).read_text())
    with tempfile.TemporaryDirectory() as out:
        subprocess.run([cli, "train", "--config", config, "--out-dir", out],
                       check=True, stdout=subprocess.DEVNULL)
        report = json.loads((Path(out) / "metrics.json").read_text())
    jsonschema.validate(report, schema)
    if not report["rows"]:
        print("metrics.json has no rows", file=sys.stderr)
        return 1
    for row in report["rows"]:
        e = row["abs_error_kw"]
        if not e["min"] <= e["q1"] <= e["median"] <= e["q3"] <= e["max"]:
            print(f"quantiles out of order in {row}", file=sys.stderr)
            return 1
        if abs(e["mean"] - row["mae_kw"]) > 1e-9 * max(1.0, row["mae_kw"]):
            print(f"mean absolute error disagrees with mae_kw in {row}", file=sys.stderr)
            return 1
    print(f"metrics.json valid: {len(report['rows'])} rows")
    return 0


if __name__ == "__main__":
    sys.exit(main())
