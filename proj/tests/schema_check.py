#!/usr/bin/env python3
"""Validates every JSON document the CLI emits, plus the fixture GT and name maps."""

import argparse
import json
import subprocess
import sys
from pathlib import Path

from jsonschema import Draft202012Validator
from referencing import Registry, Resource


def load_schemas(root):
    schemas = {p.name: json.loads(p.read_text()) for p in sorted(root.glob("*.schema.json"))}
    registry = Registry().with_resources(
        (s["$id"], Resource.from_contents(s)) for s in schemas.values()
    )
    return {name: Draft202012Validator(s, registry=registry) for name, s in schemas.items()}


def run(cli, args):
    proc = subprocess.run([cli, *args], capture_output=True, text=True, timeout=60)
    if proc.returncode != 0:
        raise RuntimeError(f"{' '.join(args)} exited {proc.returncode}: {proc.stderr.strip()}")
    return json.loads(proc.stdout)


def targets(fixtures, crafted):
    for d in sorted(p for p in fixtures.iterdir() if (p / "bin").is_dir()):
        yield d.name, d / "bin" / d.name, [], d / "map.json", d / "gt.json"
    exe = crafted / "msvc_diamond.exe"
    if exe.exists():
        yield "msvc_diamond", exe, ["--config", str(crafted / "msvc_diamond.cfg")], crafted / "msvc_diamond.map.json", None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--schemas", type=Path, required=True)
    ap.add_argument("--fixtures", type=Path, required=True)
    ap.add_argument("--crafted", type=Path, required=True)
    args = ap.parse_args()

    v = load_schemas(args.schemas)
    failures = checked = 0

    def check(label, schema, doc):
        nonlocal failures, checked
        checked += 1
        errors = sorted(v[schema].iter_errors(doc), key=lambda e: list(e.path))
        for e in errors[:5]:
            print(f"FAIL {label} [{schema}] at /{'/'.join(map(str, e.path))}: {e.message}")
        failures += bool(errors)

    for name, binary, extra, names, gt in targets(args.fixtures, args.crafted):
        common = [str(binary), "--out", "json", "--map", str(names), *extra]
        try:
            check(f"{name} names", "namemap.schema.json", json.loads(names.read_text()))
            check(f"{name} scan", "report.schema.json", run(args.cli, ["scan", *common]))
            for sub in ("vtables", "vtts", "tree", "surface"):
                check(f"{name} {sub}", "subcommand.schema.json", run(args.cli, [sub, *common]))
            if gt is not None:
                check(f"{name} gt", "gt.schema.json", json.loads(gt.read_text()))
                check(f"{name} diff-gt", "scorecard.schema.json",
                      run(args.cli, ["diff-gt", *common, "--gt", str(gt)]))
        except (RuntimeError, json.JSONDecodeError, subprocess.TimeoutExpired) as e:
            print(f"FAIL {name}: {e}")
            failures += 1

    print(f"{checked} documents checked, {failures} failed")
    return 1 if failures or not checked else 0


if __name__ == "__main__":
    sys.exit(main())
