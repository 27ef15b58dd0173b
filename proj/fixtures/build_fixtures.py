#!/usr/bin/env python3
"""Build the golden fixture corpus.

For every fixture this produces, under fixtures/<name>/:
  bin/<name>             stripped binary (input for recovery)
  bin/<name>.unstripped  twin with symbols (source of the name map)
  class.dump             GCC class-hierarchy dump (-fdump-lang-class)
  gt.json                canonical ground truth converted from the dump
  map.json               primary address point -> class name
  layout.json            symbol-level facts: vtables, construction vtables, VTTs

Golden outputs are committed; the test suite never needs a toolchain.
Rerun with --check to compare a regeneration against the committed GT.
"""

import argparse
import json
import os
import re
import shutil
import subprocess
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))

FIXTURES = {
    "running_example": {"lang": "c++", "flags": ["-O0"]},
    "running_example_nopie": {"lang": "c++", "flags": ["-O0", "-no-pie", "-fno-pic"],
                              "src_from": "running_example"},
    "running_example_o2": {"lang": "c++", "flags": ["-O2"], "src_from": "running_example"},
    "chain1": {"lang": "c++", "flags": ["-O0"]},
    "chain2": {"lang": "c++", "flags": ["-O0"]},
    "chain3": {"lang": "c++", "flags": ["-O0"]},
    "all_virtual_bases": {"lang": "c++", "flags": ["-O0"]},
    "mixed_bases": {"lang": "c++", "flags": ["-O0"]},
    "single_inheritance": {"lang": "c++", "flags": ["-O0"]},
    "pure_c": {"lang": "c", "flags": ["-O0"]},
}

ENTRY_RE = re.compile(r"^(\S+) \((0x[0-9a-fx]+)\) (\d+)(.*)$")
VPTR_RE = re.compile(r"vptr=\(\(& (\S+)::(_ZTV\S+)\) \+ (\d+)\)")


def run(cmd, **kw):
    return subprocess.run(cmd, check=True, capture_output=True, text=True, **kw).stdout


def parse_class_dump(text):
    """Return {class: [entry, ...]}; entry = dict(name, offset, flags, depth, attrs)."""
    classes = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        m = re.match(r"^Class (\S+)$", lines[i])
        if not m:
            i += 1
            continue
        name = m.group(1)
        i += 1
        entries = []
        while i < len(lines) and lines[i].strip():
            line = lines[i]
            em = ENTRY_RE.match(line)
            if em and not line.startswith(" "):
                entries.append({"name": em.group(1), "offset": int(em.group(3)),
                                "flags": em.group(4).split(), "depth": None, "attrs": []})
            elif entries and line.startswith(" "):
                indent = len(line) - len(line.lstrip(" "))
                if indent >= 4:
                    e = entries[-1]
                    if e["depth"] is None:
                        e["depth"] = (indent - 4) // 2
                    e["attrs"].append(line.strip())
            i += 1
        classes[name] = entries
    return classes


def symbols(path):
    out = run(["nm", "-S", path])
    syms = {}
    for line in out.splitlines():
        parts = line.split()
        if len(parts) == 4:
            syms[parts[3]] = (int(parts[0], 16), int(parts[1], 16))
        elif len(parts) == 3:
            syms[parts[2]] = (int(parts[0], 16), 0)
    return syms


def build_gt(classes, syms):
    gt_classes, removed, name_map = [], [], {}
    polymorphic = {}
    for name, entries in classes.items():
        if not entries:
            continue
        attrs = " ".join(entries[0]["attrs"])
        vm = VPTR_RE.search(attrs)
        if vm:
            polymorphic[name] = (vm.group(2), int(vm.group(3)))
    present = set()
    for name, (sym, off) in polymorphic.items():
        if sym in syms:
            present.add(name)
            name_map["0x%x" % (syms[sym][0] + off)] = name
        else:
            removed.append(name)
    for name in sorted(present):
        vb, ib, db = set(), set(), set()
        for e in classes[name][1:]:
            if "alternative-path" in e["flags"] or e["depth"] is None:
                continue
            if e["name"] not in present:
                continue
            attrs = " ".join(e["attrs"])
            if "virtual" in e["flags"]:
                vb.add(e["name"])
            elif e["depth"] == 1:
                db.add(e["name"])
            if "subvttidx=" in attrs:
                ib.add(e["name"])
        gt_classes.append({
            "name": name,
            "vptr_hint": next(k for k, v in name_map.items() if v == name),
            "virtual_bases": sorted(vb),
            "intermediate_bases": sorted(ib),
            "direct_bases": sorted(db),
        })
    return {"classes": gt_classes, "removed": sorted(removed)}, dict(sorted(name_map.items()))


def build_layout(syms, name_map):
    rev = {v: k for k, v in name_map.items()}
    layout = {"vtables": {}, "construction_vtables": [], "vtts": []}
    for sym, (addr, size) in sorted(syms.items(), key=lambda kv: kv[1][0]):
        m = re.match(r"^_ZTV(\d+)(\w+)$", sym)
        if m and len(m.group(2)) == int(m.group(1)) and m.group(2) in rev:
            layout["vtables"][m.group(2)] = {"symbol": sym, "addr": "0x%x" % addr, "size": size,
                                             "address_point": rev[m.group(2)]}
        elif sym.startswith("_ZTC"):
            layout["construction_vtables"].append({"symbol": sym, "addr": "0x%x" % addr, "size": size})
        elif sym.startswith("_ZTT"):
            owner = re.match(r"^_ZTT(\d+)(\w+)$", sym)
            layout["vtts"].append({"symbol": sym, "owner": owner.group(2) if owner else sym,
                                   "addr": "0x%x" % addr, "entries": size // 8})
    return layout


def build_one(name, spec, outdir, toolchain):
    src_dir = os.path.join(HERE, spec.get("src_from", name), "src")
    src = os.path.join(src_dir, "main.c" if spec["lang"] == "c" else "main.cpp")
    fdir = os.path.join(outdir, name)
    bindir = os.path.join(fdir, "bin")
    os.makedirs(bindir, exist_ok=True)
    if "src_from" in spec:
        os.makedirs(os.path.join(fdir, "src"), exist_ok=True)
        shutil.copy(src, os.path.join(fdir, "src", os.path.basename(src)))
    cc = toolchain["cc"] if spec["lang"] == "c" else toolchain["cxx"]
    unstripped = os.path.join(bindir, name + ".unstripped")
    stripped = os.path.join(bindir, name)
    run([cc, *spec["flags"], "-o", unstripped, src])
    run(["strip", "-o", stripped, unstripped])
    syms = symbols(unstripped)
    if spec["lang"] == "c":
        gt, name_map, layout = {"classes": [], "removed": []}, {}, build_layout(syms, {})
    else:
        with tempfile.TemporaryDirectory() as tmp:
            run([cc, *spec["flags"], "-fdump-lang-class", "-c", src, "-o", os.path.join(tmp, "o.o")],
                cwd=tmp)
            dump_file = next(f for f in os.listdir(tmp) if f.endswith(".class"))
            dump = open(os.path.join(tmp, dump_file)).read()
        with open(os.path.join(fdir, "class.dump"), "w") as f:
            f.write(dump)
        gt, name_map = build_gt(parse_class_dump(dump), syms)
        layout = build_layout(syms, name_map)
    for fname, obj in (("gt.json", gt), ("map.json", name_map), ("layout.json", layout)):
        with open(os.path.join(fdir, fname), "w") as f:
            json.dump(obj, f, indent=2)
            f.write("\n")
    return gt


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true",
                    help="rebuild into a scratch dir and diff GT JSON against the committed files")
    ap.add_argument("--cc", default="gcc")
    ap.add_argument("--cxx", default="g++")
    ap.add_argument("names", nargs="*")
    args = ap.parse_args()
    toolchain = {"cc": args.cc, "cxx": args.cxx}
    if shutil.which(args.cxx) is None:
        print("toolchain missing: %s; golden binaries remain usable" % args.cxx)
        return 0
    names = args.names or list(FIXTURES)
    outdir = tempfile.mkdtemp() if args.check else HERE
    status = 0
    for name in names:
        gt = build_one(name, FIXTURES[name], outdir, toolchain)
        if args.check:
            golden = json.load(open(os.path.join(HERE, name, "gt.json")))
            same = golden == gt
            print("%-24s %s" % (name, "same" if same else "DIFFERS"))
            status |= 0 if same else 1
        else:
            print("built", name)
    return status


if __name__ == "__main__":
    sys.exit(main())
