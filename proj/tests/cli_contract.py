#!/usr/bin/env python3
"""Contract checks for the qramsim command-line tool.

usage: cli_contract.py <qramsim executable> <source dir>
"""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

EXE = sys.argv[1]
SRC = pathlib.Path(sys.argv[2])
SCHEMA = json.loads((SRC / "schema" / "output.schema.json").read_text())
VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)

COMMANDS = [
    "resource-state",
    "twirl-spectrum",
    "distill",
    "teleport-run",
    "protocol",
    "update-rule",
    "bench-classical",
    "costs",
]

failures = []


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def run(args, config=None):
    cmd = [EXE] + args
    tmp = None
    if config is not None:
        tmp = tempfile.NamedTemporaryFile("w", suffix=".json", delete=False)
        json.dump(config, tmp)
        tmp.close()
        cmd += ["--config", tmp.name]
    proc = subprocess.run(cmd, capture_output=True, timeout=300)
    if tmp is not None:
        pathlib.Path(tmp.name).unlink()
    return proc


def command_for(path):
    stem = path.stem.replace("_", "-")
    for c in COMMANDS:
        if stem.startswith(c):
            return c
    raise SystemExit(f"no subcommand matches config {path.name}")


# Every shipped config: schema-valid, byte-identical on rerun, CSV has a header.
for cfg_path in sorted((SRC / "configs").glob("*.json")):
    command = command_for(cfg_path)
    cfg = json.loads(cfg_path.read_text())
    if command == "bench-classical":
        cfg["timing"] = False
    first = run([command], cfg)
    second = run([command], cfg)
    detail = "" if first.returncode == 0 else f" (got {first.returncode}: {first.stderr.decode().strip()})"
    check(first.returncode == 0, f"{cfg_path.name}: exit 0{detail}")
    if first.returncode != 0:
        continue
    check(first.stdout == second.stdout, f"{cfg_path.name}: identical output on rerun")
    doc = json.loads(first.stdout)
    errors = sorted(VALIDATOR.iter_errors(doc), key=lambda e: list(e.path))
    check(not errors, f"{cfg_path.name}: validates against the schema" + (f" ({errors[0].message})" if errors else ""))
    csv = run([command, "--format", "csv"], cfg)
    check(csv.returncode == 0 and b"," in csv.stdout.split(b"\n")[0], f"{cfg_path.name}: CSV output with header")

# --seed overrides the config seed; --out writes the same bytes as stdout.
with tempfile.TemporaryDirectory() as d:
    out = pathlib.Path(d) / "o.json"
    a = run(["resource-state", "--seed", "5", "--out", str(out)], {"n": 3, "seed": 1})
    b = run(["resource-state", "--seed", "5"], {"n": 3, "seed": 99})
    check(a.returncode == 0 and out.read_bytes() == b.stdout, "--seed overrides config seed and --out matches stdout")

# Worked values.
doc = json.loads(run(["resource-state"], {"dataset": "0110"}).stdout)
check(abs(doc["fidelity"] - 1.0) < 1e-12, "noiseless resource fidelity is 1")
doc = json.loads(run(["resource-state"], {"dataset": "0110", "device": {"kind": "dead_router", "dead": [3]}}).stdout)
check(abs(doc["fidelity"] - 0.625) < 1e-12, "dead router n=2 with one dead address gives fidelity 0.625")
doc = json.loads(run(["protocol"], {"n": 3, "seed": 4, "branch_mode": "enumerate_branches"}).stdout)
check(doc["enumeration"]["choi_distance"] <= 1e-10 and doc["enumeration"]["max_rounds_used"] <= 3,
      "noiseless n=3 enumeration matches V(f) within 1e-10")
doc = json.loads(run(["update-rule"], {"n": 10, "seed": 3}).stdout)
check(doc["agree"] and len(doc["results"]) == 3, "update-rule engines agree at n=10")
doc = json.loads(run(["distill"], {"seed": 1, "d": 32, "leading": [0.3, 0.04],
                                   "distiller": {"kind": "qpca_simple", "gamma": 0.3, "eps_dist": 0.2}}).stdout)
check(doc["params"]["r"] == 1920 and doc["runs"][0]["success_probability"] >= 0.1 and doc["runs"][0]["overlap"] >= 0.8,
      "qpca_simple on the d=32 instance meets its guarantees")
bench = run(["bench-classical", "--format", "csv"], {"n_min": 3, "n_max": 4, "timing": False})
check(bench.stdout.split(b"\n")[0] == b"n,engine,wall_ns,depth,width,wire_length", "benchmark CSV header")

# Error exits.
check(run(["resource-state"], {"n": 2, "bogus": 1}).returncode == 2, "unknown top-level key exits 2")
check(run(["protocol"], {"n": 2, "device": {"kind": "noiseless", "extra": 0}}).returncode == 2, "unknown nested key exits 2")
check(run(["resource-state"], {"n": "two"}).returncode == 2, "wrong type exits 2")
check(run(["resource-state"], {"dataset": "012"}).returncode == 2, "malformed dataset exits 2")
check(run(["costs"], {"eps": 2.0}).returncode == 2, "out-of-range parameter exits 2")
check(run(["resource-state", "--config", "/nonexistent.json"]).returncode == 2, "missing config file exits 2")
check(run(["resource-state", "--format", "xml"], {"n": 2}).returncode == 2, "bad format flag exits 2")
check(run(["twirl-spectrum"], {"n": 3, "twirl": {"mode": "exact"}}).returncode == 3, "exact twirl beyond n=2 exits 3")
check(run(["resource-state"], {"n": 9}).returncode == 3, "register above the cap exits 3")
check(run(["distill"], {"d": 4, "leading": [0.4], "distiller": {"kind": "swap_test", "levels": 6, "budget": 3}}).returncode == 3,
      "exhausted copy budget exits 3")

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
