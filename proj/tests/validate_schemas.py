"""Runs every CLI subcommand on small generated inputs and validates each
JSON report against the schema shipped in schemas/."""

import json
import pathlib
import subprocess
import sys

from jsonschema import Draft202012Validator
from referencing import Registry, Resource


def main() -> int:
    cli, schema_dir, scratch = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    scratch.mkdir(parents=True, exist_ok=True)

    schemas = {}
    registry = Registry()
    for path in sorted(schema_dir.glob("*.schema.json")):
        schema = json.loads(path.read_text())
        Draft202012Validator.check_schema(schema)
        schemas[path.name] = schema
        resource = Resource.from_contents(schema)
        registry = registry.with_resource(schema["$id"], resource).with_resource(path.name, resource)

    def run(*args: str) -> None:
        subprocess.run([cli, *map(str, args)], check=True)

    config = scratch / "design.json"
    config.write_text(json.dumps({
        "n": 60, "seed": 3,
        "blocks": [{"size": 3, "rho": 0.8}, {"size": 3, "rho": 0.6}],
        "response": {"active": [0, 3], "coefficients": [1.0, 1.0], "snr": 5.0},
    }))
    data, resp = scratch / "x.csv", scratch / "y.csv"
    run("synth", "--config", config, "--out", data, "--response-out", resp)

    reports = [
        ("tree.schema.json", "tree.json", ["build", "--input", data]),
        ("comparison.schema.json", "compare.json", ["compare", "--input", data]),
        ("comparison.schema.json", "compare_self.json", ["compare", "--input", data, "--self", "--level-range", "1:3"]),
        ("selection.schema.json", "sel_energy.json", ["select", "--input", data, "--mode", "k-energy", "--k", "2"]),
        ("selection.schema.json", "sel_cv.json",
         ["select", "--input", data, "--response", resp, "--mode", "cv", "--predictor", "ridge", "--folds", "5"]),
        ("selection.schema.json", "sel_frontier.json",
         ["select", "--input", data, "--response", resp, "--mode", "frontier", "--folds", "5"]),
        ("stability.schema.json", "stab.json", ["stability", "--input", data, "--replicates", "5"]),
        ("stability.schema.json", "stab_y.json",
         ["stability", "--input", data, "--response", resp, "--replicates", "3", "--folds", "5"]),
    ]
    failures = 0
    for schema_name, out_name, args in reports:
        out = scratch / out_name
        run(*args, "--out", out)
        validator = Draft202012Validator(schemas[schema_name], registry=registry)
        errors = list(validator.iter_errors(json.loads(out.read_text())))
        status = "ok" if not errors else "INVALID"
        print(f"{status}: {out_name} against {schema_name}")
        for e in errors:
            print(f"    {'/'.join(map(str, e.absolute_path))}: {e.message}")
        failures += bool(errors)

    # The schemas must also reject reports with an unknown key or a malformed digest.
    tree = json.loads((scratch / "tree.json").read_text())
    tampered = [dict(tree, extra=1), json.loads(json.dumps(tree))]
    tampered[1]["manifest"]["input_digests"]["input"] = "md5:00"
    tree_validator = Draft202012Validator(schemas["tree.schema.json"], registry=registry)
    for i, doc in enumerate(tampered):
        rejected = not tree_validator.is_valid(doc)
        print(f"{'ok' if rejected else 'ACCEPTED'}: tampered tree report {i} is rejected")
        failures += not rejected
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
