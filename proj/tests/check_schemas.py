"""Validates shipped configs, checkpoint config echoes and exported
connection records against the published JSON schemas."""

import json
import pathlib
import struct
import subprocess
import sys
import tempfile

import jsonschema

NANO = {
    "model": {"dims": [4, 8, 8], "patch_modules": [1, 1, 1], "cross_modules": [1, 1, 1],
              "image_size": 16, "patch_size": 4, "num_labels": 4, "k": 3, "groups": 2},
    "data": {"train_samples": 16, "val_samples": 8},
    "optimizer": {"epochs": 1, "batch_size": 8, "warmup_steps": 1, "decay_epochs": []},
}


def load(path):
    return json.loads(pathlib.Path(path).read_text())


def main(cli, root):
    root = pathlib.Path(root)
    config_schema = load(root / "schemas" / "config.schema.json")
    record_schema = load(root / "schemas" / "connections.schema.json")
    jsonschema.Draft202012Validator.check_schema(config_schema)
    jsonschema.Draft202012Validator.check_schema(record_schema)

    for path in sorted((root / "configs").glob("*.json")):
        jsonschema.validate(load(path), config_schema)
        print(f"ok config {path.name}")

    try:
        jsonschema.validate({"model": {"dimz": [8]}}, config_schema)
        raise SystemExit("schema accepted an unknown key")
    except jsonschema.ValidationError:
        print("ok unknown key rejected")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        (tmp / "nano.json").write_text(json.dumps(NANO))
        jsonschema.validate(NANO, config_schema)
        subprocess.run([cli, "train", "--config", tmp / "nano.json", "--out", tmp / "run"],
                       check=True, stdout=subprocess.DEVNULL)
        checkpoint = load(tmp / "run" / "final.ckpt.json")
        jsonschema.validate(checkpoint["config"], config_schema)
        print("ok checkpoint config echo")

        pixels = [((i * 37) % 101) / 100.0 for i in range(16 * 16 * 3)]
        (tmp / "img.f32").write_bytes(struct.pack("<%df" % len(pixels), *pixels))
        out = subprocess.run([cli, "export-graph", "--checkpoint", tmp / "run" / "final.ckpt.json",
                              "--image", tmp / "img.f32"], check=True, capture_output=True, text=True)
        record = json.loads(out.stdout)
        jsonschema.validate(record, record_schema)
        for stage in record["stages"]:
            for module in stage["modules"]:
                for edge in module["edges"]:
                    assert edge["dest"] < module["num_dest"]
                    assert all(s < module["num_src"] for s in edge["sources"])
                if module["kind"] == "cross":
                    assert module["num_dest"] == len(record["labels"])
        print("ok connection record")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
