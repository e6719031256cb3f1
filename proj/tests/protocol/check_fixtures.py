"""Validates the golden wire fixtures against the shipped JSON schema."""

import base64
import io
import json
import pathlib
import sys

import jsonschema

EXPECTED = {
    "describe_request.json": ("describe_request", True),
    "describe_response.json": ("describe_response", True),
    "describe_response_missing_field.json": ("describe_response", False),
    "embed_request.json": ("embed_request", True),
    "embed_response.json": ("embed_response", True),
    "embed_response_empty.json": ("embed_response", True),
    "embed_response_bad_dim.json": ("embed_response", True),  # schema-valid; length check is semantic
    "error_response.json": ("error_response", True),
}


def main(schema_path, fixtures_dir):
    schema = json.loads(pathlib.Path(schema_path).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    failures = 0
    for name, (definition, should_pass) in EXPECTED.items():
        doc = json.loads((pathlib.Path(fixtures_dir) / name).read_text())
        sub = {"$ref": f"#/$defs/{definition}", "$defs": schema["$defs"]}
        ok = jsonschema.Draft202012Validator(sub).is_valid(doc)
        status = "ok" if ok == should_pass else "FAIL"
        failures += status == "FAIL"
        print(f"{status} {name} against {definition} (valid={ok}, expected={should_pass})")

    # The request image must decode to the 2x2 reference pattern.
    req = json.loads((pathlib.Path(fixtures_dir) / "describe_request.json").read_text())
    png = base64.b64decode(req["image_png_b64"], validate=True)
    if png[:8] != b"\x89PNG\r\n\x1a\n":
        print("FAIL describe_request.json image is not a PNG")
        failures += 1
    else:
        try:
            from PIL import Image

            img = Image.open(io.BytesIO(png)).convert("RGB")
            pixels = [img.getpixel((x, y)) for y in range(img.height) for x in range(img.width)]
            expected = [(255, 0, 0), (0, 255, 0), (0, 0, 255), (128, 128, 128)]
            status = "ok" if img.size == (2, 2) and pixels == expected else "FAIL"
            failures += status == "FAIL"
            print(f"{status} describe_request.json image pixels")
        except ImportError:
            print("skip pixel check (Pillow not installed)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1], sys.argv[2]))
