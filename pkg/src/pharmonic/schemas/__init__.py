"""JSON schemas for the files the CLI reads and writes."""

import json
from importlib import resources

NAMES = ("report", "hessian_record", "manifold", "graph", "vertex_map")


def load_schema(name: str) -> dict:
    if name not in NAMES:
        raise KeyError(f"unknown schema {name!r}; choose from {NAMES}")
    return json.loads(resources.files(__name__).joinpath(f"{name}.schema.json").read_text("utf-8"))


def validator(name: str):
    """A ``jsonschema`` validator with the sibling schemas registered (needs jsonschema)."""
    from jsonschema import Draft202012Validator
    from referencing import Registry, Resource

    registry = Registry().with_resources(
        (f"{n}.schema.json", Resource.from_contents(load_schema(n))) for n in NAMES
    )
    return Draft202012Validator(load_schema(name), registry=registry)
