"""JSON schemas shipped with rcsopt: experiment files and .rcsopt/config.json for IDE
auto-complete, and the run summary that ``rcsopt run`` writes
"""
import json

from rcsopt.models import ExperimentConfig, RunSummary

SCHEMA_DRAFT = "http://json-schema.org/draft-07/schema#"


def experiment_schema() -> dict:
    """ExperimentConfig's schema with a "profiles" section whose entries overlay the base
    settings
    """
    schema = ExperimentConfig.model_json_schema()
    sections = {
        name: {"type": "object"} if name != "reference" else {"type": "string"}
        for name in schema["properties"]
    }
    schema["$schema"] = SCHEMA_DRAFT
    schema["properties"]["profiles"] = {
        "type": "object",
        "patternProperties": {
            "^.+$": {"type": "object", "properties": sections, "additionalProperties": False}
        },
    }
    # every key is optional in the file itself, flags and profiles may fill it in
    schema.pop("required", None)
    return schema


def summary_schema() -> dict:
    schema = RunSummary.model_json_schema()
    schema["$schema"] = SCHEMA_DRAFT
    return schema


def write_schema(path, schema=None):
    with open(path, "w") as f:
        f.write(json.dumps(schema or experiment_schema(), indent=2, sort_keys=True))
        f.write("\n")
