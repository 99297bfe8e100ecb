import csv
import logging
import os

log = logging.getLogger("rcsopt.write_files")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))

TRACE_COLUMNS = [
    "k",
    "epoch",
    "block",
    "alpha",
    "f",
    "gap",
    "step_norm",
    "env_grad",
    "env_gap",
]


def _blank(value):
    return "" if value is None else value


def trace_rows(records, f_star=None):
    """Yields one CSV row per record; gap is left empty when no reference value is known"""
    for record in records:
        yield {
            "k": record.k,
            "epoch": record.epoch,
            "block": record.block,
            "alpha": record.alpha,
            "f": record.objective,
            "gap": "" if f_star is None else record.objective - f_star,
            "step_norm": record.step_norm,
            "env_grad": _blank(record.envelope_gradient_norm),
            "env_gap": _blank(record.envelope_gap),
        }


def write_trace_csv(path, records, f_star=None):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in trace_rows(records, f_star):
            writer.writerow(row)
    log.info(f"wrote trace with {len(records)} records to {path}")


def write_model(path, model):
    """Writes a pydantic model as indented JSON"""
    with open(path, "w") as f:
        f.write(model.model_dump_json(indent=4))
        f.write("\n")
