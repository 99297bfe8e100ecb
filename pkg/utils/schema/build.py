import os

from rcsopt.schema import summary_schema, write_schema

ROOT = f"{'/'.join(os.path.realpath(__file__).split('/')[:-1])}/../.."

write_schema(f"{ROOT}/rcsopt.schema.json")
write_schema(f"{ROOT}/rcsopt.summary.schema.json", summary_schema())
