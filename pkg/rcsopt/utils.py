import collections.abc
import os
from pathlib import Path


def get_r_dir():
    """Gets the .rcsopt directory"""
    return f"{os.path.realpath('.')}/.rcsopt"


def nested_update(d, u):
    """
    Updates nested dictionary d with nested dictionary u
    """
    for k, v in u.items():
        if isinstance(v, collections.abc.Mapping):
            d[k] = nested_update(d.get(k, {}), v)
        elif isinstance(v, list):
            d[k] = [] if not d.get(k) else d[k]
            for obj in v:
                if obj not in d[k]:
                    d[k].append(obj)
        else:
            d[k] = v
    return d


def drop_none(d):
    """Removes keys whose value is None, recursing into nested dictionaries"""
    cleaned = {}
    for k, v in d.items():
        if isinstance(v, collections.abc.Mapping):
            v = drop_none(v)
            if v:
                cleaned[k] = v
        elif v is not None:
            cleaned[k] = v
    return cleaned


def parse_seed_range(seeds) -> list:
    """
    Parses "7", "3..6" (inclusive) or "1,4,9" into a list of seeds
    """
    seeds = str(seeds).strip()
    if ".." in seeds:
        start, stop = seeds.split("..", 1)
        start, stop = int(start), int(stop)
        if stop < start:
            raise ValueError(f"empty seed range {seeds}")
        return list(range(start, stop + 1))
    return [int(s) for s in seeds.split(",") if s.strip()]


def seed_output_path(path, seed, multiple) -> str:
    """
    Returns path unchanged for single runs, or path with a .seed<k> suffix before the extension
    """
    if not path or not multiple:
        return path
    p = Path(path)
    return str(p.with_name(f"{p.stem}.seed{seed}{p.suffix}"))


def thread_count(configured=None) -> int:
    """Sweep parallelism: the configured count, otherwise the logical core count"""
    if configured:
        return max(1, int(configured))
    return os.cpu_count() or 1
