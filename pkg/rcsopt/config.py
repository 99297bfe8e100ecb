import json
import logging
import os

import yaml

from rcsopt.utils import get_r_dir, nested_update

log = logging.getLogger("rcsopt.config")
log.setLevel(logging.getLevelName(os.getenv("RCSOPT_LOG_LEVEL", "INFO")))


class RConfig:
    """Experiment settings merged from .rcsopt/config.json, a json or yaml experiment file and
    explicit values, in that order. If a profile is set it overlays the matching section of
    "profiles" onto the merged config
    """

    def __init__(self, config=None, profile=None, path=None):
        self.config = self.get_r_config()
        if path:
            self.config = nested_update(self.config, self.load_file(path))
        if config:
            self.config = nested_update(self.config, config)
        self.profile = profile or os.environ.get("RCSOPT_PROFILE")
        self.validate()
        self.update_profile_config()

    def update_profile_config(self):
        if self.profile:
            self.config = nested_update(
                self.config, self.config.get("profiles", {}).get(self.profile, {})
            )

    @staticmethod
    def load_file(path):
        """Reads a json or yaml experiment file"""
        with open(path) as f:
            if str(path).endswith((".yaml", ".yml")):
                return yaml.safe_load(f) or {}
            return json.load(f)

    @staticmethod
    def get_r_config():
        try:
            with open(f"{get_r_dir()}/config.json") as f:
                return json.load(f)
        except FileNotFoundError:
            return {}
        except json.decoder.JSONDecodeError:
            log.info(
                "JSONDecodeError. .rcsopt/config.json is not valid. Returning empty config"
            )
            return {}

    def as_dict(self):
        """Merged settings with the profiles section removed"""
        return {k: v for k, v in self.config.items() if k != "profiles"}

    def validate(self):
        if self.profile and self.profile not in self.config.get("profiles", {}):
            raise ValueError(f"profile {self.profile} not found in config")
