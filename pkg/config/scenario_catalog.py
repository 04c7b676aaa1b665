"""
Committed verification scenarios
"""

import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)

SCENARIO_DIRECTORY = Path(__file__).resolve().parent / "scenarios"


class ScenarioCatalog:
    """Named verification scenarios stored as experiment files"""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory else SCENARIO_DIRECTORY
        self.scenarios = {}
        for file_path in sorted(self.directory.glob("*.json")):
            with open(file_path, "r", encoding="utf-8") as f:
                self.scenarios[file_path.stem] = {
                    "path": file_path,
                    "description": json.load(f).get("description", ""),
                }
        logger.debug(f"Found {len(self.scenarios)} scenarios in {self.directory}")

    def get_scenario(self, scenario_name):
        """
        Get scenario entry by name

        Args:
            scenario_name (str): Name of the scenario

        Returns:
            dict: {"path", "description"} or None if not found
        """
        return self.scenarios.get(scenario_name)

    def get_all_scenario_names(self):
        """
        Get list of all available scenario names

        Returns:
            list: List of scenario names
        """
        return list(self.scenarios.keys())

    def get_scenario_path(self, scenario_name):
        scenario = self.get_scenario(scenario_name)
        if scenario is None:
            raise KeyError(
                f"Unknown scenario {scenario_name!r}. Available: {', '.join(self.get_all_scenario_names())}"
            )
        return scenario["path"]

    def validate_scenario(self, scenario_specs):
        """
        Validate a scenario file's contents

        Args:
            scenario_specs (dict): Parsed scenario file

        Returns:
            bool: True if valid, False otherwise
        """
        required_sections = ["problem", "algorithm", "run", "verify"]

        for section in required_sections:
            if section not in scenario_specs:
                return False

        algorithm = scenario_specs["algorithm"]
        if "kind" not in algorithm or "eta" not in algorithm:
            return False
        if algorithm["eta"] <= 0:
            return False

        return True
