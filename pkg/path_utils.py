"""
Utilities around path handling.
"""
import os

# Directory holding the default configuration files.
CONFIG_DIR: str = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config")


def get_default_config_path(config_file: str) -> str:
    """
    Get the path to a default experiment config.

    Args:
      config_file: Configuration file name.

    Returns:
      A path to the default config YAML file.
    """
    return os.path.join(CONFIG_DIR, config_file)
