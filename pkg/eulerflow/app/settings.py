# eulerflow/app/settings.py

import os

from dotenv import find_dotenv, load_dotenv

from .errors import ConfigError

# Locate and load an optional .env file (the environment wins over it)
dotenv_path = find_dotenv(usecwd=True)
if dotenv_path:
    load_dotenv(dotenv_path)

# Where CLI artifacts go unless --out or the config says otherwise
OUTPUT_DIR = os.getenv("EULERFLOW_OUTPUT_DIR", "out")

LOG_LEVEL = os.getenv("EULERFLOW_LOG_LEVEL", "INFO").upper()

# |det(d phi)| at or below this is treated as singular
try:
    DET_FLOOR = float(os.getenv("EULERFLOW_DET_FLOOR", "1e-6"))
except ValueError as exc:
    raise ConfigError(f"EULERFLOW_DET_FLOOR is not a number: {exc}") from exc
if not DET_FLOOR > 0:
    raise ConfigError("EULERFLOW_DET_FLOOR must be positive")
