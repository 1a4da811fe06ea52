"""Configuration management for the characteristic-curve identification toolkit."""

import logging
import os
import sys
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from errors import ConfigError

# Load environment variables
load_dotenv()


LOG_FORMAT = '%(asctime)s | %(levelname)s | %(name)s | %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


class Config:
    """Application configuration."""

    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()

    # Directories
    OUTPUT_DIR = Path(os.getenv('OUTPUT_DIR', './output'))

    # Worker pool size used when --jobs is not given
    JOBS = int(os.getenv('CCIDENT_JOBS', '1') or 1)

    # Name of the seed override variable (read lazily, see seed_override)
    SEED_ENV = 'CCIDENT_SEED'

    @classmethod
    def seed_override(cls) -> Optional[int]:
        """Return the seed forced through the environment, if any."""
        raw = os.getenv(cls.SEED_ENV)
        if raw is None or raw.strip() == '':
            return None
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{cls.SEED_ENV} must be an integer, got {raw!r}")

    @classmethod
    def validate(cls, output_dir: Optional[Path] = None) -> Path:
        """Validate configuration and create the output directory."""
        out = Path(output_dir) if output_dir else cls.OUTPUT_DIR
        if cls.JOBS < 1:
            raise ConfigError("CCIDENT_JOBS must be >= 1")
        out.mkdir(parents=True, exist_ok=True)
        return out


def setup_logging(level: Optional[str] = None):
    """Configure root logging once for CLI and library use."""
    level_name = (level or Config.LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
        stream=sys.stderr,
    )
    return logging.getLogger("ccident")
