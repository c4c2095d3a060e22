"""
Runtime Settings
Numerical tolerances, search ranges and output locations, overridable from the environment
"""

import os
from typing import Any, Dict

from dotenv import load_dotenv
from pydantic import BaseModel


ENV_PREFIX = "CONCENTRATION_"


class Settings(BaseModel):
    """
    Tolerances and defaults shared by every module.

    Each field can be overridden with an environment variable named
    CONCENTRATION_<FIELD> (upper case), read once at import after
    loading a local .env file.
    """

    inverse_rtol: float = 1e-12
    conjugate_atol: float = 1e-9
    conjugate_bracket_cap: float = 1e12
    derivative_rel_step: float = 1e-6

    lambda_min: float = 1e-4
    lambda_max: float = 50.0
    lambda_points: int = 400

    nv_rtol: float = 1e-10
    nv_max_iterations: int = 400

    moment_p_step: float = 0.25
    moment_p_max: float = 50.0

    psi1_threshold: float = 2.0
    psi1_t_cap: float = 1e6

    ci_multiplier: float = 3.0
    l_cap: float = 10.0
    calibration_low: float = 1e-4
    calibration_high: float = 1e4
    min_scale: float = 1e-12
    chunk_size: int = 100_000

    output_dir: str = "."
    log_level: str = "INFO"

    @classmethod
    def from_env(cls) -> "Settings":
        """Build settings from defaults overlaid with CONCENTRATION_* variables"""
        load_dotenv()

        overrides: Dict[str, Any] = {}
        for name in cls.model_fields:
            raw = os.environ.get(f"{ENV_PREFIX}{name.upper()}")
            if raw is not None:
                overrides[name] = raw

        return cls(**overrides)


settings = Settings.from_env()
