"""
Observability
Structured logging of bound evaluations, verification campaigns and calibrations
"""

import logging
from typing import Any, Dict, List, Optional

from settings import settings


LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class ObservabilityManager:
    """
    Logging manager for bound computations and Monte Carlo campaigns

    Features:
    - Console logging with a single shared format
    - Structured events through custom_dimensions (event_type keyed)
    - Campaign provenance (config hash, seed, violations, duration)
    - Metric tracking for calibrated constants and runtimes
    """

    def __init__(
        self,
        service_name: str = "ConcentrationPlane",
        level: Optional[str] = None
    ):
        self.service_name = service_name
        self.level = (level or settings.log_level).upper()
        self._setup_console_logging()

    def _setup_console_logging(self):
        """Attach one console handler to the service logger"""
        logger = logging.getLogger(self.service_name)
        logger.setLevel(getattr(logging, self.level, logging.INFO))

        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logger.addHandler(handler)

        self.logger = logger

    def log_bound(
        self,
        bound_name: str,
        threshold: float,
        probability_bound: float,
        constants: Dict[str, float]
    ):
        """Log a computed threshold/probability pair with its constants"""
        self.logger.debug(
            f"Bound computed: {bound_name}",
            extra={
                "custom_dimensions": {
                    "bound": bound_name,
                    "threshold": threshold,
                    "probability_bound": probability_bound,
                    **{f"constant_{k}": v for k, v in constants.items()},
                    "event_type": "bound"
                }
            }
        )

    def log_campaign(
        self,
        bound_name: str,
        config_hash: str,
        seed: int,
        points: int,
        violations: int,
        duration_ms: int
    ):
        """Log the outcome of a dominance-verification campaign"""
        level = logging.INFO if violations == 0 else logging.WARNING
        self.logger.log(
            level,
            f"Campaign complete: {bound_name} ({violations}/{points} violated)",
            extra={
                "custom_dimensions": {
                    "bound": bound_name,
                    "config_hash": config_hash,
                    "seed": seed,
                    "points": points,
                    "violations": violations,
                    "duration_ms": duration_ms,
                    "event_type": "campaign"
                }
            }
        )

    def log_calibration(
        self,
        constant_name: str,
        value: float,
        grid: List[float]
    ):
        """Log a calibrated universal constant"""
        self.logger.info(
            f"Calibrated {constant_name} = {value:.6g}",
            extra={
                "custom_dimensions": {
                    "constant": constant_name,
                    "value": value,
                    "grid": ",".join(f"{g:.6g}" for g in grid),
                    "event_type": "calibration"
                }
            }
        )

    def log_error(
        self,
        operation: str,
        error_message: str,
        error_type: str
    ):
        """Log an error with the operation that raised it"""
        self.logger.error(
            f"Error in {operation}: {error_message}",
            extra={
                "custom_dimensions": {
                    "operation": operation,
                    "error_type": error_type,
                    "error_message": error_message,
                    "event_type": "error"
                }
            }
        )

    def track_metric(
        self,
        metric_name: str,
        value: float,
        properties: Optional[Dict[str, Any]] = None
    ):
        """
        Track a custom metric

        Examples:
        - campaign_runtime_ms
        - worst_dominance_margin
        - calibrated_constant
        """
        self.logger.info(
            f"Metric: {metric_name} = {value}",
            extra={
                "custom_dimensions": {
                    "metric_name": metric_name,
                    "metric_value": value,
                    "event_type": "metric",
                    **(properties or {})
                }
            }
        )


observability = ObservabilityManager()
