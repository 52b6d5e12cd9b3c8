import os
from pydantic_settings import BaseSettings
from typing import Any, Dict, Optional


class Settings(BaseSettings):
    # Runtime
    threads: Optional[int] = None
    log_level: str = "INFO"

    # RTP quadrature
    quad_abs_tol: float = 1e-8
    quad_limit: int = 200
    qmc_fallback_points: int = 10_000

    # MVN rectangle probabilities
    mvn_target_se: float = 1e-4
    mvn_max_points: int = 2 ** 20
    mvn_batches: int = 10

    # Numerical guards
    psd_tolerance: float = 1e-10
    whiten_min_eigenvalue: float = 1e-8
    pvalue_floor: float = 1e-300
    z_clamp: float = 1e-15

    # Simulation
    default_B: int = 10_000
    full_scale_B: int = 100_000
    block_size: int = 4096
    slow_stage_seconds: float = 30.0

    def resolved_threads(self) -> int:
        """Effective worker count; ARTCOMBINE_THREADS caps it"""
        if self.threads is not None and self.threads >= 1:
            return self.threads
        return max(1, min(4, os.cpu_count() or 1))

    def describe(self) -> Dict[str, Any]:
        """Settings echoed into run manifests"""
        return {
            "threads": self.resolved_threads(),
            "quad_abs_tol": self.quad_abs_tol,
            "mvn_target_se": self.mvn_target_se,
            "mvn_max_points": self.mvn_max_points,
            "block_size": self.block_size,
        }

    class Config:
        env_prefix = "ARTCOMBINE_"
        env_file = ".env"
        case_sensitive = False


settings = Settings()
