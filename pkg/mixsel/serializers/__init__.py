from .results import FitResultSerializer, OrderEstimateSerializer, SummaryRowSerializer  # noqa: F401
from .run_config import RunConfigSerializer, load_run_config, validate_run_config  # noqa: F401
