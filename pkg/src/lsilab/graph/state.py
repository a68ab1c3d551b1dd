from typing import Any, List, Optional, TypedDict


class PipelineState(TypedDict):
    """
    The data that flows between the pipeline nodes.

    The command-line values are fixed at the start. Every node fills in what
    it produced. A node that fails writes `error_message` and `exit_code` and
    leaves the rest untouched.
    """

    command: str  # solve | simulate | check | demo-nonuniqueness | all
    config_path: str
    output_override: Optional[str]
    seed_override: Optional[int]
    threads_override: Optional[int]
    config: Optional[Any]  # lsilab.models.ExperimentConfig
    config_hash: Optional[str]
    output_dir: Optional[str]
    problem: Optional[Any]
    solution: Optional[Any]  # lsilab.fixed_point.FpSolution
    ensemble: Optional[Any]  # lsilab.cox.Ensemble
    reports: List[Any]  # lsilab.verify.TestReport
    artifacts: List[str]
    log_handler: Optional[Any]
    error_message: Optional[str]
    exit_code: int
