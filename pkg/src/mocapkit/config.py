"""Pipeline configuration: one dataclass, JSON-loadable, strict about keys.

Defaults are chosen for the bundled synthetic rigs; real deployments
override via a JSON file passed to the command line tools. Unknown keys
are rejected rather than ignored so typos fail loudly.
"""

from dataclasses import dataclass, field, fields

from . import augment
from .errors import ValidationError
from .graph import DEFAULT_THRESHOLD_SCALE
from .serialize import load_json
from .solver import DEFAULT_LOSS_WEIGHTS, SolverConfig


@dataclass(frozen=True)
class PipelineConfig:
    # cleaning
    k_fill: int = 6
    outlier_kind: str = "robust"
    outlier_value: float = 8.0
    repair_half_window: int = 2
    # alignment; None means "derive from part labels"
    reference_markers: dict | None = None
    # solving
    k_solve: int = 3
    graph_threshold_scale: float = DEFAULT_THRESHOLD_SCALE
    solver: SolverConfig = field(default_factory=SolverConfig)
    loss_weights: tuple = DEFAULT_LOSS_WEIGHTS
    # refinement
    refiner_conv_width: int = 64
    refiner_rnn_width: int = 128
    # training
    lr: float = 1e-3
    solver_steps: int = 800
    refiner_steps: int = 300
    # corruption defaults (dataset generation)
    p_shift: float = augment.DEFAULT_P_SHIFT
    sigma_shift: float = augment.DEFAULT_SIGMA_SHIFT

    def __post_init__(self):
        if self.k_fill < 1 or self.k_solve < 1:
            raise ValidationError("neighbor counts must be >= 1")
        if self.outlier_kind not in ("robust", "absolute"):
            raise ValidationError(f"unknown outlier_kind {self.outlier_kind!r}")
        if len(self.loss_weights) != 3:
            raise ValidationError("loss_weights must have three entries")

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "solver" in doc:
            doc["solver"] = SolverConfig.from_dict(doc["solver"])
        if "loss_weights" in doc:
            doc["loss_weights"] = tuple(doc["loss_weights"])
        if doc.get("reference_markers") is not None:
            doc["reference_markers"] = {
                k: tuple(v) for k, v in doc["reference_markers"].items()
            }
        return cls(**doc)


def load_config(path=None):
    """Config from a JSON file, or all defaults when ``path`` is None."""
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_dict(load_json(path))
