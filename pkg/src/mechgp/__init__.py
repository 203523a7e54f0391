"""mechgp: mechanism-specific deep encoders feeding a sparse variational
Gaussian process, with synthetic benchmarks, a spin-lattice ferroelectric
simulator, uncertainty-driven active learning and mechanism
disentanglement."""

__version__ = "0.1.0"

from .active import AcquisitionConfig, penalty, run_loop, score, select_next
from .benchmarks import (MechanismDataset, PatchMosaic, StressFieldParams,
                         compose, linear_field, make_benchmark1,
                         make_benchmark1_1, make_benchmark2, rgb_mosaic,
                         stress_field, suit_mosaic, three_mechanism_dataset)
from .disentangle import (Anchor, MechanismResponse, anchor_correct,
                          cluster_check, isolate, mechanism_response,
                          scaling_decompose)
from .estimator import (MechanismGPRegressor, continuity_probe,
                        fit_on_indices, standardize_targets)
from .ferrosim import (DomainPattern, FieldWaveform, LatticeConfig, LoopTrace,
                       build_ferrosim_dataset, coercive_field,
                       ground_truth_sweeps, loop_area, make_pattern, simulate)

__all__ = [
    "__version__",
    "AcquisitionConfig", "penalty", "run_loop", "score", "select_next",
    "MechanismDataset", "PatchMosaic", "StressFieldParams", "compose",
    "linear_field", "make_benchmark1", "make_benchmark1_1", "make_benchmark2",
    "rgb_mosaic", "stress_field", "suit_mosaic", "three_mechanism_dataset",
    "Anchor", "MechanismResponse", "anchor_correct", "cluster_check",
    "isolate", "mechanism_response", "scaling_decompose",
    "MechanismGPRegressor", "continuity_probe", "fit_on_indices",
    "standardize_targets",
    "DomainPattern", "FieldWaveform", "LatticeConfig", "LoopTrace",
    "build_ferrosim_dataset", "coercive_field", "ground_truth_sweeps",
    "loop_area", "make_pattern", "simulate",
]
