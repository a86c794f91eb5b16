"""Causal structure discovery with RL graph search and entropy-rated edges.

The package learns a DAG over tabular variables by sampling graphs from
an attention-based policy trained against a penalized BIC reward, then
rates and prunes edges with an inverse-information-entropy strength.
"""

from .autodiff import AdamState, Node, ShapeError, Tape, adam_step
from .data import (
    Dataset,
    IngestionError,
    PreprocessConfig,
    Variable,
    VariableTable,
    correlation_matrix,
    dataco_schema_path,
    encode_categoricals,
    load_csv,
    load_schema,
    multicollinearity_filter,
    sample_batch,
    standardize,
)
from .estimator import CausalDiscovery, CollinearColumnFilter
from .graphs import (
    CausalGraph,
    acyclicity_penalty,
    as_adjacency,
    edges,
    is_dag,
    parents,
    topological_order,
)
from .pipeline import (
    ConfigError,
    PipelineConfig,
    PipelineStageError,
    RunArtifacts,
    config_from_file,
    run,
)
from .policy import (
    PolicyConfig,
    PolicyTrainer,
    TrainerConfig,
    TrainState,
    TrainingDiverged,
    critic_value,
    decode_logits,
    edge_probabilities,
    encode,
    sample_adjacency,
    train,
)
from .report import emit_dot, emit_json, emit_report, parse_graph_json
from .scoring import (
    AnnealSchedule,
    BICScorer,
    RewardBreakdown,
    RewardConfig,
    all_dags,
    annealed_lambdas,
    exhaustive_minimum,
    local_search,
)
from .simulate import (
    GeneratorConfig,
    StructuralModel,
    generate,
    random_dag,
    random_model,
    structural_hamming_distance,
)
from .strength import (
    EntropyEstimate,
    StrengthMatrix,
    digamma,
    edge_strengths,
    iie_strength,
    iie_strength_normalized,
    prune_graph,
    spacing_entropy,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AnnealSchedule",
    "BICScorer",
    "CausalDiscovery",
    "CausalGraph",
    "CollinearColumnFilter",
    "ConfigError",
    "Dataset",
    "EntropyEstimate",
    "GeneratorConfig",
    "IngestionError",
    "Node",
    "PipelineConfig",
    "PipelineStageError",
    "PolicyConfig",
    "PolicyTrainer",
    "PreprocessConfig",
    "RewardBreakdown",
    "RewardConfig",
    "RunArtifacts",
    "ShapeError",
    "StrengthMatrix",
    "StructuralModel",
    "Tape",
    "TrainState",
    "TrainerConfig",
    "TrainingDiverged",
    "Variable",
    "VariableTable",
    "acyclicity_penalty",
    "adam_step",
    "all_dags",
    "annealed_lambdas",
    "as_adjacency",
    "config_from_file",
    "correlation_matrix",
    "critic_value",
    "dataco_schema_path",
    "decode_logits",
    "digamma",
    "edge_probabilities",
    "edge_strengths",
    "edges",
    "emit_dot",
    "emit_json",
    "emit_report",
    "encode",
    "encode_categoricals",
    "exhaustive_minimum",
    "generate",
    "iie_strength",
    "iie_strength_normalized",
    "is_dag",
    "load_csv",
    "load_schema",
    "local_search",
    "multicollinearity_filter",
    "parents",
    "parse_graph_json",
    "prune_graph",
    "random_dag",
    "random_model",
    "run",
    "sample_adjacency",
    "sample_batch",
    "spacing_entropy",
    "standardize",
    "structural_hamming_distance",
    "topological_order",
    "train",
    "__version__",
]
