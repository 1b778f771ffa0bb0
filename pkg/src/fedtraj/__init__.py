"""Privacy-preserving federated trajectory matching.

A query client perturbs its trajectory with bounded planar Laplace noise,
publishes only the grid cells the noisy points land in, and data owners
filter, partition, and prune their databases against those cells before a
simulated two-party secure comparison confirms the exact matching set.

The modules layer bottom-up: ``geometry`` and ``ingest`` define trajectories
and their encodings, ``privacy`` solves the noise bound, ``grid`` tessellates
and indexes, ``publish`` draws the noisy query, ``partition`` groups
candidates behind reference envelopes, ``secure`` runs the metered
verification sessions, and ``node`` wires it all over a framed TCP protocol
driven by the ``fedtraj`` command line.
"""

from .errors import (
    ConfigurationError,
    DomainError,
    FedTrajError,
    IndexChecksumError,
    IndexFormatError,
    IndexTruncatedError,
    IndexVersionError,
    IngestError,
    InternalError,
    PartialResultError,
    ProtocolError,
    PublishFailure,
    TransportError,
)
from .geometry import Point, Segment, Trajectory, euclidean, interpolate, matches
from .ingest import dump_ndjson, iter_ndjson, load_ndjson, project_equirectangular
from .privacy import (
    NoiseBound,
    PrivacyParams,
    bpl_perturb,
    laplace_cdf,
    laplace_cdf_inverse,
    sample_radii,
    solve_noise_bound,
)
from .grid import (
    GridId,
    GridIndex,
    GridSpec,
    build_index,
    load_index,
    persist_index,
    segment_box_distance2,
    traversal_grids,
)
from .publish import PublishedQuery, publish, publish_with_retry
from .partition import (
    GridVisit,
    Partition,
    PartitionParams,
    ReferenceTrajectory,
    grid_visits,
    partition_candidates,
    prune_threshold,
    reference_trajectory,
)
from .secure import (
    QUANT,
    ROLE_PRUNE,
    ROLE_VALIDATE,
    CostModel,
    LeakageLedger,
    SimulatedIdealBackend,
    Transcript,
    VerifyRequest,
    assert_leakage_closure,
    audit_leakage,
    match_matrix,
    meter,
    op_count,
    quantize_threshold,
    quantize_values,
    secure_verify,
)
from .config import OwnerConfig, load_federation, load_owner_config
from .node import (
    FederationResult,
    OwnerServer,
    OwnerState,
    QueryMetrics,
    QueryResult,
    prepare_owner,
    query_federation,
    run_query,
    serve,
)
from .datagen import CorpusParams, generate_corpus, split_shards, subsample_query
from .report import QueryRecord, RunReport
from .bench import SweepGrid, SweepRow, sweep

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "FedTrajError",
    "ConfigurationError",
    "DomainError",
    "IngestError",
    "PublishFailure",
    "ProtocolError",
    "TransportError",
    "PartialResultError",
    "IndexFormatError",
    "IndexVersionError",
    "IndexChecksumError",
    "IndexTruncatedError",
    "InternalError",
    # geometry and ingestion
    "Point",
    "Segment",
    "Trajectory",
    "euclidean",
    "interpolate",
    "matches",
    "iter_ndjson",
    "load_ndjson",
    "dump_ndjson",
    "project_equirectangular",
    # privacy
    "PrivacyParams",
    "NoiseBound",
    "laplace_cdf",
    "laplace_cdf_inverse",
    "solve_noise_bound",
    "sample_radii",
    "bpl_perturb",
    # tessellation and indexing
    "GridId",
    "GridSpec",
    "GridIndex",
    "traversal_grids",
    "segment_box_distance2",
    "build_index",
    "persist_index",
    "load_index",
    # query publication
    "PublishedQuery",
    "publish",
    "publish_with_retry",
    # partitioning and pruning
    "PartitionParams",
    "GridVisit",
    "Partition",
    "ReferenceTrajectory",
    "grid_visits",
    "partition_candidates",
    "reference_trajectory",
    "prune_threshold",
    # secure verification
    "QUANT",
    "ROLE_PRUNE",
    "ROLE_VALIDATE",
    "CostModel",
    "VerifyRequest",
    "Transcript",
    "SimulatedIdealBackend",
    "quantize_values",
    "quantize_threshold",
    "match_matrix",
    "op_count",
    "secure_verify",
    "meter",
    "audit_leakage",
    "assert_leakage_closure",
    "LeakageLedger",
    # federation
    "OwnerConfig",
    "load_owner_config",
    "load_federation",
    "OwnerState",
    "OwnerServer",
    "prepare_owner",
    "serve",
    "run_query",
    "query_federation",
    "QueryMetrics",
    "QueryResult",
    "FederationResult",
    # synthetic data, reporting, benchmarks
    "CorpusParams",
    "generate_corpus",
    "subsample_query",
    "split_shards",
    "QueryRecord",
    "RunReport",
    "SweepGrid",
    "SweepRow",
    "sweep",
]
