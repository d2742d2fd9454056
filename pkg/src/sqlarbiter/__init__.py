"""sqlarbiter: training-free SQL candidate selection by execution duels.

Given K candidate SQL queries for one natural-language question, the
pipeline clusters them by execution result on the real database, puts the
two dominant hypotheses through a duel on a synthesized micro-database
engineered to make them disagree, runs an independently generated
dataframe script on the same data as a reference anchor, and keeps the
candidate whose result better matches the anchor under a bipartite
soft-F1 metric.
"""

from .bsf1 import BsF1Score, DuelDecision, bsf1, hungarian, overlap_ratio, verdict
from .clustering import (
    AllFailed,
    CandidateSet,
    ChampionOnly,
    Cluster,
    DuelPair,
    cluster_candidates,
    select_duel,
)
from .harness import (
    BenchmarkItem,
    RunReport,
    baseline_select,
    ex_match,
    load_benchmark,
    pass_at_n,
    run_benchmark,
)
from .llm import (
    AgentResponse,
    ChatRequest,
    HttpChatProvider,
    ParseError,
    Provider,
    ProviderConfig,
    ScriptedProvider,
    parse_tagged,
    render_prompt,
)
from .pipeline import PipelineConfig, Verdict, select_one
from .results import (
    AtomicValue,
    CanonicalForm,
    ResultSet,
    canonicalize,
    normalize_value,
    values_equal,
)
from .slicer import SlicerFailed, SlicerTrace, run_slicer
from .solver import (
    MockScriptExecutor,
    ScriptExecutor,
    ScriptOutcome,
    SolverFailed,
    SolverRequest,
    SolverTrace,
    SubprocessScriptExecutor,
    run_solver,
    serialize_mdd_payload,
)
from .sqlexec import (
    DatabaseRef,
    ExecOutcome,
    SchemaMeta,
    SchemaSlice,
    dry_run,
    execute_sql,
    introspect_schema,
    materialize_mdd,
    synthesize_ddl,
)
from .tester import (
    MDDInstance,
    TestData,
    TesterFailed,
    TesterTrace,
    render_schema_with_types,
    run_tester,
)

__version__ = "0.1.0"
