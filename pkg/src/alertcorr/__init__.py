"""Real-time intrusion-alert correlation over attack type graphs."""

from importlib import resources

from .alertgen import GenSpec, generate_noise, interleave
from .alerts import HYPOTHESIZED, REAL, HyperAlert, decode_record, encode_record
from .corrgraph import CorrelationGraph, export_canonical, export_dot
from .engine import (
    EngineConfig,
    Session,
    config_for_variant,
    finalize,
    new_session,
    process_alert,
    render_event,
)
from .hypothesize import explain, strategically_indistinguishable
from .model import (
    AttackModel,
    Diagnostic,
    ModelError,
    ValueKind,
    expand_implications,
    parse_model,
    render_model,
    validate,
)
from .oracle import batch_correlate, diff
from .typegraph import (
    CycleError,
    TypeGraph,
    compile_model,
    count_constraints,
    enumerate_constraints,
    worst_case_graph,
)

__version__ = "0.1.0"


def bundled_path(name: str):
    """Filesystem path of a bundled data file (lldos4.atg, bench20.atg, scenario.ndjson)."""
    return resources.files(__name__).joinpath("data", name)


def load_bundled_model(name: str = "lldos4.atg") -> AttackModel:
    return parse_model(bundled_path(name).read_text())
