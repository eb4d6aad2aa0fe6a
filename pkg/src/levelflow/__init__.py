"""Decide whether a planar function is topologically a projection on a window,
and build the straightening chart phi with f(phi(x, y)) = y."""

from .expression import ParseError, parse_expression, to_text
from .field import ScalarField, Window, evaluate, gradient_fd
from .regularity import (
    CrossSection,
    HypothesisReport,
    StallError,
    Verdict,
    build_cross_section,
    check_condition1,
    check_condition2,
    check_monotone,
)
from .straightener import (
    GlobalChart,
    StripChart,
    chart_apply,
    chart_invert,
    choose_level_sequence,
    compute_range,
    glue_strips,
    straighten_strip,
    verify_straightening,
)
from .tracer import (
    LevelComponent,
    Side,
    Topology,
    classify_component,
    separation_relation,
    side_of_curve,
    trace_level,
)

__version__ = "0.1.0"
