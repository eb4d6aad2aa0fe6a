"""End-to-end runs: hypothesis check, then chart construction and verification.

Both runs work on the levels met by the *central transversal*, the gradient
flow line through the window centre. In the window these are the curves a
single cross-section sweeps out, which is the region a strip chart can cover;
levels that only enter the window through its corners are left out. If the
flow stalls at the centre (a critical point), the whole sampled range is used.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import JobConfig
from .field import ScalarField
from .regularity import (
    CrossSection,
    HypothesisReport,
    StallError,
    Verdict,
    build_cross_section,
    check_condition1,
    check_condition2,
    default_eps_grad,
)
from .straightener import (
    ChartDomainError,
    GlobalChart,
    RangeInterval,
    StraightenError,
    VerificationReport,
    choose_level_sequence,
    compute_range,
    glue_strips,
    straighten_strip,
    verify_straightening,
)

log = logging.getLogger(__name__)

LEVEL_MARGIN = 0.02  # fraction of the working range kept clear at each end
STRIP_SAMPLES = (257, 17)  # (along level, across levels) per strip
VERIFY_GRID = (128, 128)
ROUNDTRIP_POINTS = 1000


@dataclass(frozen=True)
class ResolvedTolerances:
    trace: float
    grad: float
    seam: float
    verify: float

    def as_dict(self) -> dict:
        return {"trace": self.trace, "grad": self.grad, "seam": self.seam, "verify": self.verify}


def resolve_tolerances(config: JobConfig, field: ScalarField, rng: RangeInterval) -> ResolvedTolerances:
    t = config.tolerances
    spread = max(rng.width, 1e-300)
    return ResolvedTolerances(
        trace=t.trace if t.trace is not None else 1e-2 * spread,
        grad=t.grad if t.grad is not None else default_eps_grad(field),
        seam=t.seam if t.seam is not None else 2 * field.window.cellsize,
        verify=t.verify,
    )


@dataclass
class CheckOutcome:
    field: ScalarField
    report: HypothesisReport
    range: RangeInterval
    working_range: tuple[float, float]
    transversal: CrossSection | None
    tolerances: ResolvedTolerances


@dataclass
class StraightenOutcome:
    check: CheckOutcome
    chart: GlobalChart | None = None
    verification: VerificationReport | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.verification is not None and self.verification.passed and self.error is None


def _start_point(field: ScalarField):
    """Window centre, or the nearest usable node when the centre is singular."""
    c = field.window.center
    if not field.is_masked_at(c) and math.isfinite(float(field(*c))):
        return c
    ok = ~field.node_mask & np.isfinite(field.values)
    if not ok.any():
        return None
    X, Y = np.meshgrid(field.window.xs(), field.window.ys())
    d = np.where(ok, np.hypot(X - c[0], Y - c[1]), np.inf)
    j, i = np.unravel_index(np.argmin(d), d.shape)
    return (float(X[j, i]), float(Y[j, i]))


def central_transversal(field: ScalarField, rng: RangeInterval, eps_grad: float) -> CrossSection | None:
    p = _start_point(field)
    if p is None:
        return None
    tol = 1e-12 * max(1.0, abs(rng.achieved[0]), abs(rng.achieved[1]))
    try:
        return build_cross_section(field, p, rng.achieved, tol, eps_grad=eps_grad)
    except StallError as exc:
        log.info("central transversal stalled: %s", exc)
        return None


def run_check(config: JobConfig) -> CheckOutcome:
    field = ScalarField.from_expression(config.expr, config.window)
    rng = compute_range(field)
    tol = resolve_tolerances(config, field, rng)
    section = central_transversal(field, rng, tol.grad)
    if section is not None and section.span[1] > section.span[0]:
        working = section.span
        source = "transversal"
    else:
        section = None
        working = rng.achieved
        source = "full-range"
    margin = LEVEL_MARGIN * (working[1] - working[0])
    levels = choose_level_sequence(working, config.levels - 1, margin)
    c1 = check_condition1(field, levels, tol.trace)
    c2 = check_condition2(field, eps_grad=tol.grad)
    w = config.window
    meta = {
        "expression": config.expr,
        "window": {"xmin": w.xmin, "xmax": w.xmax, "ymin": w.ymin, "ymax": w.ymax, "nx": w.nx, "ny": w.ny},
        "range": rng.to_dict(),
        "working_range": [float(working[0]), float(working[1])],
        "level_source": source,
        "masked_cells": int(field.mask.sum()),
        "tolerances": {"trace": tol.trace, "grad": tol.grad},
    }
    report = HypothesisReport.assemble(c1, c2, levels, meta)
    return CheckOutcome(field, report, rng, working, section, tol)


def build_chart(check: CheckOutcome, strips: int) -> GlobalChart:
    field, tol = check.field, check.tolerances
    anchor = check.transversal
    if anchor is None:
        raise StraightenError("no central cross-section to anchor the strips")
    lo, hi = check.working_range
    seq = choose_level_sequence((lo, hi), strips, LEVEL_MARGIN * (hi - lo))
    nx, ny = STRIP_SAMPLES
    parts = [
        straighten_strip(field, a, b, anchor, nx, ny, tol.trace)
        for a, b in zip(seq.levels, seq.levels[1:])
    ]
    chart = glue_strips(parts, reference=len(parts) // 2, tol=tol.seam)
    chart.range = check.range
    chart.expression = field.text
    chart.window = field.window
    chart.tolerances = tol.as_dict()
    chart.field = field
    return chart


def run_straighten(config: JobConfig) -> StraightenOutcome:
    check = run_check(config)
    out = StraightenOutcome(check)
    if check.report.verdict is not Verdict.EQUIVALENT:
        return out
    try:
        out.chart = build_chart(check, config.strips)
    except StraightenError as exc:
        out.error = str(exc)
        return out
    tol = check.tolerances
    try:
        out.verification = verify_straightening(
            check.field,
            out.chart,
            VERIFY_GRID,
            tol=tol.verify,
            seam_tol=tol.seam,
            roundtrip_points=ROUNDTRIP_POINTS,
            seed=config.seed,
        )
    except (StraightenError, ChartDomainError) as exc:
        out.error = f"verification failed: {exc}"
    return out
