"""Command-line front end: ``patchy validate | run | study``.

Exit codes: 0 pass, 1 predicate failure, 2 configuration error, 3 trajectory left the domain.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analyze import (
    check_index_monotone,
    check_prop22_budget,
    convergence_study,
    invariance_checks,
    monotone_modification,
    monotone_partition,
    robustness_run,
    sampling_robustness_run,
)
from .bvsignal import BVSignal, SamplingPlan
from .errors import EventOverflow, Inconclusive, NonInwardCollar, OutsideDomain, ScenarioError
from .integrate import (
    Trajectory,
    solve_caratheodory,
    solve_impulsive,
    solve_perturbed_feedback,
    solve_sampling,
)
from .patchfield import estimate_constants
from .scenario import Scenario, load_scenario

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_DOMAIN = 3

MODES = ("carath", "impulsive", "feedback", "sampling")
STUDIES = ("convergence", "prop22", "robust", "sampling", "invariance")

log = logging.getLogger("patchy")


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _stem(args) -> str:
    return Path(args.scenario).stem


def _constants(sc: Scenario, cfg):
    c = sc.spec.constants
    if c is None:
        raise ScenarioError(f"scenario '{sc.name}' has no constants section")
    return estimate_constants(sc.field(), c.rho_bar, c.sample_budget, chi=c.chi, rho1=c.rho1,
                              rho2=c.rho2, target_radius=c.target_radius, horizon=c.horizon,
                              dt=max(cfg.dt, 1e-2))


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    v = sc.spec.validation
    chi = v.chi if args.chi is None else args.chi
    report = sc.field().validate(v.samples_per_boundary, chi, collar=v.collar)
    out = args.out or f"{_stem(args)}_validation.json"
    write_atomic(out, report.to_json() + "\n")
    if report.passed and report.region_covered:
        print(f"validate {sc.name}: pass (min margin {min(p.margin for p in report.patches):.6g})")
        return EXIT_OK
    bad = report.failing()
    msg = f"inward condition fails on patch(es) {bad}" if bad else "region has cover gaps"
    print(f"validate {sc.name}: FAIL, {msg}")
    return EXIT_FAIL


# ---------------------------------------------------------------------------
# run


def _error_model(kind: str, dim: int) -> Callable | None:
    if kind == "zero":
        return None
    if kind == "alternating":
        def alternating(rng, i, m, bound):
            v = rng.normal(size=dim)
            return bound * (-1.0) ** i * v / max(float(np.linalg.norm(v)), 1e-300)
        return alternating
    if kind == "random":
        def uniform_ball(rng, i, m, bound):
            v = rng.normal(size=dim)
            return bound * rng.random() ** (1.0 / dim) * v / max(float(np.linalg.norm(v)), 1e-300)
        return uniform_ball
    raise ScenarioError(f"unknown error model '{kind}'")


def _run_trajectory(sc: Scenario, mode: str, cfg) -> Trajectory:
    x0 = sc.initial_state()
    T = sc.horizon()
    t0 = sc.spec.t0
    if mode == "carath":
        return solve_caratheodory(sc.field(), x0, t0, T, cfg)
    if mode == "impulsive":
        w = sc.signal("w") if sc.has_signal("w") else BVSignal.zero(sc.dim, (t0, T))
        return solve_impulsive(sc.field(), w, x0, t0, T, cfg)
    fb = sc.feedback()
    if mode == "feedback":
        zeta = sc.signal("zeta") if sc.has_signal("zeta") else None
        d = sc.density("d") if sc.has_signal("d") else None
        return solve_perturbed_feedback(fb, zeta, d, x0, T, cfg, t0=t0)
    plan_spec = sc.spec.plan
    if plan_spec is None:
        raise ScenarioError("mode 'sampling' needs a 'plan' section")
    rng = np.random.default_rng(cfg.rng_seed)
    model = _error_model(plan_spec.errors, sc.dim)
    bound = plan_spec.error_scale
    if model is None:
        errors_fn = lambda i, m: np.zeros(sc.dim)  # noqa: E731
    else:
        errors_fn = lambda i, m: model(rng, i, m, bound)  # noqa: E731
    plan = SamplingPlan.uniform_random(t0, T, plan_spec.delta, errors_fn, rng, plan_spec.k_bar)
    d = sc.density("d") if sc.has_signal("d") else None
    return solve_sampling(fb, plan, d, x0, cfg)


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    cfg = sc.config(dt=args.dt, seed=args.seed)
    out = args.out or f"{_stem(args)}_{args.mode}.csv"
    try:
        traj = _run_trajectory(sc, args.mode, cfg)
    except OutsideDomain as exc:
        if exc.trajectory is not None:
            write_atomic(out, exc.trajectory.to_csv_text())
        print(f"run {sc.name} [{args.mode}]: left the domain at t={exc.time}", file=sys.stderr)
        return EXIT_DOMAIN
    except EventOverflow as exc:
        if exc.trajectory is not None:
            write_atomic(out, exc.trajectory.to_csv_text())
        print(f"run {sc.name} [{args.mode}]: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_atomic(out, traj.to_csv_text())
    print(f"run {sc.name} [{args.mode}]: {len(traj)} rows, {len(traj.events) - 1} events -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# studies


def _study_convergence(sc: Scenario, cfg, out: str) -> int:
    st = sc.spec.study.convergence
    if st is None:
        raise ScenarioError("scenario has no study.convergence section")
    table = convergence_study(sc.field(), sc.initial_state(), st.tv_sequence, sc.signal(st.profile),
                              cfg, branch_cap=st.branch_cap)
    write_atomic(out + ".csv", table.to_csv_text())
    write_atomic(out + ".json", _json(table.to_dict()))
    print(f"convergence {sc.name}: {'pass' if table.passed else 'FAIL'}")
    return EXIT_OK if table.passed else EXIT_FAIL


def _study_prop22(sc: Scenario, cfg, out: str) -> int:
    st = sc.spec.study.prop22
    if st is None:
        raise ScenarioError("scenario has no study.prop22 section")
    field = sc.field()
    w = sc.signal(st.signal)
    consts = _constants(sc, cfg)
    y = solve_impulsive(field, w, sc.initial_state(), sc.spec.t0, sc.horizon(), cfg)
    part = monotone_partition(y, field)
    tv = w.total_variation()
    result = {"scenario": sc.name, "tv": tv, "delta": consts.delta, "C": consts.C_big,
              "excess_measure": part.excess_measure, "taus": part.taus, "indices": part.indices}
    try:
        ok = check_prop22_budget(part, w, consts)
    except Inconclusive as exc:
        result.update(status="inconclusive", reason=str(exc))
        write_atomic(out + ".json", _json(result))
        print(f"prop22 {sc.name}: inconclusive ({exc})")
        return EXIT_OK
    y_mod, w_mod = monotone_modification(y, w, part, field)
    mono = check_index_monotone(y_mod)[0]
    gap = float(np.max(np.linalg.norm(y_mod.states - y.states, axis=1)))
    bound = consts.M * part.excess_measure + tv + 10.0 * cfg.dt
    result.update(status="pass" if ok and mono and gap <= bound else "fail", budget_ok=ok,
                  modified_monotone=mono, modification_gap=gap, modification_bound=bound,
                  modified_tv=w_mod.total_variation())
    write_atomic(out + ".json", _json(result))
    lines = ["tau,index"] + [f"{t!r},{a}" for t, a in zip(part.taus, part.indices + [part.indices[-1]])]
    write_atomic(out + ".csv", "\n".join(lines) + "\n")
    print(f"prop22 {sc.name}: {result['status']}")
    return EXIT_OK if result["status"] == "pass" else EXIT_FAIL


def _horizon_or_budget(sc: Scenario, T: float | None, cfg):
    consts = None
    if T is None:
        consts = _constants(sc, cfg)
        T = consts.T_total
    return T, consts


def _study_robust(sc: Scenario, cfg, out: str) -> int:
    st = sc.spec.study.robust
    if st is None:
        raise ScenarioError("scenario has no study.robust section")
    fb = sc.feedback()
    T, _ = _horizon_or_budget(sc, st.T, cfg)
    grid = fb.region.rings(st.rings.n, st.rings.radii) if fb.region else None
    if grid is None:
        raise ScenarioError("study.robust needs a region")
    zetas = [sc.signal(p.zeta, (0.0, T)) if p.zeta else None for p in st.perturbations]
    ds = [sc.density(p.d) for p in st.perturbations]
    report = robustness_run(fb, st.r, st.s, st.chi, grid, zetas, ds, T, cfg, scenario=sc.name)
    write_atomic(out + ".csv", report.to_csv_text())
    write_atomic(out + ".json", report.to_json() + "\n")
    return _report_exit("robust", sc, report)


def _study_sampling(sc: Scenario, cfg, out: str) -> int:
    st = sc.spec.study.sampling
    if st is None:
        raise ScenarioError("scenario has no study.sampling section")
    fb = sc.feedback()
    consts = _constants(sc, cfg)
    T = st.T if st.T is not None else consts.T_total
    delta = st.delta if st.delta is not None else consts.delta_bar
    k_bar = st.k_bar if st.k_bar is not None else consts.k_bar
    if fb.region is None:
        raise ScenarioError("study.sampling needs a region")
    grid = fb.region.rings(st.rings.n, st.rings.radii)
    models = [_error_model(k, sc.dim) for k in st.errors]
    ds = [sc.density(name) for name in st.d]
    report = sampling_robustness_run(fb, st.r, st.s, st.chi, delta, k_bar, grid, models, ds, T, cfg,
                                     seed=cfg.rng_seed, scenario=sc.name)
    write_atomic(out + ".csv", report.to_csv_text())
    write_atomic(out + ".json", report.to_json() + "\n")
    return _report_exit("sampling", sc, report)


def _report_exit(kind: str, sc: Scenario, report) -> int:
    bad = report.failing()
    if not bad:
        print(f"{kind} {sc.name}: pass ({len(report.outcomes)} cells)")
        return EXIT_OK
    print(f"{kind} {sc.name}: FAIL, {len(bad)} of {len(report.outcomes)} cells")
    for o in bad:
        print(f"  x0={o.x0} variant={o.variant} reached={o.reached_target} "
              f"in_domain={o.stayed_in_domain} monotone={o.index_monotone} {o.note}".rstrip())
    return EXIT_FAIL


def _study_invariance(sc: Scenario, cfg, out: str) -> int:
    st = sc.spec.study.invariance
    if st is None:
        raise ScenarioError("scenario has no study.invariance section")
    patch = sc.field().patch(st.patch)
    report = invariance_checks(patch, st.rho, st.chi, st.samples, st.T, cfg, seed=cfg.rng_seed)
    write_atomic(out + ".json", _json(report.to_dict()))
    print(f"invariance {sc.name}: {'pass' if report.passed else 'FAIL'} "
          f"(c_transit {report.c_transit:.6g}, reseeded {report.c_transit_reseeded:.6g})")
    return EXIT_OK if report.passed else EXIT_FAIL


_STUDY_FNS = {
    "convergence": _study_convergence,
    "prop22": _study_prop22,
    "robust": _study_robust,
    "sampling": _study_sampling,
    "invariance": _study_invariance,
}


def cmd_study(args) -> int:
    sc = load_scenario(args.scenario)
    cfg = sc.config(dt=args.dt, seed=args.seed)
    out = args.out or f"{_stem(args)}_{args.study}"
    for suffix in (".csv", ".json"):
        if out.endswith(suffix):
            out = out[: -len(suffix)]
    return _STUDY_FNS[args.study](sc, cfg, out)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="patchy", description="Patchy vector fields: validate, simulate, study.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check the inward-pointing condition and region cover")
    v.add_argument("scenario", help="scenario file or bundled fixture name")
    v.add_argument("--chi", type=float, default=None, help="override the perturbation budget")
    v.add_argument("--out", default=None, help="JSON report path")

    r = sub.add_parser("run", help="integrate one trajectory and write it as CSV")
    r.add_argument("scenario")
    r.add_argument("--mode", choices=MODES, default="carath")
    r.add_argument("--out", default=None, help="CSV path")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--dt", type=float, default=None)

    s = sub.add_parser("study", help="run an analysis study and write CSV/JSON artifacts")
    s.add_argument("scenario")
    s.add_argument("--study", choices=STUDIES, required=True)
    s.add_argument("--out", default=None, help="output path prefix (.csv/.json are appended)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--dt", type=float, default=None)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"validate": cmd_validate, "run": cmd_run, "study": cmd_study}[args.command]
    try:
        return handler(args)
    except (ScenarioError, ValueError) as exc:
        print(f"patchy: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonInwardCollar as exc:
        print(f"patchy: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OutsideDomain as exc:
        print(f"patchy: left the domain: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
