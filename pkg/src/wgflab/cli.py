"""Command-line front end.

Every subcommand writes CSV/JSON data plus a gnuplot script into ``--out``.
Exit codes: 0 when the outcome matches the expected behaviour of the flow,
1 on a numerical failure (or a refused request), 2 when a reproduced
quantity disagrees with its expected value.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as wio
from .density import density_csv
from .diagnostics import (
    DiagnosticReport,
    jump_report,
    kl_divergence,
    pinsker_certificate,
    probe_junction_order,
    series_junction_order,
    state_density,
)
from .errors import InvalidStep, RegularityHalt, WGFError
from .flow import (
    OUT_OF_DOMAIN,
    FlowState,
    SmoothnessLedger,
    ex2_density,
    ex2_recurrence,
    fe_step,
    kl_velocity,
    smoothness_step,
    trajectory_record,
)
from .particles import ensemble_csv, histogram_csv, init_ensemble, ks_distance, particle_step
from .pushforward import PolynomialVelocity, injectivity_condition
from .scenarios import example1, example2, synthetic_scenario

EXIT_OK, EXIT_NUMERICAL, EXIT_INCONSISTENT = 0, 1, 2

MASS_TOL = 1e-6
KL_FLOOR = 0.019
CROSSCHECK_TOL = 1e-10


# -- configuration -------------------------------------------------------------


def _step_size(s) -> float:
    h = float(s)
    if not 0.0 < h < 1.0:
        raise argparse.ArgumentTypeError(f"step size {s!r} must lie in (0, 1)")
    return h


def _step_list(s) -> list:
    return [_step_size(v) for v in str(s).split(",") if v.strip()]


def _grid(s) -> int:
    n = int(s)
    if n < 2:
        raise argparse.ArgumentTypeError("grid resolution must be at least 2")
    return n


def _flag(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _smoothness(s) -> float:
    if str(s).strip().lower() in ("inf", "infinity"):
        return math.inf
    m = int(s)
    if m < 2:
        raise argparse.ArgumentTypeError("m must be at least 2")
    return m


def _schedule(s) -> str:
    s = str(s).strip()
    if s != "harmonic":
        _step_list(s)
    return s


def _positive_int(s) -> int:
    n = int(s)
    if n < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return n


# name -> (type, default); every option is also accepted as ``name = value`` in --config
COMMON = {"out": (str, "out"), "seed": (int, 0), "grid": (_grid, None), "force": (_flag, False)}
OPTIONS = {
    "example1": {"h": (_step_list, [0.1])},
    "example2": {"schedule": (_schedule, "0.1"), "k_max": (_positive_int, 50)},
    "particles": {
        "example": (int, 1),
        "h": (_step_size, 0.01),
        "n": (int, 100000),
        "steps": (int, 1),
        "ks_threshold": (float, None),
    },
    "generic_loss": {"m": (_smoothness, 2), "h": (_step_size, 0.2), "steps": (int, None), "beta": (float, 1.0)},
    "report": {},
}


@dataclass
class RunConfig:
    command: str
    out: Path
    seed: int = 0
    grid: int | None = None
    force: bool = False
    params: dict = field(default_factory=dict)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge built-in defaults, the ``--config`` file and explicit flags (in rising priority)."""
    command = args.command.replace("-", "_")
    options = {**COMMON, **OPTIONS[command]}
    values = {k: d for k, (_, d) in options.items()}
    if args.config:
        for key, raw in wio.read_config(args.config).items():
            if key not in options:
                raise ValueError(f"unknown config key {key!r} for {args.command}")
            values[key] = options[key][0](raw)
    for key in options:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    out = Path(values.pop("out"))
    out.mkdir(parents=True, exist_ok=True)
    return RunConfig(
        command,
        out,
        int(values.pop("seed")),
        values.pop("grid"),
        bool(values.pop("force")),
        values,
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wgflab", allow_abbrev=False, description="Forward-Euler Wasserstein gradient flow experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int, help="random seed (default: 0)")
        sp.add_argument("--grid", type=_grid, help="grid resolution")
        sp.add_argument("--config", help="key = value file; flags take precedence")
        sp.add_argument("--force", action="store_const", const=True, help="continue past a regularity halt")
        return sp

    sp = common(sub.add_parser("example1", allow_abbrev=False, help="Gaussian start, quartic target: folded map and density blow-up"))
    sp.add_argument("--h", type=_step_list, help="step size or comma-separated list (default: 0.1)")

    sp = common(sub.add_parser("example2", allow_abbrev=False, help="kinked start, Gaussian target: gaps and the KL lower bound"))
    sp.add_argument("--schedule", type=_schedule, help="constant h, comma list, or 'harmonic' for 1/(k+2)")
    sp.add_argument("--k-max", dest="k_max", type=_positive_int, help="number of steps (default: 50)")

    sp = common(sub.add_parser("particles", allow_abbrev=False, help="particle FE steps checked against the analytic density"))
    sp.add_argument("--example", type=int, choices=(1, 2))
    sp.add_argument("--h", type=_step_size)
    sp.add_argument("--n", type=int, help="number of particles (default: 100000)")
    sp.add_argument("--steps", type=int, help="number of FE steps (default: 1)")
    sp.add_argument("--ks-threshold", dest="ks_threshold", type=float, help="KS threshold for steps >= 1 (default: max(0.01, 1.95/sqrt(n)))")

    sp = common(sub.add_parser("generic-loss", allow_abbrev=False, help="two derivatives lost per FE step at a junction"))
    sp.add_argument("--m", type=_smoothness, help="start class is C^(m+2); 'inf' for a smooth start")
    sp.add_argument("--h", type=_step_size)
    sp.add_argument("--steps", type=int, help="number of steps (default: until the gradient is no longer classical)")
    sp.add_argument("--beta", type=float, help="size of the junction defect (default: 1)")

    common(sub.add_parser("report", allow_abbrev=False, help="aggregate diag_*.json in --out into summary.json"))
    return p


# -- helpers -------------------------------------------------------------------


def _tag(h: float) -> str:
    return f"h{h:g}"


def _diag(out: Path, name: str, report: DiagnosticReport) -> bool:
    wio.write_json(out / f"diag_{name}.json", report.to_dict(), "diagnostic")
    print(f"{'PASS' if report.passed else 'FAIL'} {report.kind} {name}: value={_short(report.value)}")
    return report.passed


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)) and len(v) > 4:
        return f"[{len(v)} values]"
    return v


def _gnuplot(out: Path, name: str, body: str) -> None:
    wio.atomic_write(out / name, "set datafile separator ','\nset key autotitle columnhead\n" + body)


# -- example 1 -----------------------------------------------------------------


def cmd_example1(cfg: RunConfig) -> int:
    sc = example1()
    n = cfg.grid or 4001
    hs = list(cfg.params["h"])
    rows, ok = [], True
    for h in sorted(set(hs) | {0.1, 0.2, 0.5}, reverse=True):
        x = np.linspace(-1.5 / math.sqrt(h), 1.5 / math.sqrt(h), n)
        rows.extend((h, xi, ti) for xi, ti in zip(x, x - h * x**3))
    wio.atomic_write(cfg.out / "map_curves.csv", wio.csv_text(["h", "x", "T"], rows))

    state0 = FlowState.initial(sc.initial)
    for h in hs:
        tag = _tag(h)
        y_star = (2.0 / 3.0) * math.sqrt(1.0 / (3.0 * h))
        half = 1.5 / math.sqrt(h)
        state1 = fe_step(state0, sc.energy, h, force=cfg.force)
        d = state1.current
        wio.write_json(cfg.out / f"branches_{tag}.json", d.branches.to_dict(), "branches")
        ys = np.union1d(np.linspace(-half, half, n), [-y_star, y_star])
        wio.atomic_write(cfg.out / f"density_{tag}.csv", density_csv(d, ys))

        cell = 2 * half / (n - 1)
        located = []
        for sign, name in ((+1, "pos"), (-1, "neg")):
            rep = jump_report(d, sign * y_star)
            wio.write_json(cfg.out / f"jump_report_{tag}_{name}.json", rep.to_dict(), "jump_report")
            located.append(rep.classification == "blow_up")
        reg = state1.regularity
        verdict_ok = reg.status == OUT_OF_DOMAIN and reg.location is not None and abs(abs(reg.location) - y_star) <= cell
        ok &= _diag(
            cfg.out,
            f"example1_regularity_{tag}",
            DiagnosticReport(
                "example1_regularity",
                {"h": h, "y_star": y_star, "grid_cell": cell},
                reg.to_dict(),
                "out_of_domain with a blow-up at +-y_star",
                bool(verdict_ok and all(located)),
            ),
        )
        mass = d.integrate()
        ok &= _diag(
            cfg.out,
            f"example1_mass_{tag}",
            DiagnosticReport("example1_mass", {"h": h}, mass, MASS_TOL, abs(mass - 1.0) <= MASS_TOL),
        )

    first = _tag(hs[0])
    _gnuplot(
        cfg.out,
        "example1.gp",
        "set multiplot layout 1,2\n"
        "set xlabel 'x'\nset ylabel 'T(x)'\n"
        "plot for [h in '0.5 0.2 0.1'] 'map_curves.csv' using 2:($1==h+0 ? $3 : 1/0) with lines title 'h='.h, x with lines dt 2 title 'identity'\n"
        f"set xlabel 'y'\nset ylabel 'p_1(y)'\nset yrange [0:1]\n"
        f"plot 'density_{first}.csv' using 1:2 with lines title 'p_1 ({first})'\n"
        "unset multiplot\n",
    )
    return EXIT_OK if ok else EXIT_INCONSISTENT


# -- example 2 -----------------------------------------------------------------


def _schedule_values(text: str, k_max: int) -> list:
    if text == "harmonic":
        return [1.0 / (k + 2) for k in range(k_max)]
    vals = _step_list(text)
    return [vals[min(k, len(vals) - 1)] for k in range(k_max)]


def ex2_crosscheck(d, coeffs, x) -> float:
    """Largest pointwise gap between the recurrence density and ``d``.

    Grid points sitting exactly on a discontinuity (``|x| = 1`` or ``c_k``)
    (to rounding) are skipped: the value there is a convention, not part of
    the density.
    """
    x = np.asarray(x, float)
    ax = np.abs(x)
    keep = ~(np.isclose(ax, 1.0, rtol=1e-12, atol=0) | np.isclose(ax, coeffs.c, rtol=1e-12, atol=0))
    return float(np.max(np.abs(ex2_density(coeffs, x[keep]) - d.pdf(x[keep]))))


def cmd_example2(cfg: RunConfig) -> int:
    sc = example2()
    k_max = cfg.params["k_max"]
    schedule = _schedule_values(cfg.params["schedule"], k_max)
    coeffs = ex2_recurrence(schedule)
    wio.atomic_write(
        cfg.out / "coefficients.csv",
        wio.csv_text(["k", "a", "b", "c"], [(c.k, c.a, c.b, c.c) for c in coeffs]),
    )

    # the gaps at +-c_k make the velocity one-sided from k = 1 on, so the
    # example is always stepped with one-sided derivatives
    states = [FlowState.initial(sc.initial)]
    for h in schedule:
        states.append(fe_step(states[-1], sc.energy, h, force=True))

    target = sc.target_density
    x = np.linspace(-10.0, 10.0, cfg.grid or 2001)
    selected = sorted({k for k in (0, 1, 2, 5, 10, k_max) if k <= k_max})
    for k in selected:
        wio.atomic_write(cfg.out / f"density_k{k}.csv", density_csv(state_density(states[k]), x))

    energy_rows, records = [], []
    for S, c in zip(states, coeffs):
        dk = state_density(S)
        kl = kl_divergence(dk, target)
        cert = pinsker_certificate(dk, target, (-1.0, 1.0))
        energy_rows.append((S.k, kl, cert))
        rec = trajectory_record(S, c, kl)
        wio.validate(wio.jsonable(rec), "trajectory")
        records.append(rec)
    wio.atomic_write(cfg.out / "energy.csv", wio.csv_text(["k", "KL", "certificate"], energy_rows))
    wio.atomic_write(cfg.out / "trajectory.jsonl", "".join(json.dumps(wio.jsonable(r), allow_nan=False) + "\n" for r in records))

    kls = [r[1] for r in energy_rows]
    inputs = {"schedule": cfg.params["schedule"], "k_max": k_max}
    kl_ok = _diag(
        cfg.out, "example2_kl_floor",
        DiagnosticReport("example2_kl_floor", inputs, min(kls), {"lower_bound": KL_FLOOR}, all(v > KL_FLOOR for v in kls)),
    )
    cert_ok = _diag(
        cfg.out, "example2_certificate",
        DiagnosticReport(
            "example2_certificate",
            inputs,
            max(r[2] for r in energy_rows),
            "certificate <= KL at every k",
            all(r[2] <= r[1] for r in energy_rows),
        ),
    )
    errs = [ex2_crosscheck(S.current, c, x) for S, c in zip(states[: min(10, k_max) + 1], coeffs)]
    cross_ok = _diag(
        cfg.out, "example2_crosscheck",
        DiagnosticReport("example2_crosscheck", {**inputs, "k_checked": len(errs) - 1}, max(errs), CROSSCHECK_TOL, max(errs) <= CROSSCHECK_TOL),
    )
    _gnuplot(
        cfg.out,
        "example2.gp",
        "set multiplot layout 1,2\n"
        "set xlabel 'k'\nset ylabel 'KL'\n"
        f"plot 'energy.csv' using 1:2 with linespoints title 'KL', '' using 1:3 with lines title 'certificate', {KL_FLOOR} dt 2 title '0.019'\n"
        "set xlabel 'x'\nset ylabel 'p_k(x)'\n"
        "plot " + ", ".join(f"'density_k{k}.csv' using 1:2 with lines title 'k={k}'" for k in selected) + "\n"
        "unset multiplot\n",
    )
    if not cross_ok:
        return EXIT_NUMERICAL
    return EXIT_OK if kl_ok and cert_ok else EXIT_INCONSISTENT


# -- particles -----------------------------------------------------------------


def cmd_particles(cfg: RunConfig) -> int:
    p = cfg.params
    if p["n"] < 10:
        raise ValueError("need at least 10 particles")
    if p["example"] not in (1, 2):
        raise ValueError("example must be 1 or 2")
    sc = example1() if p["example"] == 1 else example2()
    span = (-5.0, 5.0) if p["example"] == 1 else (-10.0, 10.0)
    bins = cfg.grid or 200
    h, n = p["h"], p["n"]
    threshold = p["ks_threshold"] if p["ks_threshold"] is not None else max(0.01, 1.95 / math.sqrt(n))

    S = FlowState.initial(sc.initial)
    P = init_ensemble(S.current, n, cfg.seed)
    results, halted = [], None
    for step in range(p["steps"] + 1):
        if step > 0:
            try:
                S_next = fe_step(S, sc.energy, h, force=cfg.force)
            except RegularityHalt as exc:
                halted = {"step": step, "reason": exc.reason, "location": exc.location}
                print(f"halted before step {step}: {exc}")
                break
            P = particle_step(P, S_next.last_map.velocity, h)
            S = S_next
        wio.atomic_write(cfg.out / f"ensemble_step{step}.csv", ensemble_csv(P))
        wio.atomic_write(cfg.out / f"histogram_step{step}.csv", histogram_csv(P, bins, span))
        limit = 1.95 / math.sqrt(n) if step == 0 else threshold
        ks = ks_distance(P, state_density(S)) if S.conforming else None
        results.append({"step": step, "ks": ks, "threshold": limit, "conforming": S.conforming})

    passed = all(r["ks"] is None or r["ks"] < r["threshold"] for r in results)
    ok = _diag(
        cfg.out,
        "particles_ks",
        DiagnosticReport(
            "particles_ks",
            {"example": p["example"], "h": h, "n": n, "seed": cfg.seed, "steps": p["steps"], "halted": halted},
            results,
            "KS < 1.95/sqrt(n) at step 0, < threshold afterwards",
            passed,
        ),
    )
    last = results[-1]["step"]
    _gnuplot(
        cfg.out,
        "particles.gp",
        "set xlabel 'x'\nset ylabel 'density'\n"
        f"plot 'histogram_step{last}.csv' using (($1+$2)/2):4 with steps title 'particles, step {last}'\n",
    )
    return EXIT_OK if ok else EXIT_INCONSISTENT


# -- generic smoothness loss ---------------------------------------------------


def _class_label(c):
    return int(c) if math.isfinite(c) else "inf"


def curvature_bound(d, n: int = 4001, span: float = 20.0) -> float:
    """``max (ln p)''`` on a grid over the support, i.e. ``-inf V''`` for ``p = exp(-V)``."""
    lo, hi = d.support
    xs = np.linspace(max(lo, -span), min(hi, span), n)
    d2 = 2.0 * d.logpdf_taylor(xs, 2, +1)[:, 2]
    d2 = d2[np.isfinite(d2)]
    return float(d2.max()) if d2.size else 0.0


def cmd_generic_loss(cfg: RunConfig) -> int:
    p = cfg.params
    m, h = p["m"], p["h"]
    smooth = not math.isfinite(m)
    sc = synthetic_scenario(2 if smooth else int(m), 0.0 if smooth else p["beta"])
    M, M0 = sc.hessian_bounds()
    S = FlowState.initial(sc.initial)
    w0 = PolynomialVelocity(kl_velocity(sc.energy, sc.initial))
    inj = injectivity_condition(w0, h, M, M0, window=S.current.support, n=20001)
    inputs = {"m": _class_label(m), "h": h, "M": M, "M0": M0, "bound": inj.bound}
    if not inj.holds:
        _diag(
            cfg.out,
            "generic_loss_refusal",
            DiagnosticReport("generic_loss_refusal", inputs, {"witness": inj.witness, "min_slope": inj.min_slope}, inj.bound, False),
        )
        where = f"T' <= 0 at x = {inj.witness:.6g} (minimum slope {inj.min_slope:.3g})" if inj.witness is not None else "no sign change on the grid"
        print(f"refused: h = {h} is not below 1/(M + M0) = {inj.bound:.6g}; {where}", file=sys.stderr)
        return EXIT_NUMERICAL

    start = m + 2
    L = SmoothnessLedger.start(start)
    junction = 1.0
    max_order = 6 if smooth else int(start) + 2
    history, series_ok, probe_ok = [], True, True

    def record(k, dens):
        nonlocal series_ok, probe_ok
        cls = L.class_of_V
        order = series_junction_order(dens, junction, max_order)
        probe = probe_junction_order(dens, junction)
        expect_series = None if cls >= max_order else int(cls)
        series_ok &= order == expect_series
        # one-sided fits over orders 1..4 resolve a first jump up to order 3
        if cls <= 2:
            probe_ok &= probe.order == int(cls)
        history.append(
            {"k": k, "class": _class_label(cls), "junction": junction, "series_order": order,
             "probe_order": probe.order, "probe_jumps": list(probe.jumps)}
        )

    record(0, S.current)
    n_steps = p["steps"] if p["steps"] is not None else (3 if smooth else int(math.floor((start - 1) / 2)) + 1)
    stop, M0_k = None, M0
    for _ in range(n_steps):
        if not L.classical_gradient and not cfg.force:
            stop = "nonclassical"
            break
        if S.k > 0:
            M0_k = curvature_bound(S.current)
        try:
            L_next = smoothness_step(L, h < 1.0 / (M + M0_k))
            S_next = fe_step(S, sc.energy, h, force=cfg.force)
        except InvalidStep:
            stop = "invalid_step"
            print(f"step {S.k + 1} refused: h = {h} is not below 1/(M + M0) = {1.0 / (M + M0_k):.6g} for the current density")
            break
        except RegularityHalt:
            stop = "regularity"
            break
        L = L_next
        junction = float(S_next.last_map(junction))
        S = S_next
        record(S.k, S.current)
    if stop is None and not L.classical_gradient:
        stop = "nonclassical"

    wio.write_json(
        cfg.out / "ledger.json",
        {"m": _class_label(m), "h": h, "M": M, "M0": M0, "history": history, "halted": stop is not None, "stop_reason": stop},
        "ledger",
    )
    ok = _diag(cfg.out, "generic_loss_series", DiagnosticReport("generic_loss_series", inputs, [r["series_order"] for r in history], "exact order equals ledger class", series_ok))
    ok &= _diag(cfg.out, "generic_loss_probe", DiagnosticReport("generic_loss_probe", inputs, [r["probe_order"] for r in history], "finite-difference order equals ledger class wherever the class is at most 2", probe_ok))
    _gnuplot(
        cfg.out,
        "generic_loss.gp",
        "# ledger.json is JSON; this plots the ledger class against the step via jq\n"
        "set xlabel 'k'\nset ylabel 'class'\n"
        "plot '< jq -r \".history[] | [.k, .class] | @csv\" ledger.json' using 1:2 with linespoints notitle\n",
    )
    return EXIT_OK if ok else EXIT_INCONSISTENT


# -- report --------------------------------------------------------------------


def cmd_report(cfg: RunConfig) -> int:
    reports = []
    for path in sorted(cfg.out.glob("diag_*.json")):
        data = json.loads(path.read_text())
        wio.validate(data, "diagnostic")
        reports.append({"file": path.name, "kind": data["kind"], "pass": bool(data["pass"])})
        print(f"{'PASS' if data['pass'] else 'FAIL'} {path.name}")
    if not reports:
        print(f"no diagnostics found in {cfg.out}", file=sys.stderr)
        return EXIT_NUMERICAL
    n_pass = sum(r["pass"] for r in reports)
    summary = {
        "directory": str(cfg.out),
        "reports": reports,
        "n_pass": n_pass,
        "n_fail": len(reports) - n_pass,
        "all_pass": n_pass == len(reports),
    }
    wio.write_json(cfg.out / "summary.json", summary, "summary")
    return EXIT_OK if summary["all_pass"] else EXIT_INCONSISTENT


COMMANDS = {
    "example1": cmd_example1,
    "example2": cmd_example2,
    "particles": cmd_particles,
    "generic_loss": cmd_generic_loss,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors with 2, which is reserved here
        return EXIT_OK if exc.code in (0, None) else EXIT_NUMERICAL
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except (WGFError, ArithmeticError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
