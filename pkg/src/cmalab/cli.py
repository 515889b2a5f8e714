"""Experiment runner behind the ``cma-lab`` command.

Config files are plain text, one ``key = value`` per line; ``#`` starts a
comment. Values are parsed as int, float, ``true``/``false``, or a
comma-separated list of those; anything else stays a string. Recognized keys:

    experiment    registry name (see ``cma-lab list``)
    backend       radial | planar
    n             complex dimension
    resolutions   increasing grid sizes, e.g. ``257, 513``
    seed          integer seed for randomized sweeps
    out           output directory (overridden by ``--out``)

All other keys are passed to the experiment as parameters.
"""

import argparse
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .domains import GridField, PlanarGrid, RadialBall, RadialProfile
from .exceptions import CMALabError, UsageError
from .flows import MoserTrudingerFlow, SobolevDescentFlow
from .functionals import ConventionConstants, ma_energy, energy_by_parts, psh_seminorm
from .io import dump_json, records_csv, records_jsonl
from .lab import (
    EstimateRecord,
    beta_iteration_schedule,
    bm_profile,
    bmq_delta,
    estimate_mt_alpha,
    estimate_sobolev_T,
    g_llogl_check,
    norm_concentration_check,
    random_admissible_profiles,
    random_sources,
)
from .planar import PoissonSystem, brezis_merle_check, poisson_solve
from .radial import RadialRHS, radial_ma_apply, radial_ma_solve
from .slices import slice_mass_check, slice_potential

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
RESERVED = ("experiment", "backend", "n", "resolutions", "seed", "out")


def _parse_scalar(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_value(text):
    text = text.strip()
    if "," in text:
        return [_parse_scalar(t.strip()) for t in text.split(",") if t.strip()]
    return _parse_scalar(text)


@dataclass
class ExperimentConfig:
    """Validated experiment configuration."""

    experiment: str
    backend: str = "radial"
    n: int = 1
    resolutions: tuple = ()
    seed: int = 0
    out: str = "cma-lab-out"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in REGISTRY:
            raise UsageError(f"unknown experiment {self.experiment!r}; run 'cma-lab list'")
        if self.backend not in ("radial", "planar"):
            raise UsageError(f"backend must be radial or planar, got {self.backend!r}")
        if not isinstance(self.n, int) or isinstance(self.n, bool) or not 1 <= self.n <= 3:
            raise UsageError(f"n must be 1, 2 or 3, got {self.n!r}")
        res = self.resolutions
        res = (res,) if isinstance(res, int) else tuple(res)
        if any(not isinstance(r, int) or r < 2 for r in res) or any(b <= a for a, b in zip(res, res[1:])):
            raise UsageError(f"resolutions must be increasing integers >= 2, got {self.resolutions!r}")
        self.resolutions = res
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise UsageError(f"seed must be an integer, got {self.seed!r}")

    @classmethod
    def from_text(cls, text, experiment=None, out=None):
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise UsageError(f"line {lineno}: empty key")
            raw[key] = parse_value(value)
        if experiment is not None:
            raw["experiment"] = experiment
        if out is not None:
            raw["out"] = out
        if "experiment" not in raw:
            raise UsageError("config has no 'experiment' key")
        kw = {k: raw.pop(k) for k in RESERVED if k in raw}
        kw["out"] = str(kw.get("out", "cma-lab-out"))
        return cls(params=raw, **kw)

    @classmethod
    def from_file(cls, path, experiment=None, out=None):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as err:
            raise UsageError(f"cannot read config {path}: {err}") from None
        return cls.from_text(text, experiment, out)

    def get(self, key, default):
        return self.params.get(key, default)

    def res(self, *default):
        return self.resolutions or default


@dataclass
class ExperimentResult:
    records: list
    traces: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# experiments


def _record(name, params, value, ok, label="", resolutions=(0,), details=None, extrapolated=None):
    return EstimateRecord(
        name=name, params=params, estimate=float(value), family="", resolutions=resolutions,
        extrapolated=float(value if extrapolated is None else extrapolated), verdict=bool(ok),
        label=label, details=details or {},
    )


def exp_radial_roundtrip(cfg):
    """Solve det = 1 on the unit ball; compare with |z|^2 - 1 and check solve/apply identities."""
    size = cfg.res(2048)[-1]
    tol = float(cfg.get("tol", 1e-10))
    ball = RadialBall.geometric(cfg.n, 1.0, size)
    u = radial_ma_solve(RadialRHS(ball, np.ones(ball.size)))
    err = float(np.max(np.abs(u.v - (ball.rho_grid - 1.0))))
    f = radial_ma_apply(u).f
    e1 = float(np.max(np.abs(f - 1.0)))
    u2 = radial_ma_solve(RadialRHS(ball, f))
    e2 = float(np.max(np.abs(u2.v - u.v)))
    ok = err <= tol and e1 <= 1e-8 and e2 <= 1e-8
    return ExperimentResult([_record("radial-roundtrip", {"n": cfg.n}, err, ok, "max-error", (size,),
                                     {"apply_solve": e1, "solve_apply": e2})])


def exp_energy_consistency(cfg):
    """Direct vs by-parts energy on random admissible profiles, homogeneity and dilation."""
    size = cfg.res(1025)[-1]
    count = int(cfg.get("count", 50))
    ball = RadialBall.uniform(cfg.n, 1.0, size)
    worst_parts = worst_hom = worst_dil = 0.0
    for u in random_admissible_profiles(ball, count, cfg.seed):
        E = ma_energy(u)
        worst_parts = max(worst_parts, abs(energy_by_parts(u) - E) / E)
        worst_hom = max(worst_hom, abs(ma_energy(u.scaled(2.0)) - 2.0 ** (cfg.n + 1) * E) / E)
        worst_dil = max(worst_dil, abs(ma_energy(u.dilated(2.0)) - E) / E)
    ok = worst_parts <= 1e-8 and worst_hom <= 1e-12 and worst_dil <= 1e-8
    return ExperimentResult([_record("energy-consistency", {"n": cfg.n, "count": count}, worst_parts, ok,
                                     "rel-error", (size,), {"homogeneity": worst_hom, "dilation": worst_dil})])


def _flow_start(cfg):
    if cfg.backend == "planar":
        if cfg.n != 1:
            raise UsageError("the planar backend supports n = 1 only")
        cells = cfg.res(64)[-1]
        grid = PlanarGrid.unit_square(cells)
        u0 = GridField.from_function(grid, lambda x, y: -np.sin(np.pi * x) * np.sin(np.pi * y), potential=True)
        return u0, cells
    size = cfg.res(513)[-1]
    ball = RadialBall.uniform(cfg.n, 1.0, size)
    return RadialProfile.from_function(ball, lambda r: r - 1.0), size


def exp_descent_flow(cfg):
    """Descent flow for J_delta: monotone objective and small terminal residual."""
    u0, res = _flow_start(cfg)
    est = SobolevDescentFlow(
        p=float(cfg.get("p", 2.0)), lam=float(cfg.get("lam", 1.0)), M=float(cfg.get("M", 50.0)),
        delta=float(cfg.get("delta", 1e-2)), max_steps=int(cfg.get("steps", 1000)),
        min_steps=int(cfg.get("steps", 1000)),
    ).fit(u0)
    J = est.trace_.column("functional")
    rise = float(np.max(np.diff(J))) if len(J) > 1 else 0.0
    ok = rise <= 1e-9 and est.residual_ < 1e-6 and est.n_steps_ >= int(cfg.get("steps", 1000))
    rec = _record("descent-flow", {"n": cfg.n, "backend": cfg.backend}, est.residual_, ok, "residual", (res,),
                  {"max_increase": rise, "steps": est.n_steps_, "stagnated": est.stagnated_, "final_J": J[-1]})
    return ExperimentResult([rec], {"descent-flow": est.trace_})


def exp_mt_norm(cfg):
    """Moser-Trudinger flow terminal seminorm and the t e^(1-t) comparison."""
    size = cfg.res(257)[-1]
    alpha = float(cfg.get("alpha", 1.0))
    delta = float(cfg.get("delta", 0.5))
    ms = cfg.get("m", [cfg.n, cfg.n + 5])
    ms = ms if isinstance(ms, list) else [ms]
    ball = RadialBall.uniform(cfg.n, 1.0, size)
    u0 = RadialProfile.from_function(ball, lambda r: 0.3 * (r ** 1.5 - 1.0))
    records, traces = [], {}
    for m in ms:
        est = MoserTrudingerFlow(m=int(m), alpha=alpha, delta=delta, max_steps=int(cfg.get("steps", 500))).fit(u0)
        s = psh_seminorm(est.profile_)
        records.append(_record("mt-norm", {"n": cfg.n, "m": int(m)}, s, 0.99 <= s <= 1.01, "seminorm", (size,),
                               {"residual": est.residual_, "steps": est.n_steps_}))
        traces[f"mt-flow-m{int(m)}"] = est.trace_
        rec = norm_concentration_check(cfg.n, int(m), alpha, delta, [0.1, 0.05, 0.01])
        records.append(rec)
    return ExperimentResult(records, traces)


def exp_slice_mass(cfg):
    """Slice potential mass comparison on the quadratic and random profiles (n = 2)."""
    size = cfg.res(1025)[-1]
    count = int(cfg.get("count", 20))
    slack = float(cfg.get("slack", 0.02))
    ball = RadialBall.uniform(2, 1.0, size)
    quad = RadialProfile.from_function(ball, lambda r: r - 1.0)
    q = slice_mass_check(quad)
    e_int = abs(q.integral - 8 * math.pi ** 2) / (8 * math.pi ** 2)
    e_mass = abs(q.twice_mass - 32 * math.pi ** 2) / (32 * math.pi ** 2)
    recs = [_record("slice-quadratic", {"n": 2}, q.integral, e_int <= 1e-6 and e_mass <= 1e-6, "integral",
                    (size,), {"twice_mass": q.twice_mass})]
    worst, signs = 0.0, True
    for u in random_admissible_profiles(ball, count, cfg.seed):
        r = slice_mass_check(u, slack)
        worst = max(worst, r.ratio)
        signs = signs and r.max_boundary_term <= 0.0
    recs.append(_record("slice-random", {"n": 2, "count": count}, worst, worst <= 1 + slack and signs, "max-ratio",
                        (size,), {"boundary_sign_ok": signs}))
    return ExperimentResult(recs)


def exp_mt_alpha(cfg):
    """Bracket the Moser-Trudinger exponent on the log-cusp family."""
    rec = estimate_mt_alpha(cfg.n, cfg.backend, cfg.params)
    lo, hi = rec.bracket if rec.bracket else (0.0, 0.0)
    if cfg.n == 1 and rec.bracket:
        c = 2 * math.pi
        rec = _replace_verdict(rec, lo <= c <= hi and hi - lo <= 0.2 * c)
    return ExperimentResult([rec])


def _replace_verdict(rec, ok):
    from dataclasses import replace
    return replace(rec, verdict=bool(rec.verdict and ok))


def exp_weak_bm(cfg):
    """Bracket the critical exponent for unit-mass log cusps."""
    rec = bm_profile(cfg.n, "weak-BM", cfg.params)
    if rec.bracket:
        lo, hi = rec.bracket
        c = 4 * math.pi * cfg.n
        rec = _replace_verdict(rec, lo <= c <= hi and hi - lo <= 0.2 * c)
    return ExperimentResult([rec])


def exp_quasi_bm(cfg):
    """Blow-up slope of the near-critical exponential integral."""
    return ExperimentResult([bm_profile(cfg.n, "quasi-BM", cfg.params)])


def exp_bmq(cfg):
    """Beta schedule limit and boundedness/divergence of the A_f-normalized family."""
    q = cfg.get("q", 1)
    n = cfg.n
    sched = beta_iteration_schedule(q, n, int(cfg.get("k_max", 60)))
    recs = []
    if sched.converges:
        beta = sched.limit
        exact = isinstance(beta, type(sched.betas[0])) and beta == type(beta)(n) / (n - q)
        recs.append(_record("beta-schedule", {"n": n, "q": q}, float(beta), exact, str(beta),
                            details={"last": str(sched.betas[-1])}))
        weak = bm_profile(n, "weak-BM", {})
        delta = float(cfg.get("delta", bmq_delta(n, q, weak.bracket[0])))
        factor = float(cfg.get("beta_factor", 1.2))
        base = {"q": q, "delta": delta, "L_max": float(cfg.get("L_max", 100.0))}
        recs.append(bm_profile(n, "BMq", dict(base, beta=float(beta), expect="bounded")))
        recs.append(bm_profile(n, "BMq", dict(base, beta=factor * float(beta), expect="divergent")))
    else:
        beta = float(cfg.get("beta", n + 1))
        delta = float(cfg.get("delta", 0.1))
        recs.append(_record("beta-schedule", {"n": n, "q": q}, sched.betas[-1], True, "divergent-schedule"))
        recs.append(bm_profile(n, "BMq", {"q": q, "beta": beta, "delta": delta, "expect": "bounded"}))
    return ExperimentResult(recs)


def exp_brezis_merle(cfg):
    """Classical bound on random planar sources for several delta."""
    cells = cfg.res(64)[-1]
    count = int(cfg.get("count", 25))
    deltas = cfg.get("deltas", [math.pi / 2, math.pi, 2 * math.pi])
    grid = PlanarGrid.unit_square(cells)
    recs = []
    sols = [(f, poisson_solve(PoissonSystem(grid, f))) for f in random_sources(grid, count, cfg.seed)]
    for d in deltas:
        worst, ok = 0.0, True
        for f, u in sols:
            lhs, bound, holds = brezis_merle_check(u, f, float(d))
            worst = max(worst, lhs / bound)
            ok = ok and holds
        recs.append(_record("brezis-merle", {"delta": float(d), "count": count}, worst, ok, "max lhs/bound", (cells,)))
    return ExperimentResult(recs)


def exp_sobolev_T(cfg):
    """Upper bound for the Sobolev constant from family sweep and ratio flow."""
    p = float(cfg.get("p", cfg.n + 1))
    R = float(cfg.get("R", 1.0))
    return ExperimentResult([estimate_sobolev_T(cfg.n, p, cfg.backend, cfg.params, R)])


def exp_sobolev_scaling(cfg):
    """T on balls of radius 1/2, 1, 2 against the exponent -2n(n+1)/(p+1)."""
    p = float(cfg.get("p", cfg.n + 1))
    radii = [float(r) for r in cfg.get("radii", [0.5, 1.0, 2.0])]
    recs = [estimate_sobolev_T(cfg.n, p, "radial", cfg.params, r) for r in radii]
    T = [r.estimate for r in recs]
    target = -2.0 * cfg.n * (cfg.n + 1) / (p + 1)
    exps = [math.log(T[i + 1] / T[i]) / math.log(radii[i + 1] / radii[i]) for i in range(len(T) - 1)]
    decreasing = all(b < a for a, b in zip(T, T[1:]))
    ok = decreasing and all(abs(e - target) <= 0.01 * abs(target) for e in exps)
    recs.append(_record("sobolev-scaling", {"n": cfg.n, "p": p}, exps[-1], ok, "dilation exponent",
                        details={"exponents": exps, "target": target, "T": T}))
    return ExperimentResult(recs)


def exp_g_llogl(cfg):
    """L log L size of stationary Moser-Trudinger densities across m."""
    size = cfg.res(257)[-1]
    alpha = float(cfg.get("alpha", 1.0))
    delta = float(cfg.get("delta", 0.5))
    ms = cfg.get("m", [cfg.n, cfg.n + 2, cfg.n + 5])
    ball = RadialBall.uniform(cfg.n, 1.0, size)
    u0 = RadialProfile.from_function(ball, lambda r: r - 1.0)
    profs = [MoserTrudingerFlow(m=int(m), alpha=alpha, delta=delta).fit(u0).profile_ for m in ms]
    A, ok = g_llogl_check(profs, ms, alpha, delta)
    return ExperimentResult([_record("g-llogl", {"n": cfg.n, "m": list(ms)}, float(A.max()), ok, "max A", (size,),
                                     {"A": [float(a) for a in A]})])


REGISTRY = {
    "radial-roundtrip": exp_radial_roundtrip,
    "energy-consistency": exp_energy_consistency,
    "descent-flow": exp_descent_flow,
    "mt-norm": exp_mt_norm,
    "slice-mass": exp_slice_mass,
    "mt-alpha": exp_mt_alpha,
    "weak-bm": exp_weak_bm,
    "quasi-bm": exp_quasi_bm,
    "bmq": exp_bmq,
    "brezis-merle": exp_brezis_merle,
    "sobolev-T": exp_sobolev_T,
    "sobolev-scaling": exp_sobolev_scaling,
    "g-llogl": exp_g_llogl,
}


# ---------------------------------------------------------------------------
# reporting


def emit_report(records, n=None):
    """Sorted plain-text and JSON summaries of ``records``; returns ``(text, obj, failures)``."""
    if not records:
        return "empty report: no records\n", {"records": [], "failures": 0}, 0
    recs = sorted(records, key=lambda r: r.sort_key())
    dims = sorted({n} if n is not None else {int(r.params.get("n", 1)) for r in recs})
    conv = {str(d): ConventionConstants(d).as_dict() for d in dims}
    failures = sum(not r.verdict for r in recs)
    lines = ["# conventions: " + "; ".join(f"n={d}: kappa={c['kappa_n']:.6g}, c_n={c['c_n']:.6g}"
                                           for d, c in conv.items())]
    lines.append(f"{'name':<20} {'label':<18} {'estimate':>14} {'verdict':>8}  params")
    for r in recs:
        d = r.as_dict()
        params = ", ".join(f"{k}={v}" for k, v in sorted(d["params"].items()))
        lines.append(f"{r.name:<20} {r.label:<18} {r.estimate:>14.8g} {'pass' if r.verdict else 'FAIL':>8}  {params}")
    lines.append(f"# {len(recs)} records, {failures} failed")
    obj = {"conventions": conv, "records": [r.as_dict() for r in recs], "failures": failures}
    return "\n".join(lines) + "\n", obj, failures


def run_experiment(config):
    """Run ``config`` and write artifacts to ``config.out``; returns the exit status."""
    result = REGISTRY[config.experiment](config)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{config.experiment}-n{config.n}-{config.backend}"
    for name, trace in sorted(result.traces.items()):
        trace.to_csv(out / f"{stem}.{name}.trace.csv")
    recs = sorted(result.records, key=lambda r: r.sort_key())
    records_jsonl(recs, out / f"{stem}.records.jsonl")
    records_csv(recs, out / f"{stem}.summary.csv")
    text, obj, failures = emit_report(recs)
    dump_json(obj, out / f"{stem}.report.json")
    (out / f"{stem}.summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_FAIL if failures else EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="cma-lab", description="Numerical experiments for complex Monge-Ampere inequalities.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--experiment", default=None)
    run.add_argument("--out", default=None)
    sub.add_parser("list", help="print the experiment registry")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command == "list":
            for name, fn in sorted(REGISTRY.items()):
                doc = (fn.__doc__ or "").strip().splitlines()
                print(f"{name:<20} {doc[0] if doc else ''}")
            return EXIT_OK
        config = ExperimentConfig.from_file(args.config, args.experiment, args.out)
        t0 = time.perf_counter()
        status = run_experiment(config)
        print(f"# elapsed {time.perf_counter() - t0:.2f} s", file=sys.stderr)
        return status
    except UsageError as err:
        print(f"cma-lab: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except CMALabError as err:
        print(f"cma-lab: invalid parameters: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
