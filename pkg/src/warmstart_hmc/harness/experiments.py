"""Experiment definitions: arms to run and criteria to evaluate.

An experiment expands a configuration into independent arms (one per
dimension, seed and variant).  Each arm returns a table written as one CSV
file plus a dict of scalar metrics; the experiment then turns the metrics
of all arms into pass/fail criteria.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..analysis import (ShiftSchedule, acceptance_dichotomy, aux_recursion_check, chaos_tail_check,
                        contraction_check, strong_error_fit)
from ..core import PhasePoint, RngStream
from ..gaussian_exact import GaussianPhaseLaw, bias_floor, propagate_curves, warmstart_iterations
from ..integrators import LeapfrogParams
from ..potentials import make_gaussian, make_logcosh_perturbed, ProximalShiftedOracle
from ..samplers import (RECORD_FIELDS, MhmcParams, plan_two_phase, rgo_sample,
                        run_mhmc, run_unadjusted, two_phase_sample)
from .config import ExperimentConfig

TRAJECTORY_COLUMNS = RECORD_FIELDS
DIVERGENCE_COLUMNS = ("step", "grad_queries", "R2", "chi2", "KL-limit")
CHECK_COLUMNS = ("instance", "statistic", "value", "bound", "passed")


@dataclass
class Criterion:
    name: str
    instance: str
    statistic: str
    value: float
    bound: str
    passed: bool

    def as_row(self) -> dict:
        return {"criterion": self.name, "instance": self.instance, "statistic": self.statistic,
                "value": self.value, "bound": self.bound, "passed": self.passed}


@dataclass
class ArmResult:
    name: str
    columns: tuple
    rows: list
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0


def _records_to_rows(records) -> list:
    return [r.as_row() for r in records]


def _rng(seed: int, stream: int) -> np.random.Generator:
    return RngStream(seed, (stream,)).generator()


def _slope(xs, ys) -> tuple[float, float]:
    fit = stats.linregress(np.log(xs), np.log(ys))
    return float(fit.slope), float(fit.rvalue ** 2)


# ---------------------------------------------------------------------------
# arm functions (top level so they can run in worker processes)
# ---------------------------------------------------------------------------

def arm_figure1(d, seed, stream, arm, proposals):
    gen = _rng(seed, stream)
    h = d ** -0.25 if arm == "large" else d ** -0.5
    records = acceptance_dichotomy(d, proposals, gen, h_large=h, h_small=h)["large"]
    root = math.sqrt(d)
    probs = [r.accept_prob for r in records[1:proposals + 1]]
    after = next((r for r in records if r.grad_queries >= root), records[-1])
    reach = next((r for r in records if r.norm_x >= 0.8 * root), None)
    metrics = {
        "mean_accept": float(np.mean(probs)),
        "norm_after_sqrt_d_queries": after.norm_x,
        "queries_before_reach": float(reach.grad_queries if reach else records[-1].grad_queries),
        "reached": reach is not None,
    }
    return TRAJECTORY_COLUMNS, _records_to_rows(records), metrics


def arm_escape(d, seed, stream, h_scale, max_queries):
    gen = _rng(seed, stream)
    oracle = make_gaussian(np.ones(d))
    h = h_scale * d ** -0.25
    start = PhasePoint(np.zeros(d), gen.standard_normal(d))
    target = 0.8 * math.sqrt(d)
    _, records = run_unadjusted("obabco", start, oracle, h, math.sqrt(32.0), int(max_queries // 2) + 1, gen,
                                stop=lambda r: r.norm_x >= target)
    hit = next((r for r in records if r.norm_x >= target), None)
    return TRAJECTORY_COLUMNS, _records_to_rows(records), {"queries_to_escape": float(hit.grad_queries) if hit else math.inf}


def arm_warmstart(d, kappa, h_scale, threshold):
    spectrum = np.linspace(1.0, kappa, d)
    h = h_scale * d ** -0.25
    gamma = math.sqrt(32.0 * kappa)
    n = warmstart_iterations(spectrum, h, gamma, "obabco", 2.0, threshold)
    curves = propagate_curves(GaussianPhaseLaw.product(spectrum), "obabco", h, gamma, n, orders=(2.0,), kl=True)
    rows = []
    for step in range(n + 1):
        r2 = float(curves[2.0][step])
        rows.append({"step": step, "grad_queries": 2 * step, "R2": r2,
                     "chi2": math.expm1(r2) if r2 < 700 else math.inf, "KL-limit": float(curves["kl"][step])})
    floor = bias_floor("obabco", spectrum, h, gamma)
    return DIVERGENCE_COLUMNS, rows, {"N": n, "bias_floor": floor, "h": h}


def arm_strong(d, seed, stream, scheme, samples, log2_h):
    gen = _rng(seed, stream)
    oracle = make_gaussian(np.linspace(1.0, 4.0, d))
    hs = [2.0 ** -k for k in log2_h]
    fit = strong_error_fit(scheme, oracle, hs, samples, rng=gen)
    rows = [{"instance": f"{scheme} d={d} h={h!r}", "statistic": "rms_error_x|rms_error_p",
             "value": f"{ex!r}|{ep!r}", "bound": "", "passed": ""}
            for h, ex, ep in zip(fit.h_grid, fit.errors_x, fit.errors_p)]
    metrics = {"slope_x": fit.slope_x, "slope_p": fit.slope_p, "r2_x": fit.r2_x, "r2_p": fit.r2_p,
               "degenerate": fit.degenerate}
    return CHECK_COLUMNS, rows, metrics


def arm_contraction(d, seed, stream, beta, trials):
    gen = _rng(seed, stream)
    oracle = make_gaussian(np.linspace(1.0, beta, d))
    gamma = math.sqrt(32.0 * beta)
    h = 0.01 * math.sqrt(oracle.meta.alpha) / gamma ** 2
    res = contraction_check(oracle, gamma, h, trials, gen)
    bound = math.exp(-res.c_prime * res.rate_unit)
    rows = [{"instance": f"d={d} beta={beta} pair={i}", "statistic": "twisted_ratio", "value": float(r),
             "bound": repr(bound), "passed": bool(r < 1)} for i, r in enumerate(res.ratios)]
    return CHECK_COLUMNS, rows, {"max_ratio": res.max_ratio, "c_prime": res.c_prime}


def arm_aux(d, seed, stream, kappa, N, trials, c0, A):
    gen = _rng(seed, stream)
    oracle = make_gaussian(np.linspace(1.0, kappa, d))
    gamma = math.sqrt(32.0 * kappa)
    h = 0.01 / (math.sqrt(kappa) * gamma)
    sched = ShiftSchedule.for_target(oracle.meta, gamma, h, N, c0=c0, A=A)
    res = aux_recursion_check(oracle, gamma, h, N, sched, trials, gen)
    rows = []
    for k in range(res.ratios.shape[0]):
        worst = float(np.max(res.ratios[k]))
        bound = math.exp(-res.c_prime * res.rate_integrals[k])
        rows.append({"instance": f"kappa={kappa} d={d} step={k}", "statistic": "max_distance_ratio",
                     "value": worst, "bound": repr(bound), "passed": bool(worst <= bound * (1 + 1e-12))})
    return CHECK_COLUMNS, rows, {"c_prime": res.c_prime, "terminal_gap": res.terminal_gap,
                                 "max_ratio": float(np.max(res.ratios))}


def arm_chaos(d, seed, stream, kind, trials, deltas):
    gen = _rng(seed, stream)
    if kind == "synthetic":
        entries = gen.uniform(-1.0, 1.0, d)
        entries[0] = 1.0
        res = chaos_tail_check(entries, deltas, trials, gen)
    else:
        oracle = make_logcosh_perturbed(1.0, 1.0, 1.0, d)
        x = gen.standard_normal(d)
        res = chaos_tail_check(oracle.third_diagonal(x), deltas, trials, gen, beta_bar=oracle.meta.beta_h2)
    rows = [{"instance": f"{kind} d={d} delta={dl}", "statistic": "quantile_norm", "value": res.quantiles[dl],
             "bound": repr(res.bounds[dl]), "passed": bool(res.quantiles[dl] <= res.bounds[dl])} for dl in res.deltas]
    metrics = {f"ok_{dl}": bool(res.quantiles[dl] <= res.bounds[dl]) for dl in res.deltas}
    metrics.update({f"q_{dl}": res.quantiles[dl] for dl in res.deltas})
    metrics.update({f"bound_{dl}": res.bounds[dl] for dl in res.deltas})
    return CHECK_COLUMNS, rows, metrics


def arm_mhmc_exact(seed, stream, chains, steps, burn, ks_chains, ks_steps, h, K, x0):
    gen = _rng(seed, stream)
    oracle = make_gaussian(np.ones(1))
    params = MhmcParams(LeapfrogParams(h, K), lazy=True)
    moments = np.zeros(3)

    def accumulate(it, x):
        if it > burn:
            moments[:] += (x.size, x.sum(), (x * x).sum())

    x = np.full((chains, 1), float(x0))
    _, records, _ = run_mhmc(x, oracle, params, steps, gen, record_every=100, on_step=accumulate)
    n, s1, s2 = moments
    mean = s1 / n
    var = s2 / n - mean * mean
    xs = np.full((ks_chains, 1), float(x0))
    xs, _, _ = run_mhmc(xs, oracle, params, ks_steps, gen, record=False)
    ks = stats.kstest(xs[:, 0], "norm")
    crit = float(stats.kstwo.ppf(0.99, ks_chains))
    metrics = {"mean": float(mean), "variance": float(var), "samples": int(n), "ks_stat": float(ks.statistic),
               "ks_crit_1pct": crit}
    return TRAJECTORY_COLUMNS, _records_to_rows(records), metrics


def arm_two_phase(d, seed, stream, chains, eps, q):
    gen = _rng(seed, stream)
    oracle = make_logcosh_perturbed(1.0, 1.0, 1.0, d)
    plan = plan_two_phase(oracle.meta, d, q, eps)
    res = two_phase_sample(plan, oracle, gen, n_chains=chains, record=True)
    coord_means = res.x.mean(axis=0)
    metrics = {"phase2_accept": res.phase2_accept_rate, "grand_mean": float(coord_means.mean()),
               "max_coord_mean": float(np.max(np.abs(coord_means))), "grad_queries": res.grad_queries,
               "predicted_queries": plan.predicted_grad_queries, **{f"plan_{k}": v for k, v in plan.as_dict().items()}}
    return TRAJECTORY_COLUMNS, _records_to_rows(res.records), metrics


def arm_proximal(d, seed, stream, draws, kappa, centre_scale, eps):
    gen = _rng(seed, stream)
    spectrum = np.linspace(1.0, kappa, d)
    base = make_gaussian(spectrum)
    h = 1.0 / (2.0 * base.meta.beta)
    y = centre_scale * gen.standard_normal(d)
    shifted = ProximalShiftedOracle(base, y, h)
    factory = lambda meta, dim: plan_two_phase(meta, dim, 2.0, eps * eps / base.meta.kappa)  # noqa: E731
    x, rate = rgo_sample(base, np.broadcast_to(y, (draws, d)), h, factory, gen)
    precision = spectrum + 1.0 / h
    mean_exact = (y / h) / precision
    var_exact = 1.0 / precision
    mean_emp, var_emp = x.mean(axis=0), x.var(axis=0)
    rows = [{"instance": f"coord={i}", "statistic": "mean|var", "value": f"{mean_emp[i]!r}|{var_emp[i]!r}",
             "bound": f"{mean_exact[i]!r}|{var_exact[i]!r}", "passed": ""} for i in range(d)]
    metrics = {
        "mean_rel_err": float(np.linalg.norm(mean_emp - mean_exact) / np.linalg.norm(mean_exact)),
        "var_rel_err": float(np.max(np.abs(var_emp / var_exact - 1.0))),
        "shifted_kappa": shifted.meta.kappa,
        "accept": rate,
    }
    return CHECK_COLUMNS, rows, metrics


def arm_bias(d, log2_h, gamma_scale):
    spectrum = np.ones(d)
    gamma = gamma_scale * math.sqrt(32.0)
    hs = [2.0 ** -k for k in log2_h]
    rows, floors = [], []
    for h in hs:
        r2 = bias_floor("obabco", spectrum, h, gamma, 2.0)
        floors.append(r2)
        rows.append({"instance": f"d={d} h={h!r}", "statistic": "R2_floor", "value": r2,
                     "bound": repr(bias_floor("obabco", spectrum, h, gamma, 3.0)), "passed": ""})
    slope, r2fit = _slope(hs, floors)
    return CHECK_COLUMNS, rows, {"slope": slope, "fit_r2": r2fit}


ARM_FUNCTIONS = {
    "figure1": arm_figure1,
    "unadjusted-escape": arm_escape,
    "warmstart-scaling": arm_warmstart,
    "strong-error": arm_strong,
    "contraction": arm_contraction,
    "aux-recursion": arm_aux,
    "chaos": arm_chaos,
    "mhmc-exactness": arm_mhmc_exact,
    "two-phase-e2e": arm_two_phase,
    "proximal-e2e": arm_proximal,
    "bias-plateau": arm_bias,
}


def run_arm(experiment: str, name: str, kwargs: dict) -> ArmResult:
    start = time.perf_counter()
    columns, rows, metrics = ARM_FUNCTIONS[experiment](**kwargs)
    return ArmResult(name=name, columns=tuple(columns), rows=rows, metrics=metrics,
                     seconds=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# arm expansion
# ---------------------------------------------------------------------------

def _dims(cfg: ExperimentConfig, default):
    return cfg.dimensions or list(default)


def _list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def expand_arms(cfg: ExperimentConfig) -> list[tuple[str, dict]]:
    """List of ``(arm_name, kwargs)`` for the configured experiment."""
    e = cfg.experiment
    seeds = [s + cfg.seed_offset for s in cfg.seeds]
    arms = []

    def add(name, **kw):
        arms.append((name, kw))

    stream = 0
    if e == "figure1":
        for d in _dims(cfg, [10_000]):
            for s in seeds:
                for arm in ("large", "small"):
                    add(f"{arm}_d{d}_s{s}", d=d, seed=s, stream=stream, arm=arm,
                        proposals=int(cfg.get("proposals", 100)))
                    stream += 1
    elif e == "unadjusted-escape":
        for d in _dims(cfg, [10_000]):
            for s in seeds:
                add(f"d{d}_s{s}", d=d, seed=s, stream=stream, h_scale=float(cfg.get("h_scale", 1.0)),
                    max_queries=int(cfg.get("max_queries", 200 * round(d ** 0.25))))
                stream += 1
    elif e == "warmstart-scaling":
        for d in _dims(cfg, [2 ** 8, 2 ** 10, 2 ** 12, 2 ** 14]):
            add(f"d{d}", d=d, kappa=float(cfg.get("kappa", 4.0)), h_scale=float(cfg.get("h_scale", 0.5)),
                threshold=float(cfg.get("threshold", 1.0)))
    elif e == "strong-error":
        for scheme in _list(cfg.get("schemes", ["obabco", "obabo"])):
            for d in _dims(cfg, [4]):
                for s in seeds:
                    add(f"{scheme}_d{d}_s{s}", d=d, seed=s, stream=stream, scheme=scheme,
                        samples=int(cfg.get("samples", 1000)),
                        log2_h=[int(k) for k in _list(cfg.get("log2_h", [4, 5, 6, 7, 8]))])
                    stream += 1
    elif e == "contraction":
        for beta in _list(cfg.get("betas", [1.0, 4.0])):
            for d in _dims(cfg, [2, 10, 100]):
                for s in seeds:
                    add(f"beta{float(beta):g}_d{d}_s{s}", d=d, seed=s, stream=stream, beta=float(beta),
                        trials=int(cfg.get("trials", 1000)))
                    stream += 1
    elif e == "aux-recursion":
        for kappa in _list(cfg.get("kappas", [1.0, 4.0])):
            for d in _dims(cfg, [10]):
                for s in seeds:
                    add(f"kappa{float(kappa):g}_d{d}_s{s}", d=d, seed=s, stream=stream, kappa=float(kappa),
                        N=int(cfg.get("steps", 200)), trials=int(cfg.get("trials", 64)),
                        c0=float(cfg.get("c0", 3.0)), A=float(cfg.get("A", 100.0)))
                    stream += 1
    elif e == "chaos":
        for kind in _list(cfg.get("tensors", ["synthetic", "logcosh"])):
            for d in _dims(cfg, [64, 256, 1024]):
                for s in seeds:
                    add(f"{kind}_d{d}_s{s}", d=d, seed=s, stream=stream, kind=kind,
                        trials=int(cfg.get("trials", 10_000)),
                        deltas=[float(v) for v in _list(cfg.get("deltas", [0.1, 0.01]))])
                    stream += 1
    elif e == "mhmc-exactness":
        for s in seeds:
            add(f"s{s}", seed=s, stream=stream, chains=int(cfg.get("chains", 100)),
                steps=int(cfg.get("steps", 10_000)), burn=int(cfg.get("burn", 100)),
                ks_chains=int(cfg.get("ks_chains", 100_000)), ks_steps=int(cfg.get("ks_steps", 100)),
                h=float(cfg.get("h", 0.1)), K=int(cfg.get("K", 10)), x0=float(cfg.get("x0", 2.0)))
            stream += 1
    elif e == "two-phase-e2e":
        for d in _dims(cfg, [256]):
            for s in seeds:
                add(f"d{d}_s{s}", d=d, seed=s, stream=stream, chains=int(cfg.get("chains", 64)),
                    eps=float(cfg.get("eps", 0.1)), q=float(cfg.get("q", 2.0)))
                stream += 1
    elif e == "proximal-e2e":
        for d in _dims(cfg, [4]):
            for s in seeds:
                add(f"d{d}_s{s}", d=d, seed=s, stream=stream, draws=int(cfg.get("draws", 10_000)),
                    kappa=float(cfg.get("kappa", 4.0)), centre_scale=float(cfg.get("centre_scale", 2.0)),
                    eps=float(cfg.get("eps", 0.1)))
                stream += 1
    elif e == "bias-plateau":
        for d in _dims(cfg, [1]):
            add(f"d{d}", d=d, log2_h=[int(k) for k in _list(cfg.get("log2_h", [2, 3, 4, 5, 6]))],
                gamma_scale=float(cfg.get("gamma_scale", 1.0)))
    return arms


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def _crit(name, instance, statistic, value, bound, passed) -> Criterion:
    return Criterion(name, instance, statistic, float(value), bound, bool(passed))


def evaluate(cfg: ExperimentConfig, results: list[ArmResult]) -> list[Criterion]:
    """Turn arm metrics into pass/fail criteria."""
    e = cfg.experiment
    by = {r.name: r.metrics for r in results}
    out = []
    if e == "figure1":
        for name, m in by.items():
            d = int(name.split("_d")[1].split("_")[0])
            root = math.sqrt(d)
            if name.startswith("large"):
                out.append(_crit("figure1-large-acceptance", name, "mean_accept", m["mean_accept"], "< 0.05",
                                 m["mean_accept"] < 0.05))
                out.append(_crit("figure1-large-stuck", name, "norm_after_sqrt_d_queries",
                                 m["norm_after_sqrt_d_queries"], f"< {0.1 * root:g}",
                                 m["norm_after_sqrt_d_queries"] < 0.1 * root))
            else:
                out.append(_crit("figure1-small-acceptance", name, "mean_accept", m["mean_accept"], "> 0.4",
                                 m["mean_accept"] > 0.4))
                out.append(_crit("figure1-small-slow", name, "queries_before_reach", m["queries_before_reach"],
                                 f">= {root:g}", m["queries_before_reach"] >= root))
    elif e == "unadjusted-escape":
        dims = sorted({int(n.split("_")[0][1:]) for n in by})
        for d in dims:
            vals = [m["queries_to_escape"] for n, m in by.items() if n.startswith(f"d{d}_")]
            med = float(np.median(vals))
            bound = 200 * d ** 0.25
            out.append(_crit("unadjusted-escape", f"d={d} seeds={len(vals)}", "median_queries", med,
                             f"<= {bound:g}", med <= bound))
    elif e == "warmstart-scaling":
        ds = sorted(int(n[1:]) for n in by)
        ns = [by[f"d{d}"]["N"] for d in ds]
        slope, r2 = _slope(ds, ns)
        out.append(_crit("warmstart-scaling", f"d={ds} N={ns}", "loglog_slope", slope, "in [0.15, 0.35]",
                         0.15 <= slope <= 0.35))
    elif e == "strong-error":
        for name, m in by.items():
            scheme = name.split("_")[0]
            if m["degenerate"]:
                out.append(_crit("strong-error", name, "degenerate", 1, "not fitted", False))
                continue
            if scheme == "obabco":
                out.append(_crit("strong-error-obabco-p", name, "slope_p", m["slope_p"], "in [2.7, 3.3]",
                                 2.7 <= m["slope_p"] <= 3.3))
                out.append(_crit("strong-error-obabco-x", name, "slope_x", m["slope_x"], "in [3.7, 4.3]",
                                 3.7 <= m["slope_x"] <= 4.3))
                out.append(_crit("strong-error-fit", name, "r2_p", m["r2_p"], ">= 0.98", m["r2_p"] >= 0.98))
            else:
                out.append(_crit("strong-error-obabo-x", name, "slope_x", m["slope_x"], "in [2.7, 3.3]",
                                 2.7 <= m["slope_x"] <= 3.3))
            out.append(_crit("strong-error-fit", name, "r2_x", m["r2_x"], ">= 0.98", m["r2_x"] >= 0.98))
    elif e == "contraction":
        for name, m in by.items():
            out.append(_crit("contraction-ratio", name, "max_ratio", m["max_ratio"], "< 1", m["max_ratio"] < 1))
            out.append(_crit("contraction-rate", name, "c_prime", m["c_prime"], "> 0", m["c_prime"] > 0))
    elif e == "aux-recursion":
        for name, m in by.items():
            out.append(_crit("aux-recursion-rate", name, "c_prime", m["c_prime"], "> 0", m["c_prime"] > 0))
            out.append(_crit("aux-recursion-terminal", name, "terminal_gap", m["terminal_gap"], "== 0",
                             m["terminal_gap"] == 0.0))
    elif e == "chaos":
        for name, m in by.items():
            for key in [k for k in m if k.startswith("ok_")]:
                dl = key[3:]
                out.append(_crit("chaos-tail", f"{name} delta={dl}", "quantile", m[f"q_{dl}"],
                                 f"<= {m[f'bound_{dl}']:.6g}", m[key]))
    elif e == "mhmc-exactness":
        for name, m in by.items():
            out.append(_crit("mhmc-mean", name, "mean", m["mean"], "in [-0.01, 0.01]", abs(m["mean"]) <= 0.01))
            out.append(_crit("mhmc-variance", name, "variance", m["variance"], "in [0.98, 1.02]",
                             0.98 <= m["variance"] <= 1.02))
            out.append(_crit("mhmc-ks", name, "ks_stat", m["ks_stat"], f"< {m['ks_crit_1pct']:.6g}",
                             m["ks_stat"] < m["ks_crit_1pct"]))
    elif e == "two-phase-e2e":
        for name, m in by.items():
            out.append(_crit("e2e-acceptance", name, "phase2_accept", m["phase2_accept"], ">= 0.35",
                             m["phase2_accept"] >= 0.35))
            out.append(_crit("e2e-mean", name, "grand_mean", m["grand_mean"], "in [-0.05, 0.05]",
                             abs(m["grand_mean"]) <= 0.05))
            ratio = m["grad_queries"] / m["predicted_queries"]
            out.append(_crit("e2e-queries", name, "queries/predicted", ratio, "in [0.5, 2]", 0.5 <= ratio <= 2))
    elif e == "proximal-e2e":
        for name, m in by.items():
            out.append(_crit("rgo-mean", name, "mean_rel_err", m["mean_rel_err"], "<= 0.05", m["mean_rel_err"] <= 0.05))
            out.append(_crit("rgo-variance", name, "var_rel_err", m["var_rel_err"], "<= 0.05", m["var_rel_err"] <= 0.05))
            out.append(_crit("rgo-shifted-kappa", name, "shifted_kappa", m["shifted_kappa"], "<= 3",
                             m["shifted_kappa"] <= 3))
    elif e == "bias-plateau":
        for name, m in by.items():
            out.append(_crit("bias-plateau", name, "slope", m["slope"], "in [3.5, 4.5]", 3.5 <= m["slope"] <= 4.5))
    return out
