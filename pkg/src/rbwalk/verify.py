"""Acceptance criteria and per-module invariant suites.

Each ``criterion_k`` runs one acceptance criterion at a given budget and
returns one or more :class:`CheckResult` parts.  Parts flagged
``expected_fail`` are statements that are false or out of reach at desk
scale; they are still evaluated faithfully and reported, but ``verify-all``
does not count them toward its exit status.
"""

from __future__ import annotations

import itertools
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import mixing, stats
from .alcove import geometry
from .raytrace import hit_rate, trace
from .rng import RngStream
from .walk import WalkConfig, coupling_distance, simulate_continuous, simulate_discrete

SQRT2 = math.sqrt(2.0)
IRRATIONAL_B = (1.0, SQRT2)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    expected_fail: bool = False
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.ok else ("FAIL (expected)" if self.expected_fail else "FAIL")
        return f"[{tag}] {self.name}: {self.detail} ({self.seconds:.1f}s)"

    def as_dict(self) -> dict:
        return {"name": self.name, "ok": bool(self.ok), "detail": self.detail,
                "expected_fail": self.expected_fail, "seconds": round(self.seconds, 3)}


@dataclass(frozen=True)
class Budget:
    """Sample sizes per criterion; ``FULL`` matches the acceptance statement."""

    c1_N: int = 10_000
    c1_M: int = 100_000
    c1_tol: float | None = 0.02          # None means 3 standard errors
    c2_N: int = 10_000
    c2_M: int = 40_000
    c3_draws: int = 100
    c5_M: int = 100_000
    c5_n0: tuple = (0, 1000)
    c7_seeds: int = 16
    c7_elements: int = 50
    c7_N: int = 2000
    c8_runs: int = 100
    c8_T: float = 1000.0
    c9_N: int = 10_000
    c9_M: int = 10_000
    c9_types: tuple = ("A2", "G2")
    c10_N: int = 10_000
    c10_M: int = 10_000
    c10_m_max: int = 12
    c10_N_freq: int = 10**6
    c11_grid: tuple = (100, 1000, 10_000)
    c11_n0: tuple = (0, 1000)
    c11_M: int = 4000
    c12_lams: tuple = (2, 3)
    c12_n: int = 1000
    c12_M: int = 100_000
    c13_grid: tuple = (16, 32, 64)
    c13_M: int = 1000
    c14_N: int = 10_000
    c14_M: int = 10_000
    c15_N: int = 10_000
    c15_M: int = 10_000


FULL = Budget()
REDUCED = Budget(c1_N=2000, c1_M=20_000, c1_tol=None, c2_N=2000, c2_M=20_000, c3_draws=20,
                 c5_M=20_000, c7_seeds=4, c7_elements=10, c7_N=500, c8_runs=10, c8_T=200.0,
                 c9_N=1000, c9_M=20_000, c9_types=("A2",), c10_N=2000, c10_M=10_000, c10_m_max=10,
                 c10_N_freq=200_000, c11_grid=(100, 1000), c11_M=2000, c12_lams=(2,), c12_M=20_000,
                 c13_grid=(8, 16), c13_M=300, c14_N=2000, c14_M=4000, c15_N=2000, c15_M=10_000)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        parts = fn(*args, **kwargs)
        dt = time.perf_counter() - t0
        for r in parts:
            r.seconds = dt / len(parts)
        return parts
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def a2_reference(seed: int = 0, p: float = 0.3) -> WalkConfig:
    return WalkConfig("A2", p, IRRATIONAL_B, seed=seed)


# --------------------------------------------------------------- criteria

@_timed
def criterion_1(budget: Budget = FULL) -> list[CheckResult]:
    """Simple random walk limit in A1 at p = 1/2."""
    est = stats.empirical_sigma(WalkConfig("A1", 0.5, (1.0,), seed=1), budget.c1_N, budget.c1_M)
    tol = budget.c1_tol if budget.c1_tol is not None else 3.0 * est.se
    ok = abs(est.sigma2 - 1.0) <= tol
    return [CheckResult("1 A1 p=0.5 sigma2 = 1", ok,
                        f"sigma2={est.sigma2:.5f} se={est.se:.5f} |err|={abs(est.sigma2 - 1):.5f} tol={tol:.4f}")]


@_timed
def criterion_2(budget: Budget = FULL) -> list[CheckResult]:
    """A1 closed form (1-p)/p, empirically and by the covariance series."""
    out = []
    for p in (0.3, 0.7):
        cfg = WalkConfig("A1", p, (1.0,), seed=2)
        target = stats.a1_sigma2(p)
        est = stats.empirical_sigma(cfg, budget.c2_N, budget.c2_M)
        ser = stats.sigma_via_series(cfg, m_max=12, N_freq=10_000)
        ok_emp = abs(est.sigma2 - target) <= 3.0 * est.se
        ok_ser = abs(ser.sigma2 - target) <= 1e-3
        out.append(CheckResult(f"2 A1 p={p} sigma2 = (1-p)/p", ok_emp and ok_ser,
                               f"target={target:.6f} empirical={est.sigma2:.5f}+-{est.se:.5f} "
                               f"series={ser.sigma2:.6f} (|err|={abs(ser.sigma2 - target):.2e})"))
    return out


@_timed
def criterion_3(budget: Budget = FULL) -> list[CheckResult]:
    """Averaging over the finite Weyl group gives Tr(X)/d times the identity."""
    out = []
    rng = np.random.default_rng(3)
    for t in ("A2", "B2", "G2", "F4"):
        d = geometry(t).rank
        worst = 0.0
        for _ in range(budget.c3_draws):
            X = rng.standard_normal((d, d))
            err = np.abs(stats.schur_average(X, t) - np.trace(X) / d * np.eye(d)).max()
            worst = max(worst, float(err))
        out.append(CheckResult(f"3 Schur identity {t}", worst <= 1e-10, f"max error {worst:.2e}"))
    return out


@_timed
def criterion_4(budget: Budget = FULL) -> list[CheckResult]:
    """Contraction constants: A1 closed form; A2 exhaustive over short windows."""
    ps = np.linspace(0.0, 1.0, 11)
    err = max(abs(mixing.contraction_constant((0, 1), float(p), "A1")[0] - (2 * p - 1) ** 2) for p in ps)
    out = [CheckResult("4a A1 c((0,1),p) = (2p-1)^2", err <= 1e-12, f"max error {err:.2e} over 11 p")]
    p = 0.3
    bad_stated, bad_generating, n_words = [], [], 0
    for m in range(1, 5):
        for iota in itertools.product(range(3), repeat=m):
            n_words += 1
            c, _ = mixing.contraction_constant(iota, p, "A2")
            contracts = c < 1.0 - 1e-12
            full = set(iota) == {0, 1, 2}
            if contracts != full or (not full and abs(c - 1.0) > 1e-12):
                bad_stated.append((iota, round(c, 6)))
            if contracts != mixing.generates_W(iota, "A2"):
                bad_generating.append(iota)
    out.append(CheckResult(
        "4b A2 c<1 iff window holds all of {0,1,2}, else c=1", not bad_stated,
        f"{len(bad_stated)}/{n_words} windows violate it, e.g. {bad_stated[:3]}"
        " (two distinct labels already generate W in A2)", expected_fail=True))
    out.append(CheckResult("4c A2 c<1 iff window labels generate W", not bad_generating,
                           f"{len(bad_generating)}/{n_words} mismatches"))
    return out


@_timed
def criterion_5_6(budget: Budget = FULL) -> list[CheckResult]:
    """Mixing bound and step-bias decay on the A2 reference, from two n0."""
    cfg = a2_reference(seed=5)
    G = cfg.geom.require_group()
    curves = [mixing.mixing_curve(cfg, 40, budget.c5_M, n0=n0) for n0 in budget.c5_n0]
    c_hat = curves[0].c_hat
    ns = np.arange(41)
    margins = [float((cv.tv - (c_hat ** ns + 3.0 * cv.band)).max()) for cv in curves]
    out = [CheckResult("5 A2 TV(pi(w_n)) <= c^n + 3 bands, n0 in {0,1000}", max(margins) <= 0.0,
                       f"c_hat={c_hat:.4f} worst margin {max(margins):+.4f} band={curves[0].band:.4f}")]
    worst = -np.inf
    for n0 in budget.c5_n0:
        mc, exact, se = mixing.step_bias(cfg, 40, n0, budget.c5_M)
        bound = (1.0 - cfg.p) * G.order * c_hat ** np.arange(41) + 3.0 * se
        worst = max(worst, float((mc - bound).max()))
    out.append(CheckResult("6 A2 |E[dX_{n+n0} | F_n0]| <= (1-p)|W|c^n + band", worst <= 0.0,
                           f"worst margin {worst:+.4f}"))
    return out


@_timed
def criterion_7(budget: Budget = FULL) -> list[CheckResult]:
    """Cutting sequences ignore the seed and are invariant under the affine Weyl group."""
    cfg = a2_reference()
    geom = cfg.geom
    ref = cfg.cutting(budget.c7_N).labels
    same_seed = all(np.array_equal(simulate_discrete(cfg.start, cfg.direction, cfg.p, budget.c7_N,
                                                     RngStream(s, 0), geom).labels, ref)
                    for s in range(budget.c7_seeds))
    rng = np.random.default_rng(7)
    G = geom.require_group()
    same_orbit = 0
    for _ in range(budget.c7_elements):
        iso = geom.tables.isometry(int(rng.integers(G.order)), rng.integers(-4, 5, geom.rank))
        seq = trace(iso(cfg.start), iso.linear @ cfg.direction, budget.c7_N, geom)
        same_orbit += bool(np.array_equal(seq.labels, ref))
    return [CheckResult(f"7 labels identical across {budget.c7_seeds} seeds", same_seed,
                        f"N={budget.c7_N}"),
            CheckResult(f"7 labels invariant under {budget.c7_elements} affine Weyl elements",
                        same_orbit == budget.c7_elements, f"{same_orbit}/{budget.c7_elements} agree")]


@_timed
def criterion_8(budget: Budget = FULL) -> list[CheckResult]:
    """Coupling of the continuous walk with the discrete chain."""
    cfg = a2_reference()
    geom = cfg.geom
    k_b = hit_rate(cfg.direction, geom.spec)
    worst = 0.0
    for r in range(budget.c8_runs):
        cont, disc = simulate_continuous(cfg.start, cfg.direction, cfg.p, budget.c8_T, RngStream(8, r),
                                         geom, with_discrete=True)
        worst = max(worst, coupling_distance(cont, disc, k_b))
    bound = 2.0 * geom.frame.diameter
    return [CheckResult("8 sup |L_t - X_floor(k_b t)| <= 2 diam", worst <= bound,
                        f"sup={worst:.4f} bound={bound:.4f} over {budget.c8_runs} runs T={budget.c8_T:g}")]


@_timed
def criterion_9(budget: Budget = FULL) -> list[CheckResult]:
    """Isotropy and Gaussian moments of the rescaled endpoint."""
    out = []
    for t in budget.c9_types:
        cfg = WalkConfig(t, 0.3, IRRATIONAL_B, seed=9)
        Y = stats.scaled_endpoints(cfg, budget.c9_N, budget.c9_M)
        T2 = stats.moment_tensor_from_samples(Y, 2)
        off = np.abs(T2.entries[0, 1]) / T2.se[0, 1]
        T3 = stats.moment_tensor_from_samples(Y, 3)
        z3 = float((np.abs(T3.entries) / T3.se).max())
        ratio = stats.fourth_moment_ratio(stats.moment_tensor_from_samples(Y, 4))
        ok = off < 3.0 and z3 < 3.0 and abs(ratio - 3.0) <= 0.3
        out.append(CheckResult(f"9 {t} isotropy and Gaussian moments", ok,
                               f"offdiag z={off:.2f} third-moment max z={z3:.2f} fourth ratio={ratio:.3f}"))
    return out


@_timed
def criterion_10(budget: Budget = FULL) -> list[CheckResult]:
    """Covariance series against the empirical variance."""
    cfg = a2_reference(seed=10)
    emp = stats.empirical_sigma(cfg, budget.c10_N, budget.c10_M)
    ser = stats.sigma_via_series(cfg, m_max=budget.c10_m_max, N_freq=budget.c10_N_freq)
    rel = abs(ser.sigma2 - emp.sigma2) / emp.sigma2
    return [CheckResult("10 A2 series sigma2 within 5% of empirical", rel <= 0.05,
                        f"series={ser.sigma2:.4f} empirical={emp.sigma2:.4f}+-{emp.se:.4f} rel={rel:.4f}")]


@_timed
def criterion_11(budget: Budget = FULL) -> list[CheckResult]:
    """Linear growth of f(n) and the induction inequality."""
    cfg = a2_reference(seed=11)
    g = stats.growth_function(cfg, budget.c11_grid, budget.c11_n0, budget.c11_M)
    idx = [int(np.where(g.n == n)[0][0]) for n in budget.c11_grid]
    ratio = g.ratio[idx]
    se = g.se[idx] / np.asarray(budget.c11_grid, dtype=float)
    band_ok = bool(np.all(ratio > 3.0 * se) and ratio.max() <= 2.0 * ratio.min())
    applicable = [c for c in g.checks if c["applicable"]]
    ineq_ok = all(c["holds"] for c in g.checks)
    return [CheckResult("11 f(n)/n in a fixed positive band", band_ok,
                        "f/n=" + ", ".join(f"{r:.3f}" for r in ratio)),
            CheckResult("11 f(n+m) >= f(n)+f(m)-2C sqrt(f(m)) within bands", ineq_ok,
                        f"{len(applicable)} applicable pairs, C={g.C:.2f}")]


@_timed
def criterion_12(budget: Budget = FULL) -> list[CheckResult]:
    """Equidistribution on the finite quotients of the affine Weyl group."""
    out = []
    cfg = a2_reference(seed=12)
    for lam in budget.c12_lams:
        q = mixing.quotient_equidistribution(cfg, lam, budget.c12_n, budget.c12_M, record=[budget.c12_n])
        dev = float(q.deviation[-1])
        out.append(CheckResult(f"12 A2 quotient lambda={lam} deviation < 2/|D|", dev < 2.0 / q.size,
                               f"|D|={q.size} deviation={dev:.5f} (exact {q.deviation_exact[-1]:.2e})"
                               f" threshold={2.0 / q.size:.4f}"))
    return out


@_timed
def criterion_13(budget: Budget = FULL) -> list[CheckResult]:
    """Martingale approximation error and the correction-term bound."""
    cfg = a2_reference(seed=13)
    meds, corr_ok, worst = [], True, 0.0
    for n in budget.c13_grid:
        m = stats.martingale_error(cfg, n, budget.c13_M)
        meds.append(m.median)
        corr_ok &= bool(np.all(m.correction_norms <= m.correction_bound))
        worst = max(worst, float((m.correction_norms / m.correction_bound).max()))
    decreasing = all(a > b for a, b in zip(meds, meds[1:]))
    return [CheckResult("13 median martingale error strictly decreasing", decreasing,
                        "medians " + ", ".join(f"n={n}:{v:.4f}" for n, v in zip(budget.c13_grid, meds)),
                        expected_fail=True),
            CheckResult("13 correction terms <= C/i^2", corr_ok, f"max ratio to bound {worst:.3e}")]


@_timed
def criterion_14(budget: Budget = FULL) -> list[CheckResult]:
    """Brownian proxies for the rescaled continuous walk."""
    rep = stats.functional_tests(a2_reference(seed=14), budget.c14_N, budget.c14_M)
    ks = ", ".join(f"t={t}:{v:.4f}" for t, v in rep.ks.items())
    corr = max(abs(v) for v in rep.increment_corr.values())
    return [CheckResult("14 KS below 1% critical value, increments uncorrelated", rep.passes(),
                        f"KS {ks} crit={rep.ks_critical:.4f}; max |corr|={corr:.4f} band={rep.corr_band:.4f}")]


@_timed
def criterion_15(budget: Budget = FULL) -> list[CheckResult]:
    """Continuity spot check of sigma2 at two nearby fully irrational directions."""
    th = math.atan2(SQRT2, 1.0)
    ests = []
    for k, dth in enumerate((0.0, 1e-3 * math.sqrt(3.0))):
        cfg = WalkConfig("A2", 0.3, (math.cos(th + dth), math.sin(th + dth)), seed=15)
        ests.append(stats.empirical_sigma(cfg, budget.c15_N, budget.c15_M, stream_offset=k * budget.c15_M))
    diff = abs(ests[0].sigma2 - ests[1].sigma2)
    band = 3.0 * math.hypot(ests[0].se, ests[1].se)
    return [CheckResult("15 sigma2 continuous across two nearby directions", diff <= band,
                        f"sigma2={ests[0].sigma2:.4f}, {ests[1].sigma2:.4f} diff={diff:.4f} band={band:.4f}")]


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5_6, criterion_7, criterion_8,
            criterion_9, criterion_10, criterion_11, criterion_12, criterion_13, criterion_14, criterion_15)


def run_all(budget: Budget = REDUCED, stream=sys.stderr) -> list[CheckResult]:
    """Every criterion at ``budget``; stops at the first unexpected failure."""
    results = []
    for crit in CRITERIA:
        parts = crit(budget)
        for r in parts:
            if stream is not None:
                print(r.line(), file=stream, flush=True)
        results.extend(parts)
        if any(not r.ok and not r.expected_fail for r in parts):
            break
    return results


# ----------------------------------------------------------- module suites

def _suite_simulate() -> list[CheckResult]:
    return criterion_7(REDUCED) + criterion_8(REDUCED)


def _suite_sigma() -> list[CheckResult]:
    return criterion_2(REDUCED) + criterion_3(REDUCED)


def _suite_mixing() -> list[CheckResult]:
    parts = criterion_4(REDUCED)
    cfg = a2_reference()
    curve = mixing.mixing_curve(cfg, 30, 5000)
    mono = bool(np.all(np.diff(curve.tv_exact) <= 1e-12))
    close = bool(np.all(np.abs(curve.tv - curve.tv_exact) <= 5.0 * curve.band))
    parts.append(CheckResult("exact TV non-increasing, Monte Carlo within 5 bands", mono and close,
                             f"c_env={curve.c_envelope:.4f}"))
    return [r for r in parts if not r.expected_fail]


def _suite_freq() -> list[CheckResult]:
    from .raytrace import window_frequencies

    geom = geometry("A2")
    tab = window_frequencies(geom.frame.centroid, (0.0, 1.0), 1, 3000, 0, geom)
    thirds = all(abs(tab.frequency((i,)) - 1 / 3) < 1e-3 for i in range(3))
    tab2 = window_frequencies(geom.frame.centroid, IRRATIONAL_B, 3, 30_000, 0, geom)
    total = abs(sum(tab2.frequencies.values()) - 1.0) < 1e-12
    return [CheckResult("rational direction (0,1) has label frequencies 1/3", thirds, ""),
            CheckResult("window frequencies sum to 1", total, f"{len(tab2.frequencies)} patterns")]


def _suite_moments() -> list[CheckResult]:
    T4 = stats.gaussian_moment_tensor(4, 1.0, 2)
    ok = T4.is_symmetric() and abs(T4.entries[0, 0, 0, 0] - 3.0) < 1e-12 \
        and abs(T4.entries[0, 0, 1, 1] - 1.0) < 1e-12
    return [CheckResult("Gaussian 4th moment tensor is symmetric with 3:1 ratio", ok, "")] + criterion_9(REDUCED)


def _suite_growth() -> list[CheckResult]:
    return criterion_11(REDUCED)


def _suite_martingale() -> list[CheckResult]:
    cfg = a2_reference()
    sched = stats.martingale_schedule(6, 0.7)
    labels = cfg.cutting(int(sched.s[6])).labels
    h = stats.block_conditional_means(cfg.geom, labels, cfg.p, sched, 6)
    seq = cfg.cutting(int(sched.s[6]))
    g = int(seq.ray_g[sched.block_start(3)])
    mc = stats.conditional_mean_mc(cfg, sched, 3, g, 40_000)
    err = float(np.abs(mc - h[3][g]).max())
    parts = [CheckResult("exact block conditional mean matches nested Monte Carlo", err < 0.05,
                         f"max error {err:.4f}")]
    return parts + [r for r in criterion_13(REDUCED) if not r.expected_fail]


def _suite_functional() -> list[CheckResult]:
    return criterion_14(REDUCED)


MODULE_SUITES = {"simulate": _suite_simulate, "sigma": _suite_sigma, "mixing": _suite_mixing,
                 "freq": _suite_freq, "moments": _suite_moments, "growth": _suite_growth,
                 "martingale": _suite_martingale, "functional": _suite_functional}


def run_module_suite(command: str, stream=sys.stderr) -> list[CheckResult]:
    results = MODULE_SUITES[command]()
    if stream is not None:
        for r in results:
            print(r.line(), file=stream, flush=True)
    return results
