"""The acceptance suite: twelve numerical gates plus the reproducibility check.

Each gate is a function of a :class:`SuiteConfig` that returns a
:class:`CriterionResult`. All randomness comes from children of the config
seed, so a gate is a deterministic function of the config. Monte Carlo loops
go through :func:`ordered_map`, which merges worker results in seed order.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np
from scipy import special
from scipy.linalg import eigvalsh_tridiagonal

from . import edgecouple, gbe, riccati, sae, sai
from .airy import ai, ai_prime
from .rng import Seed, sample_brownian_path, zero_path
from .stats import ks_critical, ks_one_sample, ks_two_sample


@dataclass
class SuiteConfig:
    """Sizes of every gate. Defaults are the full-size suite."""

    seed: int = 20240601
    workers: int = 1
    # 2: random draws for the identity checks
    identity_draws: int = 20
    # 5
    phi_M: int = 100_000
    # 6
    clt_N: int = 100_000
    clt_M: int = 10_000
    # 7
    counting_paths: int = 100
    # 8
    tw_M: int = 10_000
    tw_N: int = 2000
    # 9
    envelope_seeds: int = 1000
    # 10
    coupled_seeds: int = 200
    coupled_N: tuple = (100_000, 400_000, 800_000)
    # 11
    planar_M: int = 1000
    planar_N: int = 10_000
    # 12
    shift_M: int = 10_000

    def set(self, key: str, raw: str):
        """Assign ``key`` from its string form (config files and flags)."""
        names = {f.name: f for f in fields(self)}
        if key not in names:
            raise KeyError(f"unknown config key {key!r}")
        cur = getattr(self, key)
        if isinstance(cur, tuple):
            val = tuple(int(float(x)) for x in raw.replace(",", " ").split())
            if not val:
                raise ValueError(f"{key} needs at least one value")
        else:
            val = int(float(raw))
            if float(raw) != val:
                raise ValueError(f"{key} must be an integer")
        setattr(self, key, val)

    def scale_monte_carlo(self, M: int):
        """Replace every Monte Carlo count by ``M`` (quick runs)."""
        for k in ("phi_M", "clt_M", "counting_paths", "tw_M", "envelope_seeds",
                  "coupled_seeds", "planar_M", "shift_M"):
            setattr(self, k, int(M))

    def as_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}


def load_config(path) -> SuiteConfig:
    """Parse a ``key = value`` file (``#`` starts a comment)."""
    cfg = SuiteConfig()
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            cfg.set(k, v)
    return cfg


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)


def ordered_map(fn: Callable, items, workers: int = 1, chunksize: int = 16) -> list:
    """``[fn(x) for x in items]``, on a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunksize))


def _seed(cfg: SuiteConfig, number: int) -> Seed:
    return Seed(cfg.seed).child(number)


# ---------------------------------------------------------------------------
# 1: Airy reduction


def c1_airy_reduction(cfg: SuiteConfig) -> CriterionResult:
    dt, T, lo = 1e-4, 8.0, -5.0
    path = zero_path(lo, dt, int(round((T - lo) / dt)))
    sol = sae.solve_ivp(path, 0.0, T, float(ai(T)), float(ai_prime(T)), lo, T, dt)
    err = float(np.max(np.abs(sol.phi - ai(sol.times))))
    return CriterionResult(1, "Airy reduction (B = 0)", err < 1e-3,
                           f"sup |phi - Ai| on [-5, 8] = {err:.3e} (gate 1e-3)",
                           {"sup_error": err, "dt": dt})


# ---------------------------------------------------------------------------
# 2: Wronskian and kernel identities


def _identity_draw(args):
    seed, dt = args
    gen = seed.generator()
    lam = float(gen.uniform(-3.0, 3.0))
    beta = float(gen.choice([1.0, 2.0, 4.0]))
    path = sample_brownian_path(seed.child(0), -2.0, dt, int(round(6.0 / dt)), beta, "two-sided")
    f, g = sae.dirichlet_neumann(path, lam, 1.0, -1.0, 3.0, dt)
    w_err = float(np.max(np.abs(sae.wronskian(f, g) - 1.0)))
    t, u = 2.0, 0.5
    rel = 0.0
    for v in ("value", "du", "dt", "dtdu"):
        vals = [sae.sa_kernel(path, lam, t, u, v, base=b, dt=dt) for b in (0.0, -1.0, None)]
        ref = vals[2]
        for x in vals[:2]:
            rel = max(rel, abs(x - ref) / max(abs(ref), 1e-300))
    return lam, beta, w_err, rel


def c2_identities(cfg: SuiteConfig) -> CriterionResult:
    dt = 1e-4
    s = _seed(cfg, 2)
    out = ordered_map(_identity_draw, [(s.child(i), dt) for i in range(cfg.identity_draws)],
                      cfg.workers, 1)
    w = max(o[2] for o in out)
    rel = max(o[3] for o in out)
    ok = w <= 10 * dt and rel <= 1e-6
    return CriterionResult(2, "Wronskian and kernel identities", ok,
                           f"max |W - 1| = {w:.3e} (gate {10 * dt:.0e}); "
                           f"max kernel relative gap = {rel:.3e} (gate 1e-6)",
                           {"wronskian_error": w, "kernel_relative_gap": rel,
                            "draws": len(out)})


# ---------------------------------------------------------------------------
# 3: recurrence and determinant


def c3_recurrence(cfg: SuiteConfig) -> CriterionResult:
    s = _seed(cfg, 3)
    gen = s.generator()
    det_err = 0.0
    for N in range(2, 9):
        ens = gbe.sample_jacobi(s.child(N), N, float(gen.choice([1.0, 2.0, 4.0])))
        zs = [float(gen.uniform(-1.5, 1.5)), complex(gen.uniform(-1, 1), gen.uniform(0.1, 1))]
        for z in zs:
            seq = gbe.transfer_recurrence(ens, z)
            rec = seq.values[-1] * np.exp(seq.log_scale[-1])
            dense = np.linalg.det(z * np.eye(N) - ens.matrix())
            det_err = max(det_err, abs(rec - dense) / abs(dense))
    N = 2000
    ens = gbe.sample_jacobi(s.child(0), N, 2.0)
    window = (-10.0, 3.0)
    zeros = gbe.polynomial_zeros(ens, window)
    diag, off2 = ens.coefficients()
    ev = gbe.edge_rescale(eigvalsh_tridiagonal(diag, np.sqrt(off2)), N)[::-1]
    ev = ev[(ev > window[0]) & (ev < window[1])]
    same = zeros.size == ev.size
    zero_err = float(np.max(np.abs(zeros - ev))) if same and ev.size else math.inf
    ok = det_err < 1e-10 and same and zero_err < 1e-8
    return CriterionResult(3, "Recurrence and determinant", ok,
                           f"N<=8 relative error {det_err:.2e} (gate 1e-10); N=2000: "
                           f"{zeros.size} zeros vs {ev.size} eigenvalues, max gap {zero_err:.2e} "
                           "in edge units (gate 1e-8)",
                           {"det_relative_error": float(det_err), "zeros": int(zeros.size),
                            "eigenvalues": int(ev.size), "zero_error": zero_err})


# ---------------------------------------------------------------------------
# 4: Plancherel-Rotach


def c4_plancherel_rotach(cfg: SuiteConfig) -> CriterionResult:
    N = 4000
    lams = np.linspace(-2.0, 2.0, 81)
    m, l = gbe.psi_table(None, lams, [N], N=N)
    psi = (m[:, 0] * np.exp(l[:, 0])).real
    a = ai(lams)
    rel = float(np.max(np.abs(psi / a - 1.0)))
    absolute = float(np.max(np.abs(psi - a)))
    return CriterionResult(4, "Plancherel-Rotach at N = 4000", rel < 0.02,
                           f"sup relative error {rel:.4f} (gate 0.02); sup absolute error {absolute:.4f}",
                           {"relative_sup": rel, "absolute_sup": absolute, "N": N})


# ---------------------------------------------------------------------------
# 5: E Phi = pi


PHI_POINTS = ((8, 0.3), (30, 1.0), (60, 1.4))


def c5_mean_characteristic(cfg: SuiteConfig) -> CriterionResult:
    s = _seed(cfg, 5)
    rows = []
    ok = True
    for j, (N, z) in enumerate(PHI_POINTS):
        parts = []
        left = cfg.phi_M
        c = 0
        while left > 0:  # bounded memory: blocks of 2e4 replicates
            m = min(left, 20_000)
            parts.append(gbe.characteristic_samples(s.child(j, c), N, 2.0, z, m))
            left -= m
            c += 1
        x = np.concatenate(parts)
        pi = gbe.hermite_recurrence(N, z, N)
        target = float(pi.values[-1] * np.exp(pi.log_scale[-1]))
        se = float(np.std(x, ddof=1) / math.sqrt(x.size))
        zs = (float(np.mean(x)) - target) / se
        ok &= abs(zs) < 3.0
        rows.append({"N": N, "z": z, "mean": float(np.mean(x)), "pi_N": target,
                     "standard_error": se, "z_score": zs})
    return CriterionResult(5, "E Phi_N = pi_N", bool(ok),
                           "z-scores " + ", ".join(f"{r['z_score']:+.2f}" for r in rows)
                           + " (gate |z| < 3)", {"points": rows})


# ---------------------------------------------------------------------------
# 6: edge CLT


def _log_psi(args):
    seed, N, beta = args
    return edgecouple.log_abs_psi_at_edge(gbe.sample_jacobi(seed, N, beta))


def _clt(cfg, s, beta):
    N = cfg.clt_N
    vals = np.array(ordered_map(_log_psi, [(s.child(i), N, beta) for i in range(cfg.clt_M)],
                                cfg.workers, 64))
    z = (vals + math.log(N) / (3 * beta)) / math.sqrt(2 * math.log(N) / (3 * beta))
    return vals, ks_one_sample(z, special.ndtr)


def c6_edge_clt(cfg: SuiteConfig) -> CriterionResult:
    s = _seed(cfg, 6)
    v2, ks2 = _clt(cfg, s.child(2), 2.0)
    v1, _ = _clt(cfg, s.child(1), 1.0)
    var2, var1 = float(np.var(v2, ddof=1)), float(np.var(v1, ddof=1))
    pred = math.log(cfg.clt_N) / 3.0
    ratio = var1 / var2
    ok = ks2 < 0.05 and abs(var2 / pred - 1.0) <= 0.15 and 1.7 <= ratio <= 2.3
    return CriterionResult(6, "Edge CLT", ok,
                           f"KS {ks2:.4f} (gate 0.05); variance {var2:.3f} vs {pred:.3f} "
                           f"(gate 15%); beta 1/2 variance ratio {ratio:.3f} (gate [1.7, 2.3]); "
                           f"mean of standardized value {float(np.mean(v2) + pred / 2) / math.sqrt(pred):+.3f}",
                           {"ks": ks2, "variance_beta2": var2, "predicted": pred,
                            "variance_beta1": var1, "ratio": ratio, "mean_beta2": float(np.mean(v2))})


# ---------------------------------------------------------------------------
# 7: counting equivalence


COUNT_DT = 1e-3
COUNT_T = 15.0


def _counting_case(seed):
    path = sample_brownian_path(seed, 0.0, COUNT_DT, int(round(COUNT_T / COUNT_DT)), 2.0)
    ric = riccati.sample_airy_beta(path, k_max=3, dt=COUNT_DT, t_max=COUNT_T)
    zer = sai.sai_zero_scan(path, dt=COUNT_DT, k_max=3, T=12.0)
    n = min(ric.eigenvalues.size, zer.eigenvalues.size)
    gap = float(np.max(np.abs(ric.eigenvalues[:n] - zer.eigenvalues[:n]))) if n else math.inf
    if ric.eigenvalues.size != 3 or zer.eigenvalues.size != 3:
        gap = math.inf
    # counting: blow-downs above lam = zeros above lam, and monotone in lam
    viol = 0
    if zer.eigenvalues.size:
        grid = np.arange(zer.eigenvalues[-1] + 0.05, 4.0, 0.1)
        prev = None
        for lam in grid:
            c = riccati.airy_beta_counting(path, float(lam), COUNT_T, COUNT_DT)
            if prev is not None and c > prev:
                viol += 1
            prev = c
            near = np.min(np.abs(zer.eigenvalues - lam)) < 1e-2
            if not near and c != int(np.sum(zer.eigenvalues > lam)):
                viol += 1
    return gap, viol


def c7_counting(cfg: SuiteConfig) -> CriterionResult:
    s = _seed(cfg, 7)
    out = ordered_map(_counting_case, [s.child(i) for i in range(cfg.counting_paths)],
                      cfg.workers, 2)
    gaps = np.array([o[0] for o in out])
    viol = int(sum(o[1] for o in out))
    worst = float(np.max(gaps))
    ok = worst < 1e-2 and viol == 0
    return CriterionResult(7, "Counting equivalence", ok,
                           f"max top-3 gap {worst:.2e} (gate 1e-2); interlacing violations {viol}",
                           {"max_gap": worst, "median_gap": float(np.median(gaps)),
                            "violations": viol, "paths": len(out)})


# ---------------------------------------------------------------------------
# 8: Tracy-Widom cross-check


def _riccati_top(seed):
    path = sample_brownian_path(seed, 0.0, COUNT_DT, int(round(COUNT_T / COUNT_DT)), 2.0)
    r = riccati.sample_airy_beta(path, k_max=1, dt=COUNT_DT, t_max=COUNT_T)
    return float(r.eigenvalues[0]) if r.eigenvalues.size else math.nan


def _gue_top(args):
    seed, N = args
    return float(gbe.edge_rescale(gbe.largest_eigenvalues(gbe.sample_jacobi(seed, N, 2.0), 1)[0], N))


def c8_tracy_widom(cfg: SuiteConfig) -> CriterionResult:
    s = _seed(cfg, 8)
    a = np.array(ordered_map(_riccati_top, [s.child(0, i) for i in range(cfg.tw_M)], cfg.workers, 64))
    b = np.array(ordered_map(_gue_top, [(s.child(1, i), cfg.tw_N) for i in range(cfg.tw_M)],
                             cfg.workers, 64))
    missing = int(np.sum(~np.isfinite(a)))
    ks = ks_two_sample(a[np.isfinite(a)], b)
    ok = ks < 0.03 and missing == 0
    return CriterionResult(8, "Tracy-Widom cross-check (beta = 2)", ok,
                           f"two-sample KS {ks:.4f} (gate 0.03); means {np.nanmean(a):.4f} vs "
                           f"{np.mean(b):.4f}",
                           {"ks": ks, "riccati_mean": float(np.nanmean(a)),
                            "riccati_sd": float(np.nanstd(a)), "gue_mean": float(np.mean(b)),
                            "gue_sd": float(np.std(b)), "missing": missing})


# ---------------------------------------------------------------------------
# 9: envelope


ENV_T = 14.0
ENV_DT = 1e-4
ENV_FROM = (6.0, 8.0, 10.0)


def _envelope_case(seed):
    path = sample_brownian_path(seed, 0.0, ENV_DT, int(round(ENV_T / ENV_DT)), 2.0)
    sp = sai.sai_backward(path, 0.0, T=ENV_T, t_min=0.0, dt=ENV_DT)
    th = sai.theta_process(path, 0.0, ENV_T, ENV_DT)
    return [sai.envelope_check(sp, th, tf) for tf in ENV_FROM]


def c9_envelope(cfg: SuiteConfig) -> CriterionResult:
    s = _seed(cfg, 9)
    dev = np.array(ordered_map(_envelope_case, [s.child(i) for i in range(cfg.envelope_seeds)],
                               cfg.workers, 4))
    band = 8.0 ** -0.5
    frac = float(np.mean(dev[:, 1] <= band))
    med = np.median(dev, axis=0)
    ok = frac >= 0.99 and bool(np.all(np.diff(med) < 0))
    return CriterionResult(9, "Envelope", ok,
                           f"{100 * frac:.1f}% within {band:.4f} at T_from = 8 (gate 99%); medians "
                           + " / ".join(f"{m:.4f}" for m in med) + " at T_from = 6 / 8 / 10",
                           {"fraction_in_band": frac, "medians": [float(m) for m in med],
                            "c_star": sai.c_star_golden(), "seeds": int(dev.shape[0])})


# ---------------------------------------------------------------------------
# 10: coupled convergence


T_GRID = np.linspace(0.0, 4.0, 9)
L_GRID = np.linspace(-2.0, 2.0, 9)


def _coupled_case(args):
    seed, N = args
    run = edgecouple.coupled_run(seed, N, 2.0)
    return edgecouple.psi_vs_sai(run, T_GRID, L_GRID).sup


def c10_coupled(cfg: SuiteConfig) -> CriterionResult:
    s = _seed(cfg, 10)
    meds = []
    for j, N in enumerate(cfg.coupled_N):
        sups = ordered_map(_coupled_case, [(s.child(j, i), N) for i in range(cfg.coupled_seeds)],
                           cfg.workers, 2)
        meds.append(float(np.median(sups)))
    nf = edgecouple.psi_vs_sai(edgecouple.noise_free_run(cfg.coupled_N[0]), T_GRID, L_GRID)
    ok = bool(np.all(np.diff(meds) < 0)) and nf.relative_sup < 0.02
    return CriterionResult(10, "Coupled convergence trend", ok,
                           "median sup deviation " + " / ".join(f"{m:.4f}" for m in meds)
                           + f" at N = {', '.join(str(n) for n in cfg.coupled_N)}; noise-free "
                           f"relative {nf.relative_sup:.4f} (gate 0.02)",
                           {"N": list(cfg.coupled_N), "medians": meds,
                            "noise_free_relative_sup": nf.relative_sup,
                            "noise_free_sup": nf.sup})


# ---------------------------------------------------------------------------
# 11: planar ratio


def _planar_case(args):
    seed, N = args
    return float(edgecouple.planar_ratio_check(gbe.sample_jacobi(seed, N, 2.0), [1.5]).deviation[0])


def c11_planar(cfg: SuiteConfig) -> CriterionResult:
    s = _seed(cfg, 11)
    meds = []
    for N in (cfg.planar_N, 2 * cfg.planar_N):
        d = ordered_map(_planar_case, [(s.child(N, i), N) for i in range(cfg.planar_M)],
                        cfg.workers, 32)
        meds.append(float(np.median(d)))
    ok = meds[0] < 0.1 and meds[1] < meds[0]
    return CriterionResult(11, "Planar ratio at z = 1.5", ok,
                           f"median |ratio - 1| {meds[0]:.5f} at N = {cfg.planar_N}, "
                           f"{meds[1]:.5f} at N = {2 * cfg.planar_N} (gate < 0.1, decreasing)",
                           {"medians": meds})


# ---------------------------------------------------------------------------
# 12: shift invariance


def c12_shift(cfg: SuiteConfig) -> CriterionResult:
    r = sai.shift_invariance_test(_seed(cfg, 12), 1.0, M=cfg.shift_M)
    return CriterionResult(12, "Shift invariance (sigma = 1)", r.ks < r.critical,
                           f"two-sample KS {r.ks:.4f} vs 1% critical {r.critical:.4f}",
                           {"ks": r.ks, "critical": r.critical,
                            "sd_log_base": float(np.std(np.log(np.abs(r.base)))),
                            "sd_log_shifted": float(np.std(np.log(np.abs(r.shifted))))})


CRITERIA = (c1_airy_reduction, c2_identities, c3_recurrence, c4_plancherel_rotach,
            c5_mean_characteristic, c6_edge_clt, c7_counting, c8_tracy_widom, c9_envelope,
            c10_coupled, c11_planar, c12_shift)


def run_suite(cfg: SuiteConfig, only=None, progress: Callable | None = None) -> list:
    """Run the gates (all, or the numbers in ``only``) in order."""
    out = []
    for i, fn in enumerate(CRITERIA, 1):
        if only and i not in only:
            continue
        res = fn(cfg)
        if progress:
            progress(res)
        out.append(res)
    return out
