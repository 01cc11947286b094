"""Command line front end.

Subcommands ``gbe``, ``sai``, ``airy-beta``, ``couple`` and ``verify`` write
CSV tables and a JSON summary into ``--out``. Every file starts with the
config echo, the seed and the content version of the installed package, so
identical configs give byte-identical files. Wall-clock runtime is reported
on stderr only.

Exit codes: 0 success, 1 acceptance failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import acceptance, edgecouple, gbe, riccati, sai
from .rng import Seed, sample_brownian_path

FLAGS = ("seed", "beta", "N", "M", "dt", "workers")
DEFAULTS = {
    "gbe": {"seed": 0, "beta": 2.0, "N": 2000, "M": 100, "dt": 1e-3, "workers": 1},
    "sai": {"seed": 0, "beta": 2.0, "N": 0, "M": 20, "dt": 1e-4, "workers": 1},
    "airy-beta": {"seed": 0, "beta": 2.0, "N": 0, "M": 100, "dt": 1e-3, "workers": 1},
    "couple": {"seed": 0, "beta": 2.0, "N": 100_000, "M": 10, "dt": 1e-3, "workers": 1},
    "verify": {"seed": acceptance.SuiteConfig.seed, "beta": 2.0, "N": 0, "M": 0, "dt": 0.0,
               "workers": 1},
}


class ConfigError(ValueError):
    pass


def content_version() -> str:
    """Git-style SHA-1 over the package sources and data files."""
    root = Path(__file__).resolve().parent
    h = hashlib.sha1()
    for p in sorted(list(root.glob("*.py")) + list(root.glob("data/*.json"))):
        b = p.read_bytes()
        h.update(f"{p.relative_to(root).as_posix()} blob {len(b)}\0".encode())
        h.update(b)
    return h.hexdigest()


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


class Output:
    """Writes files that all carry the same metadata header."""

    def __init__(self, out: Path, meta: dict):
        self.out = out
        self.meta = meta
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows):
        with open(self.out / name, "w", newline="", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])

    def json(self, name: str, payload: dict):
        rec = {"meta": self.meta, "result": payload}
        with open(self.out / name, "w", encoding="utf-8") as fh:
            json.dump(rec, fh, sort_keys=True, indent=1, default=_jsonable)
            fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


# ---------------------------------------------------------------------------
# subcommands


def _gbe_row(args):
    seed, N, beta = args
    ens = gbe.sample_jacobi(seed, N, beta)
    top = gbe.edge_rescale(gbe.largest_eigenvalues(ens, 3), N)
    return list(top) + [edgecouple.log_abs_psi_at_edge(ens)]


def cmd_gbe(cfg: dict, out: Output) -> int:
    """Top eigenvalues (edge units), log|Psi_N(0)| per replicate, Psi table of replicate 0."""
    s = Seed(cfg["seed"])
    N, beta = cfg["N"], cfg["beta"]
    rows = acceptance.ordered_map(_gbe_row, [(s.child(i), N, beta) for i in range(cfg["M"])],
                                  cfg["workers"])
    c = math.sqrt(2 * math.log(N) / (3 * beta))
    out.csv("gbe_samples.csv", ["replicate", "lambda1", "lambda2", "lambda3", "log_abs_psi",
                                "standardized"],
            [[i] + r + [(r[3] + math.log(N) / (3 * beta)) / c] for i, r in enumerate(rows)])
    lams = np.linspace(-4.0, 4.0, 33)
    ns = np.array([N - int(N ** (1 / 3) * t) for t in (0.0, 1.0, 2.0)])
    m, l = gbe.psi_table(gbe.sample_jacobi(s.child(0), N, beta), lams, ns)
    out.csv("gbe_psi.csv", ["lambda", "n", "mantissa", "log_scale"],
            [[lams[i], ns[j], float(np.real(m[i, j])), l[i, j]]
             for i in range(lams.size) for j in range(ns.size)])
    lp = np.array([r[3] for r in rows])
    out.json("gbe_summary.json", {"mean_log_abs_psi": float(np.mean(lp)),
                                  "variance_log_abs_psi": float(np.var(lp, ddof=1)) if lp.size > 1 else None,
                                  "predicted_variance": 2 * math.log(N) / (3 * beta)})
    return 0


def _sai_row(args):
    seed, beta, dt = args
    T = 14.0
    path = sample_brownian_path(seed, 0.0, dt, int(round(T / dt)), beta)
    sp = sai.sai_backward(path, 0.0, T=T, t_min=0.0, dt=dt)
    th = sai.theta_process(path, 0.0, T, dt)
    dev = [sai.envelope_check(sp, th, tf) for tf in (6.0, 8.0, 10.0)]
    z = sai.sai_zero_scan(path, dt=dt, k_max=3, T=12.0).eigenvalues
    z = list(z) + [math.nan] * (3 - z.size)
    return [float(sp.sai[0]), float(sp.sai_prime[0])] + dev + z


def cmd_sai(cfg: dict, out: Output) -> int:
    """SAi(0), envelope deviations and top zeros per path; the SAi path of replicate 0."""
    s = Seed(cfg["seed"])
    beta, dt = cfg["beta"], cfg["dt"]
    rows = acceptance.ordered_map(_sai_row, [(s.child(i), beta, dt) for i in range(cfg["M"])],
                                  cfg["workers"])
    out.csv("sai_samples.csv", ["replicate", "sai0", "sai_prime0", "dev6", "dev8", "dev10",
                                "zero1", "zero2", "zero3"],
            [[i] + r for i, r in enumerate(rows)])
    path = sample_brownian_path(s.child(0), 0.0, dt, int(round(14.0 / dt)), beta)
    sp = sai.sai_backward(path, 0.0, T=14.0, t_min=0.0, dt=dt)
    stride = max(1, int(round(0.05 / dt)))
    t = sp.times[::stride]
    out.csv("sai_path.csv", ["t", "sai", "sai_prime"],
            zip(t, sp.sai[::stride].real, sp.sai_prime[::stride].real))
    dev8 = np.array([r[3] for r in rows])
    out.json("sai_summary.json", {"c_star": sai.c_star_golden(),
                                  "fraction_dev8_in_band": float(np.mean(dev8 <= 8 ** -0.5))})
    return 0


def _airy_row(args):
    seed, beta, dt = args
    path = sample_brownian_path(seed, 0.0, dt, int(round(15.0 / dt)), beta)
    r = riccati.sample_airy_beta(path, k_max=3, dt=dt).eigenvalues
    z = sai.sai_zero_scan(path, dt=dt, k_max=3, T=12.0).eigenvalues
    pad = lambda a: list(a) + [math.nan] * (3 - a.size)
    return pad(r) + pad(z)


def cmd_airy_beta(cfg: dict, out: Output) -> int:
    """Top three points per path by Riccati counting and by SAi zeros."""
    s = Seed(cfg["seed"])
    rows = acceptance.ordered_map(_airy_row, [(s.child(i), cfg["beta"], cfg["dt"])
                                              for i in range(cfg["M"])], cfg["workers"])
    out.csv("airy_beta.csv", ["replicate", "riccati1", "riccati2", "riccati3",
                              "zeros1", "zeros2", "zeros3"],
            [[i] + r for i, r in enumerate(rows)])
    r = np.array(rows)
    out.json("airy_beta_summary.json", {
        "mean_top_riccati": float(np.nanmean(r[:, 0])),
        "max_gap": float(np.nanmax(np.abs(r[:, :3] - r[:, 3:]))) if len(rows) else None})
    return 0


def _couple_row(args):
    seed, N, beta, dt = args
    run = edgecouple.coupled_run(seed, N, beta, dt=dt)
    prof = edgecouple.psi_vs_sai(run, acceptance.T_GRID, acceptance.L_GRID, dt=dt)
    pl = edgecouple.planar_ratio_check(run.ens, [1.5]).ratio[0]
    return [prof.sup, prof.relative_sup, float(pl)]


def cmd_couple(cfg: dict, out: Output) -> int:
    """Deviation profiles of the coupled runs, the Upsilon table of replicate 0 and planar ratios."""
    s = Seed(cfg["seed"])
    N, beta, dt = cfg["N"], cfg["beta"], cfg["dt"]
    rows = acceptance.ordered_map(_couple_row, [(s.child(i), N, beta, dt)
                                                for i in range(cfg["M"])], cfg["workers"])
    out.csv("couple_samples.csv", ["replicate", "sup_deviation", "relative_sup", "planar_ratio_z1.5"],
            [[i] + r for i, r in enumerate(rows)])
    run = edgecouple.coupled_run(s.child(0), N, beta, dt=dt)
    lams = np.linspace(-2.0, 2.0, 9)
    up = edgecouple.upsilon_diagnostic(run, lams)
    out.csv("couple_upsilon.csv", ["lambda", "re_upsilon1", "im_upsilon1", "re_upsilon2",
                                   "im_upsilon2"],
            zip(lams, up.upsilon1.real, up.upsilon1.imag, up.upsilon2.real, up.upsilon2.imag))
    prof = edgecouple.psi_vs_sai(run, acceptance.T_GRID, lams, dt=dt)
    out.csv("couple_profile.csv", ["lambda", "t", "psi", "sai", "prefactor", "deviation"],
            [[lams[i], acceptance.T_GRID[j], float(np.real(prof.psi[i, j])), prof.sai[i, j],
              float(np.real(prof.prefactor[i])), float(np.real(prof.deviation[i, j]))]
             for i in range(lams.size) for j in range(acceptance.T_GRID.size)])
    sups = np.array([r[0] for r in rows])
    out.json("couple_summary.json", {"median_sup_deviation": float(np.median(sups)),
                                     "T": run.T, "N_H": run.N_H})
    return 0


def cmd_verify(cfg: dict, out: Output, suite: acceptance.SuiteConfig, only=None) -> int:
    """Run the acceptance gates; exit 1 if any fails."""
    t0 = time.perf_counter()

    def progress(r):
        print(f"  [{time.perf_counter() - t0:8.1f}s] criterion {r.number:2d} "
              f"{'PASS' if r.passed else 'FAIL'}", file=sys.stderr, flush=True)

    res = acceptance.run_suite(suite, only, progress)
    out.csv("verify.csv", ["criterion", "title", "passed", "summary"],
            [[r.number, r.title, int(r.passed), r.summary] for r in res])
    out.json("verify.json", {"criteria": [{"number": r.number, "title": r.title,
                                           "passed": r.passed, "summary": r.summary,
                                           "details": r.details} for r in res]})
    print(f"{'#':>3}  {'result':6}  title")
    for r in res:
        print(f"{r.number:>3}  {'PASS' if r.passed else 'FAIL':6}  {r.title}: {r.summary}")
    return 0 if all(r.passed for r in res) else 1


COMMANDS = {"gbe": cmd_gbe, "sai": cmd_sai, "airy-beta": cmd_airy_beta, "couple": cmd_couple}


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochairy", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("gbe", "sai", "airy-beta", "couple", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="key = value file; flags override it")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--N", type=int)
        sp.add_argument("--M", type=int, help="Monte Carlo count")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--workers", type=int)
        if name == "verify":
            sp.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    return p


def _read_kv(path) -> dict:
    kv = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            kv[k] = v
    return kv


def resolve(args) -> tuple[dict, acceptance.SuiteConfig | None]:
    """Merge defaults, the config file and flags (in that order of precedence, lowest first)."""
    cfg = dict(DEFAULTS[args.command])
    suite = acceptance.SuiteConfig() if args.command == "verify" else None
    kv = _read_kv(args.config) if args.config else {}
    for k, v in kv.items():
        try:
            if k in FLAGS:
                x = float(v)
                if isinstance(cfg[k], int):
                    if not x.is_integer():
                        raise ConfigError(f"{k} must be an integer, got {v!r}")
                    x = int(x)
                cfg[k] = x
                if suite is not None and k in ("seed", "workers"):
                    suite.set(k, v)
            elif suite is not None:
                suite.set(k, v)
            else:
                raise ConfigError(f"unknown config key {k!r}")
        except (KeyError, ValueError) as e:
            raise ConfigError(str(e)) from None
    for k in FLAGS:
        v = getattr(args, k)
        if v is not None:
            cfg[k] = v
            if suite is not None and k in ("seed", "workers"):
                setattr(suite, k, int(v))
    if suite is not None and args.M is not None:
        suite.scale_monte_carlo(args.M)
    if not (cfg["beta"] > 0):
        raise ConfigError("beta must be positive")
    if cfg["workers"] < 1 or cfg["M"] < 0 or cfg["seed"] < 0:
        raise ConfigError("workers must be >= 1, M and seed non-negative")
    if args.command != "verify" and (cfg["dt"] <= 0 or cfg["M"] < 1):
        raise ConfigError("dt must be positive and M at least 1")
    if args.command in ("gbe", "couple") and cfg["N"] < 10:
        raise ConfigError("N must be at least 10")
    return cfg, suite


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, suite = resolve(args)
    except (ConfigError, OSError) as e:
        parser.print_usage(sys.stderr)
        print(f"stochairy: error: {e}", file=sys.stderr)
        return 2
    meta = {"command": args.command, "config": cfg, "seed": cfg["seed"],
            "version": content_version()}
    if suite is not None:
        meta["suite"] = suite.as_dict()
        if args.only:
            meta["only"] = sorted(args.only)
    out = Output(Path(args.out), meta)
    t0 = time.perf_counter()
    try:
        if args.command == "verify":
            code = cmd_verify(cfg, out, suite, set(args.only) if args.only else None)
        else:
            code = COMMANDS[args.command](cfg, out)
    except ValueError as e:
        print(f"stochairy: error: {e}", file=sys.stderr)
        return 2
    print(f"stochairy {args.command}: runtime {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
