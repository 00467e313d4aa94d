"""Command line front end.

    oprenewal [--config FILE] [--output-dir DIR] [--threads K] COMMAND [options]

Commands: build, verify, montecarlo, tails, constants.  Exit status is 0 when
everything requested passed, 1 on a failed verification, 2 on a bad
configuration and 3 on a numerical failure.  Every output file starts with a
header (tool version, configuration, content hash, wall-clock time): ``#``
lines for CSV, a ``header`` object for JSON.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import runpy
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import BetaOutOfRange, OpRenewalError

log = logging.getLogger("oprenewal")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
SUITES = ("first-order", "second-order", "dual-ergodicity", "small-beta", "on-X",
          "spectral", "scalar")
LAWS = ("mittag-leffler", "arcsine")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    map: str = "lsv"
    alpha: Optional[float] = None
    table: Optional[str] = None
    grid: int = 1024
    horizon: int = 4096
    tail_horizon: int = 100_000
    normalizer: str = "auto"
    seed: int = 0
    output_dir: str = "oprenewal-out"
    threads: int = 1
    suites: list = field(default_factory=list)
    oracle_n: list = field(default_factory=lambda: [0, 1, 5, 20])
    law: Optional[str] = None
    n: Optional[int] = None
    samples: int = 10_000
    beta: Optional[float] = None
    scalar_n: int = 1_000_000

    def validate(self, needs_map: bool = True) -> "RunConfig":
        if needs_map:
            if self.map not in ("lsv", "custom"):
                raise ConfigError(f"unknown map {self.map!r} (lsv or custom)")
            if self.map == "lsv":
                if self.alpha is None:
                    raise ConfigError("--alpha is required for the lsv map")
                if self.alpha < 1.0:
                    raise ConfigError("alpha < 1: finite measure, out of scope")
            if self.map == "custom":
                if not self.table or not Path(self.table).is_file():
                    raise ConfigError("custom map needs --table pointing to a branch table file")
        if self.grid < 8 or self.grid & (self.grid - 1):
            raise ConfigError("grid must be a power of two, at least 8")
        if self.horizon < 16:
            raise ConfigError("horizon must be at least 16")
        if self.tail_horizon < self.horizon:
            raise ConfigError("tail_horizon must be >= horizon")
        if self.normalizer not in ("auto", "constant", "ell"):
            raise ConfigError("normalizer must be auto, constant or ell")
        for s in self.suites:
            if s not in SUITES:
                raise ConfigError(f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
        if self.law is not None and self.law not in LAWS:
            raise ConfigError(f"unknown law {self.law!r}")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        return self

    def map_key(self) -> str:
        if self.map == "lsv":
            return f"lsv:alpha={float(self.alpha)!r}"
        digest = hashlib.sha256(Path(self.table).read_bytes()).hexdigest()
        return f"custom:{digest}"

    def content_hash(self) -> str:
        key = f"{self.map_key()}|m={self.grid}|N={self.horizon}|tail={self.tail_horizon}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def read_config(path) -> dict:
    """Flat ``key = value`` file with optional ``[sections]``; later keys win."""
    cp = configparser.ConfigParser(interpolation=None)
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    out = {}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            out[k.replace("-", "_")] = v
    return out


_CASTS = {"alpha": float, "grid": int, "horizon": int, "tail_horizon": int, "seed": int,
          "threads": int, "n": int, "samples": int, "beta": float, "scalar_n": int}


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    values = read_config(args.config) if getattr(args, "config", None) else {}
    env_out = os.environ.get("OUTPUT_DIR")
    if env_out:
        values["output_dir"] = env_out
    env_thr = os.environ.get("THREADS")
    if env_thr:
        values["threads"] = env_thr
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config", "func", "verbose"):
            values[k] = v
    if "suite" in values:
        raw = values.pop("suite")
        items = raw if isinstance(raw, list) else [raw]
        values["suites"] = [s.strip() for it in items for s in str(it).split(",") if s.strip()]
    if "oracle_n" in values and isinstance(values["oracle_n"], str):
        values["oracle_n"] = [int(s) for s in values["oracle_n"].split(",")]
    known = {f for f in RunConfig.__dataclass_fields__}
    for k, v in values.items():
        if k not in known:
            raise ConfigError(f"unknown configuration key {k!r}")
        try:
            setattr(cfg, k, _CASTS[k](v) if k in _CASTS and v is not None else v)
        except ValueError as exc:
            raise ConfigError(f"bad value for {k}: {v!r}") from exc
    return cfg


# ---------------------------------------------------------------------------
# outputs


class Outputs:
    def __init__(self, cfg: RunConfig, content_hash: str = "-"):
        self.cfg = cfg
        self.hash = content_hash
        self.dir = Path(cfg.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.t0 = time.time()

    def header(self) -> dict:
        return {"tool": "oprenewal", "version": __version__,
                "config": asdict(self.cfg), "content_hash": self.hash,
                "wall_clock": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "elapsed_s": round(time.time() - self.t0, 3)}

    def header_lines(self) -> list:
        h = self.header()
        return [f"tool: oprenewal {h['version']}",
                f"config: {json.dumps(h['config'], sort_keys=True)}",
                f"content_hash: {h['content_hash']}",
                f"wall_clock: {h['wall_clock']}"]

    def json(self, name: str, payload) -> Path:
        path = self.dir / name
        body = {"header": self.header(), **(payload if isinstance(payload, dict)
                                            else {"items": payload})}
        path.write_text(json.dumps(body, indent=2, default=_default) + "\n")
        return path

    def csv(self, name: str, columns, rows) -> Path:
        path = self.dir / name
        with open(path, "w") as fh:
            for line in self.header_lines():
                fh.write(f"# {line}\n")
            fh.write(",".join(columns) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(x) for x in r) + "\n")
        return path


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, bool):
        return o
    raise TypeError(type(o))


# ---------------------------------------------------------------------------
# map construction and cache


def load_map(cfg: RunConfig):
    from .maps import make_lsv, make_map
    if cfg.map == "lsv":
        return make_lsv(cfg.alpha)
    ns = runpy.run_path(cfg.table)
    if "BRANCHES" not in ns:
        raise ConfigError("branch table file must define BRANCHES")
    return make_map(ns["BRANCHES"], ns.get("ALPHA"), name=Path(cfg.table).stem)


@dataclass
class Artifacts:
    seq: object
    tail: object
    cached: bool
    content_hash: str


def _cache_paths(cfg: RunConfig, h: str):
    d = Path(cfg.output_dir) / "cache"
    return d / f"{h}.oprn", d / f"{h}.npz"


def build_artifacts(cfg: RunConfig) -> Artifacts:
    """Build or load the operator sequence, density and tail model."""
    from .density import DensityEstimate
    from .induced import TailModel, build_return_structure
    from .renewal_ops import OperatorSeq, build_operator
    h = cfg.content_hash()
    seq_path, aux_path = _cache_paths(cfg, h)
    fmap = load_map(cfg)
    if seq_path.exists() and aux_path.exists():
        try:
            seq = OperatorSeq.load(seq_path)
            with np.load(aux_path) as z:
                h_y = z["h_y"]
                tail = TailModel(float(z["beta"]), z["tail"], float(z["c_fit"]),
                                 float(z["remainder_bound"]), str(z["measure"]),
                                 float(z["remainder_coef"]), tuple(z["fit_window"]))
            chk = hashlib.sha256(np.ascontiguousarray(seq.mu, dtype="<f8").tobytes()).hexdigest()
            if seq.header()["density_checksum"] != chk or seq.m != cfg.grid or seq.N != cfg.horizon:
                raise ValueError("cache does not match the configuration")
            rs = build_return_structure(fmap, seq.y_lo, seq.N)
            seq.rs = rs
            seq.density = DensityEstimate(seq.y_lo, h_y)
            log.info("cache hit %s", h)
            return Artifacts(seq, tail, True, h)
        except (ValueError, KeyError, OSError) as exc:
            warnings.warn(f"corrupted cache {seq_path.name} ({exc}); rebuilding", RuntimeWarning)
    seq, tail = build_operator(fmap, cfg.grid, cfg.horizon, cfg.tail_horizon)
    seq_path.parent.mkdir(parents=True, exist_ok=True)
    seq.save(seq_path)
    with open(aux_path, "wb") as fh:
        np.savez(fh, h_y=seq.density.h_y, beta=tail.beta, tail=tail.tail, c_fit=tail.c_fit,
                 remainder_bound=tail.remainder_bound, measure=tail.measure,
                 remainder_coef=tail.remainder_coef, fit_window=np.asarray(tail.fit_window))
    return Artifacts(seq, tail, False, h)


# ---------------------------------------------------------------------------
# commands


def cmd_build(cfg: RunConfig) -> int:
    cfg.validate()
    art = build_artifacts(cfg)
    out = Outputs(cfg, art.content_hash)
    seq = art.seq
    out.json(f"build-{art.content_hash}.json", {
        "cached": art.cached, "operator": seq.header(), "tail_c": art.tail.c_fit,
        "beta": art.tail.beta, "mass_defect": float(abs(seq.return_masses().sum()
                                                        + seq.integrate(seq.tail_matrix() @ np.ones(seq.m)) - 1.0))})
    print(f"{'cache hit' if art.cached else 'built'} {art.content_hash} "
          f"(m={seq.m}, N={seq.N}, beta={seq.tail_beta:.6g}, c={seq.tail_c:.6g})")
    return EXIT_OK


def _checkpoints(N: int) -> list:
    return [N // 8, N // 4, N // 2, N]


def _norm(cfg, seq, tail):
    """None selects the verifier default (constant c, or the truncated mean at beta = 1)."""
    from .limits import NormalizerM
    if cfg.normalizer == "ell" and seq.tail_beta < 1.0:
        return NormalizerM.from_tail(tail, "ell")
    return None


def _write_report(out: Outputs, rep, stem: str) -> None:
    out.json(f"{stem}.json", rep.as_dict())
    out.csv(f"{stem}.csv", ["n", "value", "deviation"],
            zip(rep.n_checkpoints, rep.values, rep.deviations))


def _suite_scalar(cfg: RunConfig) -> list:
    from . import scalar as sc
    from .limits import VerifierReport, loglog_slope
    from .spectral import constants, d_beta
    reps = []
    N = cfg.scalar_n
    u = sc.renewal_sequence(sc.pareto_f(0.75, N), method="fft")
    r = VerifierReport("scalar-first-order", 0.75, None, d_beta(0.75), 0.03)
    for n in (N // 100, N // 10, N):
        val = u[n] * n ** 0.25
        r.append(n, val, abs(val / d_beta(0.75) - 1.0))
    r.passed = r.deviations[-1] <= 0.03
    reps.append(r)
    N2 = 10 * N
    u2 = sc.renewal_sequence(sc.pareto_f(0.85, N2), method="fft")
    C = constants(0.85)
    r = VerifierReport("scalar-second-order", 0.85, None, C.d_beta_j(1), 0.15)
    for n in (N2 // 1000, N2 // 100, N2 // 10, N2):
        val = n ** 0.15 * (u2[n] * n ** 0.15 - C.d_beta)
        r.append(n, val, abs(val / C.d_beta_j(1) - 1.0))
    r.trend = "shrinking" if all(np.diff(r.deviations) < 0) else "flat"
    r.passed = r.deviations[-1] <= 0.15
    reps.append(r)
    Ns = [N // 100, N // 10, N]
    rep = sc.zero_density_demo(sc.pareto_f(0.4, N), 0.4, Ns)
    r = VerifierReport("scalar-small-beta", 0.4, None, rep.target, 0.05)
    for k, Nk in enumerate(Ns):
        r.append(Nk, rep.liminf[k], abs(rep.liminf[k] / rep.target - 1.0))
    r.extra = {"exceptional_density": {str(e): v for e, v in rep.density.items()},
               "envelope": rep.envelope, "cesaro": rep.cesaro}
    r.passed = bool(rep.decreasing(0.1) and r.deviations[-1] <= 0.05
                    and rep.envelope[-1] <= 1.05 * rep.envelope[-2])
    reps.append(r)
    kc = sc.karamata_sum(np.log(np.arange(1, N + 1)), -0.5, ns=[N // 100, N // 10, N])
    r = VerifierReport("karamata", 0.5, None, 1.0, float("nan"))
    for n, q in zip(kc.ns, kc.ratio):
        r.append(n, q, abs(q - 1.0))
    r.trend = "shrinking" if kc.verdict else "flat"
    r.passed = kc.verdict
    reps.append(r)
    for b in (0.7, 0.8, 0.9):
        n = np.unique(np.geomspace(N // 100, N, 7).astype(int))
        ub = sc.renewal_sequence(sc.pareto_f(b, N), method="fft")
        w = np.abs(ub[n] * n ** (1 - b) - d_beta(b))
        g = min(1 - b, b - 0.5)
        slope = loglog_slope(n, w)
        r = VerifierReport(f"scalar-rate-{b}", b, None, -g, 0.1)
        for nn, ww in zip(n, w):
            r.append(nn, ww, ww * nn ** g)
        r.extra = {"slope": slope, "leading_coefficient": float(w[-1] * n[-1] ** (1 - b))}
        # O(n^{-gamma}) bounds the error; exact power tails may decay faster
        r.passed = slope <= -g + 0.1
        reps.append(r)
    return reps


def _suite_spectral(cfg: RunConfig, art) -> list:
    from .limits import VerifierReport
    from .renewal_ops import build_operator, renewal_recursion
    from .spectral import constants, eigen_exponent_fit, fourier_oracle_Tn
    seq, tail = art.seq, art.tail
    reps = []
    if seq.tail_beta < 1.0:
        C = constants(seq.tail_beta, tail) if seq.tail_beta > 0.5 else None
        fit = eigen_exponent_fit(seq, consts=C)
        r = VerifierReport("eigen-exponent", seq.tail_beta, seq.alpha, seq.tail_beta, 0.02)
        r.append(seq.N, fit.slope, abs(fit.slope - seq.tail_beta))
        r.extra = {"thetas": fit.thetas, "one_minus_lambda": np.abs(1.0 - fit.lam),
                   "max_gap": float(np.nanmax(fit.gap))}
        if fit.refined is not None:
            r.extra["refined"] = fit.refined
            r.extra["refined_target"] = fit.target_refined
            r.extra["refined_limit"] = fit.refined_limit
        r.passed = abs(fit.slope - seq.tail_beta) <= 0.02
        reps.append(r)
    if seq.tail_beta > 0.5:
        small, _ = build_operator(load_map(cfg), 32, 256, cfg.tail_horizon)
        ns = list(cfg.oracle_n)
        H = renewal_recursion(small, n_max=max(ns))
        O = fourier_oracle_Tn(small, 0, ns=ns)
        r = VerifierReport("oracle", small.tail_beta, small.alpha, 0.0, 1e-3)
        for q, n in enumerate(ns):
            d = float(np.abs(O[q] - H[n]).max())
            r.append(n, d, d)
        r.passed = max(r.deviations) <= 1e-3
        reps.append(r)
    return reps


def cmd_verify(cfg: RunConfig) -> int:
    from . import limits as L
    from .renewal_ops import ObservableOnX
    from .spectral import constants
    suites = cfg.suites or ["first-order"]
    cfg.suites = suites
    pure_scalar = all(s == "scalar" for s in suites)
    cfg.validate(needs_map=not pure_scalar)
    reps = []
    art = None if pure_scalar else build_artifacts(cfg)
    out = Outputs(cfg, art.content_hash if art else "scalar")
    for suite in suites:
        if suite == "scalar":
            reps += _suite_scalar(cfg)
            continue
        seq, tail = art.seq, art.tail
        beta = seq.tail_beta
        norm = _norm(cfg, seq, tail)
        cps = _checkpoints(seq.N)
        if suite == "spectral":
            reps += _suite_spectral(cfg, art)
            continue
        H = L.T_history(seq)
        C = constants(beta, tail) if beta < 1.0 else None
        if suite == "first-order":
            reps.append(L.verify_first_order(seq, C, cps, norm=norm, history=H))
            left = (np.arange(seq.m) < seq.m // 2).astype(float)
            reps.append(L.verify_first_order(seq, C, cps, v=left, norm=norm))
            mz = left - seq.integrate(left) / seq.integrate(np.ones(seq.m))
            reps.append(L.verify_mean_zero(seq, mz, cps))
        elif suite == "second-order":
            reps.append(L.verify_second_order(seq, C, cps, history=H))
        elif suite == "dual-ergodicity":
            reps.append(L.verify_dual_ergodicity(seq, C, cps, norm=norm, history=H))
        elif suite == "small-beta":
            reps.append(L.verify_small_beta(seq, cps[1:], norm=norm, history=H))
        elif suite == "on-X":
            v = ObservableOnX(lambda x: np.ones_like(x), 0.1)
            reps.append(L.verify_Ln_on_X(seq, v, True, [c for c in cps if c <= 2048] or cps[:1],
                                         norm=norm))
    ok = True
    for k, r in enumerate(reps):
        _write_report(out, r, f"verify-{k:02d}-{r.statement_id}")
        print(r.summary())
        ok = ok and r.passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_montecarlo(cfg: RunConfig) -> int:
    from .limits import seq_tail
    from . import stochastic as st
    cfg.validate()
    if cfg.law is None:
        raise ConfigError("--law is required")
    n = cfg.n or 10_000
    art = build_artifacts(cfg)
    out = Outputs(cfg, art.content_hash)
    sampler = st.RenewalSampler.from_operator(art.seq)
    if cfg.law == "mittag-leffler":
        m_n = None
        if sampler.beta >= 1.0:
            tail = seq_tail(art.seq)
            m_n = float(np.sum(tail(np.arange(1, n + 1))))
        law = st.sample_occupation(sampler, n, cfg.samples, cfg.seed, m_n, cfg.threads)
    else:
        law = st.sample_arcsine(sampler, n, cfg.samples, cfg.seed, cfg.threads)
    stem = f"montecarlo-{cfg.law}-n{n}-s{cfg.seed}"
    out.json(f"{stem}.json", law.report())
    out.csv(f"{stem}.csv", ["seed", "n", "value"],
            ((cfg.seed, n, float(x)) for x in law.samples))
    print(f"{law.reference_id}: n={n} samples={cfg.samples} ks={law.ks:.5f} "
          f"moments={[round(m, 5) for m in law.moments]}")
    return EXIT_OK


def cmd_tails(cfg: RunConfig) -> int:
    cfg.validate()
    art = build_artifacts(cfg)
    out = Outputs(cfg, art.content_hash)
    t = art.tail
    n = np.arange(t.n_max + 1)
    fit = t.c_fit * np.maximum(n, 1) ** (-t.beta)
    out.csv(f"tails-{art.content_hash}.csv", ["n", "tail", "fit", "H"],
            zip(n, t.tail, fit, np.where(n > 0, t.remainder(np.maximum(n, 1)), np.nan)))
    out.json(f"tails-{art.content_hash}.json", {
        "beta": t.beta, "c": t.c_fit, "kappa": t.remainder_coef,
        "remainder_bound": t.remainder_bound, "fit_window": list(t.fit_window),
        "measure": t.measure, "n_max": t.n_max})
    print(f"beta={t.beta:.6g} c={t.c_fit:.8g} kappa={t.remainder_coef:.6g}")
    return EXIT_OK


def cmd_constants(cfg: RunConfig) -> int:
    from .spectral import constants
    tail = None
    h = "pareto"
    if cfg.alpha is not None or cfg.table:
        cfg.validate()
        art = build_artifacts(cfg)
        tail, h = art.tail, art.content_hash
        beta = tail.beta
    else:
        cfg.validate(needs_map=False)
        if cfg.beta is None:
            raise ConfigError("--beta or a map is required")
        beta = cfg.beta
    try:
        cs = constants(beta, tail)
    except BetaOutOfRange as exc:
        raise ConfigError(str(exc)) from exc
    out = Outputs(cfg, h)
    out.json(f"constants-beta{beta:g}.json", cs.as_dict())
    print(json.dumps(cs.as_dict(), indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _map_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", choices=["lsv", "custom"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--table", help="python file defining BRANCHES (and optionally ALPHA)")
    p.add_argument("--grid", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--tail-horizon", dest="tail_horizon", type=int)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oprenewal", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build and cache the operator sequence")
    _map_args(b)
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("verify", help="run verifier suites")
    _map_args(v)
    v.add_argument("--suite", action="append", help=f"one of {', '.join(SUITES)}")
    v.add_argument("--normalizer", choices=["auto", "constant", "ell"])
    v.add_argument("--oracle-n", dest="oracle_n", type=lambda s: [int(x) for x in s.split(",")])
    v.add_argument("--scalar-n", dest="scalar_n", type=int)
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("montecarlo", help="simulate occupation or last-visit laws")
    _map_args(m)
    m.add_argument("--law", choices=LAWS)
    m.add_argument("--n", type=int)
    m.add_argument("--samples", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    m.set_defaults(func=cmd_montecarlo)

    t = sub.add_parser("tails", help="dump the fitted return-time tail")
    _map_args(t)
    t.set_defaults(func=cmd_tails)

    c = sub.add_parser("constants", help="dump limit constants for a beta")
    _map_args(c)
    c.add_argument("--beta", type=float)
    c.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        return args.func(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OpRenewalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
