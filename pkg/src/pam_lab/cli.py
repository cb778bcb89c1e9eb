"""Command-line front end: ``pam-lab <command> --config FILE [...]``.

Every run writes ``result.jsonl`` (one record per result line),
``table.csv`` and, for scans, ``plot.gp`` into ``--out``.  Results are
cached under ``$PAM_LAB_CACHE`` (default ``~/.cache/pam-lab``) keyed by the
command, the canonical config and the tool version.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
import warnings
from fractions import Fraction
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, format_number, load_config

EXIT_OK, EXIT_CONFIG, EXIT_GUARD = 0, 2, 3

COMMANDS = ("regime", "constants", "kappa", "critical-time", "moments", "beta-mean", "renorm", "gap",
            "blowup-scan", "certificate", "check")
SUBCOMMANDS = {"kappa": ("townes", "trial"), "check": ("hyper", "subadd", "scaling", "identity")}


# ---------------------------------------------------------------------------
# config helpers


def _params(cfg: ExperimentConfig):
    from .spectral import HurstParams

    h0 = cfg.get("hurst.h0")
    h = cfg.get_list("hurst.h")
    try:
        return HurstParams(h0, tuple(h))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad Hurst indices: {exc}") from exc


def _mc(cfg: ExperimentConfig):
    from .moments import MCConfig

    try:
        return MCConfig(
            paths=cfg.integer("mc.paths", 1000),
            spectral=cfg.integer("mc.spectral", 256),
            steps=cfg.integer("mc.steps", 128),
            seed=cfg.integer("mc.seed", 0),
            workers=cfg.integer("mc.workers", 1),
            block=cfg.integer("mc.block", 50),
            method=str(cfg.get("mc.method", "trapezoid")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _eps(cfg: ExperimentConfig):
    e = cfg.number("eps")
    return (cfg.number("eps0", e), e)


def _trial(cfg: ExperimentConfig):
    from .variational import gaussian_trial

    return gaussian_trial(tuple(cfg.numbers("trial.sigma")), cfg.number("trial.tau", 0.0) if "trial.tau" in cfg else 0.0)


def _kappa(cfg: ExperimentConfig, params):
    """``kappa`` as a number, ``townes`` or ``trial`` (Gaussian lower bound)."""
    from .variational import gn_kappa_townes, kappa_lower_bound

    k = cfg.get("kappa", "trial")
    if k == "townes":
        return gn_kappa_townes()["kappa"], "townes"
    if k == "trial":
        return kappa_lower_bound(params, family=str(cfg.get("trial.family", "gaussian"))).kappa_lb, "trial"
    if isinstance(k, (int, float, Fraction)) and not isinstance(k, bool):
        return float(k), "given"
    raise ConfigError(f"kappa must be a number, 'townes' or 'trial', got {k!r}")


def _flat(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flat(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = ",".join(_scalar_str(x) for x in v)
        else:
            out[key] = v
    return out


def _scalar_str(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return "null"
    return format_number(x)


def _clean(v):
    if isinstance(v, Fraction):
        return format_number(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if hasattr(v, "item"):
        return _clean(v.item())
    return v


# ---------------------------------------------------------------------------
# commands; each returns (records, table rows, plot settings or None)


def cmd_regime(cfg, sub):
    from .regime import classify

    rep = classify(_params(cfg)).as_dict()
    rep["exact"] = _params(cfg).exact
    return [rep], [_flat(rep)], None


def cmd_constants(cfg, sub):
    from .renorm import squared_constant
    from .spectral import alpha_h, fbm_spectral_constant

    params = _params(cfg)
    recs = []
    for name, h in [("h0", params.h0f)] + [(f"h{j}", float(v)) for j, v in enumerate(params.h, start=1)]:
        if h == 1.0:
            recs.append({"index": name, "h": h, "c_h": 1.0, "alpha_h": 1.0, "identity_error": 0.0,
                         "note": "time-independent noise: point mass at 0"})
            continue
        c, a = fbm_spectral_constant(h), alpha_h(h)
        recs.append({"index": name, "h": h, "c_h": c, "alpha_h": a, "identity_error": abs(c * a - 1.0),
                     "tolerance": 1e-12})
    recs.append({"index": "all", "c_squared": squared_constant(params), "tolerance": 1e-12})
    return recs, recs, None


def cmd_kappa(cfg, sub):
    from .variational import gn_kappa_townes, kappa_lower_bound

    if sub == "townes":
        rec = gn_kappa_townes(h=cfg.number("townes.step", 2e-3), r_max=cfg.number("townes.r_max", 12.0))
        rec["tolerance"] = rec["refinement_rel_change"]
        return [rec], [rec], None
    params = _params(cfg)
    kb = kappa_lower_bound(params, family=str(cfg.get("trial.family", "gaussian")),
                           max_iter=cfg.integer("trial.max_iter", 400))
    rec = _flat(kb.as_dict())
    rec["tolerance"] = cfg.number("trial.xatol", 1e-10)
    return [rec], [rec], None


def cmd_critical_time(cfg, sub):
    from .regime import critical_time

    params = _params(cfg)
    kappa, source = _kappa(cfg, params)
    recs = []
    for p in cfg.numbers("p"):
        recs.append({"p": p, "kappa": kappa, "kappa_source": source, "t0": critical_time(p, params, kappa),
                     "tolerance": 1e-12})
    return recs, recs, None


def _t_values(cfg):
    return cfg.numbers("t_grid") if "t_grid" in cfg else [cfg.number("t")]


def cmd_moments(cfg, sub):
    from .moments import skorohod_moment, stratonovich_moment

    params, mc = _params(cfg), _mc(cfg)
    interp = str(cfg.get("interpretation", "skorohod")).lower()
    p = cfg.integer("p")
    recs = []
    for t in _t_values(cfg):
        if interp == "skorohod":
            est = skorohod_moment(t, p, _eps(cfg), params, mc)
        elif interp == "stratonovich":
            est = stratonovich_moment(t, p, cfg.integer("n"), params, mc)
        else:
            raise ConfigError("interpretation must be skorohod or stratonovich")
        recs.append(_flat(est.as_dict()))
    plot = None
    if len(recs) > 1:
        plot = {"x": "t", "y": ["value"], "logscale": "y", "title": f"{interp} moment, p={p}"}
    return recs, recs, plot


def cmd_beta_mean(cfg, sub):
    from .montecarlo import beta_mean_quadrature

    params = _params(cfg)
    eps0, eps = _eps(cfg)
    recs = []
    for t in _t_values(cfg):
        recs.append({"t": t, "eps0": eps0, "eps": eps,
                     "beta_mean": beta_mean_quadrature(t, eps0, eps, params), "tolerance": 1e-10})
    return recs, recs, None


def _levels(cfg):
    if "n" in cfg:
        return [cfg.integer("n")]
    return list(range(1, cfg.integer("n_max", 6) + 1))


def cmd_renorm(cfg, sub):
    from .regime import classify
    from .renorm import j_integral, renorm_constant

    params = _params(cfg)
    rep = classify(params)
    recs = []
    J = j_integral(params) if not rep.stratonovich_boundary else None
    for n in _levels(cfg):
        rec = {"n": n, "regime": "Boundary" if rep.stratonovich_boundary else "StrictlyBelow",
               "cN": renorm_constant(n, params), "tolerance": 1e-10}
        if J is not None:
            rec["jIntegral"] = J
        recs.append(rec)
    plot = {"x": "n", "y": ["cN"], "logscale": "y", "title": "renormalization constant"} if len(recs) > 1 else None
    return recs, recs, plot


def cmd_gap(cfg, sub):
    from .renorm import gap_report

    params = _params(cfg)
    rep = gap_report(cfg.number("t"), cfg.integer("n_max", 6), params, workers=cfg.integer("mc.workers", 1))
    recs = [dict(r.as_dict(), tolerance=1e-10) for r in rep["rows"]]
    summary = {"summary": "gap", "gap_slope": rep["gap_slope"], "mean_gap": rep["mean_gap"],
               "growth_trend": rep["growth_trend"], "bounded": rep["bounded"], "tolerance": 1e-10}
    return recs + [summary], recs, {"x": "n", "y": ["gap"], "title": "renormalization gap"}


def cmd_blowup_scan(cfg, sub):
    from .moments import blowup_scan

    params, mc = _params(cfg), _mc(cfg)
    p = cfg.integer("p", 2)
    kappa, source = _kappa(cfg, params)
    if "t_grid" in cfg:
        t_grid = cfg.numbers("t_grid")
    else:
        from .regime import critical_time

        t0 = critical_time(max(p, 2), params, kappa)
        t_grid = [f * t0 for f in cfg.numbers("t_factors", [0.5, 2.0])]
    if "eps_grid" in cfg:
        eps_grid = cfg.numbers("eps_grid")
    else:
        e = cfg.number("eps", 0.25)
        eps_grid = [e * 2.0**-k for k in range(cfg.integer("eps_levels", 4))]
    res = blowup_scan(p, t_grid, eps_grid, params, mc, threshold=cfg.number("threshold", 0.1), kappa=kappa)
    recs = [dict(r, kind="row", kappa=kappa, kappa_source=source, t0=res["t0"]) for r in res["rows"]]
    cells = [dict(c, log_inv_eps=math.log(1.0 / c["eps"])) for c in res["cells"]]
    recs += [dict(c, kind="cell") for c in cells]
    plot = {"x": "log_inv_eps", "y": ["log_moment"], "group": "t", "title": f"blowup scan, p={p}"}
    return recs, cells, plot


def cmd_certificate(cfg, sub):
    from .variational import blowup_certificate

    params = _params(cfg)
    rep = blowup_certificate(cfg.number("t"), cfg.number("p", 2), _trial(cfg), params)
    rec = _flat(rep.as_dict())
    rec["tolerance"] = 1e-12
    return [rec], [rec], None


def cmd_check(cfg, sub):
    from .moments import hypercontractivity_check, subadditivity_check

    params = _params(cfg)
    if sub == "hyper":
        rec = hypercontractivity_check(cfg.number("t"), cfg.integer("p"), _eps(cfg), params, _mc(cfg))
    elif sub == "subadd":
        rec = subadditivity_check(cfg.number("t1"), cfg.number("t2"), cfg.number("theta"),
                                  cfg.integer("n_max", 6), params, cfg.number("eps"), _mc(cfg))
        rec = {k: v for k, v in rec.items() if k != "terms"}
    elif sub == "scaling":
        from .montecarlo import scaling_identity_check

        rec = scaling_identity_check(cfg.number("t"), cfg.number("b"), params, tol=cfg.number("tol", 1e-3))
    else:
        from .renorm import gap_report

        t = cfg.number("t")
        rep = gap_report(t, max(_levels(cfg)), params)
        tol = cfg.number("tol", 1e-4)
        recs = []
        for r in rep["rows"]:
            if r.rN is None:
                raise ConfigError("the identity check needs a configuration strictly below the boundary")
            lhs = r.cN * t - r.rN
            rel = abs(lhs - r.halfEBeta) / abs(r.halfEBeta)
            recs.append({"n": r.n, "t": t, "cN_t_minus_rN": lhs, "halfEBeta": r.halfEBeta,
                         "rel_discrepancy": rel, "tolerance": tol, "holds": rel <= tol})
        return recs, recs, None
    return [rec], [rec], None


HANDLERS = {
    "regime": cmd_regime, "constants": cmd_constants, "kappa": cmd_kappa,
    "critical-time": cmd_critical_time, "moments": cmd_moments, "beta-mean": cmd_beta_mean,
    "renorm": cmd_renorm, "gap": cmd_gap, "blowup-scan": cmd_blowup_scan,
    "certificate": cmd_certificate, "check": cmd_check,
}


# ---------------------------------------------------------------------------
# output


def _json_line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, ensure_ascii=False, allow_nan=False, separators=(",", ":"))


def _csv_text(rows: list[dict]) -> str:
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _scalar_str(_clean(r.get(k, ""))) if r.get(k, "") != "" else "" for k in cols})
    return buf.getvalue()


def _plot_text(plot: dict, rows: list[dict]) -> str:
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    xi = cols.index(plot["x"]) + 1
    lines = ["set datafile separator ','", "set key autotitle columnhead", f"set title '{plot['title']}'",
             f"set xlabel '{plot['x']}'"]
    if plot.get("logscale"):
        lines.append(f"set logscale {plot['logscale']}")
    series = []
    for y in plot["y"]:
        yi = cols.index(y) + 1
        if "group" in plot:
            gi = cols.index(plot["group"]) + 1
            for g in sorted({r[plot["group"]] for r in rows}):
                gs = format_number(g)
                series.append(f"'table.csv' using {xi}:(abs(${gi} - {gs}) < 1e-12 ? ${yi} : 1/0) "
                              f"with linespoints title '{plot['group']}={gs}'")
        else:
            series.append(f"'table.csv' using {xi}:{yi} with linespoints title '{y}'")
    lines.append("plot " + ", \\\n     ".join(series))
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cache_dir() -> Path:
    env = os.environ.get("PAM_LAB_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "pam-lab"


def run(command: str, sub: str | None, cfg: ExperimentConfig, out: Path, use_cache: bool = True) -> dict:
    """Execute one command and write its artifacts; returns the file texts."""
    key_cfg = cfg.with_overrides([f"__command={command}", f"__sub={sub or ''}"] if sub else
                                 [f"__command={command}"])
    key = f"{key_cfg.hash()}-{__version__}"
    cdir = cache_dir() / key
    names = ("result.jsonl", "table.csv", "plot.gp")
    if use_cache and (cdir / "result.jsonl").exists():
        texts = {n: (cdir / n).read_text(encoding="utf-8") for n in names if (cdir / n).exists()}
    else:
        start = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            records, table, plot = HANDLERS[command](cfg, sub)
        elapsed = time.perf_counter() - start
        notes = sorted({str(w.message) for w in caught})
        inputs = cfg.identity()
        lines = []
        for rec in records:
            full = {
                "config_hash": cfg.hash(),
                "command": command if sub is None else f"{command} {sub}",
                "inputs": inputs,
                "outputs": {k: _clean(v) for k, v in _flat(rec).items()},
                "warnings": notes,
                "version": __version__,
                "timing": {"seconds": round(elapsed, 6)},
            }
            lines.append(_json_line(full))
        texts = {"result.jsonl": "\n".join(lines) + "\n", "table.csv": _csv_text([_flat(r) for r in table])}
        if plot is not None and table:
            texts["plot.gp"] = _plot_text(plot, [_flat(r) for r in table])
        if use_cache:
            for n, txt in texts.items():
                _atomic_write(cdir / n, txt)
    for n, txt in texts.items():
        _atomic_write(out / n, txt)
    if "plot.gp" not in texts and (out / "plot.gp").exists():
        (out / "plot.gp").unlink()
    return texts


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pam-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("sub", nargs="?", help="variant for kappa {townes|trial} and check {hyper|subadd|scaling|identity}")
    ap.add_argument("--config", required=True, help="key=value config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    ap.add_argument("--seed", type=int, help="shorthand for --set mc.seed=N")
    ap.add_argument("--no-cache", action="store_true", help="recompute and do not touch the cache")
    ap.add_argument("--out", default=".", help="output directory")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    args = ap.parse_args(argv)
    try:
        if args.command in SUBCOMMANDS:
            if args.sub not in SUBCOMMANDS[args.command]:
                raise ConfigError(f"{args.command} needs one of {', '.join(SUBCOMMANDS[args.command])}")
        elif args.sub is not None:
            raise ConfigError(f"{args.command} takes no variant")
        cfg = load_config(args.config).with_overrides(args.set)
        if args.seed is not None:
            cfg = cfg.with_overrides([f"mc.seed={args.seed}"])
        texts = run(args.command, args.sub, cfg, Path(args.out), use_cache=not args.no_cache)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(texts["result.jsonl"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
