"""Batch command line: analytic-table, simulate, fit, scan, kld.

Options resolve as built-in defaults, then ``--config`` (a JSON object whose
keys are option names), then flags given on the command line. The resolved
options are embedded in every output together with the tool version and the
seed, and nothing time-dependent is written, so identical runs produce
identical bytes.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__, analysis, analytic
from .analytic import CrossoverParam
from .ensembles import (
    GaussianCrossoverConfig,
    QkrConfig,
    WishartCrossoverConfig,
    ensemble_levels,
)
from .spectra import RatioSample, histogram, pooled_ratios, rtilde_of

log = logging.getLogger("ratiocross")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

TOOL = "ratiocross"


class ConfigError(Exception):
    pass


# option defaults per subcommand; also the set of keys a config file may use
COMMON_DEFAULTS = {"seed": 0, "out": "-", "format": None, "threads": 1}

ENSEMBLE_DEFAULTS = {
    "ensemble": "gauss-crossover",
    "N": 3,
    "M": None,
    "alpha": None,
    "lam": None,
    "gamma": 0.0,
    "kick": 20000.0,
    "kick_jitter": 50.0,
    "count": None,
    "target_samples": analysis.DEFAULT_TARGET_SAMPLES,
    "slice": "full",
    "wrap": True,
}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "analytic-table": {
        **COMMON_DEFAULTS,
        "which": "pdf_r",
        "alpha": None,
        "lam": None,
        "r_grid": None,
    },
    "simulate": {
        **COMMON_DEFAULTS,
        **ENSEMBLE_DEFAULTS,
        "emit": "histogram",
        "domain": None,
        "bin_width": None,
        "rtilde": False,
    },
    "fit": {**COMMON_DEFAULTS, **ENSEMBLE_DEFAULTS, "input": None, "input_kind": "auto", "method": "mle"},
    # scan's seed falls back to the sweep file's own seed
    "scan": {**COMMON_DEFAULTS, "seed": None, "spec": None, "target_samples": None, "method": None,
             "slice": None},
    "kld": {
        **COMMON_DEFAULTS,
        **ENSEMBLE_DEFAULTS,
        "input": None,
        "input_kind": "auto",
        "reference": "goe,gue",
    },
}

DEFAULT_FORMAT = {"analytic-table": "csv", "simulate": "csv", "fit": "json", "scan": "json", "kld": "json"}

DEFAULT_R_GRID = {"pdf_r": "0:10:0.01", "pdf_rtilde": "0:1:0.001", "laguerre3": "0:10:0.01"}


# ---------------------------------------------------------------------------
# parsing helpers


def parse_floats(text: str) -> List[float]:
    """``"0.1,0.2"`` or a range ``"lo:hi:step"`` (inclusive of hi when it lands on the grid)."""
    text = str(text).strip()
    if ":" in text:
        try:
            lo, hi, step = (float(x) for x in text.split(":"))
        except ValueError:
            raise ConfigError(f"bad grid {text!r}; expected lo:hi:step") from None
        if not step > 0 or hi < lo:
            raise ConfigError(f"bad grid {text!r}")
        n = int(math.floor((hi - lo) / step + 1e-9))
        return [lo + k * step for k in range(n + 1)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


def _as_list(value) -> List[float]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return [float(x) for x in value]
    if isinstance(value, (int, float)):
        return [float(value)]
    return parse_floats(value)


def _param_list(opts: dict) -> List[CrossoverParam]:
    alphas, lams = _as_list(opts.get("alpha")), _as_list(opts.get("lam"))
    if alphas and lams:
        raise ConfigError("give --alpha or --lambda, not both")
    try:
        if lams:
            return [CrossoverParam.from_lambda(x) for x in lams]
        return [CrossoverParam(x) for x in alphas]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(command: str, cli: dict) -> dict:
    """defaults < config file < command-line flags."""
    defaults = DEFAULTS[command]
    cfg = load_config(cli.pop("config", None))
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
    opts = {**defaults, **cfg, **cli}
    if opts["format"] is None:
        opts["format"] = DEFAULT_FORMAT[command]
    if opts["format"] not in ("csv", "json"):
        raise ConfigError(f"unknown format {opts['format']!r}")
    if int(opts["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    return opts


# ---------------------------------------------------------------------------
# input files


def read_levels_file(path: str) -> Tuple[List[np.ndarray], str]:
    """Plain-text levels: one per line, ``#`` comments, blank lines between spectra.

    A ``# kind: circle`` line marks the levels as eigenangles in [-pi, pi).
    """
    kind = "line"
    blocks: List[List[float]] = [[]]
    for lineno, raw in enumerate(_read_text(path).splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            if key.strip().lower() == "kind":
                kind = val.strip().lower()
                if kind not in ("line", "circle"):
                    raise ConfigError(f"{path}:{lineno}: unknown spectrum kind {kind!r}")
            continue
        if not line:
            if blocks[-1]:
                blocks.append([])
            continue
        try:
            blocks[-1].append(float(line.split(",")[0]))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: not a number: {line!r}") from None
    spectra = [np.sort(np.asarray(b)) for b in blocks if b]
    if not spectra:
        raise ConfigError(f"{path}: no levels found")
    if kind == "circle" and any(s[0] < -math.pi or s[-1] >= math.pi for s in spectra):
        raise ConfigError(f"{path}: eigenangles must lie in [-pi, pi)")
    return spectra, kind


def read_ratio_file(path: str) -> RatioSample:
    """Ratio CSV with a ``value`` column (first column used); ``#`` lines skipped."""
    rows = [ln for ln in _read_text(path).splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if rows and rows[0].split(",")[0].strip() == "value":
        rows = rows[1:]
    try:
        values = [float(r.split(",")[0]) for r in rows]
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return RatioSample(values)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _sniff_kind(path: str) -> str:
    for ln in _read_text(path).splitlines():
        s = ln.strip()
        if s and not s.startswith("#"):
            return "ratios" if s.split(",")[0].strip() == "value" else "levels"
    return "levels"


def ratios_from_levels(spectra: Sequence[np.ndarray], kind: str, mode: str, wrap: bool) -> RatioSample:
    parts = [pooled_ratios(s[None, :], kind, mode, wrap) for s in spectra]
    return RatioSample.pool(parts)


# ---------------------------------------------------------------------------
# simulation


def ensemble_config(opts: dict):
    ens = opts["ensemble"]
    N, seed = int(opts["N"]), int(opts["seed"])
    kind = "circle" if ens == "qkr" else "line"
    count = opts.get("count")
    if count is None:
        count = analysis.realizations_for(int(opts["target_samples"]), N, kind, opts["slice"], opts["wrap"])
    count = int(count)
    if ens == "qkr":
        return QkrConfig(N, kick=float(opts["kick"]), gamma=float(opts["gamma"]), seed=seed,
                         count=count, kick_jitter=float(opts["kick_jitter"]))
    params = _param_list(opts) or [CrossoverParam(0.0)]
    if len(params) != 1:
        raise ConfigError("simulate takes a single alpha or lambda")
    if ens == "gauss-crossover":
        return GaussianCrossoverConfig(N, params[0], seed=seed, count=count)
    if ens == "wishart-crossover":
        M = N if opts.get("M") is None else int(opts["M"])
        return WishartCrossoverConfig(N, M, params[0], seed=seed, count=count)
    raise ConfigError(f"unknown ensemble {ens!r}")


def simulate_levels(opts: dict):
    try:
        cfg = ensemble_config(opts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    log.info("simulating %s N=%d count=%d", opts["ensemble"], cfg.N, cfg.count)
    return cfg, ensemble_levels(cfg, threads=int(opts["threads"]))


def sample_from_opts(opts: dict) -> Tuple[RatioSample, dict]:
    """Ratios from ``--input`` when given, otherwise from an inline simulation."""
    path = opts.get("input")
    if path:
        kind = opts["input_kind"]
        if kind == "auto":
            kind = _sniff_kind(path)
        if kind == "ratios":
            return read_ratio_file(path), {"source": "ratios", "path": str(path)}
        if kind != "levels":
            raise ConfigError(f"unknown input kind {kind!r}")
        spectra, skind = read_levels_file(path)
        try:
            rs = ratios_from_levels(spectra, skind, opts["slice"], opts["wrap"])
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return rs, {"source": "levels", "path": str(path), "kind": skind, "spectra": len(spectra)}
    cfg, levels = simulate_levels(opts)
    try:
        rs = pooled_ratios(levels, cfg.kind, opts["slice"], opts["wrap"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return rs, {"source": "simulation", **cfg.to_dict()}


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _provenance(command: str, opts: dict) -> dict:
    config = {k: v for k, v in opts.items() if k not in ("out", "format")}
    return {"tool": TOOL, "version": __version__, "command": command, "seed": opts["seed"],
            "config": _clean(config)}


def render(command: str, opts: dict, header: List[str], rows: List[Sequence], extra: Optional[dict] = None) -> str:
    prov = _provenance(command, opts)
    if extra:
        prov["run"] = _clean(extra)
    if opts["format"] == "json":
        payload = {**prov, "columns": header, "rows": _clean([list(r) for r in rows])}
        return json.dumps(payload, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# {TOOL} {__version__} {command}\n")
    buf.write(f"# seed: {opts['seed']}\n")
    buf.write("# config: " + json.dumps(prov["config"], sort_keys=True) + "\n")
    if extra:
        buf.write("# run: " + json.dumps(prov["run"], sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def render_report(command: str, opts: dict, result) -> str:
    """JSON document for results that are not naturally a table."""
    prov = _provenance(command, opts)
    return json.dumps({**prov, "result": _clean(result)}, indent=2) + "\n"


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return x


def write_output(opts: dict, text: str) -> None:
    out = opts["out"]
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_analytic_table(opts: dict) -> str:
    which = opts["which"]
    params = _param_list(opts)
    if which == "means":
        if not params:
            params = [CrossoverParam(a) for a in (0.0, 0.01, 0.22, 0.4, 0.99, 1.0)]
        rows = [
            (p.alpha, None if math.isinf(p.lam) else p.lam, analytic.mean_r(p), analytic.mean_rtilde(p))
            for p in params
        ]
        return render("analytic-table", opts, ["alpha", "lambda", "mean_r", "mean_rtilde"], rows)
    if which not in DEFAULT_R_GRID:
        raise ConfigError(f"unknown table {which!r}")
    grid = np.asarray(_as_list(opts["r_grid"] or DEFAULT_R_GRID[which]))
    if grid.size == 0 or np.any(grid < 0):
        raise ConfigError("r grid must be non-empty and >= 0")
    if which == "laguerre3":
        cols = [analytic.laguerre3_pdf(grid, 1), analytic.laguerre3_pdf(grid, 2)]
        header = ["r", "loe3", "lue3"]
    else:
        if which == "pdf_rtilde" and np.any(grid > 1):
            raise ConfigError("r-tilde grid must lie in [0, 1]")
        params = params or [CrossoverParam(0.0)]
        func = analytic.ratio_pdf if which == "pdf_r" else analytic.rtilde_pdf
        cols = [np.atleast_1d(func(grid, p)) for p in params]
        header = ["r", "pdf"] if len(params) == 1 else ["r"] + [f"pdf@{p.alpha!r}" for p in params]
    rows = list(zip(grid.tolist(), *(np.asarray(c).tolist() for c in cols)))
    return render("analytic-table", opts, header, rows)


def _summary(rs: RatioSample) -> dict:
    m, se = analysis.mean_of_sample(rs)
    mt, set_ = analysis.mean_of_sample(rtilde_of(rs))
    return {"n_ratios": len(rs), "degenerate_pairs": rs.degenerate_pairs,
            "mean_r": m, "se_r": se, "mean_rtilde": mt, "se_rtilde": set_}


def cmd_simulate(opts: dict) -> str:
    cfg, levels = simulate_levels(opts)
    emit = opts["emit"]
    if emit == "levels":
        rows = [(i, j, x) for i, row in enumerate(levels.tolist()) for j, x in enumerate(row)]
        return render("simulate", opts, ["realization", "index", "level"], rows, {"ensemble": cfg.to_dict()})
    try:
        rs = pooled_ratios(levels, cfg.kind, opts["slice"], opts["wrap"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    extra = {"ensemble": cfg.to_dict(), **_summary(rs)}
    sample = rtilde_of(rs) if opts["rtilde"] else rs
    if emit == "ratios":
        return render("simulate", opts, ["value"], [(x,) for x in sample.values.tolist()], extra)
    if emit != "histogram":
        raise ConfigError(f"unknown emit {emit!r}")
    domain = _as_list(opts["domain"]) or None
    if domain is not None and len(domain) != 2:
        raise ConfigError("domain needs two numbers")
    try:
        h = histogram(sample, tuple(domain) if domain else None, opts["bin_width"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    extra["out_of_domain"] = h.out_of_domain
    rows = zip(h.edges[:-1].tolist(), h.edges[1:].tolist(), h.densities.tolist(), h.counts.tolist())
    return render("simulate", opts, ["bin_lo", "bin_hi", "density", "count"], list(rows), extra)


def cmd_fit(opts: dict) -> str:
    rs, source = sample_from_opts(opts)
    if len(rs) == 0:
        raise ConfigError("no ratios to fit")
    fit = analysis.fit_lambda_eff(rs, opts["method"])
    result = {
        "lambda_eff": fit.lambda_eff,
        "alpha_eff": fit.alpha_eff,
        "stderr": fit.stderr,
        "objective_value": fit.objective_value,
        "method": fit.method,
        "n_samples": fit.n_samples,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "degenerate_pairs": rs.degenerate_pairs,
        "source": source,
    }
    if opts["format"] == "csv":
        keys = [k for k in result if k != "source"]
        return render("fit", opts, keys, [[result[k] for k in keys]], {"source": source})
    return render_report("fit", opts, result)


def cmd_scan(opts: dict) -> str:
    path = opts.get("spec")
    if not path:
        raise ConfigError("scan needs --spec")
    try:
        raw = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: sweep spec must be a JSON object")
    if opts["seed"] is not None:
        raw["seed"] = int(opts["seed"])
    raw["threads"] = int(opts["threads"])
    for key in ("target_samples", "method", "slice"):
        if opts.get(key) is not None:
            raw[key] = opts[key]
    try:
        spec = analysis.SweepSpec.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep spec: {exc}") from None
    opts["seed"] = spec.seed
    opts["resolved_spec"] = {k: getattr(spec, k) for k in spec.__dataclass_fields__}
    points = analysis.crossover_report(spec)
    rows = [[p.to_dict()[f] for f in analysis.REPORT_FIELDS] for p in points]
    if opts["format"] == "csv":
        return render("scan", opts, list(analysis.REPORT_FIELDS), rows)
    return render_report("scan", opts, [p.to_dict() for p in points])


def cmd_kld(opts: dict) -> str:
    rs, source = sample_from_opts(opts)
    refs = [r.strip() for r in str(opts["reference"]).split(",") if r.strip()]
    if not refs:
        raise ConfigError("no reference densities requested")
    rt = rtilde_of(rs)
    hr, ht = histogram(rs), histogram(rt)
    rows = []
    for ref in refs:
        try:
            dr = analysis.kld_histogram(hr, analysis.reference_density("r", ref))
            dt = analysis.kld_histogram(ht, analysis.reference_density("rtilde", ref))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        rows.append((ref, dr, dt))
    extra = {"source": source, **_summary(rs),
             "grid": {"r": [*hr.domain, hr.bin_width], "rtilde": [*ht.domain, ht.bin_width]}}
    if opts["format"] == "csv":
        return render("kld", opts, ["reference", "kld_r", "kld_rtilde"], rows, extra)
    result = {**extra, "kld": {ref: {"r": dr, "rtilde": dt} for ref, dr, dt in rows}}
    return render_report("kld", opts, result)


COMMANDS = {
    "analytic-table": cmd_analytic_table,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "scan": cmd_scan,
    "kld": cmd_kld,
}


# ---------------------------------------------------------------------------
# argument parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", help="output path, '-' for stdout (default)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--threads", type=int, help="worker threads for eigensolves")
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)


def _param_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", help="alpha value(s): 0.2 or 0.1,0.5 or lo:hi:step")
    g.add_argument("--lambda", dest="lam", help="lambda value(s), same syntax as --alpha")


def _ensemble_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ensemble", choices=list(analysis.ENSEMBLES))
    p.add_argument("--N", "-N", dest="N", type=int, help="matrix dimension")
    p.add_argument("--M", dest="M", type=int, help="Wishart column count (default N)")
    _param_args(p)
    p.add_argument("--gamma", type=float, help="QKR time-reversal breaking")
    p.add_argument("--kick", type=float, help="QKR kick strength (default 20000)")
    p.add_argument("--kick-jitter", type=float, help="half-width of the per-realization kick spread")
    p.add_argument("--count", type=int, help="number of matrices (default: enough for --target-samples)")
    p.add_argument("--target-samples", type=int, help="pooled ratios to aim for")
    p.add_argument("--slice", help="full, bulk:K or edges:K")
    p.add_argument("--no-wrap", dest="wrap", action="store_false",
                   help="do not use the wrap-around spacing of eigenangle spectra")


def _input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="ratio CSV (column 'value') or level list; omit to simulate")
    p.add_argument("--input-kind", choices=["auto", "ratios", "levels"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    kw = {"argument_default": argparse.SUPPRESS}

    p = sub.add_parser("analytic-table", help="tabulate analytic densities and averages", **kw)
    _common(p)
    p.add_argument("--which", choices=["pdf_r", "pdf_rtilde", "means", "laguerre3"])
    _param_args(p)
    p.add_argument("--r-grid", help="lo:hi:step or comma list")

    p = sub.add_parser("simulate", help="sample an ensemble and write ratios or a histogram", **kw)
    _common(p)
    _ensemble_args(p)
    p.add_argument("--emit", choices=["histogram", "ratios", "levels"])
    p.add_argument("--rtilde", action="store_true", help="emit min(r, 1/r) instead of r")
    p.add_argument("--domain", help="histogram domain lo,hi")
    p.add_argument("--bin-width", type=float)

    p = sub.add_parser("fit", help="fit lambda_eff to a ratio sample", **kw)
    _common(p)
    _input_args(p)
    _ensemble_args(p)
    p.add_argument("--method", choices=["mle", "histogram-lsq"])

    p = sub.add_parser("scan", help="run a sweep spec and report scaling points", **kw)
    _common(p)
    p.add_argument("--spec", help="sweep spec JSON")
    p.add_argument("--target-samples", type=int)
    p.add_argument("--method", choices=["mle", "histogram-lsq"])
    p.add_argument("--slice")

    p = sub.add_parser("kld", help="KL divergences of a ratio sample to reference densities", **kw)
    _common(p)
    _input_args(p)
    _ensemble_args(p)
    p.add_argument("--reference", help="comma list of goe, gue, loe3, lue3")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = vars(parser.parse_args(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    command = ns.pop("command")
    verbose = ns.pop("verbose", 0)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        opts = resolve(command, ns)
        text = COMMANDS[command](opts)
        write_output(opts, text)
    except ConfigError as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"{TOOL}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
