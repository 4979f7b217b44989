"""Command line front end.

Usage::

    lyaplab GROUP COMMAND [options]

Groups and commands::

    exact  lyapunov | variance | expand | density | fit
    spec   zeros | residue
    mw     f | fsimple | taylor | map | betac | free-energy
    sim    diffusion | product | clt | hypotheses

Every command writes a table (CSV by default, ``--format json`` for a
``{"manifest": ..., "records": [...]}`` object) to ``--output`` or stdout.
The manifest (package version, seed, resolved parameters) is embedded in
JSON output; with CSV it is written next to the output as
``<output>.manifest.json`` (or to stderr when writing to stdout).  Any
manifest can be passed back through ``--config`` to repeat the run.

``--config PATH`` reads ``key=value`` lines (or a manifest) whose values are
used unless the same option is given on the command line.  ``--grid
lo:hi:n[:log]`` scans the primary parameter of a command.

Exit codes: 0 success, 2 invalid input or usage, 3 numerical budget or
tolerance failures.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__, exact, mccoywu, simulate, spectral
from .errors import NumericalError, ValidationError
from .exact import ModelParams

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Formatting
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _flatten(rec: dict) -> dict:
    out = {}
    for k, v in rec.items():
        if isinstance(v, complex) or isinstance(v, np.complexfloating):
            out[k + "_re"] = float(v.real)
            out[k + "_im"] = float(v.imag)
        elif isinstance(v, Fraction):
            out[k] = float(v)
        elif isinstance(v, np.generic):
            out[k] = v.item()
        else:
            out[k] = v
    return out


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def write_output(records: list[dict], manifest: dict, fmt: str, output: str | None):
    rows = [_flatten(r) for r in records]
    if fmt == "json":
        doc = {"manifest": manifest,
               "records": [{k: _json_value(v) for k, v in r.items()} for r in rows]}
        text = json.dumps(doc, indent=1) + "\n"
    else:
        cols = list(rows[0].keys()) if rows else []
        lines = [",".join(cols)] + [",".join(_fmt(r[c]) for c in cols) for r in rows]
        text = "\n".join(lines) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
        if fmt == "csv":
            with open(output + ".manifest.json", "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=1)
                fh.write("\n")
    else:
        sys.stdout.write(text)
        if fmt == "csv":
            sys.stderr.write("# manifest " + json.dumps(manifest) + "\n")


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------

def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:n`` (linear) or ``lo:hi:n:log`` (geometric)."""
    parts = text.split(":")
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
        raise ValidationError(f"grid must be lo:hi:n[:log], got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError(f"grid must be lo:hi:n[:log], got {text!r}") from None
    if n < 1:
        raise ValidationError("grid needs n >= 1")
    if len(parts) == 4:
        if lo <= 0 or hi <= 0:
            raise ValidationError("a log grid needs positive limits")
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def _int_like(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text}")
    return int(v)


def _common(p: argparse.ArgumentParser, seed: bool = False, jobs: bool = False):
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", default=None)
    p.add_argument("--grid", default=None, help="lo:hi:n[:log] scan of the primary parameter")
    if seed:
        p.add_argument("--seed", type=_int_like, default=0)
    if jobs:
        p.add_argument("--jobs", type=int, default=None)


def _model(p, eps=True):
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--alpha", type=float, required=True)
    if eps:
        p.add_argument("--eps", type=float, default=None)


def _ising(p):
    p.add_argument("--e1", type=float, default=1.0)
    p.add_argument("--e2-law", choices=("point", "uniform", "power"), default="uniform")
    p.add_argument("--e2-lo", type=float, default=0.5)
    p.add_argument("--e2-hi", type=float, default=1.5)
    p.add_argument("--n-param", type=float, default=100.0)


def _law(p):
    p.add_argument("--law", choices=("lognormal", "mwpower", "shifted"), default="lognormal")
    p.add_argument("--n-param", type=float, default=None)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--base", choices=("uniform", "triangular"), default="uniform")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="lyaplab", description="Lyapunov exponents of random-coupling diffusions")
    root.add_argument("--version", action="version", version=__version__)
    groups = root.add_subparsers(dest="group", required=True, parser_class=_Parser)

    g = groups.add_parser("exact").add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = g.add_parser("lyapunov"); _model(p); _common(p)
    p = g.add_parser("variance"); _model(p); _common(p)
    p = g.add_parser("expand")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--jmax", type=int, default=6)
    _common(p)
    p = g.add_parser("density"); _model(p)
    p.add_argument("--y", type=float, default=1.0)
    _common(p)
    p = g.add_parser("fit"); _model(p, eps=False); _common(p)

    g = groups.add_parser("spec").add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = g.add_parser("zeros")
    p.add_argument("--x", type=float, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--nu-max", type=float, default=None)
    _common(p)
    p = g.add_parser("residue")
    p.add_argument("--x", type=float, default=None)
    p.add_argument("--n", type=int, default=1)
    _common(p)

    g = groups.add_parser("mw").add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = g.add_parser("f")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--eta", type=float, default=mccoywu.ETA_DEFAULT)
    _common(p)
    p = g.add_parser("fsimple")
    p.add_argument("--alpha", type=float, default=None, help="real part of alpha")
    p.add_argument("--alpha-im", type=float, default=0.0)
    p.add_argument("--mode", choices=("quadrature", "closed-form"), default="closed-form")
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--counterterm", action="store_true")
    _common(p)
    p = g.add_parser("taylor")
    p.add_argument("--nmax", type=int, default=6)
    p.add_argument("--eta", type=float, default=mccoywu.ETA_DEFAULT)
    p.add_argument("--method", choices=("finite-difference", "pole-dominant", "pole-numeric",
                                        "bernoulli-exact"), default="pole-dominant")
    _common(p)
    p = g.add_parser("map"); _ising(p)
    p.add_argument("--beta", type=float, default=None)
    _common(p)
    p = g.add_parser("betac"); _ising(p); _common(p)
    p = g.add_parser("free-energy"); _ising(p)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--beta-factor", type=float, default=1.2, help="beta = factor * beta_c if --beta is absent")
    p.add_argument("--budget", type=_int_like, default=200_000)
    _common(p, seed=True, jobs=True)

    g = groups.add_parser("sim").add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = g.add_parser("diffusion"); _model(p)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--steps", type=_int_like, default=1_000_000)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--coords", choices=("log-S", "ratio-Y", "XY"), default="log-S")
    _common(p, seed=True, jobs=True)
    p = g.add_parser("product"); _model(p); _law(p)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--steps", type=_int_like, default=1_000_000)
    p.add_argument("--replicas", type=int, default=1)
    _common(p, seed=True, jobs=True)
    p = g.add_parser("clt"); _model(p)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--steps", type=_int_like, default=1_000_000)
    p.add_argument("--replicas", type=int, default=1000)
    _common(p, seed=True, jobs=True)
    p = g.add_parser("hypotheses"); _model(p, eps=False); _law(p)
    p.add_argument("--c", type=float, default=0.5)
    _common(p)
    return root


# ---------------------------------------------------------------------------
# Commands: each returns (records, provenance)
# ---------------------------------------------------------------------------

def _scan(a, name):
    """Values of the primary parameter ``name``: the grid if given, else the
    single option value."""
    if a.grid:
        return [float(v) for v in parse_grid(a.grid)]
    v = getattr(a, name)
    if v is None:
        raise ValidationError(f"--{name.replace('_', '-')} or --grid is required")
    return [v]


def cmd_exact_lyapunov(a):
    recs = []
    for e in _scan(a, "eps"):
        p = ModelParams(a.sigma, a.alpha, e)
        r = exact.lyapunov_eval(p)
        recs.append({"sigma": a.sigma, "alpha": a.alpha, "eps": e, "x": p.x, "L": r.value, "err": r.err_est})
    return recs, "exact"


def cmd_exact_variance(a):
    recs = []
    for e in _scan(a, "eps"):
        p = ModelParams(a.sigma, a.alpha, e)
        r = exact.variance(p)
        recs.append({"sigma": a.sigma, "alpha": a.alpha, "eps": e, "x": p.x, "v": r.v, "err": r.quad_err})
    return recs, "quadrature"


def cmd_exact_expand(a):
    cs = exact.expansion_coefficients_exact(a.alpha, a.jmax)
    return [{"j": j, "c": float(c), "numerator": c.numerator, "denominator": c.denominator}
            for j, c in enumerate(cs, 1)], "exact"


def cmd_exact_density(a):
    if a.eps is None:
        raise ValidationError("--eps is required")
    p = ModelParams(a.sigma, a.alpha, a.eps)
    return [{"y": y, "p": exact.invariant_density(p, y)} for y in _scan(a, "y")], "exact"


def cmd_exact_fit(a):
    if not a.grid:
        raise ValidationError("exact fit needs --grid over eps")
    r = exact.singular_exponent_fit(a.sigma, a.alpha, parse_grid(a.grid))
    return [{"sigma": a.sigma, "alpha": a.alpha, "slope": r.slope, "prefactor": r.prefactor}], "exact"


def cmd_spec_zeros(a):
    recs = []
    for x in _scan(a, "x"):
        if a.nu_max is not None:
            zs = spectral.zeros_below(x, a.nu_max)
        else:
            zs = spectral.zeros_of_k(x, a.count if a.count is not None else 1)
        recs += [{"x": z.x, "n": z.n, "nu": z.nu, "residual": z.residual} for z in zs]
    return recs, "exact"


def cmd_spec_residue(a):
    recs = []
    for x in _scan(a, "x"):
        z = spectral.zeros_of_k(x, a.n)[-1]
        r = spectral.residue_at_zero(z)
        recs.append({"x": x, "n": z.n, "nu": z.nu, "residue": r.residue, "deviation": r.deviation})
    return recs, "exact"


def cmd_mw_f(a):
    recs = []
    for al in _scan(a, "alpha"):
        v, e = mccoywu.big_f(al, a.eta, return_error=True)
        recs.append({"alpha": al, "eta": a.eta, "F": v, "err": e})
    return recs, "quadrature"


def cmd_mw_fsimple(a):
    recs = []
    for al in _scan(a, "alpha"):
        z = complex(al, a.alpha_im)
        v = mccoywu.big_f_simplified(z, a.mode, a.eta, a.counterterm)
        recs.append({"alpha": z, "F": complex(v)})
    return recs, "exact" if a.mode == "closed-form" else "quadrature"


def cmd_mw_taylor(a):
    if a.method == "bernoulli-exact":
        if a.nmax % 2:
            raise ValidationError("bernoulli-exact needs an even --nmax")
        s = mccoywu.taylor_simplified(a.nmax // 2)
        return [{"n": n, "c": float(c), "err": 0.0} for n, c in s.coeffs], "exact"
    s = mccoywu.taylor_series(a.nmax, a.eta, a.method)
    return [{"n": n, "eta": a.eta, "c": c, "err": e} for (n, c), e in zip(s.coeffs, s.errors)], "quadrature"


def _ising_model(a, beta=1.0):
    if a.e2_law == "point":
        law = mccoywu.E2Law.point(a.e2_hi)
    elif a.e2_law == "uniform":
        law = mccoywu.E2Law.uniform(a.e2_lo, a.e2_hi)
    else:
        law = mccoywu.E2Law.power(a.n_param, a.e2_hi)
    return mccoywu.IsingDisorderModel(a.e1, law, beta)


def cmd_mw_map(a):
    base = _ising_model(a)
    recs = []
    for b in _scan(a, "beta"):
        m = base.with_beta(b)
        recs.append({"beta": b, "alpha": mccoywu.alpha_of_beta(m), "mean_log_z": m.mean_log_z()})
    return recs, "exact"


def cmd_mw_betac(a):
    return [{"e1": a.e1, "beta_c": mccoywu.beta_c(_ising_model(a))}], "exact"


def cmd_mw_free_energy(a):
    base = _ising_model(a)
    beta = a.beta if a.beta is not None else a.beta_factor * mccoywu.beta_c(base)
    grid = parse_grid(a.grid) if a.grid else np.linspace(math.pi / 16, math.pi, 16)
    r = mccoywu.free_energy(base.with_beta(beta), grid, a.budget, a.seed, a.jobs)
    return [{"beta": beta, "free_energy": r.value, "err": r.err, "mc_err": r.mc_err,
             "quad_err": r.quad_err}], "monte-carlo"


def _law_from(a):
    if a.law == "lognormal":
        return simulate.LogNormal(a.sigma, a.alpha)
    if a.law == "mwpower":
        return simulate.MWPower(a.sigma, a.alpha, a.n_param, a.lambda1)
    return simulate.ShiftedCompact(a.sigma, a.alpha, a.base)


def cmd_sim_diffusion(a):
    p = ModelParams(a.sigma, a.alpha, _require(a, "eps"))
    cfg = simulate.SimConfig(dt=a.dt, n_steps=a.steps, replicas=a.replicas, seed=a.seed, jobs=a.jobs)
    r = simulate.simulate_diffusion(p, cfg, a.coords)
    rec = {"L_hat": r.estimate, "err": r.std_error, "ess": r.ess, "exact": r.extras["exact"],
           "chi2_p": r.extras.get("chi2_p", math.nan)}
    if a.coords == "XY":
        rec["tau_mean"] = r.extras["tau_mean"]
    return [rec], "monte-carlo"


def cmd_sim_product(a):
    law = _law_from(a)
    eps = _require(a, "eps")
    recs = []
    for d in _scan(a, "delta"):
        cfg = simulate.SimConfig(delta=d, n_steps=a.steps, replicas=a.replicas, seed=a.seed, jobs=a.jobs)
        r = simulate.product_lyapunov(law, eps, d, cfg)
        recs.append({"delta": d, "rate": r.extras["rate"], "err": r.extras["rate_se"],
                     "exact": r.extras["exact"], "L_step": r.estimate, "L_step_err": r.std_error})
    return recs, "monte-carlo"


def cmd_sim_clt(a):
    p = ModelParams(a.sigma, a.alpha, _require(a, "eps"))
    cfg = simulate.SimConfig(dt=a.dt, n_steps=a.steps, replicas=a.replicas, seed=a.seed, jobs=a.jobs)
    r = simulate.clt_variance_estimate(p, cfg)
    return [{"t": r.extras["t"], "variance": r.estimate, "err": r.std_error, "exact": r.extras["exact"],
             "skewness": r.extras["skewness"], "excess_kurtosis": r.extras["excess_kurtosis"]}], "monte-carlo"


def cmd_sim_hypotheses(a):
    if not a.grid:
        raise ValidationError("sim hypotheses needs --grid over delta")
    rep = simulate.check_hypotheses(_law_from(a), parse_grid(a.grid), a.c, raise_on_failure=False)
    return [{"delta": d, "drift_rate": r1, "variance_rate": r2, "tail_rate": r3, "inverse_rate": r4,
             "ok": rep.ok}
            for d, r1, r2, r3, r4 in zip(rep.deltas, rep.drift_rate, rep.variance_rate,
                                         rep.tail_rate, rep.inverse_rate)], "exact"


def _require(a, name):
    v = getattr(a, name)
    if v is None:
        raise ValidationError(f"--{name} is required")
    return v


COMMANDS = {
    ("exact", "lyapunov"): cmd_exact_lyapunov,
    ("exact", "variance"): cmd_exact_variance,
    ("exact", "expand"): cmd_exact_expand,
    ("exact", "density"): cmd_exact_density,
    ("exact", "fit"): cmd_exact_fit,
    ("spec", "zeros"): cmd_spec_zeros,
    ("spec", "residue"): cmd_spec_residue,
    ("mw", "f"): cmd_mw_f,
    ("mw", "fsimple"): cmd_mw_fsimple,
    ("mw", "taylor"): cmd_mw_taylor,
    ("mw", "map"): cmd_mw_map,
    ("mw", "betac"): cmd_mw_betac,
    ("mw", "free-energy"): cmd_mw_free_energy,
    ("sim", "diffusion"): cmd_sim_diffusion,
    ("sim", "product"): cmd_sim_product,
    ("sim", "clt"): cmd_sim_clt,
    ("sim", "hypotheses"): cmd_sim_hypotheses,
}

_NON_PARAMS = {"group", "command", "format", "output", "config"}


# ---------------------------------------------------------------------------
# Config files and dispatch
# ---------------------------------------------------------------------------

def _read_config(path: str) -> list[str]:
    """Turn a key=value file or a manifest into option tokens."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    pairs: list[tuple[str, object]] = []
    if text.lstrip().startswith("{"):
        try:
            pairs = list(json.loads(text)["params"].items())
        except (ValueError, KeyError, TypeError):
            raise ValidationError(f"{path} is not a manifest") from None
    else:
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            pairs.append((k.strip(), v.strip()))
    tokens = []
    for k, v in pairs:
        flag = "--" + k.replace("_", "-")
        if v is None:
            continue
        if isinstance(v, bool) or v in ("true", "false", "True", "False"):
            if v in (True, "true", "True"):
                tokens.append(flag)
            continue
        tokens += [flag, v if isinstance(v, str) else repr(v)]
    return tokens


def _split_config(argv: list[str]) -> tuple[list[str], str | None]:
    out, path, i = [], None, 0
    while i < len(argv):
        t = argv[i]
        if t == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a path")
            path = argv[i + 1]
            i += 2
            continue
        if t.startswith("--config="):
            path = t.split("=", 1)[1]
        else:
            out.append(t)
        i += 1
    return out, path


def _attach_values(argv: list[str]) -> list[str]:
    """Join ``--opt VALUE`` into ``--opt=VALUE`` when VALUE starts with a
    dash (e.g. ``--grid -0.5:0.5:5``), which argparse would read as a flag."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        t = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if (t.startswith("--") and "=" not in t and nxt is not None and nxt.startswith("-")
                and len(nxt) > 1 and (nxt[1].isdigit() or nxt[1] == ".")):
            out.append(f"{t}={nxt}")
            i += 2
            continue
        out.append(t)
        i += 1
    return out


def dispatch(argv: list[str]) -> int:
    """Run one command; returns the exit code."""
    parser = build_parser()
    try:
        argv, cfg = _split_config(list(argv))
        if cfg is not None:
            # file values go right after "GROUP COMMAND" so that later
            # command-line flags override them
            pos = [i for i, t in enumerate(argv) if not t.startswith("-")][:2]
            cut = pos[-1] + 1 if len(pos) == 2 else len(argv)
            argv = argv[:cut] + _read_config(cfg) + argv[cut:]
        a = parser.parse_args(_attach_values(argv))
    except UsageError as exc:
        sys.stderr.write(f"lyaplab: usage error: {exc} (try 'lyaplab GROUP COMMAND --help')\n")
        return EXIT_USAGE
    except ValidationError as exc:
        sys.stderr.write(f"lyaplab: invalid input: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if getattr(a, "jobs", "absent") is None and not os.environ.get("LYAPLAB_JOBS"):
        a.jobs = os.cpu_count() or 1
    fn = COMMANDS[(a.group, a.command)]
    params = {k: v for k, v in sorted(vars(a).items()) if k not in _NON_PARAMS}
    try:
        records, provenance = fn(a)
    except ValidationError as exc:
        sys.stderr.write(f"lyaplab: invalid input: {exc}\n")
        return EXIT_USAGE
    except NumericalError as exc:
        sys.stderr.write(f"lyaplab: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERIC
    manifest = {"program": "lyaplab", "version": __version__, "command": [a.group, a.command],
                "seed": getattr(a, "seed", None), "provenance": provenance,
                "params": {k: v for k, v in params.items() if k != "jobs"}}
    write_output(records, manifest, a.format, a.output)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)
