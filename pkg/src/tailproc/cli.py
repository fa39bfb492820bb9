"""Command-line experiment runner.

Every subcommand builds a model (``--preset`` or ``--model-file``), runs one
calculation or experiment, prints a short summary and writes its tables to
``--out-dir`` (default ``$TAILPROC_OUT_DIR`` or ``./tailproc-out``).

Exit status: 0 on success, 2 when a validity check fails, 1 on configuration
or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from . import simulate as sim
from .distcalc import (
    AtomicDist,
    MalformedModel,
    TailModel,
    anchored_from_spectral,
    extremal_index_inverse_count,
    extremal_index_spectral,
    mean_alpha_mass,
    rs_transform,
    spectral_from_anchored,
    tcf_check,
)
from .models import (
    DegenerateModel,
    MarkSpaceTooLarge,
    PRESETS,
    load_model,
    ma_anchored,
    ma_extremal_index,
    ma_spectral,
    preset,
    with_params,
)

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2
STOCHASTIC = {"simulate-tail", "simulate-clusters", "poisson", "randomized-origin", "campbell", "estimators"}

# option name -> (type, built-in default); None means "unset"
OPTIONS = {
    "preset": (str, None),
    "model_file": (str, None),
    "atoms_file": (str, None),
    "alpha": (float, None),
    "b": (float, None),
    "p": (float, None),
    "n": (None, 100_000),
    "r_exponent": (float, 0.4),
    "block_len": (None, None),
    "u_target": (float, None),
    "threshold_rule": (str, "tail"),
    "engine": (str, None),
    "eps": (float, 1.0),
    "replicates": (None, None),
    "window": (None, 1),
    "anchor": (str, "fm"),
    "functional": (str, "t-origin"),
    "schedule": (str, "10000,100000,1000000"),
    "seed": (None, None),
    "workers": (None, 1),
    "out_dir": (str, None),
    "format": (str, "csv"),
}

DEFAULT_U = {"poisson": 1.0, "campbell": 2.0, "randomized-origin": 500.0, "estimators": 100.0}
DEFAULT_REPLICATES = {"poisson": 2000, "randomized-origin": 20_000, "campbell": 10_000}


class CLIError(Exception):
    pass


def _int(text) -> int:
    """Integer that also accepts ``1e6`` style literals."""
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v != int(v):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    return int(v)


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _print_table(header: Sequence[str], rows: Sequence[Sequence], out=None) -> None:
    out = out or sys.stdout
    cells = [[str(h) for h in header]] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    for i, r in enumerate(cells):
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)), file=out)
        if i == 0:
            print("  ".join("-" * w for w in widths), file=out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--preset", help=f"named model: {', '.join(sorted(PRESETS))}; e.g. 'example-5.1(b=2)'")
    g.add_argument("--model-file", help="YAML or JSON model description")
    g.add_argument("--alpha", type=float, help="tail index of the innovations")
    g.add_argument("--b", type=float, help="lag-one coefficient for example-5.1")
    g.add_argument("--p", type=float, help="probability of a positive innovation")
    g = common.add_argument_group("simulation")
    g.add_argument("--n", type=_int, help="path length")
    g.add_argument("--r-exponent", type=float, help="block length r_n = floor(n^r)")
    g.add_argument("--block-len", type=_int, help="explicit block length (overrides --r-exponent)")
    g.add_argument("--u-target", type=float, help="expected exceedances n P(|X_0| > c_n)")
    g.add_argument("--threshold-rule", choices=("tail", "pilot"))
    g.add_argument("--engine", choices=sim.ENGINES, help="path engine for replicate experiments")
    g.add_argument("--eps", type=float, help="threshold multiplier for the Poisson experiment")
    g.add_argument("--replicates", type=_int, help="number of independent paths")
    g.add_argument("--window", type=_int, help="pattern half-width")
    g.add_argument("--anchor", choices=("fe", "fm"))
    g.add_argument("--seed", type=_int, help="master seed (required for simulations)")
    g.add_argument("--workers", type=_int, help="worker threads")
    g = common.add_argument_group("output")
    g.add_argument("--out-dir", help="artifact directory (default $TAILPROC_OUT_DIR or ./tailproc-out)")
    g.add_argument("--format", choices=("csv", "json"))
    g.add_argument("--config", help="YAML/JSON file with any of these options; flags win")

    ap = argparse.ArgumentParser(prog="tailproc", description="Tail-process calculus and cluster experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "validate": "check the time-change identity for a model or an atom file",
        "derive": "print the spectral and anchored laws and the extremal index",
        "duality": "check Palm duality round trips and the extremal-index identities",
        "simulate-tail": "empirical tail process around exceedances of one path",
        "simulate-clusters": "block clusters of one path against the anchored law",
        "poisson": "number of exceeding blocks per path against its Poisson limit",
        "randomized-origin": "pattern around one uniformly chosen exceedance per path",
        "campbell": "Monte-Carlo Campbell sum against its exact limit",
        "estimators": "extremal-index estimators along an increasing n schedule",
    }
    for name, h in helps.items():
        p = sub.add_parser(name, parents=[common], help=h, description=h)
        if name == "validate":
            p.add_argument("--atoms-file", help="spectral law in 'weight | i:v,...' format (needs --alpha)")
        if name == "campbell":
            p.add_argument("--functional", choices=sorted(sim.FUNCTIONALS))
        if name == "estimators":
            p.add_argument("--schedule", help="comma-separated path lengths")
    return ap


def _load_config(path: str) -> Dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CLIError(f"cannot read config {path}: {exc.strerror}") from None
    if path.endswith(".json"):
        cfg = json.loads(text)
    else:
        import yaml

        cfg = yaml.safe_load(text) or {}
    if not isinstance(cfg, dict):
        raise CLIError(f"config {path}: expected a mapping")
    out = {}
    for k, v in cfg.items():
        key = str(k).replace("-", "_")
        if key not in OPTIONS:
            raise CLIError(f"config {path}: unknown option {k!r}")
        out[key] = v
    return out


def resolve_options(args: argparse.Namespace) -> Dict:
    """Merge flags, config file and built-in defaults (in that priority)."""
    cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    opts = {}
    for key, (conv, default) in OPTIONS.items():
        v = getattr(args, key, None)
        if v is None:
            v = cfg.get(key)
            if v is not None and key in ("n", "block_len", "replicates", "window", "seed", "workers"):
                v = _int(v)
        opts[key] = default if v is None else v
    cmd = args.command
    if opts["u_target"] is None:
        opts["u_target"] = DEFAULT_U.get(cmd, 100.0)
    if opts["replicates"] is None:
        opts["replicates"] = DEFAULT_REPLICATES.get(cmd, 1)
    if opts["engine"] is None:
        opts["engine"] = "sparse" if cmd == "randomized-origin" else "dense"
    if opts["out_dir"] is None:
        opts["out_dir"] = os.environ.get("TAILPROC_OUT_DIR", "tailproc-out")
    if cmd in STOCHASTIC and opts["seed"] is None:
        raise CLIError(f"{cmd} is randomized: pass --seed for reproducibility")
    return opts


def build_model(opts: Dict):
    if opts["preset"] and opts["model_file"]:
        raise CLIError("give either --preset or --model-file, not both")
    if opts["model_file"]:
        model = load_model(opts["model_file"])
        if opts["b"] is not None:
            raise CLIError("--b only applies to the example-5.1 preset")
        return with_params(model, opts["alpha"], opts["p"])
    name = opts["preset"] or "example-1.1"
    return preset(name, b=opts["b"], alpha=opts["alpha"], p=opts["p"])


def path_config(opts: Dict) -> sim.PathConfig:
    return sim.PathConfig(
        n=opts["n"],
        r_exponent=opts["r_exponent"],
        block_len=opts["block_len"],
        u_target=opts["u_target"],
        threshold_rule=opts["threshold_rule"],
        window=opts["window"],
        seed=opts["seed"],
        workers=opts["workers"],
        engine=opts["engine"],
    )


class Artifacts:
    def __init__(self, opts: Dict, command: str):
        self.dir = Path(opts["out_dir"])
        self.format = opts["format"]
        self.command = command
        self.files: List[str] = []
        self.extra: Dict = {}
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CLIError(f"cannot create {self.dir}: {exc.strerror}") from None

    def table(self, suffix: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
        stem = self.command + (f"-{suffix}" if suffix else "")
        path = self.dir / f"{stem}.{self.format}"
        if self.format == "csv":
            sim.write_csv(path, header, rows)
        else:
            sim.write_json(path, {"columns": list(header), "rows": [list(r) for r in rows]})
        self.files.append(str(path))

    def summary(self, payload: Dict) -> None:
        self.extra.update(payload)


def _atom_rows(kind: str, dist: AtomicDist):
    return [(kind, w, str(s)) for s, w in dist]


# --------------------------------------------------------------------------
# commands


def cmd_validate(opts, art: Artifacts) -> int:
    if opts["atoms_file"]:
        if opts["alpha"] is None:
            raise CLIError("--atoms-file needs --alpha")
        tail = TailModel(opts["alpha"], AtomicDist.load(opts["atoms_file"]))
        label = opts["atoms_file"]
    else:
        model = build_model(opts)
        tail = ma_spectral(model)
        label = model.name
    rep = tcf_check(tail)
    art.table("", ("check", "valid", "max_violation"), [("time-change", rep.valid, rep.max_violation)])
    if rep.valid:
        print(f"{label}: valid spectral tail process; theta = {_fmt(extremal_index_spectral(tail))}")
        return EXIT_OK
    k, atom, left, right = rep.witness
    print(f"{label}: NOT a spectral tail process; at lag {k} atom {atom} has mass {_fmt(left)} vs {_fmt(right)}")
    return EXIT_INVALID


def cmd_derive(opts, art: Artifacts) -> int:
    model = build_model(opts)
    tail, q = ma_spectral(model), ma_anchored(model)
    theta = ma_extremal_index(model)
    print(model.describe())
    print("\nspectral tail process Theta:")
    _print_table(("weight", "atom"), [(w, str(s)) for s, w in tail.spectral])
    print("\nanchored spectral process Q (first maximum at 0):")
    _print_table(("weight", "atom"), [(w, str(s)) for s, w in q.q])
    print(f"\ntheta = {_fmt(theta)}")
    art.table("", ("law", "weight", "atom"), _atom_rows("spectral", tail.spectral) + _atom_rows("anchored", q.q))
    art.summary({"model": model.describe(), "theta": theta})
    return EXIT_OK


def cmd_duality(opts, art: Artifacts) -> int:
    model = build_model(opts)
    tail = ma_spectral(model)
    q = anchored_from_spectral(tail)
    back = spectral_from_anchored(q)
    rs = rs_transform(tail)
    th = [extremal_index_spectral(tail), extremal_index_inverse_count(tail), ma_extremal_index(model), 1.0 / mean_alpha_mass(q)]
    rows = [
        ("tcf_check", tcf_check(tail).max_violation),
        ("anchored_from_spectral vs ma_anchored", q.q.distance(ma_anchored(model).q)),
        ("spectral_from_anchored round trip", back.spectral.distance(tail.spectral)),
        ("rs_transform fixed point", rs.spectral.distance(tail.spectral)),
        ("theta spread", max(th) - min(th)),
    ]
    ok = all(v <= 1e-10 for _, v in rows)
    _print_table(("identity", "max deviation"), rows)
    print(f"theta = {_fmt(th[0])} ({'all identities hold' if ok else 'IDENTITY FAILED'})")
    art.table("", ("identity", "max_deviation"), rows)
    return EXIT_OK if ok else EXIT_INVALID


def _pattern_out(art: Artifacts, suffix: str, table: sim.PatternTable) -> None:
    rows = table.rows()
    _print_table(sim.PATTERN_HEADER[1:], [r[1:] for r in rows])
    art.table(suffix, sim.PATTERN_HEADER, rows)


def cmd_simulate_tail(opts, art: Artifacts) -> int:
    model, cfg = build_model(opts), path_config(opts)
    res = sim.tail_process_experiment(model, cfg)
    print(f"{model.name}: c_n = {_fmt(res.threshold)}, N_e = {res.n_exceedances}\n\nexceedance patterns:")
    _pattern_out(art, "window", res.window)
    print("\nsupport patterns:")
    _pattern_out(art, "support", res.support)
    art.summary({"threshold": res.threshold, "n_exceedances": res.n_exceedances})
    return EXIT_OK


def cmd_simulate_clusters(opts, art: Artifacts) -> int:
    model, cfg = build_model(opts), path_config(opts)
    res = sim.cluster_experiment(model, cfg, opts["anchor"], opts["replicates"])
    st = res.stats
    print(
        f"{model.name}: c_n = {_fmt(res.threshold)}, r_n = {cfg.r_n}, N_e = {st.n_exceedances}, N_c = {st.n_clusters}\n"
        f"N_c/N_e = {_fmt(st.theta_hat_ratio)} (theta = {_fmt(res.theta_exact)}), "
        f"N_c/(n P) = {_fmt(st.theta_hat_clusters)}\n\nanchored cluster patterns:"
    )
    _pattern_out(art, "clusters", res.clusters)
    art.table(
        "estimators",
        sim.ESTIMATOR_HEADER,
        [(cfg.n, cfg.r_n, res.threshold, st.n_exceedances, st.n_clusters, st.theta_hat_ratio, res.theta_exact,
          st.n_exceedances / st.expected_exceedances, st.n_clusters / (res.theta_exact * st.expected_exceedances))],
    )
    art.summary({"threshold": res.threshold, "theta_hat_ratio": st.theta_hat_ratio, "theta_hat_clusters": st.theta_hat_clusters})
    return EXIT_OK


def cmd_poisson(opts, art: Artifacts) -> int:
    model, cfg = build_model(opts), path_config(opts)
    res = sim.poisson_cluster_experiment(model, cfg, opts["eps"], opts["replicates"])
    print(
        f"{model.name}: c_n = {_fmt(res.threshold)}, eps = {_fmt(res.eps)}, replicates = {len(res.counts)}\n"
        f"mean = {_fmt(res.mean)} (Poisson mean {_fmt(res.expected_mean)}, limit {_fmt(res.limit_mean)}), "
        f"variance/mean = {_fmt(res.dispersion)}\nchi2 = {_fmt(res.chi2)} on {res.dof} df, p = {_fmt(res.p_value)}\n"
    )
    _print_table(sim.POISSON_HEADER, res.table)
    art.table("", sim.POISSON_HEADER, res.table)
    art.summary({k: v for k, v in asdict(res).items() if k not in ("counts", "table")})
    return EXIT_OK


def cmd_randomized_origin(opts, art: Artifacts) -> int:
    model, cfg = build_model(opts), path_config(opts)
    res = sim.randomized_origin_experiment(model, cfg, opts["replicates"])
    print(f"{model.name}: c_n = {_fmt(res.threshold)}, sampled origins = {res.n_sampled} of {res.n_paths} paths\n")
    _pattern_out(art, "", res.table)
    tv = res.table.tv_distance(res.table.exact)
    print(f"\ntotal variation to the tail-process law: {_fmt(tv)}")
    art.summary({"threshold": res.threshold, "n_sampled": res.n_sampled, "tv_to_tail_law": tv})
    return EXIT_OK


def cmd_campbell(opts, art: Artifacts) -> int:
    model, cfg = build_model(opts), path_config(opts)
    res = sim.campbell_check(model, cfg, opts["functional"], opts["replicates"])
    f = sim.FUNCTIONALS[res.functional]
    print(f"{model.name}: {f.doc}, tau = {_fmt(res.tau)}, c_n = {_fmt(res.threshold)}")
    rows = [(res.functional, res.tau, res.lhs, res.lhs_se, res.rhs, res.z)]
    header = ("functional", "tau", "lhs", "lhs_se", "rhs", "z_score")
    _print_table(header, rows)
    art.table("", header, rows)
    return EXIT_OK


def cmd_estimators(opts, art: Artifacts) -> int:
    model, cfg = build_model(opts), path_config(opts)
    try:
        schedule = [_int(s) for s in str(opts["schedule"]).split(",") if s.strip()]
    except argparse.ArgumentTypeError as exc:
        raise CLIError(f"--schedule: {exc}") from None
    rows = sim.estimator_convergence(model, cfg, schedule, opts["replicates"])
    table = [tuple(asdict(r).values()) for r in rows]
    _print_table(sim.ESTIMATOR_HEADER, table)
    art.table("", sim.ESTIMATOR_HEADER, table)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "derive": cmd_derive,
    "duality": cmd_duality,
    "simulate-tail": cmd_simulate_tail,
    "simulate-clusters": cmd_simulate_clusters,
    "poisson": cmd_poisson,
    "randomized-origin": cmd_randomized_origin,
    "campbell": cmd_campbell,
    "estimators": cmd_estimators,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        opts = resolve_options(args)
        art = Artifacts(opts, args.command)
        status = COMMANDS[args.command](opts, art)
        payload = {"command": args.command, "options": opts, "exit_status": status, "artifacts": art.files}
        payload.update(art.extra)
        payload["runtime_s"] = time.perf_counter() - start
        sim.write_json(art.dir / f"{args.command}-summary.json", payload)
    except (CLIError, sim.ConfigError, MalformedModel, DegenerateModel, MarkSpaceTooLarge, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"tailproc: error: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except (sim.NoExceedances, sim.NoClusters) as exc:
        print(f"tailproc: error: {exc}; try a larger --n or --u-target", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"tailproc: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
