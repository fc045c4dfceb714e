"""Command line entry point: bounds, simulation, capacity search, thresholds, figures.

Every subcommand writes CSV (header row, '.' decimals).  With ``--out DIR``
the CSV files go to ``DIR`` together with a ``manifest.json`` holding the
fully resolved options; ``--config manifest.json`` replays such a run.
Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    bound_curve, contention_rates, log_time_grid, threshold_time,
)
from .contention import (
    aloha_probability, line_network, random_network,
)
from .errors import ParameterError, TranscapError
from .sim import SimConfig, capacity_search, empty_fraction, run

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
FIGURES = ("line-fnT", "random-fnT", "bounds-vs-sim", "threshold-map")
DEFAULT_RSH = tuple(round(0.02 * i, 2) for i in range(1, 11))

# desk-scale rates for the empty-buffer figures, from the full-scale searches
LINE_RATES = {"aloha": 0.08, "csma": 0.17}
RANDOM_RATES = {
    "aloha": {10: 0.01, 100: 0.002, 1000: 0.0004},
    "csma": {10: 0.03, 100: 0.007, 1000: 0.0009},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        return [int(float(x)) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def _float_list(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _count(text):
    """Integers written as ``100000`` or ``1e5``."""
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad count {text!r}") from exc
    if v != int(v):
        raise argparse.ArgumentTypeError(f"count must be integral, got {text!r}")
    return int(v)


def _add_network(p):
    p.add_argument("--network", choices=("line", "random", "complete"), default="line")
    p.add_argument("--n", type=int, default=5, help="number of nodes")
    p.add_argument("--cr", type=int, default=3, help="contention range of line networks")
    p.add_argument("--net-seed", type=int, default=7, help="seed of the random placement")


def _add_mac(p, macs=("aloha", "centralized", "csma")):
    # requiredness is checked after --config is merged
    p.add_argument("--mac", choices=macs, default=None)
    p.add_argument("--p", type=float, default=None, help="Aloha transmit probability")
    p.add_argument("--nu", type=float, default=0.1, help="CSMA backoff rate")
    p.add_argument("--mu", type=float, default=0.1, help="CSMA release rate")
    p.add_argument("--c", type=float, default=1.0, help="transmission rate C")


def build_parser():
    root = _Parser(prog="transcap", description=__doc__.splitlines()[0])
    root.add_argument("--version", action="version", version=f"transcap {__version__}")
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", default=None, help="JSON file with option overrides")
        p.add_argument("--out", default=None, help="output directory (CSV + manifest.json)")

    b = sub.add_parser("bounds", help="transient lower/upper throughput bounds")
    _add_mac(b, ("aloha", "csma"))
    b.add_argument("--hops", type=int, default=2)
    b.add_argument("--k", type=int, default=None,
                   help="number of mutually interfering transmitters (default: hops)")
    b.add_argument("--eps", type=float, default=1e-3)
    b.add_argument("--tmin", type=_count, default=1)
    b.add_argument("--tmax", type=_count, default=10**5)
    b.add_argument("--per-decade", type=int, default=10)
    common(b)

    s = sub.add_parser("simulate", help="simulate and report 1-f(n,T) per decade")
    _add_network(s)
    _add_mac(s)
    s.add_argument("--schedule", default=None, help='e.g. "0,1,2,0+3"')
    s.add_argument("--loop-start", type=int, default=0)
    s.add_argument("--lam", type=float, default=0.08)
    s.add_argument("--arrival", choices=("fluid", "bernoulli", "saturated"), default="fluid")
    s.add_argument("--policy", choices=("hold", "skip"), default="hold")
    s.add_argument("--tmax", type=_count, default=10**5)
    s.add_argument("--seeds", type=_int_list, default=list(range(10)))
    s.add_argument("--trace", action="store_true", help="also export per-node traces")
    common(s)

    c = sub.add_parser("capacity", help="bisection search for the sustainable rate")
    _add_network(c)
    _add_mac(c)
    c.add_argument("--schedule", default=None)
    c.add_argument("--loop-start", type=int, default=0)
    c.add_argument("--policy", choices=("hold", "skip"), default="hold")
    c.add_argument("--tmax", type=_count, default=10**5)
    c.add_argument("--cap", type=_count, default=None,
                   help="backlog threshold (default tmax/100)")
    c.add_argument("--seed", type=int, default=0)
    common(c)

    t = sub.add_parser("threshold", help="time scale where multi-hop beats single-hop")
    _add_mac(t, ("aloha", "csma"))
    t.add_argument("--hops", type=_int_list, default=[2, 3, 4])
    t.add_argument("--rsh", type=_float_list, default=list(DEFAULT_RSH))
    t.add_argument("--rmh", type=float, default=1.0)
    t.add_argument("--eps", type=float, default=1e-3)
    t.add_argument("--tcap", type=_count, default=10**9)
    common(t)

    f = sub.add_parser("figure", help="regenerate the data behind a figure")
    f.add_argument("figure", choices=FIGURES)
    f.add_argument("--tmax", type=_count, default=None)
    f.add_argument("--seeds", type=_int_list, default=None)
    f.add_argument("--sizes", type=_int_list, default=None, help="node counts")
    f.add_argument("--eps", type=float, default=1e-3)
    common(f)
    return root


# ------------------------------------------------------------------ helpers

def _network(opts):
    kind = opts["network"]
    if kind == "line":
        top, g = line_network(opts["n"], opts["cr"])
    elif kind == "complete":
        top, g = line_network(opts["n"], opts["n"])
    else:
        top, g, _ = random_network(opts["n"], opts["net_seed"])
    return top, g


def _sim_config(opts, top, seed):
    mac = opts["mac"]
    p = opts["p"]
    if mac == "aloha" and p is None:
        p = aloha_probability(top) if opts["network"] == "random" else 0.2
    schedule = opts.get("schedule")
    if mac == "centralized" and not schedule:
        raise ParameterError("centralized MAC needs --schedule")
    return SimConfig(
        mac=mac, T=opts["tmax"], seed=seed, C=opts["c"],
        arrival=opts.get("arrival", "fluid"), lam=opts.get("lam", 0.0),
        p=p if p is not None else 0.2, schedule=schedule,
        loop_start=opts.get("loop_start", 0), nu=opts["nu"], mu=opts["mu"],
        policy=opts.get("policy", "hold"), record=bool(opts.get("trace")),
    )


def _fmt(v):
    if v is None:
        return "NONE"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return v


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _mean_ci(values):
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan, math.nan
    m = float(v.mean())
    if v.size < 2:
        return m, m, m
    half = 1.96 * float(v.std(ddof=1)) / math.sqrt(v.size)
    return m, m - half, m + half


class Output:
    """Collects CSV files; writes them and a manifest under ``out``."""

    def __init__(self, out, command, opts):
        self.out, self.command, self.opts = out, command, opts
        self.files = {}

    def add(self, name, text):
        self.files[name] = text

    def finish(self, stdout_name=None):
        if self.out is None:
            names = [stdout_name] if stdout_name else list(self.files)
            for name in names:
                if len(names) > 1:
                    sys.stdout.write(f"# {name}\n")
                sys.stdout.write(self.files[name])
            return
        os.makedirs(self.out, exist_ok=True)
        for name, text in self.files.items():
            with open(os.path.join(self.out, name), "w", newline="") as fh:
                fh.write(text)
        opts = {k: v for k, v in self.opts.items() if k not in ("out", "config", "command")}
        manifest = {
            "command": self.command,
            "version": __version__,
            "config": opts,
            "seeds": opts.get("seeds", [opts["seed"]] if "seed" in opts else []),
            "files": sorted(self.files),
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


# -------------------------------------------------------------- commands

def cmd_bounds(opts):
    hops = opts["hops"]
    k = hops if opts["k"] is None else opts["k"]
    rates = contention_rates(k, opts["mac"], hops, opts["c"], opts["p"], opts["nu"], opts["mu"])
    ts = log_time_grid(opts["tmax"], opts["per_decade"], opts["tmin"])
    curve = bound_curve(rates, hops, ts, opts["eps"])
    buf = io.StringIO()
    curve.to_csv(buf)
    return {"bounds.csv": buf.getvalue()}


def cmd_simulate(opts):
    top, g = _network(opts)
    per_seed, traces = [], {}
    by_T = {}
    for seed in opts["seeds"]:
        tr = run(top, g, _sim_config(opts, top, seed))
        for (T, frac), dl in zip(empty_fraction(tr), tr.ck_delivered[:, 0]):
            per_seed.append([seed, T, int(dl), dl / T, frac, tr.max_backlog])
            by_T.setdefault(T, []).append(frac)
        if opts.get("trace"):
            buf = io.StringIO()
            tr.to_csv(buf, times=log_time_grid(tr.T_run, 10))
            traces[f"trace_seed{seed}.csv"] = buf.getvalue()
    summary = [[T, len(v), *_mean_ci(v)] for T, v in sorted(by_T.items())]
    files = {
        "simulate.csv": _csv_text(
            ["seed", "T", "delivered", "throughput", "nonempty_fraction", "max_backlog"],
            per_seed,
        ),
        "summary.csv": _csv_text(
            ["T", "n_seeds", "nonempty_mean", "ci_low", "ci_high"], summary
        ),
    }
    files.update(traces)
    return files


def cmd_capacity(opts):
    top, g = _network(opts)
    cfg = _sim_config(dict(opts, lam=0.0, arrival="fluid"), top, opts["seed"])
    res = capacity_search(top, g, cfg, T=opts["tmax"], backlog_cap=opts["cap"])
    cap = opts["cap"] if opts["cap"] is not None else max(1, opts["tmax"] // 100)
    row = [opts["mac"], opts["network"], opts["n"], opts["tmax"], cap, opts["seed"], res.lam]
    hist = [[i, lam, int(ok)] for i, (lam, ok) in enumerate(res.history)]
    return {
        "capacity.csv": _csv_text(["mac", "network", "n", "T", "cap", "seed", "lambda"], [row]),
        "history.csv": _csv_text(["step", "lambda", "feasible"], hist),
    }


def _threshold_rows(mac, hops, rsh, rmh, eps, tcap, nu, mu, p=None):
    rows = []
    for k in hops:
        for r in rsh:
            try:
                th = threshold_time(k, mac, r, rmh, eps, p=p, nu=nu, mu=mu, cap=tcap)
            except ParameterError:
                th = "PARAM_ERROR"
            rows.append([k, r, th])
    return rows


def cmd_threshold(opts):
    mac = opts["mac"] or "aloha"
    rows = _threshold_rows(mac, opts["hops"], opts["rsh"], opts["rmh"], opts["eps"],
                           opts["tcap"], opts["nu"], opts["mu"], opts["p"])
    return {"threshold.csv": _csv_text(["k", "r_sh", "threshold"], rows)}


def _fig_line(opts, random=False):
    sizes = opts["sizes"] or [10, 100]
    tmax = opts["tmax"] or 10**5
    seeds = opts["seeds"] or list(range(10))
    files = {}
    for mac in ("aloha", "csma"):
        rows = []
        for n in sizes:
            if random:
                top, g, _ = random_network(n, 7)
                lam = RANDOM_RATES[mac].get(n, RANDOM_RATES[mac][10] * 10 / n)
                p = aloha_probability(top)
            else:
                top, g = line_network(n, 3)
                lam, p = LINE_RATES[mac], 0.2
            by_T = {}
            for seed in seeds:
                cfg = SimConfig(mac=mac, T=tmax, seed=seed, lam=lam, p=p, record=False)
                for T, frac in empty_fraction(run(top, g, cfg)):
                    by_T.setdefault(T, []).append(frac)
            for T, v in sorted(by_T.items()):
                rows.append([n, lam, T, len(v), *_mean_ci(v)])
        files[f"{mac}.csv"] = _csv_text(
            ["n", "lambda", "T", "n_seeds", "nonempty_mean", "ci_low", "ci_high"], rows
        )
    return files


def _fig_bounds_vs_sim(opts):
    tmax = opts["tmax"] or 10**4
    seeds = opts["seeds"] or list(range(100))
    eps = opts["eps"]
    ts = log_time_grid(tmax, 10)
    files = {}
    for mac in ("aloha", "csma"):
        for k in (2, 3):
            curve = bound_curve(contention_rates(k, mac, k), k, ts, eps)
            top, g = line_network(k + 1, k)
            D = np.empty((len(seeds), len(ts)))
            for i, seed in enumerate(seeds):
                cfg = SimConfig(mac=mac, T=tmax, seed=seed, arrival="saturated",
                                p=1.0 / k, csma_stationary_start=True)
                D[i] = run(top, g, cfg).delivered[ts, 0] / ts
            rows = [
                [int(t), curve.lambda_L[j], curve.lambda_U[j], float(D[:, j].mean()),
                 float(np.quantile(D[:, j], eps)), float(np.quantile(D[:, j], 1 - eps))]
                for j, t in enumerate(ts)
            ]
            files[f"{mac}_k{k}.csv"] = _csv_text(
                ["t", "lambda_L", "lambda_U", "sim_mean", "sim_q_eps", "sim_q_1meps"], rows
            )
    return files


def _fig_threshold(opts):
    files = {}
    for mac in ("aloha", "csma"):
        rows = _threshold_rows(mac, [2, 3, 4], DEFAULT_RSH, 1.0, opts["eps"], 10**9, 0.1, 0.1)
        files[f"{mac}.csv"] = _csv_text(["k", "r_sh", "threshold"], rows)
    return files


def cmd_figure(opts):
    fig = opts["figure"]
    if fig == "line-fnT":
        return _fig_line(opts)
    if fig == "random-fnT":
        return _fig_line(opts, random=True)
    if fig == "bounds-vs-sim":
        return _fig_bounds_vs_sim(opts)
    return _fig_threshold(opts)


COMMANDS = {
    "bounds": (cmd_bounds, "bounds.csv"),
    "simulate": (cmd_simulate, "simulate.csv"),
    "capacity": (cmd_capacity, "capacity.csv"),
    "threshold": (cmd_threshold, "threshold.csv"),
    "figure": (cmd_figure, None),
}


def _resolve(parser, argv):
    args = parser.parse_args(argv)
    opts = vars(args)
    if opts.get("config"):
        try:
            with open(opts["config"]) as fh:
                data = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {opts['config']!r}: {exc}") from exc
        if isinstance(data, dict) and "command" in data and "config" in data:
            if data["command"] != opts["command"]:
                raise UsageError(
                    f"manifest is for {data['command']!r}, not {opts['command']!r}"
                )
            data = data["config"]
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(data) - set(opts) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        # explicit flags win over the config file
        explicit = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
        for key, val in data.items():
            if key not in explicit and key != "command":
                opts[key] = val
    if opts["command"] in ("bounds", "simulate", "capacity") and opts.get("mac") is None:
        raise UsageError(f"transcap {opts['command']}: error: the following arguments are required: --mac")
    macs = {"bounds": ("aloha", "csma"), "threshold": ("aloha", "csma", None)}
    if opts.get("mac") not in macs.get(opts["command"], ("aloha", "centralized", "csma", None)):
        raise UsageError(f"unsupported --mac {opts['mac']!r} for {opts['command']}")
    if opts["command"] == "figure" and opts["figure"] not in FIGURES:
        raise UsageError(f"unknown figure id {opts['figure']!r}")
    if opts["command"] == "figure" and opts["out"] is None:
        raise UsageError("figure needs --out DIR")
    if "seeds" in opts and opts["seeds"] is not None and not opts["seeds"]:
        raise UsageError("--seeds must list at least one seed")
    return opts


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        opts = _resolve(parser, argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    fn, primary = COMMANDS[opts["command"]]
    try:
        files = fn(opts)
    except (TranscapError, ValueError) as exc:
        print(f"transcap: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Output(opts["out"], opts["command"], opts)
    for name, text in files.items():
        out.add(name, text)
    out.finish(primary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
