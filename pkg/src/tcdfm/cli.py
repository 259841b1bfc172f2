"""
Command-line interface.

Every subcommand writes its artifacts into ``--out`` (created if needed)
together with a ``manifest.json``. The same seed gives the same bytes as
the corresponding library calls.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import io as tio
from .analysis import gap_summary, historical_decomposition, irf_gap
from .benchmarks import BenchmarkModelSpec, hamilton_filter, hp_filter
from .forecast import EvalTable, recursive_evaluation
from .model import DataPanel, make_truth, simulate_dgp
from .sampler import default_threads, run_chain, run_restarts

__all__ = ["main", "build_parser", "parse_models"]

log = logging.getLogger("tcdfm")

DEFAULT_MODELS = "DFM-SV,DFM,UCP-single-SV,UCP-aggregate-SV,DFM-plugin-HP-SV,DFM-plugin-Hamilton-SV"
FORECAST_SWEEPS = 5000
FORECAST_BURN_IN = 2500


def parse_models(text: str) -> list:
    """``"DFM-SV,UCP-single"`` -> list of :class:`BenchmarkModelSpec`."""
    out = []
    for name in (s.strip() for s in text.split(",")):
        if not name:
            continue
        sv = name.endswith("-SV")
        kind = name[:-3] if sv else name
        out.append(BenchmarkModelSpec(kind, sv=sv))
    if not out:
        raise ValueError("no models given")
    return out


def _values(args) -> dict:
    values = tio.parse_config_text(open(args.config).read()) if args.config else {}
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    return values


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _manifest(args, started, **extra) -> dict:
    m = {
        "command": args.command,
        "version": __version__,
        "seconds": time.time() - started,
    }
    for key in ("data", "draws", "config"):
        path = getattr(args, key, None)
        if path:
            m[f"{key}_file"] = os.path.abspath(path)
            m[f"{key}_digest"] = tio.file_digest(path)
    m.update(extra)
    return m


def _write(out, name, text):
    tio.atomic_write(os.path.join(out, name), text)


def _load_panel(args) -> DataPanel:
    return tio.ingest_csv(args.data, schema=args.schema)


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    started = time.time()
    values = _values(args)
    values.setdefault("N", args.countries)
    values.setdefault("T", args.periods)
    cfg = tio.config_from_values(values)
    rng = np.random.default_rng(cfg.seed)
    truth = make_truth(cfg, rng)
    sim = simulate_dgp(cfg, truth, rng, start=args.start)
    out = _outdir(args)
    tio.write_panel(sim.panel, os.path.join(out, "panel.csv"))
    rows = [[d, float(sim.states.g[t])] for t, d in enumerate(sim.panel.dates)]
    _write(out, "true_gap.csv", tio._table(["date", "gap"], rows))
    tio.write_config(cfg, os.path.join(out, "config.cfg"))
    tio.write_manifest(
        _manifest(args, started, seed=cfg.seed, config=cfg.to_dict(), config_digest=cfg.digest(),
                  truth={"Q": truth.cycle.Q, "gamma": truth.cycle.gamma,
                         "alpha": truth.loadings.alpha, "beta": truth.loadings.beta}),
        os.path.join(out, "manifest.json"),
    )
    print(f"simulated N={cfg.N}, T={cfg.T} panel -> {out}")
    return 0


def cmd_estimate(args) -> int:
    started = time.time()
    panel = _load_panel(args)
    cfg = tio.config_from_values(_values(args), panel)
    out = _outdir(args)
    if args.restarts > 1:
        chains = run_restarts(panel, cfg, args.restarts, threads=args.threads)
    else:
        chains = [run_chain(panel, cfg, np.random.default_rng(cfg.seed))]
    runs = []
    for k, chain in enumerate(chains):
        suffix = "" if len(chains) == 1 else f"_{k}"
        tio.write_draws(chain, os.path.join(out, f"draws{suffix}.csv"))
        _write(out, f"gap{suffix}.csv", tio.gap_csv(gap_summary(chain), panel.dates))
        runs.append(chain.manifest)
    tio.write_manifest(
        _manifest(args, started, seed=cfg.seed, config=cfg.to_dict(), config_digest=cfg.digest(), chains=runs),
        os.path.join(out, "manifest.json"),
    )
    print(f"retained {len(chains[0])} draws per chain -> {out}")
    return 0


def cmd_decompose(args) -> int:
    started = time.time()
    panel = _load_panel(args)
    chain = tio.read_draws(args.draws)
    rec = historical_decomposition(chain, panel)
    out = _outdir(args)
    _write(out, "decomposition.csv", tio.decomposition_csv(rec, panel))
    tio.write_manifest(_manifest(args, started, max_additivity_error=rec.max_additivity_error()),
                       os.path.join(out, "manifest.json"))
    return 0


def cmd_irf(args) -> int:
    started = time.time()
    chain = tio.read_draws(args.draws)
    res = irf_gap(chain, args.horizon, shock=args.shock)
    countries = args.countries.split(",") if args.countries else [f"C{i + 1:02d}" for i in range(chain.draws[0].N)]
    if len(countries) != chain.draws[0].N:
        raise ValueError(f"{len(countries)} country labels for {chain.draws[0].N} countries")
    out = _outdir(args)
    _write(out, "irf.csv", tio.irf_csv(res, countries))
    tio.write_manifest(_manifest(args, started, horizon=args.horizon, shock=args.shock),
                       os.path.join(out, "manifest.json"))
    return 0


def cmd_gapfilter(args) -> int:
    started = time.time()
    panel = _load_panel(args)
    series = panel.y.mean(axis=1)
    if args.method == "hp":
        est = hp_filter(series, lam=args.lam)
    else:
        est = hamilton_filter(series, h=args.h, p=args.p)
    out = _outdir(args)
    _write(out, f"gap_{args.method}.csv", tio.gapfilter_csv(est, panel.dates))
    tio.write_manifest(_manifest(args, started, method=args.method,
                                 params={k: v for k, v in est.params.items() if k != "coef"}),
                       os.path.join(out, "manifest.json"))
    return 0


def cmd_forecast(args) -> int:
    started = time.time()
    panel = _load_panel(args)
    values = _values(args)
    values.setdefault("sweeps", FORECAST_SWEEPS)
    values.setdefault("burn_in", FORECAST_BURN_IN)
    cfg = tio.config_from_values(values, panel)
    specs = parse_models(args.models)
    table, _ = recursive_evaluation(panel, specs, cfg, n_holdout=args.origins, H=args.horizons,
                                    seed=cfg.seed, n_pred=args.draws_per_cell, threads=args.threads)
    out = _outdir(args)
    _write(out, "evaluation.csv", table.to_csv())
    tio.write_manifest(
        _manifest(args, started, seed=cfg.seed, config=cfg.to_dict(), origins=args.origins,
                  horizons=args.horizons, models=[s.name for s in specs]),
        os.path.join(out, "manifest.json"),
    )
    print(table.render())
    return 0


def cmd_report(args) -> int:
    started = time.time()
    out = _outdir(args)
    if args.evaluation:
        with open(args.evaluation) as fh:
            table = EvalTable.from_csv(fh.read())
        text = table.render(args.target) + "\n"
        _write(out, "evaluation_table.txt", text)
        sys.stdout.write(text)
    if args.draws:
        if not args.data:
            raise ValueError("--draws needs --data for the decomposition")
        panel = _load_panel(args)
        chain = tio.read_draws(args.draws)
        _write(out, "gap.csv", tio.gap_csv(gap_summary(chain), panel.dates))
        _write(out, "decomposition.csv", tio.decomposition_csv(historical_decomposition(chain, panel), panel))
        _write(out, "irf.csv", tio.irf_csv(irf_gap(chain, args.horizon), panel.countries))
    if not (args.evaluation or args.draws):
        raise ValueError("report needs --evaluation and/or --draws")
    tio.write_manifest(_manifest(args, started), os.path.join(out, "manifest.json"))
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: TCDFM_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="panel CSV")
    data.add_argument("--schema", choices=("long", "wide"), default="long")

    p = argparse.ArgumentParser(prog="tcdfm", description="Trend-cycle dynamic factor model toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a synthetic panel")
    s.add_argument("--countries", type=int, default=10)
    s.add_argument("--periods", type=int, default=87)
    s.add_argument("--start", default="1997Q2")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", parents=[common, data], help="run the Gibbs sampler")
    s.add_argument("--restarts", type=int, default=1, help="independent dispersed chains")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("decompose", parents=[common, data], help="historical inflation decomposition")
    s.add_argument("--draws", required=True)
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("irf", parents=[common], help="impulse responses to a gap shock")
    s.add_argument("--draws", required=True)
    s.add_argument("--horizon", type=int, default=20)
    s.add_argument("--shock", choices=("period_T", "unconditional"), default="period_T")
    s.add_argument("--countries", help="comma-separated labels")
    s.set_defaults(func=cmd_irf)

    s = sub.add_parser("gapfilter", parents=[common, data], help="HP or Hamilton filter of mean output")
    s.add_argument("--method", choices=("hp", "hamilton"), default="hp")
    s.add_argument("--lambda", dest="lam", type=float, default=1600.0)
    s.add_argument("--h", type=int, default=8)
    s.add_argument("--p", type=int, default=4)
    s.set_defaults(func=cmd_gapfilter)

    s = sub.add_parser("forecast", parents=[common, data], help="recursive out-of-sample evaluation")
    s.add_argument("--origins", type=int, default=40, help="hold-out length")
    s.add_argument("--horizons", type=int, default=4)
    s.add_argument("--models", default=DEFAULT_MODELS)
    s.add_argument("--draws-per-cell", type=int, default=500)
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("report", parents=[common], help="tables and plot-data CSVs")
    s.add_argument("--evaluation", help="evaluation.csv from forecast")
    s.add_argument("--target", default="EA", help="country column of the rendered table")
    s.add_argument("--draws")
    s.add_argument("--data")
    s.add_argument("--schema", choices=("long", "wide"), default="long")
    s.add_argument("--horizon", type=int, default=20)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is None:
        args.threads = default_threads()
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"tcdfm {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
