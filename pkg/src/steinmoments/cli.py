"""Command-line interface: ``bound``, ``simulate`` and ``verify``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
4 at least one bound violated.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import jsonschema

from . import bounds as B
from .core import ConfigError, CouplingParams, DomainError, NumericError
from .couplings import KINDS, ModelSpec
from .engine import (
    HOLDS,
    MIN_VERDICT_BATCHES,
    VIOLATED,
    Z_LIMIT,
    identity_from_batch,
    judge_status,
    moments_from_batch,
    simulate,
    tails_from_batch,
)
from .graphs import StatisticSpec
from .model_bounds import (
    MOMENT_THEOREMS,
    TAIL_THEOREMS,
    default_theorem,
    model_moment_bound,
    model_tail_bound,
    standardized_tail,
)
from .report import FORMATS, BoundReport, ReportRow, config_hash, emit_report
from .stats import batch_means

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VIOLATION = 0, 2, 3, 4

log = logging.getLogger("steinmoments")


# ---------------------------------------------------------------------------
# closed-form bound registry for the `bound` command

def _cp(**kw) -> CouplingParams:
    return CouplingParams(**kw)


def _hk(p) -> B.BoundValue:
    params = _cp(sigma=p["sigma"], a_norm=p["A"], b_norm=p["B"])
    if params.sigma <= 0.0:
        raise DomainError("h_k needs sigma > 0")
    return B.BoundValue.ok(B.h_k(params, int(p["k"])), "hk")


def _size_bias(p) -> B.BoundValue:
    ours, ab = B.size_bias_tail(p["mu"], p["c"], p["t"])
    if not ours.applicable:
        return ours
    return B.BoundValue.ok(ours.value, ours.form, arratia_baxendale=ab, **ours.extras)


# name -> (parameters with defaults (None = required), order key, t key, evaluator)
THEOREMS: Dict[str, Tuple[Dict[str, Optional[float]], Optional[str], Optional[str], Callable]] = {
    "thm1": ({"A": None, "B": None, "eps": 0.0, "T": 0.0, "k": None}, "2k", None,
             lambda p: B.thm1_moment_bound(_cp(a_norm=p["A"], b_norm=p["B"], eps=p["eps"], t_norm=p["T"]), int(p["k"]))),
    "thm2": ({"G": None, "D": None, "eps": 0.0, "eps_prime": 0.0, "r": None}, "r", None,
             lambda p: B.thm2_moment_bound(p["G"], p["D"], p["eps"], p["eps_prime"], int(p["r"]))),
    "thm3": ({"sigma": None, "A": 0.0, "B": None, "eps1": 0.0, "eps2": 0.0, "eps3": 0.0, "T2": 0.0, "k": None}, "2k", None,
             lambda p: B.thm3_moment_bound(_cp(sigma=p["sigma"], a_norm=p["A"], b_norm=p["B"], eps1=p["eps1"],
                                               eps2=p["eps2"], eps3=p["eps3"], t2_norm=p["T2"]), int(p["k"]))),
    "hk": ({"sigma": None, "A": None, "B": None, "k": None}, "2k", None, _hk),
    "thm4": ({"sigma": None, "A": None, "B": None, "eps1": 0.0, "eps2": 0.0, "eps3": 0.0, "eps4": 0.0, "k": None}, "2k", None,
             lambda p: B.thm4_normal_comparison_bound(_cp(sigma=p["sigma"], a_norm=p["A"], b_norm=p["B"], eps1=p["eps1"],
                                                          eps2=p["eps2"], eps3=p["eps3"], eps4=p["eps4"]), int(p["k"]))),
    "prop41": ({"rho": None, "n": None, "k": None}, "2k", None,
               lambda p: B.prop_independent_bound(p["rho"], int(p["n"]), int(p["k"]))),
    "locdep": ({"n": None, "d": None, "x": None, "k": None}, "2k", None,
               lambda p: B.local_dep_moment_bound(int(p["n"]), int(p["d"]), p["x"], int(p["k"]))),
    "thm42": ({"n": None, "lam": None, "c": 1.0, "r": None, "beta": 0.0, "q": None}, "q", None,
              lambda p: B.er_moment_bound(int(p["n"]), p["lam"], p["c"], int(p["r"]), p["beta"], int(p["q"]))),
    "cor-normal": ({"y": None, "E": 0.0, "h": 0.0}, None, "y",
                   lambda p: B.cor_normal_tail(p["y"], p["E"], p["h"])),
    "cor-bounded": ({"n": None, "x1": None, "x2": None, "t": None}, None, "t",
                    lambda p: B.cor_bounded_tail(int(p["n"]), p["x1"], p["x2"], p["t"])),
    "locdep-tail": ({"n": None, "d": None, "x": None, "t": None}, None, "t",
                    lambda p: B.local_dep_tail(int(p["n"]), int(p["d"]), p["x"], p["t"])),
    "size-bias": ({"mu": None, "c": None, "t": None}, None, "t", _size_bias),
    "binomial-A": ({"x": None, "ell": None}, "ell", None,
                   lambda p: B.BoundValue.ok(B.binomial_A(p["x"], int(p["ell"])), "binomial-A")),
    "nbhd": ({"lam": None, "r": None, "ell": None}, "ell", None,
             lambda p: B.BoundValue.ok(B.neighbourhood_norm_bound(p["lam"], int(p["r"]), int(p["ell"])), "nbhd")),
}

BOUND_PARAMS = sorted({name for spec in THEOREMS.values() for name in spec[0]})


# ---------------------------------------------------------------------------
# configuration

_NUM = {"type": "number"}
_NUM_OR_LIST = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}
_INT_LIST = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "g_scale": _NUM,
        "n": {"type": "integer"},
        "summand": {"type": "string"},
        "p": _NUM,
        "rate": _NUM,
        "m": {"type": "integer"},
        "lam": _NUM,
        "statistic": {"type": "object"},
        "mu_x": {"oneOf": [_NUM, {"enum": ["auto", "estimated"]}]},
        "n_pilot": {"type": "integer"},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": ["bound", "simulate", "verify"]},
        "theorem": {"enum": sorted(THEOREMS)},
        "params": {"type": "object", "additionalProperties": _NUM_OR_LIST},
        "model": MODEL_SCHEMA,
        "theorems": {"type": "array", "items": {"enum": list(MOMENT_THEOREMS) + list(TAIL_THEOREMS)}},
        "ks": _INT_LIST,
        "orders": _INT_LIST,
        "tails": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "identity_degree": {"type": "integer", "minimum": 0, "maximum": 6},
        "samples": {"type": "integer"},
        "batches": {"type": "integer"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "format": {"enum": list(FORMATS)},
        "out": {"type": "string"},
        "timing": {"type": "boolean"},
    },
}

DEFAULTS = {
    "samples": 30_000,
    "batches": MIN_VERDICT_BATCHES,
    "seed": 0,
    "format": "csv",
    "timing": False,
}


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _num_list(text: str) -> list:
    try:
        return [_number(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_statistic(fields: dict) -> dict:
    kind = fields.pop("statistic", "degree_indicator")
    aliases = {"isolated": "degree_indicator", "hdfs": "high_degree_few_small_neighbours",
               "triangle": "rooted_subgraph_count"}
    kind = aliases.get(kind, kind)
    if kind == "degree_indicator":
        return {"kind": kind, "degrees": [int(x) for x in str(fields.pop("degrees", "0")).split(",")]}
    if kind == "high_degree_few_small_neighbours":
        return {"kind": kind, "d": int(fields.pop("d", 2)), "k": int(fields.pop("k", 1))}
    if kind == "rooted_subgraph_count":
        text = str(fields.pop("pattern", "0-1,1-2,0-2"))
        return {"kind": kind, "pattern": [[int(a) for a in e.split("-")] for e in text.split(",")]}
    raise ConfigError(f"unknown statistic {kind!r}")


def parse_model_tokens(tokens: Sequence[str]) -> dict:
    """``KIND key=value ...`` into a model dictionary."""
    if not tokens:
        raise ConfigError("--model needs a kind")
    kind, rest = tokens[0], tokens[1:]
    fields = {}
    for tok in rest:
        if "=" not in tok:
            raise ConfigError(f"model fields must look like key=value, got {tok!r}")
        key, value = tok.split("=", 1)
        fields[key] = value
    model = {"kind": kind}
    if kind == "er_neighbourhood":
        model["statistic"] = _parse_statistic(fields)
    for key, value in fields.items():
        if key in ("summand", "mu_x") and not value.replace(".", "", 1).isdigit():
            model[key] = value
        else:
            try:
                model[key] = _number(value)
            except ValueError:
                raise ConfigError(f"model field {key} needs a number, got {value!r}") from None
    return model


def _validate(config: dict) -> None:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None


def resolve_config(args: argparse.Namespace) -> dict:
    """Config file, then command-line flags on top; validated."""
    config: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        _validate(config)
        if config.get("command", args.command) != args.command:
            raise ConfigError(f"config is for {config['command']!r}, not {args.command!r}")
    config = dict(config)
    config.pop("command", None)
    for key in ("seed", "samples", "batches", "format", "out"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if getattr(args, "timing", False):
        config["timing"] = True
    if args.command == "bound":
        if args.theorem is not None:
            config["theorem"] = args.theorem
        params = dict(config.get("params", {}))
        for name in BOUND_PARAMS:
            value = getattr(args, "p_" + name)
            if value is not None:
                vals = _num_list(value)
                params[name] = vals[0] if len(vals) == 1 else vals
        config["params"] = params
    else:
        if args.model:
            config["model"] = parse_model_tokens(args.model)
        for key in ("theorems",):
            value = getattr(args, key, None)
            if value:
                config[key] = [t for t in value.split(",") if t]
        for key in ("ks", "orders"):
            value = getattr(args, key, None)
            if value:
                config[key] = [int(x) for x in _num_list(value)]
        if getattr(args, "tails", None):
            config["tails"] = [float(x) for x in _num_list(args.tails)]
        if getattr(args, "identity", None) is not None:
            config["identity_degree"] = args.identity
    _validate(config)
    for key, value in DEFAULTS.items():
        config.setdefault(key, value)
    if config["samples"] <= 0:
        raise ConfigError(f"--samples must be positive, got {config['samples']}")
    return config


# ---------------------------------------------------------------------------
# commands

def _hash(config: dict) -> str:
    # where the report is written does not change what it contains
    return config_hash({k: v for k, v in config.items() if k != "out"})


def _row_from_bound(theorem: str, bound: B.BoundValue, order=None, t=None, model="") -> ReportRow:
    return ReportRow(model=model, theorem=theorem, order=order, t=t, bound=bound.value,
                     applicable=bound.applicable, verdict="" if bound.applicable else "bound_inapplicable")


def cmd_bound(config: dict) -> BoundReport:
    theorem = config.get("theorem")
    if theorem not in THEOREMS:
        raise ConfigError(f"unknown or missing theorem {theorem!r}; choose from {sorted(THEOREMS)}")
    defaults, order_key, t_key, evaluate = THEOREMS[theorem]
    supplied = config.get("params", {})
    unknown = set(supplied) - set(defaults)
    if unknown:
        raise ConfigError(f"{theorem} does not take {sorted(unknown)}")
    grid = {}
    for name, default in defaults.items():
        value = supplied.get(name, default)
        if value is None:
            raise ConfigError(f"{theorem} needs --{name}")
        grid[name] = value if isinstance(value, list) else [value]
    names = list(grid)
    report = BoundReport(_hash(config))
    for combo in itertools.product(*(grid[n] for n in names)):
        p = dict(zip(names, combo))
        start = time.perf_counter()
        bound = evaluate(p)
        elapsed = time.perf_counter() - start
        order = None
        if order_key == "2k":
            order = 2 * int(p["k"])
        elif order_key is not None:
            order = int(p[order_key])
        row = _row_from_bound(theorem, bound, order, float(p[t_key]) if t_key else None)
        if config.get("timing"):
            row = ReportRow(**{**row.__dict__, "seconds": elapsed})
        report.rows.append(row)
    return report


def _model(config: dict) -> ModelSpec:
    if "model" not in config:
        raise ConfigError("a model is required (--model KIND key=value ...)")
    data = dict(config["model"])
    data["seed"] = config["seed"]
    return ModelSpec.from_dict(data)


def _timed(rows: List[ReportRow], seconds: float, timing: bool) -> List[ReportRow]:
    if not timing:
        return rows
    return [ReportRow(**{**r.__dict__, "seconds": seconds}) for r in rows]


def _identity_rows(spec: ModelSpec, batch, degree: int) -> List[ReportRow]:
    rows = []
    if degree < 1:
        return rows
    for ir in identity_from_batch(spec, batch, degree).rows:
        status = VIOLATED if abs(ir.z_score) > Z_LIMIT else HOLDS
        rows.append(ReportRow(model=spec.model_id, theorem="identity", order=ir.degree,
                              estimate=ir.lhs - ir.rhs, se=ir.std_error, verdict=status))
    return rows


def cmd_simulate(config: dict) -> BoundReport:
    spec = _model(config)
    n_batches = config["batches"]
    start = time.perf_counter()
    batch = simulate(spec, config["samples"], n_batches)
    rows = []
    for est in moments_from_batch(spec, batch, config.get("orders", [2, 4]), n_batches):
        rows.append(ReportRow(model=spec.model_id, theorem="moment", order=est.order.value,
                              estimate=est.point, se=est.std_error))
    tails = config.get("tails", [])
    if tails:
        for te in tails_from_batch(spec, batch, tails):
            rows.append(ReportRow(model=spec.model_id, theorem="tail", t=te.t, estimate=te.p_hat, se=te.std_error))
    rows.extend(_identity_rows(spec, batch, config.get("identity_degree", 3)))
    d_means = batch_means(batch.d, n_batches)
    rows.append(ReportRow(model=spec.model_id, theorem="mean-D", estimate=float(d_means.mean()),
                          se=float(d_means.std(ddof=1) / math.sqrt(n_batches))))
    return BoundReport(_hash(config), _timed(rows, time.perf_counter() - start, config["timing"]))


def cmd_verify(config: dict) -> BoundReport:
    spec = _model(config)
    n_batches = config["batches"]
    if n_batches < MIN_VERDICT_BATCHES:
        raise ConfigError(f"verify needs at least {MIN_VERDICT_BATCHES} batches")
    theorems = config.get("theorems", [default_theorem(spec)])
    ks = config.get("ks", [1, 2, 3, 4])
    start = time.perf_counter()
    batch = simulate(spec, config["samples"], n_batches)
    estimates = {e.order.value: e for e in moments_from_batch(spec, batch, [2 * k for k in ks], n_batches)}
    rows = []
    for theorem in theorems:
        if theorem in MOMENT_THEOREMS:
            for k in ks:
                bound = model_moment_bound(spec, theorem, k)
                est = estimates[2 * k]
                rows.append(ReportRow(model=spec.model_id, theorem=theorem, order=2 * k, bound=bound.value,
                                      applicable=bound.applicable, estimate=est.point, se=est.std_error,
                                      verdict=judge_status(bound, est.point, est.std_error)))
        else:
            tails = config.get("tails", [])
            ests = tails_from_batch(spec, batch, tails, standardize=standardized_tail(theorem))
            for te in ests:
                bound = model_tail_bound(spec, theorem, te.t)
                rows.append(ReportRow(model=spec.model_id, theorem=theorem, t=te.t, bound=bound.value,
                                      applicable=bound.applicable, estimate=te.p_hat, se=te.std_error,
                                      verdict=judge_status(bound, te.p_hat, te.std_error)))
    rows.extend(_identity_rows(spec, batch, config.get("identity_degree", 3)))
    return BoundReport(_hash(config), _timed(rows, time.perf_counter() - start, config["timing"]))


COMMANDS = {"bound": cmd_bound, "simulate": cmd_simulate, "verify": cmd_verify}


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steinmoments", description="Moment and tail bounds from Stein couplings.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON configuration file; flags override its fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=FORMATS)
        p.add_argument("--timing", action="store_true", help="fill the seconds column (breaks byte-identity)")

    pb = sub.add_parser("bound", help="evaluate closed-form bounds over a parameter grid")
    common(pb)
    pb.add_argument("--theorem", help=f"one of {', '.join(sorted(THEOREMS))}")
    for name in BOUND_PARAMS:
        flag = "--" + name.replace("_", "-")
        pb.add_argument(flag, dest="p_" + name, metavar="V[,V...]")

    for name, helptext in (("simulate", "estimate moments, tails and the Stein identity"),
                           ("verify", "check bounds against simulation; exit 4 on violation")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--model", nargs="+", metavar="KIND_OR_FIELD", help="KIND followed by key=value fields")
        p.add_argument("--samples", type=int)
        p.add_argument("--batches", type=int)
        p.add_argument("--tails", help="comma-separated thresholds")
        p.add_argument("--identity", type=int, help="maximum degree of the identity check (0 to skip)")
        if name == "simulate":
            p.add_argument("--orders", help="comma-separated norm orders")
        else:
            p.add_argument("--theorems", help="comma-separated theorem ids")
            p.add_argument("--k", dest="ks", help="comma-separated k values (orders 2k)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        report = COMMANDS[args.command](config)
        data = emit_report(report, config["format"])
        if config.get("out"):
            with open(config["out"], "wb") as fh:
                fh.write(data)
        else:
            sys.stdout.buffer.write(data)
            sys.stdout.flush()
        print(f"config_hash={report.config_hash}", file=sys.stderr)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, ArithmeticError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_VIOLATION if report.violated else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
