"""Command-line driver: JSON run configs in, CSV or JSON tables out.

Commands (columns of the emitted table):

  jump        kT, tau, jump, mean_energy
  correlator  kT, moment
  freq        alpha, beta, gamma, analytic_re, analytic_im, numeric_re, numeric_im, slope
  lg          lhs1, lhs2, rhs, violated1, violated2, margin1, margin2
  kraus-sim   g, n_trajectories, seed, moment, se, exact_finite_g
  clock-sim   g, correlator, scaled
  sweep       the swept parameter followed by the target command's columns

Every command accepts ``--config FILE`` with a full run configuration
(``weakcons schema`` prints the schema). Exit codes: 0 success, 2 invalid
input, 3 numerical contract failure. ``WEAKCONS_THREADS`` sets the worker
thread count of the Monte Carlo.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime
import hashlib
import io
import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .clock import ClockKick, sequential_clock_run
from .correlators import (
    ContractError,
    ScheduledObservable,
    TruncationError,
    jump,
    weak_moment,
)
from .leggett_garg import DEFAULT_TIMES, LGScenario, evaluate_lg
from .measurement import (
    KrausFamily,
    MeasurementConfig,
    deconvolve_moments,
    finite_g_moment,
    run_sequence,
)
from .models import ModelKind, build, top_level_population
from .operators import PROPAGATED_TOL, HERMITIAN_TOL, expectation
from .spectral import ConvergenceError, lz_freq_analytic, lz_freq_numeric

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_INVALID, EXIT_CONTRACT = 0, 2, 3
COMMANDS = ("jump", "correlator", "freq", "lg", "kraus-sim", "clock-sim", "sweep")

# observables coupled in the jump command: (q, a, b)
_JUMP_OBSERVABLES = {
    ModelKind.TWO_LEVEL: ("H", "X", "X"),
    ModelKind.OSCILLATOR: ("H", "X", "X"),
    ModelKind.PLANAR: ("Lz", "X", "Y"),
    ModelKind.DETUNED_PLANAR: ("Lz", "X", "Y"),
}


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    text = resources.files("weakcons").joinpath(f"schemas/run_config-{SCHEMA_VERSION}.json").read_text()
    return json.loads(text)


def validate(config: dict) -> dict:
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None
    if config["command"] == "sweep":
        if "sweep" not in config or "target" not in config.get("params", {}):
            raise ConfigError("sweep needs a 'sweep' block and params.target")
    return config


def canonical(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical(config).encode()).hexdigest()


# --------------------------------------------------------------------------
# pipelines; each returns a list of row dicts

def _state(config: dict, bundle):
    st = config.get("state", {"kind": "ground"})
    if st["kind"] == "ground" or st.get("kT", 0) == 0:
        return bundle.ground(), 0.0
    return bundle.thermal(st["kT"]), float(st["kT"])


def _warn_truncation(bundle, state, limit: float = 1e-12) -> None:
    pop = top_level_population(bundle, state)
    if pop > limit:
        print(f"weakcons: warning: population {pop:.2g} near the Fock cutoff; "
              "raise --truncation", file=sys.stderr)


def _schedule(items, bundle):
    return [ScheduledObservable(float(it["time"]), bundle[it["observable"]], int(it.get("power", 1)))
            for it in items]


def _run_jump(config):
    bundle = build(config["model"])
    p = config.get("params", {})
    qn, an, bn = _JUMP_OBSERVABLES[bundle.spec.kind]
    qn, an, bn = p.get("q", qn), p.get("a", an), p.get("b", bn)
    tau = float(p.get("tau", 0.0))
    state, kT = _state(config, bundle)
    # every observable here is periodic in 2 pi / omega: move b strictly after a
    period = 2 * np.pi / bundle.spec.omega
    t_b = tau % period or period
    _warn_truncation(bundle, state)
    rep = jump(bundle[qn], ScheduledObservable(0.0, bundle[an]),
               ScheduledObservable(t_b, bundle[bn]), state, bundle.hamiltonian)
    energy = expectation(bundle.hamiltonian, state)
    return [{"kT": kT, "tau": tau, "jump": rep.jump_value, "mean_energy": float(energy)}]


def _run_correlator(config):
    bundle = build(config["model"])
    sched = _schedule(config.get("params", {}).get("schedule", []), bundle)
    state, kT = _state(config, bundle)
    _warn_truncation(bundle, state)
    return [{"kT": kT, "moment": weak_moment(sched, state, bundle.hamiltonian)}]


def _run_freq(config):
    bundle = build(config["model"])
    p = config.get("params", {})
    alpha, beta = float(p["alpha"]), float(p["beta"])
    state, _ = _state(config, bundle)
    num = lz_freq_numeric(alpha, beta, bundle, state, eta=p.get("eta"))
    ana = lz_freq_analytic(alpha, beta, bundle.spec.omega)
    return [{"alpha": alpha, "beta": beta, "gamma": -(alpha + beta),
             "analytic_re": ana.real, "analytic_im": ana.imag,
             "numeric_re": num.coefficient.real, "numeric_im": num.coefficient.imag,
             "slope": num.slope}]


def _run_lg(config):
    p = config.get("params", {})
    st = config.get("state", {"kind": "ground"})
    state = None if st["kind"] == "ground" else float(st.get("kT", 0.0)) or None
    sc = LGScenario(config["model"], q_observable=p.get("q", "Lz"),
                    times=tuple(p.get("times", DEFAULT_TIMES)), state=state,
                    q_lambda=float(p.get("q_lambda", 0.0)))
    d = evaluate_lg(sc).to_dict()
    d.pop("moments")
    d.pop("tolerance")
    return [d]


def _measurement(config) -> MeasurementConfig:
    if "measurement" not in config:
        raise ConfigError(f"{config['command']} needs a 'measurement' block")
    m = config["measurement"]
    p = config.get("params", {})
    return MeasurementConfig(g=m["g"], n_trajectories=m.get("n_trajectories", 100_000),
                             seed=m.get("seed", 0), deconvolve=m.get("deconvolve", True),
                             condition_last=bool(p.get("condition_last", False)),
                             antithetic=bool(p.get("antithetic", False)))


def _run_kraus(config):
    bundle = build(config["model"])
    p = config.get("params", {})
    sched = _schedule(p.get("schedule", []), bundle)
    if not sched:
        raise ConfigError("schedule must be non-empty")
    cfg = _measurement(config)
    state, _ = _state(config, bundle)
    family = KrausFamily.superconserving(bundle[p["superconserving"]]) if p.get("superconserving") else None
    batch = run_sequence(state, sched, bundle.hamiltonian, cfg, family)
    powers = p.get("powers", [s.exponent for s in sorted(sched, key=lambda s: s.time)])
    if cfg.deconvolve:
        est = deconvolve_moments(batch, cfg, powers)
    else:
        est = batch.raw_moment(powers)
    exact = finite_g_moment(state, sched, bundle.hamiltonian, cfg.g, powers, cfg.deconvolve, family)
    return [{"g": cfg.g, "n_trajectories": batch.n_trajectories, "seed": cfg.seed,
             "moment": est.value, "se": est.se, "exact_finite_g": exact}]


def _run_clock(config):
    bundle = build(config["model"])
    p = config.get("params", {})
    g = float(config.get("measurement", {}).get("g", 0.02))
    kicks = [ClockKick(float(k["time"]), bundle[k["observable"]], g) for k in p.get("kicks", [])]
    if not kicks:
        raise ConfigError("kick list must be non-empty")
    state, _ = _state(config, bundle)
    res = sequential_clock_run(state, kicks, bundle.hamiltonian)
    return [{"g": g, "correlator": res.correlator(*range(len(kicks))), "scaled": res.scaled()}]


_PIPELINES = {
    "jump": _run_jump,
    "correlator": _run_correlator,
    "freq": _run_freq,
    "lg": _run_lg,
    "kraus-sim": _run_kraus,
    "clock-sim": _run_clock,
}


def _with_parameter(config: dict, name: str, value: float) -> dict:
    c = copy.deepcopy(config)
    if name == "kT":
        c["state"] = {"kind": "thermal", "kT": value}
    elif name == "g":
        c.setdefault("measurement", {})["g"] = value
    elif name == "epsilon":
        c["model"]["detuning_epsilon"] = value
        if c["model"]["kind"] == "planar" and value:
            c["model"]["kind"] = "detuned-planar"
    elif name == "tau":
        c.setdefault("params", {})["tau"] = value
    return c


def execute(config: dict) -> list[dict]:
    """Run a validated config and return its table rows."""
    command = config["command"]
    target = config["params"]["target"] if command == "sweep" else command
    pipeline = _PIPELINES[target]
    if "sweep" not in config:
        return pipeline(config)
    name = config["sweep"]["parameter"]
    rows = []
    for v in config["sweep"]["values"]:
        for row in pipeline(_with_parameter(config, name, float(v))):
            rows.append({name: float(v), **{k: x for k, x in row.items() if k != name}})
    return rows


# --------------------------------------------------------------------------
# output

def metadata(config: dict) -> dict:
    model = config.get("model", {})
    return {
        "artifact_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash(config),
        "seed": config.get("measurement", {}).get("seed"),
        "truncation": model.get("truncation"),
        "tolerances": {"hermitian": HERMITIAN_TOL, "propagated": PROPAGATED_TOL},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    writer = csv.writer(buf, lineterminator="\r\n")
    cols = list(rows[0])
    writer.writerow(cols)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def to_json(rows: list[dict], meta: dict) -> str:
    body = {"metadata": meta, "results": [{k: _jsonable(v) for k, v in r.items()} for r in rows]}
    return json.dumps(body, indent=2) + "\n"


def emit(rows: list[dict], config: dict, stdout=None) -> None:
    out = config.get("output", {})
    fmt = out.get("format") or ("json" if config["command"] == "lg" else "csv")
    path = out.get("path")
    meta = metadata(config)
    stdout = stdout or sys.stdout
    if fmt == "json":
        text = to_json(rows, {**meta, "config": config})
        if path:
            Path(path).write_text(text, encoding="utf-8")
        else:
            stdout.write(text)
        return
    text = to_csv(rows)
    if path:
        Path(path).write_bytes(text.encode("utf-8"))
        sidecar = Path(str(path) + ".meta.json")
        sidecar.write_text(json.dumps({**meta, "config": config}, indent=2) + "\n", encoding="utf-8")
    else:
        stdout.write(text)


# --------------------------------------------------------------------------
# argument parsing

def _sweep_values(spec: str) -> list[float]:
    """``start:stop:count`` (inclusive) or a comma-separated list."""
    if ":" in spec:
        try:
            start, stop, num = spec.split(":")
            return [float(v) for v in np.linspace(float(start), float(stop), int(num))]
        except ValueError:
            raise ConfigError(f"bad sweep {spec!r}; expected start:stop:count") from None
    return [float(v) for v in spec.split(",") if v]


def _parse_schedule(spec: str | None) -> list[dict]:
    """``X@0,H@0.5^2`` -> schedule items."""
    items = []
    for tok in (spec or "").split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            name, rest = tok.split("@")
            time, _, power = rest.partition("^")
            item = {"observable": name, "time": float(time)}
            if power:
                item["power"] = int(power)
        except ValueError:
            raise ConfigError(f"bad schedule item {tok!r}; expected NAME@TIME[^POWER]") from None
        items.append(item)
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weakcons",
        description="Weak-measurement correlators of conserved quantities.",
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration (overrides other flags)")
        p.add_argument("--model", default="two-level", choices=[k.value for k in ModelKind])
        p.add_argument("--omega", type=float, default=1.0)
        p.add_argument("--truncation", type=int, default=24)
        p.add_argument("--epsilon", type=float, default=0.0, help="detuning of the planar trap")
        p.add_argument("--kT", type=float, default=None, help="temperature; omitted means ground state")
        p.add_argument("--output", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=["csv", "json"], default=None)
        p.add_argument("--sweep", default=None, metavar="PARAM=SPEC",
                       help="sweep kT, g, epsilon or tau over start:stop:count or a list")
        return p

    p = common(sub.add_parser("jump", help="jump of the conserved quantity (columns kT, tau, jump, mean_energy)"))
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--kT-sweep", default=None, help="start:stop:count temperature sweep")

    p = common(sub.add_parser("correlator", help="weak moment of a schedule (columns kT, moment)"))
    p.add_argument("--schedule", default="", help="NAME@TIME[^POWER],...")

    p = common(sub.add_parser("freq", help="frequency-domain L_z coefficient"))
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--eta", type=float, default=None, help="single regulator instead of extrapolation")

    p = common(sub.add_parser("lg", help="Leggett-Garg-type inequalities (JSON report)"))
    p.add_argument("--times", default=None, help="t1,t2,t1',t3")
    p.add_argument("--q-lambda", type=float, default=0.0)

    for name, helptext in (("kraus-sim", "Monte Carlo of finite-strength measurements"),
                           ("clock-sim", "explicit detector model")):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--schedule", default="", help="NAME@TIME[^POWER],...")
        p.add_argument("--g", type=float, default=0.05)
        p.add_argument("--n-trajectories", type=int, default=100_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-deconvolve", action="store_true")
        p.add_argument("--superconserving", default=None, help="observable whose blocks restrict the Kraus operators")

    p = common(sub.add_parser("sweep", help="iterate one parameter of another command"))
    p.add_argument("target", choices=list(_PIPELINES))
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--schedule", default="")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=-0.5)
    p.add_argument("--g", type=float, default=0.05)
    p.add_argument("--n-trajectories", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)

    sub.add_parser("schema", help="print the run-configuration JSON schema")
    return parser


def config_from_args(args) -> dict:
    if getattr(args, "config", None):
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        return config
    kind = args.model
    if kind == "planar" and args.epsilon:
        kind = "detuned-planar"
    model = {"kind": kind, "omega": args.omega, "truncation": args.truncation,
             "detuning_epsilon": args.epsilon}
    config = {"schema_version": SCHEMA_VERSION, "command": args.command, "model": model,
              "state": {"kind": "ground"} if args.kT is None else {"kind": "thermal", "kT": args.kT},
              "params": {}, "output": {"path": args.output, "format": args.format or
                                       ("json" if args.command == "lg" else "csv")}}
    p = config["params"]
    if args.command in ("jump", "sweep"):
        p["tau"] = args.tau
    if hasattr(args, "schedule"):
        key = "kicks" if args.command == "clock-sim" else "schedule"
        p[key] = _parse_schedule(args.schedule)
    if args.command in ("freq",) or (args.command == "sweep" and args.target == "freq"):
        p["alpha"], p["beta"] = args.alpha, args.beta
        if getattr(args, "eta", None) is not None:
            p["eta"] = args.eta
    if args.command == "lg":
        if args.times:
            p["times"] = [float(v) for v in args.times.split(",")]
        p["q_lambda"] = args.q_lambda
    if hasattr(args, "g"):
        config["measurement"] = {"g": args.g, "n_trajectories": args.n_trajectories, "seed": args.seed,
                                 "deconvolve": not getattr(args, "no_deconvolve", False)}
        if getattr(args, "superconserving", None):
            p["superconserving"] = args.superconserving
    if args.command == "sweep":
        p["target"] = args.target
    sweep = args.sweep
    if getattr(args, "kT_sweep", None):
        sweep = f"kT={args.kT_sweep}"
    if sweep:
        name, _, spec = sweep.partition("=")
        config["sweep"] = {"parameter": name, "values": _sweep_values(spec)}
    elif args.command == "sweep":
        raise ConfigError("sweep needs --sweep PARAM=SPEC")
    return config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "schema":
        sys.stdout.write(json.dumps(load_schema(), indent=2) + "\n")
        return EXIT_OK
    try:
        config = validate(config_from_args(args))
        rows = execute(config)
        emit(rows, config)
    except (ContractError, ConvergenceError, TruncationError) as exc:
        print(f"weakcons: numerical contract failure: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (ConfigError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"weakcons: invalid input: {msg}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
