"""Command-line front end: ``rlbridge simulate | posterior | verify``.

Settings come from flags, from a JSON file given with ``--config``, or
both; flags win.  Exit codes: 0 success, 2 bad input or configuration,
3 a mathematical precondition fails, 4 a verification check fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bayes, checks
from . import covariance as cm
from . import length_law as ll
from .errors import (BridgeError, DomainError, InconsistentObservationError, NumericalError,
                     PreconditionError)
from .random_bridge import BridgePath, simulate

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_VERIFY = 0, 2, 3, 4
QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


def fmt(v: float) -> str:
    """Shortest text that reads back to the same double (at most 17 digits)."""
    return repr(float(v))


# ------------------------------------------------------------------- parsing


def parse_grid(value) -> np.ndarray:
    if isinstance(value, dict):
        start, end, step = (float(value[k]) for k in ("start", "end", "step"))
    else:
        try:
            start, end, step = (float(v) for v in str(value).split(":"))
        except ValueError:
            raise DomainError(f"grid must look like start:end:step, got {value!r}") from None
    if not (start >= 0 and step > 0 and start < end):
        raise DomainError(f"grid needs start >= 0, step > 0 and start < end, got {start}:{end}:{step}")
    n = int(math.floor((end - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def parse_model(cfg: dict) -> cm.CovarianceModel:
    value = cfg.get("model", "brownian")
    if isinstance(value, dict):
        return cm.from_config(value)
    params = {}
    if value == "tabulated":
        if not cfg.get("model_file"):
            raise DomainError("--model tabulated needs --model-file")
        return cm.load_table(cfg["model_file"])
    if cfg.get("sigma") is not None:
        params["sigma"] = float(cfg["sigma"])
    if cfg.get("theta") is not None:
        params["theta"] = float(cfg["theta"])
    return cm.from_config({"kind": value, **params})


def parse_law(value) -> ll.LengthLaw:
    if value is None:
        raise DomainError("a length law is required (--tau)")
    return ll.from_config(value) if isinstance(value, dict) else ll.parse_spec(str(value))


def parse_observations(cfg: dict) -> list[bayes.Observation]:
    rows = []
    if cfg.get("obs_file"):
        with open(cfg["obs_file"], newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"t", "value"} <= set(reader.fieldnames):
                raise DomainError("observation CSV needs a header with columns t,value")
            rows += [(float(r["t"]), float(r["value"])) for r in reader]
    for item in cfg.get("obs") or []:
        if isinstance(item, str):
            t, _, x = item.partition(",")
            rows.append((float(t), float(x)))
        else:
            rows.append((float(item[0]), float(item[1])))
    if not rows:
        raise DomainError("no observations given (--obs t,x or --obs-file)")
    return [bayes.Observation(t, x) for t, x in rows]


# ------------------------------------------------------------------ path CSV


def write_paths(batch, fh) -> None:
    fh.write("path_id,t,value,tau\n")
    t_txt = [fmt(t) for t in batch.grid]
    for i in range(len(batch)):
        pid = str(batch.first_index + i)
        tau = fmt(batch.tau[i])
        fh.write("".join(f"{pid},{t},{fmt(v)},{tau}\n" for t, v in zip(t_txt, batch.values[i])))


def read_paths(path, seed: int = 0) -> list[BridgePath]:
    """Read a path CSV back into :class:`BridgePath` objects."""
    groups: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["path_id", "t", "value", "tau"]:
            raise DomainError(f"unexpected path CSV header {reader.fieldnames}")
        for row in reader:
            groups.setdefault(int(row["path_id"]), []).append(
                (float(row["t"]), float(row["value"]), float(row["tau"])))
    out = []
    for pid, rows in groups.items():
        arr = np.array(rows)
        out.append(BridgePath(arr[:, 0], arr[:, 1], float(arr[0, 2]), (seed, pid)))
    return out


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: dict) -> int:
    model, law = parse_model(cfg), parse_law(cfg.get("tau"))
    grid = parse_grid(cfg.get("grid", "0:2:0.01"))
    n_paths = int(cfg.get("paths", 100))
    if n_paths < 1:
        raise DomainError("--paths must be >= 1")
    batch = simulate(model, law, grid, n_paths, int(cfg.get("seed", 0)))
    _emit(cfg.get("out"), lambda fh: write_paths(batch, fh))
    return EXIT_OK


def posterior_summary(model, law, observations, survival=(), predict_at=None) -> dict:
    post = bayes.posterior_multi(model, law, observations)
    out = {
        "branch": post.branch,
        "window": [post.window[0], post.window[1] if math.isfinite(post.window[1]) else "inf"],
        "observations": [[o.t, o.x] for o in observations],
        "mean": post.mean(),
        "quantiles": {str(q): post.quantile(q) for q in QUANTILE_LEVELS},
        "survival": {fmt(s): post.survival(float(s)) for s in survival},
    }
    if post.index is not None:
        out["k"] = post.index
    if law.atoms:
        out["atom_masses"] = {fmt(r): m for r, m in post.atom_masses().items()}
    if predict_at is not None:
        pred = bayes.predict_from_posterior(model, post, observations[-1], float(predict_at))
        out["prediction"] = {"u": float(predict_at), "zero_mass": pred.zero_mass, "mean": pred.mean(),
                             "second_moment": pred.expect(lambda y: y * y)}
    return out


def cmd_posterior(cfg: dict) -> int:
    model, law = parse_model(cfg), parse_law(cfg.get("tau"))
    obs = parse_observations(cfg)
    survival = cfg.get("survival") or []
    if isinstance(survival, str):
        survival = [float(s) for s in survival.split(",") if s]
    summary = posterior_summary(model, law, obs, survival, cfg.get("predict"))
    _emit(cfg.get("out"), lambda fh: fh.write(_dumps(summary)))
    return EXIT_OK


def cmd_verify(cfg: dict) -> int:
    model = parse_model(cfg)
    law = parse_law(cfg["tau"]) if cfg.get("tau") else checks.ATOMS_12
    names = cfg.get("check") or None
    if isinstance(names, str):
        names = [n for n in names.split(",") if n]
    try:
        reports = checks.run(names, model, law, cfg.get("paths"), int(cfg.get("seed", 0)))
    except KeyError as exc:
        raise DomainError(str(exc.args[0])) from None
    _emit(cfg.get("out"), lambda fh: fh.write(_dumps(reports)))
    return EXIT_OK if all(r["pass"] for r in reports) else EXIT_VERIFY


# ------------------------------------------------------------------ plumbing


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _emit(path, write) -> None:
    if path in (None, "-"):
        write(sys.stdout)
        return
    buf = io.StringIO()
    write(buf)
    try:
        Path(path).write_text(buf.getvalue())
    except OSError as exc:
        raise DomainError(f"cannot write {path}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with settings; flags override it")
    common.add_argument("--model", help="brownian | scaled-brownian | ou-from-zero | tabulated")
    common.add_argument("--sigma", type=float)
    common.add_argument("--theta", type=float)
    common.add_argument("--model-file", help="CSV with columns t,rho,q for --model tabulated")
    common.add_argument("--tau", help="length law: atoms:1=0.5,2=0.5 | exp:RATE | uniform:A,B | JSON")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file (default stdout)")

    parser = argparse.ArgumentParser(prog="rlbridge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write simulated paths as CSV")
    p.add_argument("--grid", help="start:end:step")
    p.add_argument("--paths", type=int)

    p = sub.add_parser("posterior", parents=[common], help="posterior of the length as JSON")
    p.add_argument("--obs", action="append", metavar="T,X", help="an observation; repeatable")
    p.add_argument("--obs-file", help="CSV with columns t,value")
    p.add_argument("--survival", help="comma-separated s for P(tau > s)")
    p.add_argument("--predict", type=float, metavar="U", help="also summarise the law of the value at U")

    p = sub.add_parser("verify", parents=[common], help="run verification checks")
    p.add_argument("--check", action="append", help=f"check name; repeatable ({', '.join(checks.REGISTRY)})")
    p.add_argument("--paths", type=int, help="Monte Carlo size for every sampling check")
    return parser


def load_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DomainError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise DomainError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for key, val in vars(args).items():
        if key not in ("command", "config") and val is not None:
            cfg[key] = val
    return cfg


COMMANDS = {"simulate": cmd_simulate, "posterior": cmd_posterior, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](load_config(args))
    except (PreconditionError, InconsistentObservationError, NumericalError) as exc:
        print(f"rlbridge: precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (DomainError, ValueError, KeyError, OSError) as exc:
        print(f"rlbridge: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BridgeError as exc:
        print(f"rlbridge: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
