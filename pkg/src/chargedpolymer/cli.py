"""Command line entry point: ``chargedpolymer <subcommand> ...``.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import jsonschema

from . import __version__
from . import exact_oracle as eo
from . import green_constants as gc
from . import mc_engine as mc
from . import stats_verify as sv
from .lattice_walk import WalkError, make_walk
from .report import ReportError, report

log = logging.getLogger("chargedpolymer")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- schemas
def load_schema(name: str) -> dict:
    return json.loads(resources.files("chargedpolymer").joinpath("schemas", f"{name}.schema.json").read_text())


def validate(obj, name: str) -> None:
    jsonschema.validate(obj, load_schema(name))


def default_config_path() -> str:
    return str(resources.files("chargedpolymer").joinpath("configs", "default.json"))


# --------------------------------------------------------------- manifest
@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    master_seed: int | None
    command: str
    started: str
    finished: str = ""
    outputs: dict = field(default_factory=dict)

    def add(self, path):
        with open(path, "rb") as fh:
            self.outputs[os.path.basename(path)] = hashlib.sha256(fh.read()).hexdigest()

    def to_json(self) -> dict:
        return {"schema_version": 1, "config_hash": self.config_hash,
                "tool_version": self.tool_version, "master_seed": self.master_seed,
                "command": self.command, "started": self.started, "finished": self.finished,
                "outputs": dict(sorted(self.outputs.items()))}

    def write(self, out_dir):
        self.finished = _now()
        validate(self.to_json(), "manifest")
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _hash_obj(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _write_json(path, obj, schema=None):
    if schema:
        validate(obj, schema)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


# ------------------------------------------------------------- commands
def _walk_from_args(args):
    kwargs = {}
    if args.walk == "lazy":
        kwargs["hold"] = Fraction(args.hold) if args.hold is not None else Fraction(1, 2)
    return make_walk(args.walk, args.d, **kwargs)


def _save_run(result: mc.RunResult, out_dir, manifest, dump=None):
    name = result.config.name
    p = os.path.join(out_dir, f"{name}_summary.json")
    _write_json(p, result.summary_json(), "summary")
    manifest.add(p)
    p = os.path.join(out_dir, f"{name}_reservoir.csv")
    mc.write_reservoir(result, p)
    manifest.add(p)
    if dump:
        manifest.add(mc.write_dump(result, dump))


def cmd_simulate(args) -> int:
    if not args.config:
        raise UsageError("simulate needs --config")
    data = _read_json(args.config)
    exps = data["experiments"] if "experiments" in data else [data]
    for e in exps:
        validate(e, "experiment")
    cfgs = []
    for e in exps:
        if args.seed is not None:
            e = dict(e, master_seed=sv.derive_seed(args.seed, e.get("name", "experiment")))
        cfgs.append(mc.ExperimentConfig.from_dict(e))
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(_hash_obj([c.to_dict() for c in cfgs]), __version__,
                           cfgs[0].master_seed if len(cfgs) == 1 else args.seed, "simulate", _now())
    for cfg in cfgs:
        res = mc.run(cfg, args.workers, keep_raw=bool(args.dump))
        _save_run(res, args.out, manifest, args.dump)
        print(json.dumps({"name": cfg.name, "summary": os.path.join(args.out, f"{cfg.name}_summary.json")}))
    manifest.write(args.out)
    return EXIT_OK


def cmd_exact(args) -> int:
    if args.n is None or args.m is None:
        raise UsageError("exact needs --n and --m")
    walk = _walk_from_args(args)
    K = None
    if args.K is not None:
        K = math.inf if args.K == "inf" else Fraction(args.K)
    if args.quantity in ("Htilde", "Qtilde") and K is None:
        raise UsageError(f"{args.quantity} needs --K")
    rep = eo.moment_report(walk, args.quantity, args.n, args.m, K)
    out = rep.to_json()
    validate(out, "exact")
    print(json.dumps(out))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, f"exact_{args.quantity}_n{args.n}_m{args.m}.json"), out)
    return EXIT_OK


def constants_json(walk, tol) -> dict:
    lc = gc.limit_constants(walk, tol)
    out = {"schema_version": 1, "walk": walk.to_spec(), "tol": tol}
    body = lc.to_json()
    for k, v in body.items():
        out[k] = v
    out["md_rate_at_1"] = lc.md_rate(1.0)
    out["E_int_L2"] = gc.E_INT_L2 if walk.d == 1 else None
    return json.loads(json.dumps(out, default=float))


def cmd_constants(args) -> int:
    walk = _walk_from_args(args)
    out = constants_json(walk, args.tol)
    validate(out, "constants")
    print(json.dumps(out, indent=1, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, f"constants_{walk.kind}_d{walk.d}.json"), out)
    return EXIT_OK


def cmd_verify(args) -> int:
    path = args.config or default_config_path()
    data = _read_json(path)
    validate(data, "plan")
    plan = sv.VerifyPlan.from_dict(data, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(_hash_obj(data), __version__, plan.master_seed,
                           f"verify --suite {args.suite}", _now())
    session = sv.Session(plan, args.workers,
                         on_result=lambda r: _save_run(r, args.out, manifest))
    suites = sv.SUITES if args.suite == "all" else (args.suite,)
    combined = sv.VerificationReport(args.suite)
    for s in suites:
        rep = sv.run_suite(s, session)
        p = os.path.join(args.out, f"verify_{s}.json")
        with open(p, "w") as fh:
            fh.write(rep.dumps())
        manifest.add(p)
        combined.extend(rep)
        print(rep.table(), flush=True)
    if args.suite == "all":
        p = os.path.join(args.out, "verify_all.json")
        validate(combined.to_json(), "verification")
        with open(p, "w") as fh:
            fh.write(combined.dumps())
        manifest.add(p)
    manifest.write(args.out)
    print(f"overall: {'PASS' if combined.verdict else 'FAIL'}")
    return EXIT_OK if combined.verdict else EXIT_FAIL


def cmd_report(args) -> int:
    summaries = list(args.summaries)
    if not summaries and args.config is None:
        raise UsageError("report needs summary files")
    try:
        files = report(summaries, args.out)
    except ReportError as exc:
        raise UsageError(str(exc)) from exc
    for f in files:
        print(f)
    return EXIT_OK


# ----------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chargedpolymer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, walk=False):
        sp.add_argument("--out", default="out", help="output directory")
        if walk:
            sp.add_argument("--walk", choices=("simple", "lazy"), default="simple")
            sp.add_argument("--d", type=int, default=1, help="lattice dimension")
            sp.add_argument("--hold", help="holding probability of the lazy walk (default 1/2)")

    sp = sub.add_parser("simulate", help="run Monte Carlo experiments from a JSON config")
    common(sp)
    sp.add_argument("--config", help="experiment or plan JSON")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--seed", type=int, help="override the master seed")
    sp.add_argument("--dump", help="directory for per-replicate CSV dumps")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("exact", help="exact rational moment by enumeration")
    common(sp, walk=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--quantity", choices=("H", "Q", "Htilde", "Qtilde", "A"), default="H")
    sp.add_argument("--K", help="local-time cutoff for truncated quantities (number or inf)")
    sp.set_defaults(func=cmd_exact, out=None)

    sp = sub.add_parser("constants", help="Green's function and limit constants")
    common(sp, walk=True)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.set_defaults(func=cmd_constants, out=None)

    sp = sub.add_parser("verify", help="run verification suites")
    common(sp)
    sp.add_argument("--suite", choices=("all",) + sv.SUITES, default="all")
    sp.add_argument("--config", help="plan JSON (default: the shipped plan)")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--seed", type=int, help="override the master seed")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("report", help="plot-data CSVs and PNG figures from summaries")
    common(sp)
    sp.add_argument("summaries", nargs="*", help="*_summary.json files")
    sp.add_argument("--config", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, mc.ConfigError, WalkError, jsonschema.ValidationError,
            eo.EnumerationSizeError, gc.GreenError, sv.InsufficientData, ValueError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"chargedpolymer: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
