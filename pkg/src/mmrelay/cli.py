"""``mmrelay`` command line: scenario generation, placement, simulation, replay.

Every command writes its outputs to files plus a JSON run manifest, and
prints a one-line summary. Exit codes: 0 ok, 2 usage, 3 infeasible,
4 numerical trouble, solver limit or unclosed gap, 5 input/output problems.

Seeds: ``gen`` feeds ``--seed`` straight to ``numpy.random.default_rng``;
``simulate`` derives subject ``j`` of replica ``r`` from
``SeedSequence(seed, spawn_key=(r, j))``. The placement commands use no
randomness.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .blockage import SimConfig, run_blockage_sim
from .errors import InfeasibleError, LimitExceeded, MMRelayError, NumericalError, ScenarioError, UnboundedError
from .geometry import compute_feasibility
from .rmurp import bisection_search, gbd_solve
from .robust import RobustConfig, check_placement, dump_placement, load_placement, solve_rmrp_data
from .scenario import dump_scenario, generate_random, load_scenario

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4, 5
MANIFEST_FORMAT = 1

# flags holding output locations, rewritten by ``replay``
_OUTPUT_FLAGS = {"gen": ("out",), "rmrp": ("out",), "rmurp": ("out", "trace"), "simulate": ("out_dir",)}
_INPUT_FLAGS = {"rmrp": ("scenario",), "rmurp": ("scenario",), "simulate": ("scenario", "placement")}


class InputError(MMRelayError):
    pass


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _scenario(path: str):
    return load_scenario(_read(path))


def _room(text: str) -> tuple[float, float]:
    try:
        w, h = (float(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"room must look like 10x10, got {text!r}") from None
    if not (w > 0 and h > 0 and math.isfinite(w) and math.isfinite(h)):
        raise argparse.ArgumentTypeError("room dimensions must be positive")
    return w, h


def _rho(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("rho must be in [0, 1]")
    return v


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmrelay", description="Robust relay placement for 60 GHz indoor networks.")
    ap.add_argument("--version", action="version", version=f"mmrelay {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random scenario")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--links", type=_positive(int), required=True)
    g.add_argument("--obstacles", type=_nonneg_int, default=10)
    g.add_argument("--grid", type=_positive(float), default=2.0, help="candidate site spacing d0 (m)")
    g.add_argument("--room", type=_room, default=(10.0, 10.0), help="WxH in meters")
    g.add_argument("--out", required=True)

    r = sub.add_parser("rmrp", help="fewest relays meeting the robustness budget")
    r.add_argument("scenario")
    r.add_argument("--rho", type=_rho, default=1.0)
    r.add_argument("--out", required=True)
    r.add_argument("--node-limit", type=_positive(int), default=200_000)

    u = sub.add_parser("rmurp", help="maximum-utility placement with at most m relays")
    u.add_argument("scenario")
    u.add_argument("--algo", choices=("bisection", "gbd"), default="gbd")
    u.add_argument("--tol", type=_positive(float), default=1.0, help="bisection tolerance on the demand scale")
    u.add_argument("--m", type=_positive(int), default=None, help="relay budget (default: all sites)")
    u.add_argument("--rho", type=_rho, default=1.0)
    u.add_argument("--eps-conv", type=_positive(float), default=1e-6,
                   help="GBD stopping gap relative to total demand")
    u.add_argument("--max-iter", type=_positive(int), default=None)
    u.add_argument("--cut", choices=("lagrangian", "linearized"), default="lagrangian")
    u.add_argument("--out", required=True)
    u.add_argument("--trace", default=None, help="trace CSV path (default: <out>.trace.csv)")
    u.add_argument("--node-limit", type=_positive(int), default=200_000)

    s = sub.add_parser("simulate", help="random-walk blockage simulation")
    s.add_argument("scenario")
    s.add_argument("--placement", default=None)
    s.add_argument("--subjects", type=_nonneg_int, required=True)
    s.add_argument("--steps", type=_positive(int), default=5000)
    s.add_argument("--replicas", type=_positive(int), default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--trace-events", action="store_true")
    s.add_argument("--step-seconds", type=_positive(float), default=0.5, help="seconds per step for durations")
    s.add_argument("--workers", type=_positive(int), default=1)
    s.add_argument("--capacity-aware", action="store_true",
                   help="failed-over links starve when their secondary relay is out of airtime")

    p = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    p.add_argument("manifest")
    p.add_argument("--into", default=None, help="directory for re-generated outputs (default: temporary)")
    return ap


# --------------------------------------------------------------------------
# commands; each returns (summary line, output paths, seeds)


def cmd_gen(a):
    sc = generate_random(a.seed, a.links, a.obstacles, a.grid, room=a.room)
    out = _write(Path(a.out), dump_scenario(sc))
    return (f"scenario {out}: {len(sc.links)} links, {len(sc.obstacles)} obstacles, {len(sc.sites)} sites",
            [out], {"seed": a.seed})


def _feasibility(sc):
    data = compute_feasibility(sc)
    for note in data.notes:
        print(f"mmrelay: note: {note}", file=sys.stderr)
    return data


def cmd_rmrp(a):
    data = _feasibility(_scenario(a.scenario))
    sol = solve_rmrp_data(data, RobustConfig(rho=a.rho), {"node_limit": a.node_limit})
    sol.algorithm = "branch-and-bound"
    errs = check_placement(sol, data)
    if errs:
        raise NumericalError("placement failed verification: " + "; ".join(errs))
    out = _write(Path(a.out), dump_placement(sol))
    return f"relays={sol.relay_count} rho={a.rho:g} sites={list(sol.selected)} -> {out}", [out], {}


def cmd_rmurp(a):
    data = _feasibility(_scenario(a.scenario))
    cfg = RobustConfig(rho=a.rho, max_relays=a.m if a.m is not None else len(data.sites))
    limits = {"node_limit": a.node_limit}
    if a.algo == "bisection":
        res = bisection_search(data, cfg, a.tol, max_iter=a.max_iter or 64, limits=limits)
        trace, sol = res.trace_csv(), res.solution
        lo, hi = res.bracket
        extra = f" bracket=[{lo:.9g},{hi:.9g}]"
        gap_open = False
    else:
        res = gbd_solve(data, cfg, eps_conv=a.eps_conv, max_iter=a.max_iter or 500, cut_mode=a.cut, limits=limits)
        trace, sol = res.trace_csv(), res.solution
        extra = f" iterations={len(res.trace)} gap={res.gap:.6g}"
        gap_open = not res.converged
    errs = check_placement(sol, data)
    if errs:
        raise NumericalError("placement failed verification: " + "; ".join(errs))
    out = _write(Path(a.out), dump_placement(sol))
    tr = _write(Path(a.trace or f"{a.out}.trace.csv"), trace)
    line = f"algo={a.algo} utility={sol.utility:.9g} alpha={sol.alpha:.9g} relays={sol.relay_count}{extra} -> {out}"
    if gap_open:
        raise _GapOpen(line, [out, tr])
    return line, [out, tr], {}


class _GapOpen(MMRelayError):
    def __init__(self, line, outputs):
        super().__init__(line + " (gap not closed)")
        self.outputs = outputs


def cmd_simulate(a):
    sc = _scenario(a.scenario)
    placement = None
    if a.placement is not None:
        try:
            placement = load_placement(_read(a.placement))
        except InputError:
            raise
        except MMRelayError as exc:
            raise InputError(f"{a.placement}: {exc}") from exc
        errs = check_placement(placement, compute_feasibility(sc, check_overlap=False))
        if errs:
            raise InputError(f"{a.placement} does not fit {a.scenario}: " + "; ".join(errs))
    cfg = SimConfig(a.subjects, a.steps, seed=a.seed, replicas=a.replicas)
    st = run_blockage_sim(sc, placement, cfg, workers=a.workers, events=a.trace_events,
                          capacity_aware=a.capacity_aware)
    out_dir = Path(a.out_dir)
    outs = [_write(out_dir / "stats.csv", st.to_csv(a.step_seconds))]
    if a.trace_events:
        outs.append(_write(out_dir / "events.csv", st.events_csv()))
    return (f"mean blockage fraction={st.mean_fraction():.6g} over {len(st.link_ids)} links, "
            f"{a.replicas} replicas x {a.steps} steps -> {out_dir}", outs, {"seed": a.seed})


COMMANDS = {"gen": cmd_gen, "rmrp": cmd_rmrp, "rmurp": cmd_rmurp, "simulate": cmd_simulate}


def manifest_path(command: str, a) -> Path:
    if command == "simulate":
        return Path(a.out_dir) / "manifest.json"
    return Path(f"{a.out}.manifest.json")


def _write_manifest(command, argv, a, outputs, seeds, started, elapsed):
    inputs = {}
    for flag in _INPUT_FLAGS.get(command, ()):
        val = getattr(a, flag, None)
        if val is not None:
            p = Path(val)
            inputs[str(p.resolve())] = _digest(p)
    doc = {
        "format": MANIFEST_FORMAT,
        "tool": "mmrelay",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "seeds": seeds,
        "inputs": inputs,
        "outputs": {str(p.resolve()): _digest(p) for p in outputs},
        "timing": {"started": started, "elapsed_seconds": round(elapsed, 6)},
    }
    _write(manifest_path(command, a), json.dumps(doc, indent=2) + "\n")


def _run_command(parser, argv, write_manifest=True):
    a = parser.parse_args(argv)
    started = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        line, outputs, seeds = COMMANDS[a.command](a)
    except _GapOpen as exc:
        if write_manifest:
            _write_manifest(a.command, argv, a, exc.outputs, {}, started, time.perf_counter() - t0)
        raise
    if write_manifest:
        _write_manifest(a.command, argv, a, outputs, seeds, started, time.perf_counter() - t0)
    return line, outputs


def cmd_replay(parser, a):
    """Re-run the recorded argv with outputs redirected, then compare digests."""
    try:
        doc = json.loads(_read(a.manifest))
        if doc.get("format") != MANIFEST_FORMAT or doc.get("command") not in COMMANDS:
            raise InputError(f"{a.manifest}: not an mmrelay run manifest")
        argv, cwd, recorded = list(doc["argv"]), doc["cwd"], doc["outputs"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{a.manifest}: malformed manifest ({exc})") from exc
    command = doc["command"]
    for path, digest in doc.get("inputs", {}).items():
        p = Path(path)
        if not p.exists():
            raise InputError(f"recorded input {path} is missing")
        if _digest(p) != digest:
            raise InputError(f"recorded input {path} changed since the run")
    ns = parser.parse_args(argv)
    for flag in _INPUT_FLAGS.get(command, ()):
        val = getattr(ns, flag, None)
        if val is not None:
            setattr(ns, flag, str((Path(cwd) / val).resolve()))
    into = Path(a.into) if a.into else Path(tempfile.mkdtemp(prefix="mmrelay-replay-"))
    into.mkdir(parents=True, exist_ok=True)
    mapping = {}
    if command == "rmurp" and ns.trace is None:
        ns.trace = f"{ns.out}.trace.csv"
    for flag in _OUTPUT_FLAGS[command]:
        orig = (Path(cwd) / getattr(ns, flag)).resolve()
        dest = into / f"{flag}-{orig.name}"
        mapping[flag] = (orig, dest)
        setattr(ns, flag, str(dest))
    try:
        _, outputs, _ = COMMANDS[command](ns)
    except _GapOpen as exc:
        outputs = exc.outputs

    # map regenerated files back onto recorded paths
    diffs, checked = [], 0
    for flag, (orig, dest) in mapping.items():
        if flag == "out_dir":
            pairs = [(orig / p.relative_to(dest), p) for p in outputs]
        else:
            pairs = [(orig, dest)]
        for o, d in pairs:
            want = recorded.get(str(o))
            if want is None:
                continue
            checked += 1
            if not d.exists() or _digest(d) != want:
                diffs.append(str(o))
    if checked != len(recorded):
        missing = len(recorded) - checked
        diffs.append(f"{missing} recorded output(s) not regenerated")
    if diffs:
        raise NumericalError(f"replay of {a.manifest} differs: " + ", ".join(diffs))
    return f"replay ok: {checked} output(s) byte-identical ({into})"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if ns.command == "replay":
            line = cmd_replay(parser, ns)
        else:
            line, _ = _run_command(parser, argv)
    except InfeasibleError as exc:
        print(f"mmrelay: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _GapOpen as exc:
        print(str(exc))
        return EXIT_NUMERICAL
    except (LimitExceeded, NumericalError, UnboundedError) as exc:
        print(f"mmrelay: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ScenarioError, InputError) as exc:
        print(f"mmrelay: {exc}", file=sys.stderr)
        for problem in getattr(exc, "problems", ()):
            print(f"  {problem}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"mmrelay: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MMRelayError as exc:
        print(f"mmrelay: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
