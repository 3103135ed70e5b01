"""Command-line experiment runner.

Exit codes: 0 ok, 1 I/O or parse error, 2 disc condition not met,
3 synthesis infeasible, 4 numerical failure.  Errors are reported on a
single stderr line of the form ``error[<kind>]: <reason>``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, ingest, simulate as sim
from .errors import (
    CoverageGap,
    EmptyFile,
    GraphError,
    Infeasible,
    MissingColumn,
    NonFiniteState,
    PlatoonError,
    SpanTooSmall,
    SpectrumError,
    UnparsableRow,
)
from .plant import FeedbackGains, assemble_closed_loop, vehicle_model
from .synthesis import min_coupling, synthesize, verify_synthesis
from .topology import (
    DirectedPlatoonGraph,
    build_coupling_matrix,
    check_lemma1,
    gershgorin_discs,
    load_topology,
    spectral_factorization,
)

EXIT_OK, EXIT_IO, EXIT_LEMMA, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 1, 2, 3, 4
DEFAULT_ALPHA = 1.968


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


def data_dir() -> Path:
    return Path(str(resources.files("platoon_hinf") / "data"))


def _resolve_path(name, base: Path) -> Path:
    p = Path(name)
    for cand in (p, base / p, data_dir() / p):
        if cand.is_file():
            return cand
    raise CliError("io", f"file not found: {name}", EXIT_IO)


def _load_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CliError("io", f"{path}: {exc.strerror}", EXIT_IO) from exc
    except json.JSONDecodeError as exc:
        raise CliError("parse", f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}", EXIT_IO) from exc
    if not isinstance(data, dict):
        raise CliError("parse", f"{path}: top-level value must be an object", EXIT_IO)
    return data


def _number(cfg: dict, key: str, default=None, positive: bool = True) -> float | None:
    v = cfg.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise CliError("config", f"field {key!r} must be a finite number, got {v!r}", EXIT_IO)
    if positive and v <= 0:
        raise CliError("config", f"field {key!r} must be > 0, got {v!r}", EXIT_IO)
    return float(v)


class Experiment:
    """Validated experiment configuration.

    A topology file on its own is also accepted: it is analysed with the
    shipped reference gains at unit coupling.
    """

    def __init__(self, path: Path, overrides: argparse.Namespace | None = None):
        self.path = path
        cfg = _load_json(path)
        base = path.parent
        if "edges" in cfg or "self_weights" in cfg:
            cfg = {"name": path.stem, "topology": str(path), "gains": {"file": "paper_gains.json", "c": 1.0}}
        self.raw = cfg
        self.name = str(cfg.get("name", path.stem))
        if "topology" not in cfg:
            raise CliError("config", "missing field 'topology'", EXIT_IO)
        try:
            self.graph = load_topology(_resolve_path(cfg["topology"], base))
        except GraphError as exc:
            raise CliError("parse", f"topology: {exc}", EXIT_IO) from exc

        gcfg = cfg.get("gains", {"file": "paper_gains.json", "c": 1.0})
        if not isinstance(gcfg, dict):
            raise CliError("config", "field 'gains' must be an object", EXIT_IO)
        sources = [k for k in ("k", "file", "synthesize") if k in gcfg]
        if len(sources) != 1:
            raise CliError("config", f"gains needs exactly one of k/file/synthesize, got {sources}", EXIT_IO)
        self.synthesize = bool(gcfg.get("synthesize", False))
        gain_file = _load_json(_resolve_path(gcfg["file"], base)) if "file" in gcfg else {}
        self.tau = _number(cfg, "tau", gain_file.get("tau", 0.5))
        self.gamma_d = _number(cfg, "gamma_d", gain_file.get("gamma_d", 1.0))
        self.alpha = _number(gcfg, "alpha", gain_file.get("alpha", DEFAULT_ALPHA))
        self.k = None
        self.c_spec = gcfg.get("c", 1.0)
        if not self.synthesize:
            k = gcfg.get("k", gain_file.get("k"))
            if not (isinstance(k, list) and len(k) == 3 and all(isinstance(x, (int, float)) for x in k)):
                raise CliError("config", f"gains k must be a list of 3 numbers, got {k!r}", EXIT_IO)
            self.k = [float(x) for x in k]
            if self.c_spec != "min":
                _number(gcfg, "c")

        self.horizon = _number(cfg, "horizon", 30.0)
        self.dt = _number(cfg, "dt", 1e-3)
        self.desired_gap = _number(cfg, "desired_gap", sim.DEFAULT_GAP)
        self.seed = int(cfg.get("seed", 0))
        if overrides is not None:
            if overrides.dt is not None:
                self.dt = overrides.dt
            if overrides.horizon is not None:
                self.horizon = overrides.horizon
            if overrides.seed is not None:
                self.seed = overrides.seed
            if getattr(overrides, "gamma_d", None) is not None:
                if not overrides.gamma_d > 0:
                    raise CliError("config", f"gamma_d must be > 0, got {overrides.gamma_d}", EXIT_IO)
                self.gamma_d = overrides.gamma_d
        if not (self.dt > 0 and self.horizon >= self.dt):
            raise CliError("config", f"need dt > 0 and horizon >= dt, got dt={self.dt}, horizon={self.horizon}", EXIT_IO)
        try:
            self.disturbance = sim.disturbance_from_dict(cfg.get("disturbance", {"type": "zero"}))
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError("config", f"disturbance: {exc}", EXIT_IO) from exc
        self.leader_cfg = cfg.get("leader", {"type": "constant", "v0": 20.0})
        self.base = base

    @property
    def model(self):
        return vehicle_model(self.tau)

    def lambda_min(self) -> float:
        return float(spectral_factorization(build_coupling_matrix(self.graph)).lam[0])

    def gains(self) -> FeedbackGains:
        if self.synthesize:
            raise RuntimeError("gains come from synthesis")
        c = min_coupling(self.alpha, self.lambda_min()) if self.c_spec == "min" else float(self.c_spec)
        return FeedbackGains(*self.k, c=c)

    def leader(self):
        lc = self.leader_cfg
        kind = lc.get("type", "constant")
        if kind == "constant":
            return sim.ConstantSpeed(float(lc.get("v0", 20.0)), float(lc.get("p0", 0.0)))
        if kind == "sampled":
            return ingest.read_leader_csv(_resolve_path(lc["path"], self.base))
        if kind == "synthetic":
            recs = ingest.synthetic_leader_records(
                float(lc.get("duration", self.horizon + 10.0)),
                float(lc.get("dt", 0.1)),
                float(lc.get("v_mean", 20.0)),
                float(lc.get("amplitude", 2.0)),
                float(lc.get("period", 40.0)),
                float(lc.get("noise", 0.0)),
                self.seed,
            )
            return ingest.to_leader_trajectory(
                recs, float(lc.get("dt_out", 0.1)), horizon=self.horizon,
                span=float(lc.get("span", ingest.DEFAULT_SPAN)),
                robustness_iters=int(lc.get("robustness_iters", 2)),
            )
        raise CliError("config", f"unknown leader type {kind!r}", EXIT_IO)


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path.cwd()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("io", f"{out}: {exc.strerror}", EXIT_IO) from exc
    return out


def _write_json(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config(args) -> Experiment:
    if not args.config:
        raise CliError("usage", "--config is required", EXIT_IO)
    return Experiment(Path(args.config), args)


def _resolve_gains(exp: Experiment):
    """Explicit gains, or the synthesized controller and its record."""
    if exp.synthesize:
        ctl = synthesize(exp.graph, exp.model, exp.gamma_d)
        return ctl.gains, ctl.to_dict()
    return exp.gains(), None


def cmd_analyze(args) -> int:
    exp = _config(args)
    discs = gershgorin_discs(exp.graph)
    lemma = check_lemma1(discs)
    gains = exp.gains() if not exp.synthesize else FeedbackGains(2.122, 3.425, 2.501)
    report = analysis.analyze(exp.graph, exp.model, gains)
    sys.stdout.write(report.to_text())
    if args.out:
        _write_json(report.to_dict(), _out_dir(args) / "analysis.json")
    if report.error:
        raise CliError("disc_condition", f"spectral precondition fails: {report.error}", EXIT_LEMMA)
    if not lemma:
        i, j = lemma.violation
        msg = f"disc condition fails between nodes {i} and {j}"
        if args.strict:
            raise CliError("disc_condition", msg, EXIT_LEMMA)
        print(f"note: {msg}; real distinct positive spectrum verified directly")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    exp = _config(args)
    out = _out_dir(args)
    if exp.synthesize:
        ctl = synthesize(exp.graph, exp.model, exp.gamma_d)
        record = ctl.to_dict()
        gains = ctl.gains
    else:
        gains = exp.gains()
        record = {"tau": exp.tau, "gamma_d": exp.gamma_d, "k": [gains.k_p, gains.k_v, gains.k_a],
                  "lambda_min": exp.lambda_min(), "c": gains.c, "synthesized": False}
    ver = verify_synthesis(exp.graph, exp.model, gains, exp.gamma_d)
    record["verification"] = ver.to_dict()
    _write_json(record, out / "controller.json")
    status = "pass" if ver.passed else "fail"
    g = "n/a" if ver.gamma is None else f"{ver.gamma:.6g}"
    print(f"k = [{gains.k_p:.6g}, {gains.k_v:.6g}, {gains.k_a:.6g}]  c = {gains.c:.6g}  "
          f"gamma = {g}  gamma_d = {exp.gamma_d:g}  verification {status}")
    if not ver.passed:
        raise CliError("verification", ver.reason, EXIT_NUMERIC)
    return EXIT_OK


def cmd_simulate(args) -> int:
    exp = _config(args)
    out = _out_dir(args)
    gains, ctl = _resolve_gains(exp)
    system = assemble_closed_loop(exp.graph, exp.model, gains)
    leader = exp.leader()
    if isinstance(leader, sim.Sampled):
        trace = sim.replay_leader(system, leader, exp.disturbance, horizon=exp.horizon, dt=exp.dt,
                                  desired_gap=exp.desired_gap)
    else:
        trace = sim.simulate(system, exp.disturbance, leader, horizon=exp.horizon, dt=exp.dt,
                             desired_gap=exp.desired_gap)
    absc = analysis.spectral_abscissa(system.a_c)
    decay_from = getattr(exp.disturbance, "t1", getattr(exp.disturbance, "t_b", None))
    summary = sim.summarize(trace, absc, None if decay_from is None else decay_from + 2.0)
    hurwitz = analysis.is_hurwitz(system.a_c)
    summary.update({
        "name": exp.name,
        "tau": exp.tau,
        "gamma_d": exp.gamma_d,
        "k": [gains.k_p, gains.k_v, gains.k_a],
        "c": gains.c,
        "lambda_min": exp.lambda_min(),
        "alpha": ctl["alpha"] if ctl else exp.alpha,
        "hinf_norm": analysis.hinf_norm(system).gamma if hurwitz else None,
        "disturbance": exp.disturbance.to_dict(),
    })
    sim.write_trace_csv(trace, out / "trace.csv")
    sim.write_summary_json(summary, out / "summary.json")
    l2 = summary["l2_gain"]
    print(f"{exp.name}: peak spacing error {summary['peak_spacing_error']:.6g} m, "
          f"l2 gain {'n/a' if l2 is None else f'{l2:.6g}'}, wrote {out / 'trace.csv'}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    cfg = _load_json(Path(args.config)) if args.config else {}
    columns = cfg.get("columns")
    span = args.span if args.span is not None else float(cfg.get("span", ingest.DEFAULT_SPAN))
    iters = args.robust_iters if args.robust_iters is not None else int(cfg.get("robustness_iters", 2))
    dt_out = args.dt if args.dt is not None else float(cfg.get("dt_out", 0.1))
    src = args.input or cfg.get("input")
    if src:
        records = ingest.read_trajectory_csv(src, columns)
    else:
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        records = ingest.synthetic_leader_records(float(cfg.get("duration", 120.0)), noise=float(cfg.get("noise", 0.05)),
                                                  seed=seed)
    smoothed = ingest.smooth_records(records, span, iters)
    ingest.write_trajectory_csv(out / "smoothed.csv", smoothed, smoothed=True)
    leader = ingest.to_leader_trajectory(smoothed, dt_out, horizon=args.horizon, smooth=False)
    ingest.write_leader_csv(out / "leader.csv", leader)
    print(f"{len(records)} records smoothed (span {span:g}, {iters} robustness passes); "
          f"leader grid {len(leader.time)} samples at {dt_out:g} s")
    return EXIT_OK


REPORT_COLUMNS = ("name", "tau", "gamma_d", "alpha", "lambda_min", "c", "l2_gain", "hinf_norm")


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise CliError("io", f"not a directory: {run_dir}", EXIT_IO)
    candidates = sorted({p.parent for p in run_dir.rglob("summary.json")} | {p for p in run_dir.iterdir() if p.is_dir()})
    rows, warnings = [], []
    for d in candidates:
        f = d / "summary.json"
        if not f.is_file():
            warnings.append(f"{d}: no summary.json")
            continue
        try:
            s = json.loads(f.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            warnings.append(f"{f}: unreadable ({exc})")
            continue
        missing = [k for k in REPORT_COLUMNS if s.get(k) is None]
        if missing:
            warnings.append(f"{f}: incomplete, missing {', '.join(missing)}")
            continue
        rows.append(s)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not rows:
        raise CliError("io", f"no complete runs under {run_dir}", EXIT_IO)
    header = f"{'test':<16}{'tau':>6}{'gamma_d':>9}{'alpha':>8}{'lambda_min':>12}{'c':>9}{'gamma(L2)':>11}{'gamma(Hinf)':>13}"
    lines = [header]
    for s in rows:
        lines.append(f"{s['name']:<16}{s['tau']:>6.3g}{s['gamma_d']:>9.3g}{s['alpha']:>8.4g}"
                     f"{s['lambda_min']:>12.6g}{s['c']:>9.4f}{s['l2_gain']:>11.4f}{s['hinf_norm']:>13.4f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        (_out_dir(args) / "report.txt").write_text(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="platoon-hinf", description="Distributed H-infinity platoon control experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config or topology JSON")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--horizon", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--gamma-d", type=float, help="override the performance level")

    for name, fn in (("analyze", cmd_analyze), ("synthesize", cmd_synthesize), ("simulate", cmd_simulate)):
        sp = sub.add_parser(name)
        common(sp)
        if name == "analyze":
            sp.add_argument("--strict", action="store_true", help="exit 2 whenever the disc condition fails")
        sp.set_defaults(func=fn)
    sp = sub.add_parser("ingest")
    common(sp)
    sp.add_argument("--input", help="trajectory CSV (synthetic data when omitted)")
    sp.add_argument("--span", type=float)
    sp.add_argument("--robust-iters", type=int)
    sp.set_defaults(func=cmd_ingest)
    sp = sub.add_parser("report")
    sp.add_argument("run_dir")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def _classify(exc: BaseException) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, Infeasible):
        return CliError("infeasible", f"{exc} (best margin {exc.best_margin:.3g})", EXIT_INFEASIBLE)
    if isinstance(exc, (NonFiniteState, SpectrumError, np.linalg.LinAlgError)):
        return CliError("numerical", str(exc), EXIT_NUMERIC)
    if isinstance(exc, (MissingColumn, UnparsableRow, EmptyFile, GraphError, OSError)):
        return CliError("io", str(exc), EXIT_IO)
    if isinstance(exc, (CoverageGap, SpanTooSmall, PlatoonError, ValueError, KeyError)):
        return CliError("input", str(exc), EXIT_IO)
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        err = _classify(exc)
        msg = " ".join(str(err).split())
        print(f"error[{err.kind}]: {msg}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
