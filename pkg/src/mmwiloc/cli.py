"""Command-line entry point: simulate, calibrate, localize, evaluate, compare.

Every subcommand writes plain data files (JSONL, JSON, CSV) into ``--out``.
Settings come from flags, optionally seeded by a ``--config`` file of
``key = value`` lines; flags given on the command line win over the file.

Exit codes: 0 when every output was written, 2 for usage errors and missing
input files, 1 for any other failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .aoa import SOLVERS, MSLConfig, default_factors, frames_to_aoa
from .beam import DEFAULT_SPREAD_BINS, angular_profile, make_grid, preprocess_session
from .calibration import CalibrationSet, EMConfig, run_em
from .errors import MMWiLocError
from .locate import PairingConfig, TrajectoryDiagnostics, build_trajectory, pair_streams
from .metrics import EvalConfig, error_cdf, session_metrics
from .solvers import SolverConfig
from .synth import DEFAULT_AMPLITUDE, PATTERNS, ScenarioConfig, gen_session, truth_dictionary

log = logging.getLogger("mmwiloc")

SESSION_FILE = "session.jsonl"
GT_FILE = "ground_truth.csv"
TRUTH_FILE = "truth_matrix.json"


class UsageError(Exception):
    """Bad invocation or missing input; exits with status 2."""


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


# -- argument groups --------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", metavar="PATH", help="key = value file; command-line flags override it")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory, created if missing")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_msl(p):
    g = p.add_argument_group("angle of arrival")
    g.add_argument("--scales", type=int, default=3, help="number of scales L")
    g.add_argument("--beta", type=float, default=0.75, help="scale weight decay")
    g.add_argument("--alpha", type=float, default=1.0, help="lambda0 multiplier")
    g.add_argument("--lambda0", type=float, default=None, help="fixed lambda0 instead of the noise-adaptive value")
    g.add_argument("--noise-window", type=int, default=16, help="frames in the noise-estimate window")
    g.add_argument("--tol", type=float, default=1e-8, help="coordinate descent tolerance")
    g.add_argument("--solver-iters", type=int, default=1000, help="coordinate descent sweep limit")
    g.add_argument("--signed", action="store_true", help="allow negative profile values (default: nonnegative)")
    g.add_argument("--omp-sparsity", type=int, default=3, help="atoms selected by omp")
    g.add_argument("--enet-ratio", type=float, default=1.0, help="enet lambda2 / lambda1")
    g.add_argument("--max-gap-ms", type=float, default=100.0, help="largest timestamp gap of a device pair")


def _add_eval(p):
    p.add_argument("--threshold", type=float, default=0.25, help="association distance in meters")
    p.add_argument("--pattern", default=None, help="pattern name recorded in the metrics")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="mmwiloc", description=__doc__.split("\n\n")[0], formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic session, ground truth and truth matrix", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--pattern", default="diamond", help=f"one of {', '.join(PATTERNS)}")
    p.add_argument("--speed", type=float, default=1.2, help="walking speed in m/s")
    p.add_argument("--dt-ms", type=int, default=60, help="frame interval in ms")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="sector noise standard deviation")
    p.add_argument("--amplitude", type=float, default=DEFAULT_AMPLITUDE, help="target profile peak height")
    p.add_argument("--dict-seed", type=int, default=None, help="truth dictionary seed (default: --seed)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="EM-refine a measurement matrix from frames with ground truth", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--session", required=True, help="session JSONL")
    p.add_argument("--ground-truth", required=True, help="ground truth CSV")
    p.add_argument("--a0", required=True, help="initial measurement matrix JSON")
    p.add_argument("--device", action="append", default=None, help="calibrate from this device only (repeatable; default all)")
    p.add_argument("--sigma0", type=float, default=1.0, help="initial noise variance")
    p.add_argument("--eps", type=float, default=1e-4, help="convergence threshold on the parameter change")
    p.add_argument("--max-iters", type=int, default=200, help="EM iteration limit")
    p.add_argument("--blend-iters", type=int, default=5, help="prior blend rounds per E-step")
    p.add_argument("--ridge", type=float, default=1e-6, help="relative ridge jitter of the normal equations")
    p.add_argument("--amplitude", type=float, default=None, help="peak height of the ground-truth profiles (default: mean per-frame energy of the frames)")
    p.add_argument("--spread-bins", type=float, default=DEFAULT_SPREAD_BINS, help="profile width in grid bins")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("localize", help="estimate a trajectory from a session", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--session", required=True, help="session JSONL")
    p.add_argument("--matrix", required=True, action="append", help="matrix JSON for every device, or DEV=PATH (repeatable)")
    p.add_argument("--solver", default="mslasso", help=f"one of {', '.join(SOLVERS)}")
    _add_msl(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="score a trajectory against ground truth", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--trajectory", required=True, help="trajectory CSV")
    p.add_argument("--ground-truth", required=True, help="ground truth CSV")
    _add_eval(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="localize and score one session with several solvers", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--session", required=True, help="session JSONL")
    p.add_argument("--matrix", required=True, action="append", help="matrix JSON for every device, or DEV=PATH (repeatable)")
    p.add_argument("--ground-truth", required=True, help="ground truth CSV")
    p.add_argument("--solvers", default=",".join(SOLVERS), help="comma-separated solver names")
    _add_msl(p)
    _add_eval(p)
    p.set_defaults(func=cmd_compare)
    return parser


# -- config files -----------------------------------------------------------

def read_config(path) -> dict:
    """``key = value`` pairs; section headers are optional and ignored."""
    text = _existing(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[mmwiloc]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    out = {}
    for section in cp.sections():
        for k, v in cp.items(section):
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _apply_config(sub: argparse.ArgumentParser, cfg: dict) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "func")}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for k, raw in cfg.items():
        a = actions[k]
        if isinstance(a, argparse._StoreTrueAction):
            if raw.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise UsageError(f"config key {k}: expected a boolean, got {raw!r}")
            defaults[k] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(a, argparse._AppendAction):
            defaults[k] = [s.strip() for s in raw.split(",") if s.strip()]
        else:
            try:
                defaults[k] = a.type(raw) if a.type else raw
            except ValueError:
                raise UsageError(f"config key {k}: bad value {raw!r}") from None
    sub.set_defaults(**defaults)
    # values from the file satisfy required flags
    for k in defaults:
        actions[k].required = False


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    if known.config and argv and argv[0] in choices:
        # load the file before the real parse so it can satisfy required flags
        _apply_config(choices[argv[0]], read_config(known.config))
    return parser.parse_args(argv)


# -- shared pipeline pieces -------------------------------------------------

def msl_config(args) -> MSLConfig:
    return MSLConfig(
        L=args.scales,
        beta=args.beta,
        alpha=args.alpha,
        lambda0_override=args.lambda0,
        downsample_factors=default_factors(args.scales),
        solver=SolverConfig(tol=args.tol, max_iters=args.solver_iters, nonneg=not args.signed),
        noise_window=args.noise_window,
        omp_sparsity=args.omp_sparsity,
        enet_ratio=args.enet_ratio,
    )


def load_matrices(specs, device_ids) -> dict:
    shared, per_dev = None, {}
    for spec in specs:
        dev, sep, path = spec.partition("=")
        if sep and dev in device_ids:
            per_dev[dev] = dataio.load_matrix(_existing(path))
        else:
            shared = dataio.load_matrix(_existing(spec))
    out = {}
    for dev in device_ids:
        if dev in per_dev:
            out[dev] = per_dev[dev]
        elif shared is not None:
            out[dev] = shared
        else:
            raise UsageError(f"no matrix given for device {dev!r}")
    return out


def localize_session(session, matrices, cfg: MSLConfig, method: str, pairing: PairingConfig):
    """Full pipeline on a loaded session; returns ``(streams, fixes, diagnostics)``."""
    active = [d for d in session.device_ids if session.frames.get(d)]
    if not active:
        return {}, [], TrajectoryDiagnostics()
    if len(session.device_ids) != 2:
        raise MMWiLocError(f"pairing needs exactly two devices, session has {session.device_ids}")
    missing = [d for d in session.device_ids if d not in session.device_poses]
    if missing:
        raise MMWiLocError(f"no pose for device(s) {missing}")
    streams = frames_to_aoa(preprocess_session(session), matrices, cfg, method)
    d0, d1 = session.device_ids
    diag = TrajectoryDiagnostics()
    pairs = pair_streams(streams.get(d0, []), streams.get(d1, []), pairing)
    fixes = build_trajectory(pairs, session.device_poses, pairing, diag)
    return streams, fixes, diag


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands ------------------------------------------------------------

def cmd_simulate(args) -> None:
    if args.pattern not in PATTERNS:
        raise UsageError(f"unknown pattern {args.pattern!r}; choose from {', '.join(PATTERNS)}")
    dict_seed = args.seed if args.dict_seed is None else args.dict_seed
    truth = truth_dictionary(make_grid(), seed=dict_seed)
    cfg = ScenarioConfig(
        pattern=args.pattern, speed_mps=args.speed, dt_ms=args.dt_ms, noise_sigma=args.noise_sigma,
        amplitude=args.amplitude, seed=args.seed, truth_matrix=truth,
    )
    session, traj = gen_session(cfg)
    out = _out_dir(args)
    dataio.save_session(session, out / SESSION_FILE, epoch_note=f"synthetic {args.pattern}, seed {args.seed}")
    dataio.save_ground_truth(traj, out / GT_FILE)
    dataio.save_matrix(truth, out / TRUTH_FILE)
    log.info("wrote %d frames of pattern %s to %s", session.n_frames(), args.pattern, out)


def calibration_frames(session, gt, grid, devices, spread_deg, amplitude):
    """Stack raw frames and ground-truth profiles of the chosen devices.

    ``amplitude=None`` scales the profiles by :func:`frame_energy` of the frames.
    """
    Ys, targets, poses = [], [], []
    for dev in devices:
        if dev not in session.device_poses:
            raise MMWiLocError(f"no pose for device {dev!r}")
        pose = session.device_poses[dev]
        offset = session.clock_offsets_ms.get(dev, 0)
        for f in session.frames.get(dev, ()):
            targets.append(gt.position_at(f.t_ms + offset))
            poses.append(pose)
            Ys.append(f.snr)
    if not Ys:
        raise MMWiLocError("no calibration frames")
    Y = np.vstack(Ys)
    if amplitude is None:
        amplitude = frame_energy(Y)
    X = np.vstack([angular_profile(t, p, grid, spread_deg, amplitude) for t, p in zip(targets, poses)])
    return Y, X


def frame_energy(Y) -> float:
    """Mean over frames of the mean squared sector value."""
    return float(np.mean(np.mean(np.square(Y), axis=1)))


def cmd_calibrate(args) -> None:
    session = dataio.load_session(_existing(args.session))
    gt = dataio.load_ground_truth(_existing(args.ground_truth))
    A0 = dataio.load_matrix(_existing(args.a0))
    if A0.n_sectors != session.n_sectors:
        raise MMWiLocError(f"A0 has {A0.n_sectors} sectors, session has {session.n_sectors}")
    devices = args.device or session.device_ids
    unknown = sorted(set(devices) - set(session.device_ids))
    if unknown:
        raise UsageError(f"unknown device(s) {unknown}")
    Y, X = calibration_frames(session, gt, A0.grid, devices, args.spread_bins * A0.grid.bin_width, args.amplitude)
    cfg = EMConfig(sigma0=args.sigma0, eps=args.eps, max_iters=args.max_iters, blend_iters=args.blend_iters, ridge=args.ridge)
    state = run_em(CalibrationSet(Y, X), A0, cfg)
    out = _out_dir(args)
    dataio.save_matrix(state.measurement_matrix(A0.grid), out / "matrix.json")
    dataio.save_diagnostics(state.delta_history, state.loglik_history, out / "diagnostics.csv")
    log.info("EM stopped after %d iterations (converged=%s)", state.n_iter, state.converged)


def cmd_localize(args) -> None:
    if args.solver not in SOLVERS:
        raise UsageError(f"unknown solver {args.solver!r}; choose from {', '.join(SOLVERS)}")
    session = dataio.load_session(_existing(args.session))
    matrices = load_matrices(args.matrix, session.device_ids)
    streams, fixes, diag = localize_session(session, matrices, msl_config(args), args.solver, PairingConfig(args.max_gap_ms))
    out = _out_dir(args)
    dataio.save_trajectory(fixes, out / "trajectory.csv")
    dataio.save_aoa(streams, out / "aoa.csv")
    log.info("%d fixes from %d pairs (%d dropped)", len(fixes), diag.n_pairs, diag.dropped)


def cmd_evaluate(args) -> None:
    fixes = dataio.load_trajectory(_existing(args.trajectory))
    gt = dataio.load_ground_truth(_existing(args.ground_truth))
    m = session_metrics(fixes, gt, EvalConfig(args.threshold))
    out = _out_dir(args)
    dataio.save_json(m.to_dict(args.pattern), out / "metrics.json")
    dataio.save_cdf(error_cdf(m.per_timestamp_errors), out / "cdf.csv")


def parse_solvers(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SOLVERS]
    if bad or not names:
        raise UsageError(f"unknown solver(s) {bad or text!r}; choose from {', '.join(SOLVERS)}")
    return list(dict.fromkeys(names))


def cmd_compare(args) -> None:
    solvers = parse_solvers(args.solvers)
    session = dataio.load_session(_existing(args.session))
    gt = dataio.load_ground_truth(_existing(args.ground_truth))
    matrices = load_matrices(args.matrix, session.device_ids)
    cfg = msl_config(args)
    pairing = PairingConfig(args.max_gap_ms)
    rows = []
    for name in solvers:
        _, fixes, _ = localize_session(session, matrices, cfg, name, pairing)
        row = session_metrics(fixes, gt, EvalConfig(args.threshold)).to_dict(args.pattern)
        row["solver"] = name
        rows.append(row)
        log.info("%s: mean %.3f m, rate %.3f", name, row["mean"], row["association_rate"])
    dataio.save_json({"solvers": rows}, _out_dir(args) / "comparison.json")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"mmwiloc: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"mmwiloc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (MMWiLocError, OSError) as exc:
        print(f"mmwiloc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0
