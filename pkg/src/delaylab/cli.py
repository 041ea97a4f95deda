"""Command-line front end.

Exit codes: 0 success, 2 invalid arguments or config, 3 replay fault,
4 audit violation.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from . import metrics, optim, replay, schedule
from .schedule import _atomic_write

EXIT_CONFIG = 2
EXIT_REPLAY = 3
EXIT_AUDIT = 4


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def parse_seeds(text):
    """``"0-4"`` or ``"1,5,9"`` (ranges and lists may be mixed)."""
    seeds = []
    try:
        for part in filter(None, (p.strip() for p in text.split(","))):
            if "-" in part:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_config(args):
    try:
        cfg = cfgmod.load(args.config)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read config: {exc}")
    except cfgmod.ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"invalid config: {exc}")
    if getattr(args, "seeds", None):
        cfg.seeds = args.seeds
    if getattr(args, "drain_tail", False):
        cfg.drain_tail = True
    if getattr(args, "out", None):
        cfg.out = args.out
    return cfg


def _resolve(cfg, args):
    base = os.path.dirname(os.path.abspath(args.config))
    try:
        obj, oracle = cfg.build_objective()
        schedules = {
            cfgmod.schedule_label(src): cfgmod.load_schedule(src, base) for src in cfg.schedules
        }
        policies = cfg.build_policies()
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid config: {exc}")
    if getattr(args, "policy", None):
        matches = [p for p in policies if p.name == args.policy]
        if not matches:
            raise CliError(EXIT_CONFIG, f"config has no {args.policy!r} policy")
        policies = matches
    return obj, oracle, schedules, policies


def _out_dir(cfg, args):
    out = cfg.out
    if not os.path.isabs(out) and not getattr(args, "out", None):
        out = os.path.join(os.path.dirname(os.path.abspath(args.config)), out)
    os.makedirs(out, exist_ok=True)
    return out


def cmd_gen_schedule(args):
    try:
        if args.preset:
            s = schedule.preset(args.preset, args.steps, args.seed)
        else:
            mixture = json.loads(args.mixture) if args.mixture else [[1.0, 1.0]]
            wait = schedule.WaitDistribution(
                tuple(tuple(c) for c in mixture), args.lam, args.second_wait_scale
            )
            s = schedule.generate_schedule(args.workers or 1, args.steps, wait, args.seed)
    except (ValueError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, str(exc))
    stats = schedule.schedule_stats(s)
    os.makedirs(args.out, exist_ok=True)
    schedule.write_schedule(os.path.join(args.out, "schedule.jsonl"), s)
    schedule.write_histogram(os.path.join(args.out, "histogram.csv"), stats)
    _write_json(
        os.path.join(args.out, "stats.json"),
        {
            "tau_avg": stats.tau_avg,
            "tau_max": stats.tau_max,
            "variance": stats.variance,
            "percentiles": stats.percentiles,
            "T": stats.num_steps,
        },
    )
    print(f"tau_avg={stats.tau_avg:.6g} tau_max={stats.tau_max}")
    return 0


def _single_run(cfg, obj, oracle, sched, policy):
    x1 = cfg.start_point()
    try:
        if cfg.eps is not None:
            res = replay.run_to_target(sched, policy, obj, oracle, x1, cfg.eps, cfg.variant, cfg.drain_tail)
            return res.record, {"success": res.success, "first_hit_step": res.first_hit_step}
        rec = replay.replay(sched, policy, obj, oracle, x1, drain_tail=cfg.drain_tail)
        return rec, {}
    except (replay.InvalidSchedule, replay.ReplayFault) as exc:
        raise CliError(EXIT_REPLAY, f"replay fault: {exc}")


def cmd_run(args):
    cfg = _load_config(args)
    obj, oracle, schedules, policies = _resolve(cfg, args)
    label, sched = next(iter(schedules.items()))
    policy = policies[0]
    rec, extra = _single_run(cfg, obj, oracle, sched, policy)
    extra.update({"schedule": label, "policy": policy.to_json(), "seed": oracle.seed})
    summary = rec.write(_out_dir(cfg, args), "run", extra)
    print(json.dumps({k: summary[k] for k in ("T", "updates", "min_grad_norm", "hash")}))
    return 0


def cmd_sweep(args):
    cfg = _load_config(args)
    obj, oracle, schedules, policies = _resolve(cfg, args)
    if cfg.eps is None:
        raise CliError(EXIT_CONFIG, "sweep needs eps in the config")
    label, sched = next(iter(schedules.items()))
    res = metrics.sweep(cfg.seeds, sched, policies[0], obj, oracle, cfg.start_point(), cfg.eps,
                        cfg.variant, cfg.drain_tail, args.jobs)
    out = _out_dir(cfg, args)
    _atomic_write(os.path.join(out, "sweep_rows.csv"), res.rows_csv())
    _atomic_write(os.path.join(out, "sweep.json"), res.to_json())
    print(json.dumps(res.aggregate(), sort_keys=True))
    return 0


def cmd_compare(args):
    cfg = _load_config(args)
    obj, oracle, schedules, policies = _resolve(cfg, args)
    if cfg.eps is None:
        raise CliError(EXIT_CONFIG, "compare needs eps in the config")
    labelled = {}
    for i, p in enumerate(policies):
        labelled[p.name if p.name not in labelled else f"{p.name}{i}"] = p
    rows, sweeps = metrics.compare_policies(schedules, labelled, obj, oracle, cfg.seeds,
                                            cfg.start_point(), cfg.eps, cfg.variant,
                                            cfg.drain_tail, args.jobs)
    out = _out_dir(cfg, args)
    _atomic_write(os.path.join(out, "compare.csv"), metrics.comparison_csv(rows))
    _write_json(
        os.path.join(out, "compare.json"),
        {f"{s}/{p}": res.aggregate() for (s, p), res in sweeps.items()},
    )
    sys.stdout.write(metrics.comparison_csv(rows))
    return 0


def cmd_threshold(args):
    cfg = _load_config(args)
    obj, oracle, schedules, policies = _resolve(cfg, args)
    _, sched = next(iter(schedules.items()))
    try:
        dists = metrics.pilot_distances(sched, policies[0], obj, oracle, cfg.start_point())
    except (replay.InvalidSchedule, replay.ReplayFault) as exc:
        raise CliError(EXIT_REPLAY, f"replay fault: {exc}")
    rec = metrics.recommend_threshold(dists, args.percentile)
    out = {"percentile": rec.percentile, "threshold": rec.recommended_threshold,
           "samples": rec.sample_count}
    print(json.dumps(out, sort_keys=True))
    return 0


def run_audit(cfg, obj, oracle, schedules, policies, descent_pairs=5, descent_draws=10_000):
    """Checks in order; returns ``(report, first_failure_name_or_None)``."""
    checks = []
    x1 = cfg.start_point()
    for label, sched in schedules.items():
        v = schedule.validate_schedule(sched)
        checks.append({"name": f"schedule {label}", "ok": v is None,
                       "detail": "valid" if v is None else str(v)})
        if v is not None:
            return checks, v.kind
    for label, sched in schedules.items():
        for policy in policies:
            rec = replay.replay(sched, policy, obj, oracle, x1, drain_tail=cfg.drain_tail)
            again = replay.replay(sched, policy, obj, oracle, x1, drain_tail=cfg.drain_tail)
            same = rec.content_hash() == again.content_hash()
            checks.append({"name": f"determinism {label}/{policy.name}", "ok": same,
                           "detail": rec.content_hash()})
            if not same:
                return checks, "determinism"
            if policy.name == "picky":
                k, bound = replay.update_count_bound(rec)
                ok = replay.check_update_count(rec)
                checks.append({"name": f"update count {label}", "ok": ok,
                               "detail": f"k={k} bound={bound:.6g} T={rec.num_steps}"})
                if not ok:
                    return checks, "update-count lower bound"
    eps = cfg.eps if cfg.eps is not None else 0.1
    eta = optim.step_size_nonconvex(obj.beta, eps, oracle.sigma) if obj.beta > 0 else None
    if eta is not None:
        gen = np.random.default_rng(oracle.seed)
        for i in range(descent_pairs):
            x, xp = metrics.sample_descent_pair(obj, eps, gen)
            chk = metrics.descent_check(obj, x, xp, eta, oracle.sigma, descent_draws, seed=oracle.seed + i)
            checks.append({"name": f"descent pair {i}", "ok": chk.ok,
                           "detail": f"mean={chk.mean_decrease:.6g} se={chk.std_error:.3g} "
                                     f"bound={chk.bound:.6g}"})
            if not chk.ok:
                return checks, "descent lemma"
    return checks, None


def cmd_audit(args):
    cfg = _load_config(args)
    obj, oracle, schedules, policies = _resolve(cfg, args)
    try:
        checks, failed = run_audit(cfg, obj, oracle, schedules, policies)
    except replay.ReplayFault as exc:
        raise CliError(EXIT_REPLAY, f"replay fault: {exc}")
    for c in checks:
        print(f"{'PASS' if c['ok'] else 'FAIL'} {c['name']}: {c['detail']}")
    if failed:
        print(f"audit failed: {failed}", file=sys.stderr)
        return EXIT_AUDIT
    _write_json(os.path.join(_out_dir(cfg, args), "audit.json"), {"checks": checks})
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="delaylab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-schedule", help="generate a delay schedule")
    g.add_argument("--preset", choices=sorted(schedule.PRESETS))
    g.add_argument("--workers", type=int)
    g.add_argument("--steps", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lambda", dest="lam", type=float, default=schedule.POISSON_RATE)
    g.add_argument("--mixture", help='JSON list of [weight, scale], e.g. "[[0.9,1],[0.1,100]]"')
    g.add_argument("--second-wait-scale", type=float, default=schedule.SECOND_WAIT_SCALE)
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_gen_schedule)

    for name, func, hlp in (
        ("run", cmd_run, "replay one configuration"),
        ("sweep", cmd_sweep, "success statistics over seeds"),
        ("compare", cmd_compare, "compare policies across schedules"),
        ("audit", cmd_audit, "check invariants of a configuration"),
        ("threshold", cmd_threshold, "recommend a Picky radius from a pilot run"),
    ):
        c = sub.add_parser(name, help=hlp)
        c.add_argument("--config", required=True)
        c.add_argument("--out")
        c.add_argument("--seeds", type=parse_seeds)
        c.add_argument("--policy", choices=["picky", "sgd"])
        c.add_argument("--drain-tail", action="store_true")
        c.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
        if name == "threshold":
            c.add_argument("--percentile", type=float, default=0.99)
        c.set_defaults(func=func)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    if args.command == "gen-schedule" and not args.preset and not args.workers:
        print("error: gen-schedule needs --preset or --workers", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
