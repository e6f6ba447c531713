"""Command-line pipeline: collect -> train -> rollout, plus dataset tools
and the teleop server.

Every command embeds its fully resolved configuration (flags, defaults,
seeds) into the artifact it writes, so re-running from that artifact's
config reproduces it. Nothing here depends on wall-clock time.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import __version__
from ..bench import EVAL_BASE_SEED, evaluate, report_table, write_report
from ..collect import KeyboardSource, ScriptedSource, record_dataset
from ..core import make_env
from ..datastore import Dataset, read_header, validate
from ..errors import RmbError
from ..policies import PolicyConfig, load_policy, save_policy, train

POLICY_ALIASES = {"bc": "bc", "act": "act_lite", "act_lite": "act_lite",
                  "diffusion": "diffusion_lite", "diffusion_lite": "diffusion_lite"}


def _resolved(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_collect(args) -> int:
    env = make_env(args.env, randomization_radius=args.radius,
                   max_steps=args.max_steps)
    if args.source == "scripted":
        factory = ScriptedSource
    else:
        factory = lambda seed: KeyboardSource()
    config = {"command": "collect", **_resolved(args)}
    ds = record_dataset(env, args.out, args.episodes, args.seed, factory,
                        config=config)
    n_ok = len(ds.successful_indices())
    print(f"collected {len(ds)} episodes ({n_ok} successful) -> {ds.root}")
    ds.stats()
    print(f"stats written -> {ds.root / 'stats.json'}")
    return 0


def _loss_figure(trace: list[float], path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.plot(trace)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_train(args) -> int:
    kind = POLICY_ALIASES[args.policy]
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.chunk is not None:
        overrides["chunk"] = args.chunk
    if args.seed is not None:
        overrides["init_seed"] = args.seed
        overrides["data_seed"] = args.seed + 1
    if args.inputs is not None:
        overrides["obs_inputs"] = tuple(args.inputs.split(","))
    cfg = PolicyConfig(**overrides)
    ds = Dataset(args.dataset)
    print(f"training {kind} on {len(ds.successful_indices())} successful episodes")
    model = train(ds, cfg, kind)
    out = Path(args.out)
    provenance = {"command": "train", **_resolved(args)}
    save_policy(model, out, provenance=provenance)
    _loss_figure(model.loss_trace, out.with_suffix(".loss.png"))
    print(f"model -> {out} (final loss {model.loss_trace[-1]:.5f})")
    return 0


def cmd_rollout(args) -> int:
    model = load_policy(args.model)
    env_id = args.env if args.env is not None else model.env_spec.env_id
    env = make_env(env_id, spec=model.env_spec)
    report = evaluate(env, model, args.episodes, base_seed=args.seed)
    config = {"command": "rollout", **_resolved(args)}
    write_report([report], args.report, config=config)
    print(report_table([report]))
    print(f"report -> {args.report}")
    if args.min_success is not None and report.mean < args.min_success:
        print(f"FAIL: success rate {report.mean:.3f} < {args.min_success}",
              file=sys.stderr)
        return 1
    return 0


def cmd_dataset(args) -> int:
    path = Path(args.path)
    if args.action == "info":
        return _dataset_info(path)
    return _dataset_validate(path)


def _dataset_info(path: Path) -> int:
    if path.is_dir():
        ds = Dataset(path)
        spec = ds.env_spec
        metas = [ds.episode_meta(i) for i in range(len(ds))]
        print(f"dataset {path}")
        print(f"  env: {spec.env_id} ({spec.embodiment}, action_dim {spec.action_dim})")
        print(f"  episodes: {len(ds)} ({sum(m['success'] for m in metas)} successful)")
        print(f"  steps: {sum(m['T'] for m in metas)}")
        print(f"  channels: {', '.join(c.name for c in spec.observation_channels)}")
        print(f"  stats: {'yes' if (path / 'stats.json').exists() else 'no'}")
        return 0
    header = read_header(path)
    print(f"episode {path}")
    print(f"  T={header['T']} seed={header['seed']} source={header['source']} "
          f"success={header['success']}")
    for entry in header["channels"]:
        print(f"  {entry['name']}: {entry['dtype']} {entry['shape']}")
    return 0


def _dataset_validate(path: Path) -> int:
    files = sorted((path / "episodes").glob("*.rmbe")) if path.is_dir() else [path]
    if not files:
        print(f"no episode files under {path}", file=sys.stderr)
        return 1
    n_bad = 0
    for f in files:
        report = validate(f)
        if report.ok:
            print(f"OK   {f}")
        else:
            n_bad += 1
            print(f"FAIL {f}")
            for failure in report.failures:
                print(f"     {failure['check']}: channel={failure['channel']} "
                      f"{failure['detail']}")
    return 1 if n_bad else 0


def cmd_serve(args) -> int:
    from .server import serve
    print(f"serving env {args.env!r} on ws://{args.host}:{args.port}/ws")
    serve(args.port, args.env, host=args.host, data_dir=args.data_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmbench",
        description="desk-scale imitation-learning bench: collect, train, evaluate")
    parser.add_argument("--version", action="version", version=f"rmbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="record demonstration episodes")
    p.add_argument("--env", required=True)
    p.add_argument("--source", choices=("scripted", "keyboard"), default="scripted")
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=float, default=0.1,
                   help="object start randomization radius (env-units)")
    p.add_argument("--max-steps", type=int, default=300)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train a policy on a dataset")
    p.add_argument("--policy", choices=sorted(POLICY_ALIASES), required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--chunk", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--inputs", help="comma-separated observation inputs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rollout", help="evaluate a trained policy")
    p.add_argument("--model", required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=EVAL_BASE_SEED)
    p.add_argument("--report", required=True)
    p.add_argument("--min-success", type=float, default=None,
                   help="exit 1 if mean success falls below this")
    p.add_argument("--env", default=None)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("dataset", help="inspect or validate stored episodes")
    p.add_argument("action", choices=("info", "validate"))
    p.add_argument("path")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("serve", help="run the browser teleoperation service")
    p.add_argument("--port", type=int, default=8733)
    p.add_argument("--env", default="pick_place")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def cli(argv=None) -> int:
    """Parse and run; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except RmbError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())
