"""Command-line entry point: collect, train, eval, replay, serve.

Configuration precedence: built-in defaults < config file (TOML, one section
per subcommand, passed via --config) < command-line flags.  The fully
resolved configuration is echoed into every output directory as
run_config.json.  Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

import click
import numpy as np

CAM_ALIASES = {"up": "wrist_up", "down": "wrist_down",
               "wrist_up": "wrist_up", "wrist_down": "wrist_down"}


def _parse_states(_ctx, _param, value: str) -> list[int]:
    try:
        states: list[int] = []
        for part in value.split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-")
                states.extend(range(int(lo), int(hi) + 1))
            else:
                states.append(int(part))
    except ValueError as exc:
        raise click.BadParameter(f"cannot parse states {value!r}") from exc
    bad = [s for s in states if not 0 <= s <= 5]
    if bad or not states:
        raise click.BadParameter(f"states must be within 0..5, got {value!r}")
    return states


def _parse_cams(_ctx, _param, value: str) -> tuple[str, ...]:
    try:
        return tuple(CAM_ALIASES[c.strip()] for c in value.split(",") if c.strip())
    except KeyError as exc:
        raise click.BadParameter(f"unknown camera {exc.args[0]!r}") from exc


def _echo_config(out_dir: str, payload: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_config.json"), "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    click.echo(json.dumps(payload, sort_keys=True))


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="TOML config file; flags override it.")
@click.pass_context
def main(ctx, config_path):
    """Simulated clustered strawberry picking pipeline."""
    if config_path:
        with open(config_path, "rb") as fh:
            ctx.default_map = tomllib.load(fh)


@main.command()
@click.option("--episodes", type=int, required=True)
@click.option("--states", callback=_parse_states, default="1,2,3,4,5",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--source", type=click.Choice(["expert"]), default="expert",
              show_default=True)
def collect(episodes, states, seed, out, source):
    """Collect scripted expert demonstrations."""
    from strawpick.expert import collect_demos
    try:
        summary = collect_demos(episodes, states, seed, out)
    except Exception as exc:
        raise click.ClickException(str(exc))
    _echo_config(out, {"command": "collect", "episodes": episodes,
                       "states": states, "seed": seed, "out": out,
                       "source": source})
    click.echo(json.dumps({k: v for k, v in summary.items()
                           if k != "episode_ids"}, sort_keys=True))


@main.command()
@click.option("--variant", type=click.Choice(["act", "epact-l", "epact-ee"]),
              default="epact-ee", show_default=True)
@click.option("--cams", callback=_parse_cams, default="up,down",
              show_default=True)
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--beta", type=float, default=10.0, show_default=True)
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--chunk", type=int, default=50, show_default=True)
@click.option("--steps", type=int, default=20000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--width", type=int, default=128, show_default=True)
@click.option("--image-size", type=int, default=96, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--lr", type=float, default=1e-4, show_default=True)
@click.option("--n-val", type=int, default=6, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def train(variant, cams, data, beta, gamma, chunk, steps, seed, width,
          image_size, batch_size, lr, n_val, out_dir):
    """Train a policy checkpoint on a demonstration dataset."""
    from strawpick.policy import PolicyConfig, NonFiniteLoss
    from strawpick.policy import train as train_fn
    cfg = PolicyConfig(variant=variant.replace("-", "_"), cameras=cams,
                       chunk_size=chunk, width=width, image_size=image_size,
                       beta=beta, gamma=gamma, lr=lr, train_steps=steps,
                       batch_size=batch_size, seed=seed)
    _echo_config(out_dir, {"command": "train", "data": data,
                           "n_val": n_val, **cfg.to_dict()})
    try:
        train_fn(cfg, data, out_dir, n_val=n_val, progress=True)
    except NonFiniteLoss as exc:
        raise click.ClickException(str(exc))
    except Exception as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    click.echo(f"checkpoint written to {out_dir}")


@main.command("eval")
@click.option("--ckpt", "ckpts", multiple=True, required=True,
              help="NAME=PATH or PATH; repeatable.")
@click.option("--states", callback=_parse_states, default="0-5",
              show_default=True)
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--no-ensemble", is_flag=True, default=False)
@click.option("--report", "report_dir", type=click.Path(), required=True)
def eval_cmd(ckpts, states, trials, seed, no_ensemble, report_dir):
    """Run the policy x state success matrix and write reports."""
    from strawpick.evalharness import render_report, run_matrix
    checkpoints = {}
    for spec in ckpts:
        name, _, path = spec.rpartition("=")
        if not name:
            name = os.path.basename(os.path.normpath(path))
        if not os.path.exists(path):
            raise click.ClickException(f"checkpoint not found: {path}")
        checkpoints[name] = path
    _echo_config(report_dir, {"command": "eval",
                              "checkpoints": {k: str(v) for k, v in
                                              checkpoints.items()},
                              "states": states, "trials": trials,
                              "seed": seed, "ensemble": not no_ensemble})
    try:
        table = run_matrix(checkpoints, states, trials, seed,
                           out_dir=report_dir, use_ensemble=not no_ensemble)
        paths = render_report(table, report_dir)
    except Exception as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    for policy in table.rates:
        click.echo(f"{policy}: avg {table.average(policy) * 100:.1f}%")
    click.echo(json.dumps(paths, sort_keys=True))


@main.command()
@click.option("--episode", "episode_id", required=True)
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--overlay/--no-overlay", default=True, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def replay(episode_id, data, ckpt, overlay, out_dir):
    """Re-render an episode with predicted-trajectory overlays."""
    import cv2
    from strawpick import dataset as ds
    from strawpick.kinematics import JointState, ScaraParams, forward_kinematics
    from strawpick.policy import load_checkpoint
    from strawpick.runtime import overlay_trajectory, predict_chunk_np
    from strawpick.sim.camera import default_cameras
    from strawpick.sim.env import Observation

    try:
        record = ds.read_episode(data, episode_id)
        checkpoint = load_checkpoint(ckpt)
    except Exception as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    params = ScaraParams()
    cams = default_cameras(checkpoint.config.image_size)
    os.makedirs(out_dir, exist_ok=True)
    _echo_config(out_dir, {"command": "replay", "episode": episode_id,
                           "data": data, "ckpt": ckpt, "overlay": overlay})
    for t in range(record.length):
        obs = Observation(
            images={c: record.images[c][t].astype(np.float32) / 255.0
                    for c in checkpoint.config.cameras},
            q=JointState.from_array(record.q[t]),
            grip=float(record.grip[t, 0]), t=t)
        _, poses = predict_chunk_np(checkpoint, obs, params)
        ee = forward_kinematics(obs.q, params)
        for c in checkpoint.config.cameras:
            frame = (obs.images[c] * 255.0).round().astype(np.uint8)
            if overlay:
                frame = overlay_trajectory(frame, poses, cams[c], ee)
            cv2.imwrite(os.path.join(out_dir, f"{c}_{t:04d}.png"),
                        cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
    click.echo(f"wrote {record.length} frames per camera to {out_dir}")


@main.command()
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--state-id", type=click.IntRange(0, 5), default=1,
              show_default=True)
@click.option("--fps", type=int, default=15, show_default=True)
@click.option("--data", "data_dir", type=click.Path(), default=None,
              help="Dataset directory for kept recordings.")
def serve(port, state_id, fps, data_dir):
    """Start the teleoperation websocket service."""
    from strawpick.teleop import run_service
    try:
        run_service(port, state_id, fps, data_dir)
    except OSError as exc:
        click.echo(f"cannot bind port {port}: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
