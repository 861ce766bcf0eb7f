"""Operator surface: train / eval / replay / gan-probe subcommands.

Run directories hold a normalized config.txt, metrics.csv, and
checkpoints; replay writes a JSONL subgoal trace plus ASCII frames at
every subgoal event.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import agent as ag
from . import autodiff as ad
from . import gridworld as gw
from . import nn
from . import toy
from . import transition_gan as tg
from .config import ConfigError, RunConfig, load_config, \
    parse_config, save_config
from .learner import Trainer, train

TRACE_EVENTS = ("proposed", "active", "reached", "abandoned", "none")


# ------------------------------------------------------------ episode runner

def run_episode(trainer, layout_seed, rng, greedy=True, trace=False,
                episode_index=0):
    """Roll one episode with the trainer's current parameters.

    Returns (total extrinsic reward, steps, trace records, frames) where
    frames are (step, ascii) pairs captured at subgoal events and the end.
    """
    c = trainer.config
    state = gw.generate(layout_seed, c.n)
    obs = gw.observe(state, c.m)
    nav, sg, gan = trainer.nav, trainer.sg, trainer.gan
    goal_cfg = trainer.goal_cfg
    g0 = ag.env_goal(c.m)
    nav_states = nav.initial_state(1)
    csg = c.algo == "csg"
    if csg:
        sg_states = sg.initial_state(1)
        status = ag.SubGoalStatus()
        goal = None
    records, frames = [], []
    total_r_e, step_i = 0.0, 0
    done = False

    while not done:
        event = "active" if csg else "none"
        if csg and status.status in (ag.Status.NONE, ag.Status.REACHED,
                                     ag.Status.ABANDONED):
            if greedy:
                with ad.no_grad():
                    logits, _, sg_states = ag.policy_forward(
                        sg, obs.flat()[None],
                        np.array([[g0.pos, g0.value]]), sg_states)
                goal = ag.decode_subgoal(int(logits.data[0].argmax()), c.m, g0)
            else:
                goal, _, _, sg_states = ag.propose_subgoal(
                    sg, obs, g0, sg_states, rng)
            status = ag.SubGoalStatus(ag.Status.ACTIVE, 0)
            event = "proposed"
            if trace:
                frames.append((step_i, gw.render_ascii(state)))

        if nav.goal_conditioned:
            logits, _, nav_states = _nav_forward(nav, obs, goal if csg else g0,
                                                 nav_states)
        else:
            with ad.no_grad():
                t_logits, _, nav_states = ag.policy_forward(
                    nav, obs.flat()[None], None, nav_states)
            logits = t_logits.data[0]
        action = int(np.argmax(logits)) if greedy \
            else int(ag.sample_from_logits(logits, rng))

        prev_obs = obs
        state, done, r_e = gw.step(state, action)
        obs = gw.observe(state, c.m)
        total_r_e += r_e
        step_i += 1

        r_c = r_g = 0.0
        verified = 0
        if csg:
            r_c = tg.curiosity_reward(gan, prev_obs, action, obs)
            verified = ag.verify_goal(obs, goal)
            r_g = goal_cfg.r * verified
            status = ag.update_lifecycle(status, obs, goal, goal_cfg)
            if status.status == ag.Status.REACHED and event == "active":
                event = "reached"
                if trace:
                    frames.append((step_i, gw.render_ascii(state)))
            elif status.status == ag.Status.ABANDONED and event == "active":
                event = "abandoned"
                if trace:
                    frames.append((step_i, gw.render_ascii(state)))

        if trace:
            records.append({
                "episode": episode_index,
                "step": step_i,
                "action": action,
                "subgoal_pos": goal.pos if csg else None,
                "subgoal_value": goal.value if csg else None,
                "subgoal_text": ag.describe_subgoal(goal, c.m) if csg else "",
                "event": event,
                "r_e": round(float(r_e), 6),
                "r_c": round(float(r_c), 6),
                "r_g": round(float(r_g), 6),
            })
    if trace:
        frames.append((step_i, gw.render_ascii(state)))
    return total_r_e, step_i, records, frames


def _nav_forward(nav, obs, goal, nav_states):
    with ad.no_grad():
        logits, value, new_states = ag.policy_forward(
            nav, obs.flat()[None], np.array([[goal.pos, goal.value]]),
            nav_states)
    return logits.data[0], float(value.data[0]), new_states


def evaluate(trainer, episodes, seed):
    """Mean and standard error of extrinsic reward over fresh layouts."""
    rng = np.random.default_rng(seed)
    layout_rng = np.random.default_rng(seed + 1)
    returns = []
    for i in range(episodes):
        r, _, _, _ = run_episode(trainer, int(layout_rng.integers(0, 2 ** 31)),
                                 rng, greedy=True)
        returns.append(r)
    returns = np.asarray(returns)
    stderr = returns.std(ddof=1) / np.sqrt(len(returns)) if episodes > 1 else 0.0
    return float(returns.mean()), float(stderr)


def validate_trace(records):
    """Check the subgoal lifecycle grammar over trace records.

    Proposals may occur only at an episode start or right after a
    reached/abandoned event. A 'proposed' row whose r_g is positive is a
    subgoal satisfied on its own proposal step, so the next row may
    propose again. Returns (ok, message).
    """
    state = {}      # per-episode lifecycle state
    last_step = {}
    for i, rec in enumerate(records):
        ep, ev, step = rec["episode"], rec["event"], rec["step"]
        if ev not in TRACE_EVENTS:
            return False, f"record {i}: unknown event {ev!r}"
        if ep in last_step and step != last_step[ep] + 1:
            return False, f"record {i}: non-consecutive step {step}"
        last_step[ep] = step
        prev = state.get(ep, "start")
        if ev == "proposed":
            if prev not in ("start", "reached", "abandoned"):
                return False, (f"record {i}: proposal after {prev!r} "
                               "(must follow start/reached/abandoned)")
            state[ep] = "reached" if rec.get("r_g", 0) > 0 else "active"
        elif ev == "active":
            if prev != "active":
                return False, f"record {i}: active without an open subgoal"
        elif ev in ("reached", "abandoned"):
            if prev != "active":
                return False, f"record {i}: {ev} without an open subgoal"
            state[ep] = ev
        # 'none' rows (non-subgoal agents) carry no lifecycle meaning
    return True, "ok"


# ------------------------------------------------------------ subcommands

def cmd_train(args):
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    cfg = _apply_overrides(cfg, args)
    cfg = cfg.normalized()
    out_dir = args.out or cfg.out_dir or f"runs/{cfg.algo}_{cfg.size}_{cfg.seed}"
    cfg.out_dir = out_dir
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.txt"))

    tc = cfg.to_train_config()
    last = {"steps": 0}

    def progress(tr, rep):
        if tr.updates % 200 == 0:
            print(f"step {tr.steps} episodes {tr.total_episodes} "
                  f"mean_r_e {tr.mean_recent_return():.3f}", flush=True)

    train(tc, progress=progress)
    print(f"run complete: {out_dir}")
    return 0


def _apply_overrides(cfg, args):
    text_lines = []
    for key in ("algo", "size", "view", "steps", "seed", "actors", "hidden",
                "entropy_weight", "lr", "alpha", "beta", "abandon_limit",
                "eval_episodes"):
        v = getattr(args, key, None)
        if v is not None:
            text_lines.append(f"{key} = {v}")
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        text_lines.append(item)
    cfg = parse_config("\n".join(text_lines), cfg)
    if getattr(args, "deterministic", False):
        cfg.deterministic = True
    return cfg


def _load_trainer(checkpoint, config_path=None, overrides=None):
    cfg_file = config_path or os.path.join(os.path.dirname(checkpoint)
                                           or ".", "config.txt")
    cfg = RunConfig()
    if os.path.exists(cfg_file):
        cfg = load_config(cfg_file, cfg)
    if overrides:
        cfg = parse_config(overrides, cfg)
    cfg = cfg.normalized()
    trainer = Trainer(cfg.to_train_config())
    groups = nn.load_params(checkpoint)
    for gname, ps in trainer.named_param_sets().items():
        if gname not in groups:
            raise ValueError(f"checkpoint missing parameter group {gname!r}")
        for name, t in ps.items():
            src = groups[gname][name]
            if src.data.shape != t.data.shape:
                raise ValueError(
                    f"incompatible checkpoint shape for {gname}/{name}: "
                    f"{src.data.shape} vs expected {t.data.shape}")
            t.data = src.data.astype(t.data.dtype)
    return trainer, cfg


def cmd_eval(args):
    trainer, cfg = _load_trainer(args.checkpoint, args.config)
    mean, stderr = evaluate(trainer, args.episodes, args.seed)
    print(f"mean_r_e {mean:.4f} +/- {stderr:.4f} "
          f"({args.episodes} episodes, size {cfg.size})")
    return 0


def cmd_replay(args):
    trainer, cfg = _load_trainer(args.checkpoint, args.config)
    if cfg.algo != "csg":
        print("replay requires a csg checkpoint", file=sys.stderr)
        return 2
    rng = np.random.default_rng(args.seed)
    r_e, steps, records, frames = run_episode(
        trainer, args.layout_seed, rng, greedy=True, trace=True)
    out = args.out or os.path.dirname(args.checkpoint) or "."
    os.makedirs(out, exist_ok=True)
    trace_path = os.path.join(out, f"trace_{args.layout_seed}.jsonl")
    with open(trace_path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    frames_path = os.path.join(out, f"frames_{args.layout_seed}.txt")
    with open(frames_path, "w") as f:
        for step, art in frames:
            f.write(f"--- step {step} ---\n{art}\n\n")
    ok, msg = validate_trace(records)
    print(f"episode reward {r_e:.4f} in {steps} steps; trace -> {trace_path}; "
          f"frames -> {frames_path}; lifecycle {'valid' if ok else msg}")
    return 0 if ok else 1


def cmd_gan_probe(args):
    def progress(step, report, cur):
        print(f"step {step}: familiar {cur['familiar_mean']:.4f} "
              f"impossible {cur['impossible']:.4f} "
              f"recon_loss {report['recon_loss']:.4f}", flush=True)

    res = toy.run_coin_probe(train_steps=args.steps, seed=args.seed,
                             progress=progress if args.verbose else None)
    u, t = res["untrained"], res["trained"]
    print("curiosity on the coin-flip toy transition model")
    print(f"{'':>12} {'familiar_a':>11} {'familiar_b':>11} {'impossible':>11}")
    print(f"{'untrained':>12} {u['familiar_a']:>11.4f} {u['familiar_b']:>11.4f} "
          f"{u['impossible']:>11.4f}")
    print(f"{'trained':>12} {t['familiar_a']:>11.4f} {t['familiar_b']:>11.4f} "
          f"{t['impossible']:>11.4f}")
    print(f"robust to stochastic transitions: {res['robust']}")
    return 0 if res["robust"] else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="csg", description="curious subgoal agent laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training job")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--algo", choices=("csg", "vanilla", "rnd"))
    p.add_argument("--size", type=int)
    p.add_argument("--view", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--actors", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--entropy-weight", dest="entropy_weight", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--abandon-limit", dest="abandon_limit", type=int)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("--out", help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="config file (default: sibling config.txt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="replay one episode with a subgoal trace")
    p.add_argument("checkpoint")
    p.add_argument("--layout-seed", dest="layout_seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("gan-probe",
                       help="coin-flip curiosity robustness experiment")
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_gan_probe)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
