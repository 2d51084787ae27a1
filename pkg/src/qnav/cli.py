"""Command-line front end: mine-hard, train, eval, synth-train, inspect.

Values resolve as flags over config file over defaults, and every run writes
the merged result to resolved_config.json in its output directory, so a run
can be reproduced from that file alone. Exit codes: 0 success, 2 config or
usage error, 3 data error (datasets, checkpoints, files), 4 gateway error,
5 verification failure (synth-train below threshold).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import dqn, evalkit, synthetic
from .core import ActionKind
from .env import EnvConfig, ReasoningEpisode
from .gateway import (
    GatewayError,
    OpenAIChatBackend,
    PrmWireConfig,
    ScriptedChatBackend,
    ScriptedPrm,
    ScriptedRule,
    UsageLog,
    WireConfig,
    WirePrm,
)
from .net import CheckpointError, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_GATEWAY = 4
EXIT_VERIFY = 5

CHECKPOINT_EVERY = 500


class ConfigError(Exception):
    """Bad or inconsistent configuration."""


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return doc


def _pick(flag_value, file_cfg: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    return file_cfg.get(key, default)


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(args, seed: int, file_cfg: dict) -> Path:
    explicit = _pick(args.out_dir, file_cfg, "out_dir", None)
    if explicit is not None:
        return Path(explicit)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path("runs") / f"{stamp}-seed{seed}"


def build_chat_backend(cfg: dict) -> tuple[object, bool]:
    """(backend, offline) from a gateway config section."""
    kind = cfg.get("backend", "openai")
    if kind == "scripted":
        rules = [
            ScriptedRule(
                contains=r["contains"],
                response=r["response"],
                fail_times=int(r.get("fail_times", 0)),
            )
            for r in cfg.get("rules", [])
        ]
        return (
            ScriptedChatBackend(
                rules,
                script=cfg.get("script"),
                strict=bool(cfg.get("strict", True)),
                default_response=cfg.get("default_response"),
            ),
            True,
        )
    if kind == "openai":
        try:
            wire = WireConfig(
                base_url=cfg["base_url"],
                model=cfg["model"],
                api_key_env=cfg.get("api_key_env", "QNAV_API_KEY"),
                timeout_s=float(cfg.get("timeout_s", 120.0)),
                max_attempts=int(cfg.get("max_attempts", 3)),
                backoff_base_s=float(cfg.get("backoff_base_s", 0.5)),
                max_in_flight=int(cfg.get("max_in_flight", 4)),
            )
        except KeyError as exc:
            raise ConfigError(f"gateway config missing {exc.args[0]!r}") from exc
        return OpenAIChatBackend(wire), False
    raise ConfigError(f"unknown gateway backend {kind!r}")


def build_prm_backend(cfg: dict) -> tuple[object, bool]:
    """(backend, offline) from a prm config section."""
    kind = cfg.get("backend", "scripted")
    if kind == "scripted":
        rules = [(str(c), float(v)) for c, v in cfg.get("rules", [])]
        return ScriptedPrm(rules, default=float(cfg.get("default", 0.5))), True
    if kind == "wire":
        try:
            return WirePrm(PrmWireConfig(
                base_url=cfg["base_url"],
                api_key_env=cfg.get("api_key_env", "QNAV_API_KEY"),
                timeout_s=float(cfg.get("timeout_s", 120.0)),
                max_attempts=int(cfg.get("max_attempts", 3)),
            )), False
        except KeyError as exc:
            raise ConfigError(f"prm config missing {exc.args[0]!r}") from exc
    raise ConfigError(f"unknown prm backend {kind!r}")


def _gateway_section(args, file_cfg: dict) -> dict:
    section = dict(file_cfg.get("gateway", {}))
    if getattr(args, "base_url", None) is not None:
        section["base_url"] = args.base_url
        section.setdefault("backend", "openai")
    if getattr(args, "model", None) is not None:
        section["model"] = args.model
        section.setdefault("backend", "openai")
    if getattr(args, "api_key_env", None) is not None:
        section["api_key_env"] = args.api_key_env
    return section


def _env_config(file_cfg: dict) -> EnvConfig:
    section = dict(file_cfg.get("env", {}))
    blocks = section.pop("enabled_blocks", None)
    kwargs = {}
    for key in ("max_actions", "self_eval_retry", "subtask_cap", "max_output_tokens"):
        if key in section:
            kwargs[key] = int(section[key])
    if "temperature" in section:
        kwargs["temperature"] = float(section["temperature"])
    if blocks is not None:
        try:
            kwargs["enabled_blocks"] = frozenset(ActionKind[name] for name in blocks)
        except KeyError as exc:
            raise ConfigError(f"unknown action name in enabled_blocks: {exc.args[0]!r}") from exc
    try:
        return EnvConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _trainer_config(args, file_cfg: dict, seed: int) -> dqn.TrainerConfig:
    section = dict(file_cfg.get("trainer", {}))
    if getattr(args, "episodes", None) is not None:
        section["episodes"] = args.episodes
    kwargs = {}
    for key in (
        "gamma", "lr", "lr_decay", "epsilon_start", "epsilon_min", "epsilon_decay",
    ):
        if key in section:
            kwargs[key] = float(section[key])
    for key in (
        "episodes", "batch_size", "target_sync_interval", "lr_decay_every", "buffer_capacity",
    ):
        if key in section:
            kwargs[key] = int(section[key])
    if "widths" in section:
        widths = section["widths"]
        kwargs["widths"] = (int(widths[0]), int(widths[1]))
    try:
        return dqn.TrainerConfig(seed=seed, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _trainer_jsonable(cfg: dqn.TrainerConfig) -> dict:
    return {
        "gamma": cfg.gamma,
        "episodes": cfg.episodes,
        "batch_size": cfg.batch_size,
        "target_sync_interval": cfg.target_sync_interval,
        "lr": cfg.lr,
        "lr_decay": cfg.lr_decay,
        "lr_decay_every": cfg.lr_decay_every,
        "buffer_capacity": cfg.buffer_capacity,
        "epsilon_start": cfg.epsilon_start,
        "epsilon_min": cfg.epsilon_min,
        "epsilon_decay": cfg.epsilon_decay,
        "widths": list(cfg.widths),
    }


def _env_jsonable(cfg: EnvConfig) -> dict:
    return {
        "max_actions": cfg.max_actions,
        "enabled_blocks": sorted(a.name for a in cfg.enabled_blocks),
        "self_eval_retry": cfg.self_eval_retry,
        "subtask_cap": cfg.subtask_cap,
        "temperature": cfg.temperature,
        "max_output_tokens": cfg.max_output_tokens,
    }


# -- commands -------------------------------------------------------------------


def cmd_mine_hard(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = int(_pick(args.seed, file_cfg, "seed", 0))
    dataset_path = _pick(args.dataset, file_cfg, "dataset", None)
    if dataset_path is None:
        raise ConfigError("mine-hard needs --dataset")
    out = _out_dir(args, seed, file_cfg)
    gateway_cfg = _gateway_section(args, file_cfg)
    chat, _ = build_chat_backend(gateway_cfg)

    dataset = evalkit.load_dataset(dataset_path)
    usage = UsageLog()
    result = evalkit.mine_hard(dataset, chat, usage_log=usage)

    out.mkdir(parents=True, exist_ok=True)
    evalkit.save_dataset(result.hard, out / "hard_set.jsonl")
    _write_json(out / "mining_summary.json", {
        "total": result.total,
        "hard": len(result.hard),
        "proportion": result.proportion,
        "undetermined": list(result.undetermined),
        "usage": {"input_tokens": usage.totals().input_tokens,
                  "output_tokens": usage.totals().output_tokens},
    })
    _write_json(out / "resolved_config.json", {
        "command": "mine-hard",
        "dataset": str(dataset_path),
        "seed": seed,
        "out_dir": str(out),
        "gateway": gateway_cfg,
    })
    print(f"kept {len(result.hard)} of {result.total} questions "
          f"({100.0 * result.proportion:.2f}% hard, {len(result.undetermined)} undetermined)")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = int(_pick(args.seed, file_cfg, "seed", 0))
    hard_path = _pick(args.hard_set, file_cfg, "hard_set", None)
    if hard_path is None:
        raise ConfigError("train needs --hard-set")
    out = _out_dir(args, seed, file_cfg)
    gateway_cfg = _gateway_section(args, file_cfg)
    prm_cfg = dict(file_cfg.get("prm", {}))
    chat, _ = build_chat_backend(gateway_cfg)
    prm, _ = build_prm_backend(prm_cfg)
    env_cfg = _env_config(file_cfg)
    trainer_cfg = _trainer_config(args, file_cfg, seed)

    questions = evalkit.load_dataset(hard_path)
    if not questions:
        raise evalkit.DatasetError(f"{hard_path}: hard set is empty")
    usage = UsageLog()

    def env_factory(rng):
        record = questions[rng.randrange(len(questions))]
        return ReasoningEpisode(
            problem=record.question, kind=record.kind, chat=chat, prm=prm,
            cfg=env_cfg, question_id=record.id, usage_log=usage,
        )

    out.mkdir(parents=True, exist_ok=True)

    def snapshot(stats: dqn.EpisodeStats, net) -> None:
        n = stats.episode + 1
        if n % CHECKPOINT_EVERY == 0:
            payload = save_checkpoint(net, seed=seed, episodes=n)
            (out / f"checkpoint_ep{n:05d}.json").write_bytes(payload)

    net, stats = dqn.run_training(env_factory, trainer_cfg, on_episode=snapshot)

    (out / "checkpoint_final.json").write_bytes(
        save_checkpoint(net, seed=seed, episodes=trainer_cfg.episodes)
    )
    (out / "reward_curve.tsv").write_text(dqn.stats_table(stats), encoding="utf-8")
    _write_json(out / "usage.json", {
        "input_tokens": usage.totals().input_tokens,
        "output_tokens": usage.totals().output_tokens,
        "calls": usage.calls,
    })
    _write_json(out / "resolved_config.json", {
        "command": "train",
        "hard_set": str(hard_path),
        "seed": seed,
        "out_dir": str(out),
        "gateway": gateway_cfg,
        "prm": prm_cfg,
        "trainer": _trainer_jsonable(trainer_cfg),
        "env": _env_jsonable(env_cfg),
    })
    mean_return = sum(s.episode_return for s in stats) / len(stats)
    print(f"trained {trainer_cfg.episodes} episodes (seed {seed}); mean return {mean_return:.4f}")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = int(_pick(args.seed, file_cfg, "seed", 0))
    dataset_path = _pick(args.dataset, file_cfg, "dataset", None)
    if dataset_path is None:
        raise ConfigError("eval needs --dataset")
    policy_name = _pick(args.policy, file_cfg, "policy", "nav")
    checkpoint_path = _pick(args.checkpoint, file_cfg, "checkpoint", None)
    trials = int(_pick(args.trials, file_cfg, "trials", 3))
    out = _out_dir(args, seed, file_cfg)
    gateway_cfg = _gateway_section(args, file_cfg)
    prm_cfg = dict(file_cfg.get("prm", {}))
    chat, chat_offline = build_chat_backend(gateway_cfg)
    prm, prm_offline = build_prm_backend(prm_cfg)
    env_cfg = _env_config(file_cfg)

    if policy_name == "nav":
        if checkpoint_path is None:
            raise ConfigError("--policy nav needs --checkpoint")
        try:
            payload = Path(checkpoint_path).read_bytes()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
        net, _meta = load_checkpoint(payload)
        policy = evalkit.NavigatorPolicy(net)
    elif policy_name == "fixed-sequence":
        policy = evalkit.FixedSequencePolicy()
    elif policy_name == "random":
        policy = evalkit.RandomPolicy(seed)
    else:
        raise ConfigError(f"unknown policy {policy_name!r}")

    dataset = evalkit.load_dataset(dataset_path)
    cfg = evalkit.EvalConfig(trials=trials, seed=seed, env=env_cfg)
    report = evalkit.evaluate(policy, dataset, chat, prm, cfg, offline=chat_offline and prm_offline)

    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report.to_jsonable())
    _write_json(out / "resolved_config.json", {
        "command": "eval",
        "dataset": str(dataset_path),
        "policy": policy_name,
        "checkpoint": str(checkpoint_path) if checkpoint_path else None,
        "trials": trials,
        "seed": seed,
        "out_dir": str(out),
        "gateway": gateway_cfg,
        "prm": prm_cfg,
        "env": _env_jsonable(env_cfg),
    })
    print(f"accuracy {report.correct}/{report.total} = {report.accuracy:.4f}")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_synth_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    seeds = [int(s) for s in _pick(args.seeds, file_cfg, "seeds", "0").split(",") if s != ""]
    if not seeds:
        raise ConfigError("need at least one seed")
    states = int(_pick(args.states, file_cfg, "states", 8))
    sharpness = float(_pick(args.sharpness, file_cfg, "sharpness", 0.7))
    mdp_seed = int(_pick(args.mdp_seed, file_cfg, "mdp_seed", 0))
    threshold = float(_pick(args.threshold, file_cfg, "threshold", 0.95))
    default_min_pass = len(seeds) - 1 if len(seeds) > 1 else 1
    min_pass = int(_pick(args.min_pass, file_cfg, "min_pass", default_min_pass))
    out = _out_dir(args, seeds[0], file_cfg)

    mdp = synthetic.make_scripted(n_states=states, sharpness=sharpness, seed=mdp_seed)
    results = []
    passed = 0
    out.mkdir(parents=True, exist_ok=True)
    first_trainer_cfg = None
    for s in seeds:
        trainer_cfg = _trainer_config(args, file_cfg, s)
        if first_trainer_cfg is None:
            first_trainer_cfg = trainer_cfg
        oracle = synthetic.optimal_return(mdp, trainer_cfg.gamma)
        net, stats = dqn.run_training(synthetic.make_env_factory(mdp), trainer_cfg)
        achieved = synthetic.greedy_return(mdp, net, trainer_cfg.gamma)
        ratio = achieved / oracle.value if oracle.value else 0.0
        ok = ratio >= threshold
        passed += int(ok)
        (out / f"reward_curve_seed{s}.tsv").write_text(dqn.stats_table(stats), encoding="utf-8")
        results.append({
            "seed": s,
            "optimal_return": oracle.value,
            "greedy_return": achieved,
            "ratio": ratio,
            "pass": ok,
        })
        print(f"seed {s}: optimal {oracle.value:.4f} greedy {achieved:.4f} "
              f"ratio {ratio:.4f} {'PASS' if ok else 'FAIL'}")

    verdict = passed >= min_pass
    _write_json(out / "synth_results.json", {
        "states": states,
        "sharpness": sharpness,
        "mdp_seed": mdp_seed,
        "threshold": threshold,
        "min_pass": min_pass,
        "passed": passed,
        "verdict": verdict,
        "seeds": results,
    })
    _write_json(out / "resolved_config.json", {
        "command": "synth-train",
        "states": states,
        "sharpness": sharpness,
        "mdp_seed": mdp_seed,
        "threshold": threshold,
        "min_pass": min_pass,
        "seeds": ",".join(str(s) for s in seeds),
        "out_dir": str(out),
        "trainer": _trainer_jsonable(first_trainer_cfg),
    })
    print(f"{passed}/{len(seeds)} seeds passed (need {min_pass}): "
          f"{'PASS' if verdict else 'FAIL'}")
    print(f"artifacts in {out}")
    return EXIT_OK if verdict else EXIT_VERIFY


def cmd_inspect(args) -> int:
    try:
        payload = Path(args.checkpoint).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    net, meta = load_checkpoint(payload)
    print(f"widths: {net.widths[0]}x{net.widths[1]}")
    print(f"parameters: {net.num_parameters}")
    print(f"episodes: {meta['episodes']}")
    print(f"seed: {meta['seed']}")
    if "extra" in meta:
        print(f"extra: {json.dumps(meta['extra'], sort_keys=True)}")
    return EXIT_OK


# -- wiring ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnav",
        description="Train and evaluate a tiny Q-network that steers LLM reasoning blocks.",
    )
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, gateway=True):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None, help="artifact directory (default: runs/<stamp>-seed<seed>)")
        if gateway:
            p.add_argument("--base-url", default=None, help="OpenAI-compatible endpoint base URL")
            p.add_argument("--model", default=None)
            p.add_argument("--api-key-env", default=None, help="env var holding the API key")

    p = sub.add_parser("mine-hard", help="keep questions a direct prompt answers wrongly")
    common(p)
    p.add_argument("--dataset", default=None, help="JSONL dataset to mine")
    p.set_defaults(func=cmd_mine_hard)

    p = sub.add_parser("train", help="train the navigator on a hard set")
    common(p)
    p.add_argument("--hard-set", default=None, help="JSONL hard set from mine-hard")
    p.add_argument("--episodes", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy with self-consistency voting")
    common(p)
    p.add_argument("--dataset", default=None, help="JSONL dataset to evaluate")
    p.add_argument("--policy", default=None, choices=["nav", "fixed-sequence", "random"])
    p.add_argument("--checkpoint", default=None, help="navigator checkpoint (for --policy nav)")
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth-train", help="prove the trainer on the synthetic MDP")
    common(p, gateway=False)
    p.add_argument("--states", type=int, default=None)
    p.add_argument("--sharpness", type=float, default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated trainer seeds")
    p.add_argument("--mdp-seed", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--min-pass", type=int, default=None)
    p.set_defaults(func=cmd_synth_train)

    p = sub.add_parser("inspect", help="describe a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (evalkit.DatasetError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GatewayError as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY


if __name__ == "__main__":
    sys.exit(main())
