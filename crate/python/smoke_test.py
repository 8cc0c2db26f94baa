#!/usr/bin/env python3
"""Smoke test for the simrl_py extension module.

Builds nothing itself: run `cargo build -p simrl-py` first, then

    python3 python/smoke_test.py [path/to/checkpoint.json]

The optional argument exercises Policy loading against a checkpoint
produced by `simrl train` (out/<dir>/checkpoint.json).
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_simrl_py():
    candidates = [
        REPO / "target" / "debug" / "libsimrl_py.so",
        REPO / "target" / "release" / "libsimrl_py.so",
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        sys.exit("libsimrl_py.so not found; run `cargo build -p simrl-py` first")
    stage = Path(tempfile.mkdtemp(prefix="simrl_py_"))
    shutil.copy(lib, stage / "simrl_py.so")
    sys.path.insert(0, str(stage))
    import simrl_py

    return simrl_py


def main():
    m = import_simrl_py()

    actions = m.movement_actions()
    assert actions[0] == "STOP" and "FORWARD" in actions, actions
    print(f"movement_actions: {len(actions)} actions")

    returns = m.compute_returns([1.0, 0.0, 2.0], 0.5)
    assert returns == [1.5, 1.0, 2.0], returns
    print(f"compute_returns: {returns}")

    env_cfg = json.dumps(
        {
            "action_set": ["STOP", "FORWARD", "BACKWARD", "LEFT", "RIGHT"],
            "reward_mode": "DENSE",
            "max_steps": 50,
        }
    )
    env = m.Env(str(REPO / "worlds" / "easy.json"), env_cfg)
    env.seed(7)
    obs = env.reset()
    assert len(obs) == env.observation_dim, (len(obs), env.observation_dim)
    assert env.action_count == 5 and env.actions[1] == "FORWARD"
    total = 0.0
    for step in range(50):
        obs, reward, terminated, truncated, outcome = env.step(1)  # FORWARD
        total += reward
        if terminated or truncated:
            break
    print(f"env rollout: {step + 1} steps, return {total:.3f}, outcome {outcome}")
    assert outcome in ("RUNNING", "SOLVED", "COLLISION", "TIMEOUT")

    with tempfile.TemporaryDirectory() as out:
        variants = m.generate_world_variants(
            str(REPO / "worlds" / "move_to_target.json"), 3, out
        )
        assert len(variants) == 3, variants
        names = {json.load(open(v))["supervisor_name"] for v in variants}
        assert len(names) == 3, names
    print(f"generate_world_variants: {len(variants)} disjoint variants")

    broker = m.Broker()
    assert ":" in broker.addr
    broker.shutdown()
    print(f"broker: started on {broker.addr} and shut down")

    if len(sys.argv) > 1:
        policy = m.Policy.load(sys.argv[1])
        action = policy.act(env.reset())
        assert 0 <= action < len(policy.actions)
        print(f"policy: layers {policy.layer_sizes}, greedy action {action}")

    print("smoke test OK")


if __name__ == "__main__":
    main()
