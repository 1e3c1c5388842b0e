"""Adversarial training of the discriminator bank.

Four conditional pairs: {frame->flow, flow->frame} x {set1, set2}, each a
generator/patch-discriminator pair trained with BCE plus an L1 reconstruction
term on normal-scenario frames only. Checkpoints land in
<out>/{set1|set2}/{f2o|o2f}/ together with a training-config snapshot.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import SET1, SET2
from .networks import make_pair

DIRECTIONS = ("f2o", "o2f")


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 14
    batch_size: int = 8
    lr: float = 2e-4
    beta1: float = 0.5
    l1_weight: float = 50.0
    base_channels: int = 16   # discriminator width
    gen_channels: int = 16    # generator width
    max_per_set: int = 400
    adv_loss: str = "bce"  # "bce" or "lsgan" (least squares)


def _batches(n: int, batch_size: int, gen: torch.Generator):
    order = torch.randperm(n, generator=gen)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _mismatch(y: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """Pair every condition with some other sample's real candidate."""
    if len(y) < 2:
        return y.flip(0)
    perm = torch.randperm(len(y), generator=gen)
    # avoid fixed points so each pair really is mismatched
    fixed = perm == torch.arange(len(y))
    if fixed.any():
        perm = torch.roll(perm, 1)
    return y[perm]


def train_pair(cond: torch.Tensor, target: torch.Tensor, direction: str,
               cfg: TrainConfig, seed: int) -> tuple[nn.Module, nn.Module, dict]:
    """Train one generator/discriminator pair; returns (G, D, summary)."""
    torch.manual_seed(seed)
    G, D = make_pair(direction, base=cfg.base_channels, gen_base=cfg.gen_channels)
    opt_g = torch.optim.Adam(G.parameters(), lr=cfg.lr, betas=(cfg.beta1, 0.999))
    opt_d = torch.optim.Adam(D.parameters(), lr=cfg.lr, betas=(cfg.beta1, 0.999))
    adv = nn.MSELoss() if cfg.adv_loss == "lsgan" else nn.BCELoss()
    l1 = nn.L1Loss()
    gen = torch.Generator().manual_seed(seed + 1)

    last_d = last_g = float("nan")
    steps = 0
    for _ in range(cfg.epochs):
        for idx in _batches(len(cond), cfg.batch_size, gen):
            x = cond[idx]
            y = target[idx]

            fake = G(x)
            # discriminator: matched real pair -> 1; generated candidate -> 0;
            # another sample's real candidate -> 0. The third term makes D
            # verify cross-channel consistency rather than candidate realism,
            # a cue that stays valid on content never seen in training.
            opt_d.zero_grad()
            d_real = D(x, y)
            d_fake = D(x, fake.detach())
            d_mis = D(x, _mismatch(y, gen))
            loss_d = (2.0 * adv(d_real, torch.ones_like(d_real))
                      + adv(d_fake, torch.zeros_like(d_fake))
                      + adv(d_mis, torch.zeros_like(d_mis))) / 4.0
            loss_d.backward()
            opt_d.step()

            # generator: fool D and stay close to the target
            opt_g.zero_grad()
            d_gen = D(x, fake)
            loss_g = adv(d_gen, torch.ones_like(d_gen)) + cfg.l1_weight * l1(fake, y)
            loss_g.backward()
            opt_g.step()

            last_d = float(loss_d.detach())
            last_g = float(loss_g.detach())
            steps += 1
    return G, D, {"steps": steps, "final_loss_d": last_d, "final_loss_g": last_g}


def train_bank(split: dict[str, tuple[np.ndarray, np.ndarray]], out_dir,
               cfg: TrainConfig) -> dict:
    """Train all four pairs and persist checkpoints; returns the summary."""
    out_dir = Path(out_dir)
    summary = {"config": asdict(cfg), "pairs": {}}
    t0 = time.time()
    for si, set_name in enumerate((SET1, SET2)):
        frames, flows = split[set_name]
        fr = torch.from_numpy(frames)
        fl = torch.from_numpy(flows)
        for di, direction in enumerate(DIRECTIONS):
            cond, target = (fr, fl) if direction == "f2o" else (fl, fr)
            seed = cfg.seed * 1000 + si * 10 + di
            G, D, stats = train_pair(cond, target, direction, cfg, seed)
            pair_dir = out_dir / set_name / direction
            pair_dir.mkdir(parents=True, exist_ok=True)
            torch.save({"generator": G.state_dict(), "discriminator": D.state_dict()},
                       pair_dir / "checkpoint.pt")
            stats["n_train"] = len(cond)
            summary["pairs"][f"{set_name}/{direction}"] = stats
    summary["train_seconds"] = round(time.time() - t0, 2)
    with open(out_dir / "training.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    return summary


def load_bank(bank_dir, base_channels: int = 16,
              gen_channels: int = 16) -> dict[str, dict[str, tuple]]:
    """set name -> direction -> (G, D) in eval mode."""
    bank_dir = Path(bank_dir)
    out: dict[str, dict[str, tuple]] = {}
    for set_name in (SET1, SET2):
        out[set_name] = {}
        for direction in DIRECTIONS:
            ckpt_path = bank_dir / set_name / direction / "checkpoint.pt"
            if not ckpt_path.exists():
                raise FileNotFoundError(f"missing checkpoint {ckpt_path}")
            G, D = make_pair(direction, base=base_channels, gen_base=gen_channels)
            state = torch.load(ckpt_path, map_location="cpu", weights_only=True)
            G.load_state_dict(state["generator"])
            D.load_state_dict(state["discriminator"])
            G.eval()
            D.eval()
            out[set_name][direction] = (G, D)
    return out
