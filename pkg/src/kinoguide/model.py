"""A small trainable video denoiser: per-frame 2D convolutions interleaved
with cross-frame mixing layers, sinusoidal timestep embedding added through
learned per-layer projections, and named feature hooks on the two mixing
layers.

Conditioning is the clean first frame, replicated along time and
concatenated on the channel axis; the unconditional branch zeroes those
channels.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import tensor as tt
from .io import load_kgt, save_kgt
from .tensor import Tensor


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of an integer timestep."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)]).astype(np.float64)


class ToyDenoiser:
    """Video noise predictor eps(z_t, t, cond) with feature hooks.

    Architecture: ``depth`` same-padded 3x3 convolutions shared across
    frames (first maps the 2*C_latent input channels up, last projects back
    down, zero-initialized so training loss starts at the unit-noise
    plateau), with two frame-mixing layers inserted mid-network. Hook
    features are the pre-activation mixing outputs, at full spatial
    resolution.
    """

    HOOKS = ("mix0", "mix1")

    def __init__(
        self,
        frames: int = 8,
        image_hw=(32, 32),
        latent_channels: int = 1,
        channels: int = 32,
        depth: int = 6,
        emb_dim: int = 16,
        seed: int = 0,
        dtype=np.float32,
        zero_init_out: bool = True,
    ):
        if depth < 2:
            raise ValueError("denoiser needs at least input and output convs")
        self.frames = frames
        self.image_hw = tuple(image_hw)
        self.latent_channels = latent_channels
        self.channels = channels
        self.depth = depth
        self.emb_dim = emb_dim
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        # Mixing layers sit after these conv indices (mid-network).
        self._mix_after = {
            max(0, (depth - 1) // 3): "mix0",
            max(1, (2 * (depth - 1)) // 3): "mix1",
        }
        rng = np.random.default_rng(seed)
        cin = 2 * latent_channels
        for i in range(depth):
            cout = latent_channels if i == depth - 1 else channels
            name = self._conv_name(i)
            fan_in = cin * 9
            if i == depth - 1 and zero_init_out:
                k = np.zeros((cout, cin, 3, 3))
            else:
                k = rng.normal(0.0, np.sqrt(2.0 / fan_in), (cout, cin, 3, 3))
            self._add(f"{name}.k", k)
            if i != depth - 1:
                self._add(f"{name}.tproj", rng.normal(0.0, 0.02, (cout, emb_dim)))
                self._add(f"{name}.scale", np.ones(cout))
                self._add(f"{name}.bias", np.zeros(cout))
            cin = cout
        for mix in self.HOOKS:
            self._add(f"{mix}.w", np.eye(frames) + rng.normal(0.0, 0.02, (frames, frames)))
            self._add(f"{mix}.b", np.zeros((frames, 1)))

    def _conv_name(self, i: int) -> str:
        if i == 0:
            return "conv_in"
        if i == self.depth - 1:
            return "conv_out"
        return f"conv{i}"

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value.astype(self.dtype), requires_grad=True)

    # LoRA attaches to these.
    def lora_targets(self) -> list[str]:
        return ["mix0", "mix1", "conv_out"]

    def layer_weight_name(self, layer_id: str) -> str:
        if layer_id in self.HOOKS:
            return f"{layer_id}.w"
        if layer_id == "conv_out" or layer_id.startswith("conv"):
            return f"{layer_id}.k"
        raise KeyError(f"unknown layer id {layer_id!r}")

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def set_trainable(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag
            p.grad = None

    def forward(
        self,
        z_t,
        t: int,
        cond=None,
        want_features: bool = False,
        overrides: dict[str, Tensor] | None = None,
    ):
        """One denoising pass; returns (eps_hat, features).

        ``cond`` is the clean first frame [C_latent, H, W]; None runs the
        unconditional branch (conditioning channels zeroed). ``overrides``
        substitutes effective weights by name without touching the stored
        parameters (used by LoRA adapters). Features are recorded from the
        same pass and never feed back into it.
        """
        z = z_t if isinstance(z_t, Tensor) else Tensor(np.asarray(z_t, self.dtype))
        nf, cl, h, w = z.shape
        if nf != self.frames or cl != self.latent_channels:
            raise ValueError(
                f"latent shape {z.shape} does not match model "
                f"({self.frames}, {self.latent_channels}, ...)"
            )
        if cond is None:
            cond_tile = np.zeros((nf, cl, h, w), dtype=self.dtype)
        else:
            carr = cond.data if isinstance(cond, Tensor) else np.asarray(cond)
            cond_tile = np.broadcast_to(
                carr.astype(self.dtype), (nf, cl, h, w)
            ).copy()
        params = self.params if overrides is None else {**self.params, **overrides}
        emb = Tensor(timestep_embedding(t, self.emb_dim).astype(self.dtype)[:, None])
        x = tt.concat([z, Tensor(cond_tile)], axis=1)
        features: dict[str, Tensor] = {}
        for i in range(self.depth):
            name = self._conv_name(i)
            x = tt.conv2d(x, params[f"{name}.k"])
            if i != self.depth - 1:
                shift = tt.reshape(
                    tt.matmul(params[f"{name}.tproj"], emb), (x.shape[1], 1, 1)
                )
                x = tt.add(x, shift)
                x = tt.add(
                    tt.mul(x, tt.reshape(params[f"{name}.scale"], (x.shape[1], 1, 1))),
                    tt.reshape(params[f"{name}.bias"], (x.shape[1], 1, 1)),
                )
                x = tt.silu(x)
            if i in self._mix_after and i != self.depth - 1:
                mix = self._mix_after[i]
                flat = tt.reshape(x, (nf, -1))
                mixed = tt.add(tt.matmul(params[f"{mix}.w"], flat), params[f"{mix}.b"])
                x = tt.reshape(mixed, x.shape)
                if want_features:
                    features[mix] = x
                x = tt.silu(x)
        return x, features

    # ------------------------------------------------------------ checkpoint
    def manifest(self) -> dict:
        return {
            "format": "kinoguide-checkpoint-v1",
            "frames": self.frames,
            "image_hw": list(self.image_hw),
            "latent_channels": self.latent_channels,
            "channels": self.channels,
            "depth": self.depth,
            "emb_dim": self.emb_dim,
            "dtype": self.dtype.name,
            "hooks": list(self.HOOKS),
            "params": {k: list(v.shape) for k, v in sorted(self.params.items())},
        }

    def save(self, ckpt_dir: str | Path) -> None:
        ckpt = Path(ckpt_dir)
        ckpt.mkdir(parents=True, exist_ok=True)
        for name, p in self.params.items():
            save_kgt(ckpt / (name + ".kgt"), p.data)
        with open(ckpt / "manifest.json", "w") as fh:
            json.dump(self.manifest(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, ckpt_dir: str | Path, trainable: bool = False) -> "ToyDenoiser":
        ckpt = Path(ckpt_dir)
        with open(ckpt / "manifest.json") as fh:
            man = json.load(fh)
        model = cls(
            frames=man["frames"],
            image_hw=tuple(man["image_hw"]),
            latent_channels=man["latent_channels"],
            channels=man["channels"],
            depth=man["depth"],
            emb_dim=man["emb_dim"],
            dtype=np.dtype(man["dtype"]),
        )
        for name in man["params"]:
            arr = load_kgt(ckpt / (name + ".kgt")).astype(model.dtype)
            if tuple(arr.shape) != tuple(man["params"][name]):
                raise ValueError(f"checkpoint param {name} has shape {arr.shape}")
            model.params[name] = Tensor(arr, requires_grad=trainable)
        if not trainable:
            model.set_trainable(False)
        return model


def checkpoint_hash(ckpt_dir: str | Path) -> str:
    """SHA-256 over the manifest plus every stored tensor, order-stable."""
    ckpt = Path(ckpt_dir)
    digest = hashlib.sha256()
    for path in sorted(ckpt.glob("*")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()
