"""One-off trainer for the bundled reference weight fixture.

Generates a synthetic patch dataset, trains the canonical network with
PyTorch, and exports the best-validation-loss weights in the VSEGW1
format so the inference engine (and its tests) can load them. This is a
development utility, not part of the installed package.

Usage:
    python scripts/train_reference_weights.py --out tests/fixtures/reference_weights.vsegw1
"""

from __future__ import annotations

import argparse
import tempfile
from pathlib import Path

import numpy as np
import torch
from torch import nn

from voltseg import unet
from voltseg.dataset import generate_training_set, load_patches
from voltseg.simulate import SceneConfig


class CanonicalUNet(nn.Module):
    """Torch mirror of the canonical architecture (same tensor names/shapes)."""

    def __init__(self):
        super().__init__()
        widths = unet.ENCODER_WIDTHS
        self.convs = nn.ModuleDict()

        def add(name, cin, cout, k=3):
            self.convs[name.replace(".", "/")] = nn.Conv2d(cin, cout, k, padding=k // 2)

        cin = unet.IN_CHANNELS
        for level, cout in enumerate(widths, start=1):
            add(f"enc{level}.conv1", cin, cout)
            add(f"enc{level}.conv2", cout, cout)
            cin = cout
        for level in range(len(widths) - 1, 0, -1):
            cout = widths[level - 1]
            add(f"dec{level}.conv1", cin + cout, cout)
            add(f"dec{level}.conv2", cout, cout)
            cin = cout
        add("out.conv", cin, 1, k=1)

    def _block(self, x, name):
        x = torch.relu(self.convs[f"{name}/conv1"](x))
        return torch.relu(self.convs[f"{name}/conv2"](x))

    def forward(self, x):
        skips = []
        levels = len(unet.ENCODER_WIDTHS)
        for level in range(1, levels + 1):
            x = self._block(x, f"enc{level}")
            if level < levels:
                skips.append(x)
                x = torch.max_pool2d(x, 2)
        for level in range(levels - 1, 0, -1):
            up = torch.nn.functional.interpolate(x, scale_factor=2, mode="nearest")
            x = torch.cat([up, skips.pop()], dim=1)
            x = self._block(x, f"dec{level}")
        return self.convs["out/conv"](x)[:, 0]  # logits


def to_bundle(model: CanonicalUNet) -> unet.WeightBundle:
    tensors = {}
    for key, conv in model.convs.items():
        name = key.replace("/", ".")
        tensors[f"{name}.kernel"] = conv.weight.detach().numpy().astype(np.float32)
        tensors[f"{name}.bias"] = conv.bias.detach().numpy().astype(np.float32)
    bundle = unet.WeightBundle(tensors)
    bundle.validate()
    return bundle


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, required=True, help="output .vsegw1 path")
    ap.add_argument("--dataset", type=Path, default=None,
                    help="reuse an existing dataset directory")
    ap.add_argument("--videos", type=int, default=40)
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=1000)
    args = ap.parse_args()

    if args.dataset is None:
        args.dataset = Path(tempfile.mkdtemp(prefix="voltseg-train-"))
    if not (args.dataset / "manifest.json").exists():
        print(f"generating {args.videos} training videos under {args.dataset} ...")
        generate_training_set(args.dataset, n_videos=args.videos,
                              scene=SceneConfig(seed=args.seed), save_videos=False)
    inputs, labels, manifest = load_patches(args.dataset)
    split = np.array([e["split"] for e in manifest["entries"]])
    x_train = torch.from_numpy(inputs[split == "train"])
    y_train = torch.from_numpy(labels[split == "train"].astype(np.float32))
    x_val = torch.from_numpy(inputs[split == "val"])
    y_val = torch.from_numpy(labels[split == "val"].astype(np.float32))
    print(f"train {len(x_train)}  val {len(x_val)}  "
          f"positive fraction {labels.mean():.3f}")

    torch.manual_seed(0)
    model = CanonicalUNet()
    opt = torch.optim.Adam(model.parameters(), lr=args.lr)
    loss_fn = nn.BCEWithLogitsLoss()

    def val_loss() -> float:
        model.eval()
        total = 0.0
        with torch.no_grad():
            for i in range(0, len(x_val), 128):
                xb, yb = x_val[i:i + 128], y_val[i:i + 128]
                total += loss_fn(model(xb), yb).item() * len(xb)
        model.train()
        return total / len(x_val)

    best = float("inf")
    best_state = None
    order_rng = np.random.default_rng(0)
    for epoch in range(args.epochs):
        order = order_rng.permutation(len(x_train))
        running = 0.0
        for i in range(0, len(order), args.batch):
            idx = order[i:i + args.batch]
            opt.zero_grad()
            loss = loss_fn(model(x_train[idx]), y_train[idx])
            loss.backward()
            opt.step()
            running += loss.item() * len(idx)
        vl = val_loss()
        print(f"epoch {epoch}: train_bce {running / len(order):.4f}  val_bce {vl:.4f}")
        if vl < best:
            best = vl
            best_state = {k: v.clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    unet.save_weights(to_bundle(model), args.out)
    print(f"saved best (val_bce {best:.4f}) to {args.out}")


if __name__ == "__main__":
    main()
