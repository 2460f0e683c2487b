#!/usr/bin/env python3
"""Export torchvision backbone weights in the layout the C++ loader expects.

    python3 scripts/export_imagenet_weights.py --arch densenet169 --out weights/densenet169.pt
    python3 scripts/export_imagenet_weights.py --arch inceptionv3 --out weights/inceptionv3.pt

The output is a plain dict of tensors keyed by torchvision parameter names.
--random-init skips the download and exports a seeded random initialisation;
--reference additionally writes an input batch and the backbone feature map
for parity tests.
"""

import argparse
import sys

import torch
import torchvision

RESOLUTION = {"densenet169": 224, "inceptionv3": 299}


def build(arch, random_init):
    weights = None if random_init else "IMAGENET1K_V1"
    if arch == "densenet169":
        return torchvision.models.densenet169(weights=weights)
    model = torchvision.models.inception_v3(
        weights=weights, aux_logits=True, init_weights=random_init, transform_input=True
    )
    return model


def features(arch, model, x):
    if arch == "densenet169":
        return torch.relu(model.features(x))
    model.avgpool = torch.nn.Identity()
    model.dropout = torch.nn.Identity()
    model.fc = torch.nn.Identity()
    return model(x).reshape(x.shape[0], 2048, 8, 8)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--arch", required=True, choices=sorted(RESOLUTION))
    parser.add_argument("--out", required=True, help="output .pt file")
    parser.add_argument("--random-init", action="store_true")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--reference", help="also write input/feature tensors here")
    parser.add_argument("--batch", type=int, default=2)
    args = parser.parse_args()

    torch.manual_seed(args.seed)
    model = build(args.arch, args.random_init).eval()
    state = {k: v.detach().contiguous() for k, v in model.state_dict().items()}
    torch.save(state, args.out)

    if args.reference:
        side = RESOLUTION[args.arch]
        x = torch.randn(args.batch, 3, side, side, generator=torch.Generator().manual_seed(args.seed + 1))
        with torch.no_grad():
            y = features(args.arch, model, x)
        torch.save({"input": x.contiguous(), "features": y.contiguous()}, args.reference)
    return 0


if __name__ == "__main__":
    sys.exit(main())
