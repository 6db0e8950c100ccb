"""CLI: train, export-acts, export-resnet."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .data import load_mnist_dir, synthetic_dataset
from .export import export_reference_activations, export_resnet_activations
from .train import TrainSpec, train_and_export


def cmd_train(args) -> int:
    spec = TrainSpec(
        variant=args.variant,
        dataset=args.dataset,
        seed=args.seed,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        dropout_p=args.dropout_p,
    )
    if args.synthetic:
        tr_x, tr_y, te_x, te_y = synthetic_dataset(args.synthetic, args.synthetic // 6, seed=spec.seed)
    else:
        if not args.data_dir:
            print("error: pass --data-dir with MNIST IDX files or --synthetic N", file=sys.stderr)
            return 1
        tr_x, tr_y, te_x, te_y = load_mnist_dir(args.data_dir)
    train_and_export(spec, tr_x, tr_y, te_x, te_y, args.out, log=lambda m: print(m, file=sys.stderr))
    return 0


def cmd_export_acts(args) -> int:
    images = np.load(args.images)
    labels = np.load(args.labels) if args.labels else None
    written = export_reference_activations(args.bundle, images, args.out, labels=labels)
    print("\n".join(written))
    return 0


def cmd_export_resnet(args) -> int:
    manifest = export_resnet_activations(
        args.model,
        args.split,
        args.out,
        args.data_dir,
        max_samples=args.max_samples,
        fine=args.fine,
    )
    print(f"wrote {len(manifest['boundaries'])} boundaries for {manifest['n_samples']} samples")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lenet-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a variant and export per-epoch bundles")
    p.add_argument("--variant", choices=["basic", "dropout"], default="basic")
    p.add_argument("--dataset", choices=["full", "reduced"], default="full")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--dropout-p", type=float, default=0.2)
    p.add_argument("--data-dir", help="directory with the four MNIST IDX files")
    p.add_argument("--synthetic", type=int, default=0, metavar="N",
                   help="train on N synthetic images instead of MNIST")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export-acts", help="reference activation dumps for a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--images", required=True, help="NPY (n,1,32,32) float32")
    p.add_argument("--labels", help="NPY int labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_acts)

    p = sub.add_parser("export-resnet", help="dump pretrained CIFAR-100 representations")
    p.add_argument("--model", choices=["resnet20_cifar100", "resnet56_cifar100"],
                   default="resnet20_cifar100")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--data-dir", required=True, help="torchvision CIFAR-100 root")
    p.add_argument("--out", required=True)
    p.add_argument("--max-samples", type=int, default=None)
    p.add_argument("--fine", action="store_true",
                   help="also capture each unit's inner conv blocks")
    p.set_defaults(func=cmd_export_resnet)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RuntimeError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
