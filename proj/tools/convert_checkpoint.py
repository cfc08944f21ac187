#!/usr/bin/env python3
"""Convert pytorch_model*.bin checkpoint files to model.safetensors.

Some early revisions on the hub only carry pickled torch weights, which the
C++ loader does not read. Usage:

    python tools/convert_checkpoint.py DIR [DIR ...]

Each DIR holds a pytorch_model.bin (or shards listed in
pytorch_model.bin.index.json). Needs torch and safetensors.
"""

import argparse
import json
import sys
from pathlib import Path

try:
    import torch
    from safetensors.torch import save_file
except ImportError as exc:  # pragma: no cover
    sys.exit(f"convert_checkpoint: {exc.name} is required (pip install torch safetensors)")


def shard_files(directory: Path) -> list[Path]:
    index = directory / "pytorch_model.bin.index.json"
    if index.exists():
        weight_map = json.loads(index.read_text())["weight_map"]
        return [directory / name for name in sorted(set(weight_map.values()))]
    single = directory / "pytorch_model.bin"
    if single.exists():
        return [single]
    raise FileNotFoundError(f"no pytorch_model.bin in {directory}")


def convert(directory: Path, force: bool) -> Path:
    out = directory / "model.safetensors"
    if out.exists() and not force:
        print(f"{out} exists, skipping (use --force to overwrite)")
        return out
    tensors = {}
    for shard in shard_files(directory):
        state = torch.load(shard, map_location="cpu", weights_only=True)
        for name, tensor in state.items():
            # rotary caches and attention masks are buffers, not weights
            if name.endswith((".attention.bias", ".attention.masked_bias", ".rotary_emb.inv_freq")):
                continue
            tensors[name] = tensor.contiguous()
    tmp = out.with_suffix(".safetensors.tmp")
    save_file(tensors, str(tmp), metadata={"format": "pt"})
    tmp.replace(out)
    print(f"wrote {out} ({len(tensors)} tensors)")
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dirs", nargs="+", type=Path)
    parser.add_argument("--force", action="store_true", help="overwrite an existing model.safetensors")
    args = parser.parse_args()
    failed = 0
    for d in args.dirs:
        try:
            convert(d, args.force)
        except (OSError, KeyError, RuntimeError) as exc:
            print(f"{d}: {exc}", file=sys.stderr)
            failed += 1
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
