"""Round trip: safetensors -> torch .bin -> convert_checkpoint -> safetensors."""

import subprocess
import sys
import tempfile
from pathlib import Path

try:
    import torch
    from safetensors.torch import load_file
except ImportError:
    sys.exit(77)

TOOL = Path(__file__).resolve().parents[2] / "tools" / "convert_checkpoint.py"


def main() -> int:
    torch.manual_seed(0)
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        weights = {
            "gpt_neox.embed_in.weight": torch.randn(5, 4),
            "gpt_neox.layers.0.attention.query_key_value.weight": torch.randn(12, 4).half(),
        }
        state = dict(weights)
        state["gpt_neox.layers.0.attention.bias"] = torch.ones(1, 1, 8, 8, dtype=torch.bool)
        state["gpt_neox.layers.0.attention.rotary_emb.inv_freq"] = torch.ones(2)
        torch.save(state, d / "pytorch_model.bin")
        subprocess.run([sys.executable, str(TOOL), str(d)], check=True)
        loaded = load_file(str(d / "model.safetensors"))
        assert set(loaded) == set(weights), sorted(loaded)
        for name, t in weights.items():
            assert loaded[name].dtype == t.dtype, name
            assert torch.equal(loaded[name], t), name
        missing = subprocess.run([sys.executable, str(TOOL), str(d / "absent")])
        assert missing.returncode == 1
    print("convert_checkpoint round trip ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
