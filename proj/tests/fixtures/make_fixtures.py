#!/usr/bin/env python3
"""Regenerates the frozen reference fixtures under tests/data/.

The fixtures come from the Hugging Face `tokenizers` and `transformers`
implementations, which the C++ engine never links against. They are the
independent reference for tokenizer and forward-pass parity tests.

    python3 tests/fixtures/make_fixtures.py tests/data
"""
import json
import sys
from pathlib import Path

import torch
from safetensors.torch import save_file
from tokenizers import Tokenizer, decoders, models, normalizers, pre_tokenizers, trainers
from transformers import GPTNeoXConfig, GPTNeoXForCausalLM

CORPUS = [
    "She liked the marinated lamb.",
    "She liked the friendly lamb.",
    "He polished the case.",
    "He filed the case.",
    "The glass was broken.",
    "The promise was broken.",
    "It was a tense atmosphere.",
    "It was a gaseous atmosphere.",
    "They carried the wooden beam.",
    "They saw the laser beam.",
    "The bat flew out of the cave at dusk.",
    "He swung the bat at the ball.",
    "The pond was drained yesterday.",
    "Prices rose 25 percent in 2021, didn't they?",
    "Café naïve résumé über straße",
    "  leading spaces and\ttabs\nnewlines  ",
]

TOKENIZER_CASES = [
    "She liked the marinated lamb.",
    "lamb",
    " lamb",
    "marinated",
    " marinated",
    "It was a tense kind of atmosphere.",
    "They carried the beam wooden.",
    "don't we'll they're I'm you've he'd",
    "Prices rose 25 percent in 2021!!",
    "Café naïve",
    "Café",
    "x  y   z",
    "trailing space ",
    "a\n\nb",
    "emoji \U0001F600 ok",
    "<|endoftext|>The end<|endoftext|>",
    "zebra quokka",
]

MODEL_SENTENCES = [
    "She liked the marinated lamb.",
    "He polished the case.",
    "The glass was broken.",
    "They carried the wooden beam.",
    "They carried the beam wooden.",
]


def build_tokenizer(out: Path) -> Tokenizer:
    tok = Tokenizer(models.BPE())
    tok.normalizer = normalizers.NFC()
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False, trim_offsets=True)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=420,
        special_tokens=["<|endoftext|>", "<|padding|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
        show_progress=False,
    )
    tok.train_from_iterator(CORPUS * 4, trainer=trainer)
    tok.save(str(out / "tokenizer.json"))
    # Store merges as "a b" strings, the layout used by released GPT-NeoX checkpoints.
    doc = json.loads((out / "tokenizer.json").read_text())
    merges = doc["model"]["merges"]
    if merges and isinstance(merges[0], list):
        doc["model"]["merges"] = [" ".join(m) for m in merges]
    (out / "tokenizer.json").write_text(json.dumps(doc, ensure_ascii=False, indent=1))
    return Tokenizer.from_file(str(out / "tokenizer.json"))


def tokenizer_cases(tok: Tokenizer, out: Path) -> None:
    cases = []
    for text in TOKENIZER_CASES:
        enc = tok.encode(text, add_special_tokens=False)
        cases.append({"text": text, "ids": enc.ids, "decoded": tok.decode(enc.ids, skip_special_tokens=False)})
    (out / "tokenizer_cases.json").write_text(json.dumps(cases, ensure_ascii=False, indent=1))


def randomize(model: torch.nn.Module, gen: torch.Generator) -> None:
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "layernorm" in name or "layer_norm" in name:
                if name.endswith("weight"):
                    p.copy_(1.0 + 0.3 * torch.randn(p.shape, generator=gen))
                else:
                    p.copy_(0.2 * torch.randn(p.shape, generator=gen))
            else:
                p.copy_(0.6 * torch.randn(p.shape, generator=gen))


def build_model(out: Path, name: str, tok: Tokenizer, *, layers, heads, d_model, inter, rotary_pct,
                parallel, dtype, seed) -> None:
    vocab = tok.get_vocab_size()
    cfg = GPTNeoXConfig(
        vocab_size=vocab, hidden_size=d_model, num_hidden_layers=layers, num_attention_heads=heads,
        intermediate_size=inter, rotary_pct=rotary_pct, rotary_emb_base=10000,
        max_position_embeddings=32, use_parallel_residual=parallel, layer_norm_eps=1e-5,
        hidden_act="gelu", tie_word_embeddings=False,
    )
    cfg._attn_implementation = "eager"
    gen = torch.Generator().manual_seed(seed)
    model = GPTNeoXForCausalLM(cfg).eval()
    randomize(model, gen)
    sd = {k: v.detach().clone().contiguous() for k, v in model.state_dict().items()}
    if dtype == "F16":
        sd = {k: v.to(torch.float16) for k, v in sd.items()}
        # Reference outputs use the same rounded weights, upconverted.
        model.load_state_dict({k: v.to(torch.float32) for k, v in sd.items()})

    mdir = out / name
    mdir.mkdir(parents=True, exist_ok=True)
    save_file(sd, str(mdir / "model.safetensors"))
    (mdir / "config.json").write_text(json.dumps({
        "architectures": ["GPTNeoXForCausalLM"],
        "num_hidden_layers": layers, "num_attention_heads": heads, "hidden_size": d_model,
        "intermediate_size": inter, "vocab_size": vocab, "rotary_pct": rotary_pct,
        "rotary_emb_base": 10000, "layer_norm_eps": 1e-5, "max_position_embeddings": 32,
        "use_parallel_residual": parallel, "hidden_act": "gelu",
    }, indent=1))
    (mdir / "tokenizer.json").write_text((out / "tokenizer.json").read_text())

    # Raw residual stream after the last block (HF's last hidden state is post final LN).
    captured = {}
    model.gpt_neox.layers[-1].register_forward_hook(lambda m, i, o: captured.__setitem__("last", o[0] if isinstance(o, tuple) else o))

    refs = []
    for text in MODEL_SENTENCES:
        ids = tok.encode(text, add_special_tokens=False).ids
        with torch.no_grad():
            res = model(torch.tensor([ids]), output_hidden_states=True, output_attentions=True)
        hidden = [h[0].tolist() for h in res.hidden_states[:-1]] + [captured["last"][0].tolist()]
        logp = torch.log_softmax(res.logits[0].double(), dim=-1)
        slp = float(sum(logp[t - 1, ids[t]] for t in range(1, len(ids))))
        refs.append({
            "text": text, "ids": ids,
            "hidden": hidden,
            "attention": [a[0].tolist() for a in res.attentions],
            "logits": res.logits[0].tolist(),
            "sentence_log_prob": slp,
        })
    (mdir / "reference.json").write_text(json.dumps(refs))


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(0)
    tok = build_tokenizer(out)
    tokenizer_cases(tok, out)
    build_model(out, "neox_parallel_f32", tok, layers=2, heads=2, d_model=8, inter=16, rotary_pct=0.5,
                parallel=True, dtype="F32", seed=11)
    build_model(out, "neox_serial_f16", tok, layers=3, heads=2, d_model=16, inter=24, rotary_pct=0.25,
                parallel=False, dtype="F16", seed=12)


if __name__ == "__main__":
    main()
