import torch

from unitasr.transformer import ModelConfig, Transformer


def tiny_config(**kw):
    base = dict(N=1, d_model=8, h=2, d_k=4, d_v=4, d_ff=16, dropout_rate=0.0,
                input_kind="filterbank", input_dim=6, tgt_vocab=11, max_len=64)
    base.update(kw)
    return ModelConfig(**base)


def tiny_model(seed=0, dtype=torch.float64, **kw):
    torch.manual_seed(seed)
    model = Transformer(tiny_config(**kw)).to(dtype)
    with torch.no_grad():
        # spread the weights so attention is far from uniform
        for p in model.parameters():
            p.add_(torch.randn_like(p) * 0.3)
    return model.eval()
